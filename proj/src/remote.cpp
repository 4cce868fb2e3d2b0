#include "keyb2/remote.hpp"

#include "keyb2/errors.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>

namespace keyb2 {

using nlohmann::json;

namespace {

json post_json(const std::string& base_url, int timeout_ms, const std::string& path,
               const json& body) {
    httplib::Client client(base_url);
    client.set_connection_timeout(0, timeout_ms * 1000);
    client.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);

    auto res = client.Post(path, body.dump(), "application/json");
    if (!res)
        throw TransportError("cannot reach " + base_url + path + ": " +
                             httplib::to_string(res.error()));
    if (res->status >= 500)
        throw TransportError(base_url + path + " answered HTTP " +
                             std::to_string(res->status));
    if (res->status != 200)
        throw ProtocolError(base_url + path + " answered HTTP " +
                            std::to_string(res->status) + ": " + res->body);
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON from ") + base_url + path + ": " +
                            e.what());
    }
}

} // namespace

ScoringClient::ScoringClient(std::string base_url, int timeout_ms)
    : base_url_(std::move(base_url)), timeout_ms_(timeout_ms) {}

std::vector<double> ScoringClient::score(const std::vector<ScorePair>& pairs) {
    if (pairs.empty()) return {};
    json body;
    body["pairs"] = json::array();
    for (const ScorePair& p : pairs)
        body["pairs"].push_back({{"query", p.query}, {"text", p.text}});

    json reply = post_json(base_url_, timeout_ms_, "/v1/score", body);
    if (!reply.contains("scores") || !reply["scores"].is_array())
        throw ProtocolError("score response lacks a scores array");
    const auto& arr = reply["scores"];
    if (arr.size() != pairs.size())
        throw ProtocolError("score count mismatch: sent " + std::to_string(pairs.size()) +
                            " pairs, got " + std::to_string(arr.size()) + " scores");
    std::vector<double> scores;
    scores.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number())
            throw ProtocolError("non-numeric score at index " + std::to_string(i));
        double v = arr[i].get<double>();
        if (!std::isfinite(v))
            throw ProtocolError("non-finite score at index " + std::to_string(i));
        scores.push_back(v);
    }
    return scores;
}

EmbeddingClient::EmbeddingClient(std::string base_url, int timeout_ms)
    : base_url_(std::move(base_url)), timeout_ms_(timeout_ms) {}

EmbeddingClient::Result EmbeddingClient::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    json body;
    body["texts"] = texts;

    json reply = post_json(base_url_, timeout_ms_, "/v1/embed", body);
    if (!reply.contains("dim") || !reply.contains("vectors") || !reply["vectors"].is_array())
        throw ProtocolError("embed response lacks dim or vectors");
    Result result;
    result.dim = reply["dim"].get<int>();
    if (result.dim <= 0) throw ProtocolError("embed response has non-positive dim");
    const auto& rows = reply["vectors"];
    if (rows.size() != texts.size())
        throw ProtocolError("vector count mismatch: sent " + std::to_string(texts.size()) +
                            " texts, got " + std::to_string(rows.size()) + " vectors");
    result.vectors.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_array() || rows[i].size() != static_cast<std::size_t>(result.dim))
            throw ProtocolError("vector " + std::to_string(i) + " has wrong length");
        std::vector<float> vec;
        vec.reserve(rows[i].size());
        for (const auto& x : rows[i]) {
            float v = x.get<float>();
            if (!std::isfinite(v))
                throw ProtocolError("non-finite embedding component in vector " +
                                    std::to_string(i));
            vec.push_back(v);
        }
        result.vectors.push_back(std::move(vec));
    }
    return result;
}

} // namespace keyb2
