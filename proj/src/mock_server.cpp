#include "keyb2/mock_server.hpp"

#include "keyb2/errors.hpp"
#include "keyb2/rerank.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <random>

namespace keyb2 {

using nlohmann::json;

namespace {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char c : s) {
        hash ^= c;
        hash *= 1099511628211ull;
    }
    return hash;
}

// Uniform in (0, 1]; the shift keeps log() finite in Box-Muller.
double uniform01(std::mt19937_64& rng) {
    return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;
}

} // namespace

std::vector<float> projection_embedding(const std::string& text, std::uint64_t seed, int dim,
                                        Lang lang) {
    if (dim < 1) throw UsageError("embedding dim must be >= 1");
    std::vector<double> acc(static_cast<std::size_t>(dim), 0.0);
    for (const std::string& word : word_tokenize(text, lang)) {
        std::mt19937_64 rng(seed ^ fnv1a64(word));
        // Box-Muller, written out so results do not depend on the standard
        // library's distribution internals.
        for (int i = 0; i < dim; i += 2) {
            const double u1 = uniform01(rng);
            const double u2 = uniform01(rng);
            const double r = std::sqrt(-2.0 * std::log(u1));
            acc[static_cast<std::size_t>(i)] += r * std::cos(2.0 * M_PI * u2);
            if (i + 1 < dim) acc[static_cast<std::size_t>(i) + 1] += r * std::sin(2.0 * M_PI * u2);
        }
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(static_cast<std::size_t>(dim), 0.0f);
    if (norm > 0.0)
        for (int i = 0; i < dim; ++i)
            out[static_cast<std::size_t>(i)] = static_cast<float>(acc[static_cast<std::size_t>(i)] / norm);
    return out;
}

struct MockServer::Impl {
    MockServerConfig cfg;
    IdfTable idf;
    httplib::Server server;

    Impl(MockServerConfig c, IdfTable table) : cfg(c), idf(std::move(table)) {
        server.Post("/v1/score", [this](const httplib::Request& req, httplib::Response& res) {
            handle_score(req, res);
        });
        server.Post("/v1/embed", [this](const httplib::Request& req, httplib::Response& res) {
            handle_embed(req, res);
        });
    }

    void handle_score(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            return;
        }
        if (!body.contains("pairs") || !body["pairs"].is_array()) {
            res.status = 400;
            res.set_content(json{{"error", "missing pairs array"}}.dump(), "application/json");
            return;
        }
        json scores = json::array();
        for (const auto& pair : body["pairs"]) {
            const std::string query = pair.at("query").get<std::string>();
            const std::string text = pair.at("text").get<std::string>();
            scores.push_back(mock_score(query, text, idf, cfg.lang));
        }
        res.set_content(json{{"scores", scores}}.dump(), "application/json");
    }

    void handle_embed(const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::parse_error& e) {
            res.status = 400;
            res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            return;
        }
        if (!body.contains("texts") || !body["texts"].is_array()) {
            res.status = 400;
            res.set_content(json{{"error", "missing texts array"}}.dump(), "application/json");
            return;
        }
        json vectors = json::array();
        for (const auto& text : body["texts"])
            vectors.push_back(
                projection_embedding(text.get<std::string>(), cfg.seed, cfg.embed_dim, cfg.lang));
        res.set_content(json{{"dim", cfg.embed_dim}, {"vectors", vectors}}.dump(),
                        "application/json");
    }
};

MockServer::MockServer(MockServerConfig cfg, IdfTable idf)
    : impl_(std::make_unique<Impl>(cfg, std::move(idf))) {}

MockServer::~MockServer() {
    stop();
}

void MockServer::run(const std::string& host, int port) {
    if (!impl_->server.listen(host, port))
        throw DataError("cannot listen on " + host + ":" + std::to_string(port));
}

int MockServer::start_background(const std::string& host) {
    const int port = impl_->server.bind_to_any_port(host);
    if (port <= 0) throw DataError("cannot bind a port on " + host);
    worker_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void MockServer::stop() {
    if (impl_ && impl_->server.is_running()) impl_->server.stop();
    if (worker_.joinable()) worker_.join();
}

} // namespace keyb2
