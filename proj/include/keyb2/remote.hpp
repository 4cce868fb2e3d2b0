#pragma once

#include <string>
#include <vector>

namespace keyb2 {

struct ScorePair {
    std::string query;
    std::string text;
};

// Client for the batch scoring protocol:
//   POST /v1/score {"pairs":[{"query":q,"text":t},...]} -> {"scores":[...]}
// Scores come back order-aligned with the request. Connection failures throw
// TransportError; malformed or non-finite responses throw ProtocolError.
class ScoringClient {
public:
    explicit ScoringClient(std::string base_url, int timeout_ms = 30000);

    std::vector<double> score(const std::vector<ScorePair>& pairs);

    const std::string& base_url() const { return base_url_; }

private:
    std::string base_url_;
    int timeout_ms_;
};

// Client for the batch embedding protocol:
//   POST /v1/embed {"texts":[...]} -> {"dim":d,"vectors":[[...],...]}
class EmbeddingClient {
public:
    struct Result {
        int dim = 0;
        std::vector<std::vector<float>> vectors;
    };

    explicit EmbeddingClient(std::string base_url, int timeout_ms = 30000);

    Result embed(const std::vector<std::string>& texts);

    const std::string& base_url() const { return base_url_; }

private:
    std::string base_url_;
    int timeout_ms_;
};

} // namespace keyb2
