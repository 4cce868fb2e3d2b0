#pragma once

#include "keyb2/select.hpp"
#include "keyb2/tokenize.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace keyb2 {

// Deterministic bag-of-words embedding: each word hashes to a seeded
// pseudo-random direction, directions accumulate with term frequency, and the
// sum is L2-normalized. Identical (seed, dim, text) always gives identical
// vectors, across processes and platforms.
std::vector<float> projection_embedding(const std::string& text, std::uint64_t seed, int dim,
                                        Lang lang = Lang::en);

struct MockServerConfig {
    std::uint64_t seed = 0;
    int embed_dim = 64;
    Lang lang = Lang::en;
};

// Offline stand-in for the scoring/embedding services: POST /v1/score runs
// mock_score over the configured IdfTable, POST /v1/embed runs
// projection_embedding. Intended for integration tests and local pipelines.
class MockServer {
public:
    explicit MockServer(MockServerConfig cfg = {}, IdfTable idf = {});
    ~MockServer();

    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    // Blocks serving on host:port until stop() is called from another thread.
    void run(const std::string& host, int port);

    // Binds an ephemeral port, serves from a background thread, returns the
    // port once the server is ready.
    int start_background(const std::string& host = "127.0.0.1");

    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread worker_;
};

} // namespace keyb2
