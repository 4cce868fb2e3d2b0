#include "keyb2/errors.hpp"
#include "keyb2/mock_server.hpp"
#include "keyb2/remote.hpp"
#include "keyb2/rerank.hpp"
#include "keyb2/segment.hpp"
#include "keyb2/select.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <cmath>

using namespace keyb2;
using nlohmann::json;

namespace {

std::vector<Block> blocks_from(const std::vector<std::string>& texts) {
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        Block blk;
        blk.index = static_cast<int>(i);
        blk.text = texts[i];
        blk.tokens = unit_tokenize(texts[i], Lang::en);
        blk.length = static_cast<int>(blk.tokens.size());
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

// Test-local scoring service that counts query-word occurrences in the text.
class OverlapCountServer {
public:
    OverlapCountServer() {
        server_.Post("/v1/score", [](const httplib::Request& req, httplib::Response& res) {
            const json body = json::parse(req.body);
            json scores = json::array();
            for (const auto& pair : body["pairs"]) {
                const auto query_words =
                    word_tokenize(pair["query"].get<std::string>(), Lang::en);
                const auto text_words =
                    word_tokenize(pair["text"].get<std::string>(), Lang::en);
                int count = 0;
                for (const auto& tw : text_words)
                    for (const auto& qw : query_words)
                        if (tw == qw) {
                            ++count;
                            break;
                        }
                scores.push_back(count);
            }
            res.set_content(json{{"scores", scores}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~OverlapCountServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

// Service that answers a fixed JSON body on /v1/score.
class CannedServer {
public:
    explicit CannedServer(std::string body) : body_(std::move(body)) {
        server_.Post("/v1/score", [this](const httplib::Request&, httplib::Response& res) {
            res.set_content(body_, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~CannedServer() {
        server_.stop();
        thread_.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    std::string body_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

} // namespace

TEST_CASE("select_cross against a word-overlap counting service") {
    OverlapCountServer server;
    ScoringClient client(server.url());
    const auto blocks = blocks_from({"paris paris", "rome"});
    const auto scored = select_cross({"q1", "paris"}, blocks, client);
    REQUIRE(scored.size() == 2);
    CHECK(scored[0].score == doctest::Approx(2.0));
    CHECK(scored[1].score == doctest::Approx(0.0));
    CHECK(scored[0].block_index == 0);
    CHECK(scored[1].block_index == 1);

    // Zero blocks: no request is made at all.
    CHECK(select_cross({"q1", "paris"}, {}, client).empty());
}

TEST_CASE("select_cross propagates protocol violations") {
    SUBCASE("NaN score") {
        CannedServer server("{\"scores\": [null, 0.5]}");
        ScoringClient client(server.url());
        const auto blocks = blocks_from({"a", "b"});
        CHECK_THROWS_AS(select_cross({"q1", "a"}, blocks, client), ProtocolError);
    }
    SUBCASE("count mismatch") {
        CannedServer server("{\"scores\": [1.0]}");
        ScoringClient client(server.url());
        const auto blocks = blocks_from({"a", "b"});
        CHECK_THROWS_AS(select_cross({"q1", "a"}, blocks, client), ProtocolError);
    }
}

TEST_CASE("select_cross transport failure carries pending block indices") {
    // A port nothing listens on.
    ScoringClient client("http://127.0.0.1:1", 500);
    const auto blocks = blocks_from({"a", "b", "c"});
    try {
        select_cross({"q1", "a"}, blocks, client);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.pending_indices() == std::vector<int>{0, 1, 2});
    }
}

TEST_CASE("mock server scores with the mock formula") {
    IdfTable idf;
    idf.doc_count = 1;
    idf.default_idf = 1.0;
    idf.idf["paris"] = 2.0;
    MockServer server({}, idf);
    const int port = server.start_background();
    ScoringClient client("http://127.0.0.1:" + std::to_string(port));
    const auto scores =
        client.score({{"paris france", "paris is big"}, {"paris", "rome"}});
    REQUIRE(scores.size() == 2);
    CHECK(scores[0] == doctest::Approx(2.0)); // idf(paris) * min(1, 4)
    CHECK(scores[1] == doctest::Approx(0.0));
    server.stop();
}

TEST_CASE("remote_score through the mock server") {
    MockServer server({}, {});
    const int port = server.start_background();
    ScoringClient client("http://127.0.0.1:" + std::to_string(port));
    CHECK(remote_score({}, client).empty());
    const std::vector<ScoreRequest> requests = {{"alpha beta", "alpha"},
                                                {"alpha beta", "gamma"}};
    const auto scores = remote_score(requests, client);
    REQUIRE(scores.size() == 2);
    // Default idf weights every word at 1.0.
    CHECK(scores[0] == doctest::Approx(1.0));
    CHECK(scores[1] == doctest::Approx(0.0));
    server.stop();
}

TEST_CASE("projection embeddings are deterministic and text-sensitive") {
    const auto a1 = projection_embedding("the quick fox", 42, 32);
    const auto a2 = projection_embedding("the quick fox", 42, 32);
    const auto b = projection_embedding("a different text", 42, 32);
    const auto c = projection_embedding("the quick fox", 43, 32);
    CHECK(a1 == a2);
    CHECK(a1 != b);
    CHECK(a1 != c);
    // Unit length for non-empty text.
    double norm = 0.0;
    for (float v : a1) norm += static_cast<double>(v) * v;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-5));
    // Empty text embeds to the zero vector.
    const auto zero = projection_embedding("", 42, 32);
    for (float v : zero) CHECK(v == 0.0f);
}

TEST_CASE("select_bi end to end with store warming") {
    MockServerConfig cfg;
    cfg.seed = 7;
    cfg.embed_dim = 16;
    MockServer server(cfg, {});
    const int port = server.start_background();
    EmbeddingClient client("http://127.0.0.1:" + std::to_string(port));

    const auto blocks = blocks_from({"paris is a city", "apples are fruit"});
    EmbeddingStore store;
    const Query query{"q1", "paris city"};

    const auto cold = select_bi(query, "doc1", blocks, client, store);
    REQUIRE(cold.size() == 2);
    CHECK(store.size() == 2); // misses were inserted
    CHECK(store.dim() == 16);
    // The topically matching block wins under the shared-word projection.
    CHECK(cold[0].score > cold[1].score);

    // Warm store: identical scores without re-embedding the blocks.
    const auto warm = select_bi(query, "doc1", blocks, client, store);
    REQUIRE(warm.size() == 2);
    CHECK(warm[0].score == doctest::Approx(cold[0].score));
    CHECK(warm[1].score == doctest::Approx(cold[1].score));

    // Dot vs cosine on unit vectors agree up to small float error.
    const auto cos = select_bi(query, "doc1", blocks, client, store, Similarity::cosine);
    CHECK(cos[0].score == doctest::Approx(warm[0].score).epsilon(1e-4));
    server.stop();
}

TEST_CASE("select_bi rejects dim mismatches between store and service") {
    MockServerConfig cfg;
    cfg.embed_dim = 16;
    MockServer server(cfg, {});
    const int port = server.start_background();
    EmbeddingClient client("http://127.0.0.1:" + std::to_string(port));

    EmbeddingStore store(8);
    store.insert("doc1", 0, std::vector<float>(8, 0.5f));
    const auto blocks = blocks_from({"some text"});
    CHECK_THROWS_AS(select_bi({"q1", "q"}, "doc1", blocks, client, store), DataError);
    server.stop();
}

TEST_CASE("two identical runs against the mock server are byte-identical") {
    auto run_once = [](std::uint64_t seed) {
        MockServerConfig cfg;
        cfg.seed = seed;
        cfg.embed_dim = 24;
        IdfTable idf;
        idf.idf["paris"] = 1.7;
        MockServer server(cfg, idf);
        const int port = server.start_background();
        const std::string url = "http://127.0.0.1:" + std::to_string(port);

        ScoringClient scorer(url);
        EmbeddingClient embedder(url);
        const auto blocks =
            blocks_from({"paris paris", "rome is old", "paris again here"});
        EmbeddingStore store;
        const auto cross = select_cross({"q1", "paris"}, blocks, scorer);
        const auto bi = select_bi({"q1", "paris"}, "d", blocks, embedder, store);
        const auto remote =
            remote_score({{"paris", "paris town"}, {"paris", "nothing"}}, scorer);
        server.stop();

        // Serialize everything the two runs must agree on.
        json blob;
        for (const auto& sb : cross) blob["cross"].push_back({sb.block_index, sb.score});
        for (const auto& sb : bi) blob["bi"].push_back({sb.block_index, sb.score});
        blob["remote"] = remote;
        return blob.dump();
    };
    CHECK(run_once(99) == run_once(99));
    CHECK(run_once(99) != run_once(100)); // the seed matters for embeddings
}
