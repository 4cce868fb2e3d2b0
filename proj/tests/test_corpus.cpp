#include "keyb2/corpus.hpp"
#include "keyb2/errors.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

using namespace keyb2;

namespace {

struct TempFile {
    std::filesystem::path path;

    explicit TempFile(const std::string& contents, const std::string& suffix = ".txt") {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("keyb2_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) +
                suffix);
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { std::filesystem::remove(path); }

    std::string str() const { return path.string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("load_corpus minimal well-formed input") {
    TempFile f("{\"id\":\"d1\",\"text\":\"a b\"}\n{\"id\":\"d2\",\"text\":\"\"}\n", ".jsonl");
    const auto docs = load_corpus(f.str());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].id == "d1");
    CHECK(docs[0].text == "a b");
    CHECK(docs[0].lang == Lang::en);
    CHECK(docs[1].text.empty());
}

TEST_CASE("load_corpus rejects duplicate ids") {
    TempFile f("{\"id\":\"d1\",\"text\":\"x\"}\n{\"id\":\"d1\",\"text\":\"y\"}\n", ".jsonl");
    CHECK_THROWS_WITH_AS(load_corpus(f.str()), doctest::Contains("d1"), DataError);
}

TEST_CASE("load_corpus reports the malformed line number") {
    TempFile f("{\"id\":\"d1\",\"text\":\"x\"}\nnot json at all\n{\"id\":\"d3\",\"text\":\"z\"}\n",
               ".jsonl");
    try {
        load_corpus(f.str());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
}

TEST_CASE("load_corpus honors lang field") {
    TempFile f("{\"id\":\"d1\",\"text\":\"你好\",\"lang\":\"zh\"}\n", ".jsonl");
    const auto docs = load_corpus(f.str());
    REQUIRE(docs.size() == 1);
    CHECK(docs[0].lang == Lang::zh);
}

TEST_CASE("load_run groups and orders by rank") {
    TempFile f("q1 Q0 d1 1 3.5 t\nq1 Q0 d2 2 2.0 t\n", ".run");
    const Run run = load_run(f.str());
    REQUIRE(run.count("q1") == 1);
    const auto& entries = run.at("q1");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].doc_id == "d1");
    CHECK(entries[1].doc_id == "d2");
    CHECK(entries[0].score == doctest::Approx(3.5));
}

TEST_CASE("load_run rejects rank gaps and bad scores") {
    TempFile gaps("q1 Q0 d1 1 3.5 t\nq1 Q0 d2 3 2.0 t\n", ".run");
    CHECK_THROWS_AS(load_run(gaps.str()), DataError);
    TempFile bad_score("q1 Q0 d1 1 banana t\n", ".run");
    CHECK_THROWS_AS(load_run(bad_score.str()), ParseError);
    TempFile increasing("q1 Q0 d1 1 1.0 t\nq1 Q0 d2 2 2.0 t\n", ".run");
    CHECK_THROWS_AS(load_run(increasing.str()), DataError);
}

TEST_CASE("load_qrels basics and duplicate override") {
    TempFile f("q1 0 d1 2\n", ".qrels");
    const Qrels qrels = load_qrels(f.str());
    CHECK(qrels.by_query.at("q1").at("d1") == 2);
    CHECK(qrels.duplicate_warnings == 0);

    TempFile dup("q1 0 d1 1\nq1 0 d1 3\n", ".qrels");
    const Qrels overridden = load_qrels(dup.str());
    CHECK(overridden.by_query.at("q1").at("d1") == 3);
    CHECK(overridden.duplicate_warnings == 1);

    TempFile negative("q1 0 d1 -1\n", ".qrels");
    CHECK_THROWS_AS(load_qrels(negative.str()), ParseError);
}

TEST_CASE("load_qrels mixed-grade fixture") {
    std::string contents;
    for (int i = 0; i < 10; ++i)
        contents += "q" + std::to_string(i % 3) + " 0 d" + std::to_string(i) + " " +
                    std::to_string(i % 4) + "\n";
    TempFile f(contents, ".qrels");
    const Qrels qrels = load_qrels(f.str());
    std::size_t total = 0;
    for (const auto& [_, docs] : qrels.by_query) total += docs.size();
    CHECK(total == 10);
}

TEST_CASE("write_run then load_run is the identity") {
    std::mt19937 rng(5);
    Run run;
    for (int q = 0; q < 5; ++q) {
        const std::string query_id = "q" + std::to_string(q);
        double score = 100.0;
        for (int r = 1; r <= 20; ++r) {
            score -= static_cast<double>(rng() % 1000) / 1000.0;
            run[query_id].push_back({query_id, "d" + std::to_string(rng() % 10000), r,
                                     score, "tag"});
        }
    }
    TempFile f("", ".run");
    write_run(run, f.str());
    const Run loaded = load_run(f.str());
    REQUIRE(loaded.size() == run.size());
    for (const auto& [query_id, entries] : run) {
        const auto& got = loaded.at(query_id);
        REQUIRE(got.size() == entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            CHECK(got[i].doc_id == entries[i].doc_id);
            CHECK(got[i].rank == entries[i].rank);
            // Scores survive the fixed 6-decimal format.
            CHECK(got[i].score == doctest::Approx(entries[i].score).epsilon(1e-6));
            CHECK(got[i].tag == entries[i].tag);
        }
    }

    // Byte-level round trip: rewriting the loaded run reproduces the file.
    TempFile g("", ".run");
    write_run(loaded, g.str());
    CHECK(slurp(f.str()) == slurp(g.str()));
}

TEST_CASE("write_run validates before writing") {
    Run bad;
    bad["q1"] = {{"q1", "d1", 1, 1.0, "t"}, {"q1", "d2", 3, 0.5, "t"}};
    TempFile f("sentinel", ".run");
    CHECK_THROWS_AS(write_run(bad, f.str()), DataError);
    CHECK(slurp(f.str()) == "sentinel"); // nothing was written
}

TEST_CASE("write_run fixed score formatting") {
    Run run;
    run["q1"] = {{"q1", "d1", 1, 1.0, "t"}};
    TempFile f("", ".run");
    write_run(run, f.str());
    CHECK(slurp(f.str()) == "q1 Q0 d1 1 1.000000 t\n");
}

TEST_CASE("load_queries tsv") {
    TempFile f("q1\twhere is paris\nq2\thello world\n", ".tsv");
    const auto queries = load_queries(f.str());
    REQUIRE(queries.size() == 2);
    CHECK(queries[0].id == "q1");
    CHECK(queries[0].text == "where is paris");
}

TEST_CASE("corpus lookup") {
    const Corpus corpus({{"a", "x", Lang::en}, {"b", "y", Lang::en}});
    REQUIRE(corpus.find("a") != nullptr);
    CHECK(corpus.find("a")->text == "x");
    CHECK(corpus.find("missing") == nullptr);
    CHECK_THROWS_AS(Corpus({{"a", "x", Lang::en}, {"a", "y", Lang::en}}), DataError);
}

TEST_CASE("triplets round trip and invariant") {
    TempFile f("q1\tp1\tn1\nq2\tp2\tn2\n", ".tsv");
    const auto triplets = load_triplets(f.str());
    REQUIRE(triplets.size() == 2);
    CHECK(triplets[0].positive_doc_id == "p1");
    TempFile bad("q1\tsame\tsame\n", ".tsv");
    CHECK_THROWS_AS(load_triplets(bad.str()), ParseError);
}
