#include "keyb2/costmodel.hpp"
#include "keyb2/errors.hpp"

#include <doctest.h>

#include <random>

using namespace keyb2;

TEST_CASE("estimate quadratic units and paper input sizes") {
    const CostEstimate small = estimate(512, 4096);
    CHECK(small.attention_units == doctest::Approx(512.0 * 512.0));
    REQUIRE(small.ratio.has_value());
    CHECK(*small.ratio == doctest::Approx(1.0 / 64.0));
    CHECK(*small.ratio == 0.015625);

    CHECK(estimate(0).attention_units == 0.0);
    CHECK(!estimate(100).ratio.has_value());
    CHECK_THROWS_AS(estimate(-1), UsageError);
    CHECK_THROWS_AS(estimate(10, 0), UsageError);
}

TEST_CASE("estimate scales exactly quadratically") {
    std::mt19937 rng(3);
    for (int iter = 0; iter < 30; ++iter) {
        const long long len = 1 + static_cast<long long>(rng() % 5000);
        const long long a = 1 + static_cast<long long>(rng() % 8);
        CHECK(estimate(a * len).attention_units / estimate(len).attention_units ==
              doctest::Approx(static_cast<double>(a * a)).epsilon(1e-12));
    }
}

namespace {

std::string words(int n, const std::string& prefix) {
    std::string text;
    for (int i = 0; i < n; ++i) {
        text += prefix + std::to_string(i);
        text += (i % 11 == 10) ? ". " : " ";
    }
    return text;
}

} // namespace

TEST_CASE("pipeline_report token accounting") {
    // One long and one short document.
    const Corpus corpus({{"long", words(2000, "w"), Lang::en},
                         {"short", words(100, "v"), Lang::en}});
    Run run;
    run["q1"] = {{"q1", "long", 1, 2.0, "t"}, {"q1", "short", 2, 1.0, "t"}};

    const PipelineCostReport report = pipeline_report(run, corpus);
    REQUIRE(report.per_query.size() == 1);
    const PipelineCostRow& row = report.per_query[0];
    CHECK(row.docs == 2);
    CHECK(report.missing_docs == 0);

    // Long doc: 2000 words plus its periods; assembled capped at 32 + 480.
    AssemblyConfig assembly;
    CHECK(row.mean_assembled_tokens <= assembly.query_max_tokens +
                                           assembly.max_block_tokens_total);
    // Short doc fits entirely: its ratio is 1, so the mean is above the
    // long-document ratio and below 1.
    CHECK(row.mean_ratio > 0.0);
    CHECK(row.mean_ratio < 1.0);
    CHECK(report.overall.query_id == "MEAN");
    CHECK(report.overall.mean_ratio == doctest::Approx(row.mean_ratio));
}

TEST_CASE("pipeline_report short docs cap at ratio 1") {
    const Corpus corpus({{"tiny", "a b c.", Lang::en}});
    Run run;
    run["q1"] = {{"q1", "tiny", 1, 1.0, "t"}};
    const PipelineCostReport report = pipeline_report(run, corpus);
    CHECK(report.per_query[0].mean_ratio == doctest::Approx(1.0));
}

TEST_CASE("pipeline_report counts missing docs") {
    const Corpus corpus({{"a", "x y z.", Lang::en}});
    Run run;
    run["q1"] = {{"q1", "a", 1, 2.0, "t"}, {"q1", "ghost", 2, 1.0, "t"}};
    const PipelineCostReport report = pipeline_report(run, corpus);
    CHECK(report.missing_docs == 1);
    CHECK(report.per_query[0].docs == 1);
}
