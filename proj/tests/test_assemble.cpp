#include "keyb2/assemble.hpp"
#include "keyb2/errors.hpp"

#include <doctest.h>

#include <random>

using namespace keyb2;

namespace {

// Blocks with given lengths; token i of block b is "b<b>w<i>".
std::vector<Block> make_blocks(const std::vector<int>& lengths) {
    std::vector<Block> blocks;
    for (std::size_t b = 0; b < lengths.size(); ++b) {
        Block blk;
        blk.index = static_cast<int>(b);
        blk.length = lengths[b];
        for (int i = 0; i < lengths[b]; ++i) {
            const std::string text = "b" + std::to_string(b) + "w" + std::to_string(i);
            const std::size_t start = blk.text.size();
            blk.text += text;
            blk.tokens.tokens.push_back({text, start, blk.text.size(), PunctClass::none});
            if (i + 1 < lengths[b]) blk.text += " ";
        }
        blk.tokens.source_text = blk.text;
        blocks.push_back(std::move(blk));
    }
    return blocks;
}

std::vector<ScoredBlock> score_blocks(const std::vector<Block>& blocks,
                                      const std::vector<double>& scores) {
    std::vector<ScoredBlock> scored;
    for (std::size_t i = 0; i < blocks.size(); ++i)
        scored.push_back({blocks[i].index, scores[i], blocks[i].length});
    return scored;
}

TokenSeq query_of(const std::string& text) { return unit_tokenize(text, Lang::en); }

} // namespace

TEST_CASE("pick_top_blocks stops at the budget boundary") {
    const auto blocks = make_blocks({300, 300, 300});
    const auto chosen = pick_top_blocks(score_blocks(blocks, {3, 2, 1}), 480);
    // 300 < 480 <= 600: exactly the top two by score.
    CHECK(chosen == std::vector<int>{0, 1});
}

TEST_CASE("pick_top_blocks exhausts short documents") {
    const auto blocks = make_blocks({10});
    CHECK(pick_top_blocks(score_blocks(blocks, {0.5}), 480) == std::vector<int>{0});
    CHECK(pick_top_blocks({}, 480).empty());
}

TEST_CASE("pick_top_blocks breaks ties by ascending index") {
    const auto blocks = make_blocks({100, 100, 100, 100});
    const auto chosen = pick_top_blocks(score_blocks(blocks, {1, 1, 1, 1}), 250);
    CHECK(chosen == std::vector<int>{0, 1, 2});
}

TEST_CASE("assemble truncates the last doc-order block") {
    const auto blocks = make_blocks({200, 200, 150});
    AssemblyConfig cfg;
    const auto out = assemble(query_of("q"), blocks, {0, 1, 2}, cfg);
    REQUIRE(out.chosen.size() == 3);
    CHECK(out.chosen[0] == std::pair{0, 200});
    CHECK(out.chosen[1] == std::pair{1, 200});
    CHECK(out.chosen[2] == std::pair{2, 80});
    CHECK(out.total_block_tokens == 480);
}

TEST_CASE("assemble below budget keeps everything") {
    const auto blocks = make_blocks({200, 150, 100});
    const auto out = assemble(query_of("q"), blocks, {2, 0, 1}, {});
    CHECK(out.total_block_tokens == 450);
    REQUIRE(out.chosen.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(out.chosen[i].first == static_cast<int>(i));
}

TEST_CASE("assemble truncates a single oversized block") {
    const auto blocks = make_blocks({600});
    const auto out = assemble(query_of("q"), blocks, {0}, {});
    REQUIRE(out.chosen.size() == 1);
    CHECK(out.chosen[0] == std::pair{0, 480});
    CHECK(out.total_block_tokens == 480);
}

TEST_CASE("assemble restores document order") {
    const auto blocks = make_blocks({50, 60, 70});
    const auto out = assemble(query_of("q"), blocks, {2, 0, 1}, {});
    int prev = -1;
    for (const auto& [index, _] : out.chosen) {
        CHECK(index > prev);
        prev = index;
    }
    // Joined with single spaces in document order.
    CHECK(out.excerpt_text.find("b0w0") < out.excerpt_text.find("b1w0"));
    CHECK(out.excerpt_text.find("b1w0") < out.excerpt_text.find("b2w0"));
}

TEST_CASE("assemble truncates the query independently") {
    std::string long_query;
    for (int i = 0; i < 40; ++i) long_query += "q" + std::to_string(i) + " ";
    const auto blocks = make_blocks({10});
    const auto out = assemble(query_of(long_query), blocks, {0}, {});
    CHECK(unit_tokenize(out.query_text, Lang::en).tokens.size() == 32);
}

TEST_CASE("assemble idempotent on within-budget selections") {
    const auto blocks = make_blocks({100, 100});
    const auto once = assemble(query_of("q"), blocks, {0, 1}, {});
    CHECK(once.total_block_tokens == 200);
    CHECK(once.excerpt_text ==
          blocks[0].text + " " + blocks[1].text);
}

TEST_CASE("assemble lowest-score truncation mode") {
    AssemblyConfig cfg;
    cfg.truncation = AssemblyConfig::TruncationTarget::lowest_score;
    // Score order {1, 0}: block 0 is the lowest scored and absorbs the
    // overflow even though block 1 is last in document order.
    const auto blocks = make_blocks({300, 300});
    const auto out = assemble(query_of("q"), blocks, {1, 0}, cfg);
    REQUIRE(out.chosen.size() == 2);
    CHECK(out.chosen[0] == std::pair{0, 180});
    CHECK(out.chosen[1] == std::pair{1, 300});
    CHECK(out.total_block_tokens == 480);
}

TEST_CASE("assemble gap markers are opt-in") {
    const auto blocks = make_blocks({5, 5, 5});
    // Blocks 0 and 2 chosen: non-adjacent.
    AssemblyConfig cfg;
    const auto plain = assemble(query_of("q"), blocks, {0, 2}, cfg);
    CHECK(plain.excerpt_text == blocks[0].text + " " + blocks[2].text);
    cfg.mark_gaps = true;
    const auto marked = assemble(query_of("q"), blocks, {0, 2}, cfg);
    CHECK(marked.excerpt_text == blocks[0].text + " … " + blocks[2].text);
    // Adjacent blocks never get a marker.
    const auto adjacent = assemble(query_of("q"), blocks, {0, 1}, cfg);
    CHECK(adjacent.excerpt_text == blocks[0].text + " " + blocks[1].text);
}

TEST_CASE("render_prompt exact template") {
    AssembledInput input;
    input.query_text = "where is Paris";
    input.excerpt_text = "Paris is a city in France";
    CHECK(render_prompt(input) ==
          "query: where is Paris document: Paris is a city in France");

    AssembledInput empty;
    empty.query_text = "Q";
    CHECK(render_prompt(empty) == "query: Q document: ");
}

TEST_CASE("assemble budget equations hold on random instances") {
    std::mt19937 rng(41);
    for (int iter = 0; iter < 300; ++iter) {
        const int n = 1 + static_cast<int>(rng() % 12);
        std::vector<int> lengths;
        std::vector<double> scores;
        long long total = 0;
        for (int i = 0; i < n; ++i) {
            lengths.push_back(1 + static_cast<int>(rng() % 200));
            scores.push_back(static_cast<double>(rng() % 1000) / 100.0);
            total += lengths.back();
        }
        const int budget = 1 + static_cast<int>(rng() % 500);
        AssemblyConfig cfg;
        cfg.max_block_tokens_total = budget;
        const auto blocks = make_blocks(lengths);
        const auto scored = score_blocks(blocks, scores);
        const auto chosen = pick_top_blocks(scored, budget);

        // Eq. 1 and Eq. 2 whenever the document has enough tokens.
        long long cumulative = 0;
        for (std::size_t i = 0; i < chosen.size(); ++i) {
            const long long before = cumulative;
            cumulative += lengths[static_cast<std::size_t>(chosen[i])];
            if (i + 1 == chosen.size() && total >= budget) {
                CHECK(cumulative >= budget);
                CHECK(before < budget);
            }
        }

        const auto out = assemble(query_of("q"), blocks, chosen, cfg);
        int prev = -1;
        int kept_total = 0;
        for (const auto& [index, kept] : out.chosen) {
            CHECK(index > prev);
            CHECK(kept >= 1);
            CHECK(kept <= lengths[static_cast<std::size_t>(index)]);
            prev = index;
            kept_total += kept;
        }
        CHECK(out.total_block_tokens == kept_total);
        CHECK(out.total_block_tokens == std::min<long long>(budget, total));
    }
}

TEST_CASE("assemble never fabricates tokens") {
    std::mt19937 rng(43);
    for (int iter = 0; iter < 50; ++iter) {
        const int n = 1 + static_cast<int>(rng() % 6);
        std::vector<int> lengths;
        std::vector<double> scores;
        for (int i = 0; i < n; ++i) {
            lengths.push_back(1 + static_cast<int>(rng() % 30));
            scores.push_back(static_cast<double>(rng() % 100));
        }
        const auto blocks = make_blocks(lengths);
        AssemblyConfig cfg;
        cfg.max_block_tokens_total = 1 + static_cast<int>(rng() % 60);
        const auto out =
            assemble(query_of("q"), blocks, pick_top_blocks(score_blocks(blocks, scores),
                                                            cfg.max_block_tokens_total),
                     cfg);
        // Every excerpt token appears in the source document, in order.
        const auto excerpt_tokens = unit_tokenize(out.excerpt_text, Lang::en);
        std::vector<std::string> doc_tokens;
        for (const Block& b : blocks)
            for (const Token& t : b.tokens.tokens) doc_tokens.push_back(t.text);
        std::size_t cursor = 0;
        for (const Token& t : excerpt_tokens.tokens) {
            while (cursor < doc_tokens.size() && doc_tokens[cursor] != t.text) ++cursor;
            REQUIRE(cursor < doc_tokens.size());
            ++cursor;
        }
    }
}

TEST_CASE("render_prompt chinese golden") {
    const TokenSeq query = unit_tokenize("北京在哪里", Lang::zh);
    const TokenSeq doc = unit_tokenize("北京是中国的首都。它很大。", Lang::zh);
    const auto blocks = segment(doc, {});
    const auto chosen = pick_top_blocks(
        {{0, 1.0, blocks[0].length}}, 480);
    const auto out = assemble(query, blocks, chosen, {});
    CHECK(render_prompt(out) ==
          "query: 北京在哪里 document: 北京是中国的首都。它很大。");
}

TEST_CASE("assemble rejects mismatched block indices") {
    const auto blocks = make_blocks({10});
    CHECK_THROWS_AS(assemble(query_of("q"), blocks, {3}, {}), DataError);
}
