#pragma once

#include "keyb2/segment.hpp"
#include "keyb2/select.hpp"

#include <string>
#include <utility>
#include <vector>

namespace keyb2 {

struct AssemblyConfig {
    int max_block_tokens_total = 480; // max_b_t
    int query_max_tokens = 32;

    // Which chosen block absorbs the overflow when the selection exceeds the
    // budget: the block latest in document order, or the lowest-scored one.
    enum class TruncationTarget { doc_order_last, lowest_score };
    TruncationTarget truncation = TruncationTarget::doc_order_last;

    // Insert an ellipsis between non-adjacent blocks; for human inspection
    // only, off for scoring.
    bool mark_gaps = false;

    void validate() const;
};

struct AssembledInput {
    std::string query_text;   // truncated to query_max_tokens
    std::string excerpt_text; // chosen blocks in document order
    std::vector<std::pair<int, int>> chosen; // (block_index, kept_token_count), ascending
    int total_block_tokens = 0;
};

// Blocks taken in strictly descending score (ties to the lower block index)
// until the cumulative token length first reaches the budget, or all blocks
// run out. Returns block indices in selection (score) order.
std::vector<int> pick_top_blocks(const std::vector<ScoredBlock>& scored, int max_b_t);

// Restores document order, joins block texts with single spaces and trims the
// selection to exactly the budget when it overflows.
AssembledInput assemble(const TokenSeq& query, const std::vector<Block>& blocks,
                        const std::vector<int>& chosen_score_order,
                        const AssemblyConfig& cfg = {});

// "query: {Q} document: {excerpt}"
std::string render_prompt(const AssembledInput& input);

} // namespace keyb2
