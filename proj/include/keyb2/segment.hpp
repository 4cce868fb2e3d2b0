#pragma once

#include "keyb2/tokenize.hpp"

#include <array>
#include <utility>
#include <vector>

namespace keyb2 {

// A contiguous slice of the document token sequence. Blocks partition the
// document in order; index is the block's position in that partition.
struct Block {
    int index = 0;
    TokenSeq tokens; // rebased so tokens.source_text == text
    std::string text;
    int length = 0; // unit token count
};

struct SegmentationConfig {
    int max_block_tokens = 63;
    // Cut cost per punctuation class, indexed by PunctClass.
    std::array<double, 4> cut_costs = {4.0, 2.0, 1.0, 0.0}; // none, weak, medium, strong
    double forced_cut_cost = 16.0;

    double cut_cost(PunctClass c) const { return cut_costs[static_cast<std::size_t>(c)]; }
    void validate() const;
};

// Minimum-cost partition into blocks of at most max_block_tokens tokens.
// A cut after a token with a punctuation cut point costs cut_costs[class];
// anywhere else it costs forced_cut_cost. The block boundary at the end of
// the document is free. Ties resolve to fewer blocks, then to the
// lexicographically earliest cut positions. O(n * B).
std::vector<Block> segment(const TokenSeq& seq, const SegmentationConfig& cfg = {});

// [start_token, end_token) pairs of each block in document token space.
std::vector<std::pair<int, int>> block_boundaries(const std::vector<Block>& blocks);

} // namespace keyb2
