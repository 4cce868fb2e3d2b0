#include "keyb2/segment.hpp"

#include "keyb2/errors.hpp"

#include <limits>

namespace keyb2 {

void SegmentationConfig::validate() const {
    if (max_block_tokens < 1) throw UsageError("max_block_tokens must be >= 1");
    if (!(cut_cost(PunctClass::strong) <= cut_cost(PunctClass::medium) &&
          cut_cost(PunctClass::medium) <= cut_cost(PunctClass::weak) &&
          cut_cost(PunctClass::weak) <= cut_cost(PunctClass::none)))
        throw UsageError("cut costs must be ordered strong <= medium <= weak <= none");
    for (double c : cut_costs)
        if (c < 0) throw UsageError("cut costs must be non-negative");
}

std::vector<Block> segment(const TokenSeq& seq, const SegmentationConfig& cfg) {
    cfg.validate();
    const std::size_t n = seq.tokens.size();
    if (n == 0) return {};
    const std::size_t max_len = static_cast<std::size_t>(cfg.max_block_tokens);

    // Cost of placing a block boundary just before token m (i.e. a cut after
    // token m-1). The final boundary at m == n is free.
    auto boundary_cost = [&](std::size_t m) -> double {
        if (m == n) return 0.0;
        auto cp = cut_point(seq.tokens[m - 1]);
        return cp ? cfg.cut_cost(*cp) : cfg.forced_cut_cost;
    };

    // Backward DP over suffixes: g[i] = cheapest segmentation of tokens[i..n),
    // counting the boundary at the end of each block except the final one.
    // Scanning the next boundary m in ascending order and keeping only strict
    // improvements makes the front-to-back reconstruction yield the
    // lexicographically earliest cut positions among cost/block-count ties.
    struct State {
        double cost = std::numeric_limits<double>::infinity();
        std::size_t blocks = 0;
        std::size_t next = 0;
    };
    std::vector<State> g(n + 1);
    g[n] = {0.0, 0, n};
    for (std::size_t i = n; i-- > 0;) {
        State best;
        const std::size_t hi = std::min(n, i + max_len);
        for (std::size_t m = i + 1; m <= hi; ++m) {
            if (g[m].cost == std::numeric_limits<double>::infinity()) continue;
            double cost = boundary_cost(m) + g[m].cost;
            std::size_t blocks = 1 + g[m].blocks;
            if (cost < best.cost || (cost == best.cost && blocks < best.blocks)) {
                best = {cost, blocks, m};
            }
        }
        g[i] = best;
    }

    std::vector<Block> out;
    out.reserve(g[0].blocks);
    std::size_t i = 0;
    while (i < n) {
        std::size_t m = g[i].next;
        Block blk;
        blk.index = static_cast<int>(out.size());
        blk.length = static_cast<int>(m - i);
        const std::size_t lo = seq.tokens[i].byte_start;
        const std::size_t hi = seq.tokens[m - 1].byte_end;
        blk.text = seq.source_text.substr(lo, hi - lo);
        blk.tokens.source_text = blk.text;
        blk.tokens.tokens.reserve(m - i);
        for (std::size_t t = i; t < m; ++t) {
            Token tok = seq.tokens[t];
            tok.byte_start -= lo;
            tok.byte_end -= lo;
            blk.tokens.tokens.push_back(std::move(tok));
        }
        out.push_back(std::move(blk));
        i = m;
    }
    return out;
}

std::vector<std::pair<int, int>> block_boundaries(const std::vector<Block>& blocks) {
    std::vector<std::pair<int, int>> out;
    out.reserve(blocks.size());
    int pos = 0;
    for (const Block& b : blocks) {
        out.emplace_back(pos, pos + b.length);
        pos += b.length;
    }
    return out;
}

} // namespace keyb2
