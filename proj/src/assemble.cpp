#include "keyb2/assemble.hpp"

#include "keyb2/errors.hpp"

#include <algorithm>
#include <cmath>

namespace keyb2 {

void AssemblyConfig::validate() const {
    if (max_block_tokens_total < 1) throw UsageError("max_block_tokens_total must be >= 1");
    if (query_max_tokens < 0) throw UsageError("query_max_tokens must be >= 0");
}

std::vector<int> pick_top_blocks(const std::vector<ScoredBlock>& scored, int max_b_t) {
    if (scored.empty()) return {};
    for (const ScoredBlock& sb : scored)
        if (!std::isfinite(sb.score))
            throw DataError("non-finite block score at index " +
                            std::to_string(sb.block_index));

    std::vector<const ScoredBlock*> order;
    order.reserve(scored.size());
    for (const ScoredBlock& sb : scored) order.push_back(&sb);
    std::sort(order.begin(), order.end(), [](const ScoredBlock* a, const ScoredBlock* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->block_index < b->block_index;
    });

    std::vector<int> chosen;
    long long cumulative = 0;
    for (const ScoredBlock* sb : order) {
        chosen.push_back(sb->block_index);
        cumulative += sb->length;
        if (cumulative >= max_b_t) break;
    }
    return chosen;
}

namespace {

// Text of the first kept_tokens tokens of a block (block-local byte space).
std::string block_prefix_text(const Block& blk, int kept_tokens) {
    if (kept_tokens >= blk.length) return blk.text;
    const std::size_t end = blk.tokens.tokens[static_cast<std::size_t>(kept_tokens) - 1].byte_end;
    return blk.text.substr(0, end);
}

} // namespace

AssembledInput assemble(const TokenSeq& query, const std::vector<Block>& blocks,
                        const std::vector<int>& chosen_score_order,
                        const AssemblyConfig& cfg) {
    cfg.validate();

    AssembledInput out;
    const TokenSeq truncated_query =
        truncate_tokens(query, static_cast<std::size_t>(cfg.query_max_tokens));
    out.query_text = truncated_query.source_text;

    std::vector<int> indices = chosen_score_order;
    std::sort(indices.begin(), indices.end());
    for (int idx : indices) {
        if (idx < 0 || static_cast<std::size_t>(idx) >= blocks.size() ||
            blocks[static_cast<std::size_t>(idx)].index != idx)
            throw DataError("chosen block index " + std::to_string(idx) +
                            " does not match the segmentation");
    }

    const int budget = cfg.max_block_tokens_total;
    std::vector<std::pair<int, int>> kept; // (block_index, kept_tokens)
    if (cfg.truncation == AssemblyConfig::TruncationTarget::doc_order_last) {
        int total = 0;
        for (int idx : indices) {
            const Block& blk = blocks[static_cast<std::size_t>(idx)];
            const int remaining = budget - total;
            if (remaining <= 0) break; // budget already exact; drop the rest
            const int keep = std::min(blk.length, remaining);
            kept.emplace_back(idx, keep);
            total += keep;
            if (keep < blk.length) break; // truncation point reached
        }
    } else {
        long long total_raw = 0;
        for (int idx : indices) total_raw += blocks[static_cast<std::size_t>(idx)].length;
        long long overflow = total_raw - budget;
        const int lowest_scored =
            chosen_score_order.empty() ? -1 : chosen_score_order.back();
        for (int idx : indices) {
            const Block& blk = blocks[static_cast<std::size_t>(idx)];
            int keep = blk.length;
            if (overflow > 0 && idx == lowest_scored)
                keep = static_cast<int>(std::max<long long>(0, blk.length - overflow));
            if (keep > 0) kept.emplace_back(idx, keep);
        }
    }

    std::string excerpt;
    int total = 0;
    int prev_index = -1;
    for (const auto& [idx, keep] : kept) {
        if (!excerpt.empty()) {
            const bool adjacent = (idx == prev_index + 1);
            excerpt += (cfg.mark_gaps && !adjacent) ? " … " : " ";
        }
        excerpt += block_prefix_text(blocks[static_cast<std::size_t>(idx)], keep);
        total += keep;
        prev_index = idx;
    }

    out.excerpt_text = std::move(excerpt);
    out.chosen = std::move(kept);
    out.total_block_tokens = total;
    return out;
}

std::string render_prompt(const AssembledInput& input) {
    return "query: " + input.query_text + " document: " + input.excerpt_text;
}

} // namespace keyb2
