#pragma once

#include "keyb2/tokenize.hpp"

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace keyb2 {

// Per-(layer, head) attention matrices for one input sequence, with the
// query/document token index sets. Matrices are row-stochastic (causal
// masking allowed), stored layer-major then head-major, row-major inside.
struct AttentionDump {
    int n_layers = 0;
    int n_heads = 0;
    int seq_len = 0;
    std::vector<int> query_token_indices;
    std::vector<int> doc_token_indices;
    std::optional<std::pair<int, int>> relevant_token_span;
    std::vector<float> data; // n_layers * n_heads * seq_len * seq_len

    std::span<const float> matrix(int layer, int head) const;
    float at(int layer, int head, int row, int col) const {
        return matrix(layer, head)[static_cast<std::size_t>(row) *
                                       static_cast<std::size_t>(seq_len) +
                                   static_cast<std::size_t>(col)];
    }

    // Shape, index-set and row-sum checks. Throws DataError on violation.
    void validate(double row_sum_tol = 1e-4) const;
};

// Manifest: JSON {n_layers, n_heads, seq_len, query_token_indices,
// doc_token_indices, relevant_token_span?, data_file}. Data file: magic
// "KB2A", u32 version=1, then the matrices as little-endian f32.
AttentionDump load_dump(const std::string& manifest_path);
void save_dump(const AttentionDump& dump, const std::string& manifest_path,
               const std::string& data_path);

// Consecutive runs of chunk_size document-token indices; a final chunk
// shorter than min_final_tokens merges into the previous one.
std::vector<std::vector<int>> chunk_indices(const std::vector<int>& doc_token_indices,
                                            int chunk_size = 64, int min_final_tokens = 8);

// Mean over chunk tokens of the mean attention toward the query tokens:
// (1/K) sum_{t in chunk} (1/|Q|) sum_{j in Q} A[t][j].
double chunk_attention_weight(std::span<const float> matrix, int seq_len,
                              const std::vector<int>& chunk_token_indices,
                              const std::vector<int>& query_token_indices);

// Spearman rank correlation with average ranks for ties; 0 when either side
// has zero rank variance. Requires n >= 2.
double spearman(std::span<const double> x, std::span<const double> y);

// ARAS(q, d): spearman between per-chunk attention weights and relevance
// scores. Fewer than 2 chunks is an error (callers exclude such pairs).
double aras(std::span<const double> weights, std::span<const double> relevances);

struct AlignmentResult {
    std::vector<double> aras_per_pair;
    double mean_aras = 0.0;
    double pcr = 0.0;      // fraction of pairs with ARAS strictly > 0
    int skipped_pairs = 0; // fewer than 2 chunks, or zero variance when excluded
};

// A zero-variance side normally yields ARAS 0; the exclude policy drops such
// pairs from the aggregates instead, counting them in skipped_pairs.
enum class ZeroVariancePolicy { as_zero, exclude };

AlignmentResult alignment_over_pairs(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs,
    ZeroVariancePolicy policy = ZeroVariancePolicy::as_zero);

// Cell (l, h) = mean over dumps of the mean attention from document tokens to
// query tokens in head (l, h). All dumps must share (n_layers, n_heads).
std::vector<std::vector<double>> aggregate_heatmap(const std::vector<AttentionDump>& dumps);

enum class NoisePosition { before, after };
enum class TokenOrigin : unsigned char { relevant, noise };

struct NoisedSeq {
    TokenSeq seq;
    std::vector<TokenOrigin> origin; // one label per token
};

// Concatenates noise and document (single space between non-empty parts),
// recomputing byte offsets and labeling each token's provenance.
NoisedSeq insert_noise(const TokenSeq& doc, const TokenSeq& noise, NoisePosition position);

// (new - old) / old. old == 0 is an error.
double relative_change(double old_value, double new_value);

} // namespace keyb2
