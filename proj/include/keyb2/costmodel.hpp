#pragma once

#include "keyb2/assemble.hpp"
#include "keyb2/corpus.hpp"

#include <optional>
#include <string>
#include <vector>

namespace keyb2 {

// Self-attention cost proxy: quadratic in the input token count.
struct CostEstimate {
    long long input_tokens = 0;
    double attention_units = 0.0; // input_tokens^2
    std::optional<long long> relative_to;
    std::optional<double> ratio; // input^2 / baseline^2
};

CostEstimate estimate(long long input_tokens,
                      std::optional<long long> baseline_tokens = std::nullopt);

struct PipelineCostRow {
    std::string query_id;
    double mean_full_tokens = 0.0;      // query + whole document
    double mean_assembled_tokens = 0.0; // query + budgeted excerpt
    double mean_ratio = 0.0;            // assembled^2 / full^2, capped at 1
    int docs = 0;
};

struct PipelineCostReport {
    std::vector<PipelineCostRow> per_query;
    PipelineCostRow overall; // query_id "MEAN", token means over all rows
    int missing_docs = 0;
};

// Token accounting over the actual segmentation/budget arithmetic: the
// assembled length is selector-independent (min of budget and total block
// tokens), so no block scoring is involved.
PipelineCostReport pipeline_report(const Run& run, const Corpus& corpus,
                                   const SegmentationConfig& seg = {},
                                   const AssemblyConfig& assembly = {});

} // namespace keyb2
