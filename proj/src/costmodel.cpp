#include "keyb2/costmodel.hpp"

#include "keyb2/errors.hpp"

#include <algorithm>
#include <unordered_map>

namespace keyb2 {

CostEstimate estimate(long long input_tokens, std::optional<long long> baseline_tokens) {
    if (input_tokens < 0) throw UsageError("input_tokens must be >= 0");
    CostEstimate est;
    est.input_tokens = input_tokens;
    est.attention_units = static_cast<double>(input_tokens) * static_cast<double>(input_tokens);
    if (baseline_tokens) {
        if (*baseline_tokens <= 0) throw UsageError("baseline_tokens must be > 0");
        est.relative_to = *baseline_tokens;
        const double base =
            static_cast<double>(*baseline_tokens) * static_cast<double>(*baseline_tokens);
        est.ratio = est.attention_units / base;
    }
    return est;
}

PipelineCostReport pipeline_report(const Run& run, const Corpus& corpus,
                                   const SegmentationConfig& seg,
                                   const AssemblyConfig& assembly) {
    PipelineCostReport report;
    const int query_tokens = assembly.query_max_tokens;

    // Documents repeat across queries; tokenize and segment each one once.
    struct DocCost {
        long long doc_tokens = 0;
        long long block_tokens = 0;
    };
    std::unordered_map<std::string, DocCost> cache;
    auto doc_cost = [&](const Document& doc) -> DocCost {
        auto it = cache.find(doc.id);
        if (it != cache.end()) return it->second;
        DocCost cost;
        const TokenSeq seq = unit_tokenize(doc.text, doc.lang);
        cost.doc_tokens = static_cast<long long>(seq.tokens.size());
        for (const Block& blk : segment(seq, seg)) cost.block_tokens += blk.length;
        cache.emplace(doc.id, cost);
        return cost;
    };

    double total_full = 0.0, total_assembled = 0.0, total_ratio = 0.0;
    int total_docs = 0;
    for (const auto& [query_id, entries] : run) {
        PipelineCostRow row;
        row.query_id = query_id;
        double full_sum = 0.0, assembled_sum = 0.0, ratio_sum = 0.0;
        for (const RunEntry& e : entries) {
            const Document* doc = corpus.find(e.doc_id);
            if (!doc) {
                ++report.missing_docs;
                continue;
            }
            const DocCost cost = doc_cost(*doc);
            const double full = static_cast<double>(query_tokens + cost.doc_tokens);
            const double assembled = static_cast<double>(
                query_tokens +
                std::min<long long>(assembly.max_block_tokens_total, cost.block_tokens));
            const double ratio =
                full > 0 ? std::min(1.0, (assembled * assembled) / (full * full)) : 1.0;
            full_sum += full;
            assembled_sum += assembled;
            ratio_sum += ratio;
            ++row.docs;
        }
        if (row.docs > 0) {
            row.mean_full_tokens = full_sum / row.docs;
            row.mean_assembled_tokens = assembled_sum / row.docs;
            row.mean_ratio = ratio_sum / row.docs;
        }
        total_full += full_sum;
        total_assembled += assembled_sum;
        total_ratio += ratio_sum;
        total_docs += row.docs;
        report.per_query.push_back(std::move(row));
    }

    report.overall.query_id = "MEAN";
    report.overall.docs = total_docs;
    if (total_docs > 0) {
        report.overall.mean_full_tokens = total_full / total_docs;
        report.overall.mean_assembled_tokens = total_assembled / total_docs;
        report.overall.mean_ratio = total_ratio / total_docs;
    }
    return report;
}

} // namespace keyb2
