#pragma once

#include "keyb2/corpus.hpp"

#include <map>
#include <string>
#include <vector>

namespace keyb2 {

enum class NdcgGain { exp, linear };

// DCG with gains (2^grade - 1) / log2(i + 1) (or grade / log2(i + 1) with
// linear gain); ideal DCG over all judged grades sorted descending. 0 when
// the ideal DCG is 0.
double ndcg_at_k(const std::vector<std::string>& ranked_doc_ids,
                 const std::map<std::string, int>& qrels_for_query, int k,
                 NdcgGain gain = NdcgGain::exp);

// Mean precision at each relevant hit, divided by the number of judged
// relevant documents (retrieved or not). Relevant means grade >= threshold.
double average_precision(const std::vector<std::string>& ranked_doc_ids,
                         const std::map<std::string, int>& qrels_for_query,
                         int binarize_threshold = 1);

// |relevant in top k| / k, denominator fixed at k.
double precision_at_k(const std::vector<std::string>& ranked_doc_ids,
                      const std::map<std::string, int>& qrels_for_query, int k,
                      int binarize_threshold = 1);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
};

// Two-sided paired Student t-test over per-query differences a - b. The two
// maps must cover the same query set. Zero-variance differences follow the
// convention p = 1 when the mean difference is 0, else p = 0.
TTestResult paired_t_test(const std::map<std::string, double>& a,
                          const std::map<std::string, double>& b);

// Position-aligned variant for callers that already paired their samples.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// Two-sided p-value for a t statistic with nu degrees of freedom, via the
// regularized incomplete beta function.
double student_t_two_sided_p(double t, double nu);

struct MetricSpec {
    enum class Kind { ndcg, map, precision };
    Kind kind = Kind::ndcg;
    int k = 10; // unused for map
    std::string name;
};

// "ndcg@10", "map", "p@20", ...
MetricSpec parse_metric(const std::string& name);

struct MetricReport {
    std::map<std::string, std::map<std::string, double>> per_query;
    std::map<std::string, double> mean;
    int skipped_queries = 0; // present in the run but absent from the qrels
};

MetricReport evaluate_run(const Run& run, const Qrels& qrels,
                          const std::vector<MetricSpec>& metrics,
                          NdcgGain gain = NdcgGain::exp, int binarize_threshold = 1);

} // namespace keyb2
