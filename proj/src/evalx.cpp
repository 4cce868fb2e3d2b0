#include "keyb2/evalx.hpp"

#include "keyb2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace keyb2 {

namespace {

double gain_of(int grade, NdcgGain gain) {
    if (gain == NdcgGain::exp) return std::exp2(static_cast<double>(grade)) - 1.0;
    return static_cast<double>(grade);
}

} // namespace

double ndcg_at_k(const std::vector<std::string>& ranked_doc_ids,
                 const std::map<std::string, int>& qrels_for_query, int k, NdcgGain gain) {
    if (k < 1) throw UsageError("k must be >= 1");

    double dcg = 0.0;
    const std::size_t depth = std::min<std::size_t>(ranked_doc_ids.size(),
                                                    static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < depth; ++i) {
        auto it = qrels_for_query.find(ranked_doc_ids[i]);
        if (it == qrels_for_query.end()) continue;
        dcg += gain_of(it->second, gain) / std::log2(static_cast<double>(i) + 2.0);
    }

    std::vector<int> grades;
    grades.reserve(qrels_for_query.size());
    for (const auto& [_, grade] : qrels_for_query) grades.push_back(grade);
    std::sort(grades.begin(), grades.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < grades.size() && i < static_cast<std::size_t>(k); ++i)
        idcg += gain_of(grades[i], gain) / std::log2(static_cast<double>(i) + 2.0);

    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double average_precision(const std::vector<std::string>& ranked_doc_ids,
                         const std::map<std::string, int>& qrels_for_query,
                         int binarize_threshold) {
    int total_relevant = 0;
    for (const auto& [_, grade] : qrels_for_query)
        if (grade >= binarize_threshold) ++total_relevant;
    if (total_relevant == 0) return 0.0;

    double sum = 0.0;
    int hits = 0;
    for (std::size_t i = 0; i < ranked_doc_ids.size(); ++i) {
        auto it = qrels_for_query.find(ranked_doc_ids[i]);
        if (it == qrels_for_query.end() || it->second < binarize_threshold) continue;
        ++hits;
        sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
    return sum / static_cast<double>(total_relevant);
}

double precision_at_k(const std::vector<std::string>& ranked_doc_ids,
                      const std::map<std::string, int>& qrels_for_query, int k,
                      int binarize_threshold) {
    if (k < 1) throw UsageError("k must be >= 1");
    int hits = 0;
    const std::size_t depth = std::min<std::size_t>(ranked_doc_ids.size(),
                                                    static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < depth; ++i) {
        auto it = qrels_for_query.find(ranked_doc_ids[i]);
        if (it != qrels_for_query.end() && it->second >= binarize_threshold) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(k);
}

namespace {

// Continued fraction for the regularized incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 1e-15;
    constexpr double kTiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

// Regularized incomplete beta I_x(a, b).
double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

} // namespace

double student_t_two_sided_p(double t, double nu) {
    if (nu <= 0) throw UsageError("degrees of freedom must be > 0");
    if (std::isinf(t)) return 0.0;
    if (t == 0.0) return 1.0;
    return betai(nu / 2.0, 0.5, nu / (nu + t * t));
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw DataError("paired t-test requires equally sized samples (" +
                        std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
    const std::size_t n = a.size();
    if (n < 2) throw DataError("paired t-test requires at least 2 paired observations");

    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = (a[i] - b[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));

    TTestResult result;
    if (sd == 0.0) {
        if (mean == 0.0) {
            result.t = 0.0;
            result.p = 1.0;
        } else {
            result.t = mean > 0 ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
            result.p = 0.0;
        }
        return result;
    }
    result.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    result.p = student_t_two_sided_p(result.t, static_cast<double>(n - 1));
    return result;
}

TTestResult paired_t_test(const std::map<std::string, double>& a,
                          const std::map<std::string, double>& b) {
    std::vector<std::string> only_a, only_b;
    for (const auto& [q, _] : a)
        if (!b.count(q)) only_a.push_back(q);
    for (const auto& [q, _] : b)
        if (!a.count(q)) only_b.push_back(q);
    if (!only_a.empty() || !only_b.empty()) {
        std::ostringstream msg;
        msg << "query sets differ;";
        if (!only_a.empty()) {
            msg << " only in A:";
            for (const auto& q : only_a) msg << ' ' << q;
        }
        if (!only_b.empty()) {
            msg << " only in B:";
            for (const auto& q : only_b) msg << ' ' << q;
        }
        throw DataError(msg.str());
    }

    std::vector<double> va, vb;
    va.reserve(a.size());
    vb.reserve(a.size());
    for (const auto& [q, value] : a) {
        va.push_back(value);
        vb.push_back(b.at(q));
    }
    return paired_t_test(va, vb);
}

MetricSpec parse_metric(const std::string& name) {
    MetricSpec spec;
    spec.name = name;
    if (name == "map") {
        spec.kind = MetricSpec::Kind::map;
        spec.k = 0;
        return spec;
    }
    auto at = name.find('@');
    if (at != std::string::npos) {
        const std::string head = name.substr(0, at);
        const std::string tail = name.substr(at + 1);
        try {
            std::size_t pos = 0;
            spec.k = std::stoi(tail, &pos);
            if (pos != tail.size() || spec.k < 1) throw std::invalid_argument(tail);
        } catch (const std::exception&) {
            throw UsageError("bad metric cutoff in '" + name + "'");
        }
        if (head == "ndcg") {
            spec.kind = MetricSpec::Kind::ndcg;
            return spec;
        }
        if (head == "p") {
            spec.kind = MetricSpec::Kind::precision;
            return spec;
        }
    }
    throw UsageError("unknown metric '" + name + "' (expected ndcg@K, map, or p@K)");
}

MetricReport evaluate_run(const Run& run, const Qrels& qrels,
                          const std::vector<MetricSpec>& metrics, NdcgGain gain,
                          int binarize_threshold) {
    MetricReport report;
    for (const auto& [query_id, entries] : run) {
        const auto* judged = qrels.for_query(query_id);
        if (!judged) {
            ++report.skipped_queries;
            continue;
        }
        std::vector<std::string> ranked;
        ranked.reserve(entries.size());
        for (const RunEntry& e : entries) ranked.push_back(e.doc_id);

        auto& row = report.per_query[query_id];
        for (const MetricSpec& m : metrics) {
            double value = 0.0;
            switch (m.kind) {
            case MetricSpec::Kind::ndcg:
                value = ndcg_at_k(ranked, *judged, m.k, gain);
                break;
            case MetricSpec::Kind::map:
                value = average_precision(ranked, *judged, binarize_threshold);
                break;
            case MetricSpec::Kind::precision:
                value = precision_at_k(ranked, *judged, m.k, binarize_threshold);
                break;
            }
            row[m.name] = value;
        }
    }

    if (!report.per_query.empty()) {
        for (const MetricSpec& m : metrics) {
            double sum = 0.0;
            for (const auto& [_, row] : report.per_query) sum += row.at(m.name);
            report.mean[m.name] = sum / static_cast<double>(report.per_query.size());
        }
    }
    return report;
}

} // namespace keyb2
