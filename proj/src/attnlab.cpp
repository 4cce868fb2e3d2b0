#include "keyb2/attnlab.hpp"

#include "keyb2/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace keyb2 {

using nlohmann::json;

std::span<const float> AttentionDump::matrix(int layer, int head) const {
    const std::size_t cells = static_cast<std::size_t>(seq_len) * seq_len;
    const std::size_t offset =
        (static_cast<std::size_t>(layer) * n_heads + static_cast<std::size_t>(head)) * cells;
    return {data.data() + offset, cells};
}

void AttentionDump::validate(double row_sum_tol) const {
    if (n_layers < 1 || n_heads < 1 || seq_len < 1)
        throw DataError("attention dump has non-positive shape");
    const std::size_t expected = static_cast<std::size_t>(n_layers) * n_heads *
                                 static_cast<std::size_t>(seq_len) * seq_len;
    if (data.size() != expected)
        throw DataError("attention dump data size " + std::to_string(data.size()) +
                        " does not match shape (" + std::to_string(expected) + " expected)");

    std::unordered_set<int> query_set;
    for (int idx : query_token_indices) {
        if (idx < 0 || idx >= seq_len)
            throw DataError("query token index " + std::to_string(idx) + " out of range");
        if (!query_set.insert(idx).second)
            throw DataError("duplicate query token index " + std::to_string(idx));
    }
    for (int idx : doc_token_indices) {
        if (idx < 0 || idx >= seq_len)
            throw DataError("doc token index " + std::to_string(idx) + " out of range");
        if (query_set.count(idx))
            throw DataError("token index " + std::to_string(idx) +
                            " is in both query and doc sets");
    }

    for (int l = 0; l < n_layers; ++l) {
        for (int h = 0; h < n_heads; ++h) {
            auto m = matrix(l, h);
            for (int r = 0; r < seq_len; ++r) {
                double sum = 0.0;
                for (int c = 0; c < seq_len; ++c)
                    sum += m[static_cast<std::size_t>(r) * seq_len + c];
                if (std::fabs(sum - 1.0) > row_sum_tol)
                    throw DataError("row " + std::to_string(r) + " of layer " +
                                    std::to_string(l) + " head " + std::to_string(h) +
                                    " sums to " + std::to_string(sum));
            }
        }
    }
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

constexpr char kMagic[4] = {'K', 'B', '2', 'A'};

} // namespace

AttentionDump load_dump(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw DataError("cannot open file: " + manifest_path);
    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("malformed dump manifest " + manifest_path + ": " + e.what());
    }

    AttentionDump dump;
    dump.n_layers = manifest.at("n_layers").get<int>();
    dump.n_heads = manifest.at("n_heads").get<int>();
    dump.seq_len = manifest.at("seq_len").get<int>();
    dump.query_token_indices = manifest.at("query_token_indices").get<std::vector<int>>();
    dump.doc_token_indices = manifest.at("doc_token_indices").get<std::vector<int>>();
    if (manifest.contains("relevant_token_span")) {
        auto span = manifest.at("relevant_token_span").get<std::vector<int>>();
        if (span.size() != 2)
            throw DataError("relevant_token_span must be [start, end] in " + manifest_path);
        dump.relevant_token_span = std::pair{span[0], span[1]};
    }

    // data_file is resolved relative to the manifest's directory.
    std::filesystem::path data_path = manifest.at("data_file").get<std::string>();
    if (data_path.is_relative())
        data_path = std::filesystem::path(manifest_path).parent_path() / data_path;

    std::ifstream data(data_path, std::ios::binary);
    if (!data) throw DataError("cannot open dump data file: " + data_path.string());
    char magic[4];
    data.read(magic, 4);
    if (!data || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("not an attention dump data file (bad magic): " +
                        data_path.string());
    std::uint32_t version = 0;
    data.read(reinterpret_cast<char*>(&version), 4);
    if (!data || version != 1)
        throw DataError("unsupported dump version " + std::to_string(version));

    const std::size_t count = static_cast<std::size_t>(dump.n_layers) * dump.n_heads *
                              static_cast<std::size_t>(dump.seq_len) * dump.seq_len;
    dump.data.resize(count);
    data.read(reinterpret_cast<char*>(dump.data.data()),
              static_cast<std::streamsize>(count * sizeof(float)));
    if (!data) throw DataError("truncated dump data file: " + data_path.string());
    dump.validate();
    return dump;
}

void save_dump(const AttentionDump& dump, const std::string& manifest_path,
               const std::string& data_path) {
    dump.validate();

    std::ofstream data(data_path, std::ios::binary);
    if (!data) throw DataError("cannot open file for writing: " + data_path);
    data.write(kMagic, 4);
    const std::uint32_t version = 1;
    data.write(reinterpret_cast<const char*>(&version), 4);
    data.write(reinterpret_cast<const char*>(dump.data.data()),
               static_cast<std::streamsize>(dump.data.size() * sizeof(float)));
    if (!data) throw DataError("write failed: " + data_path);

    json manifest;
    manifest["n_layers"] = dump.n_layers;
    manifest["n_heads"] = dump.n_heads;
    manifest["seq_len"] = dump.seq_len;
    manifest["query_token_indices"] = dump.query_token_indices;
    manifest["doc_token_indices"] = dump.doc_token_indices;
    if (dump.relevant_token_span)
        manifest["relevant_token_span"] =
            std::vector<int>{dump.relevant_token_span->first, dump.relevant_token_span->second};
    manifest["data_file"] = std::filesystem::path(data_path).filename().string();

    std::ofstream out(manifest_path);
    if (!out) throw DataError("cannot open file for writing: " + manifest_path);
    out << manifest.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + manifest_path);
}

std::vector<std::vector<int>> chunk_indices(const std::vector<int>& doc_token_indices,
                                            int chunk_size, int min_final_tokens) {
    if (chunk_size < 1) throw UsageError("chunk_size must be >= 1");
    std::vector<std::vector<int>> chunks;
    for (std::size_t start = 0; start < doc_token_indices.size();
         start += static_cast<std::size_t>(chunk_size)) {
        const std::size_t end =
            std::min(doc_token_indices.size(), start + static_cast<std::size_t>(chunk_size));
        chunks.emplace_back(doc_token_indices.begin() + static_cast<std::ptrdiff_t>(start),
                            doc_token_indices.begin() + static_cast<std::ptrdiff_t>(end));
    }
    if (chunks.size() >= 2 &&
        chunks.back().size() < static_cast<std::size_t>(min_final_tokens)) {
        auto tail = std::move(chunks.back());
        chunks.pop_back();
        chunks.back().insert(chunks.back().end(), tail.begin(), tail.end());
    }
    return chunks;
}

double chunk_attention_weight(std::span<const float> matrix, int seq_len,
                              const std::vector<int>& chunk_token_indices,
                              const std::vector<int>& query_token_indices) {
    if (chunk_token_indices.empty()) throw DataError("empty chunk");
    if (query_token_indices.empty()) throw DataError("empty query index set");

    double outer = 0.0;
    for (int t : chunk_token_indices) {
        if (t < 0 || t >= seq_len)
            throw DataError("chunk token index " + std::to_string(t) + " out of range");
        double inner = 0.0;
        for (int j : query_token_indices) {
            if (j < 0 || j >= seq_len)
                throw DataError("query token index " + std::to_string(j) + " out of range");
            inner += matrix[static_cast<std::size_t>(t) * seq_len + j];
        }
        outer += inner / static_cast<double>(query_token_indices.size());
    }
    return outer / static_cast<double>(chunk_token_indices.size());
}

namespace {

// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

bool has_ties(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

} // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw DataError("spearman requires equally sized inputs (" +
                        std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
    if (x.size() < 2) throw DataError("spearman requires at least 2 observations");

    for (double v : x)
        if (!std::isfinite(v)) throw DataError("non-finite value in spearman input");
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("non-finite value in spearman input");

    const std::vector<double> rx = average_ranks(x);
    const std::vector<double> ry = average_ranks(y);

    if (!has_ties(x) && !has_ties(y)) {
        // Tie-free ranks are integers: the classical formula is exact.
        const auto n = static_cast<long long>(x.size());
        long long d2 = 0;
        for (std::size_t i = 0; i < rx.size(); ++i) {
            const long long d = static_cast<long long>(rx[i]) - static_cast<long long>(ry[i]);
            d2 += d * d;
        }
        return 1.0 - 6.0 * static_cast<double>(d2) /
                         (static_cast<double>(n) * (static_cast<double>(n) * n - 1.0));
    }
    return pearson(rx, ry);
}

double aras(std::span<const double> weights, std::span<const double> relevances) {
    if (weights.size() < 2)
        throw DataError("ARAS is undefined for fewer than 2 chunks (" +
                        std::to_string(weights.size()) + " given)");
    return spearman(weights, relevances);
}

namespace {

bool has_rank_variance(const std::vector<double>& values) {
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] != values[0]) return true;
    return false;
}

} // namespace

AlignmentResult alignment_over_pairs(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs,
    ZeroVariancePolicy policy) {
    AlignmentResult result;
    for (const auto& [weights, relevances] : pairs) {
        if (weights.size() < 2) {
            ++result.skipped_pairs;
            continue;
        }
        if (policy == ZeroVariancePolicy::exclude &&
            (!has_rank_variance(weights) || !has_rank_variance(relevances))) {
            ++result.skipped_pairs;
            continue;
        }
        result.aras_per_pair.push_back(aras(weights, relevances));
    }
    if (!result.aras_per_pair.empty()) {
        double sum = 0.0;
        int positive = 0;
        for (double v : result.aras_per_pair) {
            sum += v;
            if (v > 0.0) ++positive; // strictly positive, 0 does not count
        }
        result.mean_aras = sum / static_cast<double>(result.aras_per_pair.size());
        result.pcr =
            static_cast<double>(positive) / static_cast<double>(result.aras_per_pair.size());
    }
    return result;
}

std::vector<std::vector<double>> aggregate_heatmap(const std::vector<AttentionDump>& dumps) {
    if (dumps.empty()) throw DataError("no dumps to aggregate");
    const int n_layers = dumps.front().n_layers;
    const int n_heads = dumps.front().n_heads;
    for (const AttentionDump& d : dumps)
        if (d.n_layers != n_layers || d.n_heads != n_heads)
            throw DataError("dump shape mismatch: expected " + std::to_string(n_layers) +
                            "x" + std::to_string(n_heads) + ", got " +
                            std::to_string(d.n_layers) + "x" + std::to_string(d.n_heads));

    std::vector<std::vector<double>> heatmap(
        static_cast<std::size_t>(n_layers),
        std::vector<double>(static_cast<std::size_t>(n_heads), 0.0));
    // Fixed summation order (sample index) keeps results reproducible.
    for (const AttentionDump& d : dumps) {
        if (d.doc_token_indices.empty() || d.query_token_indices.empty())
            throw DataError("dump lacks doc or query token indices");
        const double denom = static_cast<double>(d.doc_token_indices.size()) *
                             static_cast<double>(d.query_token_indices.size());
        for (int l = 0; l < n_layers; ++l) {
            for (int h = 0; h < n_heads; ++h) {
                auto m = d.matrix(l, h);
                double sum = 0.0;
                for (int t : d.doc_token_indices)
                    for (int j : d.query_token_indices)
                        sum += m[static_cast<std::size_t>(t) * d.seq_len + j];
                heatmap[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)] +=
                    sum / denom;
            }
        }
    }
    for (auto& row : heatmap)
        for (double& cell : row) cell /= static_cast<double>(dumps.size());
    return heatmap;
}

NoisedSeq insert_noise(const TokenSeq& doc, const TokenSeq& noise, NoisePosition position) {
    const TokenSeq& first = (position == NoisePosition::before) ? noise : doc;
    const TokenSeq& second = (position == NoisePosition::before) ? doc : noise;
    const TokenOrigin first_origin =
        (position == NoisePosition::before) ? TokenOrigin::noise : TokenOrigin::relevant;
    const TokenOrigin second_origin =
        (position == NoisePosition::before) ? TokenOrigin::relevant : TokenOrigin::noise;

    NoisedSeq out;
    const bool join = !first.source_text.empty() && !second.source_text.empty();
    out.seq.source_text = first.source_text + (join ? " " : "") + second.source_text;
    out.seq.tokens.reserve(first.tokens.size() + second.tokens.size());
    out.origin.reserve(first.tokens.size() + second.tokens.size());

    for (const Token& t : first.tokens) {
        out.seq.tokens.push_back(t);
        out.origin.push_back(first_origin);
    }
    const std::size_t shift = first.source_text.size() + (join ? 1 : 0);
    for (Token t : second.tokens) {
        t.byte_start += shift;
        t.byte_end += shift;
        out.seq.tokens.push_back(std::move(t));
        out.origin.push_back(second_origin);
    }
    return out;
}

double relative_change(double old_value, double new_value) {
    if (old_value == 0.0) throw DataError("relative change is undefined for old value 0");
    return (new_value - old_value) / old_value;
}

} // namespace keyb2
