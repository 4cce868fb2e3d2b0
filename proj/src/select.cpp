#include "keyb2/select.hpp"

#include "keyb2/errors.hpp"
#include "keyb2/remote.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_set>

namespace keyb2 {

using nlohmann::json;

void Bm25Params::validate() const {
    if (k1 <= 0) throw UsageError("k1 must be > 0");
    if (b < 0 || b > 1) throw UsageError("b must be in [0, 1]");
}

IdfTable build_idf(const std::vector<Document>& docs, const IdfOptions& opts) {
    if (docs.empty()) throw DataError("cannot build IDF from an empty corpus");

    std::unordered_map<std::string, std::int64_t> df;
    std::int64_t n_units = 0;
    auto count_unit = [&](const std::vector<std::string>& words) {
        ++n_units;
        std::unordered_set<std::string> seen;
        for (const std::string& w : words)
            if (seen.insert(w).second) ++df[w];
    };

    for (const Document& doc : docs) {
        if (opts.df_unit == DfUnit::document) {
            count_unit(word_tokenize(doc.text, doc.lang, opts.dict));
        } else {
            for (const Block& blk : segment(unit_tokenize(doc.text, doc.lang), opts.seg))
                count_unit(word_tokenize(blk.text, doc.lang, opts.dict));
        }
    }

    IdfTable table;
    table.doc_count = n_units;
    table.default_idf = std::log(static_cast<double>(n_units) + 1.0) + 1.0;
    table.idf.reserve(df.size());
    for (const auto& [word, freq] : df)
        table.idf.emplace(word, std::log((static_cast<double>(n_units) + 1.0) /
                                         (static_cast<double>(freq) + 1.0)) +
                                    1.0);
    return table;
}

double bm25_score(const std::vector<std::string>& query_words,
                  const std::vector<std::string>& block_words, const IdfTable& idf,
                  const Bm25Params& params, double l_avg) {
    params.validate();
    if (l_avg <= 0) throw UsageError("l_avg must be > 0");
    if (query_words.empty() || block_words.empty()) return 0.0;

    std::unordered_map<std::string, int> tf;
    for (const std::string& w : block_words) ++tf[w];
    const double l_blk = static_cast<double>(block_words.size());
    const double norm = params.k1 * (1.0 - params.b + params.b * l_blk / l_avg);

    double score = 0.0;
    std::unordered_set<std::string> counted;
    for (const std::string& w : query_words) {
        if (!counted.insert(w).second) continue;
        auto it = tf.find(w);
        if (it == tf.end()) continue;
        const double f = static_cast<double>(it->second);
        score += idf.lookup(w) * f / (norm + f);
    }
    return score;
}

std::vector<ScoredBlock> select_bm25(const Query& query, const std::vector<Block>& blocks,
                                     const IdfTable& idf, const Bm25Params& params,
                                     Lang lang, const ZhDict* dict) {
    if (blocks.empty()) return {};
    const std::vector<std::string> query_words = word_tokenize(query.text, lang, dict);

    std::vector<std::vector<std::string>> block_words;
    block_words.reserve(blocks.size());
    double total_words = 0;
    for (const Block& blk : blocks) {
        block_words.push_back(word_tokenize(blk.text, lang, dict));
        total_words += static_cast<double>(block_words.back().size());
    }
    double l_avg = total_words / static_cast<double>(blocks.size());
    if (l_avg <= 0) l_avg = 1.0; // all-punctuation document

    std::vector<ScoredBlock> out;
    out.reserve(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i)
        out.push_back({blocks[i].index,
                       bm25_score(query_words, block_words[i], idf, params, l_avg),
                       blocks[i].length});
    return out;
}

std::vector<ScoredBlock> select_cross(const Query& query, const std::vector<Block>& blocks,
                                      ScoringClient& scorer) {
    if (blocks.empty()) return {};
    std::vector<ScorePair> pairs;
    pairs.reserve(blocks.size());
    for (const Block& blk : blocks) pairs.push_back({query.text, blk.text});

    std::vector<double> scores;
    try {
        scores = scorer.score(pairs);
    } catch (const TransportError& e) {
        std::vector<int> pending;
        pending.reserve(blocks.size());
        for (const Block& blk : blocks) pending.push_back(blk.index);
        throw TransportError(e.what(), std::move(pending));
    }
    if (scores.size() != blocks.size())
        throw ProtocolError("scoring service returned " + std::to_string(scores.size()) +
                            " scores for " + std::to_string(blocks.size()) + " blocks");

    std::vector<ScoredBlock> out;
    out.reserve(blocks.size());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (!std::isfinite(scores[i]))
            throw ProtocolError("non-finite score for block " +
                                std::to_string(blocks[i].index));
        out.push_back({blocks[i].index, scores[i], blocks[i].length});
    }
    return out;
}

double dot_product(std::span<const float> a, std::span<const float> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double na = 0.0, nb = 0.0;
    for (float v : a) na += static_cast<double>(v) * v;
    for (float v : b) nb += static_cast<double>(v) * v;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot_product(a, b) / (std::sqrt(na) * std::sqrt(nb));
}

const std::vector<float>* EmbeddingStore::find(const std::string& doc_id,
                                               int block_index) const {
    auto it = entries_.find({doc_id, block_index});
    return it == entries_.end() ? nullptr : &it->second;
}

void EmbeddingStore::insert(const std::string& doc_id, int block_index,
                            std::vector<float> vec) {
    if (dim_ == 0) dim_ = static_cast<int>(vec.size());
    if (static_cast<int>(vec.size()) != dim_)
        throw DataError("embedding dim mismatch: store has " + std::to_string(dim_) +
                        ", got " + std::to_string(vec.size()));
    for (float v : vec)
        if (!std::isfinite(v)) throw DataError("non-finite embedding component");
    entries_[{doc_id, block_index}] = std::move(vec);
}

namespace {

template <typename T>
void write_le(std::ostream& out, T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw DataError("truncated binary file");
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

} // namespace

void EmbeddingStore::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open file for writing: " + path);
    out.write("KB2E", 4);
    write_le<std::uint32_t>(out, 1);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dim_));
    write_le<std::uint64_t>(out, entries_.size());
    for (const auto& [key, vec] : entries_) {
        const auto& [doc_id, block_index] = key;
        if (doc_id.size() > 0xFFFF)
            throw DataError("doc id longer than 65535 bytes: " + doc_id.substr(0, 32));
        write_le<std::uint16_t>(out, static_cast<std::uint16_t>(doc_id.size()));
        out.write(doc_id.data(), static_cast<std::streamsize>(doc_id.size()));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(block_index));
        for (float v : vec) write_le<float>(out, v);
    }
    if (!out) throw DataError("write failed: " + path);
}

EmbeddingStore EmbeddingStore::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string_view(magic, 4) != "KB2E")
        throw DataError("not an embedding store file (bad magic): " + path);
    const auto version = read_le<std::uint32_t>(in);
    if (version != 1)
        throw DataError("unsupported embedding store version " + std::to_string(version));
    EmbeddingStore store;
    store.dim_ = static_cast<int>(read_le<std::uint32_t>(in));
    const auto count = read_le<std::uint64_t>(in);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto id_len = read_le<std::uint16_t>(in);
        std::string doc_id(id_len, '\0');
        in.read(doc_id.data(), id_len);
        const auto block_index = read_le<std::uint32_t>(in);
        std::vector<float> vec(static_cast<std::size_t>(store.dim_));
        for (float& v : vec) v = read_le<float>(in);
        if (!in) throw DataError("truncated embedding store: " + path);
        store.entries_.emplace(std::pair{std::move(doc_id), static_cast<int>(block_index)},
                               std::move(vec));
    }
    return store;
}

void store_save(const EmbeddingStore& store, const std::string& path) { store.save(path); }

EmbeddingStore store_load(const std::string& path) { return EmbeddingStore::load(path); }

std::vector<ScoredBlock> select_bi(const Query& query, const std::string& doc_id,
                                   const std::vector<Block>& blocks,
                                   EmbeddingClient& embedder, EmbeddingStore& store,
                                   Similarity similarity) {
    if (blocks.empty()) return {};

    auto query_result = embedder.embed({query.text});
    if (query_result.vectors.size() != 1)
        throw ProtocolError("embedding service returned " +
                            std::to_string(query_result.vectors.size()) +
                            " vectors for 1 text");
    const std::vector<float> query_vec = std::move(query_result.vectors[0]);
    if (store.dim() != 0 && store.dim() != query_result.dim)
        throw DataError("embedding dim mismatch: store has " + std::to_string(store.dim()) +
                        ", service returned " + std::to_string(query_result.dim));

    // Batch all cold blocks into one request.
    std::vector<std::size_t> missing;
    std::vector<std::string> missing_texts;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (!store.find(doc_id, blocks[i].index)) {
            missing.push_back(i);
            missing_texts.push_back(blocks[i].text);
        }
    }
    if (!missing.empty()) {
        auto result = embedder.embed(missing_texts);
        if (result.vectors.size() != missing.size())
            throw ProtocolError("embedding service returned " +
                                std::to_string(result.vectors.size()) + " vectors for " +
                                std::to_string(missing.size()) + " texts");
        if (result.dim != query_result.dim)
            throw ProtocolError("embedding service changed dim between calls");
        for (std::size_t k = 0; k < missing.size(); ++k)
            store.insert(doc_id, blocks[missing[k]].index, std::move(result.vectors[k]));
    }

    std::vector<ScoredBlock> out;
    out.reserve(blocks.size());
    for (const Block& blk : blocks) {
        const std::vector<float>* vec = store.find(doc_id, blk.index);
        double score;
        if (similarity == Similarity::dot) {
            score = dot_product(query_vec, *vec);
        } else {
            score = cosine_similarity(query_vec, *vec);
            const bool zero_query =
                std::all_of(query_vec.begin(), query_vec.end(), [](float v) { return v == 0.0f; });
            const bool zero_block =
                std::all_of(vec->begin(), vec->end(), [](float v) { return v == 0.0f; });
            if (zero_query || zero_block)
                std::cerr << "warning: zero vector under cosine for doc " << doc_id
                          << " block " << blk.index << "; score set to 0\n";
        }
        out.push_back({blk.index, score, blk.length});
    }
    return out;
}

void save_idf(const IdfTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    json header;
    header["N"] = table.doc_count;
    header["default_idf"] = table.default_idf;
    out << header.dump() << '\n';
    std::vector<std::string> words;
    words.reserve(table.idf.size());
    for (const auto& [word, _] : table.idf) words.push_back(word);
    std::sort(words.begin(), words.end());
    for (const std::string& word : words) {
        json line;
        line["w"] = word;
        line["idf"] = table.idf.at(word);
        out << line.dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

IdfTable load_idf(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string line;
    std::size_t lineno = 0;
    IdfTable table;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        if (!have_header) {
            if (!obj.contains("N") || !obj.contains("default_idf"))
                throw ParseError("IDF file must start with {\"N\",\"default_idf\"}", lineno);
            table.doc_count = obj.at("N").get<std::int64_t>();
            table.default_idf = obj.at("default_idf").get<double>();
            have_header = true;
        } else {
            table.idf[obj.at("w").get<std::string>()] = obj.at("idf").get<double>();
        }
    }
    if (!have_header) throw DataError("empty IDF file: " + path);
    return table;
}

} // namespace keyb2
