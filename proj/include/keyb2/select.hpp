#pragma once

#include "keyb2/corpus.hpp"
#include "keyb2/segment.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace keyb2 {

class ScoringClient;
class EmbeddingClient;

// Smoothed IDF: idf(w) = ln((N+1)/(df_w+1)) + 1, so every value is >= 1 and
// unseen words fall back to default_idf = ln(N+1) + 1 (df = 0).
struct IdfTable {
    std::unordered_map<std::string, double> idf;
    std::int64_t doc_count = 0;
    double default_idf = 1.0;

    double lookup(const std::string& word) const {
        auto it = idf.find(word);
        return it == idf.end() ? default_idf : it->second;
    }

    bool operator==(const IdfTable&) const = default;
};

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;

    void validate() const;
};

struct ScoredBlock {
    int block_index = 0;
    double score = 0.0;
    int length = 0; // unit tokens

    bool operator==(const ScoredBlock&) const = default;
};

enum class DfUnit { document, block };

struct IdfOptions {
    DfUnit df_unit = DfUnit::document;
    const ZhDict* dict = nullptr;
    SegmentationConfig seg; // used only for DfUnit::block
};

// Document frequencies over the corpus (or over its blocks with
// DfUnit::block); word tokenization follows each document's lang.
IdfTable build_idf(const std::vector<Document>& docs, const IdfOptions& opts = {});

// RSV(q, blk) = sum over distinct w in both of
//   idf(w) * tf / (k1 * (1 - b + b * l_blk / l_avg) + tf)
double bm25_score(const std::vector<std::string>& query_words,
                  const std::vector<std::string>& block_words, const IdfTable& idf,
                  const Bm25Params& params, double l_avg);

// One ScoredBlock per block in block_index order. l_avg is the mean block
// word count within this document (1 when every block is pure punctuation).
std::vector<ScoredBlock> select_bm25(const Query& query, const std::vector<Block>& blocks,
                                     const IdfTable& idf, const Bm25Params& params = {},
                                     Lang lang = Lang::en, const ZhDict* dict = nullptr);

// One batched /v1/score request per document. Transport failures surface as
// TransportError carrying the still-unscored block indices.
std::vector<ScoredBlock> select_cross(const Query& query, const std::vector<Block>& blocks,
                                      ScoringClient& scorer);

enum class Similarity { dot, cosine };

double dot_product(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

// Persistent (doc_id, block_index) -> vector store so block representations
// can be computed once and reused. dim is fixed by the first insert.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    explicit EmbeddingStore(int dim) : dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    const std::vector<float>* find(const std::string& doc_id, int block_index) const;
    void insert(const std::string& doc_id, int block_index, std::vector<float> vec);

    bool operator==(const EmbeddingStore&) const = default;

    // Binary format: magic "KB2E", u32 version=1, u32 dim, u64 count, then per
    // entry u16 doc_id length, doc_id bytes, u32 block_index, dim f32 (all
    // little-endian). Entries are written sorted by (doc_id, block_index).
    void save(const std::string& path) const;
    static EmbeddingStore load(const std::string& path);

private:
    int dim_ = 0; // 0 until the first insert fixes it
    std::map<std::pair<std::string, int>, std::vector<float>> entries_;
};

void store_save(const EmbeddingStore& store, const std::string& path);
EmbeddingStore store_load(const std::string& path);

// Embeds the query once per call; block vectors come from the store when
// present, otherwise from one batched /v1/embed request whose results are
// inserted into the store.
std::vector<ScoredBlock> select_bi(const Query& query, const std::string& doc_id,
                                   const std::vector<Block>& blocks,
                                   EmbeddingClient& embedder, EmbeddingStore& store,
                                   Similarity similarity = Similarity::dot);

// IdfTable file: JSONL header {"N":n,"default_idf":f} then {"w":word,"idf":f}
// lines sorted by word.
void save_idf(const IdfTable& table, const std::string& path);
IdfTable load_idf(const std::string& path);

} // namespace keyb2
