#pragma once

#include "keyb2/assemble.hpp"
#include "keyb2/corpus.hpp"
#include "keyb2/remote.hpp"
#include "keyb2/segment.hpp"
#include "keyb2/select.hpp"

#include <memory>
#include <string>
#include <vector>

namespace keyb2 {

struct ScoreRequest {
    std::string query_text;
    std::string doc_text;
};

struct RankedDoc {
    std::string doc_id;
    double score = 0.0;
    int rank = 0;
};

struct RerankResult {
    std::string query_id;
    std::vector<RankedDoc> ranking; // ranks 1..n, scores non-increasing
    int missing_docs = 0;           // candidates absent from the corpus
};

// Documents missing from the corpus (and zero-block documents under MaxP)
// sort last with this finite sentinel, keeping run outputs writable.
inline constexpr double kMissingDocScore = -1e30;

// Backend boundary for the final relevance score; the decoder + linear head
// lives behind it permanently. Implementations must be safe for concurrent
// score_batch calls from different queries.
class RelevanceBackend {
public:
    virtual ~RelevanceBackend() = default;
    virtual std::vector<double> score_batch(const std::vector<ScoreRequest>& requests) = 0;
};

// Deterministic offline stand-in: sum over distinct shared words of
// idf(w) * min(tf_query(w), 4).
double mock_score(const std::string& query_text, const std::string& doc_text,
                  const IdfTable& idf, Lang lang = Lang::en, const ZhDict* dict = nullptr);

class MockBackend : public RelevanceBackend {
public:
    explicit MockBackend(IdfTable idf, Lang lang = Lang::en, const ZhDict* dict = nullptr)
        : idf_(std::move(idf)), lang_(lang), dict_(dict) {}

    std::vector<double> score_batch(const std::vector<ScoreRequest>& requests) override;

private:
    IdfTable idf_;
    Lang lang_;
    const ZhDict* dict_;
};

// One batched /v1/score call, order-aligned, all scores finite.
std::vector<double> remote_score(const std::vector<ScoreRequest>& requests,
                                 ScoringClient& client);

class RemoteBackend : public RelevanceBackend {
public:
    explicit RemoteBackend(ScoringClient client) : client_(std::move(client)) {}

    std::vector<double> score_batch(const std::vector<ScoreRequest>& requests) override {
        return remote_score(requests, client_);
    }

private:
    ScoringClient client_;
};

enum class SelectorKind { bm25, cross, bi };

struct RerankConfig {
    SegmentationConfig seg;
    AssemblyConfig assembly;
    Bm25Params bm25;
    Similarity similarity = Similarity::dot;
    Lang query_lang = Lang::en;
    const ZhDict* dict = nullptr;
};

// Resources for the configured selector; only the relevant members are read.
struct SelectorContext {
    const IdfTable* idf = nullptr;      // bm25
    ScoringClient* scorer = nullptr;    // cross
    EmbeddingClient* embedder = nullptr; // bi
    EmbeddingStore* store = nullptr;     // bi
};

// The select-then-combine-then-rerank pipeline: segment each candidate,
// pre-rank its blocks, keep the budgeted top blocks in document order, and
// score the assembled excerpt once with the backend. Stable on score ties
// (input run order); backend failure fails the whole query.
RerankResult keyb2_rerank(const Query& query, const std::vector<RunEntry>& candidates,
                          const Corpus& corpus, SelectorKind selector,
                          const SelectorContext& context, RelevanceBackend& backend,
                          const RerankConfig& cfg = {});

enum class Aggregation { max, avg };

// Baseline: every block of the same segmentation is scored separately and the
// document score is the max or the mean of its block scores.
RerankResult maxp_rerank(const Query& query, const std::vector<RunEntry>& candidates,
                         const Corpus& corpus, RelevanceBackend& backend, Aggregation agg,
                         const RerankConfig& cfg = {});

// Baseline: score the first max_block_tokens_total document tokens only.
RerankResult firstp_rerank(const Query& query, const std::vector<RunEntry>& candidates,
                           const Corpus& corpus, RelevanceBackend& backend,
                           const RerankConfig& cfg = {});

// Result rows as run entries (tag applied), ready for write_run.
std::vector<RunEntry> to_run_entries(const RerankResult& result, const std::string& tag);

} // namespace keyb2
