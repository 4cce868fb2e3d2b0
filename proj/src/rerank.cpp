#include "keyb2/rerank.hpp"

#include "keyb2/errors.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace keyb2 {

double mock_score(const std::string& query_text, const std::string& doc_text,
                  const IdfTable& idf, Lang lang, const ZhDict* dict) {
    const std::vector<std::string> query_words = word_tokenize(query_text, lang, dict);
    if (query_words.empty()) return 0.0;
    std::unordered_map<std::string, int> query_tf;
    for (const std::string& w : query_words) ++query_tf[w];

    std::unordered_set<std::string> doc_words;
    for (const std::string& w : word_tokenize(doc_text, lang, dict)) doc_words.insert(w);

    double score = 0.0;
    std::unordered_set<std::string> counted;
    for (const auto& [word, tf] : query_tf) {
        if (!doc_words.count(word) || !counted.insert(word).second) continue;
        score += idf.lookup(word) * static_cast<double>(std::min(tf, 4));
    }
    return score;
}

std::vector<double> MockBackend::score_batch(const std::vector<ScoreRequest>& requests) {
    std::vector<double> scores;
    scores.reserve(requests.size());
    for (const ScoreRequest& r : requests)
        scores.push_back(mock_score(r.query_text, r.doc_text, idf_, lang_, dict_));
    return scores;
}

std::vector<double> remote_score(const std::vector<ScoreRequest>& requests,
                                 ScoringClient& client) {
    if (requests.empty()) return {};
    std::vector<ScorePair> pairs;
    pairs.reserve(requests.size());
    for (const ScoreRequest& r : requests) pairs.push_back({r.query_text, r.doc_text});
    // ScoringClient validates count alignment and finiteness.
    return client.score(pairs);
}

namespace {

// Shared tail: order candidates by score descending, stable on ties so the
// input run order survives, then assign ranks 1..n.
RerankResult finalize_ranking(const Query& query, const std::vector<RunEntry>& candidates,
                              std::vector<double> scores, int missing_docs) {
    RerankResult result;
    result.query_id = query.id;
    result.missing_docs = missing_docs;

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    result.ranking.reserve(candidates.size());
    for (std::size_t out = 0; out < order.size(); ++out)
        result.ranking.push_back(
            {candidates[order[out]].doc_id, scores[order[out]], static_cast<int>(out) + 1});
    return result;
}

std::vector<ScoredBlock> run_selector(const Query& query, const std::string& doc_id,
                                      const std::vector<Block>& blocks, SelectorKind kind,
                                      const SelectorContext& context,
                                      const RerankConfig& cfg, Lang doc_lang) {
    switch (kind) {
    case SelectorKind::bm25:
        if (!context.idf) throw UsageError("bm25 selector requires an IdfTable");
        return select_bm25(query, blocks, *context.idf, cfg.bm25, doc_lang, cfg.dict);
    case SelectorKind::cross:
        if (!context.scorer) throw UsageError("cross selector requires a scoring endpoint");
        return select_cross(query, blocks, *context.scorer);
    case SelectorKind::bi:
        if (!context.embedder || !context.store)
            throw UsageError("bi selector requires an embedding endpoint and a store");
        return select_bi(query, doc_id, blocks, *context.embedder, *context.store,
                         cfg.similarity);
    }
    throw UsageError("unknown selector");
}

} // namespace

RerankResult keyb2_rerank(const Query& query, const std::vector<RunEntry>& candidates,
                          const Corpus& corpus, SelectorKind selector,
                          const SelectorContext& context, RelevanceBackend& backend,
                          const RerankConfig& cfg) {
    const TokenSeq query_tokens = unit_tokenize(query.text, cfg.query_lang);

    std::vector<double> scores(candidates.size(), kMissingDocScore);
    std::vector<ScoreRequest> requests;
    std::vector<std::size_t> request_owner;
    int missing = 0;

    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Document* doc = corpus.find(candidates[i].doc_id);
        if (!doc) {
            ++missing;
            continue;
        }
        const TokenSeq seq = unit_tokenize(doc->text, doc->lang);
        const std::vector<Block> blocks = segment(seq, cfg.seg);
        const std::vector<ScoredBlock> scored =
            run_selector(query, doc->id, blocks, selector, context, cfg, doc->lang);
        const std::vector<int> chosen =
            pick_top_blocks(scored, cfg.assembly.max_block_tokens_total);
        AssembledInput assembled = assemble(query_tokens, blocks, chosen, cfg.assembly);
        requests.push_back({std::move(assembled.query_text), std::move(assembled.excerpt_text)});
        request_owner.push_back(i);
    }

    const std::vector<double> backend_scores = backend.score_batch(requests);
    if (backend_scores.size() != requests.size())
        throw ProtocolError("backend returned " + std::to_string(backend_scores.size()) +
                            " scores for " + std::to_string(requests.size()) + " requests");
    for (std::size_t r = 0; r < requests.size(); ++r) {
        if (!std::isfinite(backend_scores[r]))
            throw ProtocolError("backend returned a non-finite score for doc " +
                                candidates[request_owner[r]].doc_id);
        scores[request_owner[r]] = backend_scores[r];
    }

    return finalize_ranking(query, candidates, std::move(scores), missing);
}

RerankResult maxp_rerank(const Query& query, const std::vector<RunEntry>& candidates,
                         const Corpus& corpus, RelevanceBackend& backend, Aggregation agg,
                         const RerankConfig& cfg) {
    const TokenSeq query_tokens = unit_tokenize(query.text, cfg.query_lang);
    const std::string query_text =
        truncate_tokens(query_tokens, static_cast<std::size_t>(cfg.assembly.query_max_tokens))
            .source_text;

    std::vector<double> scores(candidates.size(), kMissingDocScore);
    int missing = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Document* doc = corpus.find(candidates[i].doc_id);
        if (!doc) {
            ++missing;
            continue;
        }
        const std::vector<Block> blocks = segment(unit_tokenize(doc->text, doc->lang), cfg.seg);
        if (blocks.empty()) continue; // zero-block document keeps the sentinel

        std::vector<ScoreRequest> requests;
        requests.reserve(blocks.size());
        for (const Block& blk : blocks) requests.push_back({query_text, blk.text});
        const std::vector<double> block_scores = backend.score_batch(requests);
        if (block_scores.size() != blocks.size())
            throw ProtocolError("backend returned " + std::to_string(block_scores.size()) +
                                " scores for " + std::to_string(blocks.size()) + " blocks");
        for (double s : block_scores)
            if (!std::isfinite(s))
                throw ProtocolError("backend returned a non-finite block score for doc " +
                                    doc->id);

        if (agg == Aggregation::max) {
            scores[i] = *std::max_element(block_scores.begin(), block_scores.end());
        } else {
            double sum = 0.0;
            for (double s : block_scores) sum += s;
            scores[i] = sum / static_cast<double>(block_scores.size());
        }
    }

    return finalize_ranking(query, candidates, std::move(scores), missing);
}

RerankResult firstp_rerank(const Query& query, const std::vector<RunEntry>& candidates,
                           const Corpus& corpus, RelevanceBackend& backend,
                           const RerankConfig& cfg) {
    const TokenSeq query_tokens = unit_tokenize(query.text, cfg.query_lang);
    const std::string query_text =
        truncate_tokens(query_tokens, static_cast<std::size_t>(cfg.assembly.query_max_tokens))
            .source_text;

    std::vector<double> scores(candidates.size(), kMissingDocScore);
    std::vector<ScoreRequest> requests;
    std::vector<std::size_t> request_owner;
    int missing = 0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Document* doc = corpus.find(candidates[i].doc_id);
        if (!doc) {
            ++missing;
            continue;
        }
        const TokenSeq head = truncate_tokens(
            unit_tokenize(doc->text, doc->lang),
            static_cast<std::size_t>(cfg.assembly.max_block_tokens_total));
        requests.push_back({query_text, head.source_text});
        request_owner.push_back(i);
    }

    const std::vector<double> backend_scores = backend.score_batch(requests);
    if (backend_scores.size() != requests.size())
        throw ProtocolError("backend returned " + std::to_string(backend_scores.size()) +
                            " scores for " + std::to_string(requests.size()) + " requests");
    for (std::size_t r = 0; r < requests.size(); ++r)
        scores[request_owner[r]] = backend_scores[r];

    return finalize_ranking(query, candidates, std::move(scores), missing);
}

std::vector<RunEntry> to_run_entries(const RerankResult& result, const std::string& tag) {
    std::vector<RunEntry> entries;
    entries.reserve(result.ranking.size());
    for (const RankedDoc& d : result.ranking)
        entries.push_back({result.query_id, d.doc_id, d.rank, d.score, tag});
    return entries;
}

} // namespace keyb2
