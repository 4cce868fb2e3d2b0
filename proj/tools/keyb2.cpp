// keyb2: long-document reranking toolkit.
//
// Subcommands: build-idf, segment, assemble, rerank, eval, ttest, attn, cost,
// mock-server. Exit codes: 0 success, 1 usage error, 2 data error, 3 remote
// service error. Diagnostics go to stderr; data goes to files or stdout.

#include "keyb2/attnlab.hpp"
#include "keyb2/corpus.hpp"
#include "keyb2/costmodel.hpp"
#include "keyb2/errors.hpp"
#include "keyb2/evalx.hpp"
#include "keyb2/mock_server.hpp"
#include "keyb2/rerank.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace {

using namespace keyb2;
using nlohmann::json;

struct GlobalConfig {
    std::string selector = "bm25";
    std::string backend = "mock";
    std::string endpoint = "http://127.0.0.1:8080";
    int budget = 480;
    int query_max = 32;
    int block_max = 63;
    double k1 = 0.9;
    double b = 0.4;
    std::string similarity = "dot";
    std::string lang = "en";
    std::string ndcg_gain = "exp";
    int binarize_threshold = 1;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string zh_dict_path;
};

Lang parse_lang(const std::string& s) {
    if (s == "en") return Lang::en;
    if (s == "zh") return Lang::zh;
    throw UsageError("unknown lang '" + s + "'");
}

SelectorKind parse_selector(const std::string& s) {
    if (s == "bm25") return SelectorKind::bm25;
    if (s == "cross") return SelectorKind::cross;
    if (s == "bi") return SelectorKind::bi;
    throw UsageError("unknown selector '" + s + "'");
}

Similarity parse_similarity(const std::string& s) {
    if (s == "dot") return Similarity::dot;
    if (s == "cosine") return Similarity::cosine;
    throw UsageError("unknown similarity '" + s + "'");
}

NdcgGain parse_gain(const std::string& s) {
    if (s == "exp") return NdcgGain::exp;
    if (s == "linear") return NdcgGain::linear;
    throw UsageError("unknown ndcg gain '" + s + "'");
}

void validate_config(const GlobalConfig& cfg) {
    parse_selector(cfg.selector);
    parse_similarity(cfg.similarity);
    parse_lang(cfg.lang);
    parse_gain(cfg.ndcg_gain);
    if (cfg.backend != "mock" && cfg.backend != "remote")
        throw UsageError("unknown backend '" + cfg.backend + "'");
    if (cfg.budget < 1) throw UsageError("budget must be >= 1");
    if (cfg.query_max < 0) throw UsageError("query-max must be >= 0");
    if (cfg.block_max < 1) throw UsageError("block-max must be >= 1");
    Bm25Params{cfg.k1, cfg.b}.validate();
    if (cfg.binarize_threshold < 0) throw UsageError("binarize-threshold must be >= 0");
    if (cfg.jobs < 1) throw UsageError("jobs must be >= 1");
}

// The effective config goes to stderr so runs are reproducible from logs.
void print_effective_config(const GlobalConfig& cfg) {
    std::cerr << "config: selector=" << cfg.selector << " backend=" << cfg.backend
              << " endpoint=" << cfg.endpoint << " budget=" << cfg.budget
              << " query_max=" << cfg.query_max << " block_max=" << cfg.block_max
              << " k1=" << cfg.k1 << " b=" << cfg.b << " similarity=" << cfg.similarity
              << " lang=" << cfg.lang << " ndcg_gain=" << cfg.ndcg_gain
              << " binarize_threshold=" << cfg.binarize_threshold << " seed=" << cfg.seed
              << " jobs=" << cfg.jobs << '\n';
}

RerankConfig make_rerank_config(const GlobalConfig& cfg, const ZhDict* dict) {
    RerankConfig rc;
    rc.seg.max_block_tokens = cfg.block_max;
    rc.assembly.max_block_tokens_total = cfg.budget;
    rc.assembly.query_max_tokens = cfg.query_max;
    rc.bm25 = {cfg.k1, cfg.b};
    rc.similarity = parse_similarity(cfg.similarity);
    rc.query_lang = parse_lang(cfg.lang);
    rc.dict = dict;
    return rc;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    return out;
}

// Writes either to a file or to stdout when path is empty.
class OutputTarget {
public:
    explicit OutputTarget(const std::string& path) {
        if (!path.empty()) {
            file_ = open_output(path);
            out_ = &file_;
        } else {
            out_ = &std::cout;
        }
    }
    std::ostream& stream() { return *out_; }

private:
    std::ofstream file_;
    std::ostream* out_ = nullptr;
};

std::string format_score(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------------------
// build-idf

struct BuildIdfArgs {
    std::string corpus_path;
    std::string out_path;
    std::string df_unit = "doc";
};

int cmd_build_idf(const BuildIdfArgs& args, const GlobalConfig& cfg, const ZhDict* dict) {
    IdfOptions opts;
    if (args.df_unit == "doc")
        opts.df_unit = DfUnit::document;
    else if (args.df_unit == "block")
        opts.df_unit = DfUnit::block;
    else
        throw UsageError("unknown df-unit '" + args.df_unit + "'");
    opts.dict = dict;
    opts.seg.max_block_tokens = cfg.block_max;

    const std::vector<Document> docs = load_corpus(args.corpus_path);
    const IdfTable table = build_idf(docs, opts);
    save_idf(table, args.out_path);
    std::cerr << "wrote IDF table for " << table.doc_count << " "
              << (opts.df_unit == DfUnit::document ? "documents" : "blocks") << " ("
              << table.idf.size() << " terms) to " << args.out_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// segment

struct SegmentArgs {
    std::string corpus_path;
    std::string out_path;
};

int cmd_segment(const SegmentArgs& args, const GlobalConfig& cfg) {
    SegmentationConfig seg;
    seg.max_block_tokens = cfg.block_max;

    OutputTarget out(args.out_path);
    for (const Document& doc : load_corpus(args.corpus_path)) {
        json line;
        line["doc_id"] = doc.id;
        json blocks = json::array();
        for (const Block& blk : segment(unit_tokenize(doc.text, doc.lang), seg))
            blocks.push_back({{"index", blk.index}, {"text", blk.text}, {"length", blk.length}});
        line["blocks"] = std::move(blocks);
        out.stream() << line.dump() << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// assemble

struct AssembleArgs {
    std::string queries_path;
    std::string run_path;
    std::string corpus_path;
    std::string idf_path;
    std::string out_path;
    std::string store_path;
};

int cmd_assemble(const AssembleArgs& args, const GlobalConfig& cfg, const ZhDict* dict) {
    const RerankConfig rc = make_rerank_config(cfg, dict);
    const SelectorKind selector = parse_selector(cfg.selector);

    IdfTable idf;
    if (selector == SelectorKind::bm25) {
        if (args.idf_path.empty()) throw UsageError("bm25 selector requires --idf");
        idf = load_idf(args.idf_path);
    }
    std::optional<ScoringClient> scorer;
    std::optional<EmbeddingClient> embedder;
    EmbeddingStore store;
    if (selector == SelectorKind::cross) scorer.emplace(cfg.endpoint);
    if (selector == SelectorKind::bi) {
        embedder.emplace(cfg.endpoint);
        if (!args.store_path.empty() && std::ifstream(args.store_path).good())
            store = store_load(args.store_path);
    }

    const Corpus corpus(load_corpus(args.corpus_path));
    const Run run = load_run(args.run_path);
    std::map<std::string, std::string> query_texts;
    for (const Query& q : load_queries(args.queries_path)) query_texts[q.id] = q.text;

    OutputTarget out(args.out_path);
    for (const auto& [query_id, entries] : run) {
        auto qt = query_texts.find(query_id);
        if (qt == query_texts.end())
            throw DataError("run query " + query_id + " is missing from the query file");
        const Query query{query_id, qt->second};
        const TokenSeq query_tokens = unit_tokenize(query.text, rc.query_lang);

        for (const RunEntry& e : entries) {
            const Document* doc = corpus.find(e.doc_id);
            if (!doc) {
                std::cerr << "warning: doc " << e.doc_id << " not in corpus; skipped\n";
                continue;
            }
            const std::vector<Block> blocks = segment(unit_tokenize(doc->text, doc->lang), rc.seg);
            std::vector<ScoredBlock> scored;
            switch (selector) {
            case SelectorKind::bm25:
                scored = select_bm25(query, blocks, idf, rc.bm25, doc->lang, dict);
                break;
            case SelectorKind::cross:
                scored = select_cross(query, blocks, *scorer);
                break;
            case SelectorKind::bi:
                scored = select_bi(query, doc->id, blocks, *embedder, store, rc.similarity);
                break;
            }
            const std::vector<int> chosen =
                pick_top_blocks(scored, rc.assembly.max_block_tokens_total);
            const AssembledInput assembled = assemble(query_tokens, blocks, chosen, rc.assembly);

            json line;
            line["query_id"] = query_id;
            line["doc_id"] = e.doc_id;
            line["prompt"] = render_prompt(assembled);
            json chosen_json = json::array();
            for (const auto& [index, kept] : assembled.chosen)
                chosen_json.push_back({{"index", index}, {"kept", kept}});
            line["chosen"] = std::move(chosen_json);
            line["total"] = assembled.total_block_tokens;
            out.stream() << line.dump() << '\n';
        }
    }
    if (selector == SelectorKind::bi && !args.store_path.empty()) store_save(store, args.store_path);
    return 0;
}

// ---------------------------------------------------------------------------
// rerank

struct RerankArgs {
    std::string run_path;
    std::string corpus_path;
    std::string queries_path;
    std::string out_path;
    std::string idf_path;
    std::string store_path;
    std::string mode = "keyb2";
    std::string tag = "keyb2";
};

int cmd_rerank(const RerankArgs& args, const GlobalConfig& cfg, const ZhDict* dict) {
    const RerankConfig rc = make_rerank_config(cfg, dict);
    const SelectorKind selector = parse_selector(cfg.selector);

    IdfTable idf;
    const bool needs_idf =
        (args.mode == "keyb2" && selector == SelectorKind::bm25) || cfg.backend == "mock";
    if (needs_idf) {
        if (args.idf_path.empty())
            throw UsageError("--idf is required for the bm25 selector and the mock backend");
        idf = load_idf(args.idf_path);
    }

    const Corpus corpus(load_corpus(args.corpus_path));
    const Run run = load_run(args.run_path);
    std::map<std::string, std::string> query_texts;
    for (const Query& q : load_queries(args.queries_path)) query_texts[q.id] = q.text;

    EmbeddingStore store;
    if (!args.store_path.empty() && std::ifstream(args.store_path).good())
        store = store_load(args.store_path);

    struct QueryTask {
        const std::string* query_id;
        const std::vector<RunEntry>* entries;
        std::vector<RunEntry> result;
        std::exception_ptr error;
    };
    std::vector<QueryTask> tasks;
    tasks.reserve(run.size());
    for (const auto& [query_id, entries] : run) tasks.push_back({&query_id, &entries, {}, {}});

    // Per-thread clients/backends; the embedding store is shared only in the
    // single-job path (bi selector misses mutate it).
    const int jobs = (selector == SelectorKind::bi) ? 1 : cfg.jobs;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        std::optional<ScoringClient> selector_scorer;
        std::optional<EmbeddingClient> embedder;
        if (selector == SelectorKind::cross) selector_scorer.emplace(cfg.endpoint);
        if (selector == SelectorKind::bi) embedder.emplace(cfg.endpoint);
        std::unique_ptr<RelevanceBackend> backend;
        if (cfg.backend == "mock")
            backend = std::make_unique<MockBackend>(idf, rc.query_lang, dict);
        else
            backend = std::make_unique<RemoteBackend>(ScoringClient(cfg.endpoint));

        SelectorContext context;
        context.idf = &idf;
        if (selector_scorer) context.scorer = &*selector_scorer;
        if (embedder) context.embedder = &*embedder;
        context.store = &store;

        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) break;
            QueryTask& task = tasks[i];
            try {
                auto qt = query_texts.find(*task.query_id);
                if (qt == query_texts.end())
                    throw DataError("run query " + *task.query_id +
                                    " is missing from the query file");
                const Query query{*task.query_id, qt->second};
                RerankResult result;
                if (args.mode == "keyb2")
                    result = keyb2_rerank(query, *task.entries, corpus, selector, context,
                                          *backend, rc);
                else if (args.mode == "maxp")
                    result = maxp_rerank(query, *task.entries, corpus, *backend,
                                         Aggregation::max, rc);
                else if (args.mode == "avgp")
                    result = maxp_rerank(query, *task.entries, corpus, *backend,
                                         Aggregation::avg, rc);
                else if (args.mode == "firstp")
                    result = firstp_rerank(query, *task.entries, corpus, *backend, rc);
                else
                    throw UsageError("unknown mode '" + args.mode + "'");
                if (result.missing_docs > 0)
                    std::cerr << "warning: query " << *task.query_id << ": "
                              << result.missing_docs << " candidates not in corpus\n";
                task.result = to_run_entries(result, args.tag);
            } catch (...) {
                task.error = std::current_exception();
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    Run output;
    for (QueryTask& task : tasks) {
        if (task.error) std::rethrow_exception(task.error);
        output[*task.query_id] = std::move(task.result);
    }
    write_run(output, args.out_path);
    if (selector == SelectorKind::bi && !args.store_path.empty()) store_save(store, args.store_path);
    std::cerr << "reranked " << output.size() << " queries to " << args.out_path << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// eval / ttest

struct EvalArgs {
    std::string run_path;
    std::string qrels_path;
    std::string metrics = "ndcg@10,map,p@10";
    std::string out_path;
};

std::vector<MetricSpec> parse_metric_list(const std::string& csv) {
    std::vector<MetricSpec> specs;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) specs.push_back(parse_metric(item));
    }
    if (specs.empty()) throw UsageError("no metrics given");
    return specs;
}

int cmd_eval(const EvalArgs& args, const GlobalConfig& cfg) {
    const std::vector<MetricSpec> metrics = parse_metric_list(args.metrics);
    const Run run = load_run(args.run_path);
    const Qrels qrels = load_qrels(args.qrels_path);
    if (qrels.duplicate_warnings > 0)
        std::cerr << "warning: " << qrels.duplicate_warnings << " duplicate qrels overridden\n";

    const MetricReport report =
        evaluate_run(run, qrels, metrics, parse_gain(cfg.ndcg_gain), cfg.binarize_threshold);
    if (report.skipped_queries > 0)
        std::cerr << "warning: " << report.skipped_queries
                  << " run queries have no qrels and were skipped\n";

    OutputTarget out(args.out_path);
    out.stream() << "query_id";
    for (const MetricSpec& m : metrics) out.stream() << '\t' << m.name;
    out.stream() << '\n';
    for (const auto& [query_id, row] : report.per_query) {
        out.stream() << query_id;
        for (const MetricSpec& m : metrics) out.stream() << '\t' << format_score(row.at(m.name));
        out.stream() << '\n';
    }
    out.stream() << "MEAN";
    for (const MetricSpec& m : metrics)
        out.stream() << '\t'
                     << format_score(report.mean.count(m.name) ? report.mean.at(m.name) : 0.0);
    out.stream() << '\n';
    return 0;
}

struct TTestArgs {
    std::string a_path;
    std::string b_path;
    std::string metric;
};

std::map<std::string, double> load_metric_column(const std::string& path,
                                                 const std::string& metric) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw DataError("empty metric table: " + path);
    std::vector<std::string> columns;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, '\t')) columns.push_back(col);
    }
    std::size_t target = 0;
    bool found = false;
    for (std::size_t i = 1; i < columns.size(); ++i) {
        if (columns[i] == metric) {
            target = i;
            found = true;
            break;
        }
    }
    if (!found) throw DataError("metric '" + metric + "' not found in " + path);

    std::map<std::string, double> values;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::vector<std::string> fields;
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        if (fields.size() != columns.size())
            throw ParseError("row has " + std::to_string(fields.size()) + " fields, header has " +
                                 std::to_string(columns.size()),
                             lineno);
        if (fields[0] == "MEAN") continue;
        values[fields[0]] = std::stod(fields[target]);
    }
    return values;
}

int cmd_ttest(const TTestArgs& args) {
    const auto a = load_metric_column(args.a_path, args.metric);
    const auto b = load_metric_column(args.b_path, args.metric);
    const TTestResult result = paired_t_test(a, b);
    std::cout << "t\t" << result.t << '\n';
    std::cout << "p\t" << result.p << '\n';
    std::cout << "significant_at_0.05\t" << (result.p <= 0.05 ? "yes" : "no") << '\n';
    return 0;
}

// ---------------------------------------------------------------------------
// attn

struct AttnArgs {
    std::vector<std::string> dumps;
    std::string list_path;
    std::string relevance_path;
    std::string chunks_path;
    std::string query_text;
    std::string out_path;
    std::string doc_path;
    std::string noise_path;
    std::string position = "after";
    int layer = -1;
    int head = -1;
    int chunk_size = 64;
    bool average_heads = false;
    std::string zero_variance = "zero";
};

std::vector<double> load_floats(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<double> values;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        values.push_back(std::stod(line));
    }
    return values;
}

std::vector<double> chunk_relevances(const AttnArgs& args, const GlobalConfig& cfg,
                                     std::size_t n_chunks) {
    if (!args.relevance_path.empty()) {
        std::vector<double> rel = load_floats(args.relevance_path);
        if (rel.size() != n_chunks)
            throw DataError("relevance file has " + std::to_string(rel.size()) +
                            " values for " + std::to_string(n_chunks) + " chunks");
        return rel;
    }
    if (!args.chunks_path.empty()) {
        if (args.query_text.empty())
            throw UsageError("--query is required when scoring chunks via the endpoint");
        std::ifstream in(args.chunks_path);
        if (!in) throw DataError("cannot open file: " + args.chunks_path);
        std::vector<ScorePair> pairs;
        std::string line;
        while (std::getline(in, line)) pairs.push_back({args.query_text, line});
        if (pairs.size() != n_chunks)
            throw DataError("chunk text file has " + std::to_string(pairs.size()) +
                            " lines for " + std::to_string(n_chunks) + " chunks");
        ScoringClient client(cfg.endpoint);
        return client.score(pairs);
    }
    throw UsageError("provide per-chunk relevances via --relevance or --chunks + --query");
}

// Per-chunk attention weights for one head, or averaged over heads per layer.
std::vector<double> weights_for(const AttentionDump& dump, int layer, int head,
                                const std::vector<std::vector<int>>& chunks,
                                bool average_heads) {
    std::vector<double> weights(chunks.size(), 0.0);
    if (!average_heads) {
        for (std::size_t c = 0; c < chunks.size(); ++c)
            weights[c] = chunk_attention_weight(dump.matrix(layer, head), dump.seq_len,
                                                chunks[c], dump.query_token_indices);
        return weights;
    }
    for (int h = 0; h < dump.n_heads; ++h)
        for (std::size_t c = 0; c < chunks.size(); ++c)
            weights[c] += chunk_attention_weight(dump.matrix(layer, h), dump.seq_len,
                                                 chunks[c], dump.query_token_indices);
    for (double& w : weights) w /= dump.n_heads;
    return weights;
}

int cmd_attn_aras(const AttnArgs& args, const GlobalConfig& cfg) {
    if (args.dumps.size() != 1) throw UsageError("attn aras expects exactly one --dump");
    if (args.layer < 0) throw UsageError("--layer is required");
    if (!args.average_heads && args.head < 0)
        throw UsageError("--head is required (or pass --average-heads)");

    const AttentionDump dump = load_dump(args.dumps[0]);
    const auto chunks = chunk_indices(dump.doc_token_indices, args.chunk_size);
    const std::vector<double> weights =
        weights_for(dump, args.layer, args.head, chunks, args.average_heads);
    const std::vector<double> relevances = chunk_relevances(args, cfg, chunks.size());

    OutputTarget out(args.out_path);
    out.stream() << "chunk\tattention_weight\trelevance\n";
    for (std::size_t c = 0; c < chunks.size(); ++c)
        out.stream() << c << '\t' << weights[c] << '\t' << relevances[c] << '\n';
    out.stream() << "ARAS\t" << aras(weights, relevances) << '\n';
    return 0;
}

// List file: one "dump_manifest<TAB>relevance_file" pair per line.
int cmd_attn_pcr(const AttnArgs& args) {
    if (args.list_path.empty()) throw UsageError("attn pcr requires --list");
    if (args.layer < 0) throw UsageError("--layer is required");
    if (!args.average_heads && args.head < 0)
        throw UsageError("--head is required (or pass --average-heads)");

    std::ifstream in(args.list_path);
    if (!in) throw DataError("cannot open file: " + args.list_path);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("expected manifest<TAB>relevance_file", lineno);
        const AttentionDump dump = load_dump(line.substr(0, tab));
        const auto chunks = chunk_indices(dump.doc_token_indices, args.chunk_size);
        std::vector<double> weights =
            weights_for(dump, args.layer, args.head, chunks, args.average_heads);
        std::vector<double> relevances = load_floats(line.substr(tab + 1));
        if (relevances.size() != chunks.size())
            throw DataError("relevance count mismatch on list line " + std::to_string(lineno));
        pairs.emplace_back(std::move(weights), std::move(relevances));
    }

    ZeroVariancePolicy policy;
    if (args.zero_variance == "zero")
        policy = ZeroVariancePolicy::as_zero;
    else if (args.zero_variance == "exclude")
        policy = ZeroVariancePolicy::exclude;
    else
        throw UsageError("--zero-variance must be zero or exclude");
    const AlignmentResult result = alignment_over_pairs(pairs, policy);
    if (result.skipped_pairs > 0)
        std::cerr << "warning: " << result.skipped_pairs << " pairs excluded\n";
    OutputTarget out(args.out_path);
    out.stream() << "pairs\t" << result.aras_per_pair.size() << '\n';
    out.stream() << "mean_aras\t" << result.mean_aras << '\n';
    out.stream() << "pcr\t" << result.pcr << '\n';
    return 0;
}

int cmd_attn_heatmap(const AttnArgs& args) {
    std::vector<std::string> manifest_paths = args.dumps;
    if (!args.list_path.empty()) {
        std::ifstream in(args.list_path);
        if (!in) throw DataError("cannot open file: " + args.list_path);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) manifest_paths.push_back(line);
    }
    if (manifest_paths.empty()) throw UsageError("attn heatmap requires dumps or --list");

    std::vector<AttentionDump> dumps;
    dumps.reserve(manifest_paths.size());
    for (const std::string& path : manifest_paths) dumps.push_back(load_dump(path));
    const auto heatmap = aggregate_heatmap(dumps);

    OutputTarget out(args.out_path);
    for (std::size_t l = 0; l < heatmap.size(); ++l) {
        for (std::size_t h = 0; h < heatmap[l].size(); ++h) {
            if (h > 0) out.stream() << ',';
            out.stream() << heatmap[l][h];
        }
        out.stream() << '\n';
    }
    return 0;
}

int cmd_attn_noise(const AttnArgs& args, const GlobalConfig& cfg) {
    if (args.doc_path.empty() || args.noise_path.empty())
        throw UsageError("attn noise requires --doc and --noise");
    auto read_all = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open file: " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const Lang lang = parse_lang(cfg.lang);
    const TokenSeq doc = unit_tokenize(read_all(args.doc_path), lang);
    const TokenSeq noise = unit_tokenize(read_all(args.noise_path), lang);
    NoisePosition position;
    if (args.position == "before")
        position = NoisePosition::before;
    else if (args.position == "after")
        position = NoisePosition::after;
    else
        throw UsageError("position must be before or after");

    const NoisedSeq result = insert_noise(doc, noise, position);
    OutputTarget out(args.out_path);
    out.stream() << "token\ttext\tbyte_start\tbyte_end\torigin\n";
    for (std::size_t i = 0; i < result.seq.tokens.size(); ++i) {
        const Token& t = result.seq.tokens[i];
        out.stream() << i << '\t' << t.text << '\t' << t.byte_start << '\t' << t.byte_end
                     << '\t'
                     << (result.origin[i] == TokenOrigin::relevant ? "relevant" : "noise")
                     << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------------------
// cost

struct CostArgs {
    long long tokens = 0;
    long long baseline = 0;
    std::string run_path;
    std::string corpus_path;
    std::string out_path;
};

int cmd_cost_estimate(const CostArgs& args) {
    std::optional<long long> baseline;
    if (args.baseline > 0) baseline = args.baseline;
    const CostEstimate est = estimate(args.tokens, baseline);
    OutputTarget out(args.out_path);
    out.stream() << "input_tokens\tattention_units\tbaseline_tokens\tratio\n";
    out.stream() << est.input_tokens << '\t' << est.attention_units << '\t';
    if (est.relative_to)
        out.stream() << *est.relative_to << '\t' << *est.ratio << '\n';
    else
        out.stream() << "-\t-\n";
    return 0;
}

int cmd_cost_report(const CostArgs& args, const GlobalConfig& cfg) {
    SegmentationConfig seg;
    seg.max_block_tokens = cfg.block_max;
    AssemblyConfig assembly;
    assembly.max_block_tokens_total = cfg.budget;
    assembly.query_max_tokens = cfg.query_max;

    const Corpus corpus(load_corpus(args.corpus_path));
    const Run run = load_run(args.run_path);
    const PipelineCostReport report = pipeline_report(run, corpus, seg, assembly);
    if (report.missing_docs > 0)
        std::cerr << "warning: " << report.missing_docs << " run docs not in corpus\n";

    OutputTarget out(args.out_path);
    out.stream() << "query_id\tdocs\tmean_full_tokens\tmean_assembled_tokens\tmean_ratio\n";
    auto emit = [&](const PipelineCostRow& row) {
        out.stream() << row.query_id << '\t' << row.docs << '\t' << row.mean_full_tokens
                     << '\t' << row.mean_assembled_tokens << '\t' << row.mean_ratio << '\n';
    };
    for (const PipelineCostRow& row : report.per_query) emit(row);
    emit(report.overall);
    return 0;
}

// ---------------------------------------------------------------------------
// mock-server

struct MockServerArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
    int dim = 64;
    std::string idf_path;
};

int cmd_mock_server(const MockServerArgs& args, const GlobalConfig& cfg) {
    MockServerConfig server_cfg;
    server_cfg.seed = cfg.seed;
    server_cfg.embed_dim = args.dim;
    server_cfg.lang = parse_lang(cfg.lang);
    IdfTable idf;
    if (!args.idf_path.empty()) idf = load_idf(args.idf_path);
    MockServer server(server_cfg, std::move(idf));
    std::cerr << "mock-server listening on " << args.host << ':' << args.port << '\n';
    server.run(args.host, args.port);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"KeyB2 long-document reranking toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Flat key=value config file");
    app.allow_config_extras(CLI::config_extras_mode::error);

    GlobalConfig cfg;
    app.add_option("--selector", cfg.selector, "Block selector: bm25, cross, bi")
        ->capture_default_str();
    app.add_option("--backend", cfg.backend, "Relevance backend: mock, remote")
        ->capture_default_str();
    app.add_option("--endpoint", cfg.endpoint, "Remote service base URL")
        ->capture_default_str();
    app.add_option("--budget", cfg.budget, "Combined block token budget (max_b_t)")
        ->capture_default_str();
    app.add_option("--query-max", cfg.query_max, "Query token cap")->capture_default_str();
    app.add_option("--block-max", cfg.block_max, "Max tokens per block (B)")
        ->capture_default_str();
    app.add_option("--k1", cfg.k1, "BM25 k1")->capture_default_str();
    app.add_option("--b", cfg.b, "BM25 b")->capture_default_str();
    app.add_option("--similarity", cfg.similarity, "Bi-encoder similarity: dot, cosine")
        ->capture_default_str();
    app.add_option("--lang", cfg.lang, "Query/noise language: en, zh")->capture_default_str();
    app.add_option("--ndcg-gain", cfg.ndcg_gain, "NDCG gain: exp, linear")
        ->capture_default_str();
    app.add_option("--binarize-threshold", cfg.binarize_threshold,
                   "Grade threshold for MAP/P@k relevance")
        ->capture_default_str();
    app.add_option("--seed", cfg.seed, "Seed for the mock-server embedding projection")
        ->capture_default_str();
    app.add_option("--jobs", cfg.jobs, "Per-query parallelism bound")->capture_default_str();
    app.add_option("--zh-dict", cfg.zh_dict_path, "Chinese word dictionary (one per line)");

    BuildIdfArgs build_idf_args;
    auto* build_idf_cmd = app.add_subcommand("build-idf", "Build a smoothed IDF table");
    build_idf_cmd->add_option("--corpus", build_idf_args.corpus_path, "JSONL corpus")
        ->required();
    build_idf_cmd->add_option("--out", build_idf_args.out_path, "Output IDF file")->required();
    build_idf_cmd->add_option("--df-unit", build_idf_args.df_unit,
                              "Count document frequency over: doc, block");

    SegmentArgs segment_args;
    auto* segment_cmd = app.add_subcommand("segment", "Segment documents into blocks");
    segment_cmd->add_option("--corpus", segment_args.corpus_path, "JSONL corpus")->required();
    segment_cmd->add_option("--out", segment_args.out_path, "Output JSONL (default stdout)");

    AssembleArgs assemble_args;
    auto* assemble_cmd =
        app.add_subcommand("assemble", "Emit budgeted excerpts for run candidates");
    assemble_cmd->add_option("--queries", assemble_args.queries_path, "Query TSV")->required();
    assemble_cmd->add_option("--run", assemble_args.run_path, "TREC run file")->required();
    assemble_cmd->add_option("--corpus", assemble_args.corpus_path, "JSONL corpus")->required();
    assemble_cmd->add_option("--idf", assemble_args.idf_path, "IDF table (bm25 selector)");
    assemble_cmd->add_option("--store", assemble_args.store_path, "Embedding store path (bi)");
    assemble_cmd->add_option("--out", assemble_args.out_path, "Output JSONL (default stdout)");

    RerankArgs rerank_args;
    auto* rerank_cmd = app.add_subcommand("rerank", "Rerank a candidate run");
    rerank_cmd->add_option("--run", rerank_args.run_path, "TREC run file")->required();
    rerank_cmd->add_option("--corpus", rerank_args.corpus_path, "JSONL corpus")->required();
    rerank_cmd->add_option("--queries", rerank_args.queries_path, "Query TSV")->required();
    rerank_cmd->add_option("--out", rerank_args.out_path, "Output run file")->required();
    rerank_cmd->add_option("--idf", rerank_args.idf_path,
                           "IDF table (bm25 selector / mock backend)");
    rerank_cmd->add_option("--store", rerank_args.store_path, "Embedding store path (bi)");
    rerank_cmd->add_option("--mode", rerank_args.mode, "keyb2, maxp, avgp, firstp");
    rerank_cmd->add_option("--tag", rerank_args.tag, "Run tag for the output");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a run against qrels");
    eval_cmd->add_option("--run", eval_args.run_path, "TREC run file")->required();
    eval_cmd->add_option("--qrels", eval_args.qrels_path, "Qrels file")->required();
    eval_cmd->add_option("--metrics", eval_args.metrics, "Comma list, e.g. ndcg@10,map,p@10");
    eval_cmd->add_option("--out", eval_args.out_path, "Output TSV (default stdout)");

    TTestArgs ttest_args;
    auto* ttest_cmd = app.add_subcommand("ttest", "Paired t-test between two eval tables");
    ttest_cmd->add_option("--a", ttest_args.a_path, "First eval TSV")->required();
    ttest_cmd->add_option("--b", ttest_args.b_path, "Second eval TSV")->required();
    ttest_cmd->add_option("--metric", ttest_args.metric, "Metric column name")->required();

    AttnArgs attn_args;
    auto* attn_cmd = app.add_subcommand("attn", "Attention-relevance analysis");
    attn_cmd->require_subcommand(1);
    auto add_attn_common = [&](CLI::App* sub) {
        sub->add_option("--layer", attn_args.layer, "Layer index");
        sub->add_option("--head", attn_args.head, "Head index");
        sub->add_option("--chunk-size", attn_args.chunk_size, "Chunk size in tokens");
        sub->add_flag("--average-heads", attn_args.average_heads,
                      "Average weights over all heads of the layer");
        sub->add_option("--out", attn_args.out_path, "Output file (default stdout)");
    };
    auto* aras_cmd = attn_cmd->add_subcommand("aras", "Per-chunk weights and ARAS");
    aras_cmd->add_option("--dump", attn_args.dumps, "Dump manifest")->expected(1);
    aras_cmd->add_option("--relevance", attn_args.relevance_path,
                         "Per-chunk relevance scores, one per line");
    aras_cmd->add_option("--chunks", attn_args.chunks_path,
                         "Chunk texts (one per line) to score via --endpoint");
    aras_cmd->add_option("--query", attn_args.query_text, "Query text for chunk scoring");
    add_attn_common(aras_cmd);
    auto* pcr_cmd = attn_cmd->add_subcommand("pcr", "Mean ARAS and PCR over many pairs");
    pcr_cmd->add_option("--list", attn_args.list_path,
                        "File of manifest<TAB>relevance_file lines")
        ->required();
    pcr_cmd->add_option("--zero-variance", attn_args.zero_variance,
                        "Zero rank variance handling: zero (ARAS 0) or exclude");
    add_attn_common(pcr_cmd);
    auto* heatmap_cmd = attn_cmd->add_subcommand("heatmap", "Aggregated layer x head heatmap");
    heatmap_cmd->add_option("dumps", attn_args.dumps, "Dump manifests");
    heatmap_cmd->add_option("--list", attn_args.list_path, "File of manifest paths");
    heatmap_cmd->add_option("--out", attn_args.out_path, "Output CSV (default stdout)");
    auto* noise_cmd = attn_cmd->add_subcommand("noise", "Insert noise tokens around a document");
    noise_cmd->add_option("--doc", attn_args.doc_path, "Document text file")->required();
    noise_cmd->add_option("--noise", attn_args.noise_path, "Noise text file")->required();
    noise_cmd->add_option("--position", attn_args.position, "before or after");
    noise_cmd->add_option("--out", attn_args.out_path, "Output TSV (default stdout)");

    CostArgs cost_args;
    auto* cost_cmd = app.add_subcommand("cost", "Quadratic attention-cost model");
    cost_cmd->require_subcommand(1);
    auto* cost_estimate_cmd = cost_cmd->add_subcommand("estimate", "Single length estimate");
    cost_estimate_cmd->add_option("--tokens", cost_args.tokens, "Input token count")
        ->required();
    cost_estimate_cmd->add_option("--baseline", cost_args.baseline, "Baseline token count");
    cost_estimate_cmd->add_option("--out", cost_args.out_path, "Output TSV (default stdout)");
    auto* cost_report_cmd = cost_cmd->add_subcommand("report", "Token accounting over a run");
    cost_report_cmd->add_option("--run", cost_args.run_path, "TREC run file")->required();
    cost_report_cmd->add_option("--corpus", cost_args.corpus_path, "JSONL corpus")->required();
    cost_report_cmd->add_option("--out", cost_args.out_path, "Output TSV (default stdout)");

    MockServerArgs mock_args;
    auto* mock_cmd = app.add_subcommand("mock-server", "Serve /v1/score and /v1/embed");
    mock_cmd->add_option("--host", mock_args.host, "Bind host");
    mock_cmd->add_option("--port", mock_args.port, "Bind port");
    mock_cmd->add_option("--dim", mock_args.dim, "Embedding dimension");
    mock_cmd->add_option("--idf", mock_args.idf_path, "IDF table for mock scoring");

    // Global options remain usable after the subcommand name.
    for (CLI::App* sub : app.get_subcommands({})) {
        sub->fallthrough();
        for (CLI::App* nested : sub->get_subcommands({})) nested->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        validate_config(cfg);
        print_effective_config(cfg);
        ZhDict dict;
        const ZhDict* dict_ptr = nullptr;
        if (!cfg.zh_dict_path.empty()) {
            dict = ZhDict::from_file(cfg.zh_dict_path);
            dict_ptr = &dict;
        }

        if (build_idf_cmd->parsed()) return cmd_build_idf(build_idf_args, cfg, dict_ptr);
        if (segment_cmd->parsed()) return cmd_segment(segment_args, cfg);
        if (assemble_cmd->parsed()) return cmd_assemble(assemble_args, cfg, dict_ptr);
        if (rerank_cmd->parsed()) return cmd_rerank(rerank_args, cfg, dict_ptr);
        if (eval_cmd->parsed()) return cmd_eval(eval_args, cfg);
        if (ttest_cmd->parsed()) return cmd_ttest(ttest_args);
        if (attn_cmd->parsed()) {
            if (aras_cmd->parsed()) return cmd_attn_aras(attn_args, cfg);
            if (pcr_cmd->parsed()) return cmd_attn_pcr(attn_args);
            if (heatmap_cmd->parsed()) return cmd_attn_heatmap(attn_args);
            if (noise_cmd->parsed()) return cmd_attn_noise(attn_args, cfg);
        }
        if (cost_cmd->parsed()) {
            if (cost_estimate_cmd->parsed()) return cmd_cost_estimate(cost_args);
            if (cost_report_cmd->parsed()) return cmd_cost_report(cost_args, cfg);
        }
        if (mock_cmd->parsed()) return cmd_mock_server(mock_args, cfg);
        std::cerr << "error: no subcommand\n";
        return 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const RemoteError& e) {
        std::cerr << "remote service error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
