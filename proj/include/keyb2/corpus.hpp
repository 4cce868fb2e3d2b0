#pragma once

#include "keyb2/tokenize.hpp"

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace keyb2 {

struct Document {
    std::string id;
    std::string text;
    Lang lang = Lang::en;
};

struct Query {
    std::string id;
    std::string text;
};

struct QrelEntry {
    std::string query_id;
    std::string doc_id;
    int grade = 0;
};

// One line of a 6-column TREC run: "qid Q0 docid rank score tag".
struct RunEntry {
    std::string query_id;
    std::string doc_id;
    int rank = 0;
    double score = 0.0;
    std::string tag;

    bool operator==(const RunEntry&) const = default;
};

struct Triplet {
    std::string query_id;
    std::string positive_doc_id;
    std::string negative_doc_id;
};

// query_id -> entries sorted by rank ascending.
using Run = std::map<std::string, std::vector<RunEntry>>;

struct Qrels {
    // query_id -> doc_id -> grade
    std::map<std::string, std::map<std::string, int>> by_query;
    int duplicate_warnings = 0;

    const std::map<std::string, int>* for_query(const std::string& query_id) const {
        auto it = by_query.find(query_id);
        return it == by_query.end() ? nullptr : &it->second;
    }
};

// Immutable after construction; id lookups are O(1).
class Corpus {
public:
    Corpus() = default;
    explicit Corpus(std::vector<Document> docs);

    const Document* find(const std::string& id) const;
    const std::vector<Document>& documents() const { return docs_; }
    std::size_t size() const { return docs_.size(); }

private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> index_;
};

// JSONL corpus, one {"id", "text", "lang"?} object per line (lang defaults
// to en). Order preserving; duplicate ids and malformed lines are errors.
std::vector<Document> load_corpus(const std::string& path);

// 2-column TSV "qid<TAB>text".
std::vector<Query> load_queries(const std::string& path);

// Ranks must be contiguous 1..n per query and scores non-increasing in rank.
Run load_run(const std::string& path);

// "qid 0 docid grade". Later duplicates override earlier ones and are
// counted in duplicate_warnings. Negative grades are errors.
Qrels load_qrels(const std::string& path);

// Validates RunEntry invariants before writing anything; scores printed with
// 6 decimal places; lines ordered by (query_id, rank). load_run(write_run(x))
// round-trips bit-exactly.
void write_run(const Run& run, const std::string& path);
void write_run(const std::vector<RunEntry>& entries, const std::string& path);

// 3-column TSV "qid<TAB>positive<TAB>negative".
std::vector<Triplet> load_triplets(const std::string& path);
void write_triplets(const std::vector<Triplet>& triplets, const std::string& path);

} // namespace keyb2
