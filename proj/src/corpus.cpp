#include "keyb2/corpus.hpp"

#include "keyb2/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace keyb2 {

using nlohmann::json;

namespace {

std::ifstream open_or_throw(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    return in;
}

// getline that tolerates trailing \r from CRLF files.
bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

} // namespace

Corpus::Corpus(std::vector<Document> docs) : docs_(std::move(docs)) {
    index_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        auto [it, inserted] = index_.emplace(docs_[i].id, i);
        if (!inserted) throw DataError("duplicate document id: " + docs_[i].id);
    }
}

const Document* Corpus::find(const std::string& id) const {
    auto it = index_.find(id);
    return it == index_.end() ? nullptr : &docs_[it->second];
}

std::vector<Document> load_corpus(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Document> docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (read_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
        }
        if (!obj.is_object() || !obj.contains("id") || !obj.contains("text"))
            throw ParseError("corpus line must be an object with id and text", lineno);
        Document doc;
        doc.id = obj.at("id").get<std::string>();
        doc.text = obj.at("text").get<std::string>();
        if (obj.contains("lang")) {
            std::string lang = obj.at("lang").get<std::string>();
            if (lang == "en")
                doc.lang = Lang::en;
            else if (lang == "zh")
                doc.lang = Lang::zh;
            else
                throw ParseError("unknown lang '" + lang + "'", lineno);
        }
        if (doc.id.empty()) throw ParseError("empty document id", lineno);
        if (!seen.insert(doc.id).second)
            throw DataError("duplicate document id: " + doc.id);
        docs.push_back(std::move(doc));
    }
    return docs;
}

std::vector<Query> load_queries(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Query> queries;
    std::string line;
    std::size_t lineno = 0;
    while (read_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ParseError("expected qid<TAB>text", lineno);
        Query q{line.substr(0, tab), line.substr(tab + 1)};
        if (q.id.empty()) throw ParseError("empty query id", lineno);
        if (q.text.empty()) throw ParseError("empty query text", lineno);
        queries.push_back(std::move(q));
    }
    return queries;
}

namespace {

void validate_run_group(const std::string& query_id, std::vector<RunEntry>& entries) {
    std::sort(entries.begin(), entries.end(),
              [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].rank != static_cast<int>(i) + 1)
            throw DataError("query " + query_id + ": ranks are not contiguous 1..n (saw " +
                            std::to_string(entries[i].rank) + " at position " +
                            std::to_string(i + 1) + ")");
        if (i > 0 && entries[i].score > entries[i - 1].score)
            throw DataError("query " + query_id + ": scores increase with rank at rank " +
                            std::to_string(entries[i].rank));
        if (!std::isfinite(entries[i].score))
            throw DataError("query " + query_id + ": non-finite score at rank " +
                            std::to_string(entries[i].rank));
    }
}

} // namespace

Run load_run(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    Run run;
    std::string line;
    std::size_t lineno = 0;
    while (read_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        RunEntry e;
        std::string q0, rank_s, score_s;
        if (!(ss >> e.query_id >> q0 >> e.doc_id >> rank_s >> score_s >> e.tag))
            throw ParseError("expected 6 columns 'qid Q0 docid rank score tag'", lineno);
        try {
            std::size_t pos = 0;
            e.rank = std::stoi(rank_s, &pos);
            if (pos != rank_s.size()) throw std::invalid_argument(rank_s);
        } catch (const std::exception&) {
            throw ParseError("unparsable rank '" + rank_s + "'", lineno);
        }
        try {
            std::size_t pos = 0;
            e.score = std::stod(score_s, &pos);
            if (pos != score_s.size()) throw std::invalid_argument(score_s);
        } catch (const std::exception&) {
            throw ParseError("unparsable score '" + score_s + "'", lineno);
        }
        if (e.rank < 1) throw ParseError("rank must be >= 1", lineno);
        run[e.query_id].push_back(std::move(e));
    }
    for (auto& [query_id, entries] : run) validate_run_group(query_id, entries);
    return run;
}

Qrels load_qrels(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    Qrels qrels;
    std::string line;
    std::size_t lineno = 0;
    while (read_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string query_id, zero, doc_id;
        long grade;
        if (!(ss >> query_id >> zero >> doc_id >> grade))
            throw ParseError("expected 4 columns 'qid 0 docid grade'", lineno);
        if (grade < 0) throw ParseError("negative grade", lineno);
        auto& for_query = qrels.by_query[query_id];
        auto [it, inserted] = for_query.emplace(doc_id, static_cast<int>(grade));
        if (!inserted) {
            it->second = static_cast<int>(grade);
            ++qrels.duplicate_warnings;
        }
    }
    return qrels;
}

void write_run(const Run& run, const std::string& path) {
    // Validate everything before the first write.
    for (const auto& [query_id, entries] : run) {
        std::vector<RunEntry> copy = entries;
        validate_run_group(query_id, copy);
        for (const RunEntry& e : entries)
            if (e.query_id != query_id)
                throw DataError("run entry under query " + query_id +
                                " carries query_id " + e.query_id);
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    char score_buf[64];
    for (const auto& [query_id, entries] : run) {
        for (const RunEntry& e : entries) {
            std::snprintf(score_buf, sizeof(score_buf), "%.6f", e.score);
            out << e.query_id << ' ' << "Q0" << ' ' << e.doc_id << ' ' << e.rank << ' '
                << score_buf << ' ' << e.tag << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

void write_run(const std::vector<RunEntry>& entries, const std::string& path) {
    Run run;
    for (const RunEntry& e : entries) run[e.query_id].push_back(e);
    for (auto& [query_id, group] : run)
        std::sort(group.begin(), group.end(),
                  [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    write_run(run, path);
}

std::vector<Triplet> load_triplets(const std::string& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Triplet> out;
    std::string line;
    std::size_t lineno = 0;
    while (read_line(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        Triplet t;
        if (!(ss >> t.query_id >> t.positive_doc_id >> t.negative_doc_id))
            throw ParseError("expected 3 columns 'qid positive negative'", lineno);
        if (t.positive_doc_id == t.negative_doc_id)
            throw ParseError("positive and negative must differ", lineno);
        out.push_back(std::move(t));
    }
    return out;
}

void write_triplets(const std::vector<Triplet>& triplets, const std::string& path) {
    for (const Triplet& t : triplets)
        if (t.positive_doc_id == t.negative_doc_id)
            throw DataError("triplet for query " + t.query_id +
                            " has identical positive and negative");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open file for writing: " + path);
    for (const Triplet& t : triplets)
        out << t.query_id << '\t' << t.positive_doc_id << '\t' << t.negative_doc_id << '\n';
}

} // namespace keyb2
