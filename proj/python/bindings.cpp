#include "keyb2/assemble.hpp"
#include "keyb2/attnlab.hpp"
#include "keyb2/corpus.hpp"
#include "keyb2/costmodel.hpp"
#include "keyb2/errors.hpp"
#include "keyb2/evalx.hpp"
#include "keyb2/rerank.hpp"
#include "keyb2/segment.hpp"
#include "keyb2/select.hpp"
#include "keyb2/tokenize.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace keyb2;

namespace {

// Python-side dictionaries are passed as word lists; keep the ZhDict alive
// for the duration of the call.
std::vector<std::string> py_word_tokenize(const std::string& text, Lang lang,
                                          const std::vector<std::string>& dict_words) {
    if (dict_words.empty()) return word_tokenize(text, lang);
    const ZhDict dict = ZhDict::from_words(dict_words);
    return word_tokenize(text, lang, &dict);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Long-document reranking core: segmentation, block selection, "
              "budgeted assembly, ranking metrics and attention alignment.";

    py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<RemoteError>(m, "RemoteError", PyExc_RuntimeError);

    py::enum_<Lang>(m, "Lang").value("en", Lang::en).value("zh", Lang::zh);
    py::enum_<PunctClass>(m, "PunctClass")
        .value("none", PunctClass::none)
        .value("weak", PunctClass::weak)
        .value("medium", PunctClass::medium)
        .value("strong", PunctClass::strong);

    py::class_<Token>(m, "Token")
        .def_readonly("text", &Token::text)
        .def_readonly("byte_start", &Token::byte_start)
        .def_readonly("byte_end", &Token::byte_end)
        .def_readonly("trailing_punct", &Token::trailing_punct)
        .def("__repr__", [](const Token& t) { return "Token('" + t.text + "')"; });

    py::class_<TokenSeq>(m, "TokenSeq")
        .def_readonly("source_text", &TokenSeq::source_text)
        .def_readonly("tokens", &TokenSeq::tokens)
        .def("__len__", &TokenSeq::size);

    m.def("unit_tokenize", &unit_tokenize, py::arg("text"), py::arg("lang") = Lang::en);
    m.def("word_tokenize", &py_word_tokenize, py::arg("text"), py::arg("lang") = Lang::en,
          py::arg("dict_words") = std::vector<std::string>{});
    m.def("truncate_tokens", &truncate_tokens, py::arg("seq"), py::arg("max_tokens"));

    py::class_<SegmentationConfig>(m, "SegmentationConfig")
        .def(py::init<>())
        .def_readwrite("max_block_tokens", &SegmentationConfig::max_block_tokens)
        .def_readwrite("cut_costs", &SegmentationConfig::cut_costs)
        .def_readwrite("forced_cut_cost", &SegmentationConfig::forced_cut_cost);

    py::class_<Block>(m, "Block")
        .def_readonly("index", &Block::index)
        .def_readonly("text", &Block::text)
        .def_readonly("length", &Block::length)
        .def_readonly("tokens", &Block::tokens);

    m.def("segment", &segment, py::arg("seq"), py::arg("config") = SegmentationConfig{});
    m.def("block_boundaries", &block_boundaries, py::arg("blocks"));

    py::class_<Document>(m, "Document")
        .def(py::init([](std::string id, std::string text, Lang lang) {
                 return Document{std::move(id), std::move(text), lang};
             }),
             py::arg("id"), py::arg("text"), py::arg("lang") = Lang::en)
        .def_readwrite("id", &Document::id)
        .def_readwrite("text", &Document::text)
        .def_readwrite("lang", &Document::lang);

    py::class_<Query>(m, "Query")
        .def(py::init([](std::string id, std::string text) {
                 return Query{std::move(id), std::move(text)};
             }),
             py::arg("id"), py::arg("text"))
        .def_readwrite("id", &Query::id)
        .def_readwrite("text", &Query::text);

    py::class_<IdfTable>(m, "IdfTable")
        .def(py::init<>())
        .def_readonly("doc_count", &IdfTable::doc_count)
        .def_readonly("default_idf", &IdfTable::default_idf)
        .def("lookup", &IdfTable::lookup, py::arg("word"))
        .def("__len__", [](const IdfTable& t) { return t.idf.size(); });

    py::class_<Bm25Params>(m, "Bm25Params")
        .def(py::init([](double k1, double b) { return Bm25Params{k1, b}; }),
             py::arg("k1") = 0.9, py::arg("b") = 0.4)
        .def_readwrite("k1", &Bm25Params::k1)
        .def_readwrite("b", &Bm25Params::b);

    m.def(
        "build_idf",
        [](const std::vector<Document>& docs) { return build_idf(docs); },
        py::arg("documents"));
    m.def("bm25_score", &bm25_score, py::arg("query_words"), py::arg("block_words"),
          py::arg("idf"), py::arg("params") = Bm25Params{}, py::arg("l_avg") = 1.0);

    py::class_<ScoredBlock>(m, "ScoredBlock")
        .def(py::init([](int block_index, double score, int length) {
                 return ScoredBlock{block_index, score, length};
             }),
             py::arg("block_index"), py::arg("score"), py::arg("length"))
        .def_readwrite("block_index", &ScoredBlock::block_index)
        .def_readwrite("score", &ScoredBlock::score)
        .def_readwrite("length", &ScoredBlock::length);

    m.def(
        "select_bm25",
        [](const Query& q, const std::vector<Block>& blocks, const IdfTable& idf,
           const Bm25Params& params, Lang lang) {
            return select_bm25(q, blocks, idf, params, lang);
        },
        py::arg("query"), py::arg("blocks"), py::arg("idf"),
        py::arg("params") = Bm25Params{}, py::arg("lang") = Lang::en);

    py::class_<AssemblyConfig>(m, "AssemblyConfig")
        .def(py::init<>())
        .def_readwrite("max_block_tokens_total", &AssemblyConfig::max_block_tokens_total)
        .def_readwrite("query_max_tokens", &AssemblyConfig::query_max_tokens)
        .def_readwrite("mark_gaps", &AssemblyConfig::mark_gaps);

    py::class_<AssembledInput>(m, "AssembledInput")
        .def_readonly("query_text", &AssembledInput::query_text)
        .def_readonly("excerpt_text", &AssembledInput::excerpt_text)
        .def_readonly("chosen", &AssembledInput::chosen)
        .def_readonly("total_block_tokens", &AssembledInput::total_block_tokens);

    m.def("pick_top_blocks", &pick_top_blocks, py::arg("scored"), py::arg("max_b_t"));
    m.def("assemble", &assemble, py::arg("query"), py::arg("blocks"), py::arg("chosen"),
          py::arg("config") = AssemblyConfig{});
    m.def("render_prompt", &render_prompt, py::arg("input"));

    m.def(
        "mock_score",
        [](const std::string& query, const std::string& text, const IdfTable& idf, Lang lang) {
            return mock_score(query, text, idf, lang);
        },
        py::arg("query"), py::arg("text"), py::arg("idf"), py::arg("lang") = Lang::en);

    py::enum_<NdcgGain>(m, "NdcgGain")
        .value("exp", NdcgGain::exp)
        .value("linear", NdcgGain::linear);
    m.def("ndcg_at_k", &ndcg_at_k, py::arg("ranked_doc_ids"), py::arg("qrels"), py::arg("k"),
          py::arg("gain") = NdcgGain::exp);
    m.def("average_precision", &average_precision, py::arg("ranked_doc_ids"),
          py::arg("qrels"), py::arg("binarize_threshold") = 1);
    m.def("precision_at_k", &precision_at_k, py::arg("ranked_doc_ids"), py::arg("qrels"),
          py::arg("k"), py::arg("binarize_threshold") = 1);
    m.def(
        "paired_t_test",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            const TTestResult r = paired_t_test(a, b);
            return py::make_tuple(r.t, r.p);
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "spearman",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            return spearman(x, y);
        },
        py::arg("x"), py::arg("y"));
    m.def(
        "aras",
        [](const std::vector<double>& w, const std::vector<double>& r) { return aras(w, r); },
        py::arg("weights"), py::arg("relevances"));

    py::class_<AlignmentResult>(m, "AlignmentResult")
        .def_readonly("aras_per_pair", &AlignmentResult::aras_per_pair)
        .def_readonly("mean_aras", &AlignmentResult::mean_aras)
        .def_readonly("pcr", &AlignmentResult::pcr)
        .def_readonly("skipped_pairs", &AlignmentResult::skipped_pairs);

    m.def(
        "alignment_over_pairs",
        [](const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs,
           bool exclude_zero_variance) {
            return alignment_over_pairs(pairs, exclude_zero_variance
                                                   ? ZeroVariancePolicy::exclude
                                                   : ZeroVariancePolicy::as_zero);
        },
        py::arg("pairs"), py::arg("exclude_zero_variance") = false);
    m.def("chunk_indices", &chunk_indices, py::arg("doc_token_indices"),
          py::arg("chunk_size") = 64, py::arg("min_final_tokens") = 8);
    m.def("relative_change", &relative_change, py::arg("old_value"), py::arg("new_value"));

    py::class_<CostEstimate>(m, "CostEstimate")
        .def_readonly("input_tokens", &CostEstimate::input_tokens)
        .def_readonly("attention_units", &CostEstimate::attention_units)
        .def_readonly("relative_to", &CostEstimate::relative_to)
        .def_readonly("ratio", &CostEstimate::ratio);

    m.def("estimate", &estimate, py::arg("input_tokens"),
          py::arg("baseline_tokens") = std::nullopt);
}
