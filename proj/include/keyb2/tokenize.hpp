#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace keyb2 {

enum class Lang { en, zh };

// Ordered weakest to strongest so std::max picks the heavier mark when
// several punctuation characters follow the same word.
enum class PunctClass : std::uint8_t { none = 0, weak = 1, medium = 2, strong = 3 };

struct Token {
    std::string text;
    std::size_t byte_start = 0;
    std::size_t byte_end = 0;
    PunctClass trailing_punct = PunctClass::none;

    bool operator==(const Token&) const = default;
};

// Tokens are non-overlapping, ordered, and cover every non-whitespace byte of
// source_text; slicing [byte_start, byte_end) always reproduces token text.
struct TokenSeq {
    std::string source_text;
    std::vector<Token> tokens;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }

    bool operator==(const TokenSeq&) const = default;
};

// Word list for the greedy longest-match Chinese segmenter.
// File format: one word per line, UTF-8.
class ZhDict {
public:
    ZhDict() = default;

    static ZhDict from_file(const std::string& path);
    static ZhDict from_words(const std::vector<std::string>& words);

    void add(std::string word);
    bool contains(const std::string& word) const { return words_.count(word) > 0; }
    std::size_t max_word_codepoints() const { return max_cp_; }
    std::size_t size() const { return words_.size(); }

private:
    std::unordered_set<std::string> words_;
    std::size_t max_cp_ = 0;
};

// Punctuation classes: strong {. ! ? and the fullwidth 。！？}, medium
// {; : and fullwidth ；：}, weak {, and fullwidth 、，}; every other
// punctuation or symbol codepoint is a punct token of class none.
PunctClass punct_class(char32_t cp);
bool is_punct_cp(char32_t cp);
bool is_cjk_cp(char32_t cp);

// A punctuation token is a single punctuation codepoint.
bool is_punct_token(const Token& t);

// Class of the cut point after t: a punctuation token carries its own class,
// a word token the class of the punctuation that followed it. nullopt means a
// cut here is not a punctuation cut (only a forced cut is possible).
std::optional<PunctClass> cut_point(const Token& t);

// Reference unit tokenizer. en: maximal alphanumeric runs plus single
// punctuation tokens; zh: additionally every CJK codepoint is its own token.
// A punctuation character becomes its own token and stamps its class onto the
// closest preceding non-punctuation token. Throws DataError on invalid UTF-8.
TokenSeq unit_tokenize(std::string_view text, Lang lang);

// Lexical words for BM25. en: lowercased alphanumeric runs. zh: greedy
// longest dictionary match over CJK spans (single codepoints when nothing
// matches), non-CJK spans handled as in en.
std::vector<std::string> word_tokenize(std::string_view text, Lang lang,
                                       const ZhDict* dict = nullptr);

// First min(n, max_tokens) tokens; source_text cut at the last kept token.
TokenSeq truncate_tokens(const TokenSeq& seq, std::size_t max_tokens);

// Strict UTF-8 decode of the codepoint at byte offset i; advances i.
// Throws DataError on malformed input.
char32_t next_codepoint(std::string_view text, std::size_t& i);

} // namespace keyb2
