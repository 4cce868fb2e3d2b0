#include "keyb2/tokenize.hpp"

#include "keyb2/errors.hpp"

#include <algorithm>
#include <fstream>

namespace keyb2 {

namespace {

bool is_ascii_ws(char32_t cp) {
    return cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == U'\f' ||
           cp == U'\v';
}

bool is_space_cp(char32_t cp) {
    return is_ascii_ws(cp) || cp == U' ' || cp == U'　';
}

bool is_ascii_punct(char32_t cp) {
    return (cp >= 0x21 && cp <= 0x2F) || (cp >= 0x3A && cp <= 0x40) ||
           (cp >= 0x5B && cp <= 0x60) || (cp >= 0x7B && cp <= 0x7E);
}

// Fullwidth / CJK punctuation beyond the classified marks.
bool is_cjk_punct(char32_t cp) {
    switch (cp) {
    case U'、': // 、
    case U'。': // 。
    case U'！': // ！
    case U'？': // ？
    case U'，': // ，
    case U'；': // ；
    case U'：': // ：
    case U'（': // （
    case U'）': // ）
    case U'．': // ．
    case U'－':
    case U'《': // 《
    case U'》': // 》
    case U'〈':
    case U'〉':
    case U'「': // 「
    case U'」': // 」
    case U'『':
    case U'』':
    case U'【': // 【
    case U'】': // 】
    case U'〔':
    case U'〕':
    case U'‘':
    case U'’':
    case U'“':
    case U'”':
    case U'—': // —
    case U'…': // …
    case U'·': // ·
    case U'～': // ～
        return true;
    default:
        return false;
    }
}

std::size_t encoded_len(char32_t cp) {
    if (cp < 0x80) return 1;
    if (cp < 0x800) return 2;
    if (cp < 0x10000) return 3;
    return 4;
}

} // namespace

char32_t next_codepoint(std::string_view text, std::size_t& i) {
    const auto bad = [&] { throw DataError("invalid UTF-8 at byte " + std::to_string(i)); };
    const auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };

    unsigned char b0 = byte(i);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    std::size_t len;
    char32_t cp;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        bad();
        return 0;
    }
    if (i + len > text.size()) bad();
    for (std::size_t k = 1; k < len; ++k) {
        unsigned char bk = byte(i + k);
        if ((bk & 0xC0) != 0x80) bad();
        cp = (cp << 6) | (bk & 0x3F);
    }
    // Reject overlong encodings, surrogates and out-of-range values.
    if (encoded_len(cp) != len || (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) bad();
    i += len;
    return cp;
}

PunctClass punct_class(char32_t cp) {
    switch (cp) {
    case U'.':
    case U'!':
    case U'?':
    case U'。':
    case U'！':
    case U'？':
        return PunctClass::strong;
    case U';':
    case U':':
    case U'；':
    case U'：':
        return PunctClass::medium;
    case U',':
    case U'、':
    case U'，':
        return PunctClass::weak;
    default:
        return PunctClass::none;
    }
}

bool is_punct_cp(char32_t cp) { return is_ascii_punct(cp) || is_cjk_punct(cp); }

bool is_cjk_cp(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF) || (cp >= 0x3400 && cp <= 0x4DBF) ||
           (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF);
}

bool is_punct_token(const Token& t) {
    std::size_t i = 0;
    if (t.text.empty()) return false;
    char32_t cp = next_codepoint(t.text, i);
    return i == t.text.size() && is_punct_cp(cp);
}

std::optional<PunctClass> cut_point(const Token& t) {
    if (is_punct_token(t)) {
        std::size_t i = 0;
        return punct_class(next_codepoint(t.text, i));
    }
    if (t.trailing_punct != PunctClass::none) return t.trailing_punct;
    return std::nullopt;
}

TokenSeq unit_tokenize(std::string_view text, Lang lang) {
    TokenSeq seq;
    seq.source_text.assign(text);
    // Index of the latest non-punctuation token, for trailing_punct stamping.
    std::ptrdiff_t last_word = -1;

    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        char32_t cp = next_codepoint(text, i);
        if (is_space_cp(cp)) continue;

        if (is_punct_cp(cp)) {
            if (last_word >= 0) {
                Token& w = seq.tokens[static_cast<std::size_t>(last_word)];
                w.trailing_punct = std::max(w.trailing_punct, punct_class(cp));
            }
            seq.tokens.push_back({std::string(text.substr(start, i - start)), start, i,
                                  PunctClass::none});
            continue;
        }

        if (lang == Lang::zh && is_cjk_cp(cp)) {
            seq.tokens.push_back({std::string(text.substr(start, i - start)), start, i,
                                  PunctClass::none});
            last_word = static_cast<std::ptrdiff_t>(seq.tokens.size()) - 1;
            continue;
        }

        // Maximal run of word characters.
        std::size_t end = i;
        while (end < text.size()) {
            std::size_t probe = end;
            char32_t nc = next_codepoint(text, probe);
            if (is_space_cp(nc) || is_punct_cp(nc) || (lang == Lang::zh && is_cjk_cp(nc)))
                break;
            end = probe;
        }
        seq.tokens.push_back({std::string(text.substr(start, end - start)), start, end,
                              PunctClass::none});
        last_word = static_cast<std::ptrdiff_t>(seq.tokens.size()) - 1;
        i = end;
    }
    return seq;
}

namespace {

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c += 'a' - 'A';
    return out;
}

// Greedy longest-match over one CJK span given as codepoint byte offsets.
void segment_cjk_span(std::string_view text, const std::vector<std::size_t>& cps,
                      std::size_t span_end, const ZhDict* dict,
                      std::vector<std::string>& out) {
    std::size_t n = cps.size();
    std::size_t max_len = dict ? dict->max_word_codepoints() : 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t matched = 1;
        if (dict && max_len >= 2) {
            std::size_t cap = std::min(max_len, n - i);
            for (std::size_t len = cap; len >= 2; --len) {
                std::size_t b0 = cps[i];
                std::size_t b1 = (i + len < n) ? cps[i + len] : span_end;
                if (dict->contains(std::string(text.substr(b0, b1 - b0)))) {
                    matched = len;
                    break;
                }
            }
        }
        std::size_t b0 = cps[i];
        std::size_t b1 = (i + matched < n) ? cps[i + matched] : span_end;
        out.emplace_back(text.substr(b0, b1 - b0));
        i += matched;
    }
}

} // namespace

std::vector<std::string> word_tokenize(std::string_view text, Lang lang,
                                       const ZhDict* dict) {
    std::vector<std::string> words;
    std::vector<std::size_t> cjk_offsets; // codepoint starts of the open CJK span
    std::size_t cjk_end = 0;
    std::size_t word_start = std::string_view::npos;

    auto flush_word = [&](std::size_t end) {
        if (word_start != std::string_view::npos) {
            words.push_back(ascii_lower(text.substr(word_start, end - word_start)));
            word_start = std::string_view::npos;
        }
    };
    auto flush_cjk = [&] {
        if (!cjk_offsets.empty()) {
            segment_cjk_span(text, cjk_offsets, cjk_end, dict, words);
            cjk_offsets.clear();
        }
    };

    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        char32_t cp = next_codepoint(text, i);
        if (is_space_cp(cp) || is_punct_cp(cp)) {
            flush_word(start);
            flush_cjk();
        } else if (lang == Lang::zh && is_cjk_cp(cp)) {
            flush_word(start);
            cjk_offsets.push_back(start);
            cjk_end = i;
        } else {
            flush_cjk();
            if (word_start == std::string_view::npos) word_start = start;
        }
    }
    flush_word(text.size());
    flush_cjk();
    return words;
}

TokenSeq truncate_tokens(const TokenSeq& seq, std::size_t max_tokens) {
    if (seq.tokens.size() <= max_tokens) return seq;
    TokenSeq out;
    out.tokens.assign(seq.tokens.begin(),
                      seq.tokens.begin() + static_cast<std::ptrdiff_t>(max_tokens));
    std::size_t cut = out.tokens.empty() ? 0 : out.tokens.back().byte_end;
    out.source_text = seq.source_text.substr(0, cut);
    return out;
}

ZhDict ZhDict::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dictionary file: " + path);
    ZhDict dict;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) dict.add(line);
    }
    return dict;
}

ZhDict ZhDict::from_words(const std::vector<std::string>& words) {
    ZhDict dict;
    for (const auto& w : words) dict.add(w);
    return dict;
}

void ZhDict::add(std::string word) {
    std::size_t cp_count = 0;
    for (std::size_t i = 0; i < word.size();) {
        next_codepoint(word, i);
        ++cp_count;
    }
    max_cp_ = std::max(max_cp_, cp_count);
    words_.insert(std::move(word));
}

} // namespace keyb2
