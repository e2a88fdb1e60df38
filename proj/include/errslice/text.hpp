#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace errslice::text {

/// Byte length of the Unicode whitespace code point starting at s[i], or 0.
inline std::size_t whitespace_len(std::string_view s, std::size_t i) {
    const auto b = [&](std::size_t k) { return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0u; };
    const unsigned c0 = b(0);
    if (c0 == ' ' || (c0 >= 0x09 && c0 <= 0x0d)) return 1;
    if (c0 == 0xc2 && (b(1) == 0x85 || b(1) == 0xa0)) return 2;  // NEL, NBSP
    if (c0 == 0xe1 && b(1) == 0x9a && b(2) == 0x80) return 3;      // U+1680
    if (c0 == 0xe2 && b(1) == 0x80) {
        const unsigned c2 = b(2);
        if ((c2 >= 0x80 && c2 <= 0x8a) || c2 == 0xa8 || c2 == 0xa9 || c2 == 0xaf) return 3;
    }
    if (c0 == 0xe2 && b(1) == 0x81 && b(2) == 0x9f) return 3;  // U+205F
    if (c0 == 0xe3 && b(1) == 0x80 && b(2) == 0x80) return 3;  // U+3000
    return 0;
}

/// Byte ranges [begin, end) of whitespace-delimited tokens.
inline std::vector<std::pair<std::size_t, std::size_t>> token_spans(std::string_view s) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (std::size_t w = whitespace_len(s, i)) {
            i += w;
            continue;
        }
        const std::size_t start = i;
        while (i < s.size() && whitespace_len(s, i) == 0) ++i;
        out.emplace_back(start, i);
    }
    return out;
}

inline std::size_t count_tokens(std::string_view s) { return token_spans(s).size(); }

/// s cut right after its n-th whitespace token (n = 0 gives "").
inline std::string first_tokens(std::string_view s, std::size_t n) {
    if (n == 0) return {};
    const auto spans = token_spans(s);
    if (spans.size() <= n) return std::string(s);
    return std::string(s.substr(0, spans[n - 1].second));
}

/// Lowercased tokens with leading/trailing ASCII punctuation stripped; empty tokens dropped.
inline std::vector<std::string> word_tokens(std::string_view s) {
    std::vector<std::string> out;
    for (auto [b, e] : token_spans(s)) {
        while (b < e && std::ispunct(static_cast<unsigned char>(s[b]))) ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(s[e - 1]))) --e;
        if (b == e) continue;
        std::string t(s.substr(b, e - b));
        std::transform(t.begin(), t.end(), t.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace errslice::text
