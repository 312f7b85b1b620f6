// SPDX-License-Identifier: Apache-2.0
#include "vedocr/utf8.hpp"

namespace vedocr {

namespace {

int sequence_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 0; // continuation or invalid lead byte
}

} // namespace

std::vector<std::string> utf8_codepoints(const std::string& text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        const int len = sequence_length(static_cast<unsigned char>(text[i]));
        size_t take = 1;
        if (len > 1 && i + static_cast<size_t>(len) <= text.size()) {
            bool ok = true;
            for (int k = 1; k < len; ++k) {
                if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) {
                    ok = false;
                    break;
                }
            }
            if (ok) take = static_cast<size_t>(len);
        }
        out.push_back(text.substr(i, take));
        i += take;
    }
    return out;
}

uint32_t utf8_value(const std::string& cp) {
    if (cp.empty()) return 0xFFFD;
    const unsigned char b0 = static_cast<unsigned char>(cp[0]);
    const int len = sequence_length(b0);
    if (len == 0 || static_cast<size_t>(len) != cp.size()) return 0xFFFD;
    if (len == 1) return b0;
    uint32_t v = b0 & (0x7f >> len);
    for (int k = 1; k < len; ++k) {
        v = (v << 6) | (static_cast<unsigned char>(cp[k]) & 0x3f);
    }
    return v;
}

bool is_unicode_space(uint32_t cp) {
    switch (cp) {
    case 0x09: case 0x0a: case 0x0b: case 0x0c: case 0x0d: case 0x20:
    case 0x85: case 0xa0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202f: case 0x205f: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200a;
    }
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string current;
    for (const std::string& cp : utf8_codepoints(text)) {
        if (is_unicode_space(utf8_value(cp))) {
            if (!current.empty()) {
                words.push_back(std::move(current));
                current.clear();
            }
        } else {
            current += cp;
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

} // namespace vedocr
