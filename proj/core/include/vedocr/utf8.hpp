// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vedocr {

/// Splits UTF-8 text into one std::string per code point. Malformed bytes are
/// passed through as single-byte units rather than rejected.
std::vector<std::string> utf8_codepoints(const std::string& text);

/// Code point value of a single-code-point UTF-8 string (0xFFFD on error).
uint32_t utf8_value(const std::string& cp);

bool is_unicode_space(uint32_t cp);

/// Splits on runs of Unicode whitespace; no further normalization.
std::vector<std::string> split_words(const std::string& text);

} // namespace vedocr
