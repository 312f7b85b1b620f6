// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace vedocr {

/// Character-level vocabulary. Every symbol is one Unicode code point and
/// combining diacritic marks are ordinary first-class symbols with their own
/// ids, distinct from the base characters they decorate.
class Tokenizer {
public:
    static constexpr int64_t kPad = 0;
    static constexpr int64_t kBos = 1;
    static constexpr int64_t kEos = 2;
    static constexpr int64_t kUnk = 3;
    static constexpr int64_t kMask = 4;
    static constexpr int64_t kNumSpecial = 5;

    Tokenizer() = default;
    /// Builds from the symbol list; duplicates are a validation error.
    explicit Tokenizer(std::vector<std::string> symbols);

    /// Vocabulary file: UTF-8, one symbol per line, line number = id - 5.
    static Tokenizer load(const std::string& path);
    void save(const std::string& path) const;

    /// BOS + per-character ids + EOS; unknown characters map to UNK.
    std::vector<int64_t> tokenize(const std::string& text) const;

    /// Inverse of tokenize for known symbols: specials are dropped, UNK
    /// renders as U+FFFD.
    std::string decode(const std::vector<int64_t>& ids) const;

    int64_t vocab_size() const {
        return kNumSpecial + static_cast<int64_t>(symbols_.size());
    }
    int64_t id_of(const std::string& symbol) const; // -1 when unknown
    const std::string& symbol(int64_t id) const;    // non-special ids only
    const std::vector<std::string>& symbols() const { return symbols_; }

    bool is_special(int64_t id) const { return id >= 0 && id < kNumSpecial; }

private:
    std::vector<std::string> symbols_;
    std::unordered_map<std::string, int64_t> ids_;
};

} // namespace vedocr
