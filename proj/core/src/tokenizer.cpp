// SPDX-License-Identifier: Apache-2.0
#include "vedocr/tokenizer.hpp"

#include <fstream>

#include "vedocr/error.hpp"
#include "vedocr/utf8.hpp"

namespace vedocr {

Tokenizer::Tokenizer(std::vector<std::string> symbols)
    : symbols_(std::move(symbols)) {
    for (size_t i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i].empty()) {
            throw ValidationError("tokenizer: empty symbol at index " +
                                  std::to_string(i));
        }
        const int64_t id = kNumSpecial + static_cast<int64_t>(i);
        if (!ids_.emplace(symbols_[i], id).second) {
            throw ValidationError("tokenizer: duplicate symbol '" +
                                  symbols_[i] + "'");
        }
    }
}

Tokenizer Tokenizer::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("tokenizer: cannot open vocabulary file " + path);
    }
    std::vector<std::string> symbols;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        symbols.push_back(line);
    }
    return Tokenizer(std::move(symbols));
}

void Tokenizer::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("tokenizer: cannot write vocabulary file " + path);
    }
    for (const std::string& s : symbols_) out << s << '\n';
    if (!out) {
        throw IoError("tokenizer: failed writing " + path);
    }
}

std::vector<int64_t> Tokenizer::tokenize(const std::string& text) const {
    std::vector<int64_t> ids;
    ids.push_back(kBos);
    for (const std::string& cp : utf8_codepoints(text)) {
        const auto it = ids_.find(cp);
        ids.push_back(it == ids_.end() ? kUnk : it->second);
    }
    ids.push_back(kEos);
    return ids;
}

std::string Tokenizer::decode(const std::vector<int64_t>& ids) const {
    std::string out;
    for (int64_t id : ids) {
        if (id == kUnk) {
            out += "\xEF\xBF\xBD"; // U+FFFD
            continue;
        }
        if (is_special(id)) continue;
        out += symbol(id);
    }
    return out;
}

int64_t Tokenizer::id_of(const std::string& symbol) const {
    const auto it = ids_.find(symbol);
    return it == ids_.end() ? -1 : it->second;
}

const std::string& Tokenizer::symbol(int64_t id) const {
    const int64_t idx = id - kNumSpecial;
    if (idx < 0 || idx >= static_cast<int64_t>(symbols_.size())) {
        throw IndexError("tokenizer: id " + std::to_string(id) +
                         " has no symbol");
    }
    return symbols_[static_cast<size_t>(idx)];
}

} // namespace vedocr
