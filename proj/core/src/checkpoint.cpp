// SPDX-License-Identifier: Apache-2.0
#include "vedocr/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vedocr/error.hpp"

namespace vedocr {

namespace {

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

uint32_t get_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw ParseError("checkpoint " + path + ": truncated");
    uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

uint64_t get_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw ParseError("checkpoint " + path + ": truncated");
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::string get_string(std::istream& in, const std::string& path) {
    const uint64_t len = get_u64(in, path);
    if (len > (1ull << 30)) {
        throw ParseError("checkpoint " + path + ": absurd string length");
    }
    std::string s(static_cast<size_t>(len), '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw ParseError("checkpoint " + path + ": truncated");
    return s;
}

} // namespace

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
    for (const Entry& e : tensors) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const std::vector<std::string>& vocab,
                     std::span<const NamedParam> params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("checkpoint: cannot write " + path);
    }
    out.write(Checkpoint::kMagic, 4);
    put_u32(out, Checkpoint::kVersion);
    nlohmann::json blob = nlohmann::json::parse(config.to_json_string());
    blob["vocab_symbols"] = vocab;
    const std::string blob_str = blob.dump();
    put_u64(out, blob_str.size());
    out.write(blob_str.data(), static_cast<std::streamsize>(blob_str.size()));
    put_u64(out, params.size());
    for (const NamedParam& p : params) {
        put_u64(out, p.name.size());
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(out, static_cast<uint32_t>(p.tensor.rank()));
        for (int64_t d : p.tensor.shape()) {
            put_u32(out, static_cast<uint32_t>(d));
        }
        for (double v : p.tensor.data()) {
            put_f32(out, static_cast<float>(v));
        }
    }
    if (!out) {
        throw IoError("checkpoint: failed writing " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("checkpoint: cannot open " + path);
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, Checkpoint::kMagic, 4) != 0) {
        throw ParseError("checkpoint " + path + ": bad magic");
    }
    const uint32_t version = get_u32(in, path);
    if (version != Checkpoint::kVersion) {
        throw ParseError("checkpoint " + path + ": unsupported version " +
                         std::to_string(version));
    }
    Checkpoint ckpt;
    const std::string blob_str = get_string(in, path);
    nlohmann::json blob;
    try {
        blob = nlohmann::json::parse(blob_str);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("checkpoint " + path + ": config blob: " + e.what());
    }
    ckpt.config = ModelConfig::from_json_string(blob.dump());
    if (blob.contains("vocab_symbols")) {
        ckpt.vocab = blob["vocab_symbols"].get<std::vector<std::string>>();
    }
    const uint64_t count = get_u64(in, path);
    for (uint64_t i = 0; i < count; ++i) {
        Checkpoint::Entry e;
        e.name = get_string(in, path);
        const uint32_t rank = get_u32(in, path);
        if (rank > 8) {
            throw ParseError("checkpoint " + path + ": tensor rank " +
                             std::to_string(rank));
        }
        int64_t numel = 1;
        for (uint32_t r = 0; r < rank; ++r) {
            const uint32_t d = get_u32(in, path);
            e.shape.push_back(static_cast<int64_t>(d));
            numel *= d;
        }
        e.values.resize(static_cast<size_t>(numel));
        for (int64_t k = 0; k < numel; ++k) {
            const uint32_t bits = get_u32(in, path);
            float f;
            std::memcpy(&f, &bits, 4);
            e.values[static_cast<size_t>(k)] = f;
        }
        ckpt.tensors.push_back(std::move(e));
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, std::span<NamedParam> params,
                      const std::vector<std::string>& skip) {
    if (ckpt.tensors.size() != params.size()) {
        throw ValidationError(
            "checkpoint: holds " + std::to_string(ckpt.tensors.size()) +
            " tensors but the model has " + std::to_string(params.size()) +
            " parameters");
    }
    for (NamedParam& p : params) {
        if (std::find(skip.begin(), skip.end(), p.name) != skip.end()) {
            continue;
        }
        const Checkpoint::Entry* e = ckpt.find(p.name);
        if (e == nullptr) {
            throw ValidationError("checkpoint: missing tensor '" + p.name +
                                  "'");
        }
        if (e->shape != p.tensor.shape()) {
            throw ValidationError("checkpoint: tensor '" + p.name +
                                  "' has shape " + shape_str(e->shape) +
                                  ", model expects " +
                                  shape_str(p.tensor.shape()));
        }
        auto dst = p.tensor.data();
        for (size_t i = 0; i < dst.size(); ++i) {
            dst[i] = static_cast<double>(e->values[i]);
        }
    }
}

} // namespace vedocr
