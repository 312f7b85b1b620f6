// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vedocr/config.hpp"
#include "vedocr/tensor.hpp"

namespace vedocr {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// On-disk model snapshot: magic "QVED", format version, the ModelConfig (a
/// JSON blob that also carries the tokenizer symbols), then a named tensor
/// table with 32-bit little-endian values.
struct Checkpoint {
    static constexpr char kMagic[4] = {'Q', 'V', 'E', 'D'};
    static constexpr uint32_t kVersion = 1;

    struct Entry {
        std::string name;
        Shape shape;
        std::vector<float> values;
    };

    ModelConfig config;
    std::vector<std::string> vocab;
    std::vector<Entry> tensors;

    const Entry* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     const std::vector<std::string>& vocab,
                     std::span<const NamedParam> params);

Checkpoint load_checkpoint(const std::string& path);

/// Copies checkpoint values into the live parameters. Every parameter must
/// be present with a matching shape (and vice versa); `skip` names are left
/// at their current values.
void apply_checkpoint(const Checkpoint& ckpt, std::span<NamedParam> params,
                      const std::vector<std::string>& skip = {});

} // namespace vedocr
