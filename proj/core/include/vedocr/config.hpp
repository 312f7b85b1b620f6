// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace vedocr {

enum class ModelVariant { Global, Windowed, Ctc };

std::string variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

/// Architecture description shared by every variant. All values are artifact
/// defaults, tunable per experiment; swapping encoder families is purely a
/// matter of the `variant` field.
struct ModelConfig {
    ModelVariant variant = ModelVariant::Global;
    int64_t height = 32;
    int64_t width = 128;
    int64_t patch = 16;
    int64_t dim = 64;
    int64_t enc_layers = 2;
    int64_t dec_layers = 2;
    int64_t heads = 4;
    int64_t window = 2;      // windowed variant only
    int64_t shift = -1;      // -1 -> window / 2
    int64_t merge_stages = 0;
    int64_t lmax = 128;
    int64_t ffn_hidden = 0;  // 0 -> 4 * dim
    std::string vocab_path;  // resolved against the config file's directory

    int64_t resolved_shift() const { return shift < 0 ? window / 2 : shift; }
    int64_t resolved_ffn_hidden() const {
        return ffn_hidden > 0 ? ffn_hidden : 4 * dim;
    }
    void validate() const;

    static ModelConfig from_json_file(const std::string& path);
    static ModelConfig from_json_string(const std::string& json);
    std::string to_json_string() const;
};

} // namespace vedocr
