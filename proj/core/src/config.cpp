// SPDX-License-Identifier: Apache-2.0
#include "vedocr/config.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vedocr/error.hpp"

namespace vedocr {

std::string variant_name(ModelVariant v) {
    switch (v) {
    case ModelVariant::Global: return "global";
    case ModelVariant::Windowed: return "windowed";
    default: return "ctc";
    }
}

ModelVariant variant_from_name(const std::string& name) {
    if (name == "global") return ModelVariant::Global;
    if (name == "windowed") return ModelVariant::Windowed;
    if (name == "ctc") return ModelVariant::Ctc;
    throw ValidationError("variant must be global|windowed|ctc, got '" + name +
                          "'");
}

void ModelConfig::validate() const {
    if (height < 1 || width < 1 || patch < 1 || dim < 1) {
        throw ContractError("model config: dimensions must be positive");
    }
    if (height % patch != 0 || width % patch != 0) {
        throw ContractError("model config: patch " + std::to_string(patch) +
                            " must divide " + std::to_string(height) + "x" +
                            std::to_string(width));
    }
    if (variant != ModelVariant::Ctc) {
        if (heads < 1 || dim % heads != 0) {
            throw ContractError("model config: heads " +
                                std::to_string(heads) + " must divide dim " +
                                std::to_string(dim));
        }
        if (enc_layers < 1 || dec_layers < 1 || lmax < 2) {
            throw ContractError("model config: layer counts and lmax must be "
                                "positive");
        }
    }
    if (variant == ModelVariant::Windowed) {
        const int64_t s = resolved_shift();
        if (window < 1 || s < 0 || s >= window) {
            throw ContractError("model config: need 0 <= shift < window");
        }
        int64_t gh = height / patch, gw = width / patch;
        for (int64_t stage = 0; stage <= merge_stages; ++stage) {
            if (gh % window != 0 || gw % window != 0) {
                throw ContractError(
                    "model config: window " + std::to_string(window) +
                    " does not divide the stage-" + std::to_string(stage) +
                    " token grid " + std::to_string(gh) + "x" +
                    std::to_string(gw));
            }
            if (stage < merge_stages) {
                if (gh % 2 != 0 || gw % 2 != 0) {
                    throw ContractError(
                        "model config: merge stage needs even grids");
                }
                gh /= 2;
                gw /= 2;
            }
        }
    }
}

namespace {

ModelConfig parse_config(const nlohmann::json& j,
                         const std::string& base_dir) {
    ModelConfig c;
    c.variant = variant_from_name(j.value("variant", std::string("global")));
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.patch = j.value("patch", c.patch);
    c.dim = j.value("dim", c.dim);
    c.enc_layers = j.value("enc_layers", c.enc_layers);
    c.dec_layers = j.value("dec_layers", c.dec_layers);
    c.heads = j.value("heads", c.heads);
    c.window = j.value("window", c.window);
    c.shift = j.value("shift", c.shift);
    c.merge_stages = j.value("merge_stages", c.merge_stages);
    c.lmax = j.value("lmax", c.lmax);
    c.ffn_hidden = j.value("ffn_hidden", c.ffn_hidden);
    c.vocab_path = j.value("vocab", std::string());
    if (!c.vocab_path.empty() && !base_dir.empty()) {
        const std::filesystem::path p(c.vocab_path);
        if (p.is_relative()) {
            c.vocab_path = (std::filesystem::path(base_dir) / p).string();
        }
    }
    c.validate();
    return c;
}

} // namespace

ModelConfig ModelConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("model config: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("model config " + path + ": " + e.what());
    }
    return parse_config(j,
                        std::filesystem::path(path).parent_path().string());
}

ModelConfig ModelConfig::from_json_string(const std::string& json) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model config: ") + e.what());
    }
    return parse_config(j, "");
}

std::string ModelConfig::to_json_string() const {
    nlohmann::json j;
    j["variant"] = variant_name(variant);
    j["height"] = height;
    j["width"] = width;
    j["patch"] = patch;
    j["dim"] = dim;
    j["enc_layers"] = enc_layers;
    j["dec_layers"] = dec_layers;
    j["heads"] = heads;
    j["window"] = window;
    j["shift"] = shift;
    j["merge_stages"] = merge_stages;
    j["lmax"] = lmax;
    j["ffn_hidden"] = ffn_hidden;
    return j.dump();
}

} // namespace vedocr
