// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "vedocr/checkpoint.hpp"
#include "vedocr/config.hpp"
#include "vedocr/data.hpp"
#include "vedocr/decoder.hpp"
#include "vedocr/tokenizer.hpp"

namespace vedocr {

struct TrainSample {
    GrayImage image;
    std::string text;
};

enum class PretrainObjective { Mim, Mlm };

/// A trainable text-line recognizer: the vision encoder-decoder (global or
/// windowed encoder) or the convolutional CTC baseline, behind one surface
/// so the trainer, evaluator and CLI need not care which family it is.
class Recognizer {
public:
    virtual ~Recognizer() = default;

    const ModelConfig& config() const { return config_; }
    const Tokenizer& tokenizer() const { return tokenizer_; }
    std::span<NamedParam> parameters() { return params_; }
    std::span<const NamedParam> parameters() const { return params_; }

    /// Supervised objective on one sample, recorded on the active tape.
    virtual Tensor training_loss(const TrainSample& sample) = 0;

    /// Self-supervised objective (MIM over images / MLM over texts).
    virtual Tensor pretrain_loss(const TrainSample& sample,
                                 PretrainObjective objective, double rate,
                                 uint64_t seed) = 0;

    virtual std::string recognize(const GrayImage& image) const = 0;

    Tensor preprocess_sample(const GrayImage& image) const;

protected:
    Recognizer(ModelConfig config, Tokenizer tokenizer);

    ModelConfig config_;
    Tokenizer tokenizer_;
    std::vector<NamedParam> params_;
};

/// Fresh model with seeded initialization.
std::unique_ptr<Recognizer> build_model(const ModelConfig& config,
                                        Tokenizer tokenizer, uint64_t seed);

/// Rebuilds a model from a checkpoint (config + vocabulary + weights).
/// `randomize_cross` re-draws the decoder cross-attention projections
/// instead of loading them, the warm-start path for checkpoints whose
/// cross-attention should start fresh.
std::unique_ptr<Recognizer> model_from_checkpoint(const Checkpoint& ckpt,
                                                  bool randomize_cross = false,
                                                  uint64_t seed = 42);

void save_model(const std::string& path, const Recognizer& model);

} // namespace vedocr
