// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vedocr/model.hpp"
#include "vedocr/optim.hpp"

namespace vedocr {

struct EpochLog {
    int64_t epoch = 0;
    double train_loss = 0.0;
    std::optional<double> dev_wer;
    std::optional<double> dev_loss;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> epochs;
    int64_t best_epoch = 0;
    double best_metric = 0.0; // dev WER (supervised) or dev loss (pretrain)
    std::string checkpoint_path;
    std::string metrics_path;
};

struct TrainOptions {
    enum class Objective { Supervised, Mim, Mlm };
    Objective objective = Objective::Supervised;
    double mim_mask_ratio = 0.5;
    double mlm_mask_prob = 0.15;
};

/// Loads manifest entries into memory (images + texts).
std::vector<TrainSample>
load_samples(const std::vector<SampleManifest>& manifests);

/// Per-sample WER of the recognizer over the samples, averaged per sample.
/// With `pooled` set, edits and reference lengths are pooled over the whole
/// corpus instead.
double evaluate_wer(const Recognizer& model,
                    const std::vector<TrainSample>& samples,
                    bool pooled = false);
double evaluate_cer(const Recognizer& model,
                    const std::vector<TrainSample>& samples,
                    bool pooled = false);

/// The training loop: seeded shuffling per epoch, micro-batches of
/// hp.train_batch whose gradients accumulate over hp.grad_accum_steps before
/// a single Adam update (loss = mean over the window's samples), cosine
/// schedule over the total optimizer steps. Each epoch logs the mean train
/// loss and, when a dev set is given, the dev metric evaluated at checkpoint
/// (float32) precision, so the retained best checkpoint reproduces its
/// logged dev score exactly. Writes metrics.jsonl and best.ckpt to out_dir.
TrainResult train(Recognizer& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& dev_set,
                  const HyperParams& hp, const std::string& out_dir,
                  const TrainOptions& options = {});

} // namespace vedocr
