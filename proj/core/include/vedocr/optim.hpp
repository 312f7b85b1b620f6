// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vedocr/tensor.hpp"

namespace vedocr {

/// Training regime. The defaults are the reference recipe: Adam with
/// betas (0.9, 0.999) and eps 1e-8, lr 5e-5 under a cosine schedule, batch 8
/// with 8 accumulation steps for an effective batch of 64, 50 epochs,
/// seed 42.
struct HyperParams {
    double lr = 5e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t train_batch = 8;
    int64_t eval_batch = 8;
    int64_t grad_accum_steps = 8;
    int64_t epochs = 50;
    uint64_t seed = 42;
    std::string schedule = "cosine";

    int64_t effective_batch() const { return train_batch * grad_accum_steps; }
    void validate() const;

    static HyperParams from_json_file(const std::string& path);
};

/// Per-parameter first/second moments plus the shared step counter.
struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    int64_t t = 0;

    static AdamState for_params(std::span<const Tensor> params);
};

/// One bias-corrected Adam update: p -= lr * m_hat / (sqrt(v_hat) + eps).
/// The step counter increments exactly once per call.
void adam_step(std::span<Tensor> params,
               std::span<const std::vector<double>> grads, AdamState& state,
               const HyperParams& hp, double lr_t);

/// base_lr * (1 + cos(pi * step / total)) / 2; no warmup, floor 0.
double cosine_lr(int64_t step, int64_t total_steps, double base_lr);

} // namespace vedocr
