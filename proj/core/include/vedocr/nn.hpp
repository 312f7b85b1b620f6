// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "vedocr/tensor.hpp"

namespace vedocr {

/// Boolean attention mask over [Lq, Lk] query/key pairs.
struct AttentionMask {
    int64_t lq = 0;
    int64_t lk = 0;
    std::vector<uint8_t> allowed; // row-major, 1 = may attend

    static AttentionMask all_allowed(int64_t lq, int64_t lk);
    /// Position i may attend to every j <= i.
    static AttentionMask causal(int64_t n);

    bool at(int64_t i, int64_t j) const { return allowed[i * lk + j] != 0; }
    void set(int64_t i, int64_t j, bool value) {
        allowed[i * lk + j] = value ? 1 : 0;
    }
};

struct LayerNormParams {
    Tensor gain;
    Tensor bias;
};

struct AttentionParams {
    Tensor wq, bq;
    Tensor wk, bk;
    Tensor wv, bv;
    Tensor wo, bo;
};

struct FeedForwardParams {
    Tensor w1, b1;
    Tensor w2, b2;
};

/// Captures the post-softmax attention weights of the most recent call,
/// one [Lq*Lk] row-major matrix per head. Test/debug aid only.
struct AttentionProbe {
    int64_t lq = 0;
    int64_t lk = 0;
    std::vector<std::vector<double>> head_weights;
};

constexpr double kLayerNormEps = 1e-5;
/// Additive logit penalty standing in for -inf on forbidden pairs; large
/// enough that exp() underflows to exactly zero after max-subtraction.
constexpr double kMaskPenalty = -1e9;

/// Scaled dot-product attention over `heads` heads with scale
/// 1/sqrt(D/heads). Forbidden pairs receive exactly zero weight; a mask row
/// with no allowed key is a contract error. `bias` (when given) is added to
/// the pre-softmax logits of every head and participates in autodiff.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& params, int64_t heads,
                            const AttentionMask* mask = nullptr,
                            const Tensor* bias = nullptr,
                            AttentionProbe* probe = nullptr);

/// Position-wise linear -> gelu -> linear.
Tensor feed_forward(const Tensor& x, const FeedForwardParams& params);

/// Token embedding lookup; gradients scatter-add into the table rows.
Tensor embed(std::span<const int64_t> ids, const Tensor& table);

Tensor apply_layer_norm(const Tensor& x, const LayerNormParams& p);

// Parameter factories. Projections draw normal(0, 0.02) by default; the
// fan_in flag switches to normal(0, 1/sqrt(fan_in)) for modules whose
// recipes do not pin the initializer. Biases start at zero, gains at one.
Tensor init_weight(Rng& rng, int64_t rows, int64_t cols);
Tensor init_weight_fan_in(Rng& rng, int64_t rows, int64_t cols);
Tensor init_bias(int64_t n);
LayerNormParams init_layer_norm(int64_t d);
AttentionParams init_attention(Rng& rng, int64_t q_in, int64_t kv_in,
                               int64_t d, bool fan_in = false);
FeedForwardParams init_feed_forward(Rng& rng, int64_t d, int64_t hidden,
                                    bool fan_in = false);

} // namespace vedocr
