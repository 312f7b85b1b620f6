// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <vector>

#include "vedocr/tensor.hpp"

namespace vedocr {

/// One convolution of the recognizer stack: kernels [F,C,kh,kw] applied with
/// (stride_h, stride_w), bias per output channel, GELU after.
struct ConvLayerParams {
    Tensor kernels;
    Tensor bias;
    int64_t stride_h = 1;
    int64_t stride_w = 1;
};

/// Recurrence-free convolutional recognizer: a height-collapsing conv stack
/// whose frame count grows with image width, followed by a linear projection
/// to V+1 classes (vocabulary plus blank; blank id = V).
struct CtcParams {
    std::vector<ConvLayerParams> convs;
    Tensor out_w; // [C_last, V+1]
    Tensor out_b;
    int64_t input_height = 0;
    int64_t min_width = 0;

    /// T as a function of the image width: per conv, w -> (w - kw)/stride + 1
    /// (valid padding), monotone non-decreasing in the input width.
    int64_t frame_count(int64_t width) const;
};

CtcParams init_ctc_params(Rng& rng, int64_t height, int64_t num_classes,
                          int64_t base_channels);

/// [1,H,W] -> per-frame logits [T, V+1]; frames run left to right in image-x
/// order. Images narrower than the receptive field are a contract error.
Tensor frame_features(const Tensor& image, const CtcParams& params);

/// Exact log-space CTC forward algorithm over the blank-interleaved label
/// sequence; differentiable through the tape. Targets that no length-T
/// alignment can produce raise InfeasibleError.
Tensor ctc_loss(const Tensor& frame_logits, std::span<const int64_t> labels);

/// Enumeration oracle: sums the probability of every length-T path that
/// collapses to `labels`. Guarded to (V+1)^T <= 1e6.
double ctc_brute_force(const Tensor& frame_logits,
                       std::span<const int64_t> labels);

/// All collapsed strings with their total path probability (same guard).
std::map<std::vector<int64_t>, double>
ctc_brute_force_all(const Tensor& frame_logits);

/// Best path decoding: frame argmax, collapse adjacent repeats, drop blanks.
std::vector<int64_t> ctc_greedy_decode(const Tensor& frame_logits);

/// T >= U + (number of adjacent equal label pairs).
bool ctc_feasible(int64_t frames, std::span<const int64_t> labels);

} // namespace vedocr
