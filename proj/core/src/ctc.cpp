// SPDX-License-Identifier: Apache-2.0
#include "vedocr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "vedocr/error.hpp"
#include "vedocr/nn.hpp"

namespace vedocr {

int64_t CtcParams::frame_count(int64_t width) const {
    int64_t w = width;
    for (const ConvLayerParams& conv : convs) {
        const int64_t kw = conv.kernels.dim(3);
        if (w < kw) return 0;
        w = (w - kw) / conv.stride_w + 1;
    }
    return w;
}

CtcParams init_ctc_params(Rng& rng, int64_t height, int64_t num_classes,
                          int64_t base_channels) {
    if (height < 8 || num_classes < 2 || base_channels < 1) {
        throw ContractError("ctc: bad height/classes/channels");
    }
    CtcParams p;
    p.input_height = height;
    const auto add_conv = [&](int64_t in_c, int64_t out_c, int64_t kh,
                              int64_t kw, int64_t sh, int64_t sw) {
        ConvLayerParams conv;
        // Fan-in scaling keeps activations from vanishing through the
        // norm-free stack.
        const double stddev =
            std::sqrt(2.0 / static_cast<double>(in_c * kh * kw));
        conv.kernels = Tensor::randn(rng, {out_c, in_c, kh, kw}, 0.0, stddev,
                                     /*requires_grad=*/true);
        conv.bias = Tensor::zeros({out_c}, true);
        conv.stride_h = sh;
        conv.stride_w = sw;
        p.convs.push_back(std::move(conv));
    };
    // Three 3x3 stages shrink the height (and the first two halve the
    // width); the final stage's kernel spans whatever height remains, so the
    // output is exactly one row of frames.
    int64_t h = height;
    add_conv(1, base_channels, 3, 3, 2, 2);
    h = (h - 3) / 2 + 1;
    add_conv(base_channels, base_channels * 2, 3, 3, 2, 2);
    h = (h - 3) / 2 + 1;
    if (h < 3) {
        throw ContractError("ctc: input height " + std::to_string(height) +
                            " is too small for the conv stack");
    }
    add_conv(base_channels * 2, base_channels * 3, 3, 3, 2, 1);
    h = (h - 3) / 2 + 1;
    add_conv(base_channels * 3, base_channels * 4, h, 3, 1, 1);
    p.out_w = Tensor::randn(
        rng, {base_channels * 4, num_classes}, 0.0,
        std::sqrt(1.0 / static_cast<double>(base_channels * 4)),
        /*requires_grad=*/true);
    p.out_b = init_bias(num_classes);
    for (int64_t w = 1;; ++w) {
        if (p.frame_count(w) >= 1) {
            p.min_width = w;
            break;
        }
    }
    return p;
}

Tensor frame_features(const Tensor& image, const CtcParams& params) {
    if (image.rank() != 3 || image.dim(0) != 1) {
        throw DimensionError("frame_features: expected [1,H,W], got " +
                             shape_str(image.shape()));
    }
    if (image.dim(1) != params.input_height) {
        throw ContractError("frame_features: image height " +
                            std::to_string(image.dim(1)) +
                            " does not match the stack's " +
                            std::to_string(params.input_height));
    }
    if (image.dim(2) < params.min_width) {
        throw ContractError("frame_features: width " +
                            std::to_string(image.dim(2)) +
                            " is below the receptive minimum " +
                            std::to_string(params.min_width));
    }
    Tensor x = image;
    for (const ConvLayerParams& conv : params.convs) {
        x = gelu(add_channel_bias(
            conv2d(x, conv.kernels, conv.stride_h, conv.stride_w),
            conv.bias));
    }
    // [C, 1, T] -> [T, C] -> [T, V+1]
    const int64_t c = x.dim(0), t = x.dim(2);
    const Tensor frames = transpose(reshape(x, {c, t}));
    return add_rowvec(matmul(frames, params.out_w), params.out_b);
}

bool ctc_feasible(int64_t frames, std::span<const int64_t> labels) {
    int64_t repeats = 0;
    for (size_t i = 1; i < labels.size(); ++i) {
        if (labels[i] == labels[i - 1]) ++repeats;
    }
    return frames >= static_cast<int64_t>(labels.size()) + repeats;
}

namespace {

void check_logits(const Tensor& logits, const char* op_name) {
    if (logits.rank() != 2 || logits.dim(0) < 1 || logits.dim(1) < 2) {
        throw DimensionError(std::string(op_name) +
                             ": expected [T, V+1] logits, got " +
                             shape_str(logits.shape()));
    }
}

void check_labels(std::span<const int64_t> labels, int64_t blank,
                  const char* op_name) {
    for (int64_t l : labels) {
        if (l < 0 || l >= blank) {
            throw IndexError(std::string(op_name) + ": label " +
                             std::to_string(l) + " out of [0," +
                             std::to_string(blank) + ")");
        }
    }
}

/// log(sum(exp(terms))) over scalar tensors, stabilized by the detached max;
/// the detachment is exact because d(lse)/dx_i is the softmax weight either
/// way.
Tensor log_sum_exp(std::span<const Tensor> terms) {
    double m = terms[0].item();
    for (const Tensor& t : terms) m = std::max(m, t.item());
    Tensor acc = exp(add_scalar(terms[0], -m));
    for (size_t i = 1; i < terms.size(); ++i) {
        acc = add(acc, exp(add_scalar(terms[i], -m)));
    }
    return add_scalar(log(acc), m);
}

} // namespace

Tensor ctc_loss(const Tensor& frame_logits, std::span<const int64_t> labels) {
    check_logits(frame_logits, "ctc_loss");
    const int64_t t_max = frame_logits.dim(0);
    const int64_t num_classes = frame_logits.dim(1);
    const int64_t blank = num_classes - 1;
    check_labels(labels, blank, "ctc_loss");
    if (!ctc_feasible(t_max, labels)) {
        throw InfeasibleError(
            "ctc_loss: target of length " + std::to_string(labels.size()) +
            " (with adjacent repeats) cannot align to " +
            std::to_string(t_max) + " frames");
    }

    const int64_t u = static_cast<int64_t>(labels.size());
    const int64_t s_max = 2 * u + 1;
    std::vector<int64_t> ext(static_cast<size_t>(s_max), blank);
    for (int64_t i = 0; i < u; ++i) ext[static_cast<size_t>(2 * i + 1)] = labels[i];

    const Tensor logp = log_softmax(frame_logits, 1);
    const auto cell_logp = [&](int64_t t, int64_t s) {
        return select_item(logp, t * num_classes + ext[static_cast<size_t>(s)]);
    };

    std::vector<std::optional<Tensor>> prev(static_cast<size_t>(s_max));
    prev[0] = cell_logp(0, 0);
    if (s_max > 1) prev[1] = cell_logp(0, 1);
    for (int64_t t = 1; t < t_max; ++t) {
        std::vector<std::optional<Tensor>> cur(static_cast<size_t>(s_max));
        for (int64_t s = 0; s < s_max; ++s) {
            std::vector<Tensor> sources;
            if (prev[s]) sources.push_back(*prev[s]);
            if (s >= 1 && prev[s - 1]) sources.push_back(*prev[s - 1]);
            const bool can_skip = s >= 2 && ext[s] != blank &&
                                  ext[s] != ext[static_cast<size_t>(s - 2)];
            if (can_skip && prev[s - 2]) sources.push_back(*prev[s - 2]);
            if (sources.empty()) continue;
            cur[static_cast<size_t>(s)] =
                add(log_sum_exp(sources), cell_logp(t, s));
        }
        prev = std::move(cur);
    }
    std::vector<Tensor> finals;
    if (prev[static_cast<size_t>(s_max - 1)]) {
        finals.push_back(*prev[static_cast<size_t>(s_max - 1)]);
    }
    if (s_max >= 2 && prev[static_cast<size_t>(s_max - 2)]) {
        finals.push_back(*prev[static_cast<size_t>(s_max - 2)]);
    }
    if (finals.empty()) {
        // Feasibility was checked above; an empty final set cannot happen.
        throw ContractError("ctc_loss: no surviving alignment state");
    }
    return neg(log_sum_exp(finals));
}

namespace {

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
    const int64_t t_max = logits.dim(0), v = logits.dim(1);
    std::vector<std::vector<double>> probs(
        static_cast<size_t>(t_max), std::vector<double>(static_cast<size_t>(v)));
    auto ld = logits.data();
    for (int64_t t = 0; t < t_max; ++t) {
        double mx = ld[t * v];
        for (int64_t i = 1; i < v; ++i) mx = std::max(mx, ld[t * v + i]);
        double denom = 0.0;
        for (int64_t i = 0; i < v; ++i) {
            probs[t][i] = std::exp(ld[t * v + i] - mx);
            denom += probs[t][i];
        }
        for (int64_t i = 0; i < v; ++i) probs[t][i] /= denom;
    }
    return probs;
}

std::vector<int64_t> collapse_path(std::span<const int64_t> path,
                                   int64_t blank) {
    std::vector<int64_t> out;
    for (size_t i = 0; i < path.size(); ++i) {
        if (i > 0 && path[i] == path[i - 1]) continue; // collapse repeats
        if (path[i] == blank) continue;                // then drop blanks
        out.push_back(path[i]);
    }
    return out;
}

void check_search_space(const Tensor& logits) {
    const double paths = std::pow(static_cast<double>(logits.dim(1)),
                                  static_cast<double>(logits.dim(0)));
    if (paths > 1e6) {
        throw ContractError("ctc_brute_force: (V+1)^T = " +
                            std::to_string(paths) + " exceeds 1e6");
    }
}

template <typename Visit>
void for_each_path(const Tensor& logits, Visit&& visit) {
    const int64_t t_max = logits.dim(0), v = logits.dim(1);
    const auto probs = softmax_rows(logits);
    std::vector<int64_t> path(static_cast<size_t>(t_max), 0);
    while (true) {
        double prob = 1.0;
        for (int64_t t = 0; t < t_max; ++t) {
            prob *= probs[static_cast<size_t>(t)]
                         [static_cast<size_t>(path[static_cast<size_t>(t)])];
        }
        visit(path, prob);
        int64_t pos = t_max - 1;
        while (pos >= 0 && ++path[static_cast<size_t>(pos)] == v) {
            path[static_cast<size_t>(pos)] = 0;
            --pos;
        }
        if (pos < 0) break;
    }
}

} // namespace

double ctc_brute_force(const Tensor& frame_logits,
                       std::span<const int64_t> labels) {
    check_logits(frame_logits, "ctc_brute_force");
    check_search_space(frame_logits);
    const int64_t blank = frame_logits.dim(1) - 1;
    check_labels(labels, blank, "ctc_brute_force");
    const std::vector<int64_t> want(labels.begin(), labels.end());
    double total = 0.0;
    for_each_path(frame_logits,
                  [&](const std::vector<int64_t>& path, double prob) {
                      if (collapse_path(path, blank) == want) total += prob;
                  });
    return total;
}

std::map<std::vector<int64_t>, double>
ctc_brute_force_all(const Tensor& frame_logits) {
    check_logits(frame_logits, "ctc_brute_force");
    check_search_space(frame_logits);
    const int64_t blank = frame_logits.dim(1) - 1;
    std::map<std::vector<int64_t>, double> totals;
    for_each_path(frame_logits,
                  [&](const std::vector<int64_t>& path, double prob) {
                      totals[collapse_path(path, blank)] += prob;
                  });
    return totals;
}

std::vector<int64_t> ctc_greedy_decode(const Tensor& frame_logits) {
    check_logits(frame_logits, "ctc_greedy_decode");
    const int64_t t_max = frame_logits.dim(0), v = frame_logits.dim(1);
    auto ld = frame_logits.data();
    std::vector<int64_t> path(static_cast<size_t>(t_max));
    for (int64_t t = 0; t < t_max; ++t) {
        int64_t best = 0;
        for (int64_t i = 1; i < v; ++i) {
            if (ld[t * v + i] > ld[t * v + best]) best = i;
        }
        path[static_cast<size_t>(t)] = best;
    }
    return collapse_path(path, v - 1);
}

} // namespace vedocr
