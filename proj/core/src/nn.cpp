// SPDX-License-Identifier: Apache-2.0
#include "vedocr/nn.hpp"

#include <cmath>
#include <string>

namespace vedocr {

AttentionMask AttentionMask::all_allowed(int64_t lq, int64_t lk) {
    AttentionMask m;
    m.lq = lq;
    m.lk = lk;
    m.allowed.assign(static_cast<size_t>(lq * lk), 1);
    return m;
}

AttentionMask AttentionMask::causal(int64_t n) {
    AttentionMask m;
    m.lq = n;
    m.lk = n;
    m.allowed.assign(static_cast<size_t>(n * n), 0);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j <= i; ++j) m.allowed[i * n + j] = 1;
    return m;
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const AttentionParams& params, int64_t heads,
                            const AttentionMask* mask, const Tensor* bias,
                            AttentionProbe* probe) {
    const int64_t lq = q.dim(0);
    const int64_t lk = k.dim(0);
    const int64_t d = params.wq.dim(1);
    if (heads < 1 || d % heads != 0) {
        throw ContractError("attention: head count " + std::to_string(heads) +
                            " must divide model dim " + std::to_string(d));
    }
    if (v.dim(0) != lk) {
        throw DimensionError("attention: k has " + std::to_string(lk) +
                             " rows but v has " + std::to_string(v.dim(0)));
    }
    Tensor mask_bias;
    if (mask != nullptr) {
        if (mask->lq != lq || mask->lk != lk) {
            throw DimensionError("attention: mask is " +
                                 std::to_string(mask->lq) + "x" +
                                 std::to_string(mask->lk) + " for " +
                                 std::to_string(lq) + "x" +
                                 std::to_string(lk) + " attention");
        }
        mask_bias = Tensor({lq, lk});
        auto md = mask_bias.data();
        for (int64_t i = 0; i < lq; ++i) {
            bool any = false;
            for (int64_t j = 0; j < lk; ++j) {
                const bool ok = mask->at(i, j);
                any = any || ok;
                md[i * lk + j] = ok ? 0.0 : kMaskPenalty;
            }
            if (!any) {
                throw ContractError(
                    "attention: mask row " + std::to_string(i) +
                    " forbids every key; softmax would be undefined");
            }
        }
    }

    const Tensor qp = add_rowvec(matmul(q, params.wq), params.bq);
    const Tensor kp = add_rowvec(matmul(k, params.wk), params.bk);
    const Tensor vp = add_rowvec(matmul(v, params.wv), params.bv);

    const int64_t dh = d / heads;
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    if (probe != nullptr) {
        probe->lq = lq;
        probe->lk = lk;
        probe->head_weights.clear();
    }
    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<size_t>(heads));
    for (int64_t h = 0; h < heads; ++h) {
        const Tensor qh = slice_cols(qp, h * dh, dh);
        const Tensor kh = slice_cols(kp, h * dh, dh);
        const Tensor vh = slice_cols(vp, h * dh, dh);
        Tensor logits = scale(matmul(qh, transpose(kh)), att_scale);
        if (bias != nullptr) logits = add(logits, *bias);
        if (mask != nullptr) logits = add(logits, mask_bias);
        const Tensor weights = softmax(logits, 1);
        if (probe != nullptr) {
            probe->head_weights.emplace_back(weights.data().begin(),
                                             weights.data().end());
        }
        head_outputs.push_back(matmul(weights, vh));
    }
    const Tensor merged = heads == 1 ? head_outputs.front()
                                     : concat_cols(head_outputs);
    return add_rowvec(matmul(merged, params.wo), params.bo);
}

Tensor feed_forward(const Tensor& x, const FeedForwardParams& params) {
    const Tensor hidden = gelu(add_rowvec(matmul(x, params.w1), params.b1));
    return add_rowvec(matmul(hidden, params.w2), params.b2);
}

Tensor embed(std::span<const int64_t> ids, const Tensor& table) {
    const int64_t vocab = table.dim(0);
    for (int64_t id : ids) {
        if (id < 0 || id >= vocab) {
            throw IndexError("embed: id " + std::to_string(id) +
                             " out of vocabulary [0," + std::to_string(vocab) +
                             ")");
        }
    }
    return gather_rows(table, ids);
}

Tensor apply_layer_norm(const Tensor& x, const LayerNormParams& p) {
    return layer_norm(x, p.gain, p.bias, kLayerNormEps);
}

Tensor init_weight(Rng& rng, int64_t rows, int64_t cols) {
    return Tensor::randn(rng, {rows, cols}, 0.0, 0.02, /*requires_grad=*/true);
}

Tensor init_weight_fan_in(Rng& rng, int64_t rows, int64_t cols) {
    const double stddev = std::sqrt(1.0 / static_cast<double>(rows));
    return Tensor::randn(rng, {rows, cols}, 0.0, stddev,
                         /*requires_grad=*/true);
}

Tensor init_bias(int64_t n) {
    return Tensor::zeros({n}, /*requires_grad=*/true);
}

LayerNormParams init_layer_norm(int64_t d) {
    return {Tensor::full({d}, 1.0, true), Tensor::zeros({d}, true)};
}

AttentionParams init_attention(Rng& rng, int64_t q_in, int64_t kv_in,
                               int64_t d, bool fan_in) {
    const auto draw = [&](int64_t rows, int64_t cols) {
        return fan_in ? init_weight_fan_in(rng, rows, cols)
                      : init_weight(rng, rows, cols);
    };
    AttentionParams p;
    p.wq = draw(q_in, d);
    p.bq = init_bias(d);
    p.wk = draw(kv_in, d);
    p.bk = init_bias(d);
    p.wv = draw(kv_in, d);
    p.bv = init_bias(d);
    p.wo = draw(d, d);
    p.bo = init_bias(d);
    return p;
}

FeedForwardParams init_feed_forward(Rng& rng, int64_t d, int64_t hidden,
                                    bool fan_in) {
    FeedForwardParams p;
    p.w1 = fan_in ? init_weight_fan_in(rng, d, hidden)
                  : init_weight(rng, d, hidden);
    p.b1 = init_bias(hidden);
    p.w2 = fan_in ? init_weight_fan_in(rng, hidden, d)
                  : init_weight(rng, hidden, d);
    p.b2 = init_bias(d);
    return p;
}

} // namespace vedocr
