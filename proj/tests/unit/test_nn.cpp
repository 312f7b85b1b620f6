// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "vedocr/nn.hpp"

using namespace vedocr;

namespace {

AttentionParams identity_attention(int64_t d) {
    AttentionParams p;
    const auto eye = [d] {
        Tensor t({d, d});
        for (int64_t i = 0; i < d; ++i) t.data()[i * d + i] = 1.0;
        return t;
    };
    p.wq = eye();
    p.wk = eye();
    p.wv = eye();
    p.wo = eye();
    p.bq = Tensor::zeros({d});
    p.bk = Tensor::zeros({d});
    p.bv = Tensor::zeros({d});
    p.bo = Tensor::zeros({d});
    return p;
}

} // namespace

TEST_SUITE("nn_blocks") {

TEST_CASE("single key: every query gets the projected v row") {
    Rng rng(1);
    AttentionParams p = init_attention(rng, 6, 6, 6);
    const Tensor q = Tensor::randn(rng, {4, 6}, 0.0, 1.0);
    const Tensor k = Tensor::randn(rng, {1, 6}, 0.0, 1.0);
    const Tensor v = Tensor::randn(rng, {1, 6}, 0.0, 1.0);
    const Tensor out = multi_head_attention(q, k, v, p, 2);
    // One key means attention weight 1 regardless of the query.
    const Tensor expect = multi_head_attention(
        Tensor::randn(rng, {1, 6}, 0.0, 1.0), k, v, p, 2);
    for (int64_t r = 0; r < 4; ++r)
        for (int64_t c = 0; c < 6; ++c)
            CHECK(out.data()[r * 6 + c] ==
                  doctest::Approx(expect.data()[c]).epsilon(1e-12));
}

TEST_CASE("hand-computed weights via identity projections") {
    // One-hot orthogonal q/k and v = I make the output equal the weight
    // matrix itself.
    const int64_t d = 3;
    AttentionParams p = identity_attention(d);
    Tensor q({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor k = q.clone();
    Tensor v = q.clone();
    AttentionProbe probe;
    const Tensor out =
        multi_head_attention(q, k, v, p, 1, nullptr, nullptr, &probe);
    const double scale = 1.0 / std::sqrt(3.0);
    const double hi = std::exp(scale), lo = std::exp(0.0);
    const double diag = hi / (hi + 2 * lo);
    const double off = lo / (hi + 2 * lo);
    for (int64_t i = 0; i < 3; ++i)
        for (int64_t j = 0; j < 3; ++j) {
            const double expect = i == j ? diag : off;
            CHECK(out.data()[i * 3 + j] == doctest::Approx(expect));
            CHECK(probe.head_weights[0][i * 3 + j] ==
                  doctest::Approx(expect));
        }
}

TEST_CASE("causal mask zeroes the upper triangle exactly") {
    AttentionParams p = identity_attention(3);
    Rng rng(2);
    const Tensor q = Tensor::randn(rng, {3, 3}, 0.0, 1.0);
    const AttentionMask mask = AttentionMask::causal(3);
    AttentionProbe probe;
    multi_head_attention(q, q, q, p, 1, &mask, nullptr, &probe);
    for (int64_t i = 0; i < 3; ++i) {
        double row_sum = 0.0;
        for (int64_t j = 0; j < 3; ++j) {
            const double wgt = probe.head_weights[0][i * 3 + j];
            if (j > i) CHECK(wgt == 0.0);
            row_sum += wgt;
        }
        CHECK(std::abs(row_sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("fully forbidden mask row is a contract error") {
    AttentionParams p = identity_attention(2);
    const Tensor q({2, 2}, {1, 0, 0, 1});
    AttentionMask mask = AttentionMask::all_allowed(2, 2);
    mask.set(1, 0, false);
    mask.set(1, 1, false);
    CHECK_THROWS_AS(multi_head_attention(q, q, q, p, 1, &mask), ContractError);
}

TEST_CASE("head count must divide the model dim") {
    AttentionParams p = identity_attention(4);
    const Tensor q({2, 4});
    CHECK_THROWS_AS(multi_head_attention(q, q, q, p, 3), ContractError);
}

TEST_CASE("feed_forward zero weights and gradcheck") {
    Rng rng(3);
    FeedForwardParams zero;
    zero.w1 = Tensor::zeros({4, 8});
    zero.b1 = Tensor::zeros({8});
    zero.w2 = Tensor::zeros({8, 4});
    zero.b2 = Tensor::zeros({4});
    const Tensor x = Tensor::randn(rng, {3, 4}, 0.0, 1.0);
    const Tensor out = feed_forward(x, zero);
    for (double v : out.data()) CHECK(v == 0.0);

    FeedForwardParams p = init_feed_forward(rng, 4, 8);
    const double err = finite_difference_check(
        [&](const Tensor& w) {
            FeedForwardParams q = p;
            q.w1 = w;
            return sum_all(mul(feed_forward(x, q), feed_forward(x, q)));
        },
        p.w1.clone(), 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("feed_forward identity-like construction approximates gelu") {
    const int64_t d = 3;
    FeedForwardParams p;
    p.w1 = Tensor({d, d});
    p.w2 = Tensor({d, d});
    for (int64_t i = 0; i < d; ++i) {
        p.w1.data()[i * d + i] = 1.0;
        p.w2.data()[i * d + i] = 1.0;
    }
    p.b1 = Tensor::zeros({d});
    p.b2 = Tensor::zeros({d});
    const Tensor x({1, 3}, {2.0, 3.0, 4.0}); // positive, gelu(x) ~ x
    const Tensor out = feed_forward(x, p);
    const Tensor g = gelu(x);
    for (int64_t i = 0; i < 3; ++i)
        CHECK(out.data()[i] == doctest::Approx(g.data()[i]).epsilon(1e-12));
}

TEST_CASE("embed basics") {
    Tensor table({3, 2}, {9, 8, 7, 6, 5, 4}, true);
    const std::vector<int64_t> ids{0};
    const Tensor row = embed(ids, table);
    CHECK(row.data()[0] == 9);
    CHECK(row.data()[1] == 8);

    const std::vector<int64_t> twice{2, 2};
    Tape tape;
    const Tensor loss = sum_all(embed(twice, table));
    tape.backward(loss);
    CHECK(table.grad()[4] == doctest::Approx(2.0));

    const std::vector<int64_t> oob{3};
    CHECK_THROWS_AS(embed(oob, table), IndexError);
}

} // TEST_SUITE
