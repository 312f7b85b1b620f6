// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vedocr/tensor.hpp"

using namespace vedocr;

namespace {

// Naive quadruple-loop reference used as the conv2d oracle.
std::vector<double> conv2d_reference(std::span<const double> x, int64_t c,
                                     int64_t h, int64_t w,
                                     std::span<const double> k, int64_t f,
                                     int64_t kh, int64_t kw, int64_t sh,
                                     int64_t sw) {
    const int64_t ho = (h - kh) / sh + 1;
    const int64_t wo = (w - kw) / sw + 1;
    std::vector<double> out(static_cast<size_t>(f * ho * wo), 0.0);
    for (int64_t of = 0; of < f; ++of)
        for (int64_t oy = 0; oy < ho; ++oy)
            for (int64_t ox = 0; ox < wo; ++ox)
                for (int64_t ic = 0; ic < c; ++ic)
                    for (int64_t ky = 0; ky < kh; ++ky)
                        for (int64_t kx = 0; kx < kw; ++kx)
                            out[(of * ho + oy) * wo + ox] +=
                                x[(ic * h + oy * sh + ky) * w + ox * sw + kx] *
                                k[((of * c + ic) * kh + ky) * kw + kx];
    return out;
}

Tensor random_tensor(Rng& rng, Shape shape, bool req = true) {
    Tensor t(std::move(shape), req);
    for (double& v : t.data()) v = rng.next_unit() * 2.0 - 1.0;
    return t;
}

} // namespace

TEST_SUITE("tensor_core") {

TEST_CASE("matmul identity") {
    const Tensor eye({2, 2}, {1, 0, 0, 1});
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor out = matmul(eye, a);
    CHECK(out.data()[0] == 1);
    CHECK(out.data()[1] == 2);
    CHECK(out.data()[2] == 3);
    CHECK(out.data()[3] == 4);
}

TEST_CASE("matmul hand example") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 1}, {5, 6});
    const Tensor out = matmul(a, b);
    CHECK(out.data()[0] == doctest::Approx(17));
    CHECK(out.data()[1] == doctest::Approx(39));
}

TEST_CASE("matmul shape mismatch names both shapes") {
    const Tensor a({2, 3});
    const Tensor b({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b),
                         doctest::Contains("[2,3]"), DimensionError);
}

TEST_CASE("softmax uniform and hand values") {
    const Tensor x({3}, {0, 0, 0});
    const Tensor s = softmax(x, 0);
    for (double v : s.data()) CHECK(v == doctest::Approx(1.0 / 3.0));

    const Tensor y({2}, {0.0, std::log(3.0)});
    const Tensor sy = softmax(y, 0);
    CHECK(sy.data()[0] == doctest::Approx(0.25));
    CHECK(sy.data()[1] == doctest::Approx(0.75));
}

TEST_CASE("softmax shift invariance and normalization") {
    Rng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor x = random_tensor(rng, {4, 5}, false);
        Tensor shifted = x.clone();
        for (double& v : shifted.data()) v += 3.7;
        const Tensor a = softmax(x, 1);
        const Tensor b = softmax(shifted, 1);
        for (int64_t i = 0; i < a.numel(); ++i) {
            CHECK(a.data()[i] == doctest::Approx(b.data()[i]).epsilon(1e-12));
            CHECK(a.data()[i] > 0.0);
            CHECK(a.data()[i] < 1.0);
        }
        for (int64_t r = 0; r < 4; ++r) {
            double sum = 0.0;
            for (int64_t c = 0; c < 5; ++c) sum += a.data()[r * 5 + c];
            CHECK(std::abs(sum - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("softmax axis bounds") {
    const Tensor x({2, 2});
    CHECK_THROWS_AS(softmax(x, 2), IndexError);
}

TEST_CASE("layer_norm basics") {
    const Tensor gamma({2}, {1, 1});
    const Tensor beta({2}, {0, 0});
    const Tensor x({1, 2}, {1, -1});
    const Tensor out = layer_norm(x, gamma, beta, 1e-12);
    CHECK(out.data()[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(out.data()[1] == doctest::Approx(-1.0).epsilon(1e-6));

    const Tensor constant({1, 2}, {5, 5});
    const Tensor out2 = layer_norm(constant, gamma, beta, 1e-12);
    CHECK(out2.data()[0] == doctest::Approx(0.0));
    CHECK(out2.data()[1] == doctest::Approx(0.0));

    const Tensor beta2({2}, {2, 2});
    const Tensor out3 = layer_norm(x, gamma, beta2, 1e-12);
    CHECK(out3.data()[0] == doctest::Approx(out.data()[0] + 2.0));
    CHECK(out3.data()[1] == doctest::Approx(out.data()[1] + 2.0));

    CHECK_THROWS_AS(layer_norm(x, gamma, beta, 0.0), ContractError);
}

TEST_CASE("gelu endpoints") {
    const Tensor x({3}, {0.0, 10.0, -10.0});
    const Tensor y = gelu(x);
    CHECK(y.data()[0] == doctest::Approx(0.0));
    CHECK(y.data()[1] == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(y.data()[2] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("conv2d identity kernel") {
    Rng rng(3);
    const Tensor x = random_tensor(rng, {1, 3, 4}, false);
    const Tensor k({1, 1, 1, 1}, std::vector<double>{1.0});
    const Tensor out = conv2d(x, k, 1, 1);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(out.data()[i] == x.data()[i]);
}

TEST_CASE("conv2d all-ones fixture and shape formula") {
    const Tensor x({1, 2, 2}, {1, 1, 1, 1});
    const Tensor k({1, 1, 2, 2}, {1, 1, 1, 1});
    const Tensor out = conv2d(x, k, 1, 1);
    CHECK(out.numel() == 1);
    CHECK(out.data()[0] == doctest::Approx(4.0));

    const Tensor x2({1, 3, 3});
    const Tensor k2({1, 1, 2, 2});
    const Tensor out2 = conv2d(x2, k2, 2, 2);
    CHECK(out2.shape() == Shape{1, 1, 1});

    const Tensor k3({1, 1, 4, 4});
    CHECK_THROWS_AS(conv2d(x2, k3, 1, 1), DimensionError);
}

TEST_CASE("conv2d agrees with the quadruple-loop reference exactly") {
    Rng rng(11);
    const Tensor x = random_tensor(rng, {2, 6, 7}, false);
    const Tensor k = random_tensor(rng, {3, 2, 3, 2}, false);
    const Tensor out = conv2d(x, k, 2, 1);
    const auto ref = conv2d_reference(x.data(), 2, 6, 7, k.data(), 3, 3, 2,
                                      2, 1);
    REQUIRE(out.numel() == static_cast<int64_t>(ref.size()));
    for (int64_t i = 0; i < out.numel(); ++i)
        CHECK(out.data()[i] == ref[static_cast<size_t>(i)]);
}

TEST_CASE("cross_entropy fixtures") {
    const Tensor uniform({1, 4}, {0.5, 0.5, 0.5, 0.5});
    const std::vector<int64_t> target{2};
    CHECK(cross_entropy(uniform, target, -1).item() ==
          doctest::Approx(std::log(4.0)));

    const Tensor confident({1, 4}, {0.0, 50.0, 0.0, 0.0});
    const std::vector<int64_t> t1{1};
    CHECK(cross_entropy(confident, t1, -1).item() ==
          doctest::Approx(0.0).epsilon(1e-9));

    const std::vector<int64_t> ignored{7, 7};
    const Tensor two({2, 4});
    CHECK(cross_entropy(two, ignored, 7).item() == 0.0);

    const std::vector<int64_t> bad{4};
    CHECK_THROWS_AS(cross_entropy(uniform, bad, -1), IndexError);
}

TEST_CASE("backward: d(sum x^2) = 2x") {
    Tensor x({2}, {1, 2}, true);
    Tape tape;
    const Tensor loss = sum_all(mul(x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));
}

TEST_CASE("backward: matmul chain matches finite differences") {
    Rng rng(5);
    const Tensor a0 = random_tensor(rng, {3, 4});
    const Tensor b = random_tensor(rng, {4, 2});
    const double err = finite_difference_check(
        [&](const Tensor& a) { return sum_all(mul(matmul(a, b), matmul(a, b))); },
        a0, 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("backward: unreachable tensor keeps zero grad") {
    Tensor x({2}, {1, 2}, true);
    Tensor y({2}, {3, 4}, true);
    Tape tape;
    const Tensor loss = sum_all(x);
    const Tensor unused = scale(y, 2.0); // recorded but not on the loss path
    (void)unused;
    tape.backward(loss);
    CHECK(y.grad()[0] == 0.0);
    CHECK(y.grad()[1] == 0.0);
}

TEST_CASE("backward contract errors") {
    Tensor x({2}, {1, 2}, true);
    Tape tape;
    const Tensor vec = scale(x, 2.0);
    CHECK_THROWS_AS(tape.backward(vec), ContractError); // not scalar
    const Tensor leaf = Tensor::scalar(1.0, true);
    CHECK_THROWS_AS(tape.backward(leaf), ContractError); // not on tape
}

TEST_CASE("backward is deterministic") {
    Rng rng(17);
    const Tensor base = random_tensor(rng, {4, 4});
    std::vector<double> first;
    for (int run = 0; run < 2; ++run) {
        Tensor x = base.clone(true);
        Tape tape;
        const Tensor loss =
            sum_all(mul(softmax(matmul(x, x), 1), matmul(x, x)));
        tape.backward(loss);
        if (run == 0) {
            first.assign(x.grad().begin(), x.grad().end());
        } else {
            for (size_t i = 0; i < first.size(); ++i)
                CHECK(x.grad()[i] == first[i]); // bit identical
        }
    }
}

TEST_CASE("finite differences: linear map has ~zero error") {
    Rng rng(23);
    const Tensor x = random_tensor(rng, {5});
    const double err = finite_difference_check(
        [](const Tensor& t) { return sum_all(t); }, x, 1e-5);
    CHECK(err < 1e-9);
}

TEST_CASE("finite differences: softmax+cross-entropy composite") {
    Rng rng(29);
    const Tensor x = random_tensor(rng, {3, 5});
    const std::vector<int64_t> targets{1, 4, 0};
    const double err = finite_difference_check(
        [&](const Tensor& t) { return cross_entropy(t, targets, -1); }, x,
        1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("finite differences: conv2d-then-sum") {
    Rng rng(31);
    const Tensor x = random_tensor(rng, {2, 5, 6}, false);
    const Tensor k0 = random_tensor(rng, {2, 2, 3, 3});
    const double err_k = finite_difference_check(
        [&](const Tensor& k) { return sum_all(gelu(conv2d(x, k, 1, 2))); },
        k0, 1e-5);
    CHECK(err_k < 1e-4);
    const Tensor x0 = random_tensor(rng, {2, 5, 6});
    const double err_x = finite_difference_check(
        [&](const Tensor& t) { return sum_all(gelu(conv2d(t, k0, 2, 1))); },
        x0, 1e-5);
    CHECK(err_x < 1e-4);
}

TEST_CASE("finite differences: every remaining differentiable op") {
    Rng rng(37);
    const Tensor m = random_tensor(rng, {3, 4});

    CHECK(finite_difference_check(
              [](const Tensor& t) { return mean_all(abs(t)); }, m, 1e-6) <
          1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  return sum_all(log(add_scalar(mul(t, t), 1.0)));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  return sum_all(mul(exp(scale(t, 0.5)), t));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  return sum_all(mul(log_softmax(t, 1), t));
              },
              m, 1e-5) < 1e-4);
    const Tensor gamma = random_tensor(rng, {4});
    const Tensor beta = random_tensor(rng, {4});
    CHECK(finite_difference_check(
              [&](const Tensor& t) {
                  return sum_all(mul(layer_norm(t, gamma, beta, 1e-5), t));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [&](const Tensor& g) {
                  return sum_all(abs(layer_norm(m, g, beta, 1e-5)));
              },
              gamma, 1e-5) < 1e-4);
    const std::vector<int64_t> ids{2, 0, 2};
    CHECK(finite_difference_check(
              [&](const Tensor& t) {
                  return mean_all(mul(gather_rows(t, ids), gather_rows(t, ids)));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  const Tensor cols = slice_cols(t, 1, 2);
                  const Tensor rows = slice_rows(t, 0, 2);
                  return add(sum_all(mul(cols, cols)),
                             sum_all(gelu(rows)));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  const std::vector<Tensor> parts{t, t};
                  return sum_all(mul(concat_rows(parts), concat_rows(parts)));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  const std::vector<Tensor> parts{t, t};
                  return mean_all(abs(concat_cols(parts)));
              },
              m, 1e-5) < 1e-4);
    const Tensor vec = random_tensor(rng, {4});
    CHECK(finite_difference_check(
              [&](const Tensor& v) {
                  return sum_all(gelu(add_rowvec(m, v)));
              },
              vec, 1e-5) < 1e-4);
    const std::vector<double> factors{0.5, -1.5, 2.0};
    CHECK(finite_difference_check(
              [&](const Tensor& t) {
                  return sum_all(mul_rows(mul(t, t), factors));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  return select_item(mul(t, t), 5);
              },
              m, 1e-6) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  return sum_all(mul(transpose(t), transpose(t)));
              },
              m, 1e-5) < 1e-4);
    CHECK(finite_difference_check(
              [](const Tensor& t) {
                  return sum_all(
                      mul(reshape(t, {2, 6}), reshape(t, {2, 6})));
              },
              m, 1e-5) < 1e-4);
    const Tensor bias = random_tensor(rng, {2});
    const Tensor plane = random_tensor(rng, {2, 3, 3});
    CHECK(finite_difference_check(
              [&](const Tensor& b) {
                  return sum_all(gelu(add_channel_bias(plane, b)));
              },
              bias, 1e-5) < 1e-4);
}

TEST_CASE("embedding-style gather accumulates repeated rows") {
    Tensor table({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    const std::vector<int64_t> ids{1, 1};
    Tape tape;
    const Tensor loss = sum_all(gather_rows(table, ids));
    tape.backward(loss);
    CHECK(table.grad()[2] == doctest::Approx(2.0));
    CHECK(table.grad()[3] == doctest::Approx(2.0));
    CHECK(table.grad()[0] == 0.0);
}

} // TEST_SUITE
