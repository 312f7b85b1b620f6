// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "vedocr/ctc.hpp"

using namespace vedocr;

namespace {

Tensor random_logits(Rng& rng, int64_t t, int64_t v1, double spread = 2.0) {
    Tensor x({t, v1});
    for (double& val : x.data()) val = (rng.next_unit() * 2.0 - 1.0) * spread;
    return x;
}

} // namespace

TEST_SUITE("ctc_baseline") {

TEST_CASE("hand-derived fixture: T=2 uniform over {a, blank}") {
    // softmax of equal logits gives 0.5/0.5 per frame; paths aa, a., .a
    // collapse to "a" (prob 0.75) and .. to "" (prob 0.25).
    const Tensor logits({2, 2}, {0.3, 0.3, 0.3, 0.3});
    const std::vector<int64_t> target{0};
    CHECK(ctc_loss(logits, target).item() ==
          doctest::Approx(-std::log(0.75)).epsilon(1e-12));
    CHECK(ctc_brute_force(logits, target) == doctest::Approx(0.75));

    const std::vector<int64_t> empty;
    CHECK(ctc_loss(logits, empty).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(ctc_brute_force(logits, empty) == doctest::Approx(0.25));

    const std::vector<int64_t> aa{0, 0};
    CHECK_THROWS_AS(ctc_loss(logits, aa), InfeasibleError);
}

TEST_CASE("feasibility accounting includes adjacent repeats") {
    CHECK(ctc_feasible(3, std::vector<int64_t>{0, 0}));
    CHECK_FALSE(ctc_feasible(2, std::vector<int64_t>{0, 0}));
    CHECK(ctc_feasible(2, std::vector<int64_t>{0, 1}));
    CHECK(ctc_feasible(0, std::vector<int64_t>{}));
}

TEST_CASE("oracle equivalence on randomized small instances") {
    Rng rng(42);
    int checked = 0;
    while (checked < 300) {
        const int64_t t = 1 + static_cast<int64_t>(rng.next_below(6));
        const int64_t v = 1 + static_cast<int64_t>(rng.next_below(3));
        const int64_t u = static_cast<int64_t>(rng.next_below(4));
        std::vector<int64_t> target;
        for (int64_t i = 0; i < u; ++i)
            target.push_back(static_cast<int64_t>(rng.next_below(v)));
        if (!ctc_feasible(t, target)) continue;
        const Tensor logits = random_logits(rng, t, v + 1);
        const double direct = std::exp(-ctc_loss(logits, target).item());
        const double brute = ctc_brute_force(logits, target);
        CHECK(std::abs(direct - brute) < 1e-10);
        ++checked;
    }
}

TEST_CASE("collapsed-string probabilities sum to one") {
    Rng rng(7);
    const Tensor logits = random_logits(rng, 4, 3);
    const auto all = ctc_brute_force_all(logits);
    double total = 0.0;
    for (const auto& [labels, prob] : all) total += prob;
    CHECK(std::abs(total - 1.0) < 1e-10);

    // A target longer than T has zero probability.
    const std::vector<int64_t> too_long{0, 1, 0, 1, 0};
    CHECK(ctc_brute_force(logits, too_long) == 0.0);
}

TEST_CASE("brute force guards its search space") {
    const Tensor big({30, 4});
    const std::vector<int64_t> target{0};
    CHECK_THROWS_AS(ctc_brute_force(big, target), ContractError);
}

TEST_CASE("greedy decode collapse rules") {
    // argmax path [a, a, blank, b] -> "ab"
    const Tensor one({4, 3}, {5, 0, 0,  5, 0, 0,  0, 0, 5,  0, 5, 0});
    CHECK(ctc_greedy_decode(one) == std::vector<int64_t>{0, 1});

    const Tensor blanks({3, 3}, {0, 0, 5,  0, 0, 5,  0, 0, 5});
    CHECK(ctc_greedy_decode(blanks).empty());

    // [a, blank, a] -> "aa": the blank separates the repeat.
    const Tensor aba({3, 3}, {5, 0, 0,  0, 0, 5,  5, 0, 0});
    CHECK(ctc_greedy_decode(aba) == std::vector<int64_t>{0, 0});
}

TEST_CASE("ctc_loss gradient matches finite differences") {
    Rng rng(11);
    const Tensor logits = random_logits(rng, 5, 4);
    const std::vector<int64_t> target{2, 0, 2};
    Tensor probe = logits.clone();
    const double err = finite_difference_check(
        [&](const Tensor& t) { return ctc_loss(t, target); }, probe, 1e-6);
    CHECK(err < 1e-4);
}

TEST_CASE("log-space recursion survives extreme probabilities") {
    // Logits pushing some class probabilities below 1e-300.
    Tensor logits({4, 3}, {700, 0, 690,  0, -700, 650,
                           690, -690, 700,  0, 0, 0});
    const std::vector<int64_t> target{0, 1};
    const double loss = ctc_loss(logits, target).item();
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
}

TEST_CASE("frame_features geometry follows the documented formula") {
    Rng rng(13);
    CtcParams params = init_ctc_params(rng, 32, 6, 2);
    // T(W) composes (w - kw)/stride + 1 across the stack.
    CHECK(params.frame_count(128) == 27);
    CHECK(params.input_height == 32);

    Tensor img({1, 32, 128});
    for (double& v : img.data()) v = rng.next_unit();
    const Tensor logits = frame_features(img, params);
    CHECK(logits.shape() == Shape{27, 6});

    int64_t prev = 0;
    for (int64_t w = params.min_width; w <= 64; ++w) {
        const int64_t t = params.frame_count(w);
        CHECK(t >= prev); // non-decreasing in width
        prev = t;
    }

    Tensor narrow({1, 32, params.min_width - 1});
    CHECK_THROWS_AS(frame_features(narrow, params), ContractError);
}

TEST_CASE("frame_features passes the gradient oracle at tiny dims") {
    Rng rng(17);
    CtcParams params = init_ctc_params(rng, 16, 4, 1);
    Tensor img({1, 16, params.min_width + 4});
    for (double& v : img.data()) v = rng.next_unit();
    const std::vector<int64_t> target{1, 0};

    const auto loss_of = [&] {
        return ctc_loss(frame_features(img, params), target);
    };
    REQUIRE(ctc_feasible(params.frame_count(img.dim(2)), target));

    Tensor& kernel = params.convs[1].kernels;
    const Tensor original = kernel;
    const double err = finite_difference_check(
        [&](const Tensor& probe) {
            kernel = probe;
            const Tensor loss = loss_of();
            kernel = original;
            return loss;
        },
        original.clone(), 1e-5);
    CHECK(err < 1e-4);

    Tensor& out_w = params.out_w;
    const Tensor ow = out_w;
    const double err2 = finite_difference_check(
        [&](const Tensor& probe) {
            out_w = probe;
            const Tensor loss = loss_of();
            out_w = ow;
            return loss;
        },
        ow.clone(), 1e-5);
    CHECK(err2 < 1e-4);
}

} // TEST_SUITE
