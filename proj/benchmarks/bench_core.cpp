// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "vedocr/ctc.hpp"
#include "vedocr/decoder.hpp"
#include "vedocr/metrics.hpp"
#include "vedocr/data.hpp"

using namespace vedocr;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.next_unit() * 2.0 - 1.0;
    return t;
}

void BM_Matmul(benchmark::State& state) {
    const int64_t n = state.range(0);
    Rng rng(1);
    const Tensor a = random_tensor(rng, {n, n});
    const Tensor b = random_tensor(rng, {n, n});
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data().data());
    }
    state.SetComplexityN(n);
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_AttentionForward(benchmark::State& state) {
    const int64_t len = state.range(0);
    Rng rng(2);
    AttentionParams params = init_attention(rng, 64, 64, 64);
    const Tensor x = random_tensor(rng, {len, 64});
    const AttentionMask mask = AttentionMask::causal(len);
    for (auto _ : state) {
        Tensor out = multi_head_attention(x, x, x, params, 4, &mask);
        benchmark::DoNotOptimize(out.data().data());
    }
}
BENCHMARK(BM_AttentionForward)->Arg(16)->Arg(32)->Arg(64);

void BM_TeacherForcedStep(benchmark::State& state) {
    Rng rng(3);
    DecoderParams params = init_decoder(rng, 28, 64, 64, 2, 4, 256, 32);
    EncoderOutput enc;
    enc.states = random_tensor(rng, {17, 64});
    const std::vector<int64_t> ids{1, 7, 9, 11, 13, 15, 2};
    for (auto _ : state) {
        Tape tape;
        Tensor loss = teacher_forced_loss(ids, enc, params);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.item());
        for (DecoderBlockParams& b : params.blocks) {
            b.self_attn.wq.zero_grad();
        }
    }
}
BENCHMARK(BM_TeacherForcedStep);

void BM_CtcLoss(benchmark::State& state) {
    const int64_t frames = state.range(0);
    Rng rng(4);
    const Tensor logits = random_tensor(rng, {frames, 24});
    const std::vector<int64_t> target{3, 1, 4, 1, 5};
    for (auto _ : state) {
        Tensor loss = ctc_loss(logits, target);
        benchmark::DoNotOptimize(loss.item());
    }
}
BENCHMARK(BM_CtcLoss)->Arg(16)->Arg(27)->Arg(48);

void BM_Wer(benchmark::State& state) {
    const std::string ref = "a b c d e f g h i j k l m n o p";
    const std::string hyp = "a b x d e f q h i j k m n o p r";
    for (auto _ : state) {
        benchmark::DoNotOptimize(wer(ref, hyp));
    }
}
BENCHMARK(BM_Wer);

void BM_RenderSample(benchmark::State& state) {
    const auto roster = make_style_roster(4, 9);
    for (auto _ : state) {
        GrayImage img = render_sample(
            "بَا سم", roster[0], 32, 7);
        benchmark::DoNotOptimize(img.pixels.data());
    }
}
BENCHMARK(BM_RenderSample);

} // namespace

BENCHMARK_MAIN();
