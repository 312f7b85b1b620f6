// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "vedocr/encoder.hpp"
#include "vedocr/nn.hpp"
#include "vedocr/tokenizer.hpp"

namespace vedocr {

/// One pre-norm decoder layer: causal self-attention, cross-attention over
/// the encoder states, feed-forward.
struct DecoderBlockParams {
    LayerNormParams ln1;
    AttentionParams self_attn;
    LayerNormParams ln2;
    AttentionParams cross_attn;
    LayerNormParams ln3;
    FeedForwardParams ffn;
};

struct DecoderParams {
    Tensor embedding; // [V, D]
    Tensor pos;       // [Lmax, D]
    std::vector<DecoderBlockParams> blocks;
    LayerNormParams final_ln;
    Tensor out_w; // [D, V]: hidden states project linearly to vocab size
    Tensor out_b; // [V]
    int64_t heads = 1;
    int64_t lmax = 128;
};

/// Per-position vocabulary logits [L, V]. Causal masking guarantees that the
/// logits at position i never depend on ids after i. L must not exceed Lmax
/// and the encoder states must be non-empty.
Tensor decoder_forward(std::span<const int64_t> ids, const EncoderOutput& enc,
                       const DecoderParams& params);

/// Teacher forcing: position t predicts token t+1, PAD targets are ignored.
/// Needs at least two tokens.
Tensor teacher_forced_loss(std::span<const int64_t> ids,
                           const EncoderOutput& enc,
                           const DecoderParams& params);

/// Greedy decoding from BOS: appends the argmax token until EOS or max_len
/// generated tokens; the returned sequence carries neither BOS nor EOS.
std::vector<int64_t> greedy_generate(const EncoderOutput& enc,
                                     const DecoderParams& params,
                                     int64_t max_len);

/// Masked-language-modeling objective: every non-special position is masked
/// independently with probability mask_prob (seeded); the stack runs with
/// full bidirectional self-attention and no cross-attention, and the loss is
/// cross-entropy at the masked positions only (0 when nothing was selected).
Tensor mlm_pretrain_step(std::span<const int64_t> ids,
                         const DecoderParams& params, double mask_prob,
                         uint64_t seed);

DecoderParams init_decoder(Rng& rng, int64_t vocab, int64_t dim,
                           int64_t enc_dim, int64_t layers, int64_t heads,
                           int64_t ffn_hidden, int64_t lmax);

/// Redraws the cross-attention projections from the initializer while
/// leaving everything else untouched (the warm-start rule for loading
/// pretrained self-attention weights).
void randomize_cross_attention(DecoderParams& params, Rng& rng);

} // namespace vedocr
