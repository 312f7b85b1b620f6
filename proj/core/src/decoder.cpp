// SPDX-License-Identifier: Apache-2.0
#include "vedocr/decoder.hpp"

#include <algorithm>
#include <string>

namespace vedocr {

namespace {

void check_sequence(std::span<const int64_t> ids, const DecoderParams& params,
                    const char* op_name) {
    if (ids.empty()) {
        throw ContractError(std::string(op_name) + ": empty id sequence");
    }
    if (static_cast<int64_t>(ids.size()) > params.lmax) {
        throw ContractError(std::string(op_name) + ": sequence length " +
                            std::to_string(ids.size()) + " exceeds Lmax " +
                            std::to_string(params.lmax));
    }
}

void check_encoder(const EncoderOutput& enc, const char* op_name) {
    if (!enc.states.defined() || enc.states.numel() == 0) {
        throw ContractError(std::string(op_name) + ": empty encoder states");
    }
}

Tensor embed_with_positions(std::span<const int64_t> ids,
                            const DecoderParams& params) {
    const int64_t l = static_cast<int64_t>(ids.size());
    const Tensor tok = embed(ids, params.embedding);
    return add(tok, slice_rows(params.pos, 0, l));
}

Tensor decoder_stack(const Tensor& x0, const EncoderOutput* enc,
                     const DecoderParams& params, const AttentionMask& mask) {
    Tensor x = x0;
    for (const DecoderBlockParams& block : params.blocks) {
        const Tensor n1 = apply_layer_norm(x, block.ln1);
        x = add(x, multi_head_attention(n1, n1, n1, block.self_attn,
                                        params.heads, &mask));
        if (enc != nullptr) {
            const Tensor n2 = apply_layer_norm(x, block.ln2);
            x = add(x, multi_head_attention(n2, enc->states, enc->states,
                                            block.cross_attn, params.heads));
        }
        const Tensor n3 = apply_layer_norm(x, block.ln3);
        x = add(x, feed_forward(n3, block.ffn));
    }
    return apply_layer_norm(x, params.final_ln);
}

Tensor project_to_vocab(const Tensor& states, const DecoderParams& params) {
    return add_rowvec(matmul(states, params.out_w), params.out_b);
}

} // namespace

Tensor decoder_forward(std::span<const int64_t> ids, const EncoderOutput& enc,
                       const DecoderParams& params) {
    check_sequence(ids, params, "decoder_forward");
    check_encoder(enc, "decoder_forward");
    const AttentionMask mask =
        AttentionMask::causal(static_cast<int64_t>(ids.size()));
    const Tensor states =
        decoder_stack(embed_with_positions(ids, params), &enc, params, mask);
    return project_to_vocab(states, params);
}

Tensor teacher_forced_loss(std::span<const int64_t> ids,
                           const EncoderOutput& enc,
                           const DecoderParams& params) {
    if (ids.size() < 2) {
        throw ContractError("teacher_forced_loss: need at least 2 tokens");
    }
    const int64_t l = static_cast<int64_t>(ids.size());
    const Tensor logits = decoder_forward(ids, enc, params);
    // Position t predicts token t+1; the last position has no target.
    const Tensor shifted = slice_rows(logits, 0, l - 1);
    return cross_entropy(shifted, ids.subspan(1), Tokenizer::kPad);
}

std::vector<int64_t> greedy_generate(const EncoderOutput& enc,
                                     const DecoderParams& params,
                                     int64_t max_len) {
    if (max_len < 1) {
        throw ContractError("greedy_generate: max_len must be >= 1");
    }
    check_encoder(enc, "greedy_generate");
    std::vector<int64_t> seq{Tokenizer::kBos};
    const int64_t budget = std::min(max_len, params.lmax - 1);
    const int64_t vocab = params.out_w.dim(1);
    for (int64_t step = 0; step < budget; ++step) {
        const Tensor logits = decoder_forward(seq, enc, params);
        const int64_t last = logits.dim(0) - 1;
        auto row = logits.data().subspan(last * vocab, vocab);
        int64_t best = 0;
        for (int64_t i = 1; i < vocab; ++i) {
            if (row[i] > row[best]) best = i;
        }
        if (best == Tokenizer::kEos) break;
        seq.push_back(best);
    }
    return {seq.begin() + 1, seq.end()};
}

Tensor mlm_pretrain_step(std::span<const int64_t> ids,
                         const DecoderParams& params, double mask_prob,
                         uint64_t seed) {
    check_sequence(ids, params, "mlm_pretrain_step");
    if (!(mask_prob > 0.0 && mask_prob < 1.0)) {
        throw ContractError("mlm: mask_prob must lie strictly in (0,1)");
    }
    const int64_t l = static_cast<int64_t>(ids.size());
    Rng rng(seed);
    std::vector<int64_t> corrupted(ids.begin(), ids.end());
    std::vector<int64_t> targets(static_cast<size_t>(l), Tokenizer::kPad);
    bool any = false;
    for (int64_t i = 0; i < l; ++i) {
        const bool special = ids[i] < Tokenizer::kNumSpecial;
        const bool selected = rng.next_unit() < mask_prob;
        if (special || !selected) continue;
        corrupted[static_cast<size_t>(i)] = Tokenizer::kMask;
        targets[static_cast<size_t>(i)] = ids[i];
        any = true;
    }
    if (!any) {
        return Tensor::scalar(0.0);
    }
    const AttentionMask full = AttentionMask::all_allowed(l, l);
    const Tensor states = decoder_stack(
        embed_with_positions(corrupted, params), nullptr, params, full);
    return cross_entropy(project_to_vocab(states, params), targets,
                         Tokenizer::kPad);
}

DecoderParams init_decoder(Rng& rng, int64_t vocab, int64_t dim,
                           int64_t enc_dim, int64_t layers, int64_t heads,
                           int64_t ffn_hidden, int64_t lmax) {
    if (vocab < Tokenizer::kNumSpecial || dim < 1 || lmax < 2) {
        throw ContractError("decoder: bad vocab/dim/lmax");
    }
    DecoderParams p;
    p.heads = heads;
    p.lmax = lmax;
    p.embedding = init_weight(rng, vocab, dim);
    p.pos = init_weight(rng, lmax, dim);
    for (int64_t i = 0; i < layers; ++i) {
        DecoderBlockParams b;
        b.ln1 = init_layer_norm(dim);
        b.self_attn = init_attention(rng, dim, dim, dim);
        b.ln2 = init_layer_norm(dim);
        b.cross_attn = init_attention(rng, dim, enc_dim, dim);
        b.ln3 = init_layer_norm(dim);
        b.ffn = init_feed_forward(rng, dim, ffn_hidden);
        p.blocks.push_back(std::move(b));
    }
    p.final_ln = init_layer_norm(dim);
    p.out_w = init_weight(rng, dim, vocab);
    p.out_b = init_bias(vocab);
    return p;
}

void randomize_cross_attention(DecoderParams& params, Rng& rng) {
    for (DecoderBlockParams& block : params.blocks) {
        AttentionParams& c = block.cross_attn;
        const auto redraw = [&rng](Tensor& w) {
            for (double& v : w.data()) v = rng.next_normal(0.0, 0.02);
        };
        redraw(c.wq);
        redraw(c.wk);
        redraw(c.wv);
        redraw(c.wo);
        for (Tensor* b : {&c.bq, &c.bk, &c.bv, &c.bo}) {
            std::fill(b->data().begin(), b->data().end(), 0.0);
        }
    }
}

} // namespace vedocr
