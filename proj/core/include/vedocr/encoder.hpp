// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "vedocr/nn.hpp"
#include "vedocr/tensor.hpp"

namespace vedocr {

/// Geometry of the encoder input: grayscale (H,W) images cut into P x P
/// patches, N = H*W/P^2 of them, each projected to a D-dimensional token.
struct ImageSpec {
    int64_t height = 0;
    int64_t width = 0;
    int64_t patch = 0;
    int64_t channels = 1;
    int64_t dim = 0;

    int64_t patch_count() const { return height * width / (patch * patch); }
    int64_t grid_h() const { return height / patch; }
    int64_t grid_w() const { return width / patch; }
    void validate() const;
};

/// One pre-norm transformer block. `rel_bias` is present only on windowed
/// blocks: a learnable table over relative offsets, indexed per key/query
/// pair inside a window.
struct EncoderBlockParams {
    LayerNormParams ln1;
    AttentionParams attn;
    LayerNormParams ln2;
    FeedForwardParams ffn;
    Tensor rel_bias; // [(2*win-1)^2, 1] or undefined
};

/// Masked-image-modeling extras: the learned replacement token and the
/// pixel prediction head.
struct MimParams {
    Tensor mask_token; // [1, D]
    Tensor head_w;     // [D_out, pixels per output token]
    Tensor head_b;
};

struct GlobalEncoderParams {
    Tensor patch_w; // [P*P, D]
    Tensor patch_b; // [D]
    Tensor cls;     // [1, D]
    Tensor pos;     // [N+1, D]
    std::vector<EncoderBlockParams> blocks;
    LayerNormParams final_ln;
    MimParams mim;
    int64_t heads = 1;
};

struct WindowedStageParams {
    std::vector<EncoderBlockParams> blocks;
    Tensor merge_w; // [4*D_in, 2*D_in]; undefined on the last stage
    Tensor merge_b;
};

struct WindowedEncoderParams {
    Tensor patch_w;
    Tensor patch_b;
    std::vector<WindowedStageParams> stages;
    LayerNormParams final_ln;
    MimParams mim;
    int64_t heads = 1;
    int64_t window = 0;
    int64_t shift = 0; // applied on every second block of each stage
};

struct EncoderOutput {
    Tensor states; // [N+1, D] with CLS at row 0, or [N', D'] windowed
    bool has_cls = false;
};

/// Non-overlapping P x P patches in row-major order, each flattened
/// row-major: [1,H,W] -> [N, P*P]. P must divide H and W.
Tensor patchify(const Tensor& image, int64_t patch);

/// CLS + absolute-position encoder: patchify -> project -> prepend CLS ->
/// add learned positions -> unmasked transformer blocks -> final norm.
EncoderOutput encode_global(const Tensor& image,
                            const GlobalEncoderParams& params,
                            const ImageSpec& spec);

/// Tokens [h,w,D] -> [nw, win*win, D] non-overlapping windows (and back).
Tensor window_partition(const Tensor& tokens, int64_t win);
Tensor window_reverse(const Tensor& windows, int64_t win, int64_t h,
                      int64_t w);

/// Cyclic-shift + windowed masked attention + FFN, pre-norm with residuals.
/// shift must satisfy 0 <= shift < win; pairs whose tokens originate from
/// different pre-shift regions get exactly zero attention weight.
Tensor shifted_window_block(const Tensor& tokens,
                            const EncoderBlockParams& params, int64_t heads,
                            int64_t win, int64_t shift,
                            AttentionProbe* probe = nullptr);

/// Concatenates each 2x2 token neighborhood (order TL,TR,BL,BR) and projects
/// 4D -> 2D': [h,w,D] -> [h/2, w/2, 2D]. h and w must be even.
Tensor patch_merging(const Tensor& tokens, const Tensor& merge_w,
                     const Tensor& merge_b);

EncoderOutput encode_windowed(const Tensor& image,
                              const WindowedEncoderParams& params,
                              const ImageSpec& spec);

/// Masked-image-modeling objective: ceil(mask_ratio * N) patches (seeded,
/// uniform, without replacement) have their embeddings replaced by the mask
/// token before encoding; the head predicts their raw pixels and the loss is
/// the mean absolute error over masked pixels only.
Tensor mim_pretrain_step(const Tensor& image, const GlobalEncoderParams& params,
                         const ImageSpec& spec, double mask_ratio,
                         uint64_t seed);
Tensor mim_pretrain_step(const Tensor& image,
                         const WindowedEncoderParams& params,
                         const ImageSpec& spec, double mask_ratio,
                         uint64_t seed);

GlobalEncoderParams init_global_encoder(Rng& rng, const ImageSpec& spec,
                                        int64_t layers, int64_t heads,
                                        int64_t ffn_hidden);
WindowedEncoderParams init_windowed_encoder(Rng& rng, const ImageSpec& spec,
                                            int64_t blocks_per_stage,
                                            int64_t merge_stages,
                                            int64_t heads, int64_t ffn_hidden,
                                            int64_t window, int64_t shift);

} // namespace vedocr
