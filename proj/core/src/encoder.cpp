// SPDX-License-Identifier: Apache-2.0
#include "vedocr/encoder.hpp"

#include <cmath>
#include <string>

namespace vedocr {

void ImageSpec::validate() const {
    if (height < 1 || width < 1 || patch < 1 || dim < 1 || channels != 1) {
        throw ContractError("image spec: bad dimensions");
    }
    if (height % patch != 0 || width % patch != 0) {
        throw ContractError("image spec: patch " + std::to_string(patch) +
                            " does not divide " + std::to_string(height) +
                            "x" + std::to_string(width) +
                            " (preprocessing must pad first)");
    }
}

Tensor patchify(const Tensor& image, int64_t patch) {
    if (image.rank() != 3 || image.dim(0) != 1) {
        throw DimensionError("patchify: expected [1,H,W], got " +
                             shape_str(image.shape()));
    }
    const int64_t h = image.dim(1), w = image.dim(2);
    if (patch < 1 || h % patch != 0 || w % patch != 0) {
        throw ContractError("patchify: patch " + std::to_string(patch) +
                            " does not divide image " + std::to_string(h) +
                            "x" + std::to_string(w));
    }
    const int64_t gh = h / patch, gw = w / patch;
    std::vector<int64_t> order;
    order.reserve(static_cast<size_t>(h * w));
    for (int64_t py = 0; py < gh; ++py)
        for (int64_t px = 0; px < gw; ++px)
            for (int64_t iy = 0; iy < patch; ++iy)
                for (int64_t ix = 0; ix < patch; ++ix)
                    order.push_back((py * patch + iy) * w + px * patch + ix);
    const Tensor flat = reshape(image, {h * w, 1});
    return reshape(gather_rows(flat, order), {gh * gw, patch * patch});
}

namespace {

Tensor encoder_block(const Tensor& x, const EncoderBlockParams& p,
                     int64_t heads) {
    const Tensor normed = apply_layer_norm(x, p.ln1);
    const Tensor attended =
        add(x, multi_head_attention(normed, normed, normed, p.attn, heads));
    const Tensor normed2 = apply_layer_norm(attended, p.ln2);
    return add(attended, feed_forward(normed2, p.ffn));
}

std::vector<int64_t> iota_ids(int64_t n) {
    std::vector<int64_t> ids(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) ids[static_cast<size_t>(i)] = i;
    return ids;
}

Tensor project_patches(const Tensor& image, const Tensor& patch_w,
                       const Tensor& patch_b, const ImageSpec& spec) {
    return add_rowvec(matmul(patchify(image, spec.patch), patch_w), patch_b);
}

} // namespace

EncoderOutput encode_global(const Tensor& image,
                            const GlobalEncoderParams& params,
                            const ImageSpec& spec) {
    spec.validate();
    if (image.dim(1) != spec.height || image.dim(2) != spec.width) {
        throw DimensionError("encode: image " + shape_str(image.shape()) +
                             " does not match spec " +
                             std::to_string(spec.height) + "x" +
                             std::to_string(spec.width));
    }
    const Tensor tokens = project_patches(image, params.patch_w,
                                          params.patch_b, spec);
    const std::vector<Tensor> parts = {params.cls, tokens};
    Tensor x = add(concat_rows(parts), params.pos);
    for (const EncoderBlockParams& block : params.blocks) {
        x = encoder_block(x, block, params.heads);
    }
    EncoderOutput out;
    out.states = apply_layer_norm(x, params.final_ln);
    out.has_cls = true;
    return out;
}

// ---- windowed variant --------------------------------------------------------

namespace {

void check_grid(const Tensor& tokens) {
    if (tokens.rank() != 3) {
        throw DimensionError("windowed encoder: expected token grid [h,w,D], "
                             "got " +
                             shape_str(tokens.shape()));
    }
}

std::vector<int64_t> partition_order(int64_t h, int64_t w, int64_t win) {
    std::vector<int64_t> order;
    order.reserve(static_cast<size_t>(h * w));
    for (int64_t wy = 0; wy < h / win; ++wy)
        for (int64_t wx = 0; wx < w / win; ++wx)
            for (int64_t iy = 0; iy < win; ++iy)
                for (int64_t ix = 0; ix < win; ++ix)
                    order.push_back((wy * win + iy) * w + wx * win + ix);
    return order;
}

std::vector<int64_t> inverse_permutation(const std::vector<int64_t>& p) {
    std::vector<int64_t> inv(p.size());
    for (size_t i = 0; i < p.size(); ++i)
        inv[static_cast<size_t>(p[i])] = static_cast<int64_t>(i);
    return inv;
}

std::vector<int64_t> cyclic_shift_order(int64_t h, int64_t w, int64_t sy,
                                        int64_t sx) {
    // out[y][x] = in[(y+sy) mod h][(x+sx) mod w]
    std::vector<int64_t> order;
    order.reserve(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            order.push_back(((y + sy) % h) * w + ((x + sx) % w));
    return order;
}

/// Region labels on the shifted grid; windows may straddle up to four
/// pre-shift regions and only same-region pairs may attend.
std::vector<int64_t> shift_regions(int64_t extent, int64_t win, int64_t shift) {
    std::vector<int64_t> region(static_cast<size_t>(extent), 0);
    if (shift == 0) return region;
    for (int64_t i = 0; i < extent; ++i) {
        if (i < extent - win) {
            region[static_cast<size_t>(i)] = 0;
        } else if (i < extent - shift) {
            region[static_cast<size_t>(i)] = 1;
        } else {
            region[static_cast<size_t>(i)] = 2;
        }
    }
    return region;
}

/// Relative-position bias matrix [win^2, win^2] gathered from the learnable
/// table: entry (i,j) looks up the offset between token i and token j.
Tensor relative_bias_matrix(const Tensor& table, int64_t win) {
    const int64_t span = 2 * win - 1;
    std::vector<int64_t> ids;
    ids.reserve(static_cast<size_t>(win * win * win * win));
    for (int64_t qy = 0; qy < win; ++qy)
        for (int64_t qx = 0; qx < win; ++qx)
            for (int64_t ky = 0; ky < win; ++ky)
                for (int64_t kx = 0; kx < win; ++kx) {
                    const int64_t dy = qy - ky + win - 1;
                    const int64_t dx = qx - kx + win - 1;
                    ids.push_back(dy * span + dx);
                }
    return reshape(gather_rows(table, ids), {win * win, win * win});
}

} // namespace

Tensor window_partition(const Tensor& tokens, int64_t win) {
    check_grid(tokens);
    const int64_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
    if (win < 1 || h % win != 0 || w % win != 0) {
        throw ContractError("window_partition: window " + std::to_string(win) +
                            " does not divide grid " + std::to_string(h) +
                            "x" + std::to_string(w));
    }
    const Tensor flat = reshape(tokens, {h * w, d});
    const auto order = partition_order(h, w, win);
    return reshape(gather_rows(flat, order),
                   {(h / win) * (w / win), win * win, d});
}

Tensor window_reverse(const Tensor& windows, int64_t win, int64_t h,
                      int64_t w) {
    check_grid(windows);
    const int64_t d = windows.dim(2);
    if (windows.dim(0) * windows.dim(1) != h * w || windows.dim(1) != win * win) {
        throw ContractError("window_reverse: windows " +
                            shape_str(windows.shape()) +
                            " do not tile a " + std::to_string(h) + "x" +
                            std::to_string(w) + " grid");
    }
    const Tensor flat = reshape(windows, {h * w, d});
    const auto order = inverse_permutation(partition_order(h, w, win));
    return reshape(gather_rows(flat, order), {h, w, d});
}

Tensor shifted_window_block(const Tensor& tokens,
                            const EncoderBlockParams& params, int64_t heads,
                            int64_t win, int64_t shift,
                            AttentionProbe* probe) {
    check_grid(tokens);
    const int64_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
    if (shift < 0 || shift >= win) {
        throw ContractError("shifted_window_block: shift " +
                            std::to_string(shift) + " not in [0, win)");
    }
    if (h % win != 0 || w % win != 0) {
        throw ContractError("shifted_window_block: window " +
                            std::to_string(win) + " does not divide grid " +
                            std::to_string(h) + "x" + std::to_string(w));
    }

    // Attention mask from pre-shift region adjacency (same for every window
    // row/column combination below).
    const auto row_region = shift_regions(h, win, shift);
    const auto col_region = shift_regions(w, win, shift);
    const auto region_of = [&](int64_t gy, int64_t gx) {
        return row_region[static_cast<size_t>(gy)] * 3 +
               col_region[static_cast<size_t>(gx)];
    };

    const Tensor normed = apply_layer_norm(reshape(tokens, {h * w, d}),
                                           params.ln1);
    const auto shift_order = cyclic_shift_order(h, w, shift, shift);
    const Tensor shifted = gather_rows(normed, shift_order);
    const auto part_order = partition_order(h, w, win);
    const Tensor windows = gather_rows(shifted, part_order);

    Tensor bias;
    const bool has_bias = params.rel_bias.defined();
    if (has_bias) bias = relative_bias_matrix(params.rel_bias, win);

    const int64_t tokens_per_window = win * win;
    const int64_t num_windows = (h / win) * (w / win);
    if (probe != nullptr) {
        probe->head_weights.clear();
        probe->lq = tokens_per_window;
        probe->lk = tokens_per_window;
    }
    std::vector<Tensor> attended_windows;
    attended_windows.reserve(static_cast<size_t>(num_windows));
    for (int64_t wi = 0; wi < num_windows; ++wi) {
        AttentionMask mask =
            AttentionMask::all_allowed(tokens_per_window, tokens_per_window);
        if (shift != 0) {
            for (int64_t a = 0; a < tokens_per_window; ++a) {
                const int64_t ga = part_order[wi * tokens_per_window + a];
                for (int64_t b = 0; b < tokens_per_window; ++b) {
                    const int64_t gb = part_order[wi * tokens_per_window + b];
                    mask.set(a, b,
                             region_of(ga / w, ga % w) ==
                                 region_of(gb / w, gb % w));
                }
            }
        }
        const Tensor win_tokens =
            slice_rows(windows, wi * tokens_per_window, tokens_per_window);
        AttentionProbe local_probe;
        attended_windows.push_back(multi_head_attention(
            win_tokens, win_tokens, win_tokens, params.attn, heads, &mask,
            has_bias ? &bias : nullptr,
            probe != nullptr ? &local_probe : nullptr));
        if (probe != nullptr) {
            // One weight matrix per (window, head) pair, windows outermost.
            for (auto& hw : local_probe.head_weights)
                probe->head_weights.push_back(std::move(hw));
        }
    }
    const Tensor attended_shifted = concat_rows(attended_windows);
    const Tensor attended =
        gather_rows(gather_rows(attended_shifted,
                                inverse_permutation(part_order)),
                    inverse_permutation(shift_order));

    const Tensor x1 = add(reshape(tokens, {h * w, d}), attended);
    const Tensor normed2 = apply_layer_norm(x1, params.ln2);
    const Tensor x2 = add(x1, feed_forward(normed2, params.ffn));
    return reshape(x2, {h, w, d});
}

Tensor patch_merging(const Tensor& tokens, const Tensor& merge_w,
                     const Tensor& merge_b) {
    check_grid(tokens);
    const int64_t h = tokens.dim(0), w = tokens.dim(1), d = tokens.dim(2);
    if (h % 2 != 0 || w % 2 != 0) {
        throw ContractError("patch_merging: grid " + std::to_string(h) + "x" +
                            std::to_string(w) + " must have even extents");
    }
    std::vector<int64_t> order;
    order.reserve(static_cast<size_t>(h * w));
    for (int64_t y = 0; y < h / 2; ++y)
        for (int64_t x = 0; x < w / 2; ++x) {
            order.push_back((2 * y) * w + 2 * x);
            order.push_back((2 * y) * w + 2 * x + 1);
            order.push_back((2 * y + 1) * w + 2 * x);
            order.push_back((2 * y + 1) * w + 2 * x + 1);
        }
    const Tensor flat = reshape(tokens, {h * w, d});
    const Tensor grouped =
        reshape(gather_rows(flat, order), {(h / 2) * (w / 2), 4 * d});
    const Tensor merged = add_rowvec(matmul(grouped, merge_w), merge_b);
    return reshape(merged, {h / 2, w / 2, merged.dim(1)});
}

namespace {

Tensor run_windowed_stages(const Tensor& tokens0,
                           const WindowedEncoderParams& params) {
    Tensor grid = tokens0;
    for (size_t si = 0; si < params.stages.size(); ++si) {
        const WindowedStageParams& stage = params.stages[si];
        for (size_t bi = 0; bi < stage.blocks.size(); ++bi) {
            const int64_t shift = (bi % 2 == 1) ? params.shift : 0;
            grid = shifted_window_block(grid, stage.blocks[bi], params.heads,
                                        params.window, shift);
        }
        if (stage.merge_w.defined()) {
            grid = patch_merging(grid, stage.merge_w, stage.merge_b);
        }
    }
    return grid;
}

} // namespace

EncoderOutput encode_windowed(const Tensor& image,
                              const WindowedEncoderParams& params,
                              const ImageSpec& spec) {
    spec.validate();
    if (image.dim(1) != spec.height || image.dim(2) != spec.width) {
        throw DimensionError("encode: image " + shape_str(image.shape()) +
                             " does not match spec");
    }
    const Tensor tokens = project_patches(image, params.patch_w,
                                          params.patch_b, spec);
    const Tensor grid0 =
        reshape(tokens, {spec.grid_h(), spec.grid_w(), spec.dim});
    const Tensor grid = run_windowed_stages(grid0, params);
    EncoderOutput out;
    out.states = apply_layer_norm(
        reshape(grid, {grid.dim(0) * grid.dim(1), grid.dim(2)}),
        params.final_ln);
    out.has_cls = false;
    return out;
}

// ---- masked image modeling ------------------------------------------------------

namespace {

struct MaskPlan {
    std::vector<int64_t> masked;        // patch indices, ascending
    std::vector<double> keep_factor;    // 0 on masked rows, 1 elsewhere
};

MaskPlan plan_mask(int64_t n, double mask_ratio, uint64_t seed) {
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
        throw ContractError("mim: mask_ratio must lie strictly in (0,1)");
    }
    const int64_t k = static_cast<int64_t>(
        std::ceil(mask_ratio * static_cast<double>(n)));
    Rng rng(seed);
    MaskPlan plan;
    plan.masked = rng.sample_without_replacement(n, k);
    std::sort(plan.masked.begin(), plan.masked.end());
    plan.keep_factor.assign(static_cast<size_t>(n), 1.0);
    for (int64_t idx : plan.masked)
        plan.keep_factor[static_cast<size_t>(idx)] = 0.0;
    return plan;
}

/// Replaces masked token rows with the learned mask token.
Tensor apply_mask_token(const Tensor& tokens, const MaskPlan& plan,
                        const Tensor& mask_token) {
    const int64_t n = tokens.dim(0);
    Tensor pick = Tensor::zeros({n, 1});
    for (int64_t idx : plan.masked) pick.data()[idx] = 1.0;
    return add(mul_rows(tokens, plan.keep_factor),
               matmul(pick, mask_token));
}

Tensor masked_l1(const Tensor& predicted, const Tensor& truth) {
    return mean_all(abs(sub(predicted, truth)));
}

} // namespace

Tensor mim_pretrain_step(const Tensor& image, const GlobalEncoderParams& params,
                         const ImageSpec& spec, double mask_ratio,
                         uint64_t seed) {
    spec.validate();
    const Tensor pixels = patchify(image, spec.patch); // [N, P*P] ground truth
    const MaskPlan plan = plan_mask(spec.patch_count(), mask_ratio, seed);

    const Tensor tokens = project_patches(image, params.patch_w,
                                          params.patch_b, spec);
    const Tensor masked_tokens =
        apply_mask_token(tokens, plan, params.mim.mask_token);
    const std::vector<Tensor> parts = {params.cls, masked_tokens};
    Tensor x = add(concat_rows(parts), params.pos);
    for (const EncoderBlockParams& block : params.blocks) {
        x = encoder_block(x, block, params.heads);
    }
    x = apply_layer_norm(x, params.final_ln);

    std::vector<int64_t> state_rows;
    state_rows.reserve(plan.masked.size());
    for (int64_t idx : plan.masked) state_rows.push_back(idx + 1); // skip CLS
    const Tensor masked_states = gather_rows(x, state_rows);
    const Tensor predicted = add_rowvec(
        matmul(masked_states, params.mim.head_w), params.mim.head_b);
    const Tensor truth = gather_rows(pixels, plan.masked).clone();
    return masked_l1(predicted, truth);
}

Tensor mim_pretrain_step(const Tensor& image,
                         const WindowedEncoderParams& params,
                         const ImageSpec& spec, double mask_ratio,
                         uint64_t seed) {
    spec.validate();
    const Tensor pixels = patchify(image, spec.patch);
    const int64_t n = spec.patch_count();
    const MaskPlan plan = plan_mask(n, mask_ratio, seed);

    const Tensor tokens = project_patches(image, params.patch_w,
                                          params.patch_b, spec);
    const Tensor masked_tokens =
        apply_mask_token(tokens, plan, params.mim.mask_token);
    const Tensor grid0 =
        reshape(masked_tokens, {spec.grid_h(), spec.grid_w(), spec.dim});
    const Tensor grid = run_windowed_stages(grid0, params);
    const Tensor states = apply_layer_norm(
        reshape(grid, {grid.dim(0) * grid.dim(1), grid.dim(2)}),
        params.final_ln);

    // Each final token covers a 2^s x 2^s block of original patches; track
    // where every patch ended up through the merge reordering.
    int64_t merges = 0;
    for (const WindowedStageParams& s : params.stages)
        if (s.merge_w.defined()) ++merges;
    std::vector<int64_t> token_of(static_cast<size_t>(n));
    std::vector<int64_t> slot_of(static_cast<size_t>(n), 0);
    for (int64_t i = 0; i < n; ++i) token_of[static_cast<size_t>(i)] = i;
    int64_t gh = spec.grid_h(), gw = spec.grid_w();
    for (int64_t m = 0; m < merges; ++m) {
        const int64_t group = 1 << (2 * m); // slots already packed per token
        for (int64_t i = 0; i < n; ++i) {
            const int64_t t = token_of[static_cast<size_t>(i)];
            const int64_t y = t / gw, x = t % gw;
            const int64_t quadrant = (y % 2) * 2 + (x % 2);
            token_of[static_cast<size_t>(i)] = (y / 2) * (gw / 2) + x / 2;
            slot_of[static_cast<size_t>(i)] += quadrant * group;
        }
        gh /= 2;
        gw /= 2;
    }
    const int64_t slots = 1 << (2 * merges);

    // Head output [final tokens, slots*P*P] viewed as per-patch rows.
    const Tensor head_out = add_rowvec(matmul(states, params.mim.head_w),
                                       params.mim.head_b);
    const Tensor per_patch =
        reshape(head_out, {gh * gw * slots, spec.patch * spec.patch});
    std::vector<int64_t> rows;
    rows.reserve(plan.masked.size());
    for (int64_t idx : plan.masked)
        rows.push_back(token_of[static_cast<size_t>(idx)] * slots +
                       slot_of[static_cast<size_t>(idx)]);
    const Tensor predicted = gather_rows(per_patch, rows);
    const Tensor truth = gather_rows(pixels, plan.masked).clone();
    return masked_l1(predicted, truth);
}

// ---- initialization -----------------------------------------------------------

namespace {

EncoderBlockParams init_block(Rng& rng, int64_t d, int64_t heads,
                              int64_t ffn_hidden, int64_t rel_span) {
    (void)heads;
    EncoderBlockParams b;
    b.ln1 = init_layer_norm(d);
    b.attn = init_attention(rng, d, d, d, /*fan_in=*/true);
    b.ln2 = init_layer_norm(d);
    b.ffn = init_feed_forward(rng, d, ffn_hidden, /*fan_in=*/true);
    if (rel_span > 0) {
        b.rel_bias = Tensor::zeros({rel_span * rel_span, 1},
                                   /*requires_grad=*/true);
    }
    return b;
}

MimParams init_mim(Rng& rng, int64_t token_dim, int64_t head_in,
                   int64_t pixels) {
    MimParams m;
    m.mask_token = Tensor::randn(rng, {1, token_dim}, 0.0, 0.02, true);
    m.head_w = init_weight_fan_in(rng, head_in, pixels);
    m.head_b = init_bias(pixels);
    return m;
}

} // namespace

GlobalEncoderParams init_global_encoder(Rng& rng, const ImageSpec& spec,
                                        int64_t layers, int64_t heads,
                                        int64_t ffn_hidden) {
    spec.validate();
    GlobalEncoderParams p;
    p.heads = heads;
    // Fan-in scaling for the pixel-facing projection; the block weights keep
    // the shared 0.02 initializer since layer norms bound their scale.
    p.patch_w = Tensor::randn(
        rng, {spec.patch * spec.patch, spec.dim}, 0.0,
        std::sqrt(1.0 / static_cast<double>(spec.patch * spec.patch)),
        /*requires_grad=*/true);
    p.patch_b = init_bias(spec.dim);
    p.cls = Tensor::randn(rng, {1, spec.dim}, 0.0, 0.02, true);
    // Strong positional components give the cross-attention keys something
    // to lock onto from the first steps.
    p.pos = Tensor::randn(rng, {spec.patch_count() + 1, spec.dim}, 0.0, 0.2,
                          true);
    for (int64_t i = 0; i < layers; ++i) {
        p.blocks.push_back(init_block(rng, spec.dim, heads, ffn_hidden, 0));
    }
    p.final_ln = init_layer_norm(spec.dim);
    // Mask token is always replaced before position embeddings are added,
    // so one [1,D] token serves every patch position.
    p.mim = init_mim(rng, spec.dim, spec.dim, spec.patch * spec.patch);
    return p;
}

WindowedEncoderParams init_windowed_encoder(Rng& rng, const ImageSpec& spec,
                                            int64_t blocks_per_stage,
                                            int64_t merge_stages,
                                            int64_t heads, int64_t ffn_hidden,
                                            int64_t window, int64_t shift) {
    spec.validate();
    if (window < 1 || shift < 0 || shift >= window) {
        throw ContractError("windowed encoder: need 0 <= shift < window");
    }
    int64_t gh = spec.grid_h(), gw = spec.grid_w();
    int64_t d = spec.dim;
    WindowedEncoderParams p;
    p.heads = heads;
    p.window = window;
    p.shift = shift;
    p.patch_w = Tensor::randn(
        rng, {spec.patch * spec.patch, spec.dim}, 0.0,
        std::sqrt(1.0 / static_cast<double>(spec.patch * spec.patch)),
        /*requires_grad=*/true);
    p.patch_b = init_bias(spec.dim);
    const int64_t span = 2 * window - 1;
    for (int64_t s = 0; s <= merge_stages; ++s) {
        if (gh % window != 0 || gw % window != 0) {
            throw ContractError("windowed encoder: window " +
                                std::to_string(window) +
                                " does not divide the stage-" +
                                std::to_string(s) + " grid " +
                                std::to_string(gh) + "x" + std::to_string(gw));
        }
        WindowedStageParams stage;
        for (int64_t b = 0; b < blocks_per_stage; ++b) {
            int64_t hidden = ffn_hidden * (d / spec.dim);
            stage.blocks.push_back(init_block(rng, d, heads, hidden, span));
        }
        if (s < merge_stages) {
            if (gh % 2 != 0 || gw % 2 != 0) {
                throw ContractError(
                    "windowed encoder: cannot merge an odd grid");
            }
            stage.merge_w = init_weight_fan_in(rng, 4 * d, 2 * d);
            stage.merge_b = init_bias(2 * d);
            gh /= 2;
            gw /= 2;
            d *= 2;
        }
        p.stages.push_back(std::move(stage));
    }
    p.final_ln = init_layer_norm(d);
    const int64_t slots = 1 << (2 * merge_stages);
    p.mim = init_mim(rng, spec.dim, d, slots * spec.patch * spec.patch);
    return p;
}

} // namespace vedocr
