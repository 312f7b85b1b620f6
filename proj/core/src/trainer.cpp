// SPDX-License-Identifier: Apache-2.0
#include "vedocr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "vedocr/error.hpp"
#include "vedocr/utf8.hpp"

namespace fs = std::filesystem;

namespace vedocr {

std::vector<TrainSample>
load_samples(const std::vector<SampleManifest>& manifests) {
    std::vector<TrainSample> samples;
    samples.reserve(manifests.size());
    for (const SampleManifest& m : manifests) {
        samples.push_back({read_pgm(m.resolved_path), m.text});
    }
    return samples;
}

namespace {

double evaluate_rate(const Recognizer& model,
                     const std::vector<TrainSample>& samples, bool pooled,
                     bool word_level) {
    if (samples.empty()) {
        throw ContractError("evaluate: empty sample set");
    }
    double rate_sum = 0.0;
    int64_t edits = 0, ref_len = 0;
    for (const TrainSample& s : samples) {
        const std::string hyp = model.recognize(s.image);
        const auto ref_toks =
            word_level ? split_words(s.text) : utf8_codepoints(s.text);
        const auto hyp_toks =
            word_level ? split_words(hyp) : utf8_codepoints(hyp);
        if (ref_toks.empty()) {
            throw ContractError("evaluate: sample with empty reference");
        }
        const EditCounts c = levenshtein_align(ref_toks, hyp_toks);
        rate_sum += static_cast<double>(c.distance()) /
                    static_cast<double>(c.reference_length);
        edits += c.distance();
        ref_len += c.reference_length;
    }
    if (pooled) {
        return static_cast<double>(edits) / static_cast<double>(ref_len);
    }
    return rate_sum / static_cast<double>(samples.size());
}

/// Rounds every parameter through float32 (checkpoint precision) and returns
/// the original values for restoration.
std::vector<std::vector<double>> quantize_params(std::span<NamedParam> params) {
    std::vector<std::vector<double>> saved;
    saved.reserve(params.size());
    for (NamedParam& p : params) {
        auto d = p.tensor.data();
        saved.emplace_back(d.begin(), d.end());
        for (double& v : d) v = static_cast<double>(static_cast<float>(v));
    }
    return saved;
}

void restore_params(std::span<NamedParam> params,
                    const std::vector<std::vector<double>>& saved) {
    for (size_t i = 0; i < params.size(); ++i) {
        auto d = params[i].tensor.data();
        std::copy(saved[i].begin(), saved[i].end(), d.begin());
    }
}

Tensor sample_loss(Recognizer& model, const TrainSample& sample,
                   const TrainOptions& options, uint64_t step_seed) {
    switch (options.objective) {
    case TrainOptions::Objective::Supervised:
        return model.training_loss(sample);
    case TrainOptions::Objective::Mim:
        return model.pretrain_loss(sample, PretrainObjective::Mim,
                                   options.mim_mask_ratio, step_seed);
    default:
        return model.pretrain_loss(sample, PretrainObjective::Mlm,
                                   options.mlm_mask_prob, step_seed);
    }
}

void append_metric(std::ofstream& out, const EpochLog& e) {
    nlohmann::json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    if (e.dev_wer) j["dev_wer"] = *e.dev_wer;
    if (e.dev_loss) j["dev_loss"] = *e.dev_loss;
    j["lr"] = e.lr;
    out << j.dump() << '\n';
    out.flush();
}

} // namespace

double evaluate_wer(const Recognizer& model,
                    const std::vector<TrainSample>& samples, bool pooled) {
    return evaluate_rate(model, samples, pooled, /*word_level=*/true);
}

double evaluate_cer(const Recognizer& model,
                    const std::vector<TrainSample>& samples, bool pooled) {
    return evaluate_rate(model, samples, pooled, /*word_level=*/false);
}

TrainResult train(Recognizer& model, const std::vector<TrainSample>& train_set,
                  const std::vector<TrainSample>& dev_set,
                  const HyperParams& hp, const std::string& out_dir,
                  const TrainOptions& options) {
    hp.validate();
    if (train_set.empty()) {
        throw ContractError("train: empty training set");
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("train: cannot create " + out_dir + ": " + ec.message());
    }

    auto params = model.parameters();
    std::vector<Tensor> tensors;
    tensors.reserve(params.size());
    for (NamedParam& p : params) tensors.push_back(p.tensor);
    AdamState state = AdamState::for_params(tensors);

    const int64_t n = static_cast<int64_t>(train_set.size());
    const int64_t window_size = hp.effective_batch();
    const int64_t steps_per_epoch = (n + window_size - 1) / window_size;
    const int64_t total_steps = hp.epochs * steps_per_epoch;
    const bool supervised =
        options.objective == TrainOptions::Objective::Supervised;

    Rng shuffle_rng(Rng::derive(hp.seed, 0x5u));
    const std::string metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();
    const std::string ckpt_path = (fs::path(out_dir) / "best.ckpt").string();
    std::ofstream metrics_out(metrics_path, std::ios::binary);
    if (!metrics_out) {
        throw IoError("trainer: cannot write " + metrics_path);
    }

    TrainResult result;
    result.metrics_path = metrics_path;
    result.checkpoint_path = ckpt_path;
    double best_metric = std::numeric_limits<double>::infinity();
    int64_t best_epoch = 0;

    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;

    int64_t step_index = 0;
    uint64_t pretrain_stream = 0;
    for (NamedParam& p : params) p.tensor.zero_grad();

    // Epoch-0 record: the objective evaluated before any update, so logs
    // expose the true initial loss that later epochs are measured against.
    {
        EpochLog log0;
        log0.epoch = 0;
        double initial = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            initial += sample_loss(model, train_set[static_cast<size_t>(i)],
                                   options, Rng::derive(hp.seed, 0xE0ull + i))
                           .item();
        }
        log0.train_loss = initial / static_cast<double>(n);
        log0.lr = hp.schedule == "cosine" ? cosine_lr(0, total_steps, hp.lr)
                                          : hp.lr;
        if (!dev_set.empty()) {
            const auto saved = quantize_params(params);
            if (supervised) {
                log0.dev_wer = evaluate_wer(model, dev_set);
            } else {
                double dev_loss = 0.0;
                for (size_t i = 0; i < dev_set.size(); ++i) {
                    dev_loss += sample_loss(model, dev_set[i], options,
                                            Rng::derive(hp.seed, 0xDE7ull + i))
                                    .item();
                }
                log0.dev_loss = dev_loss / static_cast<double>(dev_set.size());
            }
            restore_params(params, saved);
        }
        append_metric(metrics_out, log0);
    }

    for (int64_t epoch = 1; epoch <= hp.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        double epoch_lr = 0.0;
        for (int64_t window_start = 0; window_start < n;
             window_start += window_size) {
            const int64_t window_n = std::min(window_size, n - window_start);
            // Grads accumulate across the whole window; the epoch-order loop
            // processes micro-batches of hp.train_batch samples each.
            for (int64_t k = 0; k < window_n; ++k) {
                const TrainSample& sample =
                    train_set[static_cast<size_t>(order[window_start + k])];
                const uint64_t step_seed =
                    Rng::derive(hp.seed, 0x900dull + pretrain_stream++);
                Tape tape;
                const Tensor loss = sample_loss(model, sample, options,
                                                step_seed);
                // A constant loss (e.g. MLM with nothing selected) has no
                // gradient to pull.
                if (tape.contains_output(loss.id())) {
                    tape.backward(loss);
                }
                epoch_loss += loss.item();
            }
            // One optimizer step per window: summed grads averaged over the
            // window's samples (mean-over-samples loss).
            std::vector<std::vector<double>> grads;
            grads.reserve(params.size());
            const double inv = 1.0 / static_cast<double>(window_n);
            for (NamedParam& p : params) {
                auto g = p.tensor.grad();
                std::vector<double> scaled(g.begin(), g.end());
                for (double& v : scaled) v *= inv;
                grads.push_back(std::move(scaled));
            }
            const double lr_t = hp.schedule == "cosine"
                                    ? cosine_lr(step_index, total_steps, hp.lr)
                                    : hp.lr;
            epoch_lr = lr_t;
            adam_step(tensors, grads, state, hp, lr_t);
            ++step_index;
            for (NamedParam& p : params) p.tensor.zero_grad();
        }

        EpochLog log;
        log.epoch = epoch;
        log.train_loss = epoch_loss / static_cast<double>(n);
        log.lr = epoch_lr;

        double metric = log.train_loss;
        if (!dev_set.empty()) {
            // Evaluate at checkpoint (f32) precision so the logged score is
            // exactly what the saved checkpoint reproduces.
            const auto saved = quantize_params(params);
            if (supervised) {
                log.dev_wer = evaluate_wer(model, dev_set);
                metric = *log.dev_wer;
            } else {
                double dev_loss = 0.0;
                for (size_t i = 0; i < dev_set.size(); ++i) {
                    const uint64_t dev_seed = Rng::derive(hp.seed, 0xDE7ull + i);
                    dev_loss +=
                        sample_loss(model, dev_set[i], options, dev_seed)
                            .item();
                }
                log.dev_loss = dev_loss / static_cast<double>(dev_set.size());
                metric = *log.dev_loss;
            }
            restore_params(params, saved);
        }
        result.epochs.push_back(log);
        append_metric(metrics_out, log);

        if (metric < best_metric) {
            best_metric = metric;
            best_epoch = epoch;
            save_model(ckpt_path, model);
        }
    }

    result.best_epoch = best_epoch;
    result.best_metric = best_metric;
    return result;
}

} // namespace vedocr
