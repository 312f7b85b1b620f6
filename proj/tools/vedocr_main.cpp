// SPDX-License-Identifier: Apache-2.0
//
// vedocr: synthesize cursive line corpora, train/pretrain recognizers,
// evaluate them, and run benchmark reports.
//
// Exit codes: 0 success, 2 config/usage error, 3 I/O error, 4 data or
// invariant violation. stdout carries data, stderr carries logs; with
// --json the last stdout line is a single JSON object.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vedocr/trainer.hpp"

using namespace vedocr;
namespace fs = std::filesystem;

namespace {

struct ExitWith {
    int code;
    std::string message;
};

/// Failures while reading configuration are usage errors (2).
template <typename Fn>
auto config_stage(Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw ExitWith{2, e.what()};
    }
}

/// Failures while touching datasets/images/checkpoints: I/O is 3, bad or
/// invariant-violating data is 4.
template <typename Fn>
auto data_stage(Fn&& fn) {
    try {
        return fn();
    } catch (const IoError& e) {
        throw ExitWith{3, e.what()};
    } catch (const Error& e) {
        throw ExitWith{4, e.what()};
    }
}

SynthConfig load_synth_config(const std::string& path, bool seed_set,
                              uint64_t seed_override) {
    return config_stage([&] {
        std::ifstream in(path);
        if (!in) {
            throw IoError("synth config: cannot open " + path);
        }
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("synth config " + path + ": " + e.what());
        }
        SynthConfig cfg;
        cfg.count = j.value("count", cfg.count);
        cfg.style_count = j.value("styles", cfg.style_count);
        cfg.min_len = j.value("min_len", cfg.min_len);
        cfg.max_len = j.value("max_len", cfg.max_len);
        cfg.height = j.value("height", cfg.height);
        cfg.seed = j.value("seed", cfg.seed);
        cfg.dataset = j.value("dataset", cfg.dataset);
        if (j.contains("cluster")) {
            cfg.cluster = cluster_from_name(j["cluster"].get<std::string>());
        }
        cfg.mark_prob = j.value("mark_prob", cfg.mark_prob);
        cfg.space_prob = j.value("space_prob", cfg.space_prob);
        if (j.contains("alphabet")) {
            cfg.alphabet.bases =
                j["alphabet"].value("bases", cfg.alphabet.bases);
            cfg.alphabet.marks =
                j["alphabet"].value("marks", cfg.alphabet.marks);
            // Every symbol must have a stroke recipe.
            const GlyphStyle probe = make_style_roster(1, 0)[0];
            for (const std::string& b : cfg.alphabet.bases) {
                render_sample(b, probe, 32, 0, cfg.alphabet);
            }
            for (const std::string& m : cfg.alphabet.marks) {
                render_sample(cfg.alphabet.bases.at(0) + m, probe, 32, 0,
                              cfg.alphabet);
            }
        }
        if (seed_set) cfg.seed = seed_override;
        return cfg;
    });
}

Tokenizer tokenizer_for(const ModelConfig& config) {
    if (config.vocab_path.empty()) {
        throw ContractError("model config: missing \"vocab\" path");
    }
    return Tokenizer::load(config.vocab_path);
}

std::vector<TrainSample> load_manifest_samples(const std::string& path) {
    return data_stage([&] { return load_samples(load_manifest(path)); });
}

std::unique_ptr<Recognizer> load_model_file(const std::string& path) {
    return data_stage(
        [&] { return model_from_checkpoint(load_checkpoint(path)); });
}

void emit_json(bool enabled, const nlohmann::json& j) {
    if (enabled) std::cout << j.dump() << "\n";
}

// ---- subcommands -------------------------------------------------------------

int cmd_synth(const std::string& config_path, const std::string& out_dir,
              bool seed_set, uint64_t seed, bool json) {
    const SynthConfig cfg = load_synth_config(config_path, seed_set, seed);
    const std::string manifest =
        data_stage([&] { return generate_corpus(cfg, out_dir); });
    const auto entries = data_stage([&] { return load_manifest(manifest); });
    std::cout << manifest << "\n" << entries.size() << " samples\n";
    emit_json(json, {{"manifest", manifest},
                     {"count", entries.size()},
                     {"vocab", (fs::path(out_dir) / "vocab.txt").string()}});
    return 0;
}

struct TrainArgs {
    std::string model_path;
    std::string train_path;
    std::string dev_path;
    std::string hp_path;
    std::string out_dir;
    std::string init_ckpt;
    bool random_cross = false;
    bool seed_set = false;
    uint64_t seed = 0;
    bool json = false;
};

int run_training(const TrainArgs& args, const TrainOptions& options) {
    const ModelConfig config = config_stage(
        [&] { return ModelConfig::from_json_file(args.model_path); });
    HyperParams hp = config_stage([&] {
        return args.hp_path.empty()
                   ? HyperParams()
                   : HyperParams::from_json_file(args.hp_path);
    });
    if (args.seed_set) hp.seed = args.seed;
    const Tokenizer tokenizer =
        config_stage([&] { return tokenizer_for(config); });

    std::unique_ptr<Recognizer> model;
    if (args.init_ckpt.empty()) {
        model =
            data_stage([&] { return build_model(config, tokenizer, hp.seed); });
    } else {
        model = data_stage([&] {
            return model_from_checkpoint(load_checkpoint(args.init_ckpt),
                                         args.random_cross, hp.seed);
        });
    }

    const auto train_set = load_manifest_samples(args.train_path);
    std::vector<TrainSample> dev_set;
    if (!args.dev_path.empty()) {
        dev_set = load_manifest_samples(args.dev_path);
    }
    if (train_set.empty()) {
        throw ExitWith{4, "train: manifest " + args.train_path + " is empty"};
    }

    const TrainResult result = data_stage([&] {
        return train(*model, train_set, dev_set, hp, args.out_dir, options);
    });
    std::cout << result.checkpoint_path << "\n" << result.metrics_path << "\n";
    std::cerr << "best epoch " << result.best_epoch << ", metric "
              << result.best_metric << "\n";
    emit_json(args.json, {{"checkpoint", result.checkpoint_path},
                          {"metrics", result.metrics_path},
                          {"best_epoch", result.best_epoch},
                          {"best_metric", result.best_metric}});
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& manifest_path,
             const std::string& metric, bool pooled, bool json) {
    if (metric != "wer" && metric != "cer") {
        throw ExitWith{2, "eval: --metric must be wer or cer"};
    }
    auto model = load_model_file(model_path);
    const auto samples = load_manifest_samples(manifest_path);
    if (samples.empty()) {
        throw ExitWith{4, "eval: manifest " + manifest_path + " is empty"};
    }
    const bool word_level = metric == "wer";
    double sum = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        const std::string hyp = model->recognize(samples[i].image);
        const double rate = data_stage([&] {
            return word_level ? wer(samples[i].text, hyp)
                              : cer(samples[i].text, hyp);
        });
        sum += rate;
        std::cout << i << "\t" << rate << "\t" << hyp << "\n";
    }
    const double aggregate_rate =
        pooled ? (word_level ? evaluate_wer(*model, samples, true)
                             : evaluate_cer(*model, samples, true))
               : sum / static_cast<double>(samples.size());
    std::cout << "aggregate\t" << aggregate_rate << "\n";
    emit_json(json, {{"metric", metric},
                     {"aggregate", aggregate_rate},
                     {"samples", samples.size()},
                     {"pooled", pooled}});
    return 0;
}

int cmd_bench(const std::vector<std::string>& model_paths,
              const std::vector<std::string>& manifest_paths,
              const std::string& out_path, bool pooled, bool json) {
    struct DatasetBucket {
        Cluster cluster = Cluster::Ocr;
        std::vector<TrainSample> samples;
    };
    std::map<std::string, DatasetBucket> datasets;
    for (const std::string& mpath : manifest_paths) {
        const auto entries = data_stage([&] { return load_manifest(mpath); });
        if (entries.empty()) {
            throw ExitWith{4, "bench: manifest " + mpath + " is empty"};
        }
        for (const SampleManifest& e : entries) {
            DatasetBucket& bucket = datasets[e.dataset];
            if (!bucket.samples.empty() && bucket.cluster != e.cluster) {
                throw ExitWith{4, "bench: dataset " + e.dataset +
                                      " appears in two clusters"};
            }
            bucket.cluster = e.cluster;
            bucket.samples.push_back(data_stage([&] {
                return TrainSample{read_pgm(e.resolved_path), e.text};
            }));
        }
    }

    nlohmann::json out_json = nlohmann::json::array();
    for (const std::string& model_path : model_paths) {
        auto model = load_model_file(model_path);
        std::vector<DatasetScore> scores;
        for (const auto& [name, bucket] : datasets) {
            DatasetScore score;
            score.dataset = name;
            score.cluster = bucket.cluster;
            score.wer_percent =
                100.0 * evaluate_wer(*model, bucket.samples, pooled);
            score.cer_percent =
                100.0 * evaluate_cer(*model, bucket.samples, pooled);
            score.samples = static_cast<int64_t>(bucket.samples.size());
            scores.push_back(std::move(score));
        }
        const BenchmarkReport report =
            data_stage([&] { return aggregate(scores); });
        std::cout << "model: " << model_path << "\n"
                  << report_to_table(report) << "\n";
        nlohmann::json row = nlohmann::json::parse(report_to_json(report));
        row["model"] = model_path;
        out_json.push_back(std::move(row));
    }
    if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary);
        if (!out) {
            throw ExitWith{3, "bench: cannot write " + out_path};
        }
        out << out_json.dump(2) << "\n";
    }
    emit_json(json, out_json);
    return 0;
}

int cmd_recognize(const std::string& model_path, const std::string& image_path,
                  const std::string& expect_variant, bool json) {
    auto model = load_model_file(model_path);
    if (!expect_variant.empty() &&
        expect_variant != variant_name(model->config().variant)) {
        throw ExitWith{2, "recognize: checkpoint variant '" +
                              variant_name(model->config().variant) +
                              "' does not match --variant '" +
                              expect_variant + "'"};
    }
    GrayImage image;
    try {
        image = read_pgm(image_path);
    } catch (const Error& e) {
        throw ExitWith{3, e.what()};
    }
    const std::string text = model->recognize(image);
    std::cout << text << "\n";
    emit_json(json, {{"text", text}, {"image", image_path}});
    return 0;
}

int cmd_augment(const std::string& manifest_path, const std::string& out_dir,
                int64_t k, int64_t styles, bool seed_set, uint64_t seed,
                bool json) {
    const auto entries =
        data_stage([&] { return load_manifest(manifest_path); });
    const uint64_t base_seed = seed_set ? seed : 42;
    const auto roster = make_style_roster(styles, Rng::derive(base_seed, 1));
    std::vector<SampleManifest> augmented;
    for (size_t i = 0; i < entries.size(); ++i) {
        const GrayImage original =
            data_stage([&] { return read_pgm(entries[i].resolved_path); });
        const auto extra = data_stage([&] {
            return augment_line(entries[i], roster, k,
                                Rng::derive(base_seed, 100 + i), out_dir,
                                original.height);
        });
        augmented.insert(augmented.end(), extra.begin(), extra.end());
    }
    const std::string out_manifest =
        (fs::path(out_dir) / "augmented.jsonl").string();
    data_stage([&] {
        save_manifest(out_manifest, augmented);
        return 0;
    });
    std::cout << out_manifest << "\n" << augmented.size() << " samples\n";
    emit_json(json, {{"manifest", out_manifest}, {"count", augmented.size()}});
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"vision encoder-decoder OCR/HWR toolkit"};
    app.require_subcommand(1);

    bool json = false;
    uint64_t seed = 0;
    bool seed_set = false;
    app.add_flag("--json", json, "end stdout with a single JSON line");
    app.add_option("--seed", seed, "override every configured seed")
        ->each([&](const std::string&) { seed_set = true; });

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "synth config JSON")
        ->required();
    synth->add_option("--out", synth_out, "output directory")->required();

    TrainArgs targs;
    auto* train_cmd = app.add_subcommand("train", "supervised training");
    train_cmd->add_option("--model", targs.model_path, "model config JSON")
        ->required();
    train_cmd->add_option("--train", targs.train_path, "training manifest")
        ->required();
    train_cmd->add_option("--dev", targs.dev_path, "dev manifest");
    train_cmd->add_option("--hp", targs.hp_path, "hyperparameter JSON");
    train_cmd->add_option("--out", targs.out_dir, "output directory")
        ->required();
    train_cmd->add_option("--init", targs.init_ckpt,
                          "initialize weights from a checkpoint");
    train_cmd->add_flag(
        "--random-cross-attention", targs.random_cross,
        "redraw decoder cross-attention instead of loading it");

    auto* pre_cmd = app.add_subcommand("pretrain", "self-supervised training");
    std::string objective;
    double mask_ratio = 0.5, mask_prob = 0.15;
    TrainArgs pargs;
    pre_cmd->add_option("--objective", objective, "mim or mlm")->required();
    pre_cmd->add_option("--model", pargs.model_path, "model config JSON")
        ->required();
    pre_cmd->add_option("--train", pargs.train_path, "training manifest")
        ->required();
    pre_cmd->add_option("--dev", pargs.dev_path, "dev manifest");
    pre_cmd->add_option("--hp", pargs.hp_path, "hyperparameter JSON");
    pre_cmd->add_option("--out", pargs.out_dir, "output directory")
        ->required();
    pre_cmd->add_option("--mask-ratio", mask_ratio,
                        "MIM fraction of masked patches");
    pre_cmd->add_option("--mask-prob", mask_prob,
                        "MLM per-token masking probability");
    pre_cmd->add_option("--init", pargs.init_ckpt,
                        "initialize weights from a checkpoint");

    auto* eval_cmd = app.add_subcommand("eval", "per-sample metric report");
    std::string eval_model, eval_manifest, eval_metric = "wer";
    bool pooled = false;
    eval_cmd->add_option("--model", eval_model, "checkpoint")->required();
    eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest")
        ->required();
    eval_cmd->add_option("--metric", eval_metric, "wer or cer");
    eval_cmd->add_flag("--pooled", pooled,
                       "pool edits over the corpus instead of per-sample");

    auto* bench_cmd =
        app.add_subcommand("bench", "benchmark report over datasets");
    std::vector<std::string> bench_models, bench_manifests;
    std::string bench_out;
    bool bench_pooled = false;
    bench_cmd->add_option("--model", bench_models, "checkpoint(s)")
        ->required();
    bench_cmd->add_option("--manifests", bench_manifests, "dataset manifests")
        ->required();
    bench_cmd->add_option("--out", bench_out, "write the JSON report here");
    bench_cmd->add_flag("--pooled", bench_pooled,
                        "pool edits over each dataset");

    auto* rec_cmd = app.add_subcommand("recognize", "read one image");
    std::string rec_model, rec_image, rec_variant;
    rec_cmd->add_option("--model", rec_model, "checkpoint")->required();
    rec_cmd->add_option("--image", rec_image, "PGM image")->required();
    rec_cmd->add_option("--variant", rec_variant,
                        "assert the checkpoint variant (global|windowed|ctc)");

    auto* aug_cmd =
        app.add_subcommand("augment", "render extra styles per sample");
    std::string aug_manifest, aug_out;
    int64_t aug_k = 4, aug_styles = 28;
    aug_cmd->add_option("--manifest", aug_manifest, "dataset manifest")
        ->required();
    aug_cmd->add_option("--out", aug_out, "output directory")->required();
    aug_cmd->add_option("-k,--count", aug_k, "styles per sample");
    aug_cmd->add_option("--styles", aug_styles, "style roster size");

    for (CLI::App* sub : app.get_subcommands({})) {
        sub->fallthrough(); // lets --json / --seed follow the subcommand
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) {
            return cmd_synth(synth_config, synth_out, seed_set, seed, json);
        }
        if (train_cmd->parsed()) {
            targs.seed_set = seed_set;
            targs.seed = seed;
            targs.json = json;
            return run_training(targs, {});
        }
        if (pre_cmd->parsed()) {
            pargs.seed_set = seed_set;
            pargs.seed = seed;
            pargs.json = json;
            TrainOptions options;
            if (objective == "mim") {
                options.objective = TrainOptions::Objective::Mim;
            } else if (objective == "mlm") {
                options.objective = TrainOptions::Objective::Mlm;
            } else {
                throw ExitWith{2, "pretrain: --objective must be mim or mlm"};
            }
            options.mim_mask_ratio = mask_ratio;
            options.mlm_mask_prob = mask_prob;
            return run_training(pargs, options);
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(eval_model, eval_manifest, eval_metric, pooled,
                            json);
        }
        if (bench_cmd->parsed()) {
            return cmd_bench(bench_models, bench_manifests, bench_out,
                             bench_pooled, json);
        }
        if (rec_cmd->parsed()) {
            return cmd_recognize(rec_model, rec_image, rec_variant, json);
        }
        if (aug_cmd->parsed()) {
            return cmd_augment(aug_manifest, aug_out, aug_k, aug_styles,
                               seed_set, seed, json);
        }
    } catch (const ExitWith& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
