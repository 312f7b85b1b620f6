// SPDX-License-Identifier: Apache-2.0
//
// Black-box contract tests for the vedocr binary: subcommand behaviour,
// exit codes (0 ok / 2 config / 3 io / 4 data), --json output, determinism.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

std::string g_binary;
fs::path g_root;
int g_failures = 0;

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

RunResult run(const std::string& args) {
    const fs::path out_file = g_root / "cmd.out";
    const fs::path err_file = g_root / "cmd.err";
    const std::string cmd = g_binary + " " + args + " > " +
                            out_file.string() + " 2> " + err_file.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(in), {});
    };
    r.out = slurp(out_file);
    r.err = slurp(err_file);
    return r;
}

void expect(bool ok, const std::string& what) {
    if (ok) {
        std::cout << "  ok: " << what << "\n";
    } else {
        std::cout << "  FAILED: " << what << "\n";
        ++g_failures;
    }
}

std::string last_line(const std::string& text) {
    std::istringstream in(text);
    std::string line, last;
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
    }
    return last;
}

uint64_t fnv1a_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::cerr << "usage: cli_tests <vedocr binary>\n";
        return 2;
    }
    g_binary = argv[1];
    g_root = fs::current_path() / "cli_scratch";
    fs::remove_all(g_root);
    fs::create_directories(g_root);
    const std::string root = g_root.string();

    std::cout << "== synth ==\n";
    write_file(g_root / "synth.json",
               R"({"count": 10, "styles": 4, "min_len": 1, "max_len": 3,)"
               R"( "height": 32, "seed": 7, "dataset": "smoke",)"
               R"( "cluster": "OCR"})");
    RunResult r = run("synth --config " + root + "/synth.json --out " + root +
                      "/corpus --json");
    expect(r.exit_code == 0, "synth exits 0");
    {
        int pgms = 0;
        for (const auto& e : fs::directory_iterator(g_root / "corpus")) {
            if (e.path().extension() == ".pgm") ++pgms;
        }
        expect(pgms == 10, "synth wrote 10 PGM files");
        const auto j = nlohmann::json::parse(last_line(r.out));
        expect(j["count"] == 10, "synth --json reports the count");
    }
    r = run("synth --config " + root + "/missing.json --out " + root + "/x");
    expect(r.exit_code == 2, "missing config file exits 2");

    // Re-running the same config gives identical bytes.
    run("synth --config " + root + "/synth.json --out " + root + "/corpus_b");
    bool identical = true;
    for (const auto& e : fs::directory_iterator(g_root / "corpus")) {
        identical = identical &&
                    fnv1a_file(e.path()) ==
                        fnv1a_file(g_root / "corpus_b" / e.path().filename());
    }
    expect(identical, "synth reruns produce identical bytes");

    // --seed overrides the configured seed.
    run("synth --config " + root + "/synth.json --out " + root +
        "/corpus_s --seed 99");
    expect(fnv1a_file(g_root / "corpus_s/manifest.jsonl") !=
               fnv1a_file(g_root / "corpus/manifest.jsonl"),
           "--seed overrides the config seed");

    std::cout << "== train ==\n";
    write_file(g_root / "model.json",
               R"({"variant": "global", "height": 32, "width": 128,)"
               R"( "patch": 16, "dim": 16, "enc_layers": 1, "dec_layers": 1,)"
               R"( "heads": 2, "lmax": 24, "ffn_hidden": 32,)"
               R"( "vocab": "corpus/vocab.txt"})");
    write_file(g_root / "hp.json",
               R"({"lr": 1e-3, "train_batch": 4, "grad_accum_steps": 2,)"
               R"( "epochs": 2, "seed": 11})");
    r = run("train --model " + root + "/model.json --train " + root +
            "/corpus/manifest.jsonl --dev " + root +
            "/corpus/manifest.jsonl --hp " + root + "/hp.json --out " + root +
            "/run --json");
    expect(r.exit_code == 0, "train exits 0");
    expect(fs::exists(g_root / "run/best.ckpt"), "train wrote a checkpoint");
    expect(fs::exists(g_root / "run/metrics.jsonl"), "train wrote metrics");
    {
        std::ifstream metrics(g_root / "run/metrics.jsonl");
        std::string line;
        int lines = 0;
        bool has_fields = true;
        while (std::getline(metrics, line)) {
            const auto j = nlohmann::json::parse(line);
            has_fields = has_fields && j.contains("epoch") &&
                         j.contains("train_loss") && j.contains("dev_wer") &&
                         j.contains("lr");
            ++lines;
        }
        // One record per epoch plus the epoch-0 (pre-update) baseline.
        expect(lines == 3 && has_fields, "metrics.jsonl has the epoch schema");
    }
    r = run("train --model " + root + "/nope.json --train x --out y");
    expect(r.exit_code == 2, "missing model config exits 2");
    r = run("train --model " + root + "/model.json --train " + root +
            "/nope.jsonl --out " + root + "/y");
    expect(r.exit_code == 3, "missing manifest exits 3");

    write_file(g_root / "empty.jsonl", "");
    r = run("train --model " + root + "/model.json --train " + root +
            "/empty.jsonl --out " + root + "/y");
    expect(r.exit_code == 4, "empty train manifest exits 4");

    std::cout << "== pretrain ==\n";
    write_file(g_root / "hp_pre.json",
               R"({"lr": 1e-3, "train_batch": 4, "grad_accum_steps": 1,)"
               R"( "epochs": 2, "seed": 11})");
    r = run("pretrain --objective mim --model " + root +
            "/model.json --train " + root + "/corpus/manifest.jsonl --hp " +
            root + "/hp_pre.json --out " + root + "/pre");
    expect(r.exit_code == 0, "pretrain mim exits 0");
    r = run("pretrain --objective mlm --model " + root +
            "/model.json --train " + root + "/corpus/manifest.jsonl --hp " +
            root + "/hp_pre.json --out " + root + "/pre2 --init " + root +
            "/pre/best.ckpt");
    expect(r.exit_code == 0, "pretrain mlm chains from a checkpoint");
    r = run("pretrain --objective bogus --model " + root +
            "/model.json --train " + root + "/corpus/manifest.jsonl --out " +
            root + "/pre3");
    expect(r.exit_code == 2, "unknown objective exits 2");

    std::cout << "== eval / bench ==\n";
    r = run("eval --model " + root + "/run/best.ckpt --manifest " + root +
            "/corpus/manifest.jsonl --metric wer --json");
    expect(r.exit_code == 0, "eval exits 0");
    {
        const auto j = nlohmann::json::parse(last_line(r.out));
        expect(j.contains("aggregate") && j["samples"] == 10,
               "eval --json reports aggregate and count");
    }
    r = run("eval --model " + root + "/run/best.ckpt --manifest " + root +
            "/corpus/manifest.jsonl --metric banana");
    expect(r.exit_code == 2, "bad metric exits 2");
    r = run("eval --model " + root + "/run/best.ckpt --manifest " + root +
            "/empty.jsonl --metric wer");
    expect(r.exit_code == 4, "empty eval manifest exits 4");

    r = run("bench --model " + root + "/run/best.ckpt --manifests " + root +
            "/corpus/manifest.jsonl --json --out " + root + "/report.json");
    expect(r.exit_code == 0, "bench exits 0");
    {
        const auto j = nlohmann::json::parse(last_line(r.out));
        expect(j.is_array() && j.size() == 1 &&
                   j[0].contains("midad_score") && j[0].contains("datasets"),
               "bench --json carries the report schema");
        expect(fs::exists(g_root / "report.json"), "bench --out wrote a file");
        expect(r.out.find("midad_score") != std::string::npos,
               "bench prints the text table");
    }

    std::cout << "== recognize ==\n";
    r = run("recognize --model " + root + "/run/best.ckpt --image " + root +
            "/corpus/sample_00000.pgm --json");
    expect(r.exit_code == 0, "recognize exits 0");
    r = run("recognize --model " + root + "/run/best.ckpt --image " + root +
            "/corpus/sample_00000.pgm");
    const std::string once = r.out;
    r = run("recognize --model " + root + "/run/best.ckpt --image " + root +
            "/corpus/sample_00000.pgm");
    expect(r.out == once, "recognize is deterministic");
    r = run("recognize --model " + root + "/run/best.ckpt --image " + root +
            "/no.pgm");
    expect(r.exit_code == 3, "unreadable image exits 3");
    r = run("recognize --model " + root + "/run/best.ckpt --image " + root +
            "/corpus/sample_00000.pgm --variant ctc");
    expect(r.exit_code == 2, "variant mismatch exits 2");

    std::cout << "== augment ==\n";
    r = run("augment --manifest " + root + "/corpus/manifest.jsonl --out " +
            root + "/aug -k 2 --styles 6 --seed 9 --json");
    expect(r.exit_code == 0, "augment exits 0");
    {
        const auto j = nlohmann::json::parse(last_line(r.out));
        expect(j["count"] == 20, "augment rendered k per sample");
    }

    std::cout << "== usage ==\n";
    r = run("frobnicate");
    expect(r.exit_code == 2, "unknown subcommand exits 2");
    r = run("--help");
    expect(r.exit_code == 0, "--help exits 0");

    std::cout << (g_failures == 0 ? "ALL CLI CHECKS PASSED\n"
                                  : "CLI CHECKS FAILED\n");
    return g_failures == 0 ? 0 : 1;
}
