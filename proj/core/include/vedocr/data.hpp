// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vedocr/image.hpp"
#include "vedocr/metrics.hpp"
#include "vedocr/rng.hpp"

namespace vedocr {

enum class Split { Unset, Train, Dev, Test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

/// One dataset record. `image` is the path as written in the manifest
/// (relative to the manifest file); `resolved_path` is usable directly.
struct SampleManifest {
    std::string image;
    std::string resolved_path;
    std::string text;
    std::string dataset;
    Cluster cluster = Cluster::Ocr;
    Split split = Split::Unset;
};

/// Parses a UTF-8 JSONL manifest, validating that texts are non-empty and
/// every referenced image exists and parses as PGM. Order is preserved.
std::vector<SampleManifest> load_manifest(const std::string& path);

/// Writes entries one JSON object per line with fields image, text, dataset,
/// cluster and (when set) split.
void save_manifest(const std::string& path,
                   const std::vector<SampleManifest>& samples);

struct DataSplits {
    std::vector<SampleManifest> train;
    std::vector<SampleManifest> dev;
    std::vector<SampleManifest> test;
};

/// Samples with a preset split keep it verbatim; the remainder is
/// seed-shuffled and partitioned by the ratios with floor rounding, the
/// remainder going to train. Ratios must sum to 1.
DataSplits split_dataset(const std::vector<SampleManifest>& samples,
                         const std::array<double, 3>& ratios, uint64_t seed);

/// Parametric handwriting style standing in for a font.
struct GlyphStyle {
    int64_t style_id = 0;
    double stroke_width_px = 1.6;
    double slant = 0.0;            // radians, positive leans right
    double baseline_curvature = 0.0;
    double join_thickness_px = 1.2;
    double diacritic_offset_px = 2.0;
    double jitter_px = 0.4;
};

std::vector<GlyphStyle> make_style_roster(int64_t count, uint64_t seed);

/// Base glyphs plus combining marks; the space character is always part of
/// the writing system. Symbols must come from the built-in stroke atlas.
struct Alphabet {
    std::vector<std::string> bases;
    std::vector<std::string> marks;

    static Alphabet standard(); // 18 bases + 4 marks (+ space) = 23 symbols
    /// All symbols in vocabulary order: bases, marks, space.
    std::vector<std::string> symbols() const;
    bool contains(const std::string& cp) const;
    bool is_mark(const std::string& cp) const;
};

/// Renders `text` right to left as a cursive line: consecutive base glyphs
/// are joined along the baseline, combining marks sit above or below their
/// preceding base glyph, and all randomness (jitter) comes from `seed`.
/// Background is 255 (1.0), ink runs toward 0. Width grows with glyph count.
GrayImage render_sample(const std::string& text, const GlyphStyle& style,
                        int64_t height, uint64_t seed,
                        const Alphabet& alphabet = Alphabet::standard());

struct SynthConfig {
    int64_t count = 2000;
    Alphabet alphabet = Alphabet::standard();
    int64_t style_count = 28;
    int64_t min_len = 2; // base glyphs per line
    int64_t max_len = 6;
    int64_t height = 32;
    uint64_t seed = 42;
    std::string dataset = "synthetic";
    Cluster cluster = Cluster::Ocr;
    double mark_prob = 0.25;  // chance of a diacritic after a base glyph
    double space_prob = 0.15; // chance of a word break between base glyphs
};

/// Writes `count` PGM images plus manifest.jsonl and vocab.txt under
/// out_dir and returns the manifest path. Texts are sampled uniformly from
/// the alphabet, styles are assigned round-robin, and the whole corpus is a
/// pure function of the config.
std::string generate_corpus(const SynthConfig& config,
                            const std::string& out_dir);

/// Renders `k` extra copies of the sample's text in k distinct styles chosen
/// without replacement from the roster; images land in out_dir. The original
/// sample is untouched.
std::vector<SampleManifest> augment_line(const SampleManifest& sample,
                                         const std::vector<GlyphStyle>& roster,
                                         int64_t k, uint64_t seed,
                                         const std::string& out_dir,
                                         int64_t height);

} // namespace vedocr
