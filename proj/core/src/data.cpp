// SPDX-License-Identifier: Apache-2.0
#include "vedocr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vedocr/error.hpp"
#include "vedocr/tokenizer.hpp"
#include "vedocr/utf8.hpp"

namespace fs = std::filesystem;

namespace vedocr {

std::string split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
    default: return "";
    }
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "dev") return Split::Dev;
    if (name == "test") return Split::Test;
    throw ValidationError("split must be train|dev|test, got '" + name + "'");
}

// ---- manifests ---------------------------------------------------------------

std::vector<SampleManifest> load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("manifest: cannot open " + path);
    }
    const fs::path base = fs::path(path).parent_path();
    std::vector<SampleManifest> samples;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("manifest " + path + ":" +
                             std::to_string(line_no) + ": " + e.what());
        }
        SampleManifest s;
        try {
            s.image = j.at("image").get<std::string>();
            s.text = j.at("text").get<std::string>();
            s.dataset = j.at("dataset").get<std::string>();
            s.cluster = cluster_from_name(j.at("cluster").get<std::string>());
            if (j.contains("split")) {
                s.split = split_from_name(j.at("split").get<std::string>());
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("manifest " + path + ":" +
                             std::to_string(line_no) + ": " + e.what());
        }
        if (s.text.empty()) {
            throw ValidationError("manifest " + path + ":" +
                                  std::to_string(line_no) + ": empty text");
        }
        s.resolved_path = (base / s.image).string();
        if (!probe_pgm(s.resolved_path)) {
            throw ValidationError("manifest " + path + ":" +
                                  std::to_string(line_no) + ": image " +
                                  s.resolved_path +
                                  " is missing or not a valid PGM");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_manifest(const std::string& path,
                   const std::vector<SampleManifest>& samples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("manifest: cannot write " + path);
    }
    for (const SampleManifest& s : samples) {
        nlohmann::json j;
        j["image"] = s.image;
        j["text"] = s.text;
        j["dataset"] = s.dataset;
        j["cluster"] = cluster_name(s.cluster);
        if (s.split != Split::Unset) j["split"] = split_name(s.split);
        out << j.dump() << '\n';
    }
    if (!out) {
        throw IoError("manifest: failed writing " + path);
    }
}

DataSplits split_dataset(const std::vector<SampleManifest>& samples,
                         const std::array<double, 3>& ratios, uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9) {
        throw ContractError("split_dataset: ratios sum to " +
                            std::to_string(sum) + ", expected 1");
    }
    DataSplits out;
    std::vector<SampleManifest> loose;
    for (const SampleManifest& s : samples) {
        switch (s.split) {
        case Split::Train: out.train.push_back(s); break;
        case Split::Dev: out.dev.push_back(s); break;
        case Split::Test: out.test.push_back(s); break;
        case Split::Unset: loose.push_back(s); break;
        }
    }
    Rng rng(seed);
    rng.shuffle(loose);
    const int64_t n = static_cast<int64_t>(loose.size());
    const int64_t n_dev = static_cast<int64_t>(std::floor(ratios[1] * n));
    const int64_t n_test = static_cast<int64_t>(std::floor(ratios[2] * n));
    const int64_t n_train = n - n_dev - n_test;
    for (int64_t i = 0; i < n; ++i) {
        SampleManifest s = loose[static_cast<size_t>(i)];
        if (i < n_train) {
            s.split = Split::Train;
            out.train.push_back(std::move(s));
        } else if (i < n_train + n_dev) {
            s.split = Split::Dev;
            out.dev.push_back(std::move(s));
        } else {
            s.split = Split::Test;
            out.test.push_back(std::move(s));
        }
    }
    return out;
}

// ---- glyph atlas ---------------------------------------------------------------
//
// Every base glyph is a set of stroke primitives in a unit body box
// (x right, y down, baseline at y = 1). Marks live in their own small box.
// Only +,-,*,/ and sqrt touch the coordinates, so renders are bit-stable
// across platforms.

namespace {

struct Seg {
    double x0, y0, x1, y1;
};

struct Dot {
    double x, y, r;
};

struct GlyphRecipe {
    std::vector<Seg> segs;
    std::vector<Dot> dots;
};

// Octagon vertices of the unit circle (exact literals, no trig at runtime).
constexpr double kC = 0.7071067811865476;
const std::array<std::array<double, 2>, 8> kCircle = {{{1, 0},
                                                       {kC, kC},
                                                       {0, 1},
                                                       {-kC, kC},
                                                       {-1, 0},
                                                       {-kC, -kC},
                                                       {0, -1},
                                                       {kC, -kC}}};

void add_circle(GlyphRecipe& g, double cx, double cy, double r) {
    for (size_t i = 0; i < kCircle.size(); ++i) {
        const auto& a = kCircle[i];
        const auto& b = kCircle[(i + 1) % kCircle.size()];
        g.segs.push_back(
            {cx + r * a[0], cy + r * a[1], cx + r * b[0], cy + r * b[1]});
    }
}

void add_polyline(GlyphRecipe& g, std::initializer_list<std::array<double, 2>> pts) {
    const auto* prev = pts.begin();
    for (const auto* it = pts.begin() + 1; it != pts.end(); ++it) {
        g.segs.push_back({(*prev)[0], (*prev)[1], (*it)[0], (*it)[1]});
        prev = it;
    }
}

std::map<std::string, GlyphRecipe> build_base_atlas() {
    std::map<std::string, GlyphRecipe> atlas;
    {
        GlyphRecipe g; // alif: tall stroke
        add_polyline(g, {{0.5, 0.02}, {0.5, 1.0}});
        atlas["ا"] = g;
    }
    {
        GlyphRecipe g; // ba: open bowl, one dot below
        add_polyline(g, {{0.08, 0.5}, {0.08, 0.95}, {0.2, 1.0}, {0.8, 1.0},
                          {0.92, 0.95}, {0.92, 0.5}});
        g.dots.push_back({0.5, 1.28, 0.08});
        atlas["ب"] = g;
    }
    {
        GlyphRecipe g; // ta: bowl, two dots on top
        add_polyline(g, {{0.08, 0.5}, {0.08, 0.95}, {0.2, 1.0}, {0.8, 1.0},
                          {0.92, 0.95}, {0.92, 0.5}});
        g.dots.push_back({0.36, 0.18, 0.08});
        g.dots.push_back({0.64, 0.18, 0.08});
        atlas["ت"] = g;
    }
    {
        GlyphRecipe g; // tha: bowl, three dots
        add_polyline(g, {{0.08, 0.5}, {0.08, 0.95}, {0.2, 1.0}, {0.8, 1.0},
                          {0.92, 0.95}, {0.92, 0.5}});
        g.dots.push_back({0.3, 0.22, 0.07});
        g.dots.push_back({0.5, 0.04, 0.07});
        g.dots.push_back({0.7, 0.22, 0.07});
        atlas["ث"] = g;
    }
    {
        GlyphRecipe g; // jim: roof, diagonal belly, dot inside
        add_polyline(g, {{0.2, 0.28}, {0.85, 0.28}, {0.35, 0.68}, {0.2, 1.0},
                          {0.6, 1.05}});
        g.dots.push_back({0.55, 0.85, 0.08});
        atlas["ج"] = g;
    }
    {
        GlyphRecipe g; // ha: jim without the dot
        add_polyline(g, {{0.2, 0.28}, {0.85, 0.28}, {0.35, 0.68}, {0.2, 1.0},
                          {0.6, 1.05}});
        atlas["ح"] = g;
    }
    {
        GlyphRecipe g; // dal: two-stroke angle
        add_polyline(g, {{0.3, 0.3}, {0.75, 0.6}, {0.15, 1.0}});
        atlas["د"] = g;
    }
    {
        GlyphRecipe g; // ra: descending slash
        add_polyline(g, {{0.7, 0.5}, {0.55, 0.9}, {0.25, 1.15}});
        atlas["ر"] = g;
    }
    {
        GlyphRecipe g; // zay: ra with a dot above
        add_polyline(g, {{0.7, 0.5}, {0.55, 0.9}, {0.25, 1.15}});
        g.dots.push_back({0.6, 0.22, 0.08});
        atlas["ز"] = g;
    }
    {
        GlyphRecipe g; // sin: three teeth
        add_polyline(g, {{0.05, 1.0}, {0.2, 0.55}, {0.35, 1.0}, {0.5, 0.55},
                          {0.65, 1.0}, {0.8, 0.55}, {0.95, 1.0}});
        atlas["س"] = g;
    }
    {
        GlyphRecipe g; // shin: teeth plus three dots
        add_polyline(g, {{0.05, 1.0}, {0.2, 0.55}, {0.35, 1.0}, {0.5, 0.55},
                          {0.65, 1.0}, {0.8, 0.55}, {0.95, 1.0}});
        g.dots.push_back({0.35, 0.2, 0.06});
        g.dots.push_back({0.5, 0.02, 0.06});
        g.dots.push_back({0.65, 0.2, 0.06});
        atlas["ش"] = g;
    }
    {
        GlyphRecipe g; // sad: loop with a flat tail
        add_circle(g, 0.7, 0.78, 0.2);
        add_polyline(g, {{0.5, 1.0}, {0.05, 1.0}});
        atlas["ص"] = g;
    }
    {
        GlyphRecipe g; // tah: loop plus tall bar
        add_circle(g, 0.62, 0.8, 0.18);
        add_polyline(g, {{0.25, 0.05}, {0.25, 1.0}});
        add_polyline(g, {{0.25, 1.0}, {0.82, 1.0}});
        atlas["ط"] = g;
    }
    {
        GlyphRecipe g; // ain: double-curved opening
        add_polyline(g, {{0.75, 0.3}, {0.4, 0.28}, {0.3, 0.48}, {0.5, 0.6},
                          {0.3, 0.75}, {0.4, 1.0}, {0.8, 1.02}});
        atlas["ع"] = g;
    }
    {
        GlyphRecipe g; // fa: head loop, flat body, one dot
        add_circle(g, 0.7, 0.45, 0.14);
        add_polyline(g, {{0.7, 0.6}, {0.7, 1.0}, {0.08, 1.0}});
        g.dots.push_back({0.7, 0.1, 0.07});
        atlas["ف"] = g;
    }
    {
        GlyphRecipe g; // qaf: head loop, deep tail, two dots
        add_circle(g, 0.65, 0.45, 0.14);
        add_polyline(g, {{0.65, 0.6}, {0.62, 1.0}, {0.4, 1.22}, {0.15, 1.1}});
        g.dots.push_back({0.5, 0.1, 0.06});
        g.dots.push_back({0.8, 0.1, 0.06});
        atlas["ق"] = g;
    }
    {
        GlyphRecipe g; // lam: tall stroke with bottom hook
        add_polyline(g, {{0.72, 0.02}, {0.72, 0.85}, {0.6, 1.0}, {0.2, 1.0},
                          {0.12, 0.85}});
        atlas["ل"] = g;
    }
    {
        GlyphRecipe g; // mim: compact loop with descender
        add_circle(g, 0.55, 0.85, 0.15);
        add_polyline(g, {{0.45, 0.97}, {0.4, 1.3}});
        atlas["م"] = g;
    }
    {
        GlyphRecipe g; // kaf: tall stroke with middle slash
        add_polyline(g, {{0.75, 0.05}, {0.75, 1.0}, {0.1, 1.0}});
        add_polyline(g, {{0.7, 0.45}, {0.3, 0.72}});
        atlas["ك"] = g;
    }
    return atlas;
}

std::map<std::string, GlyphRecipe> build_mark_atlas() {
    std::map<std::string, GlyphRecipe> atlas;
    {
        GlyphRecipe g; // fatha: short slanted bar (above)
        add_polyline(g, {{0.15, 0.7}, {0.85, 0.3}});
        atlas["َ"] = g;
    }
    {
        GlyphRecipe g; // damma: tiny loop with a tail (above)
        add_circle(g, 0.45, 0.5, 0.28);
        add_polyline(g, {{0.73, 0.5}, {0.95, 0.75}});
        atlas["ُ"] = g;
    }
    {
        GlyphRecipe g; // kasra: short slanted bar (below)
        add_polyline(g, {{0.15, 0.3}, {0.85, 0.7}});
        atlas["ِ"] = g;
    }
    {
        GlyphRecipe g; // sukun: small ring (above)
        add_circle(g, 0.5, 0.5, 0.3);
        atlas["ْ"] = g;
    }
    return atlas;
}

const std::map<std::string, GlyphRecipe>& base_atlas() {
    static const std::map<std::string, GlyphRecipe> atlas = build_base_atlas();
    return atlas;
}

const std::map<std::string, GlyphRecipe>& mark_atlas() {
    static const std::map<std::string, GlyphRecipe> atlas = build_mark_atlas();
    return atlas;
}

// Marks drawn below the body rather than above it.
bool mark_goes_below(const std::string& cp) { return cp == "ِ"; }

// Vertical layout as fractions of the canvas height.
constexpr double kBodyTop = 0.28;
constexpr double kBodyBottom = 0.75;
constexpr double kMarkAboveCenter = 0.12;
constexpr double kMarkBelowCenter = 0.88;

struct Canvas {
    int64_t h = 0, w = 0;
    std::vector<double> v; // intensity in [0,1], 1 = paper

    void stroke(double x0, double y0, double x1, double y1, double width) {
        const double half = width * 0.5;
        const int64_t xa = static_cast<int64_t>(
            std::max(0.0, std::min(x0, x1) - half - 1.0));
        const int64_t xb = static_cast<int64_t>(
            std::min(static_cast<double>(w - 1), std::max(x0, x1) + half + 1.0));
        const int64_t ya = static_cast<int64_t>(
            std::max(0.0, std::min(y0, y1) - half - 1.0));
        const int64_t yb = static_cast<int64_t>(
            std::min(static_cast<double>(h - 1), std::max(y0, y1) + half + 1.0));
        const double dx = x1 - x0, dy = y1 - y0;
        const double len2 = dx * dx + dy * dy;
        for (int64_t y = ya; y <= yb; ++y) {
            for (int64_t x = xa; x <= xb; ++x) {
                const double px = static_cast<double>(x) - x0;
                const double py = static_cast<double>(y) - y0;
                double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double ex = px - t * dx, ey = py - t * dy;
                const double d = std::sqrt(ex * ex + ey * ey);
                const double cover = std::clamp(half + 0.5 - d, 0.0, 1.0);
                double& cell = v[y * w + x];
                cell = std::min(cell, 1.0 - cover);
            }
        }
    }

    void disc(double cx, double cy, double r) {
        const int64_t xa =
            static_cast<int64_t>(std::max(0.0, cx - r - 1.0));
        const int64_t xb = static_cast<int64_t>(
            std::min(static_cast<double>(w - 1), cx + r + 1.0));
        const int64_t ya =
            static_cast<int64_t>(std::max(0.0, cy - r - 1.0));
        const int64_t yb = static_cast<int64_t>(
            std::min(static_cast<double>(h - 1), cy + r + 1.0));
        for (int64_t y = ya; y <= yb; ++y) {
            for (int64_t x = xa; x <= xb; ++x) {
                const double ex = static_cast<double>(x) - cx;
                const double ey = static_cast<double>(y) - cy;
                const double d = std::sqrt(ex * ex + ey * ey);
                const double cover = std::clamp(r + 0.5 - d, 0.0, 1.0);
                double& cell = v[y * w + x];
                cell = std::min(cell, 1.0 - cover);
            }
        }
    }
};

struct GlyphPlacement {
    std::string cp;
    int64_t slot = 0;       // advance slot on the canvas
    bool is_space = false;
    std::vector<std::string> marks;
};

} // namespace

Alphabet Alphabet::standard() {
    Alphabet a;
    a.bases = {"ا", "ب", "ت", "ث", "ج", "ح",
               "د", "ر", "ز", "س", "ش", "ص",
               "ط", "ع", "ف", "ق", "ل", "م"};
    a.marks = {"َ", "ُ", "ِ", "ْ"};
    return a;
}

std::vector<std::string> Alphabet::symbols() const {
    std::vector<std::string> out = bases;
    out.insert(out.end(), marks.begin(), marks.end());
    out.push_back(" ");
    return out;
}

bool Alphabet::contains(const std::string& cp) const {
    if (cp == " ") return true;
    return std::find(bases.begin(), bases.end(), cp) != bases.end() ||
           is_mark(cp);
}

bool Alphabet::is_mark(const std::string& cp) const {
    return std::find(marks.begin(), marks.end(), cp) != marks.end();
}

std::vector<GlyphStyle> make_style_roster(int64_t count, uint64_t seed) {
    if (count < 1) {
        throw ContractError("style roster must have at least one style");
    }
    std::vector<GlyphStyle> roster;
    roster.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) {
        Rng rng(Rng::derive(seed, static_cast<uint64_t>(i) + 101));
        GlyphStyle s;
        s.style_id = i;
        s.stroke_width_px = 1.1 + 1.4 * rng.next_unit();
        s.slant = -0.2 + 0.4 * rng.next_unit();
        s.baseline_curvature = rng.next_unit();
        s.join_thickness_px = 0.9 + 0.9 * rng.next_unit();
        s.diacritic_offset_px = 1.0 + 2.5 * rng.next_unit();
        s.jitter_px = 0.15 + 0.55 * rng.next_unit();
        roster.push_back(s);
    }
    return roster;
}

GrayImage render_sample(const std::string& text, const GlyphStyle& style,
                        int64_t height, uint64_t seed,
                        const Alphabet& alphabet) {
    if (height < 16) {
        throw ContractError("render: height must be at least 16 px");
    }
    const auto& bases = base_atlas();
    const auto& marks = mark_atlas();

    std::vector<GlyphPlacement> placements;
    for (const std::string& cp : utf8_codepoints(text)) {
        if (!alphabet.contains(cp)) {
            throw ContractError("render: symbol '" + cp +
                                "' is outside the alphabet");
        }
        if (alphabet.is_mark(cp)) {
            if (placements.empty() || placements.back().is_space) {
                throw ContractError(
                    "render: combining mark without a preceding base glyph");
            }
            if (marks.find(cp) == marks.end()) {
                throw ContractError("render: no stroke recipe for mark '" +
                                    cp + "'");
            }
            placements.back().marks.push_back(cp);
            continue;
        }
        if (cp != " " && bases.find(cp) == bases.end()) {
            throw ContractError("render: no stroke recipe for '" + cp + "'");
        }
        GlyphPlacement p;
        p.cp = cp;
        p.is_space = cp == " ";
        p.slot = static_cast<int64_t>(placements.size());
        placements.push_back(std::move(p));
    }

    const double hf = static_cast<double>(height);
    const int64_t advance = height / 2;
    const int64_t width =
        std::max<int64_t>(advance,
                          advance * static_cast<int64_t>(placements.size()));
    Canvas canvas;
    canvas.h = height;
    canvas.w = width;
    canvas.v.assign(static_cast<size_t>(height * width), 1.0);

    const double body_top = kBodyTop * hf;
    const double body_h = (kBodyBottom - kBodyTop) * hf;
    const double baseline = body_top + body_h;
    const double shear = style.slant; // tan(slant) ~ slant at these angles
    const double curve_amp = style.baseline_curvature * hf * 0.05;

    // Canvas-space baseline sag: a parabola, zero at both ends.
    const auto sag = [&](double x) {
        const double u = x / static_cast<double>(width);
        return curve_amp * 4.0 * u * (1.0 - u);
    };
    // Right-to-left: slot k occupies [width-(k+1)*advance, width-k*advance).
    const auto slot_left = [&](int64_t slot) {
        return static_cast<double>(width - (slot + 1) * advance);
    };

    const auto place = [&](double gx, double gy, int64_t slot, double jx,
                           double jy, double& outx, double& outy) {
        const double y = body_top + gy * body_h + jy;
        const double x = slot_left(slot) + gx * static_cast<double>(advance) +
                         shear * (baseline - y) + jx;
        outx = x;
        outy = y + sag(x);
    };

    for (const GlyphPlacement& p : placements) {
        if (p.is_space) continue;
        Rng jitter(Rng::derive(seed, static_cast<uint64_t>(p.slot) * 2 + 10));
        const double jx = (jitter.next_unit() - 0.5) * 2.0 * style.jitter_px;
        const double jy = (jitter.next_unit() - 0.5) * 2.0 * style.jitter_px;
        const GlyphRecipe& recipe = bases.at(p.cp);
        for (const Seg& s : recipe.segs) {
            double x0, y0, x1, y1;
            place(s.x0, s.y0, p.slot, jx, jy, x0, y0);
            place(s.x1, s.y1, p.slot, jx, jy, x1, y1);
            canvas.stroke(x0, y0, x1, y1, style.stroke_width_px);
        }
        for (const Dot& d : recipe.dots) {
            double cx, cy;
            place(d.x, d.y, p.slot, jx, jy, cx, cy);
            canvas.disc(cx, cy, d.r * body_h + style.stroke_width_px * 0.25);
        }
        // Combining marks: centered over the slot, clear of the body band.
        for (size_t mi = 0; mi < p.marks.size(); ++mi) {
            Rng mark_jitter(
                Rng::derive(seed, static_cast<uint64_t>(p.slot) * 2 + 11 +
                                      mi * 977));
            const double mjx =
                (mark_jitter.next_unit() - 0.5) * 2.0 * style.jitter_px;
            const std::string& mcp = p.marks[mi];
            const bool below = mark_goes_below(mcp);
            const double mark_h = hf * 0.12;
            // Half-strength offset keeps marks on the canvas at any height.
            const double center =
                below ? kMarkBelowCenter * hf + 0.5 * style.diacritic_offset_px
                      : kMarkAboveCenter * hf - 0.5 * style.diacritic_offset_px;
            const double mx0 = slot_left(p.slot) +
                               0.22 * static_cast<double>(advance) + mjx;
            const double mw = 0.56 * static_cast<double>(advance);
            const GlyphRecipe& recipe_m = mark_atlas().at(mcp);
            for (const Seg& s : recipe_m.segs) {
                canvas.stroke(mx0 + s.x0 * mw, center + (s.y0 - 0.5) * mark_h,
                              mx0 + s.x1 * mw, center + (s.y1 - 0.5) * mark_h,
                              std::max(1.0, style.stroke_width_px * 0.7));
            }
            for (const Dot& d : recipe_m.dots) {
                canvas.disc(mx0 + d.x * mw, center + (d.y - 0.5) * mark_h,
                            d.r * mark_h);
            }
        }
    }

    // Cursive joins: one baseline stroke across each boundary between
    // consecutive base glyphs (spaces break the word).
    for (size_t i = 0; i + 1 < placements.size(); ++i) {
        if (placements[i].is_space || placements[i + 1].is_space) continue;
        const double xr = slot_left(placements[i].slot) +
                          0.2 * static_cast<double>(advance);
        const double xl = slot_left(placements[i + 1].slot) +
                          0.8 * static_cast<double>(advance);
        canvas.stroke(xl, baseline + sag(xl), xr, baseline + sag(xr),
                      style.join_thickness_px);
    }

    GrayImage img = make_image(height, width);
    for (size_t i = 0; i < canvas.v.size(); ++i) {
        const double v = std::clamp(canvas.v[i], 0.0, 1.0);
        img.pixels[i] = static_cast<uint8_t>(std::floor(v * 255.0 + 0.5));
    }
    return img;
}

namespace {

std::string sample_text(const SynthConfig& cfg, Rng& rng) {
    const int64_t len =
        cfg.min_len +
        static_cast<int64_t>(rng.next_below(
            static_cast<uint64_t>(cfg.max_len - cfg.min_len + 1)));
    std::string text;
    for (int64_t i = 0; i < len; ++i) {
        if (i > 0 && rng.next_unit() < cfg.space_prob) text += " ";
        text += cfg.alphabet.bases[rng.next_below(cfg.alphabet.bases.size())];
        if (!cfg.alphabet.marks.empty() && rng.next_unit() < cfg.mark_prob) {
            text +=
                cfg.alphabet.marks[rng.next_below(cfg.alphabet.marks.size())];
        }
    }
    return text;
}

} // namespace

std::string generate_corpus(const SynthConfig& config,
                            const std::string& out_dir) {
    if (config.count < 0) {
        throw ContractError("generate_corpus: negative sample count");
    }
    if (config.min_len < 1 || config.max_len < config.min_len) {
        throw ContractError("generate_corpus: bad text length range");
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("generate_corpus: cannot create " + out_dir + ": " +
                      ec.message());
    }
    const std::vector<GlyphStyle> roster =
        make_style_roster(config.style_count, Rng::derive(config.seed, 1));
    Rng text_rng(Rng::derive(config.seed, 2));
    std::vector<SampleManifest> samples;
    for (int64_t i = 0; i < config.count; ++i) {
        const std::string text = sample_text(config, text_rng);
        const GlyphStyle& style =
            roster[static_cast<size_t>(i) % roster.size()];
        const GrayImage img =
            render_sample(text, style, config.height,
                          Rng::derive(config.seed, 1000 + i), config.alphabet);
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%05lld.pgm",
                      static_cast<long long>(i));
        write_pgm((fs::path(out_dir) / name).string(), img);
        SampleManifest s;
        s.image = name;
        s.text = text;
        s.dataset = config.dataset;
        s.cluster = config.cluster;
        samples.push_back(std::move(s));
    }
    const std::string manifest_path =
        (fs::path(out_dir) / "manifest.jsonl").string();
    save_manifest(manifest_path, samples);
    Tokenizer(config.alphabet.symbols())
        .save((fs::path(out_dir) / "vocab.txt").string());
    return manifest_path;
}

std::vector<SampleManifest> augment_line(const SampleManifest& sample,
                                         const std::vector<GlyphStyle>& roster,
                                         int64_t k, uint64_t seed,
                                         const std::string& out_dir,
                                         int64_t height) {
    if (k < 0 || k > static_cast<int64_t>(roster.size())) {
        throw ContractError("augment_line: k=" + std::to_string(k) +
                            " exceeds roster size " +
                            std::to_string(roster.size()));
    }
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        throw IoError("augment_line: cannot create " + out_dir + ": " +
                      ec.message());
    }
    Rng rng(seed);
    const std::vector<int64_t> picks =
        rng.sample_without_replacement(static_cast<int64_t>(roster.size()), k);
    const std::string stem = fs::path(sample.image).stem().string();
    std::vector<SampleManifest> out;
    for (int64_t i = 0; i < k; ++i) {
        const GlyphStyle& style = roster[static_cast<size_t>(picks[i])];
        const GrayImage img = render_sample(
            sample.text, style, height, Rng::derive(seed, 7000 + i));
        std::ostringstream name;
        name << stem << "_aug" << i << ".pgm";
        write_pgm((fs::path(out_dir) / name.str()).string(), img);
        SampleManifest s;
        s.image = name.str();
        s.resolved_path = (fs::path(out_dir) / name.str()).string();
        s.text = sample.text;
        s.dataset = sample.dataset;
        s.cluster = sample.cluster;
        s.split = sample.split;
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace vedocr
