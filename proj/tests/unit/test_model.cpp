// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "vedocr/trainer.hpp"

using namespace vedocr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("vedocr_model_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ModelConfig tiny_config(ModelVariant v) {
    ModelConfig c;
    c.variant = v;
    c.height = 32;
    c.width = 64;
    c.patch = v == ModelVariant::Windowed ? 8 : 16;
    c.dim = 16;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.heads = 2;
    c.window = 2;
    c.merge_stages = 1;
    c.lmax = 24;
    c.ffn_hidden = 32;
    return c;
}

Tokenizer tiny_tokenizer() {
    return Tokenizer(Alphabet::standard().symbols());
}

} // namespace

TEST_SUITE("model_io") {

TEST_CASE("model config validation") {
    ModelConfig bad = tiny_config(ModelVariant::Global);
    bad.patch = 13;
    CHECK_THROWS_AS(bad.validate(), ContractError);

    ModelConfig heads = tiny_config(ModelVariant::Global);
    heads.heads = 3;
    CHECK_THROWS_AS(heads.validate(), ContractError);

    ModelConfig win = tiny_config(ModelVariant::Windowed);
    win.window = 3; // does not divide the 4x8 grid
    CHECK_THROWS_AS(win.validate(), ContractError);

    const ModelConfig ok = tiny_config(ModelVariant::Windowed);
    CHECK_NOTHROW(ok.validate());
    const ModelConfig round =
        ModelConfig::from_json_string(ok.to_json_string());
    CHECK(round.variant == ModelVariant::Windowed);
    CHECK(round.patch == ok.patch);
}

TEST_CASE("parameter names are unique and prefixed by module") {
    for (ModelVariant v : {ModelVariant::Global, ModelVariant::Windowed,
                           ModelVariant::Ctc}) {
        auto model = build_model(tiny_config(v), tiny_tokenizer(), 3);
        std::set<std::string> names;
        for (const NamedParam& p : model->parameters()) {
            CHECK(names.insert(p.name).second);
        }
        CHECK_FALSE(names.empty());
    }
}

TEST_CASE("checkpoint roundtrip preserves config, vocab and weights") {
    TempDir dir("ckpt");
    auto model = build_model(tiny_config(ModelVariant::Global),
                             tiny_tokenizer(), 11);
    const fs::path path = dir.path / "m.ckpt";
    save_model(path.string(), *model);

    // Magic bytes.
    {
        std::ifstream in(path, std::ios::binary);
        char magic[4];
        in.read(magic, 4);
        CHECK(std::string(magic, 4) == "QVED");
    }

    const Checkpoint ckpt = load_checkpoint(path.string());
    CHECK(ckpt.config.variant == ModelVariant::Global);
    CHECK(ckpt.vocab == tiny_tokenizer().symbols());
    CHECK(ckpt.tensors.size() == model->parameters().size());

    auto reloaded = model_from_checkpoint(ckpt);
    // float32 storage: reloaded weights equal the f32-rounded originals.
    for (size_t i = 0; i < reloaded->parameters().size(); ++i) {
        const auto orig = model->parameters()[i].tensor.data();
        const auto back = reloaded->parameters()[i].tensor.data();
        for (size_t k = 0; k < orig.size(); ++k) {
            CHECK(back[k] ==
                  static_cast<double>(static_cast<float>(orig[k])));
        }
    }

    // Same image, same outputs after a save/load/save cycle.
    const GrayImage img =
        render_sample("ا", make_style_roster(1, 5)[0], 32, 3);
    auto from_disk = model_from_checkpoint(load_checkpoint(path.string()));
    CHECK(from_disk->recognize(img) == reloaded->recognize(img));
}

TEST_CASE("checkpoint shape validation rejects mismatched models") {
    TempDir dir("ckpt_bad");
    auto model = build_model(tiny_config(ModelVariant::Global),
                             tiny_tokenizer(), 11);
    const fs::path path = dir.path / "m.ckpt";
    save_model(path.string(), *model);
    Checkpoint ckpt = load_checkpoint(path.string());
    ckpt.config.dim = 32; // now every projection disagrees
    CHECK_THROWS_AS(model_from_checkpoint(ckpt), ValidationError);
}

TEST_CASE("warm start randomizes exactly the cross-attention tensors") {
    TempDir dir("warm");
    auto model = build_model(tiny_config(ModelVariant::Global),
                             tiny_tokenizer(), 19);
    const fs::path path = dir.path / "m.ckpt";
    save_model(path.string(), *model);
    const Checkpoint ckpt = load_checkpoint(path.string());

    auto warm = model_from_checkpoint(ckpt, /*randomize_cross=*/true, 4242);
    auto cold = model_from_checkpoint(ckpt, /*randomize_cross=*/false);
    REQUIRE(warm->parameters().size() == cold->parameters().size());
    bool saw_cross = false;
    for (size_t i = 0; i < warm->parameters().size(); ++i) {
        const NamedParam& w = warm->parameters()[i];
        const NamedParam& c = cold->parameters()[i];
        const bool is_cross = w.name.find(".cross.") != std::string::npos;
        const bool is_cross_weight =
            is_cross && w.name.find(".cross.w") != std::string::npos;
        double delta = 0.0;
        for (size_t k = 0; k < w.tensor.data().size(); ++k)
            delta += std::abs(w.tensor.data()[k] - c.tensor.data()[k]);
        if (is_cross_weight) {
            CHECK(delta > 0.0);
            saw_cross = true;
        } else if (!is_cross) {
            CHECK(delta == 0.0);
        }
    }
    CHECK(saw_cross);

    // Deterministic: same seed, same redraw.
    auto warm2 = model_from_checkpoint(ckpt, true, 4242);
    for (size_t i = 0; i < warm->parameters().size(); ++i) {
        const auto a = warm->parameters()[i].tensor.data();
        const auto b = warm2->parameters()[i].tensor.data();
        for (size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
    }

    // The CTC variant has no cross-attention to randomize.
    auto ctc = build_model(tiny_config(ModelVariant::Ctc), tiny_tokenizer(),
                           1);
    const fs::path cpath = dir.path / "c.ckpt";
    save_model(cpath.string(), *ctc);
    CHECK_THROWS_AS(
        model_from_checkpoint(load_checkpoint(cpath.string()), true),
        ContractError);
}

TEST_CASE("recognize runs for every variant") {
    const GrayImage img =
        render_sample("با", make_style_roster(1, 5)[0], 32, 3);
    for (ModelVariant v : {ModelVariant::Global, ModelVariant::Windowed,
                           ModelVariant::Ctc}) {
        auto model = build_model(tiny_config(v), tiny_tokenizer(), 23);
        const std::string a = model->recognize(img);
        const std::string b = model->recognize(img);
        CHECK(a == b);
    }
}

TEST_CASE("full tiny VED training loss passes the gradient oracle") {
    auto model = build_model(tiny_config(ModelVariant::Global),
                             tiny_tokenizer(), 29);
    const TrainSample sample{
        render_sample("اب", make_style_roster(1, 7)[0], 32, 5),
        "اب"};
    // Manual central differences against the tape gradient, probing an
    // evenly spaced subset of coordinates per parameter.
    for (const char* name :
         {"enc.patch.w", "dec.block0.cross.wv", "dec.out.w", "enc.pos"}) {
        NamedParam* target = nullptr;
        for (NamedParam& p : model->parameters()) {
            if (p.name == name) target = &p;
        }
        REQUIRE(target != nullptr);
        for (NamedParam& p : model->parameters()) p.tensor.zero_grad();
        std::vector<double> analytic;
        {
            Tape tape;
            const Tensor loss = model->training_loss(sample);
            tape.backward(loss);
            analytic.assign(target->tensor.grad().begin(),
                            target->tensor.grad().end());
        }
        const double h = 1e-5;
        auto data = target->tensor.data();
        const int64_t n = target->tensor.numel();
        const int64_t stride = std::max<int64_t>(1, n / 24);
        double worst = 0.0;
        for (int64_t i = 0; i < n; i += stride) {
            const double keep = data[i];
            data[i] = keep + h;
            const double up = model->training_loss(sample).item();
            data[i] = keep - h;
            const double down = model->training_loss(sample).item();
            data[i] = keep;
            const double numeric = (up - down) / (2.0 * h);
            const double a = analytic[static_cast<size_t>(i)];
            worst = std::max(worst,
                             std::abs(a - numeric) /
                                 std::max({1.0, std::abs(a),
                                           std::abs(numeric)}));
        }
        CHECK(worst < 1e-4);
    }
}

} // TEST_SUITE
