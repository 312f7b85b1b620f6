// SPDX-License-Identifier: Apache-2.0
#include "vedocr/model.hpp"

#include <algorithm>

#include "vedocr/ctc.hpp"
#include "vedocr/encoder.hpp"

namespace vedocr {

Recognizer::Recognizer(ModelConfig config, Tokenizer tokenizer)
    : config_(std::move(config)), tokenizer_(std::move(tokenizer)) {}

Tensor Recognizer::preprocess_sample(const GrayImage& image) const {
    return preprocess(image, config_.height, config_.width, config_.patch);
}

namespace {

ImageSpec spec_of(const ModelConfig& c) {
    ImageSpec s;
    s.height = c.height;
    s.width = c.width;
    s.patch = c.patch;
    s.dim = c.dim;
    return s;
}

class ParamRegistrar {
public:
    explicit ParamRegistrar(std::vector<NamedParam>& params)
        : params_(params) {}

    void add(const std::string& name, const Tensor& t) {
        for (const NamedParam& p : params_) {
            if (p.name == name) {
                throw ContractError("model: duplicate parameter name " + name);
            }
        }
        params_.push_back({name, t});
    }

    void add_ln(const std::string& prefix, const LayerNormParams& p) {
        add(prefix + ".g", p.gain);
        add(prefix + ".b", p.bias);
    }

    void add_attn(const std::string& prefix, const AttentionParams& p) {
        add(prefix + ".wq", p.wq);
        add(prefix + ".bq", p.bq);
        add(prefix + ".wk", p.wk);
        add(prefix + ".bk", p.bk);
        add(prefix + ".wv", p.wv);
        add(prefix + ".bv", p.bv);
        add(prefix + ".wo", p.wo);
        add(prefix + ".bo", p.bo);
    }

    void add_ffn(const std::string& prefix, const FeedForwardParams& p) {
        add(prefix + ".w1", p.w1);
        add(prefix + ".b1", p.b1);
        add(prefix + ".w2", p.w2);
        add(prefix + ".b2", p.b2);
    }

    void add_enc_block(const std::string& prefix,
                       const EncoderBlockParams& b) {
        add_ln(prefix + ".ln1", b.ln1);
        add_attn(prefix + ".attn", b.attn);
        add_ln(prefix + ".ln2", b.ln2);
        add_ffn(prefix + ".ffn", b.ffn);
        if (b.rel_bias.defined()) add(prefix + ".rel_bias", b.rel_bias);
    }

    void add_decoder(const DecoderParams& d) {
        add("dec.embed", d.embedding);
        add("dec.pos", d.pos);
        for (size_t i = 0; i < d.blocks.size(); ++i) {
            const std::string prefix = "dec.block" + std::to_string(i);
            add_ln(prefix + ".ln1", d.blocks[i].ln1);
            add_attn(prefix + ".self", d.blocks[i].self_attn);
            add_ln(prefix + ".ln2", d.blocks[i].ln2);
            add_attn(prefix + ".cross", d.blocks[i].cross_attn);
            add_ln(prefix + ".ln3", d.blocks[i].ln3);
            add_ffn(prefix + ".ffn", d.blocks[i].ffn);
        }
        add_ln("dec.final_ln", d.final_ln);
        add("dec.out.w", d.out_w);
        add("dec.out.b", d.out_b);
    }

private:
    std::vector<NamedParam>& params_;
};

std::vector<int64_t> text_to_ctc_labels(const Tokenizer& tok,
                                        const std::string& text) {
    std::vector<int64_t> labels;
    for (int64_t id : tok.tokenize(text)) {
        if (id == Tokenizer::kBos || id == Tokenizer::kEos) continue;
        if (tok.is_special(id)) {
            throw ValidationError(
                "ctc: text contains a symbol outside the vocabulary: '" +
                text + "'");
        }
        labels.push_back(id - Tokenizer::kNumSpecial);
    }
    return labels;
}

class VedModel final : public Recognizer {
public:
    VedModel(const ModelConfig& config, Tokenizer tokenizer, uint64_t seed)
        : Recognizer(config, std::move(tokenizer)) {
        Rng rng(seed);
        const ImageSpec spec = spec_of(config_);
        const int64_t ffn = config_.resolved_ffn_hidden();
        int64_t enc_out_dim = config_.dim;
        if (config_.variant == ModelVariant::Global) {
            global_ = init_global_encoder(rng, spec, config_.enc_layers,
                                          config_.heads, ffn);
        } else {
            windowed_ = init_windowed_encoder(
                rng, spec, config_.enc_layers, config_.merge_stages,
                config_.heads, ffn, config_.window, config_.resolved_shift());
            enc_out_dim = config_.dim << config_.merge_stages;
        }
        decoder_ = init_decoder(rng, tokenizer_.vocab_size(), config_.dim,
                                enc_out_dim, config_.dec_layers, config_.heads,
                                ffn, config_.lmax);
        ParamRegistrar reg(params_);
        if (config_.variant == ModelVariant::Global) {
            reg.add("enc.patch.w", global_.patch_w);
            reg.add("enc.patch.b", global_.patch_b);
            reg.add("enc.cls", global_.cls);
            reg.add("enc.pos", global_.pos);
            for (size_t i = 0; i < global_.blocks.size(); ++i) {
                reg.add_enc_block("enc.block" + std::to_string(i),
                                  global_.blocks[i]);
            }
            reg.add_ln("enc.final_ln", global_.final_ln);
            reg.add("enc.mim.mask_token", global_.mim.mask_token);
            reg.add("enc.mim.head.w", global_.mim.head_w);
            reg.add("enc.mim.head.b", global_.mim.head_b);
        } else {
            reg.add("enc.patch.w", windowed_.patch_w);
            reg.add("enc.patch.b", windowed_.patch_b);
            for (size_t s = 0; s < windowed_.stages.size(); ++s) {
                const std::string sp = "enc.stage" + std::to_string(s);
                for (size_t b = 0; b < windowed_.stages[s].blocks.size();
                     ++b) {
                    reg.add_enc_block(sp + ".block" + std::to_string(b),
                                      windowed_.stages[s].blocks[b]);
                }
                if (windowed_.stages[s].merge_w.defined()) {
                    reg.add(sp + ".merge.w", windowed_.stages[s].merge_w);
                    reg.add(sp + ".merge.b", windowed_.stages[s].merge_b);
                }
            }
            reg.add_ln("enc.final_ln", windowed_.final_ln);
            reg.add("enc.mim.mask_token", windowed_.mim.mask_token);
            reg.add("enc.mim.head.w", windowed_.mim.head_w);
            reg.add("enc.mim.head.b", windowed_.mim.head_b);
        }
        reg.add_decoder(decoder_);
    }

    EncoderOutput encode(const Tensor& image) const {
        const ImageSpec spec = spec_of(config_);
        return config_.variant == ModelVariant::Global
                   ? encode_global(image, global_, spec)
                   : encode_windowed(image, windowed_, spec);
    }

    Tensor training_loss(const TrainSample& sample) override {
        const Tensor image = preprocess_sample(sample.image);
        const std::vector<int64_t> ids = tokenizer_.tokenize(sample.text);
        return teacher_forced_loss(ids, encode(image), decoder_);
    }

    Tensor pretrain_loss(const TrainSample& sample,
                         PretrainObjective objective, double rate,
                         uint64_t seed) override {
        if (objective == PretrainObjective::Mim) {
            const Tensor image = preprocess_sample(sample.image);
            const ImageSpec spec = spec_of(config_);
            return config_.variant == ModelVariant::Global
                       ? mim_pretrain_step(image, global_, spec, rate, seed)
                       : mim_pretrain_step(image, windowed_, spec, rate, seed);
        }
        const std::vector<int64_t> ids = tokenizer_.tokenize(sample.text);
        return mlm_pretrain_step(ids, decoder_, rate, seed);
    }

    std::string recognize(const GrayImage& image) const override {
        const EncoderOutput enc = encode(preprocess_sample(image));
        const std::vector<int64_t> ids =
            greedy_generate(enc, decoder_, decoder_.lmax - 1);
        return tokenizer_.decode(ids);
    }

    DecoderParams& decoder() { return decoder_; }

private:
    GlobalEncoderParams global_;
    WindowedEncoderParams windowed_;
    DecoderParams decoder_;
};

class CtcModel final : public Recognizer {
public:
    CtcModel(const ModelConfig& config, Tokenizer tokenizer, uint64_t seed)
        : Recognizer(config, std::move(tokenizer)) {
        Rng rng(seed);
        const int64_t label_count =
            tokenizer_.vocab_size() - Tokenizer::kNumSpecial;
        // dim controls capacity: the widest conv stage has dim/2 channels.
        const int64_t base = std::max<int64_t>(2, config_.dim / 8);
        ctc_ = init_ctc_params(rng, config_.height, label_count + 1, base);
        ParamRegistrar reg(params_);
        for (size_t i = 0; i < ctc_.convs.size(); ++i) {
            reg.add("ctc.conv" + std::to_string(i) + ".k",
                    ctc_.convs[i].kernels);
            reg.add("ctc.conv" + std::to_string(i) + ".b", ctc_.convs[i].bias);
        }
        reg.add("ctc.out.w", ctc_.out_w);
        reg.add("ctc.out.b", ctc_.out_b);
    }

    Tensor training_loss(const TrainSample& sample) override {
        const Tensor image = preprocess_sample(sample.image);
        const Tensor logits = frame_features(image, ctc_);
        return ctc_loss(logits, text_to_ctc_labels(tokenizer_, sample.text));
    }

    Tensor pretrain_loss(const TrainSample&, PretrainObjective, double,
                         uint64_t) override {
        throw ContractError(
            "ctc variant has no self-supervised pretraining objective");
    }

    std::string recognize(const GrayImage& image) const override {
        const Tensor logits = frame_features(preprocess_sample(image), ctc_);
        std::string text;
        for (int64_t label : ctc_greedy_decode(logits)) {
            text += tokenizer_.symbol(label + Tokenizer::kNumSpecial);
        }
        return text;
    }

    const CtcParams& ctc() const { return ctc_; }

private:
    CtcParams ctc_;
};

} // namespace

std::unique_ptr<Recognizer> build_model(const ModelConfig& config,
                                        Tokenizer tokenizer, uint64_t seed) {
    config.validate();
    if (config.variant == ModelVariant::Ctc) {
        return std::make_unique<CtcModel>(config, std::move(tokenizer), seed);
    }
    return std::make_unique<VedModel>(config, std::move(tokenizer), seed);
}

std::unique_ptr<Recognizer> model_from_checkpoint(const Checkpoint& ckpt,
                                                  bool randomize_cross,
                                                  uint64_t seed) {
    if (ckpt.vocab.empty()) {
        throw ValidationError("checkpoint carries no vocabulary");
    }
    std::unique_ptr<Recognizer> model =
        build_model(ckpt.config, Tokenizer(ckpt.vocab), seed);
    std::vector<std::string> skip;
    if (randomize_cross) {
        for (const NamedParam& p : model->parameters()) {
            if (p.name.find(".cross.") != std::string::npos) {
                skip.push_back(p.name);
            }
        }
        if (skip.empty()) {
            throw ContractError(
                "cannot randomize cross-attention of a model without it");
        }
    }
    apply_checkpoint(ckpt, model->parameters(), skip);
    if (randomize_cross) {
        Rng rng(Rng::derive(seed, 0xC505));
        auto* ved = dynamic_cast<VedModel*>(model.get());
        randomize_cross_attention(ved->decoder(), rng);
    }
    return model;
}

void save_model(const std::string& path, const Recognizer& model) {
    save_checkpoint(path, model.config(), model.tokenizer().symbols(),
                    model.parameters());
}

} // namespace vedocr
