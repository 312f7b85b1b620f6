// SPDX-License-Identifier: Apache-2.0
#include "vedocr/optim.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vedocr/error.hpp"

namespace vedocr {

void HyperParams::validate() const {
    if (lr < 0.0 || eps <= 0.0) {
        throw ContractError("hyperparams: rates must be positive");
    }
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) {
        throw ContractError("hyperparams: betas must lie in (0,1)");
    }
    if (train_batch < 1 || eval_batch < 1 || grad_accum_steps < 1 ||
        epochs < 1) {
        throw ContractError("hyperparams: batch/epoch counts must be >= 1");
    }
    if (schedule != "cosine" && schedule != "constant") {
        throw ContractError("hyperparams: schedule must be cosine|constant");
    }
}

HyperParams HyperParams::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("hyperparams: cannot open " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("hyperparams " + path + ": " + e.what());
    }
    HyperParams hp;
    hp.lr = j.value("lr", hp.lr);
    hp.beta1 = j.value("beta1", hp.beta1);
    hp.beta2 = j.value("beta2", hp.beta2);
    hp.eps = j.value("eps", hp.eps);
    hp.train_batch = j.value("train_batch", hp.train_batch);
    hp.eval_batch = j.value("eval_batch", hp.eval_batch);
    hp.grad_accum_steps = j.value("grad_accum_steps", hp.grad_accum_steps);
    hp.epochs = j.value("epochs", hp.epochs);
    hp.seed = j.value("seed", hp.seed);
    hp.schedule = j.value("schedule", hp.schedule);
    if (j.contains("effective_batch")) {
        const int64_t eff = j["effective_batch"].get<int64_t>();
        if (eff != hp.effective_batch()) {
            throw ContractError(
                "hyperparams: effective_batch " + std::to_string(eff) +
                " != train_batch * grad_accum_steps = " +
                std::to_string(hp.effective_batch()));
        }
    }
    hp.validate();
    return hp;
}

AdamState AdamState::for_params(std::span<const Tensor> params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor& p : params) {
        s.m.emplace_back(static_cast<size_t>(p.numel()), 0.0);
        s.v.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    }
    return s;
}

void adam_step(std::span<Tensor> params,
               std::span<const std::vector<double>> grads, AdamState& state,
               const HyperParams& hp, double lr_t) {
    if (lr_t < 0.0) {
        throw ContractError("adam_step: negative learning rate");
    }
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw ContractError("adam_step: params/grads/state size mismatch");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
    for (size_t pi = 0; pi < params.size(); ++pi) {
        auto pd = params[pi].data();
        const std::vector<double>& g = grads[pi];
        if (g.size() != pd.size()) {
            throw ContractError(
                "adam_step: gradient shape mismatch for parameter " +
                std::to_string(pi) + " (" + std::to_string(g.size()) +
                " vs " + std::to_string(pd.size()) + ")");
        }
        std::vector<double>& m = state.m[pi];
        std::vector<double>& v = state.v[pi];
        for (size_t i = 0; i < pd.size(); ++i) {
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            pd[i] -= lr_t * m_hat / (std::sqrt(v_hat) + hp.eps);
        }
    }
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr) {
    if (total_steps < 1) {
        throw ContractError("cosine_lr: total_steps must be >= 1");
    }
    if (step < 0 || step > total_steps) {
        throw ContractError("cosine_lr: step " + std::to_string(step) +
                            " outside [0," + std::to_string(total_steps) +
                            "]");
    }
    const double phase = 3.141592653589793 * static_cast<double>(step) /
                         static_cast<double>(total_steps);
    return base_lr * (1.0 + std::cos(phase)) / 2.0;
}

} // namespace vedocr
