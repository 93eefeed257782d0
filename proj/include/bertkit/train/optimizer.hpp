#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "bertkit/common.hpp"
#include "bertkit/nn/encoder.hpp"
#include "bertkit/train/schedule.hpp"

namespace bertkit::train {

// Layer-norm gains and all biases are excluded from weight decay.
inline bool no_weight_decay(const std::string& name) {
    if (name.find(".norm.") != std::string::npos) return true;
    return name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
}

// Scales all gradients so the global L2 norm does not exceed clip_norm.
// Returns the pre-clip norm.
template <typename S>
double clip_gradients(nn::NamedTensors<S>& grads, double clip_norm) {
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be > 0");
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
        sq += static_cast<double>(g.template cast<double>().squaredNorm());
    }
    const double norm = std::sqrt(sq);
    if (std::isnan(norm)) throw NumericError("NaN in gradients during clipping");
    if (norm > clip_norm) {
        const S scale = static_cast<S>(clip_norm / norm);
        for (auto& [name, g] : grads) g *= scale;
    }
    return norm;
}

template <typename S>
struct AdamWState {
    nn::NamedTensors<S> m;
    nn::NamedTensors<S> v;

    static AdamWState zeros_like(const nn::NamedTensors<S>& params) {
        AdamWState state;
        for (const auto& [name, p] : params) {
            state.m.emplace(name, nn::Mat<S>::Zero(p.rows(), p.cols()));
            state.v.emplace(name, nn::Mat<S>::Zero(p.rows(), p.cols()));
        }
        return state;
    }
};

// One decoupled-weight-decay Adam step. `step` is 1-based and drives the
// bias correction; `lr` is the scheduled learning rate for this step.
template <typename S>
void adamw_step(nn::NamedTensors<S>& params, const nn::NamedTensors<S>& grads,
                AdamWState<S>& state, int64_t step, double lr, const TrainConfig& cfg) {
    if (step < 1) throw ConfigError("adamw_step: step must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ConfigError("adamw_step: missing gradient for " + name);
        const nn::Mat<S>& g = git->second;
        if (g.hasNaN()) {
            throw NumericError("NaN gradient in " + name + " at step " + std::to_string(step));
        }
        if (cfg.weight_decay > 0.0 && !no_weight_decay(name)) {
            p *= static_cast<S>(1.0 - lr * cfg.weight_decay);
        }
        nn::Mat<S>& m = state.m.at(name);
        nn::Mat<S>& v = state.v.at(name);
        m = static_cast<S>(cfg.beta1) * m + static_cast<S>(1.0 - cfg.beta1) * g;
        v = static_cast<S>(cfg.beta2) * v + static_cast<S>(1.0 - cfg.beta2) * g.cwiseProduct(g);
        p.array() -= static_cast<S>(lr) * (m.array() / static_cast<S>(bc1)) /
                     ((v.array() / static_cast<S>(bc2)).sqrt() + static_cast<S>(cfg.eps));
    }
}

}  // namespace bertkit::train
