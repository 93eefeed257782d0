#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "bertkit/common.hpp"

namespace bertkit::train {

// Optimizer and schedule settings. The defaults are the published recipe
// (lr 1e-5, 10000 warmup steps, beta2 0.98, eps 1e-5, weight decay 0.2,
// gradient norm cap 0.1); batch_size and total_steps are scaled per run.
struct TrainConfig {
    double base_lr = 1e-5;
    int64_t warmup_steps = 10000;
    int64_t total_steps = 0;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-5;
    double weight_decay = 0.2;
    double clip_norm = 0.1;
    int64_t batch_size = 16;
    uint64_t seed = 0;
    int64_t validation_every = 100;
    int64_t patience = 3;

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw ConfigError(std::string("train config: ") + what);
        };
        require(base_lr > 0.0, "base_lr must be > 0");
        require(warmup_steps > 0, "warmup_steps must be > 0");
        require(total_steps >= warmup_steps, "total_steps must be >= warmup_steps");
        require(beta1 >= 0.0 && beta1 < 1.0, "beta1 must be in [0, 1)");
        require(beta2 >= 0.0 && beta2 < 1.0, "beta2 must be in [0, 1)");
        require(eps > 0.0, "eps must be > 0");
        require(weight_decay >= 0.0, "weight_decay must be >= 0");
        require(clip_norm > 0.0, "clip_norm must be > 0");
        require(batch_size >= 1, "batch_size must be >= 1");
        require(validation_every >= 1, "validation_every must be >= 1");
        require(patience >= 1, "patience must be >= 1");
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.base_lr = j.value("base_lr", c.base_lr);
        c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
        c.total_steps = j.value("total_steps", c.total_steps);
        c.beta1 = j.value("beta1", c.beta1);
        c.beta2 = j.value("beta2", c.beta2);
        c.eps = j.value("eps", c.eps);
        c.weight_decay = j.value("weight_decay", c.weight_decay);
        c.clip_norm = j.value("clip_norm", c.clip_norm);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.seed = j.value("seed", c.seed);
        c.validation_every = j.value("validation_every", c.validation_every);
        c.patience = j.value("patience", c.patience);
        return c;
    }

    nlohmann::json to_json() const {
        return {{"base_lr", base_lr},
                {"warmup_steps", warmup_steps},
                {"total_steps", total_steps},
                {"beta1", beta1},
                {"beta2", beta2},
                {"eps", eps},
                {"weight_decay", weight_decay},
                {"clip_norm", clip_norm},
                {"batch_size", batch_size},
                {"seed", seed},
                {"validation_every", validation_every},
                {"patience", patience}};
    }
};

// Linear warmup to base_lr over warmup_steps, then linear decay to exactly 0
// at total_steps. Continuous at the warmup boundary. A degenerate config
// with warmup == total decays instantly to 0.
inline double lr_at(int64_t step, const TrainConfig& cfg) {
    if (step < 0 || step > cfg.total_steps) {
        throw ConfigError("lr_at: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(cfg.total_steps) + "]");
    }
    if (step < cfg.warmup_steps) {
        return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
    }
    const int64_t denom = cfg.total_steps - cfg.warmup_steps;
    if (denom == 0) return 0.0;
    return cfg.base_lr * static_cast<double>(cfg.total_steps - step) / static_cast<double>(denom);
}

}  // namespace bertkit::train
