#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "bertkit/common.hpp"

namespace bertkit::nn {

struct ModelConfig {
    int64_t num_layers = 4;
    int64_t hidden_size = 128;
    int64_t num_heads = 4;
    int64_t ff_size = 512;
    int64_t vocab_size = 0;
    int64_t max_positions = 256;
    int64_t num_segments = 2;
    double dropout_prob = 0.1;
    double layer_norm_eps = 1e-12;

    void validate() const {
        auto require = [](bool ok, const char* what) {
            if (!ok) throw ConfigError(std::string("model config: ") + what);
        };
        require(num_layers >= 1, "num_layers must be >= 1");
        require(hidden_size >= 1, "hidden_size must be >= 1");
        require(num_heads >= 1, "num_heads must be >= 1");
        require(hidden_size % num_heads == 0, "hidden_size must be divisible by num_heads");
        require(ff_size >= 1, "ff_size must be >= 1");
        require(vocab_size >= 1, "vocab_size must be >= 1");
        require(max_positions >= 1, "max_positions must be >= 1");
        require(num_segments >= 1, "num_segments must be >= 1");
        require(dropout_prob >= 0.0 && dropout_prob < 1.0, "dropout_prob must be in [0, 1)");
        require(layer_norm_eps > 0.0, "layer_norm_eps must be > 0");
    }

    int64_t head_dim() const { return hidden_size / num_heads; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.num_layers = j.value("num_layers", c.num_layers);
        c.hidden_size = j.value("hidden_size", c.hidden_size);
        c.num_heads = j.value("num_heads", c.num_heads);
        c.ff_size = j.value("ff_size", c.ff_size);
        c.vocab_size = j.value("vocab_size", c.vocab_size);
        c.max_positions = j.value("max_positions", c.max_positions);
        c.num_segments = j.value("num_segments", c.num_segments);
        c.dropout_prob = j.value("dropout_prob", c.dropout_prob);
        c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
        return c;
    }

    nlohmann::json to_json() const {
        return {{"num_layers", num_layers},       {"hidden_size", hidden_size},
                {"num_heads", num_heads},         {"ff_size", ff_size},
                {"vocab_size", vocab_size},       {"max_positions", max_positions},
                {"num_segments", num_segments},   {"dropout_prob", dropout_prob},
                {"layer_norm_eps", layer_norm_eps}};
    }
};

enum class ParamKind { weight, bias, gain };

struct ParamInfo {
    std::string name;
    int64_t rows = 0;
    int64_t cols = 0;
    int rank = 2;  // 1 for biases/gains (stored as [cols])
    ParamKind kind = ParamKind::weight;
};

// Enumerates the canonical parameter set in a fixed order: embeddings,
// layers 0..L-1, pooler, MLM head. Every consumer of the naming scheme
// (init, checkpoint io, truncation, optimization, counting) goes through
// this single schema. The MLM output projection is tied to the word
// embedding and contributes only its bias here.
template <typename F>
void for_each_parameter(const ModelConfig& c, F&& f) {
    const int64_t h = c.hidden_size;
    auto weight = [&](const std::string& name, int64_t r, int64_t cc) {
        f(ParamInfo{name, r, cc, 2, ParamKind::weight});
    };
    auto bias = [&](const std::string& name, int64_t n) {
        f(ParamInfo{name, 1, n, 1, ParamKind::bias});
    };
    auto gain = [&](const std::string& name, int64_t n) {
        f(ParamInfo{name, 1, n, 1, ParamKind::gain});
    };

    weight("embeddings.word.weight", c.vocab_size, h);
    weight("embeddings.position.weight", c.max_positions, h);
    weight("embeddings.segment.weight", c.num_segments, h);
    gain("embeddings.norm.gain", h);
    bias("embeddings.norm.bias", h);
    for (int64_t i = 0; i < c.num_layers; ++i) {
        const std::string p = "layer." + std::to_string(i) + ".";
        weight(p + "attention.query.weight", h, h);
        bias(p + "attention.query.bias", h);
        weight(p + "attention.key.weight", h, h);
        bias(p + "attention.key.bias", h);
        weight(p + "attention.value.weight", h, h);
        bias(p + "attention.value.bias", h);
        weight(p + "attention.output.weight", h, h);
        bias(p + "attention.output.bias", h);
        gain(p + "attention.norm.gain", h);
        bias(p + "attention.norm.bias", h);
        weight(p + "ffn.inner.weight", h, c.ff_size);
        bias(p + "ffn.inner.bias", c.ff_size);
        weight(p + "ffn.output.weight", c.ff_size, h);
        bias(p + "ffn.output.bias", h);
        gain(p + "ffn.norm.gain", h);
        bias(p + "ffn.norm.bias", h);
    }
    weight("pooler.weight", h, h);
    bias("pooler.bias", h);
    weight("mlm.transform.weight", h, h);
    bias("mlm.transform.bias", h);
    gain("mlm.norm.gain", h);
    bias("mlm.norm.bias", h);
    bias("mlm.output.bias", c.vocab_size);
}

inline int64_t parameter_count(const ModelConfig& c) {
    int64_t total = 0;
    for_each_parameter(c, [&](const ParamInfo& p) { total += p.rows * p.cols; });
    return total;
}

}  // namespace bertkit::nn
