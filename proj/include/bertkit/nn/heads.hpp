#pragma once

#include <cstdint>
#include <string>

#include "bertkit/common.hpp"
#include "bertkit/nn/encoder.hpp"
#include "bertkit/rng.hpp"

namespace bertkit::nn {

enum class HeadKind { single_class, pair_class, multi_label, regression };

inline const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::single_class: return "single_class";
        case HeadKind::pair_class: return "pair_class";
        case HeadKind::multi_label: return "multi_label";
        case HeadKind::regression: return "regression";
    }
    return "?";
}

inline HeadKind parse_head_kind(const std::string& s) {
    if (s == "single_class") return HeadKind::single_class;
    if (s == "pair_class") return HeadKind::pair_class;
    if (s == "multi_label") return HeadKind::multi_label;
    if (s == "regression") return HeadKind::regression;
    throw ConfigError("unknown head kind: " + s);
}

// Classification/regression head over the pooled [CLS] vector. The pooler
// weights start from the encoder checkpoint and train along with it; they
// are carried here so a trained head is self-contained.
template <typename S>
struct TaskHead {
    HeadKind kind = HeadKind::single_class;
    int64_t num_labels = 2;
    Mat<S> pooler_weight;  // H x H (snapshot of the fine-tuned pooler)
    Mat<S> pooler_bias;    // 1 x H
    Mat<S> output_weight;  // H x K
    Mat<S> output_bias;    // 1 x K

    int64_t output_dim() const { return kind == HeadKind::regression ? 1 : num_labels; }

    static TaskHead init(HeadKind kind, int64_t num_labels, int64_t hidden, uint64_t seed) {
        if (num_labels < 1) throw ConfigError("task head needs num_labels >= 1");
        TaskHead head;
        head.kind = kind;
        head.num_labels = num_labels;
        const int64_t k = head.output_dim();
        auto rng = make_rng(derive_seed(seed, "task-head"));
        head.output_weight.resize(hidden, k);
        for (int64_t r = 0; r < hidden; ++r) {
            for (int64_t c = 0; c < k; ++c) {
                head.output_weight(r, c) = static_cast<S>(truncated_normal(rng, 0.02));
            }
        }
        head.output_bias = Mat<S>::Zero(1, k);
        return head;
    }

    // logits = pooled @ W + b
    Mat<S> forward(const Mat<S>& pooled) const {
        return (pooled * output_weight).rowwise() + output_bias.row(0);
    }

    // Accumulates head gradients and returns the gradient w.r.t. pooled.
    Mat<S> backward(const Mat<S>& pooled, const Mat<S>& dlogits, Mat<S>& d_output_weight,
                    Mat<S>& d_output_bias) const {
        d_output_weight.noalias() += pooled.transpose() * dlogits;
        d_output_bias.row(0) += dlogits.colwise().sum();
        return dlogits * output_weight.transpose();
    }
};

}  // namespace bertkit::nn
