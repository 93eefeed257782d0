#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "bertkit/data/examples.hpp"
#include "bertkit/nn/encoder.hpp"
#include "bertkit/nn/heads.hpp"
#include "bertkit/nn/losses.hpp"

namespace testutil {

enum class GradTask { mlm, classification, multi_label, regression };

// Everything a loss evaluation needs, bundled so finite differences can
// re-run it after perturbing single weights.
struct GradCheckSetup {
    bertkit::data::Batch batch;
    std::vector<int32_t> class_labels;            // classification
    bertkit::nn::Mat<double> multilabel_targets;  // multi_label
    std::vector<double> regression_targets;       // regression
};

inline double eval_loss(bertkit::nn::Model<double>& model,
                        bertkit::nn::TaskHead<double>* head, GradTask task,
                        const GradCheckSetup& setup) {
    using namespace bertkit::nn;
    ForwardCache<double> cache;
    const bool want_mlm = (task == GradTask::mlm);
    const auto res = model.forward(setup.batch, Mode::train, &cache, nullptr, want_mlm);
    switch (task) {
        case GradTask::mlm:
            return mlm_loss(res.mlm_logits, setup.batch.mlm_labels).loss;
        case GradTask::classification:
            return classification_loss(head->forward(res.pooled), setup.class_labels).loss;
        case GradTask::multi_label:
            return multilabel_loss(head->forward(res.pooled), setup.multilabel_targets).loss;
        case GradTask::regression:
            return regression_loss(head->forward(res.pooled), setup.regression_targets).loss;
    }
    return 0.0;
}

struct AnalyticGrads {
    bertkit::nn::NamedTensors<double> encoder;
    bertkit::nn::Mat<double> head_weight;
    bertkit::nn::Mat<double> head_bias;
};

inline AnalyticGrads analytic_grads(bertkit::nn::Model<double>& model,
                                    bertkit::nn::TaskHead<double>* head, GradTask task,
                                    const GradCheckSetup& setup) {
    using namespace bertkit::nn;
    AnalyticGrads out;
    out.encoder = zeros_like_schema<double>(model.config());
    ForwardCache<double> cache;
    const bool want_mlm = (task == GradTask::mlm);
    const auto res = model.forward(setup.batch, Mode::train, &cache, nullptr, want_mlm);
    const Mat<double> empty;
    if (task == GradTask::mlm) {
        const auto lr = mlm_loss(res.mlm_logits, setup.batch.mlm_labels);
        model.backward(cache, lr.dlogits, empty, out.encoder);
        return out;
    }
    out.head_weight = Mat<double>::Zero(head->output_weight.rows(), head->output_weight.cols());
    out.head_bias = Mat<double>::Zero(1, head->output_bias.cols());
    const auto logits = head->forward(res.pooled);
    LossResult<double> lr;
    switch (task) {
        case GradTask::classification:
            lr = classification_loss(logits, setup.class_labels);
            break;
        case GradTask::multi_label:
            lr = multilabel_loss(logits, setup.multilabel_targets);
            break;
        case GradTask::regression:
            lr = regression_loss(logits, setup.regression_targets);
            break;
        default:
            break;
    }
    const Mat<double> d_pooled = head->backward(res.pooled, lr.dlogits, out.head_weight,
                                                out.head_bias);
    model.backward(cache, empty, d_pooled, out.encoder);
    return out;
}

inline double rel_error(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-4});
    return std::abs(analytic - fd) / denom;
}

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_tensor;
};

// Central finite differences over every parameter entry (optionally strided
// for speed); returns the worst relative error across tensors.
inline GradCheckResult gradient_check(bertkit::nn::Model<double>& model,
                                      bertkit::nn::TaskHead<double>* head, GradTask task,
                                      const GradCheckSetup& setup, double step = 1e-5,
                                      int64_t stride = 1) {
    const auto grads = analytic_grads(model, head, task, setup);
    GradCheckResult result;

    auto check_entry = [&](bertkit::nn::Mat<double>& param, double analytic, int64_t r, int64_t c,
                           const std::string& tensor_name) {
        const double saved = param(r, c);
        param(r, c) = saved + step;
        const double up = eval_loss(model, head, task, setup);
        param(r, c) = saved - step;
        const double down = eval_loss(model, head, task, setup);
        param(r, c) = saved;
        const double fd = (up - down) / (2.0 * step);
        const double err = rel_error(analytic, fd);
        if (err > result.max_rel_error) {
            result.max_rel_error = err;
            result.worst_tensor = tensor_name;
        }
    };

    for (auto& [name, param] : model.params()) {
        const auto& g = grads.encoder.at(name);
        int64_t counter = 0;
        for (int64_t r = 0; r < param.rows(); ++r) {
            for (int64_t c = 0; c < param.cols(); ++c, ++counter) {
                if (counter % stride != 0) continue;
                check_entry(param, g(r, c), r, c, name);
            }
        }
    }
    if (head != nullptr && task != GradTask::mlm) {
        int64_t counter = 0;
        for (int64_t r = 0; r < head->output_weight.rows(); ++r) {
            for (int64_t c = 0; c < head->output_weight.cols(); ++c, ++counter) {
                if (counter % stride != 0) continue;
                check_entry(head->output_weight, grads.head_weight(r, c), r, c, "head.output.weight");
            }
        }
        for (int64_t c = 0; c < head->output_bias.cols(); ++c) {
            check_entry(head->output_bias, grads.head_bias(0, c), 0, c, "head.output.bias");
        }
    }
    return result;
}

}  // namespace testutil
