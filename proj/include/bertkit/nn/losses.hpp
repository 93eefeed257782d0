#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/data/examples.hpp"
#include "bertkit/nn/encoder.hpp"

namespace bertkit::nn {

template <typename S>
struct LossResult {
    double loss = 0.0;
    Mat<S> dlogits;       // gradient w.r.t. logits
    int64_t scored = 0;   // positions/examples that contributed
    bool empty = false;   // no scored positions (loss defined as 0)
};

// Mean cross-entropy over positions with a non-ignore label. Rows of
// `logits` follow the batch layout (BL x V); ignored rows contribute
// nothing and get zero gradient.
template <typename S>
LossResult<S> mlm_loss(const Mat<S>& logits, const std::vector<int32_t>& labels) {
    if (static_cast<size_t>(logits.rows()) != labels.size()) {
        throw DataError("mlm_loss: logits rows and label count differ");
    }
    LossResult<S> out;
    out.dlogits = Mat<S>::Zero(logits.rows(), logits.cols());
    int64_t count = 0;
    for (size_t r = 0; r < labels.size(); ++r) {
        if (labels[r] != data::kIgnoreLabel) ++count;
    }
    out.scored = count;
    if (count == 0) {
        out.empty = true;
        return out;
    }
    double total = 0.0;
    const S inv_count = static_cast<S>(1.0 / static_cast<double>(count));
    for (int64_t r = 0; r < logits.rows(); ++r) {
        const int32_t label = labels[static_cast<size_t>(r)];
        if (label == data::kIgnoreLabel) continue;
        if (label < 0 || label >= logits.cols()) {
            throw DataError("mlm_loss: label " + std::to_string(label) + " out of range");
        }
        const S mx = logits.row(r).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> ex = (logits.row(r).array() - mx).exp();
        const S denom = ex.sum();
        total += -(static_cast<double>(logits(r, label)) - static_cast<double>(mx) -
                   std::log(static_cast<double>(denom)));
        out.dlogits.row(r) = (ex / denom).matrix() * inv_count;
        out.dlogits(r, label) -= inv_count;
    }
    out.loss = total / static_cast<double>(count);
    return out;
}

// Mean cross-entropy for single-prediction classification (logits B x K).
template <typename S>
LossResult<S> classification_loss(const Mat<S>& logits, const std::vector<int32_t>& labels) {
    if (static_cast<size_t>(logits.rows()) != labels.size()) {
        throw DataError("classification_loss: row/label count mismatch");
    }
    if (labels.empty()) throw DataError("classification_loss: empty batch");
    LossResult<S> out;
    out.dlogits = Mat<S>::Zero(logits.rows(), logits.cols());
    out.scored = logits.rows();
    const S inv = static_cast<S>(1.0 / static_cast<double>(logits.rows()));
    double total = 0.0;
    for (int64_t r = 0; r < logits.rows(); ++r) {
        const int32_t label = labels[static_cast<size_t>(r)];
        if (label < 0 || label >= logits.cols()) {
            throw DataError("classification_loss: label " + std::to_string(label) +
                            " out of range at row " + std::to_string(r));
        }
        const S mx = logits.row(r).maxCoeff();
        Eigen::Array<S, 1, Eigen::Dynamic> ex = (logits.row(r).array() - mx).exp();
        const S denom = ex.sum();
        total += -(static_cast<double>(logits(r, label)) - static_cast<double>(mx) -
                   std::log(static_cast<double>(denom)));
        out.dlogits.row(r) = (ex / denom).matrix() * inv;
        out.dlogits(r, label) -= inv;
    }
    out.loss = total / static_cast<double>(logits.rows());
    return out;
}

// Per-label sigmoid binary cross-entropy, averaged over batch x labels.
// `targets` entries are 0/1.
template <typename S>
LossResult<S> multilabel_loss(const Mat<S>& logits, const Mat<S>& targets) {
    if (logits.rows() != targets.rows() || logits.cols() != targets.cols()) {
        throw DataError("multilabel_loss: shape mismatch");
    }
    if (logits.rows() == 0) throw DataError("multilabel_loss: empty batch");
    LossResult<S> out;
    out.dlogits.resize(logits.rows(), logits.cols());
    out.scored = logits.rows();
    const double inv = 1.0 / static_cast<double>(logits.rows() * logits.cols());
    double total = 0.0;
    for (int64_t r = 0; r < logits.rows(); ++r) {
        for (int64_t c = 0; c < logits.cols(); ++c) {
            const double z = static_cast<double>(logits(r, c));
            const double y = static_cast<double>(targets(r, c));
            // stable: max(z,0) - z*y + log(1+exp(-|z|))
            total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            const double sigma = 1.0 / (1.0 + std::exp(-z));
            out.dlogits(r, c) = static_cast<S>((sigma - y) * inv);
        }
    }
    out.loss = total * inv;
    return out;
}

// Mean squared error for regression heads (predictions B x 1).
template <typename S>
LossResult<S> regression_loss(const Mat<S>& predictions, const std::vector<double>& targets) {
    if (static_cast<size_t>(predictions.rows()) != targets.size() || predictions.cols() != 1) {
        throw DataError("regression_loss: expected B x 1 predictions matching targets");
    }
    if (targets.empty()) throw DataError("regression_loss: empty batch");
    LossResult<S> out;
    out.dlogits.resize(predictions.rows(), 1);
    out.scored = predictions.rows();
    const double inv = 1.0 / static_cast<double>(predictions.rows());
    double total = 0.0;
    for (int64_t r = 0; r < predictions.rows(); ++r) {
        const double diff = static_cast<double>(predictions(r, 0)) - targets[static_cast<size_t>(r)];
        total += diff * diff;
        out.dlogits(r, 0) = static_cast<S>(2.0 * diff * inv);
    }
    out.loss = total * inv;
    return out;
}

}  // namespace bertkit::nn
