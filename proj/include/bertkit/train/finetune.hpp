#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/data/examples.hpp"
#include "bertkit/eval/metrics.hpp"
#include "bertkit/eval/tasks.hpp"
#include "bertkit/nn/checkpoint.hpp"
#include "bertkit/nn/encoder.hpp"
#include "bertkit/nn/heads.hpp"
#include "bertkit/nn/losses.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/wordpiece.hpp"
#include "bertkit/train/optimizer.hpp"
#include "bertkit/train/schedule.hpp"

namespace bertkit::train {

struct EpochMetric {
    int64_t epoch = 0;
    double metric = 0.0;
    double train_loss = 0.0;
};

template <typename S>
struct FinetuneResult {
    nn::TaskHead<S> head;
    nn::Checkpoint encoder;       // encoder at the best epoch
    double best_metric = 0.0;
    int64_t best_epoch = 0;
    std::vector<EpochMetric> history;
};

namespace detail {

inline constexpr const char* kHeadWeightName = "head.output.weight";
inline constexpr const char* kHeadBiasName = "head.output.bias";

template <typename S>
nn::NamedTensors<S> zeros_like_map(const nn::NamedTensors<S>& src) {
    nn::NamedTensors<S> out;
    for (const auto& [name, m] : src) out.emplace(name, nn::Mat<S>::Zero(m.rows(), m.cols()));
    return out;
}

// Encoded inputs plus per-example supervision, batched later.
template <typename S>
struct FinetuneExamples {
    std::vector<data::EncodedExample> encoded;
    std::vector<int32_t> class_labels;
    nn::Mat<S> multilabel_targets;  // N x K
    std::vector<double> regression_targets;
};

template <typename S>
FinetuneExamples<S> encode_items(const eval::TaskData& items, const eval::TaskSpec& spec,
                                 const text::Vocab& vocab, size_t max_seq_len) {
    FinetuneExamples<S> out;
    const bool pair = spec.input_arity == eval::InputArity::pair;
    if (spec.head_kind == nn::HeadKind::multi_label) {
        out.multilabel_targets = nn::Mat<S>::Zero(static_cast<int64_t>(items.size()),
                                                  spec.num_labels);
    }
    for (size_t i = 0; i < items.size(); ++i) {
        const auto& item = items[i];
        auto a = vocab.encode(item.text_a);
        std::vector<int32_t> b;
        if (pair) b = vocab.encode(item.text_b);
        out.encoded.push_back(data::build_pair_example(std::move(a), std::move(b), vocab,
                                                       max_seq_len));
        switch (spec.head_kind) {
            case nn::HeadKind::single_class:
            case nn::HeadKind::pair_class:
                out.class_labels.push_back(item.label);
                break;
            case nn::HeadKind::multi_label:
                for (int32_t id : item.label_set) {
                    out.multilabel_targets(static_cast<int64_t>(i), id) = S(1);
                }
                break;
            case nn::HeadKind::regression:
                out.regression_targets.push_back(item.target);
                break;
        }
    }
    return out;
}

// Predictions in metric space: argmax ids, thresholded label sets, or
// clamped scores.
template <typename S>
struct Predictions {
    std::vector<int32_t> classes;
    std::vector<std::vector<int32_t>> label_sets;
    std::vector<double> scores;
};

template <typename S>
void predict_batch(const nn::Mat<S>& logits, const eval::TaskSpec& spec, Predictions<S>& out) {
    switch (spec.head_kind) {
        case nn::HeadKind::single_class:
        case nn::HeadKind::pair_class: {
            for (int64_t r = 0; r < logits.rows(); ++r) {
                int64_t best = 0;
                logits.row(r).maxCoeff(&best);
                out.classes.push_back(static_cast<int32_t>(best));
            }
            break;
        }
        case nn::HeadKind::multi_label: {
            for (int64_t r = 0; r < logits.rows(); ++r) {
                std::vector<int32_t> set;
                for (int64_t c = 0; c < logits.cols(); ++c) {
                    if (logits(r, c) > S(0)) set.push_back(static_cast<int32_t>(c));  // sigmoid > 0.5
                }
                out.label_sets.push_back(std::move(set));
            }
            break;
        }
        case nn::HeadKind::regression: {
            for (int64_t r = 0; r < logits.rows(); ++r) {
                out.scores.push_back(std::clamp(static_cast<double>(logits(r, 0)), 0.0, 1.0));
            }
            break;
        }
    }
}

template <typename S>
double evaluate_metric(const FinetuneExamples<S>& dev, const Predictions<S>& pred,
                       const eval::TaskSpec& spec) {
    switch (spec.metric) {
        case eval::Metric::f1:
            return eval::f1_score(dev.class_labels, pred.classes, spec.f1_averaging);
        case eval::Metric::accuracy:
            return eval::accuracy(dev.class_labels, pred.classes);
        case eval::Metric::pearson:
            return eval::pearson(dev.regression_targets, pred.scores);
        case eval::Metric::jaccard: {
            std::vector<std::vector<int32_t>> gold;
            for (int64_t r = 0; r < dev.multilabel_targets.rows(); ++r) {
                std::vector<int32_t> set;
                for (int64_t c = 0; c < dev.multilabel_targets.cols(); ++c) {
                    if (dev.multilabel_targets(r, c) > S(0.5)) set.push_back(static_cast<int32_t>(c));
                }
                gold.push_back(std::move(set));
            }
            return eval::jaccard(gold, pred.label_sets);
        }
    }
    return 0.0;
}

}  // namespace detail

// Fine-tunes encoder plus a fresh task head: cross-entropy, per-label BCE or
// MSE per the head kind, AdamW with the pretraining settings, total steps
// epochs x steps-per-epoch with 10% warmup; evaluates the dev split each
// epoch and returns the best-epoch head, encoder and metric.
template <typename S = float>
FinetuneResult<S> finetune(const eval::TaskSpec& spec, const eval::TaskData& train_items,
                           const eval::TaskData& dev_items, const nn::Checkpoint& start,
                           const text::Vocab& vocab, TrainConfig cfg, int64_t epochs = 10,
                           size_t max_seq_len = data::kDefaultMaxSeqLen) {
    spec.validate();
    if (train_items.empty() || dev_items.empty()) {
        throw DataError("finetune: empty train or dev split");
    }

    nn::Model<S> model(start);
    auto head = nn::TaskHead<S>::init(spec.head_kind, spec.num_labels, model.config().hidden_size,
                                      derive_seed(cfg.seed, spec.name));
    // head parameters join the encoder's tensor map so clipping and AdamW
    // treat all trainables uniformly (map nodes are stable, so references
    // taken here stay valid)
    model.params()[detail::kHeadWeightName] = head.output_weight;
    model.params()[detail::kHeadBiasName] = head.output_bias;
    nn::Mat<S>& head_w = model.params().at(detail::kHeadWeightName);
    nn::Mat<S>& head_b = model.params().at(detail::kHeadBiasName);
    auto head_logits = [&](const nn::Mat<S>& pooled) -> nn::Mat<S> {
        return (pooled * head_w).rowwise() + head_b.row(0);
    };

    const auto train_set = detail::encode_items<S>(train_items, spec, vocab, max_seq_len);
    const auto dev_set = detail::encode_items<S>(dev_items, spec, vocab, max_seq_len);

    const int64_t steps_per_epoch =
        (static_cast<int64_t>(train_set.encoded.size()) + cfg.batch_size - 1) / cfg.batch_size;
    cfg.total_steps = std::max<int64_t>(1, epochs * steps_per_epoch);
    cfg.warmup_steps = std::max<int64_t>(1, cfg.total_steps / 10);
    cfg.validate();

    auto grads = detail::zeros_like_map(model.params());
    auto opt_state = AdamWState<S>::zeros_like(model.params());

    FinetuneResult<S> result;
    result.best_metric = -std::numeric_limits<double>::infinity();
    nn::NamedTensors<S> best_params;

    auto evaluate_dev = [&]() {
        detail::Predictions<S> preds;
        const size_t n = dev_set.encoded.size();
        for (size_t begin = 0; begin < n; begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(n, begin + static_cast<size_t>(cfg.batch_size));
            std::vector<data::EncodedExample> chunk(dev_set.encoded.begin() + begin,
                                                    dev_set.encoded.begin() + end);
            size_t width = 0;
            for (const auto& ex : chunk) width = std::max(width, ex.length());
            const auto batch = data::pad_batch(chunk, vocab.specials().pad, width);
            const auto res = model.forward(batch, nn::Mode::eval, nullptr, nullptr, false);
            detail::predict_batch(head_logits(res.pooled), spec, preds);
        }
        return detail::evaluate_metric(dev_set, preds, spec);
    };

    int64_t step = 0;
    for (int64_t epoch = 1; epoch <= epochs; ++epoch) {
        std::vector<size_t> order(train_set.encoded.size());
        std::iota(order.begin(), order.end(), size_t{0});
        auto shuffle_rng = make_rng(derive_seed(cfg.seed, "finetune-shuffle",
                                                static_cast<uint64_t>(epoch)));
        for (size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[uniform_index(shuffle_rng, i + 1)]);
        }

        double epoch_loss = 0.0;
        int64_t epoch_batches = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            std::vector<data::EncodedExample> chunk;
            std::vector<int32_t> labels;
            nn::Mat<S> ml_targets;
            std::vector<double> reg_targets;
            if (spec.head_kind == nn::HeadKind::multi_label) {
                ml_targets.resize(static_cast<int64_t>(end - begin), spec.num_labels);
            }
            for (size_t i = begin; i < end; ++i) {
                const size_t item = order[i];
                chunk.push_back(train_set.encoded[item]);
                switch (spec.head_kind) {
                    case nn::HeadKind::single_class:
                    case nn::HeadKind::pair_class:
                        labels.push_back(train_set.class_labels[item]);
                        break;
                    case nn::HeadKind::multi_label:
                        ml_targets.row(static_cast<int64_t>(i - begin)) =
                            train_set.multilabel_targets.row(static_cast<int64_t>(item));
                        break;
                    case nn::HeadKind::regression:
                        reg_targets.push_back(train_set.regression_targets[item]);
                        break;
                }
            }
            size_t width = 0;
            for (const auto& ex : chunk) width = std::max(width, ex.length());
            const auto batch = data::pad_batch(chunk, vocab.specials().pad, width);

            ++step;
            nn::ForwardCache<S> cache;
            Rng dropout_rng = make_rng(derive_seed(cfg.seed, "finetune-dropout",
                                                   static_cast<uint64_t>(step)));
            const auto res = model.forward(batch, nn::Mode::train, &cache, &dropout_rng, false);
            const auto logits = head_logits(res.pooled);

            nn::LossResult<S> loss;
            switch (spec.head_kind) {
                case nn::HeadKind::single_class:
                case nn::HeadKind::pair_class:
                    loss = nn::classification_loss(logits, labels);
                    break;
                case nn::HeadKind::multi_label:
                    loss = nn::multilabel_loss(logits, ml_targets);
                    break;
                case nn::HeadKind::regression:
                    loss = nn::regression_loss(logits, reg_targets);
                    break;
            }
            if (std::isnan(loss.loss)) {
                throw NumericError("NaN fine-tuning loss at step " + std::to_string(step));
            }
            epoch_loss += loss.loss;
            ++epoch_batches;

            nn::zero_tensors(grads);
            grads.at(detail::kHeadWeightName).noalias() += res.pooled.transpose() * loss.dlogits;
            grads.at(detail::kHeadBiasName).row(0) += loss.dlogits.colwise().sum();
            const nn::Mat<S> d_pooled = loss.dlogits * head_w.transpose();
            model.backward(cache, nn::Mat<S>(), d_pooled, grads);
            clip_gradients(grads, cfg.clip_norm);
            adamw_step(model.params(), grads, opt_state, step, lr_at(step, cfg), cfg);
        }

        const double metric = evaluate_dev();
        EpochMetric em;
        em.epoch = epoch;
        em.metric = metric;
        em.train_loss = epoch_batches ? epoch_loss / static_cast<double>(epoch_batches) : 0.0;
        result.history.push_back(em);
        if (metric > result.best_metric) {
            result.best_metric = metric;
            result.best_epoch = epoch;
            best_params = model.params();
        }
    }

    if (best_params.empty()) best_params = model.params();
    head.output_weight = best_params.at(detail::kHeadWeightName);
    head.output_bias = best_params.at(detail::kHeadBiasName);
    head.pooler_weight = best_params.at("pooler.weight");
    head.pooler_bias = best_params.at("pooler.bias");
    result.head = std::move(head);

    nn::NamedTensors<S> encoder_params;
    for_each_parameter(model.config(), [&](const nn::ParamInfo& p) {
        encoder_params.emplace(p.name, best_params.at(p.name));
    });
    result.encoder = nn::tensors_to_checkpoint(model.config(), encoder_params,
                                               {{"task", spec.name},
                                                {"best_epoch", std::to_string(result.best_epoch)},
                                                {"seed", std::to_string(cfg.seed)}});
    return result;
}

}  // namespace bertkit::train
