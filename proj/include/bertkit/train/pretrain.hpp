#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bertkit/common.hpp"
#include "bertkit/data/examples.hpp"
#include "bertkit/nn/checkpoint.hpp"
#include "bertkit/nn/encoder.hpp"
#include "bertkit/nn/losses.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/wordpiece.hpp"
#include "bertkit/train/optimizer.hpp"
#include "bertkit/train/schedule.hpp"

namespace bertkit::train {

enum class Objective { mlm, tlm };

inline const char* objective_name(Objective o) { return o == Objective::mlm ? "mlm" : "tlm"; }

inline Objective parse_objective(const std::string& s) {
    if (s == "mlm" || s == "MLM") return Objective::mlm;
    if (s == "tlm" || s == "TLM") return Objective::tlm;
    throw ConfigError("unknown objective: " + s + " (expected mlm or tlm)");
}

// Tokenized pretraining data for one stage. MLM stages carry sentences,
// TLM stages carry parallel pairs.
struct StageData {
    Objective objective = Objective::mlm;
    std::vector<std::vector<int32_t>> sentences;
    std::vector<std::pair<std::vector<int32_t>, std::vector<int32_t>>> pairs;
    size_t truncated = 0;      // inputs tail-truncated to fit max_seq_len
    size_t empty_targets = 0;  // TLM pairs whose target encoded to nothing

    size_t size() const {
        return objective == Objective::mlm ? sentences.size() : pairs.size();
    }
};

// Encodes cleaned one-sentence-per-line text for an MLM stage.
inline StageData encode_mlm_corpus(const std::vector<std::string>& paths,
                                   const text::Vocab& vocab,
                                   size_t max_seq_len = data::kDefaultMaxSeqLen) {
    StageData out;
    out.objective = Objective::mlm;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open corpus file: " + path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto ids = vocab.encode(line);
            if (ids.empty()) continue;
            if (ids.size() > max_seq_len - 2) {
                ids.resize(max_seq_len - 2);
                ++out.truncated;
            }
            out.sentences.push_back(std::move(ids));
        }
    }
    return out;
}

// Encodes a two-column TSV of parallel sentences for a TLM stage.
inline StageData encode_tlm_corpus(const std::vector<std::string>& paths,
                                   const text::Vocab& vocab,
                                   size_t max_seq_len = data::kDefaultMaxSeqLen) {
    StageData out;
    out.objective = Objective::tlm;
    for (const auto& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open parallel file: " + path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": expected two tab-separated columns");
            }
            auto src = vocab.encode(line.substr(0, tab));
            auto tgt = vocab.encode(line.substr(tab + 1));
            if (src.empty() && tgt.empty()) continue;
            if (tgt.empty()) ++out.empty_targets;
            if (src.size() + tgt.size() + 3 > max_seq_len) {
                data::detail::truncate_pair_to_fit(src, tgt, max_seq_len - 3);
                ++out.truncated;
            }
            out.pairs.emplace_back(std::move(src), std::move(tgt));
        }
    }
    return out;
}

// Splits item indices into train/validation deterministically: a seeded
// shuffle, then the first max(1, fraction*n) indices become validation.
struct DataSplit {
    std::vector<size_t> train;
    std::vector<size_t> validation;
};

inline DataSplit split_for_validation(size_t n, double fraction, uint64_t seed) {
    if (n == 0) throw DataError("cannot split an empty dataset");
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    auto rng = make_rng(derive_seed(seed, "validation-split"));
    for (size_t i = n - 1; i > 0; --i) {
        std::swap(order[i], order[uniform_index(rng, i + 1)]);
    }
    DataSplit split;
    size_t val = std::max<size_t>(1, static_cast<size_t>(std::llround(fraction * static_cast<double>(n))));
    if (val >= n) val = (n > 1) ? n - 1 : 1;
    split.validation.assign(order.begin(), order.begin() + static_cast<long>(val));
    if (static_cast<size_t>(val) < n) {
        split.train.assign(order.begin() + static_cast<long>(val), order.end());
    }
    if (split.train.empty()) split.train = split.validation;  // degenerate tiny sets
    return split;
}

struct StepLog {
    int64_t step = 0;
    double lr = 0.0;
    double train_loss = std::numeric_limits<double>::quiet_NaN();
    double val_loss = std::numeric_limits<double>::quiet_NaN();
    bool has_val = false;
};

struct PretrainResult {
    nn::Checkpoint best;
    std::vector<StepLog> log;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int64_t best_step = 0;
    int64_t steps_run = 0;
    size_t stream_restarts = 0;
    bool early_stopped = false;
    double step0_val_loss = std::numeric_limits<double>::quiet_NaN();
};

inline void save_loss_log(const std::vector<StepLog>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write loss log: " + path);
    out << "step,lr,train_loss,val_loss\n";
    char buf[128];
    for (const auto& e : log) {
        out << e.step << ',';
        std::snprintf(buf, sizeof(buf), "%.17g", e.lr);
        out << buf << ',';
        if (!std::isnan(e.train_loss)) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.train_loss);
            out << buf;
        }
        out << ',';
        if (e.has_val) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.val_loss);
            out << buf;
        }
        out << '\n';
    }
}

namespace detail {

// Deterministic example stream: reshuffles item order each epoch; each
// emitted example's masking rng derives from (seed, running counter).
class ExampleStream {
public:
    ExampleStream(const StageData& stage_data, const text::Vocab& vocab,
                  const std::vector<size_t>& indices, const data::MaskingConfig& mask_cfg,
                  uint64_t seed, size_t max_seq_len)
        : data_(stage_data),
          vocab_(vocab),
          indices_(indices),
          mask_cfg_(mask_cfg),
          seed_(seed),
          max_seq_len_(max_seq_len) {
        if (indices_.empty()) throw DataError("pretraining stream has no examples");
        reshuffle();
    }

    data::EncodedExample next() {
        if (cursor_ >= order_.size()) {
            ++epoch_;
            ++restarts_;
            reshuffle();
            cursor_ = 0;
        }
        const size_t item = order_[cursor_++];
        auto rng = make_rng(derive_seed(seed_, "mask", counter_++));
        if (data_.objective == Objective::mlm) {
            return data::build_mlm_example(data_.sentences[item], vocab_, mask_cfg_, rng,
                                           max_seq_len_);
        }
        const auto& [src, tgt] = data_.pairs[item];
        return data::build_tlm_example(src, tgt, vocab_, mask_cfg_, rng, max_seq_len_);
    }

    size_t restarts() const { return restarts_; }

private:
    void reshuffle() {
        order_ = indices_;
        auto rng = make_rng(derive_seed(seed_, "shuffle", epoch_));
        for (size_t i = order_.size() - 1; i > 0; --i) {
            std::swap(order_[i], order_[uniform_index(rng, i + 1)]);
        }
    }

    const StageData& data_;
    const text::Vocab& vocab_;
    std::vector<size_t> indices_;
    std::vector<size_t> order_;
    data::MaskingConfig mask_cfg_;
    uint64_t seed_;
    size_t max_seq_len_;
    size_t cursor_ = 0;
    uint64_t epoch_ = 0;
    uint64_t counter_ = 0;
    size_t restarts_ = 0;
};

inline data::Batch make_batch(const std::vector<data::EncodedExample>& examples, int32_t pad_id) {
    size_t width = 0;
    for (const auto& ex : examples) width = std::max(width, ex.length());
    return data::pad_batch(examples, pad_id, width);
}

// Masked validation examples are fixed once per stage so the held-out loss
// is a pure function of the parameters.
inline std::vector<data::Batch> build_validation_batches(const StageData& stage_data,
                                                         const text::Vocab& vocab,
                                                         const std::vector<size_t>& indices,
                                                         const data::MaskingConfig& mask_cfg,
                                                         uint64_t seed, size_t max_seq_len,
                                                         int64_t batch_size) {
    std::vector<data::Batch> batches;
    std::vector<data::EncodedExample> chunk;
    for (size_t i = 0; i < indices.size(); ++i) {
        auto rng = make_rng(derive_seed(seed, "validation-mask", i));
        const size_t item = indices[i];
        if (stage_data.objective == Objective::mlm) {
            chunk.push_back(data::build_mlm_example(stage_data.sentences[item], vocab, mask_cfg,
                                                    rng, max_seq_len));
        } else {
            const auto& [src, tgt] = stage_data.pairs[item];
            chunk.push_back(
                data::build_tlm_example(src, tgt, vocab, mask_cfg, rng, max_seq_len));
        }
        if (chunk.size() == static_cast<size_t>(batch_size)) {
            batches.push_back(make_batch(chunk, vocab.specials().pad));
            chunk.clear();
        }
    }
    if (!chunk.empty()) batches.push_back(make_batch(chunk, vocab.specials().pad));
    return batches;
}

template <typename S>
double validation_loss(const nn::Model<S>& model, const std::vector<data::Batch>& batches) {
    double total = 0.0;
    int64_t scored = 0;
    for (const auto& batch : batches) {
        const auto res = model.forward(batch, nn::Mode::eval, nullptr);
        const auto lr = nn::mlm_loss(res.mlm_logits, batch.mlm_labels);
        total += lr.loss * static_cast<double>(lr.scored);
        scored += lr.scored;
    }
    return scored > 0 ? total / static_cast<double>(scored) : 0.0;
}

}  // namespace detail

// One pretraining stage: build-batch -> forward -> loss -> backward -> clip
// -> adamw -> schedule, with periodic fixed-set validation, best-checkpoint
// tracking and patience-based early stopping.
template <typename S = float>
PretrainResult pretrain(const StageData& stage_data, const std::vector<size_t>& train_indices,
                        const std::vector<size_t>& validation_indices, const text::Vocab& vocab,
                        const nn::Checkpoint& start, const TrainConfig& cfg,
                        const data::MaskingConfig& mask_cfg_in, const std::string& stage_tag,
                        size_t max_seq_len = data::kDefaultMaxSeqLen) {
    cfg.validate();
    if (validation_indices.empty()) throw ConfigError("pretrain: empty validation set");

    nn::Model<S> model(start);
    if (model.config().max_positions < static_cast<int64_t>(max_seq_len)) {
        throw ConfigError("model max_positions is below max_seq_len");
    }
    data::MaskingConfig mask_cfg = mask_cfg_in;
    mask_cfg.seed = cfg.seed;

    detail::ExampleStream stream(stage_data, vocab, train_indices, mask_cfg,
                                 derive_seed(cfg.seed, "train-stream"), max_seq_len);
    const auto val_batches = detail::build_validation_batches(
        stage_data, vocab, validation_indices, mask_cfg, derive_seed(cfg.seed, "val-stream"),
        max_seq_len, cfg.batch_size);

    auto grads = nn::zeros_like_schema<S>(model.config());
    auto opt_state = AdamWState<S>::zeros_like(model.params());

    PretrainResult result;
    auto snapshot_best = [&](double val, int64_t step) {
        result.best_val_loss = val;
        result.best_step = step;
        result.best = model.to_checkpoint({{"stage", stage_tag},
                                           {"step", std::to_string(step)},
                                           {"seed", std::to_string(cfg.seed)},
                                           {"objective", objective_name(stage_data.objective)}});
    };

    // step-0 validation anchors stage continuity and the initial best
    {
        const double val0 = detail::validation_loss(model, val_batches);
        result.step0_val_loss = val0;
        StepLog log0;
        log0.step = 0;
        log0.lr = 0.0;
        log0.val_loss = val0;
        log0.has_val = true;
        result.log.push_back(log0);
        snapshot_best(val0, 0);
    }

    int64_t evals_without_improvement = 0;
    std::vector<data::EncodedExample> chunk;
    for (int64_t step = 1; step <= cfg.total_steps; ++step) {
        chunk.clear();
        for (int64_t i = 0; i < cfg.batch_size; ++i) chunk.push_back(stream.next());
        const data::Batch batch = detail::make_batch(chunk, vocab.specials().pad);

        nn::ForwardCache<S> cache;
        Rng dropout_rng = make_rng(derive_seed(cfg.seed, "dropout", static_cast<uint64_t>(step)));
        const auto res = model.forward(batch, nn::Mode::train, &cache, &dropout_rng);
        const auto loss = nn::mlm_loss(res.mlm_logits, batch.mlm_labels);
        if (std::isnan(loss.loss)) {
            throw NumericError("NaN training loss at step " + std::to_string(step));
        }

        nn::zero_tensors(grads);
        model.backward(cache, loss.dlogits, nn::Mat<S>(), grads);
        clip_gradients(grads, cfg.clip_norm);
        const double lr = lr_at(step, cfg);
        adamw_step(model.params(), grads, opt_state, step, lr, cfg);

        StepLog entry;
        entry.step = step;
        entry.lr = lr;
        entry.train_loss = loss.loss;

        if (step % cfg.validation_every == 0 || step == cfg.total_steps) {
            const double val = detail::validation_loss(model, val_batches);
            entry.val_loss = val;
            entry.has_val = true;
            if (val < result.best_val_loss) {
                snapshot_best(val, step);
                evals_without_improvement = 0;
            } else {
                ++evals_without_improvement;
            }
        }
        result.log.push_back(entry);
        result.steps_run = step;
        if (entry.has_val && evals_without_improvement >= cfg.patience) {
            result.early_stopped = true;
            break;
        }
    }
    result.stream_restarts = stream.restarts();
    return result;
}

// --- staged plans -----------------------------------------------------------

struct StageSpec {
    std::string tag;
    Objective objective = Objective::mlm;
    std::vector<std::string> corpora;  // text files (mlm) or tsv files (tlm)
    TrainConfig train;
    double validation_fraction = 0.01;

    static StageSpec from_json(const nlohmann::json& j) {
        StageSpec s;
        s.tag = j.at("tag").get<std::string>();
        s.objective = parse_objective(j.value("objective", "mlm"));
        for (const auto& c : j.at("corpora")) s.corpora.push_back(c.get<std::string>());
        if (s.corpora.empty()) throw ConfigError("stage " + s.tag + " lists no corpora");
        s.train = TrainConfig::from_json(j.at("train"));
        s.validation_fraction = j.value("validation_fraction", s.validation_fraction);
        return s;
    }
};

struct StagePlan {
    std::vector<StageSpec> stages;

    static StagePlan from_json(const nlohmann::json& j) {
        StagePlan plan;
        for (const auto& s : j.at("stages")) plan.stages.push_back(StageSpec::from_json(s));
        return plan;
    }

    static StagePlan load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open stage plan: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad stage plan " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

struct StageResult {
    std::string tag;
    PretrainResult run;
};

struct StagePlanResult {
    nn::Checkpoint final;  // == init when the plan is empty
    std::vector<StageResult> stages;
};

// Runs stages sequentially, each starting from the previous best checkpoint.
template <typename S = float>
StagePlanResult run_stage_plan(const StagePlan& plan, const nn::Checkpoint& init,
                               const text::Vocab& vocab,
                               const data::MaskingConfig& mask_cfg = {},
                               size_t max_seq_len = data::kDefaultMaxSeqLen) {
    StagePlanResult result;
    result.final = init;
    for (const auto& spec : plan.stages) {
        const StageData stage_data = (spec.objective == Objective::mlm)
                                         ? encode_mlm_corpus(spec.corpora, vocab, max_seq_len)
                                         : encode_tlm_corpus(spec.corpora, vocab, max_seq_len);
        if (stage_data.size() == 0) {
            throw DataError("stage " + spec.tag + " has no usable examples");
        }
        const auto split = split_for_validation(stage_data.size(), spec.validation_fraction,
                                                spec.train.seed);
        StageResult sr;
        sr.tag = spec.tag;
        sr.run = pretrain<S>(stage_data, split.train, split.validation, vocab, result.final,
                             spec.train, mask_cfg, spec.tag, max_seq_len);
        result.final = sr.run.best;
        result.stages.push_back(std::move(sr));
    }
    return result;
}

}  // namespace bertkit::train
