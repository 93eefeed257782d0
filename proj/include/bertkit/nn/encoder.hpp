#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bertkit/common.hpp"
#include "bertkit/data/examples.hpp"
#include "bertkit/nn/checkpoint.hpp"
#include "bertkit/nn/model_config.hpp"
#include "bertkit/rng.hpp"

namespace bertkit::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using NamedTensors = std::map<std::string, Mat<S>>;

enum class Mode { train, eval };

// Additive score for masked key columns; exp() of it underflows to exactly 0
// in both float and double, so padded content cannot leak into real rows.
inline constexpr double kMaskedScore = -1e9;

template <typename S>
NamedTensors<S> tensors_from_checkpoint(const Checkpoint& ckpt) {
    NamedTensors<S> out;
    for_each_parameter(ckpt.config, [&](const ParamInfo& p) {
        auto it = ckpt.tensors.find(p.name);
        if (it == ckpt.tensors.end()) throw DataError("checkpoint is missing tensor " + p.name);
        const Tensor& t = it->second;
        if (t.numel() != p.rows * p.cols) {
            throw DataError("checkpoint tensor " + p.name + " has the wrong size");
        }
        Mat<S> m(p.rows, p.cols);
        for (int64_t r = 0; r < p.rows; ++r) {
            for (int64_t c = 0; c < p.cols; ++c) {
                m(r, c) = static_cast<S>(t.data[static_cast<size_t>(r * p.cols + c)]);
            }
        }
        out.emplace(p.name, std::move(m));
    });
    return out;
}

template <typename S>
Checkpoint tensors_to_checkpoint(const ModelConfig& config, const NamedTensors<S>& params,
                                 std::map<std::string, std::string> metadata = {}) {
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.metadata = std::move(metadata);
    for_each_parameter(config, [&](const ParamInfo& p) {
        const Mat<S>& m = params.at(p.name);
        Tensor t;
        t.shape = (p.rank == 1) ? std::vector<int64_t>{p.cols}
                                : std::vector<int64_t>{p.rows, p.cols};
        t.data.resize(static_cast<size_t>(p.rows * p.cols));
        for (int64_t r = 0; r < p.rows; ++r) {
            for (int64_t c = 0; c < p.cols; ++c) {
                t.data[static_cast<size_t>(r * p.cols + c)] = static_cast<float>(m(r, c));
            }
        }
        ckpt.tensors.emplace(p.name, std::move(t));
    });
    return ckpt;
}

// Zero-valued tensor map with the schema's shapes (gradients, moments).
template <typename S>
NamedTensors<S> zeros_like_schema(const ModelConfig& config) {
    NamedTensors<S> out;
    for_each_parameter(config, [&](const ParamInfo& p) {
        out.emplace(p.name, Mat<S>::Zero(p.rows, p.cols));
    });
    return out;
}

template <typename S>
void zero_tensors(NamedTensors<S>& tensors) {
    for (auto& [name, m] : tensors) m.setZero();
}

namespace act {

template <typename S>
S gelu(S x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kCube = 0.044715;
    const double xd = static_cast<double>(x);
    return static_cast<S>(0.5 * xd * (1.0 + std::tanh(kC * (xd + kCube * xd * xd * xd))));
}

template <typename S>
S gelu_grad(S x) {
    constexpr double kC = 0.7978845608028654;
    constexpr double kCube = 0.044715;
    const double xd = static_cast<double>(x);
    const double t = std::tanh(kC * (xd + kCube * xd * xd * xd));
    const double sech2 = 1.0 - t * t;
    return static_cast<S>(0.5 * (1.0 + t) + 0.5 * xd * sech2 * kC * (1.0 + 3.0 * kCube * xd * xd));
}

}  // namespace act

template <typename S>
struct LayerNormCache {
    Mat<S> xhat;              // normalized input
    std::vector<S> rstd;      // 1/sqrt(var+eps) per row
};

template <typename S>
struct LayerCache {
    Mat<S> input;             // layer input (BL x H)
    Mat<S> q, k, v;           // projections (BL x H)
    std::vector<Mat<S>> probs;  // attention rows per (example, head), each L x L
    Mat<S> context;           // concatenated head outputs (BL x H)
    std::vector<uint8_t> attn_drop;
    LayerNormCache<S> attn_ln;
    Mat<S> attn_out;          // LN1 output, the FFN input (BL x H)
    Mat<S> ffn_pre;           // BL x F
    Mat<S> ffn_act;           // gelu(ffn_pre)
    std::vector<uint8_t> ffn_drop;
    LayerNormCache<S> ffn_ln;
};

template <typename S>
struct ForwardCache {
    data::Batch batch;
    Mode mode = Mode::eval;
    bool dropout_active = false;
    std::vector<uint8_t> emb_drop;
    Mat<S> emb_sum;
    LayerNormCache<S> emb_ln;
    std::vector<LayerCache<S>> layers;
    Mat<S> final_hidden;      // BL x H
    Mat<S> cls_hidden;        // B x H
    Mat<S> pooled;            // B x H (tanh output)
    bool has_mlm = false;
    Mat<S> mlm_pre;           // BL x H
    Mat<S> mlm_act;           // BL x H
    LayerNormCache<S> mlm_ln;
    Mat<S> mlm_hidden;        // BL x H
};

template <typename S>
struct ForwardResult {
    Mat<S> mlm_logits;  // BL x V (empty when not requested)
    Mat<S> pooled;      // B x H
};

// BERT-style post-norm encoder with an analytic backward pass. The model
// holds a named tensor map; bound references per layer keep the math
// readable without string lookups in the hot path.
template <typename S>
class Model {
public:
    explicit Model(const Checkpoint& ckpt)
        : config_(ckpt.config), params_(tensors_from_checkpoint<S>(ckpt)) {
        config_.validate();
        bind();
    }

    const ModelConfig& config() const { return config_; }
    NamedTensors<S>& params() { return params_; }
    const NamedTensors<S>& params() const { return params_; }

    Checkpoint to_checkpoint(std::map<std::string, std::string> metadata = {}) const {
        return tensors_to_checkpoint(config_, params_, std::move(metadata));
    }

    // Runs the encoder. `cache` may be null in eval settings that do not
    // need a backward pass; dropout_rng is required only when mode==train
    // and dropout_prob > 0.
    ForwardResult<S> forward(const data::Batch& batch, Mode mode, ForwardCache<S>* cache,
                             Rng* dropout_rng = nullptr, bool want_mlm_logits = true) const {
        check_batch(batch);
        const int64_t B = static_cast<int64_t>(batch.rows);
        const int64_t L = static_cast<int64_t>(batch.cols);
        const int64_t BL = B * L;
        const int64_t H = config_.hidden_size;
        const bool use_dropout = (mode == Mode::train && config_.dropout_prob > 0.0);
        if (use_dropout && dropout_rng == nullptr) {
            throw ConfigError("train-mode forward with dropout requires an rng");
        }

        ForwardCache<S> local;
        ForwardCache<S>& cc = cache ? *cache : local;
        cc.batch = batch;
        cc.mode = mode;
        cc.dropout_active = use_dropout;
        cc.layers.assign(static_cast<size_t>(config_.num_layers), {});

        // --- embeddings ---
        Mat<S> x(BL, H);
        for (int64_t r = 0; r < BL; ++r) {
            const auto i = static_cast<size_t>(r);
            x.row(r) = word_emb_->row(batch.token_ids[i]) +
                       pos_emb_->row(batch.position_ids[i]) +
                       seg_emb_->row(batch.segment_ids[i]);
        }
        cc.emb_sum = x;
        layer_norm(x, *emb_gain_, *emb_bias_, cc.emb_ln);
        if (use_dropout) dropout(x, cc.emb_drop, *dropout_rng);

        // --- encoder layers ---
        const int64_t heads = config_.num_heads;
        const int64_t dh = config_.head_dim();
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (int64_t li = 0; li < config_.num_layers; ++li) {
            LayerCache<S>& lc = cc.layers[static_cast<size_t>(li)];
            const LayerRefs& w = layers_[static_cast<size_t>(li)];
            lc.input = x;

            lc.q = (x * *w.wq).rowwise() + w.bq->row(0);
            lc.k = (x * *w.wk).rowwise() + w.bk->row(0);
            lc.v = (x * *w.wv).rowwise() + w.bv->row(0);

            lc.context.resize(BL, H);
            lc.probs.assign(static_cast<size_t>(B * heads), {});
            for (int64_t b = 0; b < B; ++b) {
                Eigen::Matrix<S, 1, Eigen::Dynamic> key_bias(L);
                for (int64_t j = 0; j < L; ++j) {
                    key_bias(j) = batch.attention_mask[static_cast<size_t>(b * L + j)]
                                      ? S(0)
                                      : static_cast<S>(kMaskedScore);
                }
                for (int64_t h = 0; h < heads; ++h) {
                    auto Qb = lc.q.block(b * L, h * dh, L, dh);
                    auto Kb = lc.k.block(b * L, h * dh, L, dh);
                    auto Vb = lc.v.block(b * L, h * dh, L, dh);
                    Mat<S> scores = (Qb * Kb.transpose()) * scale;
                    scores.rowwise() += key_bias;
                    softmax_rows(scores);
                    lc.probs[static_cast<size_t>(b * heads + h)] = scores;
                    lc.context.block(b * L, h * dh, L, dh).noalias() = scores * Vb;
                }
            }

            Mat<S> attn = (lc.context * *w.wo).rowwise() + w.bo->row(0);
            if (use_dropout) dropout(attn, lc.attn_drop, *dropout_rng);
            attn += lc.input;
            layer_norm(attn, *w.attn_gain, *w.attn_bias, lc.attn_ln);
            lc.attn_out = attn;

            lc.ffn_pre = (attn * *w.w1).rowwise() + w.b1->row(0);
            lc.ffn_act = lc.ffn_pre.unaryExpr([](S v) { return act::gelu(v); });
            Mat<S> ffn = (lc.ffn_act * *w.w2).rowwise() + w.b2->row(0);
            if (use_dropout) dropout(ffn, lc.ffn_drop, *dropout_rng);
            ffn += attn;
            layer_norm(ffn, *w.ffn_gain, *w.ffn_bias, lc.ffn_ln);
            x = std::move(ffn);
        }
        cc.final_hidden = x;

        // --- pooler: tanh-affine over each example's [CLS] state ---
        cc.cls_hidden.resize(B, H);
        for (int64_t b = 0; b < B; ++b) cc.cls_hidden.row(b) = x.row(b * L);
        Mat<S> pooled = (cc.cls_hidden * *pooler_w_).rowwise() + pooler_b_->row(0);
        pooled = pooled.unaryExpr([](S v) { return static_cast<S>(std::tanh(static_cast<double>(v))); });
        cc.pooled = pooled;

        ForwardResult<S> out;
        out.pooled = pooled;

        // --- MLM head: transform + LN, logits tied to the word embedding ---
        cc.has_mlm = want_mlm_logits;
        if (want_mlm_logits) {
            cc.mlm_pre = (x * *mlm_w_).rowwise() + mlm_b_->row(0);
            cc.mlm_act = cc.mlm_pre.unaryExpr([](S v) { return act::gelu(v); });
            cc.mlm_hidden = cc.mlm_act;
            layer_norm(cc.mlm_hidden, *mlm_gain_, *mlm_bias_, cc.mlm_ln);
            out.mlm_logits = (cc.mlm_hidden * word_emb_->transpose()).rowwise() +
                             mlm_out_bias_->row(0);
        }
        return out;
    }

    // Accumulates exact gradients for every parameter into `grads`. Either
    // upstream gradient may be empty (zero): d_mlm_logits is BL x V,
    // d_pooled is B x H.
    void backward(const ForwardCache<S>& cc, const Mat<S>& d_mlm_logits, const Mat<S>& d_pooled,
                  NamedTensors<S>& grads) const {
        const data::Batch& batch = cc.batch;
        const int64_t B = static_cast<int64_t>(batch.rows);
        const int64_t L = static_cast<int64_t>(batch.cols);
        const int64_t BL = B * L;
        const int64_t H = config_.hidden_size;
        GradRefs g(grads, config_);

        Mat<S> dx = Mat<S>::Zero(BL, H);

        if (d_mlm_logits.size() > 0) {
            if (!cc.has_mlm) throw ConfigError("backward: forward ran without mlm logits");
            // logits = mlm_hidden * E^T + b
            g.mlm_out_bias->row(0) += d_mlm_logits.colwise().sum();
            g.word_emb->noalias() += d_mlm_logits.transpose() * cc.mlm_hidden;
            Mat<S> d_hidden = d_mlm_logits * *word_emb_;
            Mat<S> d_act(BL, H);
            layer_norm_backward(d_hidden, cc.mlm_ln, *mlm_gain_, *g.mlm_gain, *g.mlm_bias, d_act);
            Mat<S> d_pre = d_act.cwiseProduct(
                cc.mlm_pre.unaryExpr([](S v) { return act::gelu_grad(v); }));
            g.mlm_w->noalias() += cc.final_hidden.transpose() * d_pre;
            g.mlm_b->row(0) += d_pre.colwise().sum();
            dx.noalias() += d_pre * mlm_w_->transpose();
        }

        if (d_pooled.size() > 0) {
            // pooled = tanh(cls * Wp + bp)
            Mat<S> d_pre = d_pooled.cwiseProduct(
                cc.pooled.unaryExpr([](S v) { return S(1) - v * v; }));
            g.pooler_w->noalias() += cc.cls_hidden.transpose() * d_pre;
            g.pooler_b->row(0) += d_pre.colwise().sum();
            Mat<S> d_cls = d_pre * pooler_w_->transpose();
            for (int64_t b = 0; b < B; ++b) dx.row(b * L) += d_cls.row(b);
        }

        const int64_t heads = config_.num_heads;
        const int64_t dh = config_.head_dim();
        const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (int64_t li = config_.num_layers - 1; li >= 0; --li) {
            const LayerCache<S>& lc = cc.layers[static_cast<size_t>(li)];
            const LayerRefs& w = layers_[static_cast<size_t>(li)];
            const LayerGradRefs& gw = g.layers[static_cast<size_t>(li)];

            // LN2 over (attn_out + dropout(ffn))
            Mat<S> d_sum2(BL, config_.hidden_size);
            layer_norm_backward(dx, lc.ffn_ln, *w.ffn_gain, *gw.ffn_gain, *gw.ffn_bias, d_sum2);

            Mat<S> d_attn_out = d_sum2;  // residual branch
            Mat<S> d_ffn = d_sum2;
            if (cc.dropout_active) apply_drop_mask(d_ffn, lc.ffn_drop);
            gw.w2->noalias() += lc.ffn_act.transpose() * d_ffn;
            gw.b2->row(0) += d_ffn.colwise().sum();
            Mat<S> d_ffn_act = d_ffn * w.w2->transpose();
            Mat<S> d_ffn_pre = d_ffn_act.cwiseProduct(
                lc.ffn_pre.unaryExpr([](S v) { return act::gelu_grad(v); }));
            gw.w1->noalias() += lc.attn_out.transpose() * d_ffn_pre;
            gw.b1->row(0) += d_ffn_pre.colwise().sum();
            d_attn_out.noalias() += d_ffn_pre * w.w1->transpose();

            // LN1 over (input + dropout(attention))
            Mat<S> d_sum1(BL, config_.hidden_size);
            layer_norm_backward(d_attn_out, lc.attn_ln, *w.attn_gain, *gw.attn_gain,
                                *gw.attn_bias, d_sum1);

            Mat<S> d_input = d_sum1;  // residual branch
            Mat<S> d_attn = d_sum1;
            if (cc.dropout_active) apply_drop_mask(d_attn, lc.attn_drop);
            gw.wo->noalias() += lc.context.transpose() * d_attn;
            gw.bo->row(0) += d_attn.colwise().sum();
            Mat<S> d_context = d_attn * w.wo->transpose();

            Mat<S> d_q = Mat<S>::Zero(BL, config_.hidden_size);
            Mat<S> d_k = Mat<S>::Zero(BL, config_.hidden_size);
            Mat<S> d_v = Mat<S>::Zero(BL, config_.hidden_size);
            for (int64_t b = 0; b < B; ++b) {
                for (int64_t h = 0; h < heads; ++h) {
                    const Mat<S>& probs = lc.probs[static_cast<size_t>(b * heads + h)];
                    auto dCtx = d_context.block(b * L, h * dh, L, dh);
                    auto Qb = lc.q.block(b * L, h * dh, L, dh);
                    auto Kb = lc.k.block(b * L, h * dh, L, dh);
                    auto Vb = lc.v.block(b * L, h * dh, L, dh);

                    Mat<S> d_probs = dCtx * Vb.transpose();
                    d_v.block(b * L, h * dh, L, dh).noalias() = probs.transpose() * dCtx;

                    // softmax backward per row
                    Mat<S> d_scores = probs.cwiseProduct(d_probs);
                    const Eigen::Matrix<S, Eigen::Dynamic, 1> row_dots = d_scores.rowwise().sum();
                    d_scores = probs.cwiseProduct(d_probs.colwise() - row_dots);

                    d_q.block(b * L, h * dh, L, dh).noalias() = d_scores * Kb * scale;
                    d_k.block(b * L, h * dh, L, dh).noalias() = d_scores.transpose() * Qb * scale;
                }
            }

            gw.wq->noalias() += lc.input.transpose() * d_q;
            gw.bq->row(0) += d_q.colwise().sum();
            gw.wk->noalias() += lc.input.transpose() * d_k;
            gw.bk->row(0) += d_k.colwise().sum();
            gw.wv->noalias() += lc.input.transpose() * d_v;
            gw.bv->row(0) += d_v.colwise().sum();
            d_input.noalias() += d_q * w.wq->transpose();
            d_input.noalias() += d_k * w.wk->transpose();
            d_input.noalias() += d_v * w.wv->transpose();

            dx = std::move(d_input);
        }

        // embeddings
        if (cc.dropout_active) apply_drop_mask(dx, cc.emb_drop);
        Mat<S> d_emb_sum(BL, H);
        layer_norm_backward(dx, cc.emb_ln, *emb_gain_, *g.emb_gain, *g.emb_bias, d_emb_sum);
        for (int64_t r = 0; r < BL; ++r) {
            const auto i = static_cast<size_t>(r);
            g.word_emb->row(batch.token_ids[i]) += d_emb_sum.row(r);
            g.pos_emb->row(batch.position_ids[i]) += d_emb_sum.row(r);
            g.seg_emb->row(batch.segment_ids[i]) += d_emb_sum.row(r);
        }
    }

    // Attention probabilities for inspection/testing (cache from forward).
    static const Mat<S>& attention_probs(const ForwardCache<S>& cc, int64_t layer, int64_t example,
                                         int64_t head, int64_t num_heads) {
        return cc.layers.at(static_cast<size_t>(layer))
            .probs.at(static_cast<size_t>(example * num_heads + head));
    }

private:
    struct LayerRefs {
        const Mat<S>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        const Mat<S>*attn_gain, *attn_bias, *w1, *b1, *w2, *b2, *ffn_gain, *ffn_bias;
    };

    struct LayerGradRefs {
        Mat<S>*wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        Mat<S>*attn_gain, *attn_bias, *w1, *b1, *w2, *b2, *ffn_gain, *ffn_bias;
    };

    struct GradRefs {
        Mat<S>*word_emb, *pos_emb, *seg_emb, *emb_gain, *emb_bias;
        std::vector<LayerGradRefs> layers;
        Mat<S>*pooler_w, *pooler_b, *mlm_w, *mlm_b, *mlm_gain, *mlm_bias, *mlm_out_bias;

        GradRefs(NamedTensors<S>& t, const ModelConfig& c) {
            word_emb = &t.at("embeddings.word.weight");
            pos_emb = &t.at("embeddings.position.weight");
            seg_emb = &t.at("embeddings.segment.weight");
            emb_gain = &t.at("embeddings.norm.gain");
            emb_bias = &t.at("embeddings.norm.bias");
            for (int64_t i = 0; i < c.num_layers; ++i) {
                const std::string p = "layer." + std::to_string(i) + ".";
                LayerGradRefs l;
                l.wq = &t.at(p + "attention.query.weight");
                l.bq = &t.at(p + "attention.query.bias");
                l.wk = &t.at(p + "attention.key.weight");
                l.bk = &t.at(p + "attention.key.bias");
                l.wv = &t.at(p + "attention.value.weight");
                l.bv = &t.at(p + "attention.value.bias");
                l.wo = &t.at(p + "attention.output.weight");
                l.bo = &t.at(p + "attention.output.bias");
                l.attn_gain = &t.at(p + "attention.norm.gain");
                l.attn_bias = &t.at(p + "attention.norm.bias");
                l.w1 = &t.at(p + "ffn.inner.weight");
                l.b1 = &t.at(p + "ffn.inner.bias");
                l.w2 = &t.at(p + "ffn.output.weight");
                l.b2 = &t.at(p + "ffn.output.bias");
                l.ffn_gain = &t.at(p + "ffn.norm.gain");
                l.ffn_bias = &t.at(p + "ffn.norm.bias");
                layers.push_back(l);
            }
            pooler_w = &t.at("pooler.weight");
            pooler_b = &t.at("pooler.bias");
            mlm_w = &t.at("mlm.transform.weight");
            mlm_b = &t.at("mlm.transform.bias");
            mlm_gain = &t.at("mlm.norm.gain");
            mlm_bias = &t.at("mlm.norm.bias");
            mlm_out_bias = &t.at("mlm.output.bias");
        }
    };

    void bind() {
        word_emb_ = &params_.at("embeddings.word.weight");
        pos_emb_ = &params_.at("embeddings.position.weight");
        seg_emb_ = &params_.at("embeddings.segment.weight");
        emb_gain_ = &params_.at("embeddings.norm.gain");
        emb_bias_ = &params_.at("embeddings.norm.bias");
        layers_.clear();
        for (int64_t i = 0; i < config_.num_layers; ++i) {
            const std::string p = "layer." + std::to_string(i) + ".";
            LayerRefs l;
            l.wq = &params_.at(p + "attention.query.weight");
            l.bq = &params_.at(p + "attention.query.bias");
            l.wk = &params_.at(p + "attention.key.weight");
            l.bk = &params_.at(p + "attention.key.bias");
            l.wv = &params_.at(p + "attention.value.weight");
            l.bv = &params_.at(p + "attention.value.bias");
            l.wo = &params_.at(p + "attention.output.weight");
            l.bo = &params_.at(p + "attention.output.bias");
            l.attn_gain = &params_.at(p + "attention.norm.gain");
            l.attn_bias = &params_.at(p + "attention.norm.bias");
            l.w1 = &params_.at(p + "ffn.inner.weight");
            l.b1 = &params_.at(p + "ffn.inner.bias");
            l.w2 = &params_.at(p + "ffn.output.weight");
            l.b2 = &params_.at(p + "ffn.output.bias");
            l.ffn_gain = &params_.at(p + "ffn.norm.gain");
            l.ffn_bias = &params_.at(p + "ffn.norm.bias");
            layers_.push_back(l);
        }
        pooler_w_ = &params_.at("pooler.weight");
        pooler_b_ = &params_.at("pooler.bias");
        mlm_w_ = &params_.at("mlm.transform.weight");
        mlm_b_ = &params_.at("mlm.transform.bias");
        mlm_gain_ = &params_.at("mlm.norm.gain");
        mlm_bias_ = &params_.at("mlm.norm.bias");
        mlm_out_bias_ = &params_.at("mlm.output.bias");
    }

    void check_batch(const data::Batch& batch) const {
        if (batch.rows == 0 || batch.cols == 0) throw DataError("forward: empty batch");
        for (int32_t id : batch.token_ids) {
            if (id < 0 || id >= config_.vocab_size) {
                throw DataError("forward: token id " + std::to_string(id) + " out of range");
            }
        }
        for (int32_t p : batch.position_ids) {
            if (p < 0 || p >= config_.max_positions) {
                throw DataError("forward: position " + std::to_string(p) + " out of range");
            }
        }
        for (int32_t s : batch.segment_ids) {
            if (s < 0 || s >= config_.num_segments) {
                throw DataError("forward: segment " + std::to_string(s) + " out of range");
            }
        }
    }

    // In-place per-row layer norm; fills the cache.
    void layer_norm(Mat<S>& x, const Mat<S>& gain, const Mat<S>& bias,
                    LayerNormCache<S>& cache) const {
        const int64_t rows = x.rows(), cols = x.cols();
        cache.xhat.resize(rows, cols);
        cache.rstd.resize(static_cast<size_t>(rows));
        const S eps = static_cast<S>(config_.layer_norm_eps);
        for (int64_t r = 0; r < rows; ++r) {
            const S mean = x.row(r).mean();
            const S var = (x.row(r).array() - mean).square().sum() / static_cast<S>(cols);
            const S rstd = S(1) / std::sqrt(var + eps);
            cache.rstd[static_cast<size_t>(r)] = rstd;
            cache.xhat.row(r) = (x.row(r).array() - mean) * rstd;
            x.row(r) = cache.xhat.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
        }
    }

    // dx for y = xhat*gain + bias given dy; accumulates dgain/dbias.
    void layer_norm_backward(const Mat<S>& dy, const LayerNormCache<S>& cache,
                             const Mat<S>& gain, Mat<S>& dgain, Mat<S>& dbias, Mat<S>& dx) const {
        const int64_t rows = dy.rows(), cols = dy.cols();
        dx.resize(rows, cols);
        for (int64_t r = 0; r < rows; ++r) {
            const auto xhat = cache.xhat.row(r).array();
            const auto gy = dy.row(r).array() * gain.row(0).array();
            const S mean_gy = gy.mean();
            const S mean_gy_xhat = (gy * xhat).mean();
            dx.row(r) = (cache.rstd[static_cast<size_t>(r)] *
                         (gy - mean_gy - xhat * mean_gy_xhat))
                            .matrix();
            dgain.row(0).array() += dy.row(r).array() * xhat;
            dbias.row(0) += dy.row(r);
        }
    }

    static void softmax_rows(Mat<S>& m) {
        for (int64_t r = 0; r < m.rows(); ++r) {
            const S mx = m.row(r).maxCoeff();
            m.row(r) = (m.row(r).array() - mx).exp();
            m.row(r) /= m.row(r).sum();
        }
    }

    // Inverted dropout with the configured probability; fills `mask`.
    void dropout(Mat<S>& x, std::vector<uint8_t>& mask, Rng& rng) const {
        const double keep = 1.0 - config_.dropout_prob;
        const S inv = static_cast<S>(1.0 / keep);
        mask.resize(static_cast<size_t>(x.rows() * x.cols()));
        size_t idx = 0;
        for (int64_t r = 0; r < x.rows(); ++r) {
            for (int64_t c = 0; c < x.cols(); ++c, ++idx) {
                if (uniform_real(rng) < keep) {
                    mask[idx] = 1;
                    x(r, c) *= inv;
                } else {
                    mask[idx] = 0;
                    x(r, c) = S(0);
                }
            }
        }
    }

    void apply_drop_mask(Mat<S>& g, const std::vector<uint8_t>& mask) const {
        const S inv = static_cast<S>(1.0 / (1.0 - config_.dropout_prob));
        size_t idx = 0;
        for (int64_t r = 0; r < g.rows(); ++r) {
            for (int64_t c = 0; c < g.cols(); ++c, ++idx) {
                g(r, c) = mask[idx] ? g(r, c) * inv : S(0);
            }
        }
    }

    ModelConfig config_;
    NamedTensors<S> params_;
    const Mat<S>*word_emb_, *pos_emb_, *seg_emb_, *emb_gain_, *emb_bias_;
    std::vector<LayerRefs> layers_;
    const Mat<S>*pooler_w_, *pooler_b_, *mlm_w_, *mlm_b_, *mlm_gain_, *mlm_bias_, *mlm_out_bias_;
};

}  // namespace bertkit::nn
