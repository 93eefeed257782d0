#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>
#include <string>
#include <vector>

#include "bertkit/train/finetune.hpp"
#include "bertkit/train/optimizer.hpp"
#include "bertkit/train/pretrain.hpp"
#include "bertkit/train/schedule.hpp"
#include "helpers/small_model.hpp"
#include "helpers/tmpdir.hpp"

using namespace bertkit;
using namespace bertkit::train;

namespace {

TrainConfig paper_config() {
    TrainConfig cfg;
    cfg.total_steps = 100000;
    return cfg;
}

// Tiny memorizable corpus written to one-sentence-per-line files.
std::vector<std::string> toy_sentences(size_t n, size_t vocab_words, uint64_t seed,
                                       size_t len = 8) {
    auto rng = make_rng(seed);
    std::vector<std::string> out;
    for (size_t i = 0; i < n; ++i) {
        std::string s;
        for (size_t w = 0; w < len; ++w) {
            if (w) s += ' ';
            s += "w" + std::to_string(5 + uniform_index(rng, vocab_words));
        }
        out.push_back(s);
    }
    return out;
}

}  // namespace

TEST_CASE("lr schedule endpoints and continuity") {
    auto cfg = paper_config();
    CHECK(lr_at(0, cfg) == 0.0);
    CHECK(lr_at(10000, cfg) == doctest::Approx(1e-5).epsilon(1e-12));
    CHECK(lr_at(cfg.total_steps, cfg) == 0.0);

    // continuity at the warmup boundary
    const double left = lr_at(cfg.warmup_steps - 1, cfg) +
                        cfg.base_lr / static_cast<double>(cfg.warmup_steps);
    const double right = lr_at(cfg.warmup_steps, cfg);
    CHECK(std::abs(left - right) < 1e-12);
    CHECK(std::abs(right - cfg.base_lr) < 1e-18);

    CHECK(lr_at(5000, cfg) == doctest::Approx(0.5e-5));
    CHECK_THROWS_AS(lr_at(-1, cfg), ConfigError);
    CHECK_THROWS_AS(lr_at(cfg.total_steps + 1, cfg), ConfigError);
}

TEST_CASE("adamw single steps") {
    auto cfg = paper_config();

    SUBCASE("zero gradients and zero decay leave parameters unchanged") {
        cfg.weight_decay = 0.0;
        nn::NamedTensors<double> params{{"w", nn::Mat<double>::Constant(2, 2, 1.5)}};
        nn::NamedTensors<double> grads{{"w", nn::Mat<double>::Zero(2, 2)}};
        auto state = AdamWState<double>::zeros_like(params);
        adamw_step(params, grads, state, 1, 1e-3, cfg);
        CHECK(params.at("w")(0, 0) == 1.5);
        CHECK(params.at("w")(1, 1) == 1.5);
    }
    SUBCASE("first step from zero moments matches the closed form") {
        cfg.weight_decay = 0.0;
        const double g = 0.37, lr = 0.01, p0 = 1.25;
        nn::NamedTensors<double> params{{"w", nn::Mat<double>::Constant(1, 1, p0)}};
        nn::NamedTensors<double> grads{{"w", nn::Mat<double>::Constant(1, 1, g)}};
        auto state = AdamWState<double>::zeros_like(params);
        adamw_step(params, grads, state, 1, lr, cfg);
        const double expected = p0 - lr * g / (std::abs(g) + cfg.eps);
        CHECK(params.at("w")(0, 0) == doctest::Approx(expected).epsilon(1e-12));
    }
    SUBCASE("decay-only step shrinks decayed parameters by 1 - lr*wd") {
        const double lr = 0.01, p0 = 2.0;
        nn::NamedTensors<double> params{{"block.weight", nn::Mat<double>::Constant(1, 1, p0)},
                                        {"block.norm.gain", nn::Mat<double>::Constant(1, 1, p0)},
                                        {"block.bias", nn::Mat<double>::Constant(1, 1, p0)}};
        nn::NamedTensors<double> grads{{"block.weight", nn::Mat<double>::Zero(1, 1)},
                                       {"block.norm.gain", nn::Mat<double>::Zero(1, 1)},
                                       {"block.bias", nn::Mat<double>::Zero(1, 1)}};
        auto state = AdamWState<double>::zeros_like(params);
        adamw_step(params, grads, state, 1, lr, cfg);
        CHECK(params.at("block.weight")(0, 0) ==
              doctest::Approx(p0 * (1.0 - lr * cfg.weight_decay)).epsilon(1e-15));
        CHECK(params.at("block.norm.gain")(0, 0) == p0);  // excluded from decay
        CHECK(params.at("block.bias")(0, 0) == p0);       // excluded from decay
    }
    SUBCASE("nan gradients abort with the step number") {
        nn::NamedTensors<double> params{{"w", nn::Mat<double>::Constant(1, 1, 1.0)}};
        nn::NamedTensors<double> grads{{"w", nn::Mat<double>::Constant(1, 1, std::nan(""))}};
        auto state = AdamWState<double>::zeros_like(params);
        CHECK_THROWS_WITH_AS(adamw_step(params, grads, state, 17, 1e-3, cfg),
                             doctest::Contains("17"), NumericError);
    }
}

TEST_CASE("gradient clipping") {
    SUBCASE("norm below the cap is untouched") {
        nn::NamedTensors<double> grads{{"a", nn::Mat<double>::Constant(1, 1, 0.03)},
                                       {"b", nn::Mat<double>::Constant(1, 1, 0.04)}};
        const double pre = clip_gradients(grads, 0.1);
        CHECK(pre == doctest::Approx(0.05).epsilon(1e-12));
        CHECK(grads.at("a")(0, 0) == 0.03);
    }
    SUBCASE("norm above the cap is scaled onto it") {
        nn::NamedTensors<double> grads{{"a", nn::Mat<double>::Constant(1, 1, 0.6)},
                                       {"b", nn::Mat<double>::Constant(1, 1, 0.8)}};
        const double pre = clip_gradients(grads, 0.1);
        CHECK(pre == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(grads.at("a")(0, 0) == doctest::Approx(0.06).epsilon(1e-7));
        double post = std::sqrt(grads.at("a")(0, 0) * grads.at("a")(0, 0) +
                                grads.at("b")(0, 0) * grads.at("b")(0, 0));
        CHECK(std::abs(post - 0.1) < 1e-7);
    }
    SUBCASE("random tensors: post-clip norm = min(pre, cap)") {
        auto rng = make_rng(5);
        for (int trial = 0; trial < 20; ++trial) {
            nn::NamedTensors<double> grads;
            for (int t = 0; t < 4; ++t) {
                nn::Mat<double> m(3, 5);
                for (int r = 0; r < 3; ++r) {
                    for (int c = 0; c < 5; ++c) m(r, c) = normal(rng) * 0.05;
                }
                grads.emplace("t" + std::to_string(t), std::move(m));
            }
            // independent norm recomputation
            double sq = 0.0;
            for (const auto& [n, m] : grads) {
                for (int r = 0; r < m.rows(); ++r) {
                    for (int c = 0; c < m.cols(); ++c) sq += m(r, c) * m(r, c);
                }
            }
            const double pre_oracle = std::sqrt(sq);
            const double pre = clip_gradients(grads, 0.1);
            CHECK(pre == doctest::Approx(pre_oracle).epsilon(1e-9));
            double post_sq = 0.0;
            for (const auto& [n, m] : grads) {
                for (int r = 0; r < m.rows(); ++r) {
                    for (int c = 0; c < m.cols(); ++c) post_sq += m(r, c) * m(r, c);
                }
            }
            CHECK(std::sqrt(post_sq) ==
                  doctest::Approx(std::min(pre_oracle, 0.1)).epsilon(1e-6));
        }
    }
    SUBCASE("clipping is idempotent") {
        nn::NamedTensors<double> grads{{"a", nn::Mat<double>::Constant(2, 2, 0.9)}};
        clip_gradients(grads, 0.1);
        const auto once = grads;
        clip_gradients(grads, 0.1);
        CHECK(grads.at("a") == once.at("a"));
    }
}

namespace {

struct ToyPretrain {
    text::Vocab vocab = testutil::vocab_of_size(45);
    StageData data;
    std::vector<size_t> indices;

    explicit ToyPretrain(size_t n_sentences, uint64_t seed) {
        data.objective = Objective::mlm;
        for (const auto& s : toy_sentences(n_sentences, 38, seed)) {
            data.sentences.push_back(vocab.encode(s));
        }
        indices.resize(data.sentences.size());
        std::iota(indices.begin(), indices.end(), size_t{0});
    }
};

}  // namespace

TEST_CASE("pretrain loss decreases and reruns are bit-identical") {
    ToyPretrain toy(32, 11);
    const auto cfg_model = testutil::small_config(2, 32, 2, 64, 45, 32);
    const auto init = nn::init_model(cfg_model, 3);

    TrainConfig cfg;
    cfg.base_lr = 2e-3;
    cfg.warmup_steps = 20;
    cfg.total_steps = 150;
    cfg.weight_decay = 0.01;
    cfg.clip_norm = 1.0;
    cfg.batch_size = 8;
    cfg.seed = 17;
    cfg.validation_every = 50;
    cfg.patience = 10;

    data::MaskingConfig mask;
    const auto r1 = pretrain<float>(toy.data, toy.indices, toy.indices, toy.vocab, init, cfg,
                                    mask, "toy", 16);
    const auto r2 = pretrain<float>(toy.data, toy.indices, toy.indices, toy.vocab, init, cfg,
                                    mask, "toy", 16);

    REQUIRE(r1.log.size() == r2.log.size());
    for (size_t i = 0; i < r1.log.size(); ++i) {
        CHECK(r1.log[i].step == r2.log[i].step);
        CHECK(r1.log[i].lr == r2.log[i].lr);
        // bit-identical, not approximately equal
        CHECK(std::memcmp(&r1.log[i].train_loss, &r2.log[i].train_loss, sizeof(double)) == 0);
        CHECK(std::memcmp(&r1.log[i].val_loss, &r2.log[i].val_loss, sizeof(double)) == 0);
    }

    double early = 0.0, late = 0.0;
    for (size_t i = 1; i <= 20; ++i) early += r1.log[i].train_loss;
    for (size_t i = r1.log.size() - 20; i < r1.log.size(); ++i) late += r1.log[i].train_loss;
    CHECK(late < early);

    testutil::TmpDir tmp;
    save_loss_log(r1.log, tmp.file("log1.csv"));
    save_loss_log(r2.log, tmp.file("log2.csv"));
    CHECK(testutil::read_file(tmp.file("log1.csv")) == testutil::read_file(tmp.file("log2.csv")));
}

TEST_CASE("patience-based early stopping") {
    ToyPretrain toy(16, 13);
    const auto cfg_model = testutil::small_config(1, 16, 2, 32, 45, 32);
    const auto init = nn::init_model(cfg_model, 5);
    data::MaskingConfig mask;

    SUBCASE("an effectively frozen model stops after patience evaluations") {
        TrainConfig cfg;
        cfg.base_lr = 1e-13;  // updates are numerically negligible
        cfg.warmup_steps = 1;
        cfg.total_steps = 500;
        cfg.batch_size = 4;
        cfg.seed = 19;
        cfg.validation_every = 10;
        cfg.patience = 3;
        const auto r = pretrain<float>(toy.data, toy.indices, toy.indices, toy.vocab, init, cfg,
                                       mask, "frozen", 16);
        CHECK(r.early_stopped);
        CHECK(r.steps_run == 30);  // 3 evaluations with no improvement
        CHECK(r.best_step == 0);
    }
    SUBCASE("an improving run with patience 1 does not stop early") {
        TrainConfig cfg;
        cfg.base_lr = 2e-3;
        cfg.warmup_steps = 10;
        cfg.total_steps = 120;
        cfg.clip_norm = 1.0;
        cfg.batch_size = 8;
        cfg.seed = 23;
        cfg.validation_every = 40;
        cfg.patience = 1;
        const auto r = pretrain<float>(toy.data, toy.indices, toy.indices, toy.vocab, init, cfg,
                                       mask, "improving", 16);
        CHECK_FALSE(r.early_stopped);
        CHECK(r.steps_run == 120);
    }
}

TEST_CASE("stage plans run in sequence and preserve validation continuity") {
    testutil::TmpDir tmp;
    const auto vocab = testutil::vocab_of_size(45);
    {
        std::string c1, c2;
        for (const auto& s : toy_sentences(24, 30, 31)) c1 += s + "\n";
        for (const auto& s : toy_sentences(20, 38, 37)) c2 += s + "\n";
        testutil::write_file(tmp.file("c1.txt"), c1);
        testutil::write_file(tmp.file("c2.txt"), c2);
        std::string c3;
        for (const auto& s : toy_sentences(18, 30, 41, 5)) {
            c3 += s + "\t" + s + "\n";  // trivially aligned pairs
        }
        testutil::write_file(tmp.file("c3.tsv"), c3);
    }

    StagePlan plan;
    auto stage_cfg = [](uint64_t seed) {
        TrainConfig cfg;
        cfg.base_lr = 1e-3;
        cfg.warmup_steps = 5;
        cfg.total_steps = 40;
        cfg.clip_norm = 1.0;
        cfg.batch_size = 8;
        cfg.seed = seed;
        cfg.validation_every = 20;
        cfg.patience = 5;
        return cfg;
    };
    StageSpec s1;
    s1.tag = "base";
    s1.objective = Objective::mlm;
    s1.corpora = {tmp.file("c1.txt")};
    s1.train = stage_cfg(101);
    s1.validation_fraction = 0.1;
    StageSpec s2;
    s2.tag = "+C2";
    s2.objective = Objective::mlm;
    s2.corpora = {tmp.file("c2.txt")};
    s2.train = stage_cfg(102);
    s2.validation_fraction = 0.1;
    StageSpec s3;
    s3.tag = "+C2+C3";
    s3.objective = Objective::tlm;
    s3.corpora = {tmp.file("c3.tsv")};
    s3.train = stage_cfg(103);
    s3.validation_fraction = 0.1;
    plan.stages = {s1, s2, s3};

    const auto cfg_model = testutil::small_config(1, 16, 2, 32, 45, 32);
    const auto init = nn::init_model(cfg_model, 7);

    SUBCASE("empty plan returns the initial checkpoint") {
        StagePlan empty;
        const auto result = run_stage_plan<float>(empty, init, vocab, {}, 24);
        CHECK(result.stages.empty());
        CHECK(result.final.tensors.at("pooler.weight").data ==
              init.tensors.at("pooler.weight").data);
    }
    SUBCASE("three stages chain checkpoints and keep step-0 continuity") {
        const auto result = run_stage_plan<float>(plan, init, vocab, {}, 24);
        REQUIRE(result.stages.size() == 3);
        CHECK(result.stages[0].tag == "base");
        CHECK(result.stages[2].run.best.metadata.at("objective") == "tlm");

        // stage k+1's step-0 validation loss equals an independent evaluation
        // of stage k's best checkpoint on stage k+1's validation stream
        const auto stage2_data = encode_mlm_corpus({tmp.file("c2.txt")}, vocab, 24);
        const auto split = split_for_validation(stage2_data.size(), 0.1, 102);
        data::MaskingConfig mask;
        mask.seed = 102;
        const auto val_batches = detail::build_validation_batches(
            stage2_data, vocab, split.validation, mask, derive_seed(102, "val-stream"), 24, 8);
        nn::Model<float> prev(result.stages[0].run.best);
        const double expected = detail::validation_loss(prev, val_batches);
        const double got = result.stages[1].run.step0_val_loss;
        CHECK(std::memcmp(&expected, &got, sizeof(double)) == 0);
    }
}

TEST_CASE("finetune learns a separable task") {
    const auto vocab = testutil::vocab_of_size(45);
    auto rng = make_rng(53);
    auto make_items = [&](size_t n) {
        eval::TaskData items;
        for (size_t i = 0; i < n; ++i) {
            const bool positive = (i % 2 == 0);
            std::string text = positive ? "w5" : "w6";
            const size_t len = 3 + uniform_index(rng, 4);
            for (size_t w = 0; w < len; ++w) {
                text += " w" + std::to_string(10 + uniform_index(rng, 20));
            }
            eval::TaskItem item;
            item.text_a = text;
            item.label = positive ? 1 : 0;
            items.push_back(item);
        }
        return items;
    };
    const auto train_items = make_items(200);
    const auto dev_items = make_items(60);

    eval::TaskSpec spec;
    spec.name = "toy2";
    spec.head_kind = nn::HeadKind::single_class;
    spec.num_labels = 2;
    spec.metric = eval::Metric::accuracy;
    spec.input_arity = eval::InputArity::single;

    const auto cfg_model = testutil::small_config(1, 32, 2, 64, 45, 32);
    const auto init = nn::init_model(cfg_model, 61);
    TrainConfig cfg;
    cfg.base_lr = 1e-3;
    cfg.clip_norm = 1.0;
    cfg.batch_size = 16;
    cfg.seed = 67;
    const auto result = finetune<float>(spec, train_items, dev_items, init, vocab, cfg, 10, 24);
    CHECK(result.best_metric >= 0.95);
    CHECK(result.history.size() == 10);
}

TEST_CASE("finetune regression and multi-label shapes") {
    const auto vocab = testutil::vocab_of_size(45);
    const auto cfg_model = testutil::small_config(1, 16, 2, 32, 45, 32);
    const auto init = nn::init_model(cfg_model, 71);
    TrainConfig cfg;
    cfg.base_lr = 2e-3;
    cfg.clip_norm = 1.0;
    cfg.batch_size = 8;
    cfg.seed = 73;

    SUBCASE("constant-target regression converges below 1e-3") {
        eval::TaskSpec spec;
        spec.name = "reg";
        spec.head_kind = nn::HeadKind::regression;
        spec.num_labels = 1;
        spec.metric = eval::Metric::pearson;
        eval::TaskData items;
        auto rng = make_rng(79);
        for (int i = 0; i < 80; ++i) {
            eval::TaskItem item;
            item.text_a = "w" + std::to_string(7 + uniform_index(rng, 30));
            item.target = 0.5;
            items.push_back(item);
        }
        cfg.base_lr = 5e-3;
        // constant gold makes pearson undefined; train loss is the check
        eval::TaskData dev(items.begin(), items.begin() + 8);
        bool pearson_error = false;
        try {
            finetune<float>(spec, items, dev, init, vocab, cfg, 10, 16);
        } catch (const DataError&) {
            pearson_error = true;  // zero-variance gold is a defined error
        }
        CHECK(pearson_error);

        // vary the dev targets slightly so the metric is defined, then
        // check the training loss drops below 1e-3
        eval::TaskData dev2 = dev;
        dev2[0].target = 0.45;
        dev2[1].target = 0.55;
        const auto result = finetune<float>(spec, items, dev2, init, vocab, cfg, 10, 16);
        CHECK(result.history.back().train_loss < 1e-3);
    }
    SUBCASE("multi-label head dimension matches the label count") {
        eval::TaskSpec spec;
        spec.name = "ml";
        spec.head_kind = nn::HeadKind::multi_label;
        spec.num_labels = 3;
        spec.metric = eval::Metric::jaccard;
        eval::TaskData items;
        auto rng = make_rng(83);
        for (int i = 0; i < 24; ++i) {
            eval::TaskItem item;
            item.text_a = "w" + std::to_string(7 + uniform_index(rng, 30));
            if (i % 2) item.label_set.push_back(0);
            if (i % 3) item.label_set.push_back(2);
            items.push_back(item);
        }
        const auto result = finetune<float>(spec, items, items, init, vocab, cfg, 2, 16);
        CHECK(result.head.output_weight.cols() == 3);
        CHECK(result.head.output_bias.cols() == 3);
        CHECK(result.head.kind == nn::HeadKind::multi_label);
    }
}

TEST_CASE("label outside the declared space is rejected with a row index") {
    testutil::TmpDir tmp;
    testutil::write_file(tmp.file("bad.tsv"), "text\tlabel\nhello\t0\nworld\t7\n");
    eval::TaskSpec spec;
    spec.name = "t";
    spec.head_kind = nn::HeadKind::single_class;
    spec.num_labels = 2;
    spec.metric = eval::Metric::f1;
    CHECK_THROWS_WITH_AS(eval::load_task_tsv(tmp.file("bad.tsv"), spec),
                         doctest::Contains("row 2"), DataError);
}
