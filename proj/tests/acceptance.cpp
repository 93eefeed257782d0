// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exits nonzero on any failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bertkit/data/examples.hpp"
#include "bertkit/eval/metrics.hpp"
#include "bertkit/nn/checkpoint.hpp"
#include "bertkit/nn/encoder.hpp"
#include "bertkit/nn/heads.hpp"
#include "bertkit/nn/losses.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/cleaning.hpp"
#include "bertkit/text/dedup.hpp"
#include "bertkit/text/wordpiece.hpp"
#include "bertkit/train/finetune.hpp"
#include "bertkit/train/optimizer.hpp"
#include "bertkit/train/pretrain.hpp"
#include "bertkit/train/schedule.hpp"
#include "helpers/dedup_oracle.hpp"
#include "helpers/gradcheck.hpp"
#include "helpers/small_model.hpp"
#include "helpers/tmpdir.hpp"

using namespace bertkit;
namespace fs = std::filesystem;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

int run_cli(const std::string& args, const std::string& log_path) {
    const std::string cmd = std::string(BERTKIT_CLI_PATH) + " " + args + " > " + log_path +
                            " 2>&1";
    const int status = std::system(cmd.c_str());
    return status;
}

// ---------------------------------------------------------------------------
// 1. dedup oracle equivalence on randomized corpora, including the CLI path
// ---------------------------------------------------------------------------

std::vector<text::SentenceRecord> planted_corpus(Rng& rng, size_t n) {
    std::vector<text::SentenceRecord> corpus;
    std::vector<std::string> bases;
    while (corpus.size() < n) {
        const double roll = uniform_real(rng);
        if (roll < 0.55 || bases.empty()) {
            const size_t len = 2 + uniform_index(rng, 22);
            std::string s;
            for (size_t i = 0; i < len; ++i) {
                if (i) s += ' ';
                s += "t" + std::to_string(uniform_index(rng, 90));
            }
            bases.push_back(s);
            corpus.push_back({s, "c", text::Stage::C1});
        } else if (roll < 0.8) {
            corpus.push_back({bases[uniform_index(rng, bases.size())], "c", text::Stage::C1});
        } else {
            std::string s = bases[uniform_index(rng, bases.size())];
            const size_t cut = s.find(' ');
            if (cut != std::string::npos) {
                s = "x" + std::to_string(uniform_index(rng, 9)) + s.substr(cut);
            }
            corpus.push_back({s, "c", text::Stage::C1});
        }
    }
    return corpus;
}

void criterion_dedup_oracle(std::ostream& detail) {
    text::DedupConfig cfg;  // window 10, threshold 0.7
    auto rng = make_rng(1001);
    size_t keep_one_cases = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const size_t n = 100 + uniform_index(rng, 901);  // up to ~1000 sentences
        const auto corpus = planted_corpus(rng, n);
        const auto [kept, report] = text::dedup_corpus(corpus, cfg);
        const auto expected = testutil::oracle_dedup(corpus, cfg.window_size, cfg.ratio_threshold);
        require(kept.size() == expected.size(),
                "trial " + std::to_string(trial) + ": kept " + std::to_string(kept.size()) +
                    " vs oracle " + std::to_string(expected.size()));
        for (size_t i = 0; i < kept.size(); ++i) {
            require(kept[i].text == expected[i].text,
                    "trial " + std::to_string(trial) + ": divergence at position " +
                        std::to_string(i));
        }
        keep_one_cases += report.kept_duplicate_exemplar;
    }
    require(keep_one_cases > 0, "no exact-duplicate keep-one cases were exercised");

    // same check through the CLI
    testutil::TmpDir tmp;
    const auto corpus = planted_corpus(rng, 400);
    {
        std::ofstream out(tmp.file("in.txt"), std::ios::binary);
        for (const auto& r : corpus) out << r.text << '\n';
    }
    const int rc = run_cli("dedup --window 10 --threshold 0.7 --in " + tmp.file("in.txt") +
                               " --out " + tmp.file("out.txt") + " --report " +
                               tmp.file("report.json"),
                           tmp.file("cli.log"));
    require(rc == 0, "dedup CLI exited with " + std::to_string(rc));
    std::vector<std::string> cli_kept;
    {
        std::ifstream in(tmp.file("out.txt"), std::ios::binary);
        std::string line;
        while (std::getline(in, line)) cli_kept.push_back(line);
    }
    const auto expected = testutil::oracle_dedup(corpus, 10, 0.7);
    require(cli_kept.size() == expected.size(), "CLI kept count differs from oracle");
    for (size_t i = 0; i < cli_kept.size(); ++i) {
        require(cli_kept[i] == expected[i].text, "CLI output differs from oracle at " +
                                                     std::to_string(i));
    }
    detail << "50 corpora + CLI fixture, " << keep_one_cases << " keep-one survivors";
}

// ---------------------------------------------------------------------------
// 2. masking statistics over 10,000 examples of length 200
// ---------------------------------------------------------------------------

void criterion_masking_stats(std::ostream& detail) {
    const auto vocab = testutil::vocab_of_size(300);
    data::MaskingConfig cfg;  // 0.15 / 0.90 / 0.10
    std::vector<int32_t> ids;
    for (int i = 0; i < 200; ++i) {
        ids.push_back(static_cast<int32_t>(5 + i % (vocab.size() - 5)));
    }
    data::MaskingStats stats;
    for (int i = 0; i < 10000; ++i) {
        auto rng = make_rng(derive_seed(2002, "acc-mask", static_cast<uint64_t>(i)));
        data::build_mlm_example(ids, vocab, cfg, rng, 256, &stats);
    }
    const double selected = static_cast<double>(stats.selected) /
                            static_cast<double>(stats.candidates);
    const double mask_share = static_cast<double>(stats.masked) /
                              static_cast<double>(stats.selected);
    const double random_share = static_cast<double>(stats.randomized) /
                                static_cast<double>(stats.selected);
    require(selected > 0.14 && selected < 0.16,
            "selected fraction " + std::to_string(selected) + " outside [0.14, 0.16]");
    require(mask_share > 0.88 && mask_share < 0.92,
            "mask share " + std::to_string(mask_share) + " outside [0.88, 0.92]");
    require(random_share > 0.08 && random_share < 0.12,
            "random share " + std::to_string(random_share) + " outside [0.08, 0.12]");
    require(stats.masked + stats.randomized == stats.selected,
            "keep-unchanged events detected: selected positions must be masked or randomized");
    detail << "selected " << selected << ", mask " << mask_share << ", random " << random_share
           << ", keep-unchanged 0";
}

// ---------------------------------------------------------------------------
// 3. TLM layout on 1,000 random pairs
// ---------------------------------------------------------------------------

void criterion_tlm_layout(std::ostream& detail) {
    const auto vocab = testutil::vocab_of_size(120);
    data::MaskingConfig cfg;
    auto rng = make_rng(3003);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t m = 1 + uniform_index(rng, 60);
        const size_t n = 1 + uniform_index(rng, 60);
        std::vector<int32_t> src, tgt;
        for (size_t i = 0; i < m; ++i) {
            src.push_back(static_cast<int32_t>(5 + uniform_index(rng, vocab.size() - 5)));
        }
        for (size_t i = 0; i < n; ++i) {
            tgt.push_back(static_cast<int32_t>(5 + uniform_index(rng, vocab.size() - 5)));
        }
        auto ex_rng = make_rng(derive_seed(3003, "tlm", static_cast<uint64_t>(trial)));
        const auto ex = data::build_tlm_example(src, tgt, vocab, cfg, ex_rng, 256);

        size_t zeros = 0;
        for (int32_t p : ex.position_ids) zeros += (p == 0);
        require(zeros == 2, "expected exactly two zero positions, got " + std::to_string(zeros));

        size_t first_sep = 0;
        while (ex.token_ids[first_sep] != vocab.specials().sep) ++first_sep;
        require(first_sep == m + 1, "first [SEP] misplaced");
        for (size_t i = 0; i < ex.length(); ++i) {
            const int32_t want = (i <= first_sep) ? 0 : 1;
            require(ex.segment_ids[i] == want, "segment boundary must sit at first [SEP]+1");
        }
        require(ex.position_ids[first_sep + 1] == 0, "target positions must restart at 0");
        for (size_t i = 1; i < ex.length(); ++i) {
            if (i == first_sep + 1) continue;  // the reset point
            require(ex.position_ids[i] == ex.position_ids[i - 1] + 1,
                    "positions must increase within a segment");
        }
    }
    detail << "1000 pairs, two zero positions each, reset at first [SEP]+1";
}

// ---------------------------------------------------------------------------
// 4. finite-difference gradient check, all four losses, 64-bit
// ---------------------------------------------------------------------------

void criterion_gradient_check(std::ostream& detail) {
    const auto cfg = testutil::small_config(2, 8, 2, 16, 50, 32);
    const auto vocab = testutil::vocab_of_size(50);

    testutil::GradCheckSetup setup;
    setup.batch = testutil::small_mlm_batch(vocab, 4004, 2, 10);
    setup.class_labels = {1, 2};
    setup.multilabel_targets = nn::Mat<double>::Zero(2, 3);
    setup.multilabel_targets(0, 0) = 1.0;
    setup.multilabel_targets(1, 2) = 1.0;
    setup.regression_targets = {0.3, 0.7};

    double worst = 0.0;
    std::string worst_where;
    const struct {
        testutil::GradTask task;
        const char* name;
        nn::HeadKind kind;
        int64_t labels;
    } tasks[] = {
        {testutil::GradTask::mlm, "mlm", nn::HeadKind::single_class, 2},
        {testutil::GradTask::classification, "classification", nn::HeadKind::single_class, 3},
        {testutil::GradTask::multi_label, "multi_label", nn::HeadKind::multi_label, 3},
        {testutil::GradTask::regression, "regression", nn::HeadKind::regression, 1},
    };
    for (const auto& t : tasks) {
        nn::Model<double> model(nn::init_model(cfg, 4040));
        nn::TaskHead<double> head =
            nn::TaskHead<double>::init(t.kind, t.labels, cfg.hidden_size, 4041);
        nn::TaskHead<double>* head_ptr = (t.task == testutil::GradTask::mlm) ? nullptr : &head;
        const auto result = testutil::gradient_check(model, head_ptr, t.task, setup, 1e-5, 1);
        if (result.max_rel_error > worst) {
            worst = result.max_rel_error;
            worst_where = std::string(t.name) + "/" + result.worst_tensor;
        }
        require(result.max_rel_error < 1e-4,
                std::string(t.name) + " loss: max relative error " +
                    std::to_string(result.max_rel_error) + " in " + result.worst_tensor);
    }
    detail << "max relative error " << worst << " (" << worst_where << ")";
}

// ---------------------------------------------------------------------------
// 5. truncation through the CLI
// ---------------------------------------------------------------------------

void criterion_truncation(std::ostream& detail) {
    testutil::TmpDir tmp;
    auto cfg = testutil::small_config(12, 16, 2, 32, 60, 32);
    const auto full = nn::init_model(cfg, 5005);
    nn::save_checkpoint(full, tmp.file("full.ckpt"));

    int rc = run_cli("truncate --in " + tmp.file("full.ckpt") + " --keep-layers 4 --out " +
                         tmp.file("cut.ckpt"),
                     tmp.file("cli.log"));
    require(rc == 0, "truncate CLI exited with " + std::to_string(rc));
    const auto cut = nn::load_checkpoint(tmp.file("cut.ckpt"));
    require(cut.config.num_layers == 4, "truncated config must report 4 layers");

    for (const auto& [name, t] : cut.tensors) {
        const auto& src = full.tensors.at(name);
        require(t.shape == src.shape && t.data == src.data,
                "tensor " + name + " not copied bit-exactly");
    }
    for (int64_t l = 0; l < 4; ++l) {
        require(cut.tensors.count("layer." + std::to_string(l) + ".attention.query.weight") == 1,
                "missing kept layer " + std::to_string(l));
    }
    require(cut.tensors.count("layer.4.attention.query.weight") == 0, "layer 4 must be dropped");

    auto cfg4 = cfg;
    cfg4.num_layers = 4;
    int64_t cut_count = 0;
    for (const auto& [name, t] : cut.tensors) cut_count += t.numel();
    const auto fresh = nn::init_model(cfg4, 1);
    int64_t fresh_count = 0;
    for (const auto& [name, t] : fresh.tensors) fresh_count += t.numel();
    require(cut_count == fresh_count && cut_count == nn::parameter_count(cfg4),
            "parameter count mismatch against a fresh 4-layer init");

    // keep == L is identity up to metadata
    const auto same = nn::truncate_checkpoint(full, 12);
    require(same.config == full.config, "keep=L must preserve the config");
    for (const auto& [name, t] : same.tensors) {
        require(t.data == full.tensors.at(name).data, "keep=L altered tensor " + name);
    }
    detail << "4/12 layers kept byte-exactly, " << cut_count << " parameters";
}

// ---------------------------------------------------------------------------
// 6. optimizer and schedule closed forms
// ---------------------------------------------------------------------------

void criterion_optimizer_schedule(std::ostream& detail) {
    train::TrainConfig cfg;  // paper defaults: lr 1e-5, warmup 10000
    cfg.total_steps = 250000;
    require(train::lr_at(0, cfg) == 0.0, "lr_at(0) must be 0");
    require(std::abs(train::lr_at(10000, cfg) - 1e-5) < 1e-20, "lr_at(10000) must be 1e-5");
    require(train::lr_at(cfg.total_steps, cfg) == 0.0, "lr_at(total) must be 0");
    const double left = train::lr_at(9999, cfg) + cfg.base_lr / 10000.0;
    require(std::abs(left - train::lr_at(10000, cfg)) < 1e-12,
            "warmup boundary discontinuity");

    // single-parameter AdamW step against the closed form
    const double g = 0.37, lr = 0.01, p0 = 1.25;
    {
        train::TrainConfig opt = cfg;
        opt.weight_decay = 0.0;
        nn::NamedTensors<double> params{{"w", nn::Mat<double>::Constant(1, 1, p0)}};
        nn::NamedTensors<double> grads{{"w", nn::Mat<double>::Constant(1, 1, g)}};
        auto state = train::AdamWState<double>::zeros_like(params);
        train::adamw_step(params, grads, state, 1, lr, opt);
        const double expected = p0 - lr * g / (std::abs(g) + opt.eps);
        require(std::abs(params.at("w")(0, 0) - expected) < 1e-12,
                "adamw single step off the closed form by " +
                    std::to_string(std::abs(params.at("w")(0, 0) - expected)));
    }

    // post-clip global norm = min(pre-norm, 0.1)
    auto rng = make_rng(6006);
    for (int trial = 0; trial < 30; ++trial) {
        nn::NamedTensors<double> grads;
        for (int t = 0; t < 5; ++t) {
            nn::Mat<double> m(4, 6);
            for (int r = 0; r < 4; ++r) {
                for (int c = 0; c < 6; ++c) m(r, c) = normal(rng) * (trial % 2 ? 0.5 : 0.004);
            }
            grads.emplace("g" + std::to_string(t), std::move(m));
        }
        double pre_sq = 0.0;
        for (const auto& [n, m] : grads) pre_sq += m.squaredNorm();
        const double pre = std::sqrt(pre_sq);
        train::clip_gradients(grads, 0.1);
        double post_sq = 0.0;
        for (const auto& [n, m] : grads) post_sq += m.squaredNorm();
        const double post = std::sqrt(post_sq);
        require(std::abs(post - std::min(pre, 0.1)) < 1e-6,
                "post-clip norm " + std::to_string(post) + " vs min(pre, 0.1) " +
                    std::to_string(std::min(pre, 0.1)));
    }
    detail << "lr endpoints, warmup continuity, adamw closed form, clip norm";
}

// ---------------------------------------------------------------------------
// 7. overfit sanity on a 32-sentence corpus
// ---------------------------------------------------------------------------

train::StageData toy_stage_data(const text::Vocab& vocab, size_t sentences, uint64_t seed) {
    train::StageData data;
    data.objective = train::Objective::mlm;
    auto rng = make_rng(seed);
    for (size_t i = 0; i < sentences; ++i) {
        std::vector<int32_t> ids;
        const size_t len = 8;
        for (size_t k = 0; k < len; ++k) {
            ids.push_back(static_cast<int32_t>(5 + uniform_index(rng, vocab.size() - 5)));
        }
        data.sentences.push_back(std::move(ids));
    }
    return data;
}

void criterion_overfit(std::ostream& detail) {
    const auto vocab = testutil::vocab_of_size(60);
    const auto data = toy_stage_data(vocab, 32, 7007);
    std::vector<size_t> indices(data.sentences.size());
    std::iota(indices.begin(), indices.end(), size_t{0});

    const auto model_cfg = testutil::small_config(2, 96, 2, 192, 60, 32);
    const auto init = nn::init_model(model_cfg, 7017);

    train::TrainConfig cfg;
    cfg.base_lr = 3e-3;
    cfg.warmup_steps = 100;
    cfg.total_steps = 2000;
    cfg.weight_decay = 0.01;
    cfg.clip_norm = 1.0;
    cfg.batch_size = 16;
    cfg.seed = 7027;
    cfg.validation_every = 500;
    cfg.patience = 100;

    const auto r1 = train::pretrain<float>(data, indices, indices, vocab, init, cfg, {}, "toy",
                                           16);
    require(r1.steps_run <= 2000, "exceeded the 2000-step budget");
    double tail = 0.0;
    size_t tail_n = 0;
    for (size_t i = r1.log.size() >= 50 ? r1.log.size() - 50 : 0; i < r1.log.size(); ++i) {
        if (!std::isnan(r1.log[i].train_loss)) {
            tail += r1.log[i].train_loss;
            ++tail_n;
        }
    }
    const double final_loss = tail / static_cast<double>(tail_n);
    require(final_loss < 0.1, "final training MLM loss " + std::to_string(final_loss) +
                                  " (mean of last 50 steps) not below 0.1");

    const auto r2 = train::pretrain<float>(data, indices, indices, vocab, init, cfg, {}, "toy",
                                           16);
    testutil::TmpDir tmp;
    train::save_loss_log(r1.log, tmp.file("a.csv"));
    train::save_loss_log(r2.log, tmp.file("b.csv"));
    require(testutil::read_file(tmp.file("a.csv")) == testutil::read_file(tmp.file("b.csv")),
            "rerun loss logs are not bit-identical");
    detail << "final loss " << final_loss << " after " << r1.steps_run
           << " steps; rerun log bit-identical";
}

// ---------------------------------------------------------------------------
// 8. staged pipeline end to end through the CLI
// ---------------------------------------------------------------------------

struct ToyLanguage {
    std::vector<std::string> shared;    // C1 vocabulary
    std::vector<std::string> dialect;   // extra C2/C3 vocabulary
    std::map<std::string, std::string> translation;

    explicit ToyLanguage(uint64_t seed) {
        auto rng = make_rng(seed);
        auto word = [&](const char* prefix, size_t i) {
            static const char* syllables[] = {"ka", "lo", "mi", "ta", "re", "su", "no",
                                              "ba", "di", "fu", "ge", "hi"};
            std::string w = prefix + std::to_string(i);
            w += syllables[uniform_index(rng, 12)];
            w += syllables[uniform_index(rng, 12)];
            return w;
        };
        for (size_t i = 0; i < 90; ++i) shared.push_back(word("s", i));
        for (size_t i = 0; i < 40; ++i) dialect.push_back(word("d", i));
        for (const auto& w : shared) translation[w] = "e" + w;
        for (const auto& w : dialect) translation[w] = "e" + w;
    }

    std::string sentence(Rng& rng, double dialect_prob, size_t min_len = 4,
                         size_t max_len = 12) const {
        const size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
        std::string s;
        for (size_t i = 0; i < len; ++i) {
            if (i) s += ' ';
            if (!dialect.empty() && uniform_real(rng) < dialect_prob) {
                s += dialect[uniform_index(rng, dialect.size())];
            } else {
                s += shared[uniform_index(rng, shared.size())];
            }
        }
        return s;
    }

    std::string translate(const std::string& s) const {
        std::istringstream in(s);
        std::string w, out;
        while (in >> w) {
            if (!out.empty()) out += ' ';
            auto it = translation.find(w);
            out += (it == translation.end()) ? "e" + w : it->second;
        }
        return out;
    }
};

void criterion_staged_pipeline(std::ostream& detail) {
    testutil::TmpDir tmp;
    const ToyLanguage lang(8008);
    auto rng = make_rng(8018);

    // raw corpora with mild markup noise and planted duplicates
    {
        std::ofstream c1(tmp.file("c1.raw.txt"), std::ios::binary);
        std::vector<std::string> recent;
        for (size_t i = 0; i < 5000; ++i) {
            std::string s = lang.sentence(rng, 0.0);
            if (!recent.empty() && uniform_real(rng) < 0.06) {
                s = recent[uniform_index(rng, recent.size())];  // planted duplicate
            }
            recent.push_back(s);
            if (recent.size() > 50) recent.erase(recent.begin());
            if (uniform_real(rng) < 0.05) s = "<b>" + s + "</b>";
            if (uniform_real(rng) < 0.03) s += " &amp; " + lang.shared[0];
            c1 << s << '\n';
        }
        std::ofstream c2(tmp.file("c2.raw.txt"), std::ios::binary);
        for (size_t i = 0; i < 500; ++i) c2 << lang.sentence(rng, 0.5) << '\n';
        std::ofstream c3(tmp.file("c3.tsv"), std::ios::binary);
        for (size_t i = 0; i < 500; ++i) {
            const std::string src = lang.sentence(rng, 0.5, 3, 9);
            c3 << src << '\t' << lang.translate(src) << '\n';
        }
    }

    auto cli = [&](const std::string& args, const std::string& what) {
        const int rc = run_cli(args, tmp.file("cli.log"));
        if (rc != 0) {
            std::ifstream log(tmp.file("cli.log"));
            std::ostringstream ss;
            ss << log.rdbuf();
            throw Failure(what + " failed (exit " + std::to_string(rc) + "): " + ss.str());
        }
    };

    cli("clean --in " + tmp.file("c1.raw.txt") + " --out " + tmp.file("c1.clean.txt") +
            " --corpus-id c1 --stage C1",
        "clean c1");
    cli("clean --in " + tmp.file("c2.raw.txt") + " --out " + tmp.file("c2.clean.txt") +
            " --corpus-id c2 --stage C2",
        "clean c2");
    cli("dedup --in " + tmp.file("c1.clean.txt") + " --out " + tmp.file("c1.txt") +
            " --window 10 --threshold 0.7 --report " + tmp.file("c1.dedup.json"),
        "dedup c1");
    cli("dedup --in " + tmp.file("c2.clean.txt") + " --out " + tmp.file("c2.txt") +
            " --window 10 --threshold 0.7",
        "dedup c2");
    cli("tokenizer train --in " + tmp.file("c1.txt") + " --vocab-size 600 --min-frequency 2 "
            "--out " + tmp.file("vocab.txt"),
        "tokenizer train");

    {
        std::ofstream model(tmp.file("model.json"));
        model << R"({"num_layers": 2, "hidden_size": 64, "num_heads": 2, "ff_size": 128,
                     "max_positions": 64, "dropout_prob": 0.1})";
    }
    {
        std::ofstream plan(tmp.file("plan.json"));
        plan << R"({"stages": [
          {"tag": "base", "objective": "mlm", "corpora": [")" << tmp.file("c1.txt") << R"("],
           "validation_fraction": 0.01,
           "train": {"base_lr": 1e-3, "warmup_steps": 40, "total_steps": 400, "clip_norm": 1.0,
                     "weight_decay": 0.01, "batch_size": 16, "seed": 81, "validation_every": 100,
                     "patience": 10}},
          {"tag": "+C2", "objective": "mlm", "corpora": [")" << tmp.file("c2.txt") << R"("],
           "validation_fraction": 0.05,
           "train": {"base_lr": 5e-4, "warmup_steps": 20, "total_steps": 150, "clip_norm": 1.0,
                     "weight_decay": 0.01, "batch_size": 16, "seed": 82, "validation_every": 50,
                     "patience": 10}},
          {"tag": "+C2+C3", "objective": "tlm", "corpora": [")" << tmp.file("c3.tsv") << R"("],
           "validation_fraction": 0.05,
           "train": {"base_lr": 5e-4, "warmup_steps": 20, "total_steps": 150, "clip_norm": 1.0,
                     "weight_decay": 0.01, "batch_size": 16, "seed": 83, "validation_every": 50,
                     "patience": 10}}
        ]})";
    }
    cli("pretrain --plan " + tmp.file("plan.json") + " --vocab " + tmp.file("vocab.txt") +
            " --from-scratch --model-config " + tmp.file("model.json") + " --out-dir " +
            tmp.file("run") + " --seed 88 --max-seq-len 48",
        "pretrain");

    // stage continuity: step-0 validation loss of each later stage equals an
    // independent evaluation of the previous stage's checkpoint on that stream
    const auto vocab = text::load_vocab(tmp.file("vocab.txt"));
    struct StageRef {
        std::string ckpt;
        std::string corpus;
        train::Objective objective;
        uint64_t seed;
        double val_fraction;
    };
    const std::vector<StageRef> stage_refs = {
        {tmp.file("run/base.ckpt"), tmp.file("c2.txt"), train::Objective::mlm, 82, 0.05},
        {tmp.file("run/_C2.ckpt"), tmp.file("c3.tsv"), train::Objective::tlm, 83, 0.05},
    };
    for (size_t k = 0; k < stage_refs.size(); ++k) {
        const auto& ref = stage_refs[k];
        const auto stage_data =
            (ref.objective == train::Objective::mlm)
                ? train::encode_mlm_corpus({ref.corpus}, vocab, 48)
                : train::encode_tlm_corpus({ref.corpus}, vocab, 48);
        const auto split = train::split_for_validation(stage_data.size(), ref.val_fraction,
                                                       ref.seed);
        data::MaskingConfig mask;
        mask.seed = ref.seed;
        const auto val_batches = train::detail::build_validation_batches(
            stage_data, vocab, split.validation, mask, derive_seed(ref.seed, "val-stream"), 48,
            16);
        nn::Model<float> prev(nn::load_checkpoint(ref.ckpt));
        const double expected = train::detail::validation_loss(prev, val_batches);

        // read the step-0 validation loss from the next stage's loss log
        const std::string next_log =
            (k == 0) ? tmp.file("run/_C2.loss.csv") : tmp.file("run/_C2_C3.loss.csv");
        std::ifstream log(next_log);
        std::string header, line0;
        require(static_cast<bool>(std::getline(log, header)), "missing loss log " + next_log);
        require(static_cast<bool>(std::getline(log, line0)), "missing step-0 row in " + next_log);
        const size_t last_comma = line0.rfind(',');
        const double logged = std::stod(line0.substr(last_comma + 1));
        require(std::memcmp(&logged, &expected, sizeof(double)) == 0 ||
                    std::abs(logged - expected) < 1e-15,
                "stage " + std::to_string(k + 2) + " step-0 validation loss " +
                    std::to_string(logged) + " != previous checkpoint evaluation " +
                    std::to_string(expected));
    }

    // separable downstream task: marker word decides the class
    {
        fs::create_directories(tmp.file("tasks/TOY"));
        auto write_split = [&](const std::string& path, size_t n) {
            std::ofstream out(path, std::ios::binary);
            out << "text\tlabel\n";
            for (size_t i = 0; i < n; ++i) {
                const bool positive = (i % 2 == 0);
                std::string s = lang.sentence(rng, 0.2, 3, 8);
                const std::string marker = positive ? lang.shared[1] : lang.shared[2];
                s = s + ' ' + marker;  // marker at the end, away from [CLS]
                out << s << '\t' << (positive ? 1 : 0) << '\n';
            }
        };
        write_split(tmp.file("tasks/TOY/train.tsv"), 200);
        write_split(tmp.file("tasks/TOY/dev.tsv"), 60);
        std::ofstream spec(tmp.file("toy_task.json"));
        spec << R"({"name": "TOY", "head_kind": "single_class", "num_labels": 2,
                    "metric": "accuracy", "input_arity": "single"})";
    }
    cli("finetune --task-file " + tmp.file("toy_task.json") + " --data-dir " + tmp.file("tasks") +
            " --checkpoint " + tmp.file("run/final.ckpt") + " --vocab " + tmp.file("vocab.txt") +
            " --out-dir " + tmp.file("ft") + " --epochs 10 --lr 1e-3 --clip-norm 1.0 "
            "--weight-decay 0.01 --batch-size 16 --seed 89 --max-seq-len 48",
        "finetune");
    nlohmann::json metrics;
    {
        std::ifstream in(tmp.file("ft/metrics.json"));
        in >> metrics;
    }
    const double accuracy = metrics.at("best_value").get<double>();
    require(accuracy >= 0.95, "dev accuracy " + std::to_string(accuracy) + " below 0.95");
    detail << "dev accuracy " << accuracy << ", stage continuity bit-exact";
}

// ---------------------------------------------------------------------------
// 9. metric arithmetic against published rows
// ---------------------------------------------------------------------------

void criterion_metric_arithmetic(std::ostream& detail) {
    const std::vector<std::string> names = {"FID", "MDD",  "MQ2Q", "SVREG",
                                            "SEC", "OOLD", "OHSD", "XNLI"};
    auto avg = [&](std::vector<double> v) {
        std::map<std::string, double> m;
        for (size_t i = 0; i < names.size(); ++i) m[names[i]] = v[i];
        return eval::average_metric(m, names);
    };
    const struct {
        std::vector<double> row;
        double expected;
    } rows[] = {
        {{78.31, 51.15, 77.41, 42.41, 32.21, 94.92, 96.57, 51.02}, 65.50},
        {{81.04, 53.49, 72.63, 74.37, 49.26, 95.12, 98.36, 51.03}, 71.91},
        {{79.61, 56.04, 80.26, 50.82, 41.05, 94.62, 97.13, 50.57}, 68.76},
        {{79.32, 55.84, 80.35, 51.65, 41.88, 94.58, 97.27, 51.04}, 68.99},
        {{79.35, 56.60, 80.46, 53.72, 40.13, 94.56, 97.16, 51.33}, 69.16},
        {{78.29, 56.82, 80.65, 51.42, 40.75, 95.18, 97.51, 52.69}, 69.17},
        {{81.20, 55.84, 84.73, 69.72, 47.66, 94.53, 97.75, 52.13}, 72.94},
        {{79.90, 57.61, 85.31, 70.31, 48.03, 94.67, 97.91, 51.38}, 73.14},
    };
    for (const auto& r : rows) {
        const double got = avg(r.row);
        require(std::abs(got - r.expected) < 0.01,
                "row average " + std::to_string(got) + " differs from published " +
                    std::to_string(r.expected));
    }

    require(std::abs(eval::pearson({1, 2, 3}, {1, 2, 2}) - 0.8660) < 1e-4,
            "pearson hand value off");
    require(std::abs(eval::f1_score({1, 1, 0, 0}, {1, 0, 0, 0}, eval::F1Averaging::binary) -
                     2.0 / 3.0) < 1e-4,
            "f1 hand value off");
    require(std::abs(eval::jaccard({{1, 3}}, {{3}}) - 0.5) < 1e-4, "jaccard hand value off");
    require(std::abs(eval::accuracy({1, 1, 0, 0}, {1, 0, 0, 1}) - 0.5) < 1e-4,
            "accuracy hand value off");
    detail << "8 published row averages within 0.01; hand metric values within 1e-4";
}

// ---------------------------------------------------------------------------
// 10. checkpoint container format
// ---------------------------------------------------------------------------

void criterion_checkpoint_format(std::ostream& detail) {
    testutil::TmpDir tmp;
    const auto cfg = testutil::small_config();
    auto ckpt = nn::init_model(cfg, 1010);
    ckpt.metadata["stage"] = "base";

    nn::save_checkpoint(ckpt, tmp.file("a.ckpt"));
    const auto loaded = nn::load_checkpoint(tmp.file("a.ckpt"));
    nn::save_checkpoint(loaded, tmp.file("b.ckpt"));
    require(testutil::read_file(tmp.file("a.ckpt")) == testutil::read_file(tmp.file("b.ckpt")),
            "save/load round trip is not bit-identical");
    for (const auto& [name, t] : loaded.tensors) {
        require(t.data == ckpt.tensors.at(name).data, "tensor " + name + " changed in transit");
    }

    // corrupted manifest: declared bytes disagree with the shape
    {
        auto bad = ckpt;
        bad.tensors.at("pooler.bias").data.pop_back();
        nn::save_checkpoint(bad, tmp.file("bad.ckpt"));
        bool threw = false;
        try {
            nn::load_checkpoint(tmp.file("bad.ckpt"));
        } catch (const DataError& e) {
            threw = true;
            require(std::string(e.what()).find("pooler.bias") != std::string::npos,
                    "error does not name the offending tensor: " + std::string(e.what()));
        }
        require(threw, "shape/byte-length mismatch was not rejected");
    }
    // truncated payload
    {
        const auto bytes = testutil::read_file(tmp.file("a.ckpt"));
        testutil::write_file(tmp.file("short.ckpt"), bytes.substr(0, bytes.size() - 128));
        bool threw = false;
        try {
            nn::load_checkpoint(tmp.file("short.ckpt"));
        } catch (const DataError&) {
            threw = true;
        }
        require(threw, "truncated payload was not rejected");
    }
    // bad magic
    {
        auto bytes = testutil::read_file(tmp.file("a.ckpt"));
        bytes[2] = 'X';
        testutil::write_file(tmp.file("magic.ckpt"), bytes);
        bool threw = false;
        try {
            nn::load_checkpoint(tmp.file("magic.ckpt"));
        } catch (const DataError&) {
            threw = true;
        }
        require(threw, "bad magic was not rejected");
    }
    detail << "round trip bit-identical; corrupted fixtures rejected by tensor name";
}

struct Criterion {
    int id;
    std::string name;
    std::function<void(std::ostream&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "dedup oracle equivalence", criterion_dedup_oracle},
        {2, "masking statistics (15% select, 90/10 mask/random)", criterion_masking_stats},
        {3, "TLM layout and position reset", criterion_tlm_layout},
        {4, "gradient check vs central finite differences", criterion_gradient_check},
        {5, "checkpoint truncation", criterion_truncation},
        {6, "optimizer and schedule closed forms", criterion_optimizer_schedule},
        {7, "overfit sanity and loss-log determinism", criterion_overfit},
        {8, "staged pipeline end to end", criterion_staged_pipeline},
        {9, "metric arithmetic against published averages", criterion_metric_arithmetic},
        {10, "checkpoint format round trip and corruption handling", criterion_checkpoint_format},
    };

    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::ostringstream detail;
        bool ok = true;
        std::string error;
        try {
            c.run(detail);
        } catch (const std::exception& e) {
            ok = false;
            error = e.what();
        }
        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (ok) {
            std::cout << "PASS criterion " << c.id << " (" << std::fixed << seconds << "s): "
                      << c.name;
            if (!detail.str().empty()) std::cout << " -- " << detail.str();
            std::cout << "\n";
        } else {
            ++failures;
            std::cout << "FAIL criterion " << c.id << " (" << std::fixed << seconds << "s): "
                      << c.name << " -- " << error << "\n";
        }
        std::cout.flush();
    }
    if (failures) {
        std::cout << failures << " of " << criteria.size() << " criteria failed\n";
        return 1;
    }
    std::cout << "all " << criteria.size() << " criteria passed\n";
    return 0;
}
