// Command-line front end for the corpus -> dedup -> tokenizer -> pretrain ->
// finetune pipeline. Every artifact-producing subcommand writes a run
// manifest next to its primary output.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bertkit/common.hpp"
#include "bertkit/data/examples.hpp"
#include "bertkit/eval/benchmark.hpp"
#include "bertkit/eval/tasks.hpp"
#include "bertkit/io/manifest.hpp"
#include "bertkit/nn/checkpoint.hpp"
#include "bertkit/nn/model_config.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/cleaning.hpp"
#include "bertkit/text/corpus.hpp"
#include "bertkit/text/dedup.hpp"
#include "bertkit/text/wordpiece.hpp"
#include "bertkit/train/finetune.hpp"
#include "bertkit/train/pretrain.hpp"

namespace fs = std::filesystem;
using namespace bertkit;

namespace {

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) {
        if (i) out += ' ';
        out += argv[i];
    }
    return out;
}

void ensure_parent_dir(const std::string& path) {
    const auto parent = fs::path(path).parent_path();
    if (!parent.empty()) fs::create_directories(parent);
}

// Reads an already-cleaned one-sentence-per-line file into records.
std::vector<text::SentenceRecord> read_clean_corpus(const std::string& path,
                                                    const std::string& corpus_id,
                                                    text::Stage stage) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::vector<text::SentenceRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        records.push_back({line, corpus_id, stage});
    }
    return records;
}

struct CleanArgs {
    std::string in, out, config, corpus_id = "corpus", stage = "C1", manifest;
};

int run_clean(const CleanArgs& a, const std::string& command) {
    const auto cfg = a.config.empty() ? text::CleaningConfig::defaults()
                                      : text::CleaningConfig::load(a.config);
    text::LoadReport report;
    const auto records = text::load_corpus(a.in, a.corpus_id, text::parse_stage(a.stage), cfg,
                                           &report);
    ensure_parent_dir(a.out);
    text::save_corpus(records, a.out);

    std::cerr << "clean: read " << report.lines_read << " lines, kept " << records.size()
              << ", dropped " << report.dropped_empty << " empty and " << report.dropped_template
              << " template-matched\n";

    io::RunManifest manifest;
    manifest.command = command;
    manifest.config = cfg.to_json();
    manifest.config["corpus_id"] = a.corpus_id;
    manifest.config["stage"] = a.stage;
    manifest.inputs = {a.in};
    manifest.outputs = {a.out};
    manifest.save(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
    return 0;
}

struct DedupArgs {
    std::string in, out, report, manifest, corpus_id = "corpus";
    size_t window = 10;
    double threshold = 0.7;
};

int run_dedup(const DedupArgs& a, const std::string& command) {
    text::DedupConfig cfg;
    cfg.window_size = a.window;
    cfg.ratio_threshold = a.threshold;
    const auto corpus = read_clean_corpus(a.in, a.corpus_id, text::Stage::C1);
    const auto [kept, report] = text::dedup_corpus(corpus, cfg);
    ensure_parent_dir(a.out);
    text::save_corpus(kept, a.out);
    if (!a.report.empty()) {
        ensure_parent_dir(a.report);
        text::save_dedup_report(report, a.report);
    }
    std::cerr << "dedup: kept " << report.kept << " of " << report.total << " ("
              << report.removed_near_duplicate << " removed, " << report.kept_duplicate_exemplar
              << " kept as duplicate exemplars)\n";

    io::RunManifest manifest;
    manifest.command = command;
    manifest.config = report.to_json();
    manifest.inputs = {a.in};
    manifest.outputs = {a.out};
    if (!a.report.empty()) manifest.outputs.push_back(a.report);
    manifest.save(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
    return 0;
}

struct TokTrainArgs {
    std::string in, out, manifest;
    size_t vocab_size = 64000;
    int64_t min_frequency = 2;
};

int run_tokenizer_train(const TokTrainArgs& a, const std::string& command) {
    const auto corpus = read_clean_corpus(a.in, "train", text::Stage::C1);
    const auto vocab = text::train_wordpiece(corpus, a.vocab_size, a.min_frequency);
    ensure_parent_dir(a.out);
    text::save_vocab(vocab, a.out);
    std::cerr << "tokenizer train: " << vocab.size() << " tokens (requested " << a.vocab_size
              << ")\n";

    io::RunManifest manifest;
    manifest.command = command;
    manifest.config = {{"vocab_size", a.vocab_size},
                       {"min_frequency", a.min_frequency},
                       {"actual_size", vocab.size()}};
    manifest.inputs = {a.in};
    manifest.outputs = {a.out};
    manifest.save(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
    return 0;
}

struct TokEncodeArgs {
    std::string vocab, in, out;
};

int run_tokenizer_encode(const TokEncodeArgs& a) {
    const auto vocab = text::load_vocab(a.vocab);
    std::istream* in = &std::cin;
    std::ifstream fin;
    if (!a.in.empty()) {
        fin.open(a.in, std::ios::binary);
        if (!fin) throw IoError("cannot open input: " + a.in);
        in = &fin;
    }
    std::ostream* out = &std::cout;
    std::ofstream fout;
    if (!a.out.empty()) {
        ensure_parent_dir(a.out);
        fout.open(a.out, std::ios::binary);
        if (!fout) throw IoError("cannot write output: " + a.out);
        out = &fout;
    }
    std::string line;
    while (std::getline(*in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto ids = vocab.encode(line);
        for (size_t i = 0; i < ids.size(); ++i) {
            if (i) *out << ' ';
            *out << ids[i];
        }
        *out << '\n';
    }
    return 0;
}

struct PretrainArgs {
    std::string plan, vocab, init, model_config, out_dir, manifest;
    bool from_scratch = false;
    uint64_t seed = 0;
    size_t max_seq_len = data::kDefaultMaxSeqLen;
};

std::string sanitize_tag(const std::string& tag) {
    std::string out;
    for (char c : tag) {
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    }
    return out.empty() ? "stage" : out;
}

int run_pretrain(PretrainArgs& a, const std::string& command) {
    auto plan = train::StagePlan::load(a.plan);
    const auto vocab = text::load_vocab(a.vocab);

    nn::Checkpoint init;
    if (a.from_scratch) {
        if (a.model_config.empty()) {
            throw ConfigError("--from-scratch requires --model-config");
        }
        std::ifstream in(a.model_config);
        if (!in) throw IoError("cannot open model config: " + a.model_config);
        nlohmann::json j;
        in >> j;
        auto cfg = nn::ModelConfig::from_json(j);
        if (cfg.vocab_size == 0) cfg.vocab_size = static_cast<int64_t>(vocab.size());
        if (cfg.vocab_size != static_cast<int64_t>(vocab.size())) {
            throw ConfigError("model vocab_size " + std::to_string(cfg.vocab_size) +
                              " does not match vocab file size " + std::to_string(vocab.size()));
        }
        init = nn::init_model(cfg, a.seed);
    } else {
        if (a.init.empty()) throw ConfigError("provide --init CKPT or --from-scratch");
        init = nn::load_checkpoint(a.init);
        nn::validate_checkpoint(init);
    }

    // stages without a pinned seed derive theirs from the run seed
    for (size_t i = 0; i < plan.stages.size(); ++i) {
        if (plan.stages[i].train.seed == 0) {
            plan.stages[i].train.seed = derive_seed(a.seed, "stage", i);
        }
    }

    fs::create_directories(a.out_dir);
    const auto result = train::run_stage_plan<float>(plan, init, vocab, {}, a.max_seq_len);

    std::vector<std::string> outputs;
    for (const auto& stage : result.stages) {
        const std::string base = a.out_dir + "/" + sanitize_tag(stage.tag);
        nn::save_checkpoint(stage.run.best, base + ".ckpt");
        train::save_loss_log(stage.run.log, base + ".loss.csv");
        outputs.push_back(base + ".ckpt");
        outputs.push_back(base + ".loss.csv");
        std::cerr << "stage " << stage.tag << ": best validation loss "
                  << stage.run.best_val_loss << " at step " << stage.run.best_step
                  << (stage.run.early_stopped ? " (early stop)" : "") << ", "
                  << stage.run.stream_restarts << " stream restarts\n";
    }
    nn::save_checkpoint(result.final, a.out_dir + "/final.ckpt");
    outputs.push_back(a.out_dir + "/final.ckpt");

    io::RunManifest manifest;
    manifest.command = command;
    manifest.seed = a.seed;
    {
        std::ifstream in(a.plan);
        std::ostringstream ss;
        ss << in.rdbuf();
        manifest.config = nlohmann::json::parse(ss.str());
    }
    manifest.config["max_seq_len"] = a.max_seq_len;
    manifest.inputs = {a.plan, a.vocab};
    if (!a.init.empty()) manifest.inputs.push_back(a.init);
    for (const auto& stage : plan.stages) {
        for (const auto& c : stage.corpora) manifest.inputs.push_back(c);
    }
    manifest.outputs = outputs;
    manifest.save(a.manifest.empty() ? a.out_dir + "/manifest.json" : a.manifest);
    return 0;
}

struct TruncateArgs {
    std::string in, out, manifest;
    int64_t keep_layers = 4;
};

int run_truncate(const TruncateArgs& a, const std::string& command) {
    const auto src = nn::load_checkpoint(a.in);
    const auto cut = nn::truncate_checkpoint(src, a.keep_layers);
    ensure_parent_dir(a.out);
    nn::save_checkpoint(cut, a.out);
    std::cerr << "truncate: " << src.config.num_layers << " -> " << cut.config.num_layers
              << " layers\n";

    io::RunManifest manifest;
    manifest.command = command;
    manifest.config = {{"keep_layers", a.keep_layers}};
    manifest.inputs = {a.in};
    manifest.outputs = {a.out};
    manifest.save(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
    return 0;
}

struct FinetuneCommonArgs {
    std::string data_dir, checkpoint, vocab, out_dir, manifest;
    int64_t epochs = 10;
    double lr = 1e-5;
    int64_t batch_size = 16;
    double clip_norm = 0.1;
    double weight_decay = 0.2;
    uint64_t seed = 0;
    size_t max_seq_len = data::kDefaultMaxSeqLen;
};

train::TrainConfig finetune_config(const FinetuneCommonArgs& a) {
    train::TrainConfig cfg;
    cfg.base_lr = a.lr;
    cfg.batch_size = a.batch_size;
    cfg.clip_norm = a.clip_norm;
    cfg.weight_decay = a.weight_decay;
    cfg.seed = a.seed;
    return cfg;
}

struct FinetuneArgs : FinetuneCommonArgs {
    std::string task, task_file;
};

int run_finetune(const FinetuneArgs& a, const std::string& command) {
    eval::TaskSpec spec;
    if (!a.task_file.empty()) {
        std::ifstream in(a.task_file);
        if (!in) throw IoError("cannot open task file: " + a.task_file);
        nlohmann::json j;
        in >> j;
        spec = eval::TaskSpec::from_json(j);
    } else if (!a.task.empty()) {
        spec = eval::find_task(a.task);
    } else {
        throw ConfigError("provide --task NAME or --task-file FILE");
    }

    const auto vocab = text::load_vocab(a.vocab);
    const auto ckpt = nn::load_checkpoint(a.checkpoint);
    nn::validate_checkpoint(ckpt);
    const auto train_items = eval::load_task_tsv(a.data_dir + "/" + spec.name + "/train.tsv", spec);
    const auto dev_items = eval::load_task_tsv(a.data_dir + "/" + spec.name + "/dev.tsv", spec);

    const auto result = train::finetune<float>(spec, train_items, dev_items, ckpt, vocab,
                                               finetune_config(a), a.epochs, a.max_seq_len);

    fs::create_directories(a.out_dir);
    nlohmann::json metrics;
    metrics["task"] = spec.name;
    metrics["metric"] = eval::metric_name(spec.metric);
    metrics["best_value"] = result.best_metric;
    metrics["best_value_x100"] = result.best_metric * 100.0;
    metrics["best_epoch"] = result.best_epoch;
    auto history = nlohmann::json::array();
    for (const auto& e : result.history) {
        history.push_back({{"epoch", e.epoch}, {"metric", e.metric}, {"train_loss", e.train_loss}});
    }
    metrics["history"] = history;
    {
        std::ofstream out(a.out_dir + "/metrics.json");
        out << metrics.dump(2) << '\n';
    }
    nn::save_checkpoint(result.encoder, a.out_dir + "/encoder.ckpt");
    std::cerr << "finetune " << spec.name << ": best " << eval::metric_name(spec.metric) << " "
              << result.best_metric << " at epoch " << result.best_epoch << "\n";

    io::RunManifest manifest;
    manifest.command = command;
    manifest.seed = a.seed;
    manifest.config = {{"task", spec.name}, {"epochs", a.epochs}, {"lr", a.lr},
                       {"batch_size", a.batch_size}, {"max_seq_len", a.max_seq_len}};
    manifest.inputs = {a.checkpoint, a.vocab};
    manifest.outputs = {a.out_dir + "/metrics.json", a.out_dir + "/encoder.ckpt"};
    manifest.save(a.manifest.empty() ? a.out_dir + "/manifest.json" : a.manifest);
    return 0;
}

struct BenchmarkArgs : FinetuneCommonArgs {
    std::vector<std::string> tasks;
};

int run_benchmark_cmd(const BenchmarkArgs& a, const std::string& command) {
    std::vector<eval::TaskSpec> specs;
    if (a.tasks.empty()) {
        specs = eval::task_registry();
    } else {
        for (const auto& name : a.tasks) specs.push_back(eval::find_task(name));
    }
    const auto vocab = text::load_vocab(a.vocab);
    const auto ckpt = nn::load_checkpoint(a.checkpoint);
    nn::validate_checkpoint(ckpt);

    const auto result = eval::run_benchmark<float>(specs, a.data_dir, ckpt, vocab,
                                                   finetune_config(a), a.epochs, a.max_seq_len);
    const auto table = eval::format_benchmark_table(result);
    std::cout << table;
    fs::create_directories(a.out_dir);
    {
        std::ofstream out(a.out_dir + "/results.txt");
        out << table;
    }
    eval::save_benchmark_csv(result, a.out_dir + "/results.csv");

    io::RunManifest manifest;
    manifest.command = command;
    manifest.seed = a.seed;
    manifest.config = {{"epochs", a.epochs}, {"lr", a.lr}, {"batch_size", a.batch_size}};
    auto names = nlohmann::json::array();
    for (const auto& s : specs) names.push_back(s.name);
    manifest.config["tasks"] = names;
    manifest.inputs = {a.checkpoint, a.vocab};
    manifest.outputs = {a.out_dir + "/results.txt", a.out_dir + "/results.csv"};
    manifest.save(a.manifest.empty() ? a.out_dir + "/manifest.json" : a.manifest);
    return result.any_failed ? 2 : 0;
}

int run_inspect(const std::string& path) {
    const auto ckpt = nn::load_checkpoint(path);
    std::cout << "format_version: " << ckpt.format_version << "\n";
    std::cout << "config:\n";
    for (const auto& [k, v] : ckpt.config.to_json().items()) {
        std::cout << "  " << k << ": " << v << "\n";
    }
    if (!ckpt.metadata.empty()) {
        std::cout << "metadata:\n";
        for (const auto& [k, v] : ckpt.metadata) std::cout << "  " << k << ": " << v << "\n";
    }
    std::cout << "tensors:\n";
    int64_t total = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        std::cout << "  " << name << "  [";
        for (size_t i = 0; i < t.shape.size(); ++i) {
            if (i) std::cout << " x ";
            std::cout << t.shape[i];
        }
        std::cout << "]  " << t.numel() * 4 << " bytes\n";
        total += t.numel();
    }
    std::cout << "parameters: " << total << "\n";
    return 0;
}

struct DumpArgs {
    std::string vocab, in, mode = "mlm";
    uint64_t seed = 0;
    size_t max_seq_len = data::kDefaultMaxSeqLen;
    size_t limit = 10;
};

int run_dump_examples(const DumpArgs& a) {
    const auto vocab = text::load_vocab(a.vocab);
    data::MaskingConfig cfg;
    cfg.seed = a.seed;
    std::ifstream in(a.in, std::ios::binary);
    if (!in) throw IoError("cannot open input: " + a.in);
    std::string line;
    size_t count = 0;
    while (count < a.limit && std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto rng = make_rng(derive_seed(a.seed, "dump", count));
        data::EncodedExample ex;
        if (a.mode == "mlm") {
            auto ids = vocab.encode(line);
            if (ids.size() > a.max_seq_len - 2) ids.resize(a.max_seq_len - 2);
            ex = data::build_mlm_example(ids, vocab, cfg, rng, a.max_seq_len);
        } else if (a.mode == "tlm" || a.mode == "pair") {
            const size_t tab = line.find('\t');
            if (tab == std::string::npos) {
                throw DataError("dump-examples: " + a.mode + " mode expects two tab-separated columns");
            }
            auto src = vocab.encode(line.substr(0, tab));
            auto tgt = vocab.encode(line.substr(tab + 1));
            if (src.size() + tgt.size() + 3 > a.max_seq_len) {
                data::detail::truncate_pair_to_fit(src, tgt, a.max_seq_len - 3);
            }
            ex = (a.mode == "tlm")
                     ? data::build_tlm_example(src, tgt, vocab, cfg, rng, a.max_seq_len)
                     : data::build_pair_example(src, tgt, vocab, a.max_seq_len);
        } else {
            throw ConfigError("dump-examples: unknown mode " + a.mode);
        }
        std::cout << "example " << count << "\n" << data::format_example(ex, vocab) << "\n";
        ++count;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bertkit: compact BERT pretraining and evaluation pipeline"};
    app.require_subcommand(1);
    const std::string command = join_args(argc, argv);

    CleanArgs clean_args;
    auto* clean = app.add_subcommand("clean", "Clean a raw one-sentence-per-line corpus");
    clean->add_option("--in", clean_args.in, "raw corpus file")->required();
    clean->add_option("--out", clean_args.out, "cleaned corpus file")->required();
    clean->add_option("--config", clean_args.config, "cleaning config json (defaults built in)");
    clean->add_option("--corpus-id", clean_args.corpus_id, "corpus label");
    clean->add_option("--stage", clean_args.stage, "provenance stage: C1, C2 or C3");
    clean->add_option("--manifest", clean_args.manifest, "manifest path");

    DedupArgs dedup_args;
    auto* dedup = app.add_subcommand("dedup", "Remove near-duplicate sentences");
    dedup->add_option("--in", dedup_args.in, "cleaned corpus file")->required();
    dedup->add_option("--out", dedup_args.out, "deduplicated corpus file")->required();
    dedup->add_option("--window", dedup_args.window, "rolling window size in tokens (default 10)");
    dedup->add_option("--threshold", dedup_args.threshold,
                      "repeated-window ratio threshold (default 0.7)");
    dedup->add_option("--report", dedup_args.report, "write a json report here");
    dedup->add_option("--corpus-id", dedup_args.corpus_id, "corpus label");
    dedup->add_option("--manifest", dedup_args.manifest, "manifest path");

    auto* tokenizer = app.add_subcommand("tokenizer", "Train or apply a WordPiece vocabulary");
    tokenizer->require_subcommand(1);
    TokTrainArgs tok_train_args;
    auto* tok_train = tokenizer->add_subcommand("train", "Train a vocabulary");
    tok_train->add_option("--in", tok_train_args.in, "cleaned corpus file")->required();
    tok_train->add_option("--out", tok_train_args.out, "vocab file")->required();
    tok_train->add_option("--vocab-size", tok_train_args.vocab_size,
                          "target vocabulary size (default 64000)");
    tok_train->add_option("--min-frequency", tok_train_args.min_frequency,
                          "minimum pair frequency for merges (default 2)");
    tok_train->add_option("--manifest", tok_train_args.manifest, "manifest path");

    TokEncodeArgs tok_encode_args;
    auto* tok_encode = tokenizer->add_subcommand("encode", "Encode text to token ids");
    tok_encode->add_option("--vocab", tok_encode_args.vocab, "vocab file")->required();
    tok_encode->add_option("--in", tok_encode_args.in, "input text file (default stdin)");
    tok_encode->add_option("--out", tok_encode_args.out, "output ids file (default stdout)");

    PretrainArgs pretrain_args;
    auto* pretrain = app.add_subcommand(
        "pretrain",
        "Run a staged pretraining plan (stage train configs default to lr 1e-5, "
        "10000 warmup steps, beta2 0.98, weight decay 0.2, clip norm 0.1)");
    pretrain->add_option("--plan", pretrain_args.plan, "stage plan json")->required();
    pretrain->add_option("--vocab", pretrain_args.vocab, "vocab file")->required();
    pretrain->add_option("--init", pretrain_args.init, "starting checkpoint");
    pretrain->add_flag("--from-scratch", pretrain_args.from_scratch,
                       "randomly initialize instead of --init");
    pretrain->add_option("--model-config", pretrain_args.model_config,
                         "model config json (with --from-scratch)");
    pretrain->add_option("--out-dir", pretrain_args.out_dir, "output directory")->required();
    pretrain->add_option("--seed", pretrain_args.seed, "run seed (default 0)");
    pretrain->add_option("--max-seq-len", pretrain_args.max_seq_len,
                         "maximum sequence length (default 256)");
    pretrain->add_option("--manifest", pretrain_args.manifest, "manifest path");

    TruncateArgs truncate_args;
    auto* truncate = app.add_subcommand("truncate", "Keep only the first k encoder layers");
    truncate->add_option("--in", truncate_args.in, "source checkpoint")->required();
    truncate->add_option("--keep-layers", truncate_args.keep_layers,
                         "layers to keep (default 4)");
    truncate->add_option("--out", truncate_args.out, "output checkpoint")->required();
    truncate->add_option("--manifest", truncate_args.manifest, "manifest path");

    FinetuneArgs finetune_args;
    auto* finetune = app.add_subcommand("finetune", "Fine-tune on one task");
    finetune->add_option("--task", finetune_args.task, "registry task name");
    finetune->add_option("--task-file", finetune_args.task_file, "task spec json");
    finetune->add_option("--data-dir", finetune_args.data_dir, "task data directory")->required();
    finetune->add_option("--checkpoint", finetune_args.checkpoint, "encoder checkpoint")->required();
    finetune->add_option("--vocab", finetune_args.vocab, "vocab file")->required();
    finetune->add_option("--out-dir", finetune_args.out_dir, "output directory")->required();
    finetune->add_option("--epochs", finetune_args.epochs, "fine-tuning epochs (default 10)");
    finetune->add_option("--lr", finetune_args.lr, "learning rate (default 1e-5)");
    finetune->add_option("--batch-size", finetune_args.batch_size, "batch size (default 16)");
    finetune->add_option("--clip-norm", finetune_args.clip_norm, "gradient norm cap (default 0.1)");
    finetune->add_option("--weight-decay", finetune_args.weight_decay, "weight decay (default 0.2)");
    finetune->add_option("--seed", finetune_args.seed, "run seed (default 0)");
    finetune->add_option("--max-seq-len", finetune_args.max_seq_len,
                         "maximum sequence length (default 256)");
    finetune->add_option("--manifest", finetune_args.manifest, "manifest path");

    BenchmarkArgs benchmark_args;
    auto* benchmark = app.add_subcommand("benchmark", "Fine-tune and score the task suite");
    benchmark->add_option("--data-dir", benchmark_args.data_dir, "task data directory")->required();
    benchmark->add_option("--checkpoint", benchmark_args.checkpoint, "encoder checkpoint")
        ->required();
    benchmark->add_option("--vocab", benchmark_args.vocab, "vocab file")->required();
    benchmark->add_option("--out-dir", benchmark_args.out_dir, "output directory")->required();
    benchmark->add_option("--tasks", benchmark_args.tasks,
                          "subset of registry tasks (default: all eight)");
    benchmark->add_option("--epochs", benchmark_args.epochs, "fine-tuning epochs (default 10)");
    benchmark->add_option("--lr", benchmark_args.lr, "learning rate (default 1e-5)");
    benchmark->add_option("--batch-size", benchmark_args.batch_size, "batch size (default 16)");
    benchmark->add_option("--clip-norm", benchmark_args.clip_norm,
                          "gradient norm cap (default 0.1)");
    benchmark->add_option("--weight-decay", benchmark_args.weight_decay,
                          "weight decay (default 0.2)");
    benchmark->add_option("--seed", benchmark_args.seed, "run seed (default 0)");
    benchmark->add_option("--max-seq-len", benchmark_args.max_seq_len,
                          "maximum sequence length (default 256)");
    benchmark->add_option("--manifest", benchmark_args.manifest, "manifest path");

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect-checkpoint", "Print a checkpoint's manifest");
    inspect->add_option("--in", inspect_path, "checkpoint file")->required();

    DumpArgs dump_args;
    auto* dump = app.add_subcommand("dump-examples", "Print encoded training examples");
    dump->add_option("--vocab", dump_args.vocab, "vocab file")->required();
    dump->add_option("--in", dump_args.in, "input file (text, or tsv for tlm/pair)")->required();
    dump->add_option("--mode", dump_args.mode, "mlm, tlm or pair (default mlm)");
    dump->add_option("--seed", dump_args.seed, "masking seed (default 0)");
    dump->add_option("--limit", dump_args.limit, "examples to print (default 10)");
    dump->add_option("--max-seq-len", dump_args.max_seq_len,
                     "maximum sequence length (default 256)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (clean->parsed()) return run_clean(clean_args, command);
        if (dedup->parsed()) return run_dedup(dedup_args, command);
        if (tokenizer->parsed()) {
            if (tok_train->parsed()) return run_tokenizer_train(tok_train_args, command);
            if (tok_encode->parsed()) return run_tokenizer_encode(tok_encode_args);
        }
        if (pretrain->parsed()) return run_pretrain(pretrain_args, command);
        if (truncate->parsed()) return run_truncate(truncate_args, command);
        if (finetune->parsed()) return run_finetune(finetune_args, command);
        if (benchmark->parsed()) return run_benchmark_cmd(benchmark_args, command);
        if (inspect->parsed()) return run_inspect(inspect_path);
        if (dump->parsed()) return run_dump_examples(dump_args);
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
