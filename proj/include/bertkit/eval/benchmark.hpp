#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/eval/metrics.hpp"
#include "bertkit/eval/tasks.hpp"
#include "bertkit/nn/checkpoint.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/wordpiece.hpp"
#include "bertkit/train/finetune.hpp"

namespace bertkit::eval {

struct BenchmarkRow {
    std::string task;
    std::string metric;
    bool dialectal = false;
    bool ok = false;
    double value = 0.0;  // x100 scale
    int64_t best_epoch = 0;
    std::string error;
};

struct BenchmarkResult {
    std::vector<BenchmarkRow> rows;
    bool has_average = false;
    double average = 0.0;            // x100
    bool has_dialectal_average = false;
    double dialectal_average = 0.0;  // x100
    bool subset = false;
    bool any_failed = false;
};

// Fine-tunes the checkpoint on each task in `specs` (default: the full
// registry), scoring the dev split. Values are reported on the x100 scale
// used in Results tables. Per-task failures are isolated: the row is marked
// failed and the averages cover the remaining tasks.
template <typename S = float>
BenchmarkResult run_benchmark(const std::vector<TaskSpec>& specs, const std::string& data_dir,
                              const nn::Checkpoint& checkpoint, const text::Vocab& vocab,
                              const train::TrainConfig& base_cfg, int64_t epochs = 10,
                              size_t max_seq_len = data::kDefaultMaxSeqLen) {
    BenchmarkResult result;
    result.subset = specs.size() != task_registry().size();
    std::map<std::string, double> per_task;
    std::map<std::string, double> dialectal;
    for (const auto& spec : specs) {
        BenchmarkRow row;
        row.task = spec.name;
        row.metric = metric_name(spec.metric);
        row.dialectal = spec.dialectal;
        try {
            const auto train_items =
                load_task_tsv(data_dir + "/" + spec.name + "/train.tsv", spec);
            const auto dev_items = load_task_tsv(data_dir + "/" + spec.name + "/dev.tsv", spec);
            train::TrainConfig cfg = base_cfg;
            cfg.seed = derive_seed(base_cfg.seed, "task", fnv1a64(spec.name));
            const auto ft = train::finetune<S>(spec, train_items, dev_items, checkpoint, vocab,
                                               cfg, epochs, max_seq_len);
            row.ok = true;
            row.value = ft.best_metric * 100.0;
            row.best_epoch = ft.best_epoch;
            per_task[spec.name] = row.value;
            if (spec.dialectal) dialectal[spec.name] = row.value;
        } catch (const Error& e) {
            row.error = e.what();
            result.any_failed = true;
        }
        result.rows.push_back(std::move(row));
    }
    if (!per_task.empty()) {
        result.average = average_metric(per_task);
        result.has_average = true;
    }
    if (!dialectal.empty()) {
        result.dialectal_average = average_metric(dialectal);
        result.has_dialectal_average = true;
    }
    return result;
}

inline std::string format_benchmark_table(const BenchmarkResult& result) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s %-10s %-10s %8s %6s  %s\n", "task", "metric", "dialectal",
                  "value", "epoch", "status");
    out += buf;
    for (const auto& row : result.rows) {
        if (row.ok) {
            std::snprintf(buf, sizeof(buf), "%-8s %-10s %-10s %8.2f %6lld  ok\n", row.task.c_str(),
                          row.metric.c_str(), row.dialectal ? "yes" : "no", row.value,
                          static_cast<long long>(row.best_epoch));
        } else {
            std::snprintf(buf, sizeof(buf), "%-8s %-10s %-10s %8s %6s  FAILED: %s\n",
                          row.task.c_str(), row.metric.c_str(), row.dialectal ? "yes" : "no", "-",
                          "-", row.error.c_str());
        }
        out += buf;
    }
    if (result.has_average) {
        std::snprintf(buf, sizeof(buf), "%-8s %-10s %-10s %8.2f%s\n", "average", "", "",
                      result.average, result.subset ? "  (subset)" : "");
        out += buf;
    }
    if (result.has_dialectal_average) {
        std::snprintf(buf, sizeof(buf), "%-8s %-10s %-10s %8.2f\n", "dialectal", "", "",
                      result.dialectal_average);
        out += buf;
    }
    return out;
}

inline void save_benchmark_csv(const BenchmarkResult& result, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write results csv: " + path);
    out << "task,metric,dialectal,status,value,best_epoch,error\n";
    char buf[64];
    for (const auto& row : result.rows) {
        out << row.task << ',' << row.metric << ',' << (row.dialectal ? 1 : 0) << ','
            << (row.ok ? "ok" : "failed") << ',';
        if (row.ok) {
            std::snprintf(buf, sizeof(buf), "%.6f", row.value);
            out << buf << ',' << row.best_epoch << ',';
        } else {
            out << ",,";
            for (char c : row.error) out << (c == ',' ? ';' : c);
        }
        out << '\n';
    }
    if (result.has_average) {
        std::snprintf(buf, sizeof(buf), "%.6f", result.average);
        out << "average,,,"
            << (result.subset ? "subset" : "ok") << ',' << buf << ",,\n";
    }
    if (result.has_dialectal_average) {
        std::snprintf(buf, sizeof(buf), "%.6f", result.dialectal_average);
        out << "dialectal_average,,," << "ok" << ',' << buf << ",,\n";
    }
}

}  // namespace bertkit::eval
