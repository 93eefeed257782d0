#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bertkit/common.hpp"
#include "bertkit/eval/metrics.hpp"
#include "bertkit/nn/heads.hpp"

namespace bertkit::eval {

enum class Metric { f1, accuracy, pearson, jaccard };

inline const char* metric_name(Metric m) {
    switch (m) {
        case Metric::f1: return "f1";
        case Metric::accuracy: return "accuracy";
        case Metric::pearson: return "pearson";
        case Metric::jaccard: return "jaccard";
    }
    return "?";
}

inline Metric parse_metric(const std::string& s) {
    if (s == "f1") return Metric::f1;
    if (s == "accuracy") return Metric::accuracy;
    if (s == "pearson") return Metric::pearson;
    if (s == "jaccard") return Metric::jaccard;
    throw ConfigError("unknown metric: " + s);
}

enum class InputArity { single, pair };

struct TaskSpec {
    std::string name;
    nn::HeadKind head_kind = nn::HeadKind::single_class;
    int64_t num_labels = 2;
    Metric metric = Metric::f1;
    F1Averaging f1_averaging = F1Averaging::binary;
    InputArity input_arity = InputArity::single;
    bool dialectal = false;

    void validate() const {
        const bool pearson_ok = (metric == Metric::pearson) ==
                                (head_kind == nn::HeadKind::regression);
        const bool jaccard_ok = (metric == Metric::jaccard) ==
                                (head_kind == nn::HeadKind::multi_label);
        if (!pearson_ok) throw ConfigError("task " + name + ": pearson pairs with regression only");
        if (!jaccard_ok) throw ConfigError("task " + name + ": jaccard pairs with multi_label only");
        const bool pair_head = head_kind == nn::HeadKind::pair_class;
        if (pair_head && input_arity != InputArity::pair) {
            throw ConfigError("task " + name + ": pair_class head needs pair inputs");
        }
        if (num_labels < 1) throw ConfigError("task " + name + ": num_labels must be >= 1");
    }

    static TaskSpec from_json(const nlohmann::json& j) {
        TaskSpec s;
        s.name = j.at("name").get<std::string>();
        s.head_kind = nn::parse_head_kind(j.at("head_kind").get<std::string>());
        s.num_labels = j.value("num_labels", int64_t{2});
        s.metric = parse_metric(j.at("metric").get<std::string>());
        if (j.contains("f1_averaging")) {
            s.f1_averaging = parse_f1_averaging(j.at("f1_averaging").get<std::string>());
        }
        s.input_arity = j.value("input_arity", std::string("single")) == "pair"
                            ? InputArity::pair
                            : InputArity::single;
        s.dialectal = j.value("dialectal", false);
        s.validate();
        return s;
    }
};

// The eight benchmark tasks: head kind, label space and headline metric.
// MDD's 25-way F1 averages macro; the binary tasks report positive-class F1.
// The six dialect-flavored tasks are flagged for the dialectal average.
inline std::vector<TaskSpec> task_registry() {
    using nn::HeadKind;
    std::vector<TaskSpec> reg;
    reg.push_back({"FID", HeadKind::single_class, 2, Metric::f1, F1Averaging::binary,
                   InputArity::single, true});
    reg.push_back({"MDD", HeadKind::single_class, 25, Metric::f1, F1Averaging::macro,
                   InputArity::single, true});
    reg.push_back({"MQ2Q", HeadKind::pair_class, 2, Metric::f1, F1Averaging::binary,
                   InputArity::pair, false});
    reg.push_back({"SVREG", HeadKind::regression, 1, Metric::pearson, F1Averaging::binary,
                   InputArity::single, true});
    reg.push_back({"SEC", HeadKind::multi_label, 11, Metric::jaccard, F1Averaging::binary,
                   InputArity::single, true});
    reg.push_back({"OOLD", HeadKind::single_class, 2, Metric::f1, F1Averaging::binary,
                   InputArity::single, true});
    reg.push_back({"OHSD", HeadKind::single_class, 2, Metric::f1, F1Averaging::binary,
                   InputArity::single, true});
    reg.push_back({"XNLI", HeadKind::pair_class, 3, Metric::accuracy, F1Averaging::binary,
                   InputArity::pair, false});
    for (auto& s : reg) s.validate();
    return reg;
}

inline TaskSpec find_task(const std::string& name) {
    for (const auto& s : task_registry()) {
        if (s.name == name) return s;
    }
    throw ConfigError("unknown task: " + name);
}

// One labeled example in the task file format.
struct TaskItem {
    std::string text_a;
    std::string text_b;               // pair tasks only
    int32_t label = 0;                // single/pair classification
    std::vector<int32_t> label_set;   // multi_label
    double target = 0.0;              // regression
};

using TaskData = std::vector<TaskItem>;

// Header-bearing TSV per task shape:
//   single classification: text<TAB>label
//   pair classification:   text_a<TAB>text_b<TAB>label
//   multi-label:           text<TAB>labels   (comma-separated ids, may be empty)
//   regression:            text<TAB>score
inline TaskData load_task_tsv(const std::string& path, const TaskSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open task file: " + path);

    auto split_tabs = [](const std::string& line) {
        std::vector<std::string> cols;
        size_t start = 0;
        for (;;) {
            const size_t tab = line.find('\t', start);
            if (tab == std::string::npos) {
                cols.push_back(line.substr(start));
                break;
            }
            cols.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        return cols;
    };

    std::string expected_header;
    const bool pair = spec.input_arity == InputArity::pair;
    switch (spec.head_kind) {
        case nn::HeadKind::single_class: expected_header = "text\tlabel"; break;
        case nn::HeadKind::pair_class: expected_header = "text_a\ttext_b\tlabel"; break;
        case nn::HeadKind::multi_label: expected_header = "text\tlabels"; break;
        case nn::HeadKind::regression: expected_header = "text\tscore"; break;
    }

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty task file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header) {
        throw DataError(path + ": expected header \"" + expected_header + "\", got \"" + line +
                        "\"");
    }

    TaskData items;
    size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cols = split_tabs(line);
        const size_t want = pair ? 3 : 2;
        if (cols.size() != want) {
            throw DataError(path + ": row " + std::to_string(row) + " has " +
                            std::to_string(cols.size()) + " columns, expected " +
                            std::to_string(want));
        }
        TaskItem item;
        item.text_a = cols[0];
        const std::string& label_col = cols[want - 1];
        if (pair) item.text_b = cols[1];
        try {
            switch (spec.head_kind) {
                case nn::HeadKind::single_class:
                case nn::HeadKind::pair_class: {
                    item.label = static_cast<int32_t>(std::stol(label_col));
                    if (item.label < 0 || item.label >= spec.num_labels) {
                        throw DataError("label " + label_col + " outside [0, " +
                                        std::to_string(spec.num_labels) + ")");
                    }
                    break;
                }
                case nn::HeadKind::multi_label: {
                    std::stringstream ss(label_col);
                    std::string piece;
                    while (std::getline(ss, piece, ',')) {
                        if (piece.empty()) continue;
                        const int32_t id = static_cast<int32_t>(std::stol(piece));
                        if (id < 0 || id >= spec.num_labels) {
                            throw DataError("label id " + piece + " outside [0, " +
                                            std::to_string(spec.num_labels) + ")");
                        }
                        item.label_set.push_back(id);
                    }
                    break;
                }
                case nn::HeadKind::regression:
                    item.target = std::stod(label_col);
                    break;
            }
        } catch (const DataError& e) {
            throw DataError(path + ": row " + std::to_string(row) + ": " + e.what());
        } catch (const std::exception&) {
            throw DataError(path + ": row " + std::to_string(row) + ": bad label \"" + label_col +
                            "\"");
        }
        items.push_back(std::move(item));
    }
    if (items.empty()) throw DataError(path + ": no data rows");
    return items;
}

}  // namespace bertkit::eval
