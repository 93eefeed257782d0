#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "bertkit/common.hpp"

namespace bertkit::eval {

enum class F1Averaging { binary, macro, weighted };

inline const char* f1_averaging_name(F1Averaging a) {
    switch (a) {
        case F1Averaging::binary: return "binary";
        case F1Averaging::macro: return "macro";
        case F1Averaging::weighted: return "weighted";
    }
    return "?";
}

inline F1Averaging parse_f1_averaging(const std::string& s) {
    if (s == "binary") return F1Averaging::binary;
    if (s == "macro") return F1Averaging::macro;
    if (s == "weighted") return F1Averaging::weighted;
    throw ConfigError("unknown f1 averaging: " + s);
}

// Precision/recall harmonic mean. Zero-division convention: a class with no
// predictions and no gold occurrences scores 0 and is dropped from the
// macro/weighted average (it is absent from gold); any class present in gold
// or predictions stays in, scoring 0 when it has no true positives.
inline double f1_score(const std::vector<int32_t>& gold, const std::vector<int32_t>& pred,
                       F1Averaging averaging, int32_t positive_label = 1) {
    if (gold.empty()) throw DataError("f1_score: empty inputs");
    if (gold.size() != pred.size()) throw DataError("f1_score: length mismatch");

    int32_t max_label = positive_label;
    for (int32_t g : gold) max_label = std::max(max_label, g);
    for (int32_t p : pred) max_label = std::max(max_label, p);
    const size_t k = static_cast<size_t>(max_label) + 1;

    std::vector<int64_t> tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0);
    for (size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] < 0 || pred[i] < 0) throw DataError("f1_score: negative label");
        ++support[static_cast<size_t>(gold[i])];
        if (gold[i] == pred[i]) {
            ++tp[static_cast<size_t>(gold[i])];
        } else {
            ++fn[static_cast<size_t>(gold[i])];
            ++fp[static_cast<size_t>(pred[i])];
        }
    }
    auto class_f1 = [&](size_t c) {
        const int64_t denom = 2 * tp[c] + fp[c] + fn[c];
        return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    };

    switch (averaging) {
        case F1Averaging::binary:
            return class_f1(static_cast<size_t>(positive_label));
        case F1Averaging::macro: {
            double sum = 0.0;
            size_t counted = 0;
            for (size_t c = 0; c < k; ++c) {
                if (tp[c] + fp[c] + fn[c] == 0) continue;  // absent everywhere
                sum += class_f1(c);
                ++counted;
            }
            return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
        }
        case F1Averaging::weighted: {
            double sum = 0.0;
            int64_t total = 0;
            for (size_t c = 0; c < k; ++c) {
                sum += class_f1(c) * static_cast<double>(support[c]);
                total += support[c];
            }
            return total == 0 ? 0.0 : sum / static_cast<double>(total);
        }
    }
    return 0.0;
}

inline double accuracy(const std::vector<int32_t>& gold, const std::vector<int32_t>& pred) {
    if (gold.empty()) throw DataError("accuracy: empty inputs");
    if (gold.size() != pred.size()) throw DataError("accuracy: length mismatch");
    size_t hits = 0;
    for (size_t i = 0; i < gold.size(); ++i) hits += (gold[i] == pred[i]);
    return static_cast<double>(hits) / static_cast<double>(gold.size());
}

// Sample Pearson correlation; constant inputs are an error rather than NaN.
inline double pearson(const std::vector<double>& gold, const std::vector<double>& pred) {
    if (gold.size() != pred.size()) throw DataError("pearson: length mismatch");
    if (gold.size() < 2) throw DataError("pearson: need at least two points");
    const double n = static_cast<double>(gold.size());
    double mg = 0.0, mp = 0.0;
    for (size_t i = 0; i < gold.size(); ++i) {
        mg += gold[i];
        mp += pred[i];
    }
    mg /= n;
    mp /= n;
    double cov = 0.0, vg = 0.0, vp = 0.0;
    for (size_t i = 0; i < gold.size(); ++i) {
        const double a = gold[i] - mg;
        const double b = pred[i] - mp;
        cov += a * b;
        vg += a * a;
        vp += b * b;
    }
    if (vg == 0.0 || vp == 0.0) {
        throw DataError("pearson: zero variance input");
    }
    return cov / std::sqrt(vg * vp);
}

// Mean per-example |gold n pred| / |gold u pred| over label-id sets, with
// 0/0 counted as perfect agreement.
inline double jaccard(const std::vector<std::vector<int32_t>>& gold,
                      const std::vector<std::vector<int32_t>>& pred) {
    if (gold.empty()) throw DataError("jaccard: empty inputs");
    if (gold.size() != pred.size()) throw DataError("jaccard: length mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < gold.size(); ++i) {
        const std::set<int32_t> g(gold[i].begin(), gold[i].end());
        const std::set<int32_t> p(pred[i].begin(), pred[i].end());
        if (g.empty() && p.empty()) {
            sum += 1.0;
            continue;
        }
        size_t inter = 0;
        for (int32_t x : g) inter += p.count(x);
        const size_t uni = g.size() + p.size() - inter;
        sum += static_cast<double>(inter) / static_cast<double>(uni);
    }
    return sum / static_cast<double>(gold.size());
}

// Unweighted mean of per-task headline metrics (callers pass the x100 scale
// used in reported tables). `required` enforces a full suite.
inline double average_metric(const std::map<std::string, double>& per_task,
                             const std::vector<std::string>& required = {}) {
    if (per_task.empty()) throw DataError("average_metric: no tasks");
    for (const auto& name : required) {
        if (!per_task.count(name)) {
            throw DataError("average_metric: missing task " + name);
        }
    }
    double sum = 0.0;
    for (const auto& [name, value] : per_task) sum += value;
    return sum / static_cast<double>(per_task.size());
}

}  // namespace bertkit::eval
