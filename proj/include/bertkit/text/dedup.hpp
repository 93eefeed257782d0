#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "bertkit/common.hpp"
#include "bertkit/text/corpus.hpp"
#include "bertkit/text/md5.hpp"

namespace bertkit::text {

// Near-duplicate removal: hash every rolling token window of a sentence,
// count window frequencies across the corpus, and drop sentences whose
// repeated-window ratio reaches the threshold. Exactly duplicate sentences
// keep their first occurrence.

struct DedupConfig {
    size_t window_size = 10;
    double ratio_threshold = 0.7;
    std::string hash_name = "md5";

    void validate() const {
        if (window_size < 1) throw ConfigError("dedup window_size must be >= 1");
        if (ratio_threshold < 0.0 || ratio_threshold > 1.0) {
            throw ConfigError("dedup ratio_threshold must be in [0, 1]");
        }
    }
};

struct WindowIndex {
    std::unordered_map<Digest128, uint64_t, Digest128Hash> counts;
    uint64_t total_windows = 0;
};

namespace detail {

inline std::vector<std::string_view> space_tokens(std::string_view sentence) {
    std::vector<std::string_view> toks;
    size_t i = 0;
    while (i < sentence.size()) {
        while (i < sentence.size() && sentence[i] == ' ') ++i;
        const size_t start = i;
        while (i < sentence.size() && sentence[i] != ' ') ++i;
        if (i > start) toks.push_back(sentence.substr(start, i - start));
    }
    return toks;
}

}  // namespace detail

// Emits one digest per window of `window_size` space-separated tokens.
// Sentences shorter than the window produce a single whole-sentence digest
// so exact short duplicates are still caught; an empty sentence produces
// nothing.
inline std::vector<Digest128> windows_of(std::string_view sentence, size_t window_size) {
    const auto toks = detail::space_tokens(sentence);
    std::vector<Digest128> out;
    if (toks.empty()) return out;
    if (toks.size() < window_size) {
        std::string whole;
        for (size_t i = 0; i < toks.size(); ++i) {
            if (i) whole.push_back(' ');
            whole.append(toks[i]);
        }
        out.push_back(md5_digest(whole));
        return out;
    }
    out.reserve(toks.size() - window_size + 1);
    std::string window;
    for (size_t start = 0; start + window_size <= toks.size(); ++start) {
        window.clear();
        for (size_t k = 0; k < window_size; ++k) {
            if (k) window.push_back(' ');
            window.append(toks[start + k]);
        }
        out.push_back(md5_digest(window));
    }
    return out;
}

// Aggregates window counts over one corpus. The paper dedups each corpus
// separately, so a mixed corpus_id sequence is rejected.
inline WindowIndex build_index(const std::vector<SentenceRecord>& corpus, const DedupConfig& cfg) {
    cfg.validate();
    WindowIndex index;
    for (const auto& rec : corpus) {
        if (rec.corpus_id != corpus.front().corpus_id) {
            throw DataError("build_index requires a single corpus_id; found \"" +
                            rec.corpus_id + "\" and \"" + corpus.front().corpus_id +
                            "\" (partition by corpus first)");
        }
        for (const auto& d : windows_of(rec.text, cfg.window_size)) {
            ++index.counts[d];
            ++index.total_windows;
        }
    }
    return index;
}

// Fraction of this sentence's windows that occur more than once in the
// corpus. Zero-window sentences score 0.
inline double repeated_ratio(std::string_view sentence, const WindowIndex& index,
                             const DedupConfig& cfg) {
    const auto windows = windows_of(sentence, cfg.window_size);
    if (windows.empty()) return 0.0;
    size_t repeated = 0;
    for (const auto& d : windows) {
        auto it = index.counts.find(d);
        if (it != index.counts.end() && it->second > 1) ++repeated;
    }
    return static_cast<double>(repeated) / static_cast<double>(windows.size());
}

struct DedupReport {
    size_t window_size = 0;
    double ratio_threshold = 0.0;
    std::string hash_name;
    size_t total = 0;
    size_t kept = 0;
    size_t removed_near_duplicate = 0;   // ratio >= threshold, not a pool exemplar
    size_t kept_duplicate_exemplar = 0;  // first occurrence of a byte-identical pool

    nlohmann::json to_json() const {
        return {{"window_size", window_size},
                {"ratio_threshold", ratio_threshold},
                {"hash_name", hash_name},
                {"total", total},
                {"kept", kept},
                {"removed_near_duplicate", removed_near_duplicate},
                {"kept_duplicate_exemplar", kept_duplicate_exemplar}};
    }
};

// Two passes: count windows, then filter in input order. A sentence whose
// repeated ratio reaches the threshold is removed unless it is the first
// occurrence of a byte-identical pool (>= 2 copies), which survives.
// Threshold comparison is >=.
inline std::pair<std::vector<SentenceRecord>, DedupReport> dedup_corpus(
    const std::vector<SentenceRecord>& corpus, const DedupConfig& cfg) {
    cfg.validate();
    const WindowIndex index = build_index(corpus, cfg);

    std::unordered_map<std::string_view, size_t> text_count;
    for (const auto& rec : corpus) ++text_count[rec.text];

    DedupReport report;
    report.window_size = cfg.window_size;
    report.ratio_threshold = cfg.ratio_threshold;
    report.hash_name = cfg.hash_name;
    report.total = corpus.size();

    std::vector<SentenceRecord> kept;
    kept.reserve(corpus.size());
    std::unordered_map<std::string_view, bool> pool_kept;
    for (const auto& rec : corpus) {
        const double ratio = repeated_ratio(rec.text, index, cfg);
        if (ratio < cfg.ratio_threshold) {
            kept.push_back(rec);
            continue;
        }
        if (text_count[rec.text] >= 2) {
            auto [it, first_time] = pool_kept.try_emplace(rec.text, true);
            if (first_time) {
                kept.push_back(rec);
                ++report.kept_duplicate_exemplar;
                continue;
            }
        }
        ++report.removed_near_duplicate;
    }
    report.kept = kept.size();
    return {std::move(kept), report};
}

inline void save_dedup_report(const DedupReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write dedup report: " + path);
    out << report.to_json().dump(2) << '\n';
}

}  // namespace bertkit::text
