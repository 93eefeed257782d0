#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/text/cleaning.hpp"

namespace bertkit::text {

// Pretraining stage provenance: C1 mixed text, C2 dialectal monolingual,
// C3 parallel.
enum class Stage { C1, C2, C3 };

inline const char* stage_name(Stage s) {
    switch (s) {
        case Stage::C1: return "C1";
        case Stage::C2: return "C2";
        case Stage::C3: return "C3";
    }
    return "?";
}

inline Stage parse_stage(const std::string& s) {
    if (s == "C1" || s == "c1") return Stage::C1;
    if (s == "C2" || s == "c2") return Stage::C2;
    if (s == "C3" || s == "c3") return Stage::C3;
    throw ConfigError("unknown stage: " + s + " (expected C1, C2 or C3)");
}

struct SentenceRecord {
    std::string text;
    std::string corpus_id;
    Stage stage = Stage::C1;
};

struct ParallelPair {
    std::string source;
    std::string target;
};

struct LoadReport {
    size_t lines_read = 0;
    size_t dropped_empty = 0;     // cleaned to nothing
    size_t dropped_template = 0;  // matched the blocklist
    size_t dropped_malformed = 0; // parallel files: wrong column count
    std::vector<size_t> malformed_lines;
};

// Compiles the blocklist (ECMAScript regex dialect, search semantics) or
// reports the offending pattern.
inline std::vector<std::regex> compile_blocklist(const std::vector<std::string>& patterns) {
    std::vector<std::regex> out;
    out.reserve(patterns.size());
    for (const auto& p : patterns) {
        try {
            out.emplace_back(p);
        } catch (const std::regex_error& e) {
            throw ConfigError("invalid blocklist pattern \"" + p + "\": " + e.what());
        }
    }
    return out;
}

inline bool matches_any(const std::string& text, const std::vector<std::regex>& blocklist) {
    for (const auto& re : blocklist) {
        if (std::regex_search(text, re)) return true;
    }
    return false;
}

// Drops every sentence matching any blocklist pattern, preserving order.
inline std::vector<SentenceRecord> filter_templates(const std::vector<SentenceRecord>& sentences,
                                                    const std::vector<std::string>& blocklist) {
    const auto compiled = compile_blocklist(blocklist);
    std::vector<SentenceRecord> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) {
        if (!matches_any(s.text, compiled)) out.push_back(s);
    }
    return out;
}

// Loads a one-sentence-per-line UTF-8 corpus, cleaning each line and
// applying the config's template blocklist. Line order is preserved.
inline std::vector<SentenceRecord> load_corpus(const std::string& path, const std::string& corpus_id,
                                               Stage stage, const CleaningConfig& cfg,
                                               LoadReport* report = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    const auto blocklist = compile_blocklist(cfg.template_blocklist);

    std::vector<SentenceRecord> out;
    LoadReport rep;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        ++rep.lines_read;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::optional<std::string> cleaned;
        try {
            cleaned = clean_sentence(line, cfg);
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!cleaned) {
            ++rep.dropped_empty;
            continue;
        }
        if (matches_any(*cleaned, blocklist)) {
            ++rep.dropped_template;
            continue;
        }
        out.push_back({std::move(*cleaned), corpus_id, stage});
    }
    if (report) *report = rep;
    return out;
}

// Loads a two-column TSV of parallel sentences. Lines with a column count
// other than two are skipped and reported by line number.
inline std::vector<ParallelPair> load_parallel(const std::string& path, const CleaningConfig& cfg,
                                               LoadReport* report = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open parallel file: " + path);

    std::vector<ParallelPair> out;
    LoadReport rep;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        ++rep.lines_read;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const size_t tabs = static_cast<size_t>(std::count(line.begin(), line.end(), '\t'));
        if (tabs != 1) {
            ++rep.dropped_malformed;
            rep.malformed_lines.push_back(line_no);
            continue;
        }
        const size_t tab = line.find('\t');
        std::optional<std::string> src, tgt;
        try {
            src = clean_sentence(line.substr(0, tab), cfg);
            tgt = clean_sentence(line.substr(tab + 1), cfg);
        } catch (const DataError& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!src || !tgt) {
            ++rep.dropped_empty;
            continue;
        }
        out.push_back({std::move(*src), std::move(*tgt)});
    }
    if (report) *report = rep;
    return out;
}

inline void save_corpus(const std::vector<SentenceRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write corpus file: " + path);
    for (const auto& r : records) out << r.text << '\n';
}

}  // namespace bertkit::text
