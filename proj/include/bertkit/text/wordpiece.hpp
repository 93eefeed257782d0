#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/corpus.hpp"
#include "bertkit/utf8.hpp"

namespace bertkit::text {

inline constexpr const char* kPadToken = "[PAD]";
inline constexpr const char* kUnkToken = "[UNK]";
inline constexpr const char* kClsToken = "[CLS]";
inline constexpr const char* kSepToken = "[SEP]";
inline constexpr const char* kMaskToken = "[MASK]";
inline constexpr std::string_view kContinuationPrefix = "##";

struct SpecialIds {
    int32_t pad = -1;
    int32_t unk = -1;
    int32_t cls = -1;
    int32_t sep = -1;
    int32_t mask = -1;
};

class Vocab {
public:
    Vocab() = default;

    // Builds from an ordered token list (line number = id). Validates the
    // invariants: all five specials present, no duplicates, no empty pieces.
    static Vocab from_tokens(std::vector<std::string> tokens) {
        Vocab v;
        v.tokens_ = std::move(tokens);
        v.index_.reserve(v.tokens_.size() * 2);
        for (size_t i = 0; i < v.tokens_.size(); ++i) {
            const std::string& t = v.tokens_[i];
            if (!v.index_.emplace(t, static_cast<int32_t>(i)).second) {
                throw DataError("duplicate vocab token at id " + std::to_string(i) + ": \"" + t + "\"");
            }
        }
        auto find_special = [&](const char* name) {
            auto it = v.index_.find(name);
            if (it == v.index_.end()) {
                throw DataError(std::string("vocab is missing special token ") + name);
            }
            return it->second;
        };
        v.specials_.pad = find_special(kPadToken);
        v.specials_.unk = find_special(kUnkToken);
        v.specials_.cls = find_special(kClsToken);
        v.specials_.sep = find_special(kSepToken);
        v.specials_.mask = find_special(kMaskToken);
        v.sorted_specials_ = {v.specials_.pad, v.specials_.unk, v.specials_.cls, v.specials_.sep,
                              v.specials_.mask};
        std::sort(v.sorted_specials_.begin(), v.sorted_specials_.end());

        for (size_t i = 0; i < v.tokens_.size(); ++i) {
            if (v.tokens_[i].empty() && !v.is_special(static_cast<int32_t>(i))) {
                throw DataError("empty non-special token at id " + std::to_string(i));
            }
            const auto cps = utf8_decode(v.tokens_[i]);
            if (!cps.ok()) throw DataError("vocab token at id " + std::to_string(i) + " is not UTF-8");
            v.max_token_chars_ = std::max(v.max_token_chars_, cps.codepoints.size());
        }
        return v;
    }

    size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(int32_t id) const { return tokens_.at(static_cast<size_t>(id)); }
    const SpecialIds& specials() const { return specials_; }

    int32_t lookup(std::string_view piece) const {
        auto it = index_.find(std::string(piece));
        return it == index_.end() ? -1 : it->second;
    }

    bool is_special(int32_t id) const {
        return id == specials_.pad || id == specials_.unk || id == specials_.cls ||
               id == specials_.sep || id == specials_.mask;
    }

    size_t nonspecial_count() const { return tokens_.size() - sorted_specials_.size(); }

    // Uniform draw over non-special ids (for the masking random-token branch).
    int32_t random_nonspecial_id(Rng& rng) const {
        int32_t id = static_cast<int32_t>(uniform_index(rng, nonspecial_count()));
        for (int32_t s : sorted_specials_) {
            if (id >= s) ++id;
        }
        return id;
    }

    // Greedy longest-match-first WordPiece segmentation after whitespace
    // pre-tokenization. A word with an unsegmentable remainder encodes to a
    // single [UNK]. Special tokens never match literal text.
    std::vector<int32_t> encode(std::string_view textv) const {
        std::vector<int32_t> out;
        size_t i = 0;
        const std::string text(textv);
        while (i < text.size()) {
            while (i < text.size() && is_space(text[i])) ++i;
            size_t j = i;
            while (j < text.size() && !is_space(text[j])) ++j;
            if (j > i) encode_word(std::string_view(text).substr(i, j - i), out);
            i = j;
        }
        return out;
    }

    // Inverse of encode up to whitespace normalization: continuation pieces
    // attach to the previous piece, other pieces are space-separated.
    std::string decode(const std::vector<int32_t>& ids) const {
        std::string out;
        for (int32_t id : ids) {
            const std::string& t = token(id);
            if (t.size() > 2 && std::string_view(t).substr(0, 2) == kContinuationPrefix &&
                !is_special(id)) {
                out.append(t, 2, std::string::npos);
            } else {
                if (!out.empty()) out.push_back(' ');
                out.append(t);
            }
        }
        return out;
    }

private:
    static bool is_space(char c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
    }

    void encode_word(std::string_view word, std::vector<int32_t>& out) const {
        const auto decoded = utf8_decode(word);
        if (!decoded.ok()) throw DataError("encode: input is not valid UTF-8");
        const auto& cps = decoded.codepoints;
        std::vector<int32_t> pieces;
        size_t start = 0;
        while (start < cps.size()) {
            const size_t max_end = std::min(cps.size(), start + max_token_chars_);
            int32_t match = -1;
            size_t match_end = 0;
            std::string candidate;
            for (size_t end = max_end; end > start; --end) {
                candidate.clear();
                if (start > 0) candidate.append(kContinuationPrefix);
                for (size_t k = start; k < end; ++k) utf8_append(candidate, cps[k]);
                auto it = index_.find(candidate);
                if (it != index_.end() && !is_special(it->second)) {
                    match = it->second;
                    match_end = end;
                    break;
                }
            }
            if (match < 0) {
                out.push_back(specials_.unk);
                return;
            }
            pieces.push_back(match);
            start = match_end;
        }
        out.insert(out.end(), pieces.begin(), pieces.end());
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int32_t> index_;
    SpecialIds specials_;
    std::vector<int32_t> sorted_specials_;
    size_t max_token_chars_ = 0;
};

inline void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocab file: " + path);
    for (const auto& t : vocab.tokens()) out << t << '\n';
}

inline Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open vocab file: " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        tokens.push_back(line);
    }
    return Vocab::from_tokens(std::move(tokens));
}

namespace detail {

// Incremental WordPiece trainer state. Pairs are scored by
// count(left,right) / (count(left) * count(right)) and the best pair is
// merged until the vocabulary target is reached. Scores are compared as
// exact rationals; ties go to the lexicographically smaller merged piece,
// which makes training fully deterministic.
class WordPieceTrainer {
public:
    WordPieceTrainer(const std::vector<SentenceRecord>& corpus, size_t vocab_size,
                     int64_t min_frequency)
        : target_(vocab_size), min_frequency_(std::max<int64_t>(1, min_frequency)) {
        if (corpus.empty()) throw DataError("train_wordpiece: corpus is empty");
        collect_words(corpus);
        build_alphabet();
        const size_t min_feasible = 5 + alphabet_.size() * 2;
        if (vocab_size < min_feasible) {
            throw ConfigError("vocab_size " + std::to_string(vocab_size) +
                              " too small; minimum feasible for this corpus is " +
                              std::to_string(min_feasible) +
                              " (5 specials + " + std::to_string(alphabet_.size() * 2) +
                              " alphabet pieces)");
        }
        init_units_and_stats();
    }

    std::vector<std::string> run() {
        std::vector<std::string> vocab = {kPadToken, kUnkToken, kClsToken, kSepToken, kMaskToken};
        for (const auto& c : alphabet_) vocab.push_back(c);
        for (const auto& c : alphabet_) vocab.push_back(std::string(kContinuationPrefix) + c);
        std::unordered_set<std::string> in_vocab(vocab.begin(), vocab.end());

        while (vocab.size() < target_ && !selection_.empty()) {
            const Sel best = *selection_.begin();
            const int32_t merged_unit = merge_pair(best);
            const std::string& merged_text = unit_text_[static_cast<size_t>(merged_unit)];
            if (in_vocab.insert(merged_text).second) vocab.push_back(merged_text);
        }
        return vocab;
    }

private:
    struct Word {
        std::vector<int32_t> units;
        int64_t freq = 0;
    };

    struct Sel {
        int64_t pair_count;
        int64_t left_count;
        int64_t right_count;
        std::string merged;
        std::string left_text;
        std::string right_text;
        int32_t left;
        int32_t right;
    };

    struct SelCmp {
        bool operator()(const Sel& a, const Sel& b) const {
            // score(a) ? score(b)  <=>  a.pc*b.lc*b.rc ? b.pc*a.lc*a.rc
            const unsigned __int128 lhs = static_cast<unsigned __int128>(a.pair_count) *
                                          static_cast<unsigned __int128>(b.left_count) *
                                          static_cast<unsigned __int128>(b.right_count);
            const unsigned __int128 rhs = static_cast<unsigned __int128>(b.pair_count) *
                                          static_cast<unsigned __int128>(a.left_count) *
                                          static_cast<unsigned __int128>(a.right_count);
            if (lhs != rhs) return lhs > rhs;
            if (a.merged != b.merged) return a.merged < b.merged;
            if (a.left_text != b.left_text) return a.left_text < b.left_text;
            return a.right_text < b.right_text;
        }
    };

    struct PairStat {
        int64_t count = 0;
        std::unordered_set<int32_t> words;
        bool in_set = false;
        int64_t snap_pc = 0, snap_lc = 0, snap_rc = 0;
    };

    static uint64_t pair_key(int32_t left, int32_t right) {
        return (static_cast<uint64_t>(static_cast<uint32_t>(left)) << 32) |
               static_cast<uint32_t>(right);
    }
    static int32_t key_left(uint64_t k) { return static_cast<int32_t>(k >> 32); }
    static int32_t key_right(uint64_t k) { return static_cast<int32_t>(k & 0xffffffffu); }

    void collect_words(const std::vector<SentenceRecord>& corpus) {
        std::unordered_map<std::string, size_t> word_id;
        for (const auto& rec : corpus) {
            size_t i = 0;
            const std::string& text = rec.text;
            while (i < text.size()) {
                while (i < text.size() && text[i] == ' ') ++i;
                size_t j = i;
                while (j < text.size() && text[j] != ' ') ++j;
                if (j > i) {
                    std::string w = text.substr(i, j - i);
                    auto [it, fresh] = word_id.try_emplace(std::move(w), word_strings_.size());
                    if (fresh) {
                        word_strings_.push_back(it->first);
                        words_.push_back({{}, 0});
                    }
                    ++words_[it->second].freq;
                }
                i = j;
            }
        }
        if (words_.empty()) throw DataError("train_wordpiece: corpus has no tokens");
    }

    void build_alphabet() {
        std::set<std::string> chars;
        for (const auto& w : word_strings_) {
            const auto cps = utf8_decode(w);
            if (!cps.ok()) throw DataError("train_wordpiece: corpus word is not valid UTF-8");
            for (char32_t cp : cps.codepoints) {
                std::string c;
                utf8_append(c, cp);
                chars.insert(std::move(c));
            }
        }
        alphabet_.assign(chars.begin(), chars.end());
    }

    int32_t intern_unit(const std::string& text) {
        auto it = unit_id_.find(text);
        if (it != unit_id_.end()) return it->second;
        const int32_t id = static_cast<int32_t>(unit_text_.size());
        unit_text_.push_back(text);
        unit_id_.emplace(text, id);
        unit_count_.push_back(0);
        unit_pairs_.emplace_back();
        return id;
    }

    void init_units_and_stats() {
        for (const auto& c : alphabet_) {
            intern_unit(c);
            intern_unit(std::string(kContinuationPrefix) + c);
        }
        for (size_t wi = 0; wi < words_.size(); ++wi) {
            const auto cps = utf8_decode(word_strings_[wi]);
            auto& units = words_[wi].units;
            units.reserve(cps.codepoints.size());
            for (size_t k = 0; k < cps.codepoints.size(); ++k) {
                std::string piece;
                if (k > 0) piece.append(kContinuationPrefix);
                utf8_append(piece, cps.codepoints[k]);
                units.push_back(intern_unit(piece));
            }
            add_word_contributions(static_cast<int32_t>(wi));
        }
        std::unordered_set<uint64_t> all;
        for (const auto& [key, stat] : pair_stats_) all.insert(key);
        for (uint64_t key : all) refresh_pair(key);
    }

    void add_word_contributions(int32_t wi) {
        const auto& word = words_[static_cast<size_t>(wi)];
        for (int32_t u : word.units) unit_count_[static_cast<size_t>(u)] += word.freq;
        for (size_t k = 0; k + 1 < word.units.size(); ++k) {
            const uint64_t key = pair_key(word.units[k], word.units[k + 1]);
            auto& stat = pair_stats_[key];
            stat.count += word.freq;
            stat.words.insert(wi);
            unit_pairs_[static_cast<size_t>(word.units[k])].insert(key);
            unit_pairs_[static_cast<size_t>(word.units[k + 1])].insert(key);
        }
    }

    void remove_word_contributions(int32_t wi, std::unordered_set<uint64_t>& touched) {
        const auto& word = words_[static_cast<size_t>(wi)];
        for (int32_t u : word.units) unit_count_[static_cast<size_t>(u)] -= word.freq;
        for (size_t k = 0; k + 1 < word.units.size(); ++k) {
            const uint64_t key = pair_key(word.units[k], word.units[k + 1]);
            auto& stat = pair_stats_[key];
            stat.count -= word.freq;
            stat.words.erase(wi);
            touched.insert(key);
        }
    }

    Sel make_sel(uint64_t key, int64_t pc, int64_t lc, int64_t rc) const {
        const int32_t l = key_left(key), r = key_right(key);
        const std::string& lt = unit_text_[static_cast<size_t>(l)];
        const std::string& rt = unit_text_[static_cast<size_t>(r)];
        Sel s{pc, lc, rc, lt + rt.substr(2), lt, rt, l, r};
        return s;
    }

    void refresh_pair(uint64_t key) {
        auto it = pair_stats_.find(key);
        if (it == pair_stats_.end()) return;
        PairStat& stat = it->second;
        if (stat.in_set) {
            selection_.erase(make_sel(key, stat.snap_pc, stat.snap_lc, stat.snap_rc));
            stat.in_set = false;
        }
        if (stat.count <= 0) {
            unit_pairs_[static_cast<size_t>(key_left(key))].erase(key);
            unit_pairs_[static_cast<size_t>(key_right(key))].erase(key);
            pair_stats_.erase(it);
            return;
        }
        const int64_t lc = unit_count_[static_cast<size_t>(key_left(key))];
        const int64_t rc = unit_count_[static_cast<size_t>(key_right(key))];
        if (stat.count >= min_frequency_ && lc > 0 && rc > 0) {
            selection_.insert(make_sel(key, stat.count, lc, rc));
            stat.in_set = true;
            stat.snap_pc = stat.count;
            stat.snap_lc = lc;
            stat.snap_rc = rc;
        }
    }

    int32_t merge_pair(const Sel& best) {
        const int32_t a = best.left, b = best.right;
        const int32_t merged = intern_unit(best.merged);
        const uint64_t best_key = pair_key(a, b);

        std::vector<int32_t> affected(pair_stats_[best_key].words.begin(),
                                      pair_stats_[best_key].words.end());
        std::unordered_set<uint64_t> touched;
        touched.insert(best_key);
        for (int32_t wi : affected) {
            remove_word_contributions(wi, touched);
            auto& units = words_[static_cast<size_t>(wi)].units;
            std::vector<int32_t> next;
            next.reserve(units.size());
            size_t k = 0;
            while (k < units.size()) {
                if (k + 1 < units.size() && units[k] == a && units[k + 1] == b) {
                    next.push_back(merged);
                    k += 2;
                } else {
                    next.push_back(units[k]);
                    ++k;
                }
            }
            units = std::move(next);
            add_word_contributions(wi);
            for (size_t k2 = 0; k2 + 1 < units.size(); ++k2) {
                touched.insert(pair_key(units[k2], units[k2 + 1]));
            }
        }
        for (uint64_t key : unit_pairs_[static_cast<size_t>(a)]) touched.insert(key);
        for (uint64_t key : unit_pairs_[static_cast<size_t>(b)]) touched.insert(key);
        for (uint64_t key : unit_pairs_[static_cast<size_t>(merged)]) touched.insert(key);
        for (uint64_t key : touched) refresh_pair(key);
        return merged;
    }

    size_t target_;
    int64_t min_frequency_;
    std::vector<std::string> alphabet_;
    std::vector<std::string> word_strings_;
    std::vector<Word> words_;
    std::vector<std::string> unit_text_;
    std::unordered_map<std::string, int32_t> unit_id_;
    std::vector<int64_t> unit_count_;
    std::vector<std::unordered_set<uint64_t>> unit_pairs_;
    std::unordered_map<uint64_t, PairStat> pair_stats_;
    std::set<Sel, SelCmp> selection_;
};

}  // namespace detail

// Trains a WordPiece vocabulary. The result holds the five specials at ids
// 0-4, the corpus alphabet (plain then continuation form, each sorted), and
// learned merges in merge order; it has exactly `vocab_size` entries when
// the corpus supports that many merges, fewer if merges are exhausted first.
inline Vocab train_wordpiece(const std::vector<SentenceRecord>& corpus, size_t vocab_size,
                             int64_t min_frequency = 2) {
    detail::WordPieceTrainer trainer(corpus, vocab_size, min_frequency);
    return Vocab::from_tokens(trainer.run());
}

}  // namespace bertkit::text
