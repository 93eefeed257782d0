#pragma once

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/rng.hpp"
#include "bertkit/text/wordpiece.hpp"

namespace bertkit::data {

inline constexpr int32_t kIgnoreLabel = -1;
inline constexpr size_t kDefaultMaxSeqLen = 256;

// One training instance. All five sequences share one length; padding (added
// by pad_batch) is a contiguous suffix with attention_mask 0.
struct EncodedExample {
    std::vector<int32_t> token_ids;
    std::vector<int32_t> position_ids;
    std::vector<int32_t> segment_ids;
    std::vector<int32_t> attention_mask;
    std::vector<int32_t> mlm_labels;

    size_t length() const { return token_ids.size(); }
};

// 15% of positions are selected; of those, 90% become [MASK] and 10% a
// random token. There is deliberately no keep-unchanged bucket.
struct MaskingConfig {
    double select_prob = 0.15;
    double mask_prob_within = 0.90;
    double random_prob_within = 0.10;
    uint64_t seed = 0;

    void validate() const {
        if (select_prob < 0.0 || select_prob > 1.0) {
            throw ConfigError("select_prob must be in [0, 1]");
        }
        const double sum = mask_prob_within + random_prob_within;
        if (sum < 1.0 - 1e-9 || sum > 1.0 + 1e-9) {
            throw ConfigError("mask_prob_within + random_prob_within must equal 1");
        }
    }
};

// Per-example masking outcome counters, kept separately from the ids so the
// mask/random split is observable even when a random draw coincides with
// the original token.
struct MaskingStats {
    size_t candidates = 0;  // non-special positions
    size_t selected = 0;
    size_t masked = 0;
    size_t randomized = 0;
};

namespace detail {

inline void apply_masking(EncodedExample& ex, const text::Vocab& vocab, const MaskingConfig& cfg,
                          Rng& rng, MaskingStats* stats) {
    const auto& sp = vocab.specials();
    for (size_t i = 0; i < ex.token_ids.size(); ++i) {
        const int32_t id = ex.token_ids[i];
        if (id == sp.cls || id == sp.sep || id == sp.pad) continue;
        if (stats) ++stats->candidates;
        if (!bernoulli(rng, cfg.select_prob)) continue;
        ex.mlm_labels[i] = id;
        if (stats) ++stats->selected;
        if (bernoulli(rng, cfg.mask_prob_within)) {
            ex.token_ids[i] = sp.mask;
            if (stats) ++stats->masked;
        } else {
            ex.token_ids[i] = vocab.random_nonspecial_id(rng);
            if (stats) ++stats->randomized;
        }
    }
}

}  // namespace detail

// Wraps ids as [CLS] ids [SEP] and applies masking. Positions run 0..len-1,
// all segments 0.
inline EncodedExample build_mlm_example(const std::vector<int32_t>& ids, const text::Vocab& vocab,
                                        const MaskingConfig& cfg, Rng& rng,
                                        size_t max_seq_len = kDefaultMaxSeqLen,
                                        MaskingStats* stats = nullptr) {
    cfg.validate();
    if (ids.size() + 2 > max_seq_len) {
        throw DataError("sequence of " + std::to_string(ids.size()) +
                        " ids does not fit max_seq_len " + std::to_string(max_seq_len) +
                        " with [CLS]/[SEP]; truncate upstream");
    }
    const auto& sp = vocab.specials();
    EncodedExample ex;
    const size_t len = ids.size() + 2;
    ex.token_ids.reserve(len);
    ex.token_ids.push_back(sp.cls);
    ex.token_ids.insert(ex.token_ids.end(), ids.begin(), ids.end());
    ex.token_ids.push_back(sp.sep);
    for (size_t i = 0; i < len; ++i) ex.position_ids.push_back(static_cast<int32_t>(i));
    ex.segment_ids.assign(len, 0);
    ex.attention_mask.assign(len, 1);
    ex.mlm_labels.assign(len, kIgnoreLabel);
    detail::apply_masking(ex, vocab, cfg, rng, stats);
    return ex;
}

// Translation-pair instance: [CLS] source [SEP] target [SEP]. The second
// segment's positions restart at 0 (the trailing [SEP] continues the reset
// numbering); masking covers both sides.
inline EncodedExample build_tlm_example(const std::vector<int32_t>& source_ids,
                                        const std::vector<int32_t>& target_ids,
                                        const text::Vocab& vocab, const MaskingConfig& cfg,
                                        Rng& rng, size_t max_seq_len = kDefaultMaxSeqLen,
                                        MaskingStats* stats = nullptr) {
    cfg.validate();
    if (source_ids.size() + target_ids.size() + 3 > max_seq_len) {
        throw DataError("parallel pair of " +
                        std::to_string(source_ids.size() + target_ids.size()) +
                        " ids does not fit max_seq_len " + std::to_string(max_seq_len) +
                        " with specials; truncate upstream");
    }
    const auto& sp = vocab.specials();
    EncodedExample ex;
    ex.token_ids.push_back(sp.cls);
    ex.token_ids.insert(ex.token_ids.end(), source_ids.begin(), source_ids.end());
    ex.token_ids.push_back(sp.sep);
    const size_t first_len = ex.token_ids.size();
    ex.token_ids.insert(ex.token_ids.end(), target_ids.begin(), target_ids.end());
    ex.token_ids.push_back(sp.sep);

    const size_t len = ex.token_ids.size();
    for (size_t i = 0; i < first_len; ++i) ex.position_ids.push_back(static_cast<int32_t>(i));
    for (size_t i = 0; i < len - first_len; ++i) ex.position_ids.push_back(static_cast<int32_t>(i));
    ex.segment_ids.assign(first_len, 0);
    ex.segment_ids.resize(len, 1);
    ex.attention_mask.assign(len, 1);
    ex.mlm_labels.assign(len, kIgnoreLabel);
    detail::apply_masking(ex, vocab, cfg, rng, stats);
    return ex;
}

namespace detail {

// Deterministic overflow rule for sentence pairs: drop tail tokens from the
// longer side first; when equal, alternate starting with the first side.
inline void truncate_pair_to_fit(std::vector<int32_t>& a, std::vector<int32_t>& b, size_t budget) {
    bool trim_first = true;
    while (a.size() + b.size() > budget) {
        if (a.size() > b.size()) {
            a.pop_back();
        } else if (b.size() > a.size()) {
            b.pop_back();
        } else {
            (trim_first ? a : b).pop_back();
            trim_first = !trim_first;
        }
    }
}

}  // namespace detail

// Unmasked sentence-pair instance for fine-tuning: [CLS] a [SEP] b [SEP]
// with segments 0/1 and monotone positions (no TLM-style reset). An empty b
// degenerates to a single-segment example.
inline EncodedExample build_pair_example(std::vector<int32_t> a, std::vector<int32_t> b,
                                         const text::Vocab& vocab,
                                         size_t max_seq_len = kDefaultMaxSeqLen) {
    const auto& sp = vocab.specials();
    const size_t specials = b.empty() ? 2 : 3;
    if (a.size() + b.size() + specials > max_seq_len) {
        detail::truncate_pair_to_fit(a, b, max_seq_len - specials);
    }
    EncodedExample ex;
    ex.token_ids.push_back(sp.cls);
    ex.token_ids.insert(ex.token_ids.end(), a.begin(), a.end());
    ex.token_ids.push_back(sp.sep);
    const size_t first_len = ex.token_ids.size();
    if (!b.empty()) {
        ex.token_ids.insert(ex.token_ids.end(), b.begin(), b.end());
        ex.token_ids.push_back(sp.sep);
    }
    const size_t len = ex.token_ids.size();
    for (size_t i = 0; i < len; ++i) ex.position_ids.push_back(static_cast<int32_t>(i));
    ex.segment_ids.assign(first_len, 0);
    ex.segment_ids.resize(len, 1);
    ex.attention_mask.assign(len, 1);
    ex.mlm_labels.assign(len, kIgnoreLabel);
    return ex;
}

// Rectangular batch, row-major [rows x cols].
struct Batch {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<int32_t> token_ids;
    std::vector<int32_t> position_ids;
    std::vector<int32_t> segment_ids;
    std::vector<int32_t> attention_mask;
    std::vector<int32_t> mlm_labels;
};

// Right-pads every example to batch_len. Padded slots carry pad_id, zero
// attention, ignore labels and positions that continue the last value.
inline Batch pad_batch(const std::vector<EncodedExample>& examples, int32_t pad_id,
                       size_t batch_len) {
    if (examples.empty()) throw DataError("pad_batch: empty batch");
    Batch batch;
    batch.rows = examples.size();
    batch.cols = batch_len;
    const size_t n = batch.rows * batch.cols;
    batch.token_ids.reserve(n);
    batch.position_ids.reserve(n);
    batch.segment_ids.reserve(n);
    batch.attention_mask.reserve(n);
    batch.mlm_labels.reserve(n);
    for (const auto& ex : examples) {
        if (ex.length() > batch_len) {
            throw DataError("pad_batch: example length " + std::to_string(ex.length()) +
                            " exceeds batch_len " + std::to_string(batch_len));
        }
        batch.token_ids.insert(batch.token_ids.end(), ex.token_ids.begin(), ex.token_ids.end());
        batch.position_ids.insert(batch.position_ids.end(), ex.position_ids.begin(),
                                  ex.position_ids.end());
        batch.segment_ids.insert(batch.segment_ids.end(), ex.segment_ids.begin(),
                                 ex.segment_ids.end());
        batch.attention_mask.insert(batch.attention_mask.end(), ex.attention_mask.begin(),
                                    ex.attention_mask.end());
        batch.mlm_labels.insert(batch.mlm_labels.end(), ex.mlm_labels.begin(),
                                ex.mlm_labels.end());
        int32_t next_pos = ex.position_ids.empty() ? 0 : ex.position_ids.back() + 1;
        const int32_t last_segment = ex.segment_ids.empty() ? 0 : ex.segment_ids.back();
        for (size_t p = ex.length(); p < batch_len; ++p) {
            batch.token_ids.push_back(pad_id);
            batch.position_ids.push_back(next_pos++);
            batch.segment_ids.push_back(last_segment);
            batch.attention_mask.push_back(0);
            batch.mlm_labels.push_back(kIgnoreLabel);
        }
    }
    return batch;
}

// Human-readable rendering used by the dump-examples debug command.
inline std::string format_example(const EncodedExample& ex, const text::Vocab& vocab) {
    std::ostringstream os;
    auto row = [&os](const char* name, const std::vector<int32_t>& v, bool labels = false) {
        os << name;
        for (int32_t x : v) {
            os << ' ';
            if (labels && x == kIgnoreLabel) {
                os << '-';
            } else {
                os << x;
            }
        }
        os << '\n';
    };
    os << "tokens:";
    for (int32_t id : ex.token_ids) os << ' ' << vocab.token(id);
    os << '\n';
    row("token_ids:", ex.token_ids);
    row("positions:", ex.position_ids);
    row("segments:", ex.segment_ids);
    row("attention:", ex.attention_mask);
    row("labels:", ex.mlm_labels, true);
    return os.str();
}

}  // namespace bertkit::data
