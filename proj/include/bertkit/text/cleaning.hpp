#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bertkit/common.hpp"
#include "bertkit/utf8.hpp"

namespace bertkit::text {

// Inclusive codepoint interval [first, last].
struct CodepointRange {
    char32_t first = 0;
    char32_t last = 0;
};

class CleaningConfig {
public:
    bool strip_html = true;
    bool strip_tatweel = true;
    std::vector<CodepointRange> emoji_ranges;
    std::vector<CodepointRange> tashkeel_ranges;
    std::vector<std::string> template_blocklist;

    // The paper names the categories (emoji, tashkeel, tatweel, html) but not
    // codepoints; these defaults cover the standard Arabic diacritic blocks
    // and the common emoji blocks, and remain configurable.
    static CleaningConfig defaults() {
        CleaningConfig cfg;
        cfg.emoji_ranges = {{0x1F300, 0x1FAFF}, {0x2600, 0x27BF}, {0xFE0F, 0xFE0F}};
        cfg.tashkeel_ranges = {{0x0610, 0x061A}, {0x064B, 0x065F}, {0x0670, 0x0670}};
        cfg.normalize();
        return cfg;
    }

    // Sorts and merges each interval list so the non-overlapping/sorted
    // invariant holds by construction.
    void normalize() {
        normalize_ranges(emoji_ranges);
        normalize_ranges(tashkeel_ranges);
    }

    bool is_removed(char32_t cp) const {
        if (strip_tatweel && cp == 0x0640) return true;
        return in_ranges(emoji_ranges, cp) || in_ranges(tashkeel_ranges, cp);
    }

    static CleaningConfig from_json(const nlohmann::json& j) {
        CleaningConfig cfg;
        cfg.strip_html = j.value("strip_html", true);
        cfg.strip_tatweel = j.value("strip_tatweel", true);
        if (j.contains("emoji_ranges")) cfg.emoji_ranges = parse_ranges(j.at("emoji_ranges"));
        if (j.contains("tashkeel")) cfg.tashkeel_ranges = parse_ranges(j.at("tashkeel"));
        if (j.contains("template_blocklist")) {
            for (const auto& p : j.at("template_blocklist")) {
                cfg.template_blocklist.push_back(p.get<std::string>());
            }
        }
        cfg.normalize();
        return cfg;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["strip_html"] = strip_html;
        j["strip_tatweel"] = strip_tatweel;
        j["emoji_ranges"] = ranges_to_json(emoji_ranges);
        j["tashkeel"] = ranges_to_json(tashkeel_ranges);
        j["template_blocklist"] = template_blocklist;
        return j;
    }

    static CleaningConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open cleaning config: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad cleaning config " + path + ": " + e.what());
        }
        return from_json(j);
    }

private:
    static void normalize_ranges(std::vector<CodepointRange>& ranges) {
        std::sort(ranges.begin(), ranges.end(),
                  [](const CodepointRange& a, const CodepointRange& b) { return a.first < b.first; });
        std::vector<CodepointRange> merged;
        for (const auto& r : ranges) {
            if (r.last < r.first) throw ConfigError("codepoint interval has last < first");
            if (!merged.empty() && r.first <= merged.back().last + 1) {
                merged.back().last = std::max(merged.back().last, r.last);
            } else {
                merged.push_back(r);
            }
        }
        ranges = std::move(merged);
    }

    static bool in_ranges(const std::vector<CodepointRange>& ranges, char32_t cp) {
        auto it = std::upper_bound(ranges.begin(), ranges.end(), cp,
                                   [](char32_t v, const CodepointRange& r) { return v < r.first; });
        return it != ranges.begin() && cp <= std::prev(it)->last;
    }

    static char32_t parse_hex_codepoint(const std::string& s) {
        if (s.empty()) throw ConfigError("empty codepoint hex string");
        char32_t v = 0;
        for (char c : s) {
            int d;
            if (c >= '0' && c <= '9') d = c - '0';
            else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
            else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
            else throw ConfigError("bad codepoint hex string: " + s);
            v = v * 16 + static_cast<char32_t>(d);
        }
        if (v > 0x10ffff) throw ConfigError("codepoint out of range: " + s);
        return v;
    }

    // Each entry is either "XXXX" (a single codepoint) or ["XXXX","YYYY"].
    static std::vector<CodepointRange> parse_ranges(const nlohmann::json& j) {
        std::vector<CodepointRange> out;
        for (const auto& e : j) {
            if (e.is_string()) {
                const char32_t cp = parse_hex_codepoint(e.get<std::string>());
                out.push_back({cp, cp});
            } else if (e.is_array() && e.size() == 2) {
                out.push_back({parse_hex_codepoint(e.at(0).get<std::string>()),
                               parse_hex_codepoint(e.at(1).get<std::string>())});
            } else {
                throw ConfigError("codepoint range must be a hex string or a two-element array");
            }
        }
        return out;
    }

    static nlohmann::json ranges_to_json(const std::vector<CodepointRange>& ranges) {
        nlohmann::json out = nlohmann::json::array();
        char buf[16];
        for (const auto& r : ranges) {
            std::snprintf(buf, sizeof(buf), "%04X", static_cast<unsigned>(r.first));
            std::string a = buf;
            std::snprintf(buf, sizeof(buf), "%04X", static_cast<unsigned>(r.last));
            out.push_back(nlohmann::json::array({a, std::string(buf)}));
        }
        return out;
    }
};

namespace detail {

// Decodes the five XML-predefined entities in one left-to-right pass.
inline std::string decode_entities(std::string_view s) {
    static constexpr std::pair<std::string_view, char> kEntities[] = {
        {"&amp;", '&'}, {"&lt;", '<'}, {"&gt;", '>'}, {"&quot;", '"'}, {"&apos;", '\''}};
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '&') {
            bool matched = false;
            for (const auto& [name, ch] : kEntities) {
                if (s.substr(i, name.size()) == name) {
                    out.push_back(ch);
                    i += name.size();
                    matched = true;
                    break;
                }
            }
            if (matched) continue;
        }
        out.push_back(s[i]);
        ++i;
    }
    return out;
}

// Removes complete <...> spans; a '<' with no closing '>' is left alone.
inline std::string strip_tag_spans(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] == '<') {
            const size_t close = s.find('>', i + 1);
            if (close != std::string_view::npos) {
                i = close + 1;
                continue;
            }
        }
        out.push_back(s[i]);
        ++i;
    }
    return out;
}

}  // namespace detail

// Cleans one sentence: entity decoding and tag-span removal iterated to a
// fixed point (so escaped markup is fully unwrapped and the operation is
// idempotent), then configured-codepoint removal and whitespace
// normalization. Returns nullopt when nothing is left.
inline std::optional<std::string> clean_sentence(std::string_view raw, const CleaningConfig& cfg) {
    std::string s(raw);
    if (cfg.strip_html) {
        for (;;) {
            std::string next = detail::strip_tag_spans(detail::decode_entities(s));
            if (next == s) break;
            s = std::move(next);
        }
    }

    auto decoded = utf8_decode(s);
    if (!decoded.ok()) {
        throw DataError("invalid UTF-8 at byte offset " + std::to_string(decoded.error_offset));
    }

    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    bool any = false;
    for (char32_t cp : decoded.codepoints) {
        if (cfg.is_removed(cp)) continue;
        const bool ws = (cp == U' ' || cp == U'\t' || cp == U'\r' || cp == U'\n' ||
                         cp == U'\f' || cp == U'\v');
        if (ws) {
            if (any) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        utf8_append(out, cp);
        any = true;
    }
    if (!any) return std::nullopt;
    return out;
}

}  // namespace bertkit::text
