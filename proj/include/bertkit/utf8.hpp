#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bertkit/common.hpp"

namespace bertkit {

// Minimal strict UTF-8 codec. Decoding rejects overlong forms, surrogates
// and out-of-range scalars; byte offsets in errors let callers report the
// position.

struct Utf8DecodeResult {
    std::vector<char32_t> codepoints;
    // Byte offset of the first invalid sequence, or npos when valid.
    size_t error_offset = std::string_view::npos;
    bool ok() const { return error_offset == std::string_view::npos; }
};

inline Utf8DecodeResult utf8_decode(std::string_view s) {
    Utf8DecodeResult out;
    out.codepoints.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        const unsigned char b0 = static_cast<unsigned char>(s[i]);
        uint32_t cp = 0;
        size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xe0) == 0xc0) {
            cp = b0 & 0x1f;
            len = 2;
        } else if ((b0 & 0xf0) == 0xe0) {
            cp = b0 & 0x0f;
            len = 3;
        } else if ((b0 & 0xf8) == 0xf0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            out.error_offset = i;
            return out;
        }
        if (i + len > s.size()) {
            out.error_offset = i;
            return out;
        }
        for (size_t k = 1; k < len; ++k) {
            const unsigned char b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xc0) != 0x80) {
                out.error_offset = i;
                return out;
            }
            cp = (cp << 6) | (b & 0x3f);
        }
        static constexpr uint32_t kMinByLen[5] = {0, 0, 0x80, 0x800, 0x10000};
        if (cp < kMinByLen[len] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff)) {
            out.error_offset = i;
            return out;
        }
        out.codepoints.push_back(static_cast<char32_t>(cp));
        i += len;
    }
    return out;
}

inline void utf8_append(std::string& out, char32_t cp) {
    const uint32_t c = static_cast<uint32_t>(cp);
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xc0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xe0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
    } else {
        out.push_back(static_cast<char>(0xf0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3f)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3f)));
    }
}

inline std::string utf8_encode(const std::vector<char32_t>& cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) utf8_append(out, cp);
    return out;
}

}  // namespace bertkit
