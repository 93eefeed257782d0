#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bertkit/common.hpp"
#include "bertkit/nn/model_config.hpp"
#include "bertkit/rng.hpp"

namespace bertkit::nn {

struct Tensor {
    std::vector<int64_t> shape;
    std::vector<float> data;

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return n;
    }
};

// Named f32 parameter tensors plus the architecture they belong to.
// Serialization is byte-exact: save/load round trips are bit-identical.
struct Checkpoint {
    ModelConfig config;
    uint32_t format_version = 1;
    std::map<std::string, std::string> metadata;
    std::map<std::string, Tensor> tensors;
};

// All weights truncated-normal(0, 0.02), biases zero, norm gains one;
// deterministic in the seed (tensors are filled in schema order).
inline Checkpoint init_model(const ModelConfig& config, uint64_t seed) {
    config.validate();
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.metadata["seed"] = std::to_string(seed);
    auto rng = make_rng(derive_seed(seed, "init"));
    for_each_parameter(config, [&](const ParamInfo& p) {
        Tensor t;
        t.shape = (p.rank == 1) ? std::vector<int64_t>{p.cols}
                                : std::vector<int64_t>{p.rows, p.cols};
        t.data.resize(static_cast<size_t>(p.rows * p.cols));
        switch (p.kind) {
            case ParamKind::weight:
                for (auto& x : t.data) x = static_cast<float>(truncated_normal(rng, 0.02));
                break;
            case ParamKind::bias:
                break;  // zeros
            case ParamKind::gain:
                for (auto& x : t.data) x = 1.0f;
                break;
        }
        ckpt.tensors.emplace(p.name, std::move(t));
    });
    return ckpt;
}

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(os, buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!is) throw DataError("checkpoint: unexpected end of file");
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string config_text(const ModelConfig& c) {
    std::ostringstream os;
    os << "num_layers=" << c.num_layers << '\n'
       << "hidden_size=" << c.hidden_size << '\n'
       << "num_heads=" << c.num_heads << '\n'
       << "ff_size=" << c.ff_size << '\n'
       << "vocab_size=" << c.vocab_size << '\n'
       << "max_positions=" << c.max_positions << '\n'
       << "num_segments=" << c.num_segments << '\n'
       << "dropout_prob=" << format_double(c.dropout_prob) << '\n'
       << "layer_norm_eps=" << format_double(c.layer_norm_eps) << '\n';
    return os.str();
}

inline ModelConfig parse_config_text(const std::string& text) {
    ModelConfig c;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw DataError("checkpoint: bad config line: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "num_layers") c.num_layers = std::stoll(value);
        else if (key == "hidden_size") c.hidden_size = std::stoll(value);
        else if (key == "num_heads") c.num_heads = std::stoll(value);
        else if (key == "ff_size") c.ff_size = std::stoll(value);
        else if (key == "vocab_size") c.vocab_size = std::stoll(value);
        else if (key == "max_positions") c.max_positions = std::stoll(value);
        else if (key == "num_segments") c.num_segments = std::stoll(value);
        else if (key == "dropout_prob") c.dropout_prob = std::stod(value);
        else if (key == "layer_norm_eps") c.layer_norm_eps = std::stod(value);
        else throw DataError("checkpoint: unknown config key: " + key);
    }
    return c;
}

inline constexpr char kMagic[8] = {'B', 'K', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr uint32_t kFormatVersion = 1;

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint: " + path);

    detail::put_bytes(os, detail::kMagic, sizeof(detail::kMagic));
    detail::put_le<uint32_t>(os, detail::kFormatVersion);

    const std::string config = detail::config_text(ckpt.config);
    detail::put_le<uint64_t>(os, config.size());
    detail::put_bytes(os, config.data(), config.size());

    std::ostringstream meta;
    for (const auto& [k, v] : ckpt.metadata) {
        if (k.find('\n') != std::string::npos || v.find('\n') != std::string::npos ||
            k.find('=') != std::string::npos) {
            throw ConfigError("checkpoint metadata keys/values must not contain '=' or newlines");
        }
        meta << k << '=' << v << '\n';
    }
    const std::string meta_text = meta.str();
    detail::put_le<uint64_t>(os, meta_text.size());
    detail::put_bytes(os, meta_text.data(), meta_text.size());

    detail::put_le<uint64_t>(os, ckpt.tensors.size());
    uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        detail::put_le<uint16_t>(os, static_cast<uint16_t>(name.size()));
        detail::put_bytes(os, name.data(), name.size());
        detail::put_le<uint8_t>(os, 0);  // dtype 0 = f32 little-endian
        detail::put_le<uint8_t>(os, static_cast<uint8_t>(t.shape.size()));
        for (int64_t d : t.shape) detail::put_le<uint64_t>(os, static_cast<uint64_t>(d));
        detail::put_le<uint64_t>(os, offset);
        const uint64_t nbytes = static_cast<uint64_t>(t.data.size()) * 4;
        detail::put_le<uint64_t>(os, nbytes);
        offset += nbytes;
    }

    detail::put_le<uint64_t>(os, offset);
    for (const auto& [name, t] : ckpt.tensors) {
        for (float x : t.data) {
            uint32_t bits;
            std::memcpy(&bits, &x, 4);
            detail::put_le<uint32_t>(os, bits);
        }
    }
    if (!os) throw IoError("write failure on checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path, bool strict_nan_check = false) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path);

    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, detail::kMagic, 8) != 0) {
        throw DataError("not a checkpoint file (bad magic): " + path);
    }
    const uint32_t version = detail::get_le<uint32_t>(is);
    if (version != detail::kFormatVersion) {
        throw DataError("unsupported checkpoint format version " + std::to_string(version));
    }

    Checkpoint ckpt;
    ckpt.format_version = version;

    const uint64_t config_len = detail::get_le<uint64_t>(is);
    std::string config_text(config_len, '\0');
    is.read(config_text.data(), static_cast<std::streamsize>(config_len));
    if (!is) throw DataError("checkpoint: truncated config block");
    ckpt.config = detail::parse_config_text(config_text);

    const uint64_t meta_len = detail::get_le<uint64_t>(is);
    std::string meta_text(meta_len, '\0');
    is.read(meta_text.data(), static_cast<std::streamsize>(meta_len));
    if (!is) throw DataError("checkpoint: truncated metadata block");
    {
        std::istringstream ms(meta_text);
        std::string line;
        while (std::getline(ms, line)) {
            const size_t eq = line.find('=');
            if (eq == std::string::npos) throw DataError("checkpoint: bad metadata line");
            ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
        }
    }

    struct Entry {
        std::string name;
        std::vector<int64_t> shape;
        uint64_t offset;
        uint64_t nbytes;
    };
    const uint64_t count = detail::get_le<uint64_t>(is);
    std::vector<Entry> entries;
    entries.reserve(count);
    for (uint64_t i = 0; i < count; ++i) {
        Entry e;
        const uint16_t name_len = detail::get_le<uint16_t>(is);
        e.name.resize(name_len);
        is.read(e.name.data(), name_len);
        const uint8_t dtype = detail::get_le<uint8_t>(is);
        if (dtype != 0) throw DataError("checkpoint: unsupported dtype for tensor " + e.name);
        const uint8_t rank = detail::get_le<uint8_t>(is);
        for (uint8_t d = 0; d < rank; ++d) {
            e.shape.push_back(static_cast<int64_t>(detail::get_le<uint64_t>(is)));
        }
        e.offset = detail::get_le<uint64_t>(is);
        e.nbytes = detail::get_le<uint64_t>(is);
        entries.push_back(std::move(e));
    }

    const uint64_t payload_len = detail::get_le<uint64_t>(is);
    std::string payload(payload_len, '\0');
    is.read(payload.data(), static_cast<std::streamsize>(payload_len));
    if (!is || static_cast<uint64_t>(is.gcount()) != payload_len) {
        throw DataError("checkpoint: payload shorter than manifest declares");
    }

    for (const auto& e : entries) {
        int64_t numel = 1;
        for (int64_t d : e.shape) numel *= d;
        if (e.nbytes != static_cast<uint64_t>(numel) * 4) {
            throw DataError("checkpoint: tensor " + e.name + " has " + std::to_string(e.nbytes) +
                            " bytes but shape implies " + std::to_string(numel * 4));
        }
        if (e.offset + e.nbytes > payload_len) {
            throw DataError("checkpoint: tensor " + e.name + " extends past the payload");
        }
        Tensor t;
        t.shape = e.shape;
        t.data.resize(static_cast<size_t>(numel));
        for (int64_t k = 0; k < numel; ++k) {
            uint32_t bits = 0;
            const unsigned char* p =
                reinterpret_cast<const unsigned char*>(payload.data()) + e.offset + 4 * k;
            for (int b = 0; b < 4; ++b) bits |= static_cast<uint32_t>(p[b]) << (8 * b);
            float x;
            std::memcpy(&x, &bits, 4);
            if (strict_nan_check && std::isnan(x)) {
                throw NumericError("checkpoint: NaN in tensor " + e.name);
            }
            t.data[static_cast<size_t>(k)] = x;
        }
        ckpt.tensors.emplace(e.name, std::move(t));
    }
    return ckpt;
}

// Validates that the tensor set matches the config's schema exactly.
inline void validate_checkpoint(const Checkpoint& ckpt) {
    ckpt.config.validate();
    size_t expected = 0;
    for_each_parameter(ckpt.config, [&](const ParamInfo& p) {
        ++expected;
        auto it = ckpt.tensors.find(p.name);
        if (it == ckpt.tensors.end()) {
            throw DataError("checkpoint is missing tensor " + p.name);
        }
        const auto& shape = it->second.shape;
        const bool ok = (p.rank == 1) ? (shape.size() == 1 && shape[0] == p.cols)
                                      : (shape.size() == 2 && shape[0] == p.rows &&
                                         shape[1] == p.cols);
        if (!ok) throw DataError("checkpoint tensor " + p.name + " has the wrong shape");
    });
    if (ckpt.tensors.size() != expected) {
        throw DataError("checkpoint has " + std::to_string(ckpt.tensors.size()) +
                        " tensors; schema expects " + std::to_string(expected));
    }
}

// Keeps the first `keep_layers` transformer layers plus embeddings, pooler
// and MLM head, all copied bit-exactly. Only config.num_layers and metadata
// change.
inline Checkpoint truncate_checkpoint(const Checkpoint& src, int64_t keep_layers) {
    if (keep_layers < 1 || keep_layers > src.config.num_layers) {
        throw ConfigError("keep_layers must be in [1, " + std::to_string(src.config.num_layers) +
                          "], got " + std::to_string(keep_layers));
    }
    Checkpoint out;
    out.config = src.config;
    out.config.num_layers = keep_layers;
    out.format_version = src.format_version;
    out.metadata = src.metadata;
    out.metadata["truncated_from_layers"] = std::to_string(src.config.num_layers);
    for_each_parameter(out.config, [&](const ParamInfo& p) {
        auto it = src.tensors.find(p.name);
        if (it == src.tensors.end()) throw DataError("checkpoint is missing tensor " + p.name);
        out.tensors.emplace(p.name, it->second);
    });
    return out;
}

}  // namespace bertkit::nn
