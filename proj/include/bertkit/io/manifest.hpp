#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bertkit/common.hpp"
#include "bertkit/text/md5.hpp"

namespace bertkit::io {

// Provenance record written alongside every artifact-producing command:
// the resolved configuration, input digests and output paths needed to
// reproduce the artifact bit-identically.
struct RunManifest {
    std::string command;
    std::string tool_version = kVersion;
    uint64_t seed = 0;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["command"] = command;
        j["tool_version"] = tool_version;
        j["seed"] = seed;
        j["config"] = config;
        auto ins = nlohmann::json::array();
        for (const auto& path : inputs) {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw IoError("manifest: cannot read input " + path);
            std::ostringstream ss;
            ss << in.rdbuf();
            ins.push_back({{"path", path}, {"md5", text::md5_hex(ss.str())}});
        }
        j["inputs"] = ins;
        j["outputs"] = outputs;
        return j;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write manifest: " + path);
        out << to_json().dump(2) << '\n';
    }
};

}  // namespace bertkit::io
