#pragma once

// Checkpoints: `manifest.txt` (architecture, seeds, config hash, tensor list)
// plus one little-endian float32 blob per tensor, in manifest order.
// Reloading is bit-exact.

#include "fedloc/common.hpp"
#include "fedloc/hmodel.hpp"
#include "fedloc/io.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

namespace fedloc {

struct Checkpoint {
    Network network;
    io::Manifest manifest;  // full manifest, including caller-supplied meta.* keys
};

/// Writes `net` under `dir`. `meta` entries are stored verbatim (use a
/// `meta.` prefix for preprocessing bounds, seeds, config hashes, ...).
inline void save_checkpoint(const Network& net, const std::filesystem::path& dir, const io::Manifest& meta = {}) {
    std::filesystem::create_directories(dir);
    io::Manifest m;
    m.set("format", "fedloc-checkpoint-v1");
    const auto arch = net.config().manifest();
    for (const auto& [k, v] : arch.entries()) {
        m.set(k, v);
    }
    for (const auto& [k, v] : meta.entries()) {
        m.set(k, v);
    }
    const auto params = net.snapshot();
    for (std::size_t i = 0; i < params.size(); ++i) {
        char file[32];
        std::snprintf(file, sizeof(file), "t%03zu.f32", i);
        const auto& t = params.tensors[i];
        m.set("tensor", params.names[i] + "," + std::to_string(t.rows()) + "," + std::to_string(t.cols()) + "," +
                            (params.trainable[i] ? "trainable" : "state") + "," + file);
        std::string blob;
        append_le_f32(std::span<const float>(t.data(), static_cast<std::size_t>(t.size())), blob);
        io::write_file(dir / file, blob);
    }
    m.set("checksum", hex64(checksum(params)));
    io::write_file(dir / "manifest.txt", m.to_string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    auto m = io::Manifest::parse(io::read_file(dir / "manifest.txt"));
    if (m.get("format") != "fedloc-checkpoint-v1") {
        throw DataError("unsupported checkpoint format in " + dir.string());
    }
    Checkpoint cp{Network(HMlpConfig::from_manifest(m)), m};
    ModelParams<float> params;
    for (const auto& line : m.get_all("tensor")) {
        const auto f = io::split(line, ',');
        Eigen::Index rows = 0;
        Eigen::Index cols = 0;
        if (f.size() != 5 || !io::parse_number(f[1], rows) || !io::parse_number(f[2], cols)) {
            throw DataError("malformed tensor entry '" + line + "'");
        }
        const auto values = read_le_f32(io::read_file(dir / std::string(f[4])));
        if (values.size() != static_cast<std::size_t>(rows * cols)) {
            throw DataError("tensor blob " + std::string(f[4]) + " has the wrong size");
        }
        params.names.emplace_back(f[0]);
        params.tensors.push_back(Eigen::Map<const Tensor2<float>>(values.data(), rows, cols));
        params.trainable.push_back(f[3] == "trainable");
    }
    cp.network.load(params);
    if (m.contains("checksum") && m.get("checksum") != hex64(checksum(params))) {
        throw DataError("checkpoint checksum mismatch in " + dir.string());
    }
    return cp;
}

}  // namespace fedloc
