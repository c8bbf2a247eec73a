#pragma once

#include "cascadeflow/tensor.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace cascadeflow {

// Tensor-pack container: a magic/version header, a JSON metadata block, a
// manifest of named tensors (shape, dtype, byte offset, CRC-32 checksum),
// then packed little-endian f32 payloads. Serialization is byte-deterministic
// for identical content (JSON keys are sorted, offsets assigned in entry
// order), which the reproducibility guarantees rely on.
struct NamedTensor {
    std::string name;
    std::vector<std::int64_t> shape;
    std::vector<double> data;  // converted from/to f32 at the container edge
};

struct Container {
    nlohmann::json meta;  // free-form; must be an object
    std::vector<NamedTensor> tensors;

    const NamedTensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
};

inline constexpr char kContainerMagic[8] = {'T', 'P', 'A', 'C', 'K', '0', '0', '1'};

void save_container(const std::string& path, const Container& c);

// Verifies magic, manifest consistency (offsets non-overlapping, byte sizes
// matching shapes) and every checksum before returning data.
Container load_container(const std::string& path);

// Round a double through f32 precision (what a container round-trip does).
double to_f32_precision(double x);

// Shape-tagged helpers for the common payload kinds.
NamedTensor video_tensor_entry(const std::string& name, const VideoTensor& v);
VideoTensor entry_to_video(const NamedTensor& t);
NamedTensor latent_tensor_entry(const std::string& name, const LatentTensor& z);
LatentTensor entry_to_latent(const NamedTensor& t);

}  // namespace cascadeflow
