#pragma once

#include "cascadeflow/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cascadeflow {

// Condition classes: shape x texture frequency band x motion direction.
enum class ShapeClass : std::int64_t { disk = 0, square = 1, bar = 2 };
enum class TextureFreq : std::int64_t { low = 0, mid = 1, high = 2 };

inline constexpr std::int64_t kNumDirections = 8;
inline constexpr std::int64_t kNumClasses = 3 * 3 * kNumDirections;  // 72

// A fully-specified scene. Rendering is a pure function of this struct and
// the grid, so one class index always produces the same clip — generated
// previews can be scored against ground-truth renders.
struct SceneSpec {
    ShapeClass shape = ShapeClass::disk;
    TextureFreq texture = TextureFreq::low;
    std::int64_t direction = 0;  // 0..7, angle 2*pi*d/8
    double speed = 1.0;          // pixels per frame at the render grid
    double background = -0.2;

    std::int64_t class_index() const;
    static SceneSpec from_class(std::int64_t index);
};

// Texture spatial frequency in cycles per pixel for each band.
double texture_cycles_per_pixel(TextureFreq f);

// A single-channel clip in [-1, 1]: a textured shape translating across a
// flat background. The trajectory is centered so the shape stays in frame.
VideoTensor render_scene(const SceneSpec& spec, std::int64_t frames, std::int64_t height,
                         std::int64_t width);

struct DatasetConfig {
    std::int64_t train_clips = 120;
    std::int64_t val_clips = 56;
    std::int64_t frames = 9;
    std::int64_t height = 32;  // high-resolution grid
    std::int64_t width = 32;
    std::int64_t lr_height = 16;  // low-resolution grid (separable downsample)
    std::int64_t lr_width = 16;
    std::uint64_t seed = 7;

    void validate() const;
};

struct ManifestEntry {
    std::int64_t id = 0;
    std::string path;  // clip container, relative to the manifest's directory
    std::int64_t cond = 0;
    std::int64_t frames = 0, height = 0, width = 0;
    std::string content_hash;  // hash of the clip file bytes
};

// Renders clips (HR plus downsampled LR stored together) under dir/clips/
// and writes train/val manifests with disjoint id ranges. Returns the
// entries of both splits in manifest order.
struct DatasetManifests {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> val;
};
DatasetManifests write_dataset(const std::string& dir, const DatasetConfig& cfg);

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path);

// Clip container access (tensors "hr" and "lr").
struct ClipData {
    VideoTensor hr;
    VideoTensor lr;
    std::int64_t cond = 0;
};
ClipData load_clip(const std::string& clip_path);

}  // namespace cascadeflow
