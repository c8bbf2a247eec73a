#include "cascadeflow/synthdata.hpp"

#include "cascadeflow/checkpoint.hpp"
#include "cascadeflow/hashing.hpp"
#include "cascadeflow/resample.hpp"
#include "cascadeflow/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cascadeflow {

namespace fs = std::filesystem;

std::int64_t SceneSpec::class_index() const {
    if (direction < 0 || direction >= kNumDirections)
        throw std::invalid_argument("direction " + std::to_string(direction) + " outside [0, 8)");
    return (static_cast<std::int64_t>(shape) * 3 + static_cast<std::int64_t>(texture)) *
               kNumDirections +
           direction;
}

SceneSpec SceneSpec::from_class(std::int64_t index) {
    if (index < 0 || index >= kNumClasses)
        throw std::invalid_argument("class index " + std::to_string(index) + " outside [0, " +
                                    std::to_string(kNumClasses) + ")");
    SceneSpec s;
    s.direction = index % kNumDirections;
    std::int64_t st = index / kNumDirections;
    s.texture = static_cast<TextureFreq>(st % 3);
    s.shape = static_cast<ShapeClass>(st / 3);
    return s;
}

double texture_cycles_per_pixel(TextureFreq f) {
    switch (f) {
        case TextureFreq::low: return 0.06;
        case TextureFreq::mid: return 0.15;
        case TextureFreq::high: return 0.33;
    }
    throw std::invalid_argument("unknown texture band");
}

VideoTensor render_scene(const SceneSpec& spec, std::int64_t frames, std::int64_t height,
                         std::int64_t width) {
    if (frames < 1 || height < 4 || width < 4)
        throw std::invalid_argument("render grid too small: " + shape_str({frames, height, width}));
    (void)spec.class_index();  // validates the direction

    const double tau = 6.283185307179586476925286766559;
    const double angle = tau * static_cast<double>(spec.direction) / 8.0;
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double size = 0.30 * static_cast<double>(std::min(height, width)) / 2.0;
    const double freq = texture_cycles_per_pixel(spec.texture);
    // Texture orientation and phase are fixed functions of the class so the
    // clip is fully determined by the spec.
    const double tex_angle = 0.6;
    const double phase = tau * std::fmod(0.618 * static_cast<double>(spec.class_index()), 1.0);
    const double cx = static_cast<double>(width - 1) / 2.0;
    const double cy = static_cast<double>(height - 1) / 2.0;
    const double half_span = spec.speed * static_cast<double>(frames - 1) / 2.0;

    VideoTensor v(frames, height, width, 1);
    for (std::int64_t f = 0; f < frames; ++f) {
        // Trajectory centered in the frame: from -half_span to +half_span.
        double px = cx + dx * (spec.speed * static_cast<double>(f) - half_span);
        double py = cy + dy * (spec.speed * static_cast<double>(f) - half_span);
        for (std::int64_t y = 0; y < height; ++y)
            for (std::int64_t x = 0; x < width; ++x) {
                double u = static_cast<double>(x) - px;
                double w = static_cast<double>(y) - py;
                double sd;  // signed distance to the shape boundary (inside > 0)
                switch (spec.shape) {
                    case ShapeClass::disk:
                        sd = size - std::sqrt(u * u + w * w);
                        break;
                    case ShapeClass::square:
                        sd = size - std::max(std::fabs(u), std::fabs(w));
                        break;
                    case ShapeClass::bar: {
                        // Elongated along the motion direction.
                        double along = u * dx + w * dy;
                        double across = -u * dy + w * dx;
                        sd = std::min(1.6 * size - std::fabs(along), 0.5 * size - std::fabs(across));
                        break;
                    }
                    default: throw std::invalid_argument("unknown shape class");
                }
                // Soft edge (about one pixel wide) to avoid boundary shimmer.
                double mask = 1.0 / (1.0 + std::exp(-sd / 0.6));
                // Grating rides the object frame, so motion carries texture.
                double g = std::sin(tau * freq * (u * std::cos(tex_angle) + w * std::sin(tex_angle)) +
                                    phase);
                double val = spec.background + mask * (0.45 + 0.5 * g - spec.background);
                v.at(f, y, x, 0) = std::clamp(val, -1.0, 1.0);
            }
    }
    return v;
}

void DatasetConfig::validate() const {
    if (train_clips < 1 || val_clips < 0) throw std::invalid_argument("dataset needs clips >= 1");
    if (frames < 1 || height < 4 || width < 4 || lr_height < 4 || lr_width < 4)
        throw std::invalid_argument("dataset grid too small");
    if (lr_height > height || lr_width > width)
        throw std::invalid_argument("low-res grid larger than high-res grid");
}

namespace {

std::string clip_filename(std::int64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "clip_%06lld.tpack", static_cast<long long>(id));
    return buf;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot hash missing file '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return hex64(fnv1a64(bytes));
}

ManifestEntry write_clip(const std::string& dir, std::int64_t id, std::int64_t cond,
                         const DatasetConfig& cfg) {
    SceneSpec spec = SceneSpec::from_class(cond);
    VideoTensor hr = render_scene(spec, cfg.frames, cfg.height, cfg.width);
    VideoTensor lr = resize_bicubic(hr, cfg.lr_height, cfg.lr_width);
    Container c;
    c.meta["id"] = id;
    c.meta["cond"] = cond;
    c.tensors.push_back(video_tensor_entry("hr", hr));
    c.tensors.push_back(video_tensor_entry("lr", lr));
    std::string rel = "clips/" + clip_filename(id);
    std::string full = dir + "/" + rel;
    save_container(full, c);
    ManifestEntry e;
    e.id = id;
    e.path = rel;
    e.cond = cond;
    e.frames = cfg.frames;
    e.height = cfg.height;
    e.width = cfg.width;
    e.content_hash = file_hash_hex(full);
    return e;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open manifest '" + path + "' for writing");
    f << "# id\tpath\tcond\tframes\theight\twidth\thash\n";
    for (const auto& e : entries)
        f << e.id << '\t' << e.path << '\t' << e.cond << '\t' << e.frames << '\t' << e.height
          << '\t' << e.width << '\t' << e.content_hash << '\n';
    if (!f) throw std::runtime_error("short write to manifest '" + path + "'");
}

}  // namespace

DatasetManifests write_dataset(const std::string& dir, const DatasetConfig& cfg) {
    cfg.validate();
    fs::create_directories(fs::path(dir) / "clips");
    // The seed rotates which classes land on which ids; rendering itself is
    // deterministic per class.
    std::int64_t offset = static_cast<std::int64_t>(mix64(cfg.seed) % kNumClasses);
    DatasetManifests out;
    for (std::int64_t id = 0; id < cfg.train_clips; ++id) {
        std::int64_t cond = (id + offset) % kNumClasses;
        out.train.push_back(write_clip(dir, id, cond, cfg));
    }
    for (std::int64_t i = 0; i < cfg.val_clips; ++i) {
        std::int64_t id = cfg.train_clips + i;  // disjoint id ranges
        std::int64_t cond = (id + offset) % kNumClasses;
        out.val.push_back(write_clip(dir, id, cond, cfg));
    }
    write_manifest(dir + "/train_manifest.tsv", out.train);
    write_manifest(dir + "/val_manifest.tsv", out.val);
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw std::runtime_error("cannot open manifest '" + manifest_path + "'");
    std::vector<ManifestEntry> entries;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        ManifestEntry e;
        if (!(is >> e.id >> e.path >> e.cond >> e.frames >> e.height >> e.width >> e.content_hash))
            throw std::runtime_error("malformed manifest line in '" + manifest_path + "': " + line);
        entries.push_back(std::move(e));
    }
    return entries;
}

ClipData load_clip(const std::string& clip_path) {
    Container c = load_container(clip_path);
    ClipData d;
    d.hr = entry_to_video(c.at("hr"));
    d.lr = entry_to_video(c.at("lr"));
    d.cond = c.meta.value("cond", -1);
    return d;
}

}  // namespace cascadeflow
