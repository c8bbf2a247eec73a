#pragma once

#include "cascadeflow/graph.hpp"
#include "cascadeflow/rng.hpp"
#include "cascadeflow/tensor.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace cascadeflow {

// Null condition: the class embedding contributes nothing (used for
// classifier-free guidance and condition dropout).
inline constexpr std::int64_t kNullCond = -1;

enum class PosMode { rope3d, absolute };

struct LoraSpec {
    std::int64_t rank = 8;
    double alpha = 16.0;
};

// Transformer over latent voxels (tokens = t*h*w positions, each a
// latent-channel vector), conditioned on flow time, noise step, and an
// optional class id via adaptive layer-norm modulation. Output head is
// zero-initialized, so a fresh model predicts exactly zero.
struct DiTConfig {
    std::int64_t layers = 4;
    std::int64_t dim = 64;
    std::int64_t heads = 4;
    std::int64_t latent_channels = 8;
    std::int64_t cond_classes = 72;

    PosMode pos_mode = PosMode::rope3d;
    // Per-head rotary dim split across (t, h, w); each part even,
    // summing to head_dim. Zeroes mean "use the default split".
    std::int64_t rope_dim_t = 0, rope_dim_h = 0, rope_dim_w = 0;
    double rope_base = 10000.0;
    // Absolute-PE table extents (the training grid). Forward at any grid
    // exceeding these in absolute mode is a rejected input.
    std::int64_t max_t = 8, max_h = 32, max_w = 32;

    std::optional<LoraSpec> lora;

    std::int64_t head_dim() const;
    void validate() const;

    // Low-resolution generator preset: L=6, C=128.
    static DiTConfig stage1_preset(std::int64_t latent_channels, std::int64_t cond_classes);
    // Enhancement-stage preset: L=4, C=64.
    static DiTConfig stage2_preset(std::int64_t latent_channels, std::int64_t cond_classes);
};

// Default even split of head_dim across (t, h, w), roughly 1:1.5:1.5.
std::array<std::int64_t, 3> default_rope_split(std::int64_t head_dim);

struct ParamEntry {
    std::string name;
    Tensor value;
    bool trainable = true;
};

// Ordered, name-indexed parameter set. Entry order is creation order and is
// part of the determinism contract (checkpoints, optimizer state).
class ParamStore {
public:
    void add(std::string name, Tensor value, bool trainable = true);
    bool has(const std::string& name) const;
    ParamEntry& at(const std::string& name);
    const ParamEntry& at(const std::string& name) const;
    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::int64_t count(bool trainable_only) const;  // number of scalars

private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Fresh parameter set. Modulation projections, the final modulation, and the
// output head start at zero (so the initial model is the zero field);
// everything else is N(0, 0.02^2).
ParamStore init_dit_params(const DiTConfig& cfg, Rng& rng);

// Rotary phase angles for one (t, h, w) position: head_dim/2 values, laid
// out as the t-axis pairs, then h, then w. Depends only on the position and
// the split/base, so shifting all positions by a constant shifts every
// phase linearly — the relative-position property tests hook in here.
std::vector<double> rope3d_phases(const DiTConfig& cfg, std::int64_t pt, std::int64_t ph,
                                  std::int64_t pw);

// Tables for a full token grid (row-major over t, h, w).
ad::RopeTables make_rope_tables(const DiTConfig& cfg, std::int64_t t, std::int64_t h,
                                std::int64_t w);

// Absolute sinusoidal position embedding [t*h*w, dim]: the sum of fixed
// per-axis tables. Throws when the grid exceeds the configured table
// extents (absolute mode does not extrapolate).
Tensor make_abs_pos_embedding(const DiTConfig& cfg, std::int64_t t, std::int64_t h,
                              std::int64_t w);

// Names of the weight matrices that receive low-rank adapters.
std::vector<std::string> lora_target_names(const DiTConfig& cfg);

// Adds zero-impact adapters (A random, B zero) for every target and freezes
// all pre-existing entries. cfg.lora must be engaged.
void apply_lora(ParamStore& params, const DiTConfig& cfg, Rng& rng);

// Caches rotary tables per grid; tables must outlive any graph using them.
class RopeCache {
public:
    const ad::RopeTables* get(const DiTConfig& cfg, std::int64_t t, std::int64_t h, std::int64_t w);

private:
    std::map<std::array<std::int64_t, 3>, std::unique_ptr<ad::RopeTables>> cache_;
};

// Graph node ids for every parameter entry, parallel to store order.
struct BoundParams {
    std::vector<ad::Graph::Id> ids;
    const ParamStore* store = nullptr;
    ad::Graph::Id id_of(const std::string& name) const;
};

// Insert all parameters into a graph; gradients tracked for trainable
// entries when with_grads is set.
BoundParams bind_params(ad::Graph& g, const ParamStore& params, bool with_grads);

// Build the model forward pass; returns the output node ([tokens, c]).
// rope may be null in absolute mode.
ad::Graph::Id dit_build(ad::Graph& g, const BoundParams& bp, const DiTConfig& cfg,
                        const LatentTensor& z, double t, std::int64_t noise_step,
                        std::int64_t cond, const ad::RopeTables* rope);

// Convenience no-grad forward returning a latent of z's shape.
LatentTensor dit_forward(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                         const LatentTensor& z, double t, std::int64_t noise_step,
                         std::int64_t cond);

// Sinusoidal featurization used for both flow time (scaled by 1000) and
// noise step; dim entries.
std::vector<double> sinusoidal_features(double value, std::int64_t dim);

}  // namespace cascadeflow
