#pragma once

#include "cascadeflow/checkpoint.hpp"
#include "cascadeflow/codec.hpp"
#include "cascadeflow/degrade.hpp"
#include "cascadeflow/dit.hpp"
#include "cascadeflow/flowmatch.hpp"
#include "cascadeflow/metrics.hpp"
#include "cascadeflow/runconfig.hpp"
#include "cascadeflow/sampler.hpp"
#include "cascadeflow/synthdata.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace cascadeflow {

// ---------------------------------------------------------------------------
// Assembled run configuration. Everything a command needs, cross-validated:
// codec ratios must divide the dataset grids, the sampler's noise step must
// lie inside the schedule, and unknown config keys are rejected outright.
// ---------------------------------------------------------------------------
struct PipelineConfig {
    DatasetConfig data;
    CodecConfig codec;

    std::int64_t schedule_steps = 1000;
    double variance_lo = 1e-4;
    double variance_hi = 2e-2;

    PixelDegradeConfig pixel;
    StepRange step_range;  // {0, 0} trains the pixel-only ablation

    DiTConfig stage1;
    DiTConfig stage2;
    TrainOptions stage1_train;
    TrainOptions stage2_train;

    SampleConfig sample;             // enhancement-stage inference defaults
    std::int64_t stage1_steps = 50;  // generator runs at a generous step count
    double stage1_cfg = 1.0;

    std::uint64_t seed = 1;

    NoiseSchedule make_schedule() const;
    LatentShape lr_latent() const;  // generator's token grid
    LatentShape hr_latent() const;  // enhancement-stage token grid
    void validate() const;
};

// Builds and validates the configuration; throws std::invalid_argument with
// the offending key on unknown keys or bad values (commands fail before
// producing any output).
PipelineConfig assemble_pipeline_config(const ConfigMap& map);

// ---------------------------------------------------------------------------
// Checkpoint persistence (tensor-pack container; f32 payloads).
// ---------------------------------------------------------------------------
nlohmann::json dit_config_to_json(const DiTConfig& cfg);
DiTConfig dit_config_from_json(const nlohmann::json& j);

struct ModelCheckpoint {
    std::string role;  // "stage1" | "stage2"
    DiTConfig config;
    ParamStore params;
    OptState opt;
    std::int64_t iteration = 0;
    std::string rng_state;        // training stream state at snapshot time
    nlohmann::json provenance;    // codec/schedule snapshot + config hash
};

void save_model_checkpoint(const std::string& path, const ModelCheckpoint& m);
ModelCheckpoint load_model_checkpoint(const std::string& path);

// Provenance snapshot for a run (embedded in checkpoints, compared on load).
nlohmann::json provenance_for(const PipelineConfig& pc);

// Rejects a checkpoint whose role, codec, or schedule disagrees with the run
// configuration — caught before any compute. Grids are deliberately not
// compared (resolution transfer is a supported use).
void check_checkpoint_compat(const ModelCheckpoint& m, const std::string& expected_role,
                             const PipelineConfig& pc);

// ---------------------------------------------------------------------------
// Dataset access.
// ---------------------------------------------------------------------------
struct ClipStore {
    std::vector<ManifestEntry> entries;  // manifest order (ascending id)
    std::vector<ClipData> clips;         // parallel to entries
};

// split is "train" or "val"; reads <data_dir>/<split>_manifest.tsv and
// preloads every clip (verifying content hashes).
ClipStore load_clip_store(const std::string& data_dir, const std::string& split);

// ---------------------------------------------------------------------------
// Training orchestration. Deterministic given the config (seed included).
// ---------------------------------------------------------------------------
// Generator stage: flow from Gaussian noise to encoded low-res latents.
// init_from (optional) seeds the parameters from an existing model before
// any adapter is attached — the adaptation path.
ModelCheckpoint run_stage1_training(const PipelineConfig& pc, const ClipStore& data,
                                    const LogSink& log, const SnapshotSink& snap,
                                    const ParamStore* init_from = nullptr);

// Enhancement stage: flow from degraded high-res latents to clean ones.
ModelCheckpoint run_stage2_training(const PipelineConfig& pc, const ClipStore& data,
                                    const LogSink& log, const SnapshotSink& snap);

// ---------------------------------------------------------------------------
// Generation.
// ---------------------------------------------------------------------------
struct GenerateOutputs {
    VideoTensor preview_lr;  // decoded generator output, low-res grid
    VideoTensor preview_up;  // bicubic upsample to the high-res grid
    VideoTensor final_hr;    // enhanced output
    std::int64_t stage1_evals = 0;
    std::int64_t stage2_evals = 0;
};

// Generator-only path (the preview half of preview-then-commit).
VideoTensor stage1_sample(const PipelineConfig& pc, const ModelCheckpoint& m1, std::int64_t cond,
                          Rng& rng, RopeCache& ropes, std::int64_t* evals = nullptr);

GenerateOutputs two_stage_generate(const PipelineConfig& pc, const ModelCheckpoint& m1,
                                   const ModelCheckpoint& m2, std::int64_t cond, Rng& rng,
                                   RopeCache& ropes1, RopeCache& ropes2);

// ---------------------------------------------------------------------------
// Evaluation and sweeps.
// ---------------------------------------------------------------------------
enum class EvalMode { enhance, two_stage };

struct EvalRow {
    std::int64_t id = 0;
    std::int64_t cond = 0;
    double psnr_model = 0, psnr_baseline = 0;
    double hf_model = 0, hf_baseline = 0, hf_reference = 0;
    std::int64_t evals = 0;
};

struct EvalReport {
    EvalMode mode = EvalMode::enhance;
    SampleConfig sample;
    std::vector<EvalRow> rows;  // ordered by manifest id
    double mean_psnr_model = 0, mean_psnr_baseline = 0;
    double mean_hf_model = 0, mean_hf_baseline = 0, mean_hf_reference = 0;
    std::int64_t total_evals = 0;

    std::string table() const;  // aligned plain text
    std::string jsonl() const;  // one record per row plus a summary record
};

// enhance mode: baseline is the bicubic-upsampled low-res clip, the model
// enhances it, both scored against the stored high-res clip. two_stage mode:
// the generator produces the preview for the row's class and the reference
// is the deterministic class render (the stored clip). Rows are reseeded per
// clip id, so a report is independent of evaluation order or subset.
EvalReport run_eval(const PipelineConfig& pc, EvalMode mode, const ModelCheckpoint* m1,
                    const ModelCheckpoint& m2, const ClipStore& val, const SampleConfig& sc);

enum class SweepAxis { nfe, cfg, noise };

SweepAxis sweep_axis_from_str(const std::string& s);
std::vector<double> default_sweep_values(SweepAxis axis);
// Published recommended operating ranges: NFE 4-6, CFG 10-13, noise 650-750.
bool sweep_recommended(SweepAxis axis, double value);

struct SweepPoint {
    double value = 0;
    bool recommended = false;
    double mean_psnr = 0;
    double mean_hf = 0;
    std::int64_t total_evals = 0;
};

struct SweepResult {
    SweepAxis axis = SweepAxis::nfe;
    SampleConfig base;
    std::vector<SweepPoint> points;

    std::string table() const;  // aligned text; '*' marks recommended rows
    std::string jsonl() const;
};

SweepResult run_sweep(const PipelineConfig& pc, const ModelCheckpoint& m2, const ClipStore& val,
                      SweepAxis axis, const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Artifact plumbing.
// ---------------------------------------------------------------------------
// Single-owner output directory: creates it and holds a `.lock` file created
// with O_EXCL; a second concurrent owner fails fast. Removed on destruction.
class OutDirLock {
public:
    explicit OutDirLock(const std::string& dir);
    ~OutDirLock();
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

private:
    std::string lock_path_;
};

// Relative output paths are rooted at $CASCADEFLOW_OUT_ROOT when set.
std::string resolve_out_dir(const std::string& out);

void write_text_file(const std::string& path, const std::string& text);

// Reproducibility record: command, canonical config text and its hash, seed,
// tool version, and the artifact names the run wrote. Deliberately free of
// timestamps so reruns produce identical records.
void write_run_record(const std::string& dir, const std::string& command, const ConfigMap& map,
                      std::uint64_t seed, const std::vector<std::string>& artifacts);

// 8-bit grayscale frame dumps ([-1,1] mapped to [0,255]), one PGM per frame:
// <dir>/<stem>_f000.pgm, ...
void write_pgm_frames(const std::string& dir, const std::string& stem, const VideoTensor& v);

}  // namespace cascadeflow
