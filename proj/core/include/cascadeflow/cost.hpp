#pragma once

#include <string>
#include <vector>

namespace cascadeflow {

// Analytic inference-cost model for full-attention transformers over latent
// token grids:
//   attention term = kappa_attn   * N * L * m^2 * C
//   linear term    = kappa_linear * N * L * m   * C^2
// with m = ((frames-1)/temporal_ratio + 1) * (height/spatial_ratio) *
// (width/spatial_ratio) evaluated in reals, N field evaluations, L layers,
// width C. The two coefficients are fitted to measured wall-clock anchors.
struct CostSpec {
    double frames = 49;
    double height = 1080;
    double width = 1920;
    double spatial_ratio = 8;
    double temporal_ratio = 4;
    double layers = 42;
    double dim = 3072;
    double steps = 50;  // model evaluations N

    double tokens() const;
    void validate() const;
};

struct CostModel {
    double kappa_attn = 0.0;
    double kappa_linear = 0.0;
};

struct CostBreakdown {
    double attn = 0.0;
    double linear = 0.0;
    double total = 0.0;
};

CostBreakdown attn_cost(const CostSpec& spec, const CostModel& model);

// Solve the 2x2 system so the model reproduces both anchors exactly.
// Throws if the system is singular or a coefficient comes out non-positive.
CostModel fit_cost_model(const CostSpec& a, double seconds_a, const CostSpec& b, double seconds_b);

struct PlanStage {
    std::string name;
    CostSpec spec;
};

struct PlanRow {
    std::string name;
    CostBreakdown cost;
};

struct PlanReport {
    std::vector<PlanRow> rows;
    double total = 0.0;
};

PlanReport plan_cost(const std::vector<PlanStage>& stages, const CostModel& model);

// ---- Reference presets -------------------------------------------------
// Model-size constants used by the presets (layer count / width pairs for
// the large single-stage model and the smaller enhancement model).
inline constexpr double kLargeLayers = 42, kLargeDim = 3072;
inline constexpr double kSmallLayers = 30, kSmallDim = 1920;

// Wall-clock calibration anchors for the fitted model: a 50-eval run of the
// large model at 270p and at 1080p.
inline constexpr double kAnchorLowResSeconds = 30.0;
inline constexpr double kAnchorHighResSeconds = 2150.0;

// Published totals the fitted model is compared against (not fitted to).
inline constexpr double kReferenceNoiseCascadeSeconds = 571.5;
inline constexpr double kReferenceTransportCascadeSeconds = 102.3;

CostSpec preset_large_270p();   // 480x270, N=50
CostSpec preset_large_1080p();  // 1920x1080, N=50
// Second-stage presets at 1080p with the smaller model.
CostSpec preset_small_1080p_transport();  // N=4 (few-step transport)
CostSpec preset_small_1080p_cascade();    // N=30 (re-generates from noise)

CostModel fitted_reference_model();

// The three inference paradigms the report compares.
std::vector<PlanStage> plan_single_stage();
std::vector<PlanStage> plan_noise_cascade();
std::vector<PlanStage> plan_transport_cascade();

}  // namespace cascadeflow
