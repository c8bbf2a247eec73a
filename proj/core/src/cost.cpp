#include "cascadeflow/cost.hpp"

#include <cmath>
#include <stdexcept>

namespace cascadeflow {

void CostSpec::validate() const {
    if (frames < 1 || height <= 0 || width <= 0) throw std::invalid_argument("cost spec: bad grid");
    if (spatial_ratio < 1 || temporal_ratio < 1)
        throw std::invalid_argument("cost spec: ratios must be >= 1");
    if (layers < 1 || dim < 1 || steps < 1)
        throw std::invalid_argument("cost spec: layers/dim/steps must be >= 1");
}

double CostSpec::tokens() const {
    validate();
    double t = (frames - 1.0) / temporal_ratio + 1.0;
    double h = height / spatial_ratio;
    double w = width / spatial_ratio;
    return t * h * w;
}

CostBreakdown attn_cost(const CostSpec& spec, const CostModel& model) {
    double m = spec.tokens();
    CostBreakdown c;
    c.attn = model.kappa_attn * spec.steps * spec.layers * m * m * spec.dim;
    c.linear = model.kappa_linear * spec.steps * spec.layers * m * spec.dim * spec.dim;
    c.total = c.attn + c.linear;
    return c;
}

CostModel fit_cost_model(const CostSpec& a, double seconds_a, const CostSpec& b,
                         double seconds_b) {
    double ma = a.tokens(), mb = b.tokens();
    double A1 = a.steps * a.layers * ma * ma * a.dim;
    double B1 = a.steps * a.layers * ma * a.dim * a.dim;
    double A2 = b.steps * b.layers * mb * mb * b.dim;
    double B2 = b.steps * b.layers * mb * b.dim * b.dim;
    double det = A1 * B2 - A2 * B1;
    if (std::fabs(det) < 1e-30 * std::fabs(A1 * B2))
        throw std::invalid_argument("cost anchors are degenerate; cannot fit two coefficients");
    CostModel m;
    m.kappa_attn = (seconds_a * B2 - seconds_b * B1) / det;
    m.kappa_linear = (A1 * seconds_b - A2 * seconds_a) / det;
    if (!(m.kappa_attn > 0.0) || !(m.kappa_linear > 0.0))
        throw std::invalid_argument("fitted cost coefficients are not positive; anchors inconsistent");
    return m;
}

PlanReport plan_cost(const std::vector<PlanStage>& stages, const CostModel& model) {
    if (stages.empty()) throw std::invalid_argument("plan_cost needs at least one stage");
    PlanReport r;
    for (const auto& s : stages) {
        PlanRow row{s.name, attn_cost(s.spec, model)};
        r.total += row.cost.total;
        r.rows.push_back(std::move(row));
    }
    return r;
}

CostSpec preset_large_270p() {
    CostSpec s;
    s.frames = 49;
    s.height = 270;
    s.width = 480;
    s.spatial_ratio = 8;
    s.temporal_ratio = 4;
    s.layers = kLargeLayers;
    s.dim = kLargeDim;
    s.steps = 50;
    return s;
}

CostSpec preset_large_1080p() {
    CostSpec s = preset_large_270p();
    s.height = 1080;
    s.width = 1920;
    return s;
}

CostSpec preset_small_1080p_transport() {
    CostSpec s = preset_large_1080p();
    s.layers = kSmallLayers;
    s.dim = kSmallDim;
    s.steps = 4;
    return s;
}

CostSpec preset_small_1080p_cascade() {
    CostSpec s = preset_small_1080p_transport();
    s.steps = 30;
    return s;
}

CostModel fitted_reference_model() {
    return fit_cost_model(preset_large_270p(), kAnchorLowResSeconds, preset_large_1080p(),
                          kAnchorHighResSeconds);
}

std::vector<PlanStage> plan_single_stage() {
    return {{"single-stage 1080p (50 evals)", preset_large_1080p()}};
}

std::vector<PlanStage> plan_noise_cascade() {
    return {{"stage 1: 270p (50 evals)", preset_large_270p()},
            {"stage 2: 1080p from noise (30 evals)", preset_small_1080p_cascade()}};
}

std::vector<PlanStage> plan_transport_cascade() {
    return {{"stage 1: 270p (50 evals)", preset_large_270p()},
            {"stage 2: 1080p transport (4 evals)", preset_small_1080p_transport()}};
}

}  // namespace cascadeflow
