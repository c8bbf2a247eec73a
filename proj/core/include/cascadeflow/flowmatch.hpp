#pragma once

#include "cascadeflow/degrade.hpp"
#include "cascadeflow/dit.hpp"

#include <functional>
#include <stdexcept>
#include <vector>

namespace cascadeflow {

// Optimizer hyperparameters: decoupled weight decay, bias-corrected moments,
// global-norm gradient clipping applied before the update.
struct AdamWConfig {
    double lr = 4e-5;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 1e-4;
    double eps = 1e-8;
    double clip_norm = 0.1;
};

// First/second moment buffers, parallel to the parameter store's entries
// (empty tensors for frozen entries).
struct OptState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t step = 0;
};

OptState init_opt_state(const ParamStore& params);

// Gradients parallel to the parameter store's entries; empty tensors for
// frozen entries.
struct LossGrads {
    double loss = 0.0;
    std::vector<Tensor> grads;
};

// Flow-matching objective on one pair: the model sees the straight-line
// interpolation Z_t = (1-t) z_lr + t z_hr and regresses the displacement
// z_hr - z_lr.
double fm_loss_value(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                     const TrainPair& pair, double t);

LossGrads fm_loss(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                  const TrainPair& pair, double t);

// Batch version: one graph, losses averaged, gradients of the mean.
LossGrads fm_loss_batch(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                        const std::vector<TrainPair>& pairs, const std::vector<double>& ts);

// Clip-then-AdamW update over trainable entries. Returns the pre-clip global
// gradient norm. Frozen entries are never touched.
double optimizer_step(ParamStore& params, OptState& opt, const std::vector<Tensor>& grads,
                      const AdamWConfig& cfg);

struct TrainLogEntry {
    std::int64_t iteration = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    double lr = 0.0;
};

struct TrainOptions {
    std::int64_t iterations = 500;
    std::int64_t batch = 8;
    AdamWConfig adamw;
    double cond_dropout = 0.1;
    std::int64_t checkpoint_every = 0;  // 0: final snapshot only
    double divergence_loss = 1e4;
};

// Thrown when the loss exceeds the divergence bound or goes non-finite; the
// snapshot sink has already been invoked by then.
struct TrainError : std::runtime_error {
    std::int64_t iteration;
    double loss;
    TrainError(std::int64_t it, double l, const std::string& msg)
        : std::runtime_error(msg), iteration(it), loss(l) {}
};

using PairSource = std::function<TrainPair(Rng&)>;
using LogSink = std::function<void(const TrainLogEntry&)>;
using SnapshotSink =
    std::function<void(const ParamStore&, const OptState&, std::int64_t iteration, const Rng&)>;

// Draws batches from the pair source (applying condition dropout and
// t ~ U[0,1] per sample), accumulates the mean-loss gradient, and steps the
// optimizer. Deterministic given the rng state and the source.
void train_flow(const DiTConfig& cfg, ParamStore& params, OptState& opt, Rng& rng,
                const PairSource& source, const TrainOptions& options, const LogSink& log,
                const SnapshotSink& snapshot);

}  // namespace cascadeflow
