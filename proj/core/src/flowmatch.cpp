#include "cascadeflow/flowmatch.hpp"

#include <cmath>
#include <string>

namespace cascadeflow {

OptState init_opt_state(const ParamStore& params) {
    OptState s;
    s.m.reserve(params.entries().size());
    s.v.reserve(params.entries().size());
    for (const auto& e : params.entries()) {
        if (e.trainable) {
            s.m.push_back(Tensor::zeros(e.value.shape));
            s.v.push_back(Tensor::zeros(e.value.shape));
        } else {
            s.m.emplace_back();
            s.v.emplace_back();
        }
    }
    return s;
}

namespace {

void check_pair(const TrainPair& pair) {
    if (!pair.z_lr.same_shape(pair.z_hr))
        throw std::invalid_argument("training pair shapes differ: " + pair.z_lr.shape_str() +
                                    " vs " + pair.z_hr.shape_str());
}

// Builds interpolation state and regression target for one pair.
struct PairTensors {
    LatentTensor z_t;
    Tensor target;
};

PairTensors interp(const TrainPair& pair, double t) {
    check_pair(pair);
    if (!(t >= 0.0 && t <= 1.0))
        throw std::invalid_argument("flow time " + std::to_string(t) + " outside [0, 1]");
    PairTensors pt;
    pt.z_t = pair.z_lr;
    const std::int64_t n = pt.z_t.numel();
    pt.target = Tensor::zeros({pair.z_lr.tokens(), pair.z_lr.c});
    for (std::int64_t i = 0; i < n; ++i) {
        double lo = pair.z_lr.data[static_cast<std::size_t>(i)];
        double hi = pair.z_hr.data[static_cast<std::size_t>(i)];
        pt.z_t.data[static_cast<std::size_t>(i)] = (1.0 - t) * lo + t * hi;
        pt.target.data[static_cast<std::size_t>(i)] = hi - lo;
    }
    return pt;
}

LossGrads run_batch(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                    const std::vector<TrainPair>& pairs, const std::vector<double>& ts,
                    bool with_grads) {
    if (pairs.empty() || pairs.size() != ts.size())
        throw std::invalid_argument("batch needs matching, non-empty pairs and times");
    ad::Graph g;
    BoundParams bp = bind_params(g, params, with_grads);
    ad::Graph::Id total = -1;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        PairTensors pt = interp(pairs[i], ts[i]);
        const ad::RopeTables* rope =
            cfg.pos_mode == PosMode::rope3d ? ropes.get(cfg, pt.z_t.t, pt.z_t.h, pt.z_t.w)
                                            : nullptr;
        ad::Graph::Id out =
            dit_build(g, bp, cfg, pt.z_t, ts[i], pairs[i].noise_step, pairs[i].cond, rope);
        ad::Graph::Id l = g.mse(out, std::move(pt.target));
        total = (total < 0) ? l : g.add(total, l);
    }
    ad::Graph::Id mean_loss = g.scale(total, 1.0 / static_cast<double>(pairs.size()));

    LossGrads lg;
    lg.loss = g.val(mean_loss).data[0];
    if (with_grads) {
        g.backward(mean_loss);
        lg.grads.reserve(params.entries().size());
        for (std::size_t i = 0; i < params.entries().size(); ++i) {
            if (params.entries()[i].trainable)
                lg.grads.push_back(g.grad_of(bp.ids[i]));
            else
                lg.grads.emplace_back();
        }
    }
    return lg;
}

}  // namespace

double fm_loss_value(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                     const TrainPair& pair, double t) {
    return run_batch(cfg, params, ropes, {pair}, {t}, false).loss;
}

LossGrads fm_loss(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                  const TrainPair& pair, double t) {
    return run_batch(cfg, params, ropes, {pair}, {t}, true);
}

LossGrads fm_loss_batch(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                        const std::vector<TrainPair>& pairs, const std::vector<double>& ts) {
    return run_batch(cfg, params, ropes, pairs, ts, true);
}

double optimizer_step(ParamStore& params, OptState& opt, const std::vector<Tensor>& grads,
                      const AdamWConfig& cfg) {
    auto& entries = params.entries();
    if (grads.size() != entries.size() || opt.m.size() != entries.size())
        throw std::invalid_argument("optimizer buffers not parallel to parameter entries");

    double norm_sq = 0.0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].trainable) continue;
        if (grads[i].data.empty())
            throw std::invalid_argument("missing gradient for trainable entry " + entries[i].name);
        norm_sq += sum_sq(grads[i].data);
    }
    double norm = std::sqrt(norm_sq);
    double scale = (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) ? cfg.clip_norm / norm : 1.0;

    opt.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].trainable) continue;
        auto& p = entries[i].value.data;
        auto& m = opt.m[i].data;
        auto& v = opt.v[i].data;
        const auto& gr = grads[i].data;
        for (std::size_t k = 0; k < p.size(); ++k) {
            double gk = gr[k] * scale;
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
            double mhat = m[k] / bc1;
            double vhat = v[k] / bc2;
            p[k] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p[k]);
        }
    }
    return norm;
}

void train_flow(const DiTConfig& cfg, ParamStore& params, OptState& opt, Rng& rng,
                const PairSource& source, const TrainOptions& options, const LogSink& log,
                const SnapshotSink& snapshot) {
    if (options.iterations < 1 || options.batch < 1)
        throw std::invalid_argument("training needs iterations >= 1 and batch >= 1");
    if (options.cond_dropout < 0.0 || options.cond_dropout > 1.0)
        throw std::invalid_argument("condition dropout outside [0, 1]");

    RopeCache ropes;  // shared across iterations; grids repeat
    AdamWConfig adamw = options.adamw;
    for (std::int64_t it = 1; it <= options.iterations; ++it) {
        if (options.lr_decay == LrDecay::cosine) {
            // Cosine ramp from the configured rate to lr_floor x that rate.
            double u = static_cast<double>(it - 1) /
                       static_cast<double>(std::max<std::int64_t>(options.iterations - 1, 1));
            double lo = options.adamw.lr * options.lr_floor;
            adamw.lr = lo + 0.5 * (options.adamw.lr - lo) * (1.0 + std::cos(kPi * u));
        }
        std::vector<TrainPair> pairs;
        std::vector<double> ts;
        pairs.reserve(static_cast<std::size_t>(options.batch));
        ts.reserve(static_cast<std::size_t>(options.batch));
        for (std::int64_t b = 0; b < options.batch; ++b) {
            TrainPair pair = source(rng);
            if (pair.cond != kNullCond && options.cond_dropout > 0.0 &&
                rng.bernoulli(options.cond_dropout))
                pair.cond = kNullCond;
            ts.push_back(rng.uniform01());
            pairs.push_back(std::move(pair));
        }
        LossGrads lg = fm_loss_batch(cfg, params, ropes, pairs, ts);
        if (!std::isfinite(lg.loss) || lg.loss > options.divergence_loss) {
            if (snapshot) snapshot(params, opt, it, rng);
            throw TrainError(it, lg.loss,
                             "training diverged at iteration " + std::to_string(it) + " (loss " +
                                 std::to_string(lg.loss) + "); state snapshot written");
        }
        double gn = optimizer_step(params, opt, lg.grads, adamw);
        if (log) log(TrainLogEntry{it, lg.loss, gn, adamw.lr});
        if (options.checkpoint_every > 0 && it % options.checkpoint_every == 0 && snapshot)
            snapshot(params, opt, it, rng);
    }
    bool already = options.checkpoint_every > 0 && options.iterations % options.checkpoint_every == 0;
    if (snapshot && !already) snapshot(params, opt, options.iterations, rng);
}

}  // namespace cascadeflow
