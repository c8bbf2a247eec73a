#include "cascadeflow/pipeline.hpp"

#include "cascadeflow/hashing.hpp"
#include "cascadeflow/resample.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cascadeflow {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Configuration assembly
// ---------------------------------------------------------------------------

NoiseSchedule PipelineConfig::make_schedule() const {
    return NoiseSchedule::linear(schedule_steps, variance_lo, variance_hi);
}

LatentShape PipelineConfig::lr_latent() const {
    return latent_shape_for(codec, data.frames, data.lr_height, data.lr_width);
}

LatentShape PipelineConfig::hr_latent() const {
    return latent_shape_for(codec, data.frames, data.height, data.width);
}

void PipelineConfig::validate() const {
    data.validate();
    codec.validate();
    pixel.validate();
    lr_latent();  // throws when the codec ratios do not divide the grids
    hr_latent();
    if (schedule_steps < 2) throw std::invalid_argument("schedule.steps must be >= 2");
    if (!(variance_lo > 0.0) || !(variance_hi < 1.0) || variance_lo > variance_hi)
        throw std::invalid_argument("schedule variances need 0 < lo <= hi < 1");
    if (step_range.lo < 0 || step_range.lo > step_range.hi || step_range.hi >= schedule_steps)
        throw std::invalid_argument("degrade.step range must satisfy 0 <= lo <= hi < schedule.steps");
    stage1.validate();
    stage2.validate();
    auto check_train = [](const char* which, const TrainOptions& t) {
        if (t.iterations < 1 || t.batch < 1)
            throw std::invalid_argument(std::string(which) + ": iterations and batch must be >= 1");
        if (!(t.adamw.lr > 0.0)) throw std::invalid_argument(std::string(which) + ": lr must be > 0");
        if (t.cond_dropout < 0.0 || t.cond_dropout > 1.0)
            throw std::invalid_argument(std::string(which) + ": cond_dropout must lie in [0,1]");
        if (t.checkpoint_every < 0)
            throw std::invalid_argument(std::string(which) + ": checkpoint_every must be >= 0");
        if (!(t.divergence_loss > 0.0))
            throw std::invalid_argument(std::string(which) + ": divergence_loss must be > 0");
    };
    check_train("stage1", stage1_train);
    check_train("stage2", stage2_train);
    if (sample.steps < 1 || stage1_steps < 1)
        throw std::invalid_argument("sampler step counts must be >= 1");
    if (!(sample.cfg_scale > 0.0) || !(stage1_cfg > 0.0))
        throw std::invalid_argument("guidance scales must be > 0");
    if (sample.noise_step < 0 || sample.noise_step >= schedule_steps)
        throw std::invalid_argument("sample.noise_step must lie in [0, schedule.steps)");
}

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = [] {
        std::set<std::string> k = {
            "data.train_clips", "data.val_clips", "data.frames", "data.height", "data.width",
            "data.lr_height", "data.lr_width", "data.seed",
            "codec.spatial_ratio", "codec.temporal_ratio", "codec.seed",
            "schedule.steps", "schedule.variance_lo", "schedule.variance_hi",
            "degrade.sigma_lo", "degrade.sigma_hi", "degrade.factor_lo", "degrade.factor_hi",
            "degrade.second_blur_prob", "degrade.step_lo", "degrade.step_hi",
            "sample.steps", "sample.cfg", "sample.noise_step", "sample.solver",
            "sample.stage1_steps", "sample.stage1_cfg",
            "run.seed",
        };
        for (const char* s : {"stage1", "stage2"})
            for (const char* f :
                 {"layers", "dim", "heads", "pos", "rope_base", "rope_dim_t", "rope_dim_h",
                  "rope_dim_w", "max_t", "max_h", "max_w", "lora_rank", "lora_alpha", "iterations",
                  "batch", "lr", "beta1", "beta2", "weight_decay", "clip_norm", "cond_dropout",
                  "checkpoint_every", "divergence_loss"})
                k.insert(std::string(s) + "." + f);
        return k;
    }();
    return keys;
}

void read_stage(const ConfigMap& map, const std::string& s, DiTConfig& cfg, TrainOptions& train) {
    cfg.layers = map.get_int(s + ".layers", cfg.layers);
    cfg.dim = map.get_int(s + ".dim", cfg.dim);
    cfg.heads = map.get_int(s + ".heads", cfg.heads);
    std::string pos = map.get_str(s + ".pos", "rope3d");
    if (pos == "rope3d")
        cfg.pos_mode = PosMode::rope3d;
    else if (pos == "absolute")
        cfg.pos_mode = PosMode::absolute;
    else
        throw std::invalid_argument(s + ".pos must be 'rope3d' or 'absolute', got '" + pos + "'");
    cfg.rope_base = map.get_real(s + ".rope_base", cfg.rope_base);
    cfg.rope_dim_t = map.get_int(s + ".rope_dim_t", 0);
    cfg.rope_dim_h = map.get_int(s + ".rope_dim_h", 0);
    cfg.rope_dim_w = map.get_int(s + ".rope_dim_w", 0);
    std::int64_t rank = map.get_int(s + ".lora_rank", 0);
    if (rank < 0) throw std::invalid_argument(s + ".lora_rank must be >= 0");
    if (rank > 0) {
        LoraSpec spec;
        spec.rank = rank;
        spec.alpha = map.get_real(s + ".lora_alpha", 16.0);
        cfg.lora = spec;
    }
    train.iterations = map.get_int(s + ".iterations", train.iterations);
    train.batch = map.get_int(s + ".batch", train.batch);
    train.adamw.lr = map.get_real(s + ".lr", train.adamw.lr);
    train.adamw.beta1 = map.get_real(s + ".beta1", train.adamw.beta1);
    train.adamw.beta2 = map.get_real(s + ".beta2", train.adamw.beta2);
    train.adamw.weight_decay = map.get_real(s + ".weight_decay", train.adamw.weight_decay);
    train.adamw.clip_norm = map.get_real(s + ".clip_norm", train.adamw.clip_norm);
    train.cond_dropout = map.get_real(s + ".cond_dropout", train.cond_dropout);
    train.checkpoint_every = map.get_int(s + ".checkpoint_every", train.checkpoint_every);
    train.divergence_loss = map.get_real(s + ".divergence_loss", train.divergence_loss);
}

}  // namespace

PipelineConfig assemble_pipeline_config(const ConfigMap& map) {
    for (const auto& [key, value] : map.items())
        if (!known_keys().count(key))
            throw std::invalid_argument("unknown config key '" + key + "'");

    PipelineConfig pc;
    pc.data.train_clips = map.get_int("data.train_clips", pc.data.train_clips);
    pc.data.val_clips = map.get_int("data.val_clips", pc.data.val_clips);
    pc.data.frames = map.get_int("data.frames", pc.data.frames);
    pc.data.height = map.get_int("data.height", pc.data.height);
    pc.data.width = map.get_int("data.width", pc.data.width);
    pc.data.lr_height = map.get_int("data.lr_height", pc.data.lr_height);
    pc.data.lr_width = map.get_int("data.lr_width", pc.data.lr_width);
    pc.data.seed = static_cast<std::uint64_t>(map.get_int("data.seed", 7));

    pc.codec.spatial_ratio = map.get_int("codec.spatial_ratio", pc.codec.spatial_ratio);
    pc.codec.temporal_ratio = map.get_int("codec.temporal_ratio", pc.codec.temporal_ratio);
    pc.codec.seed = static_cast<std::uint64_t>(
        map.get_int("codec.seed", static_cast<std::int64_t>(pc.codec.seed)));

    pc.schedule_steps = map.get_int("schedule.steps", pc.schedule_steps);
    pc.variance_lo = map.get_real("schedule.variance_lo", pc.variance_lo);
    pc.variance_hi = map.get_real("schedule.variance_hi", pc.variance_hi);

    pc.pixel.sigma_lo = map.get_real("degrade.sigma_lo", pc.pixel.sigma_lo);
    pc.pixel.sigma_hi = map.get_real("degrade.sigma_hi", pc.pixel.sigma_hi);
    pc.pixel.factor_lo = map.get_real("degrade.factor_lo", pc.pixel.factor_lo);
    pc.pixel.factor_hi = map.get_real("degrade.factor_hi", pc.pixel.factor_hi);
    pc.pixel.second_blur_prob = map.get_real("degrade.second_blur_prob", pc.pixel.second_blur_prob);
    pc.step_range.lo = map.get_int("degrade.step_lo", pc.step_range.lo);
    pc.step_range.hi = map.get_int("degrade.step_hi", pc.step_range.hi);

    const std::int64_t lat_ch = pc.codec.latent_channels();
    pc.stage1 = DiTConfig::stage1_preset(lat_ch, kNumClasses);
    pc.stage2 = DiTConfig::stage2_preset(lat_ch, kNumClasses);
    read_stage(map, "stage1", pc.stage1, pc.stage1_train);
    read_stage(map, "stage2", pc.stage2, pc.stage2_train);

    pc.sample.steps = map.get_int("sample.steps", pc.sample.steps);
    pc.sample.cfg_scale = map.get_real("sample.cfg", pc.sample.cfg_scale);
    pc.sample.noise_step = map.get_int("sample.noise_step", pc.sample.noise_step);
    std::string solver = map.get_str("sample.solver", "euler");
    if (solver == "euler")
        pc.sample.solver = Solver::euler;
    else if (solver == "heun")
        pc.sample.solver = Solver::heun;
    else
        throw std::invalid_argument("sample.solver must be 'euler' or 'heun', got '" + solver + "'");
    pc.stage1_steps = map.get_int("sample.stage1_steps", pc.stage1_steps);
    pc.stage1_cfg = map.get_real("sample.stage1_cfg", pc.stage1_cfg);

    pc.seed = static_cast<std::uint64_t>(map.get_int("run.seed", 1));

    // Absolute-PE tables default to the stage's own training grid, so
    // absolute mode rejects any larger grid instead of extrapolating.
    LatentShape lr = pc.lr_latent();
    LatentShape hr = pc.hr_latent();
    pc.stage1.max_t = map.get_int("stage1.max_t", lr.t);
    pc.stage1.max_h = map.get_int("stage1.max_h", lr.h);
    pc.stage1.max_w = map.get_int("stage1.max_w", lr.w);
    pc.stage2.max_t = map.get_int("stage2.max_t", hr.t);
    pc.stage2.max_h = map.get_int("stage2.max_h", hr.h);
    pc.stage2.max_w = map.get_int("stage2.max_w", hr.w);

    pc.validate();
    return pc;
}

// ---------------------------------------------------------------------------
// Checkpoint persistence
// ---------------------------------------------------------------------------

nlohmann::json dit_config_to_json(const DiTConfig& cfg) {
    nlohmann::json j;
    j["layers"] = cfg.layers;
    j["dim"] = cfg.dim;
    j["heads"] = cfg.heads;
    j["latent_channels"] = cfg.latent_channels;
    j["cond_classes"] = cfg.cond_classes;
    j["pos"] = cfg.pos_mode == PosMode::rope3d ? "rope3d" : "absolute";
    j["rope_base"] = cfg.rope_base;
    j["rope_dim"] = {cfg.rope_dim_t, cfg.rope_dim_h, cfg.rope_dim_w};
    j["max_grid"] = {cfg.max_t, cfg.max_h, cfg.max_w};
    if (cfg.lora)
        j["lora"] = {{"rank", cfg.lora->rank}, {"alpha", cfg.lora->alpha}};
    else
        j["lora"] = nullptr;
    return j;
}

DiTConfig dit_config_from_json(const nlohmann::json& j) {
    DiTConfig cfg;
    try {
        cfg.layers = j.at("layers").get<std::int64_t>();
        cfg.dim = j.at("dim").get<std::int64_t>();
        cfg.heads = j.at("heads").get<std::int64_t>();
        cfg.latent_channels = j.at("latent_channels").get<std::int64_t>();
        cfg.cond_classes = j.at("cond_classes").get<std::int64_t>();
        std::string pos = j.at("pos").get<std::string>();
        if (pos == "rope3d")
            cfg.pos_mode = PosMode::rope3d;
        else if (pos == "absolute")
            cfg.pos_mode = PosMode::absolute;
        else
            throw std::invalid_argument("unknown pos mode '" + pos + "'");
        cfg.rope_base = j.at("rope_base").get<double>();
        cfg.rope_dim_t = j.at("rope_dim").at(0).get<std::int64_t>();
        cfg.rope_dim_h = j.at("rope_dim").at(1).get<std::int64_t>();
        cfg.rope_dim_w = j.at("rope_dim").at(2).get<std::int64_t>();
        cfg.max_t = j.at("max_grid").at(0).get<std::int64_t>();
        cfg.max_h = j.at("max_grid").at(1).get<std::int64_t>();
        cfg.max_w = j.at("max_grid").at(2).get<std::int64_t>();
        if (!j.at("lora").is_null()) {
            LoraSpec spec;
            spec.rank = j.at("lora").at("rank").get<std::int64_t>();
            spec.alpha = j.at("lora").at("alpha").get<double>();
            cfg.lora = spec;
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("malformed model config block: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

nlohmann::json provenance_for(const PipelineConfig& pc) {
    nlohmann::json j;
    j["codec"] = {{"spatial_ratio", pc.codec.spatial_ratio},
                  {"temporal_ratio", pc.codec.temporal_ratio},
                  {"channels", pc.codec.channels},
                  {"seed", pc.codec.seed}};
    j["schedule"] = {{"steps", pc.schedule_steps},
                     {"variance_lo", pc.variance_lo},
                     {"variance_hi", pc.variance_hi}};
    return j;
}

void save_model_checkpoint(const std::string& path, const ModelCheckpoint& m) {
    if (m.role != "stage1" && m.role != "stage2")
        throw std::invalid_argument("checkpoint role must be stage1 or stage2, got '" + m.role +
                                    "'");
    const auto& entries = m.params.entries();
    if (m.opt.m.size() != entries.size() || m.opt.v.size() != entries.size())
        throw std::invalid_argument("optimizer state not parallel to parameters");
    Container c;
    c.meta["kind"] = "model";
    c.meta["role"] = m.role;
    c.meta["iteration"] = m.iteration;
    c.meta["rng_state"] = m.rng_state;
    c.meta["model"] = dit_config_to_json(m.config);
    c.meta["provenance"] = m.provenance;
    c.meta["opt_step"] = m.opt.step;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& e : entries)
        plist.push_back({{"name", e.name}, {"trainable", e.trainable}});
    c.meta["params"] = plist;
    for (const auto& e : entries)
        c.tensors.push_back(NamedTensor{"param/" + e.name, e.value.shape, e.value.data});
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].trainable) continue;
        c.tensors.push_back(
            NamedTensor{"adam_m/" + entries[i].name, m.opt.m[i].shape, m.opt.m[i].data});
        c.tensors.push_back(
            NamedTensor{"adam_v/" + entries[i].name, m.opt.v[i].shape, m.opt.v[i].data});
    }
    save_container(path, c);
}

ModelCheckpoint load_model_checkpoint(const std::string& path) {
    Container c = load_container(path);
    ModelCheckpoint m;
    try {
        if (c.meta.at("kind").get<std::string>() != "model")
            throw std::runtime_error("container at '" + path + "' is not a model checkpoint");
        m.role = c.meta.at("role").get<std::string>();
        m.iteration = c.meta.at("iteration").get<std::int64_t>();
        m.rng_state = c.meta.at("rng_state").get<std::string>();
        m.config = dit_config_from_json(c.meta.at("model"));
        m.provenance = c.meta.at("provenance");
        m.opt.step = c.meta.at("opt_step").get<std::int64_t>();
        for (const auto& p : c.meta.at("params")) {
            std::string name = p.at("name").get<std::string>();
            bool trainable = p.at("trainable").get<bool>();
            const NamedTensor& t = c.at("param/" + name);
            m.params.add(name, Tensor(t.shape, t.data), trainable);
            if (trainable) {
                const NamedTensor& am = c.at("adam_m/" + name);
                const NamedTensor& av = c.at("adam_v/" + name);
                m.opt.m.push_back(Tensor(am.shape, am.data));
                m.opt.v.push_back(Tensor(av.shape, av.data));
                if (!m.opt.m.back().same_shape(m.params.at(name).value) ||
                    !m.opt.v.back().same_shape(m.params.at(name).value))
                    throw std::runtime_error("optimizer moment shape mismatch for '" + name + "'");
            } else {
                m.opt.m.emplace_back();
                m.opt.v.emplace_back();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed checkpoint meta in '" + path + "': " + e.what());
    }
    return m;
}

void check_checkpoint_compat(const ModelCheckpoint& m, const std::string& expected_role,
                             const PipelineConfig& pc) {
    if (m.role != expected_role)
        throw std::invalid_argument("checkpoint role is '" + m.role + "', expected '" +
                                    expected_role + "'");
    nlohmann::json want = provenance_for(pc);
    for (const char* block : {"codec", "schedule"}) {
        if (!m.provenance.contains(block) || m.provenance.at(block) != want.at(block))
            throw std::invalid_argument(std::string("checkpoint ") + block +
                                        " snapshot disagrees with the run configuration: have " +
                                        m.provenance.value(block, nlohmann::json()).dump() +
                                        ", want " + want.at(block).dump());
    }
}

// ---------------------------------------------------------------------------
// Dataset access
// ---------------------------------------------------------------------------

ClipStore load_clip_store(const std::string& data_dir, const std::string& split) {
    if (split != "train" && split != "val")
        throw std::invalid_argument("split must be 'train' or 'val', got '" + split + "'");
    ClipStore store;
    store.entries = read_manifest(data_dir + "/" + split + "_manifest.tsv");
    std::sort(store.entries.begin(), store.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    store.clips.reserve(store.entries.size());
    for (const auto& e : store.entries) {
        std::string path = data_dir + "/" + e.path;
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("missing clip file '" + path + "'");
        std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        if (hex64(fnv1a64(bytes)) != e.content_hash)
            throw std::runtime_error("content hash mismatch for '" + path +
                                     "' (dataset corrupted or regenerated)");
        ClipData clip = load_clip(path);
        if (clip.hr.frames != e.frames || clip.hr.height != e.height || clip.hr.width != e.width)
            throw std::runtime_error("clip dimensions disagree with the manifest for '" + path +
                                     "'");
        if (clip.cond != e.cond)
            throw std::runtime_error("clip condition disagrees with the manifest for '" + path +
                                     "'");
        store.clips.push_back(std::move(clip));
    }
    return store;
}

// ---------------------------------------------------------------------------
// Training orchestration
// ---------------------------------------------------------------------------

namespace {

// Distinct child-stream ids per purpose, so stages and rows never share a
// random sequence.
constexpr std::uint64_t kStreamStage1 = 1;
constexpr std::uint64_t kStreamStage2 = 2;
constexpr std::uint64_t kStreamEvalRowBase = 1000;

void require_clips(const ClipStore& data) {
    if (data.clips.empty()) throw std::invalid_argument("training set is empty");
}

}  // namespace

ModelCheckpoint run_stage1_training(const PipelineConfig& pc, const ClipStore& data,
                                    const LogSink& log, const SnapshotSink& snap,
                                    const ParamStore* init_from) {
    require_clips(data);
    const DiTConfig& cfg = pc.stage1;
    Rng rng = Rng(pc.seed).stream(kStreamStage1);
    ParamStore params;
    if (init_from) {
        params = *init_from;
        // burn the init draws so a seeded run is unaffected by where the
        // parameters came from
    } else {
        params = init_dit_params(cfg, rng);
    }
    if (cfg.lora) apply_lora(params, cfg, rng);

    Codec codec(pc.codec);
    std::vector<LatentTensor> targets;
    targets.reserve(data.clips.size());
    for (const auto& clip : data.clips) targets.push_back(codec.encode(clip.lr));

    const std::int64_t n = static_cast<std::int64_t>(targets.size());
    PairSource source = [&](Rng& r) {
        std::int64_t idx = r.uniform_int(0, n - 1);
        TrainPair p;
        // source latent is pure noise; destination is the encoded clip
        p.z_lr = LatentTensor(targets[0].t, targets[0].h, targets[0].w, targets[0].c);
        for (auto& x : p.z_lr.data) x = r.normal();
        p.z_hr = targets[static_cast<std::size_t>(idx)];
        p.cond = data.clips[static_cast<std::size_t>(idx)].cond;
        p.noise_step = 0;
        return p;
    };

    OptState opt = init_opt_state(params);
    train_flow(cfg, params, opt, rng, source, pc.stage1_train, log, snap);

    ModelCheckpoint m;
    m.role = "stage1";
    m.config = cfg;
    m.params = std::move(params);
    m.opt = std::move(opt);
    m.iteration = pc.stage1_train.iterations;
    m.rng_state = rng.state_str();
    m.provenance = provenance_for(pc);
    return m;
}

ModelCheckpoint run_stage2_training(const PipelineConfig& pc, const ClipStore& data,
                                    const LogSink& log, const SnapshotSink& snap) {
    require_clips(data);
    const DiTConfig& cfg = pc.stage2;
    Rng rng = Rng(pc.seed).stream(kStreamStage2);
    ParamStore params = init_dit_params(cfg, rng);
    if (cfg.lora) apply_lora(params, cfg, rng);

    Codec codec(pc.codec);
    NoiseSchedule sched = pc.make_schedule();
    const std::int64_t n = static_cast<std::int64_t>(data.clips.size());
    PairSource source = [&](Rng& r) {
        std::int64_t idx = r.uniform_int(0, n - 1);
        const ClipData& clip = data.clips[static_cast<std::size_t>(idx)];
        return make_train_pair(clip.hr, clip.cond, pc.step_range, pc.pixel, codec, sched, r);
    };

    OptState opt = init_opt_state(params);
    train_flow(cfg, params, opt, rng, source, pc.stage2_train, log, snap);

    ModelCheckpoint m;
    m.role = "stage2";
    m.config = cfg;
    m.params = std::move(params);
    m.opt = std::move(opt);
    m.iteration = pc.stage2_train.iterations;
    m.rng_state = rng.state_str();
    m.provenance = provenance_for(pc);
    return m;
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

VideoTensor stage1_sample(const PipelineConfig& pc, const ModelCheckpoint& m1, std::int64_t cond,
                          Rng& rng, RopeCache& ropes, std::int64_t* evals) {
    LatentShape ls = pc.lr_latent();
    if (m1.config.latent_channels != ls.c)
        throw std::invalid_argument("generator channels (" +
                                    std::to_string(m1.config.latent_channels) +
                                    ") do not match the codec patch volume (" +
                                    std::to_string(ls.c) + ")");
    LatentTensor z0(ls.t, ls.h, ls.w, ls.c);
    for (auto& x : z0.data) x = rng.normal();
    SampleConfig sc;
    sc.steps = pc.stage1_steps;
    sc.cfg_scale = pc.stage1_cfg;
    sc.noise_step = 0;
    sc.solver = pc.sample.solver;
    SampleResult r = sample_flow(m1.config, m1.params, ropes, z0, sc, cond);
    if (evals) *evals = r.field_evals;
    Codec codec(pc.codec);
    return clamp_video(codec.decode(r.latent), -1.0, 1.0);
}

GenerateOutputs two_stage_generate(const PipelineConfig& pc, const ModelCheckpoint& m1,
                                   const ModelCheckpoint& m2, std::int64_t cond, Rng& rng,
                                   RopeCache& ropes1, RopeCache& ropes2) {
    GenerateOutputs out;
    out.preview_lr = stage1_sample(pc, m1, cond, rng, ropes1, &out.stage1_evals);
    out.preview_up = resize_bicubic(out.preview_lr, pc.data.height, pc.data.width);
    Codec codec(pc.codec);
    NoiseSchedule sched = pc.make_schedule();
    EnhanceResult er =
        enhance(out.preview_up, m2.config, m2.params, ropes2, codec, sched, pc.sample, cond, rng);
    out.final_hr = std::move(er.video);
    out.stage2_evals = er.field_evals;
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation and sweeps
// ---------------------------------------------------------------------------

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

}  // namespace

EvalReport run_eval(const PipelineConfig& pc, EvalMode mode, const ModelCheckpoint* m1,
                    const ModelCheckpoint& m2, const ClipStore& val, const SampleConfig& sc) {
    if (val.clips.empty()) throw std::invalid_argument("evaluation set is empty");
    if (mode == EvalMode::two_stage && !m1)
        throw std::invalid_argument("two-stage evaluation needs a generator checkpoint");
    if (sc.steps < 1) throw std::invalid_argument("sample steps must be >= 1");
    if (sc.noise_step < 0 || sc.noise_step >= pc.schedule_steps)
        throw std::invalid_argument("noise step outside the schedule");

    EvalReport rep;
    rep.mode = mode;
    rep.sample = sc;

    Codec codec(pc.codec);
    NoiseSchedule sched = pc.make_schedule();
    RopeCache ropes1, ropes2;
    PipelineConfig pc_sc = pc;  // two_stage_generate reads pc.sample
    pc_sc.sample = sc;

    for (std::size_t i = 0; i < val.clips.size(); ++i) {
        const ManifestEntry& e = val.entries[i];
        const ClipData& clip = val.clips[i];
        Rng row_rng = Rng(pc.seed).stream(kStreamEvalRowBase + static_cast<std::uint64_t>(e.id));
        VideoTensor baseline(1, 4, 4, 1);
        VideoTensor model_out(1, 4, 4, 1);
        std::int64_t evals = 0;
        if (mode == EvalMode::enhance) {
            baseline = resize_bicubic(clip.lr, clip.hr.height, clip.hr.width);
            EnhanceResult er = enhance(baseline, m2.config, m2.params, ropes2, codec, sched, sc,
                                       e.cond, row_rng);
            model_out = std::move(er.video);
            evals = er.field_evals;
        } else {
            GenerateOutputs g = two_stage_generate(pc_sc, *m1, m2, e.cond, row_rng, ropes1, ropes2);
            baseline = std::move(g.preview_up);
            model_out = std::move(g.final_hr);
            evals = g.stage1_evals + g.stage2_evals;
        }
        EvalRow row;
        row.id = e.id;
        row.cond = e.cond;
        row.psnr_model = psnr(model_out, clip.hr);
        row.psnr_baseline = psnr(baseline, clip.hr);
        row.hf_model = hf_energy_ratio(model_out);
        row.hf_baseline = hf_energy_ratio(baseline);
        row.hf_reference = hf_energy_ratio(clip.hr);
        row.evals = evals;
        rep.rows.push_back(row);
    }

    const double n = static_cast<double>(rep.rows.size());
    for (const auto& r : rep.rows) {
        rep.mean_psnr_model += r.psnr_model / n;
        rep.mean_psnr_baseline += r.psnr_baseline / n;
        rep.mean_hf_model += r.hf_model / n;
        rep.mean_hf_baseline += r.hf_baseline / n;
        rep.mean_hf_reference += r.hf_reference / n;
        rep.total_evals += r.evals;
    }
    return rep;
}

std::string EvalReport::table() const {
    std::ostringstream os;
    os << "mode=" << (mode == EvalMode::enhance ? "enhance" : "two-stage") << " nfe=" << sample.steps
       << " cfg=" << fmt("%.3g", sample.cfg_scale) << " noise=" << sample.noise_step << "\n";
    os << "    id  cond   psnr_out  psnr_base     d_psnr    hf_out   hf_base    hf_ref  evals\n";
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line),
                      "%6lld  %4lld  %9.4f  %9.4f  %+9.4f  %8.5f  %8.5f  %8.5f  %5lld\n",
                      static_cast<long long>(r.id), static_cast<long long>(r.cond), r.psnr_model,
                      r.psnr_baseline, r.psnr_model - r.psnr_baseline, r.hf_model, r.hf_baseline,
                      r.hf_reference, static_cast<long long>(r.evals));
        os << line;
    }
    std::snprintf(line, sizeof(line),
                  "%6s  %4s  %9.4f  %9.4f  %+9.4f  %8.5f  %8.5f  %8.5f  %5lld\n", "mean", "",
                  mean_psnr_model, mean_psnr_baseline, mean_psnr_model - mean_psnr_baseline,
                  mean_hf_model, mean_hf_baseline, mean_hf_reference,
                  static_cast<long long>(total_evals));
    os << line;
    return os.str();
}

std::string EvalReport::jsonl() const {
    std::ostringstream os;
    for (const auto& r : rows) {
        nlohmann::json j;
        j["id"] = r.id;
        j["cond"] = r.cond;
        j["psnr_model"] = r.psnr_model;
        j["psnr_baseline"] = r.psnr_baseline;
        j["hf_model"] = r.hf_model;
        j["hf_baseline"] = r.hf_baseline;
        j["hf_reference"] = r.hf_reference;
        j["evals"] = r.evals;
        os << j.dump() << "\n";
    }
    nlohmann::json s;
    s["summary"] = true;
    s["mode"] = mode == EvalMode::enhance ? "enhance" : "two-stage";
    s["nfe"] = sample.steps;
    s["cfg"] = sample.cfg_scale;
    s["noise"] = sample.noise_step;
    s["clips"] = rows.size();
    s["mean_psnr_model"] = mean_psnr_model;
    s["mean_psnr_baseline"] = mean_psnr_baseline;
    s["mean_hf_model"] = mean_hf_model;
    s["mean_hf_baseline"] = mean_hf_baseline;
    s["mean_hf_reference"] = mean_hf_reference;
    s["total_evals"] = total_evals;
    os << s.dump() << "\n";
    return os.str();
}

SweepAxis sweep_axis_from_str(const std::string& s) {
    if (s == "nfe") return SweepAxis::nfe;
    if (s == "cfg") return SweepAxis::cfg;
    if (s == "noise") return SweepAxis::noise;
    throw std::invalid_argument("sweep axis must be nfe, cfg, or noise; got '" + s + "'");
}

std::vector<double> default_sweep_values(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::nfe: return {1, 2, 3, 4, 5, 6, 7, 8};
        case SweepAxis::cfg: return {1, 4, 7, 10, 13, 16};
        case SweepAxis::noise: return {650, 675, 700, 725, 750};
    }
    throw std::invalid_argument("unknown sweep axis");
}

bool sweep_recommended(SweepAxis axis, double value) {
    switch (axis) {
        case SweepAxis::nfe: return value >= 4 && value <= 6;
        case SweepAxis::cfg: return value >= 10 && value <= 13;
        case SweepAxis::noise: return value >= 650 && value <= 750;
    }
    return false;
}

SweepResult run_sweep(const PipelineConfig& pc, const ModelCheckpoint& m2, const ClipStore& val,
                      SweepAxis axis, const std::vector<double>& values) {
    if (values.empty()) throw std::invalid_argument("sweep needs at least one value");
    SweepResult res;
    res.axis = axis;
    res.base = pc.sample;
    for (double v : values) {
        SampleConfig sc = pc.sample;
        switch (axis) {
            case SweepAxis::nfe: {
                std::int64_t s = std::llround(v);
                if (s < 1 || static_cast<double>(s) != v)
                    throw std::invalid_argument("nfe sweep values must be positive integers");
                sc.steps = s;
                break;
            }
            case SweepAxis::cfg:
                if (!(v > 0)) throw std::invalid_argument("cfg sweep values must be > 0");
                sc.cfg_scale = v;
                break;
            case SweepAxis::noise: {
                std::int64_t s = std::llround(v);
                if (static_cast<double>(s) != v || s < 0 || s >= pc.schedule_steps)
                    throw std::invalid_argument(
                        "noise sweep values must be integer steps inside the schedule");
                sc.noise_step = s;
                break;
            }
        }
        EvalReport rep = run_eval(pc, EvalMode::enhance, nullptr, m2, val, sc);
        SweepPoint p;
        p.value = v;
        p.recommended = sweep_recommended(axis, v);
        p.mean_psnr = rep.mean_psnr_model;
        p.mean_hf = rep.mean_hf_model;
        p.total_evals = rep.total_evals;
        res.points.push_back(p);
    }
    return res;
}

namespace {

const char* axis_name(SweepAxis a) {
    switch (a) {
        case SweepAxis::nfe: return "nfe";
        case SweepAxis::cfg: return "cfg";
        case SweepAxis::noise: return "noise";
    }
    return "?";
}

}  // namespace

std::string SweepResult::table() const {
    std::ostringstream os;
    os << "sweep axis=" << axis_name(axis) << "  fixed: nfe=" << base.steps
       << " cfg=" << fmt("%.3g", base.cfg_scale) << " noise=" << base.noise_step << "\n";
    os << "     " << std::setw(8) << "value"
       << "  mean_psnr    mean_hf  evals   ('*' = recommended range)\n";
    char line[128];
    for (const auto& p : points) {
        std::snprintf(line, sizeof(line), "  %c  %8.6g  %9.4f  %9.5f  %5lld\n",
                      p.recommended ? '*' : ' ', p.value, p.mean_psnr, p.mean_hf,
                      static_cast<long long>(p.total_evals));
        os << line;
    }
    return os.str();
}

std::string SweepResult::jsonl() const {
    std::ostringstream os;
    for (const auto& p : points) {
        nlohmann::json j;
        j["axis"] = axis_name(axis);
        j["value"] = p.value;
        j["recommended"] = p.recommended;
        j["mean_psnr"] = p.mean_psnr;
        j["mean_hf"] = p.mean_hf;
        j["total_evals"] = p.total_evals;
        os << j.dump() << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Artifact plumbing
// ---------------------------------------------------------------------------

OutDirLock::OutDirLock(const std::string& dir) {
    fs::create_directories(dir);
    lock_path_ = dir + "/.lock";
    int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            throw std::runtime_error("output directory '" + dir +
                                     "' is owned by another run (stale? remove " + lock_path_ +
                                     ")");
        throw std::runtime_error("cannot create lock file '" + lock_path_ + "'");
    }
    ::close(fd);
}

OutDirLock::~OutDirLock() {
    if (!lock_path_.empty()) ::unlink(lock_path_.c_str());
}

std::string resolve_out_dir(const std::string& out) {
    if (out.empty()) throw std::invalid_argument("output directory must not be empty");
    const char* root = std::getenv("CASCADEFLOW_OUT_ROOT");
    if (root && *root && out[0] != '/') return std::string(root) + "/" + out;
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("short write to '" + path + "'");
}

void write_run_record(const std::string& dir, const std::string& command, const ConfigMap& map,
                      std::uint64_t seed, const std::vector<std::string>& artifacts) {
    nlohmann::json j;
    j["command"] = command;
    j["config_hash"] = map.hash();
    j["config_text"] = map.canonical_text();
    j["seed"] = seed;
    j["tool_version"] = "0.1.0";
    j["artifacts"] = artifacts;
    write_text_file(dir + "/run_record.json", j.dump(2) + "\n");
}

void write_pgm_frames(const std::string& dir, const std::string& stem, const VideoTensor& v) {
    for (std::int64_t f = 0; f < v.frames; ++f) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_f%03lld.pgm", stem.c_str(),
                      static_cast<long long>(f));
        std::string header = "P5\n" + std::to_string(v.width) + " " + std::to_string(v.height) +
                             "\n255\n";
        std::string bytes = header;
        bytes.reserve(header.size() + static_cast<std::size_t>(v.height * v.width));
        for (std::int64_t y = 0; y < v.height; ++y)
            for (std::int64_t x = 0; x < v.width; ++x) {
                double g = (v.at(f, y, x, 0) + 1.0) * 0.5 * 255.0;
                long b = std::lround(std::clamp(g, 0.0, 255.0));
                bytes.push_back(static_cast<char>(static_cast<unsigned char>(b)));
            }
        write_text_file(dir + "/" + name, bytes);
    }
}

}  // namespace cascadeflow
