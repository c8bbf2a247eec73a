// Command-line front end: dataset generation, two-stage training, sampling,
// enhancement, evaluation, sweeps, and the analytic cost report.
//
// Exit codes: 0 success; 1 usage/config/input errors (no partial outputs);
// 2 training divergence (a snapshot checkpoint has been written).
#include <CLI11.hpp>

#include <cascadeflow/cost.hpp>
#include <cascadeflow/pipeline.hpp>
#include <cascadeflow/resample.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace cascadeflow;

namespace {

using Clock = std::chrono::steady_clock;

// Child-stream id for sampling commands (training uses 1 and 2, evaluation
// rows use 1000+id; see pipeline.cpp).
constexpr std::uint64_t kStreamSample = 3;

struct CommonFlags {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::optional<std::int64_t> nfe;
    std::optional<double> cfg;
    std::optional<std::int64_t> noise;
    std::string resolution;  // TxHxW
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_sampling, bool with_resolution) {
    cmd->add_option("--config", f.config_path, "run configuration file")->required();
    cmd->add_option("--seed", f.seed, "override run.seed");
    if (with_sampling) {
        cmd->add_option("--nfe", f.nfe, "override sample.steps (function evaluations)");
        cmd->add_option("--cfg", f.cfg, "override sample.cfg (guidance scale)");
        cmd->add_option("--noise", f.noise, "override sample.noise_step");
    }
    if (with_resolution)
        cmd->add_option("--resolution", f.resolution, "override the clip grid, TxHxW");
}

ConfigMap load_config_map(const CommonFlags& f) {
    ConfigMap map = ConfigMap::parse_file(f.config_path);
    if (f.seed) map.set("run.seed", std::to_string(*f.seed));
    if (f.nfe) map.set("sample.steps", std::to_string(*f.nfe));
    if (f.cfg) map.set("sample.cfg", std::to_string(*f.cfg));
    if (f.noise) map.set("sample.noise_step", std::to_string(*f.noise));
    if (!f.resolution.empty()) {
        std::int64_t t = 0, h = 0, w = 0;
        char sep1 = 0, sep2 = 0;
        std::istringstream is(f.resolution);
        if (!(is >> t >> sep1 >> h >> sep2 >> w) || sep1 != 'x' || sep2 != 'x' || !is.eof())
            throw std::invalid_argument("--resolution must look like TxHxW, got '" + f.resolution +
                                        "'");
        // Keep the configured high/low-res ratio; both grids scale together.
        std::int64_t base_h = map.get_int("data.height", 32);
        std::int64_t base_lr_h = map.get_int("data.lr_height", 16);
        std::int64_t base_w = map.get_int("data.width", 32);
        std::int64_t base_lr_w = map.get_int("data.lr_width", 16);
        if (base_h % base_lr_h != 0 || base_w % base_lr_w != 0)
            throw std::invalid_argument("configured grids have a non-integer high/low ratio");
        std::int64_t rh = base_h / base_lr_h, rw = base_w / base_lr_w;
        if (h % rh != 0 || w % rw != 0)
            throw std::invalid_argument("--resolution must be divisible by the high/low ratio " +
                                        std::to_string(rh) + "x" + std::to_string(rw));
        map.set("data.frames", std::to_string(t));
        map.set("data.height", std::to_string(h));
        map.set("data.width", std::to_string(w));
        map.set("data.lr_height", std::to_string(h / rh));
        map.set("data.lr_width", std::to_string(w / rw));
    }
    return map;
}

// Training log sink: line-delimited records with wall time.
LogSink jsonl_log_sink(std::ofstream& out, Clock::time_point start) {
    return [&out, start](const TrainLogEntry& e) {
        double wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        char line[192];
        std::snprintf(line, sizeof(line),
                      "{\"iteration\":%lld,\"loss\":%.17g,\"grad_norm\":%.17g,\"lr\":%.17g,"
                      "\"wall_ms\":%.1f}\n",
                      static_cast<long long>(e.iteration), e.loss, e.grad_norm, e.lr, wall_ms);
        out << line;
        out.flush();
    };
}

// Periodic snapshot sink; the final state is written by the command itself
// as model.tpack, so the final callback is skipped here.
SnapshotSink checkpoint_sink(const std::string& dir, const PipelineConfig& pc,
                             const std::string& role, const DiTConfig& cfg,
                             std::int64_t total_iterations, std::string* last_path) {
    return [dir, &pc, role, cfg, total_iterations, last_path](
               const ParamStore& params, const OptState& opt, std::int64_t iteration,
               const Rng& rng) {
        if (iteration >= total_iterations) return;
        ModelCheckpoint m;
        m.role = role;
        m.config = cfg;
        m.params = params;
        m.opt = opt;
        m.iteration = iteration;
        m.rng_state = rng.state_str();
        m.provenance = provenance_for(pc);
        char name[64];
        std::snprintf(name, sizeof(name), "checkpoint_it%06lld.tpack",
                      static_cast<long long>(iteration));
        std::string path = dir + "/" + name;
        save_model_checkpoint(path, m);
        if (last_path) *last_path = path;
    };
}

void require_structural_match(const DiTConfig& a, const DiTConfig& b, const std::string& what) {
    if (a.layers != b.layers || a.dim != b.dim || a.heads != b.heads ||
        a.latent_channels != b.latent_channels || a.cond_classes != b.cond_classes ||
        a.pos_mode != b.pos_mode)
        throw std::invalid_argument(what + ": checkpoint architecture (L=" +
                                    std::to_string(a.layers) + ", C=" + std::to_string(a.dim) +
                                    ") does not match the configured model (L=" +
                                    std::to_string(b.layers) + ", C=" + std::to_string(b.dim) +
                                    ")");
}

int cmd_gen_data(const CommonFlags& flags, const std::string& out) {
    ConfigMap map = load_config_map(flags);
    PipelineConfig pc = assemble_pipeline_config(map);
    std::string dir = resolve_out_dir(out);
    OutDirLock lock(dir);
    DatasetManifests m = write_dataset(dir, pc.data);
    write_run_record(dir, "gen-data", map, pc.data.seed,
                     {"train_manifest.tsv", "val_manifest.tsv", "clips/"});
    std::printf("dataset: %zu train / %zu val clips at %lldx%lldx%lld (low-res %lldx%lld) in %s\n",
                m.train.size(), m.val.size(), static_cast<long long>(pc.data.frames),
                static_cast<long long>(pc.data.height), static_cast<long long>(pc.data.width),
                static_cast<long long>(pc.data.lr_height),
                static_cast<long long>(pc.data.lr_width), dir.c_str());
    return 0;
}

int cmd_train(const CommonFlags& flags, const std::string& data_dir, const std::string& out,
              const std::string& role, const std::string& init_from) {
    ConfigMap map = load_config_map(flags);
    PipelineConfig pc = assemble_pipeline_config(map);
    ClipStore data = load_clip_store(data_dir, "train");

    std::optional<ModelCheckpoint> base;
    if (!init_from.empty()) {
        base = load_model_checkpoint(init_from);
        check_checkpoint_compat(*base, role, pc);
        require_structural_match(base->config, role == "stage1" ? pc.stage1 : pc.stage2,
                                 "--init-from");
    }

    std::string dir = resolve_out_dir(out);
    OutDirLock lock(dir);
    std::ofstream log_file(dir + "/train_log.jsonl", std::ios::trunc);
    if (!log_file) throw std::runtime_error("cannot open training log in '" + dir + "'");
    Clock::time_point start = Clock::now();
    LogSink log = jsonl_log_sink(log_file, start);

    const DiTConfig& cfg = role == "stage1" ? pc.stage1 : pc.stage2;
    const TrainOptions& opts = role == "stage1" ? pc.stage1_train : pc.stage2_train;
    std::string last_snapshot;
    SnapshotSink snap = checkpoint_sink(dir, pc, role, cfg, opts.iterations, &last_snapshot);

    ModelCheckpoint final_state;
    try {
        final_state = role == "stage1"
                          ? run_stage1_training(pc, data, log, snap,
                                                base ? &base->params : nullptr)
                          : run_stage2_training(pc, data, log, snap);
    } catch (const TrainError& e) {
        std::fprintf(stderr, "training diverged at iteration %lld (loss %.6g): %s\n",
                     static_cast<long long>(e.iteration), e.loss, e.what());
        if (!last_snapshot.empty())
            std::fprintf(stderr, "state snapshot: %s\n", last_snapshot.c_str());
        write_run_record(dir, "train-" + role, map, pc.seed, {"train_log.jsonl"});
        return 2;
    }

    std::string model_path = dir + "/model.tpack";
    save_model_checkpoint(model_path, final_state);
    write_run_record(dir, "train-" + role, map, pc.seed, {"model.tpack", "train_log.jsonl"});
    double secs = std::chrono::duration<double>(Clock::now() - start).count();
    std::printf("%s: %lld iterations in %.1f s -> %s\n", role.c_str(),
                static_cast<long long>(opts.iterations), secs, model_path.c_str());
    return 0;
}

int cmd_sample(const CommonFlags& flags, const std::string& stage1_path,
               const std::string& stage2_path, std::int64_t cond, const std::string& out) {
    ConfigMap map = load_config_map(flags);
    PipelineConfig pc = assemble_pipeline_config(map);
    if (cond < -1 || cond >= kNumClasses)
        throw std::invalid_argument("--cond must lie in [-1, " + std::to_string(kNumClasses) +
                                    ")");
    ModelCheckpoint m1 = load_model_checkpoint(stage1_path);
    check_checkpoint_compat(m1, "stage1", pc);
    std::optional<ModelCheckpoint> m2;
    if (!stage2_path.empty()) {
        m2 = load_model_checkpoint(stage2_path);
        check_checkpoint_compat(*m2, "stage2", pc);
    }

    std::string dir = resolve_out_dir(out);
    OutDirLock lock(dir);
    Rng rng = Rng(pc.seed).stream(kStreamSample);
    RopeCache ropes1, ropes2;

    Container c;
    c.meta["kind"] = "sample";
    c.meta["cond"] = cond;
    c.meta["seed"] = pc.seed;
    c.meta["stage1_steps"] = pc.stage1_steps;
    c.meta["stage1_cfg"] = pc.stage1_cfg;
    std::vector<std::string> artifacts{"sample.tpack"};

    if (m2) {
        GenerateOutputs g = two_stage_generate(pc, m1, *m2, cond, rng, ropes1, ropes2);
        c.meta["nfe"] = pc.sample.steps;
        c.meta["cfg"] = pc.sample.cfg_scale;
        c.meta["noise_step"] = pc.sample.noise_step;
        c.meta["stage1_evals"] = g.stage1_evals;
        c.meta["stage2_evals"] = g.stage2_evals;
        c.tensors.push_back(video_tensor_entry("preview_lr", g.preview_lr));
        c.tensors.push_back(video_tensor_entry("preview_up", g.preview_up));
        c.tensors.push_back(video_tensor_entry("final_hr", g.final_hr));
        write_pgm_frames(dir, "preview", g.preview_lr);
        write_pgm_frames(dir, "final", g.final_hr);
        std::printf("sample cond=%lld: stage1 %lld evals, stage2 %lld evals\n",
                    static_cast<long long>(cond), static_cast<long long>(g.stage1_evals),
                    static_cast<long long>(g.stage2_evals));
    } else {
        std::int64_t evals = 0;
        VideoTensor preview = stage1_sample(pc, m1, cond, rng, ropes1, &evals);
        c.meta["stage1_evals"] = evals;
        c.tensors.push_back(video_tensor_entry("preview_lr", preview));
        write_pgm_frames(dir, "preview", preview);
        std::printf("preview cond=%lld: stage1 %lld evals (no enhancement checkpoint given)\n",
                    static_cast<long long>(cond), static_cast<long long>(evals));
    }
    save_container(dir + "/sample.tpack", c);
    write_run_record(dir, "sample", map, pc.seed, artifacts);
    return 0;
}

int cmd_enhance(const CommonFlags& flags, const std::string& checkpoint,
                const std::string& input, std::optional<std::int64_t> cond_flag,
                const std::string& out) {
    ConfigMap map = load_config_map(flags);
    PipelineConfig pc = assemble_pipeline_config(map);
    ModelCheckpoint m2 = load_model_checkpoint(checkpoint);
    check_checkpoint_compat(m2, "stage2", pc);
    ClipData clip = load_clip(input);
    std::int64_t cond = cond_flag ? *cond_flag : clip.cond;
    if (cond < -1 || cond >= kNumClasses)
        throw std::invalid_argument("condition " + std::to_string(cond) + " outside [-1, " +
                                    std::to_string(kNumClasses) + ")");

    std::string dir = resolve_out_dir(out);
    OutDirLock lock(dir);
    Rng rng = Rng(pc.seed).stream(kStreamSample);
    RopeCache ropes;
    Codec codec(pc.codec);
    NoiseSchedule sched = pc.make_schedule();

    VideoTensor up = resize_bicubic(clip.lr, clip.hr.height, clip.hr.width);
    EnhanceResult er = enhance(up, m2.config, m2.params, ropes, codec, sched, pc.sample, cond, rng);

    Container c;
    c.meta["kind"] = "enhanced";
    c.meta["cond"] = cond;
    c.meta["seed"] = pc.seed;
    c.meta["nfe"] = pc.sample.steps;
    c.meta["cfg"] = pc.sample.cfg_scale;
    c.meta["noise_step"] = pc.sample.noise_step;
    c.meta["evals"] = er.field_evals;
    c.tensors.push_back(video_tensor_entry("input_up", up));
    c.tensors.push_back(video_tensor_entry("enhanced", er.video));
    save_container(dir + "/enhanced.tpack", c);
    write_pgm_frames(dir, "enhanced", er.video);
    write_run_record(dir, "enhance", map, pc.seed, {"enhanced.tpack"});

    double in_psnr = psnr(up, clip.hr);
    double out_psnr = psnr(er.video, clip.hr);
    std::printf("enhance cond=%lld nfe=%lld: psnr %.4f -> %.4f dB (hf %.5f -> %.5f)\n",
                static_cast<long long>(cond), static_cast<long long>(pc.sample.steps), in_psnr,
                out_psnr, hf_energy_ratio(up), hf_energy_ratio(er.video));
    return 0;
}

int cmd_eval(const CommonFlags& flags, const std::string& data_dir, const std::string& stage2_path,
             const std::string& stage1_path, const std::string& mode_str, const std::string& out) {
    ConfigMap map = load_config_map(flags);
    PipelineConfig pc = assemble_pipeline_config(map);
    EvalMode mode;
    if (mode_str == "enhance")
        mode = EvalMode::enhance;
    else if (mode_str == "two-stage")
        mode = EvalMode::two_stage;
    else
        throw std::invalid_argument("--mode must be 'enhance' or 'two-stage', got '" + mode_str +
                                    "'");
    ModelCheckpoint m2 = load_model_checkpoint(stage2_path);
    check_checkpoint_compat(m2, "stage2", pc);
    std::optional<ModelCheckpoint> m1;
    if (mode == EvalMode::two_stage) {
        if (stage1_path.empty())
            throw std::invalid_argument("two-stage evaluation needs --stage1-checkpoint");
        m1 = load_model_checkpoint(stage1_path);
        check_checkpoint_compat(*m1, "stage1", pc);
    }
    ClipStore val = load_clip_store(data_dir, "val");

    std::string dir = resolve_out_dir(out);
    OutDirLock lock(dir);
    EvalReport rep = run_eval(pc, mode, m1 ? &*m1 : nullptr, m2, val, pc.sample);
    write_text_file(dir + "/eval_table.txt", rep.table());
    write_text_file(dir + "/eval_rows.jsonl", rep.jsonl());
    write_run_record(dir, "eval", map, pc.seed, {"eval_table.txt", "eval_rows.jsonl"});
    std::fputs(rep.table().c_str(), stdout);
    return 0;
}

int cmd_sweep(const CommonFlags& flags, const std::string& data_dir,
              const std::string& checkpoint, const std::string& axis_str,
              const std::string& values_csv, const std::string& out) {
    ConfigMap map = load_config_map(flags);
    PipelineConfig pc = assemble_pipeline_config(map);
    SweepAxis axis = sweep_axis_from_str(axis_str);
    std::vector<double> values;
    if (values_csv.empty()) {
        values = default_sweep_values(axis);
    } else {
        std::istringstream is(values_csv);
        std::string tok;
        while (std::getline(is, tok, ',')) {
            if (tok.empty()) continue;
            std::size_t pos = 0;
            double v = std::stod(tok, &pos);
            if (pos != tok.size())
                throw std::invalid_argument("bad sweep value '" + tok + "'");
            values.push_back(v);
        }
        if (values.empty()) throw std::invalid_argument("--values produced an empty list");
    }
    ModelCheckpoint m2 = load_model_checkpoint(checkpoint);
    check_checkpoint_compat(m2, "stage2", pc);
    ClipStore val = load_clip_store(data_dir, "val");

    std::string dir = resolve_out_dir(out);
    OutDirLock lock(dir);
    SweepResult res = run_sweep(pc, m2, val, axis, values);
    write_text_file(dir + "/sweep_table.txt", res.table());
    write_text_file(dir + "/sweep_rows.jsonl", res.jsonl());
    write_run_record(dir, "sweep", map, pc.seed, {"sweep_table.txt", "sweep_rows.jsonl"});
    std::fputs(res.table().c_str(), stdout);
    return 0;
}

std::string cost_report_text() {
    CostModel model = fitted_reference_model();
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof(line),
                  "fitted coefficients: kappa_attn=%.6e  kappa_linear=%.6e\n", model.kappa_attn,
                  model.kappa_linear);
    os << line;
    CostBreakdown lo = attn_cost(preset_large_270p(), model);
    CostBreakdown hi = attn_cost(preset_large_1080p(), model);
    std::snprintf(line, sizeof(line),
                  "anchor check: large model 270p %.3f s, 1080p %.3f s (fitted exactly)\n\n",
                  lo.total, hi.total);
    os << line;

    struct Plan {
        const char* name;
        std::vector<PlanStage> stages;
        double reference;  // published total; 0 = none
    };
    std::vector<Plan> plans = {
        {"single-stage 1080p", plan_single_stage(), 0.0},
        {"noise cascade (re-generates at 1080p)", plan_noise_cascade(),
         kReferenceNoiseCascadeSeconds},
        {"transport cascade (few-step enhancement)", plan_transport_cascade(),
         kReferenceTransportCascadeSeconds},
    };
    for (const auto& p : plans) {
        PlanReport rep = plan_cost(p.stages, model);
        os << p.name << "\n";
        os << "    stage                                         attn_s    linear_s     total_s\n";
        for (const auto& row : rep.rows) {
            std::snprintf(line, sizeof(line), "    %-42s %9.3f   %9.3f   %9.3f\n",
                          row.name.c_str(), row.cost.attn, row.cost.linear, row.cost.total);
            os << line;
        }
        if (p.reference > 0)
            std::snprintf(line, sizeof(line), "    total %55.3f s   (published: %.1f s)\n\n",
                          rep.total, p.reference);
        else
            std::snprintf(line, sizeof(line), "    total %55.3f s\n\n", rep.total);
        os << line;
    }
    return os.str();
}

int cmd_cost(const std::string& out) {
    std::string text = cost_report_text();
    std::fputs(text.c_str(), stdout);
    if (!out.empty()) {
        std::string dir = resolve_out_dir(out);
        OutDirLock lock(dir);
        write_text_file(dir + "/cost_report.txt", text);
        ConfigMap empty = ConfigMap::parse_text("");
        write_run_record(dir, "cost", empty, 0, {"cost_report.txt"});
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"two-stage cascaded video generation at desk scale"};
    app.require_subcommand(1);

    CommonFlags gen_f;
    std::string gen_out;
    CLI::App* gen = app.add_subcommand("gen-data", "render the synthetic clip dataset");
    add_common(gen, gen_f, false, true);
    gen->add_option("--out", gen_out, "output directory")->required();

    CommonFlags t1_f;
    std::string t1_data, t1_out, t1_init;
    CLI::App* t1 = app.add_subcommand("train-stage1", "train the low-res generator");
    add_common(t1, t1_f, false, false);
    t1->add_option("--data", t1_data, "dataset directory")->required();
    t1->add_option("--out", t1_out, "output directory")->required();
    t1->add_option("--init-from", t1_init, "warm-start checkpoint (adapter training)");

    CommonFlags t2_f;
    std::string t2_data, t2_out;
    CLI::App* t2 = app.add_subcommand("train-stage2", "train the enhancement stage");
    add_common(t2, t2_f, false, false);
    t2->add_option("--data", t2_data, "dataset directory")->required();
    t2->add_option("--out", t2_out, "output directory")->required();

    CommonFlags sm_f;
    std::string sm_s1, sm_s2, sm_out;
    std::int64_t sm_cond = -1;
    CLI::App* sm = app.add_subcommand("sample", "generate a preview (and optionally enhance it)");
    add_common(sm, sm_f, true, true);
    sm->add_option("--stage1-checkpoint", sm_s1, "generator checkpoint")->required();
    sm->add_option("--stage2-checkpoint", sm_s2, "enhancement checkpoint (optional)");
    sm->add_option("--cond", sm_cond, "class condition (-1 = unconditional)");
    sm->add_option("--out", sm_out, "output directory")->required();

    CommonFlags en_f;
    std::string en_ckpt, en_input, en_out;
    std::optional<std::int64_t> en_cond;
    CLI::App* en = app.add_subcommand("enhance", "enhance a stored clip");
    add_common(en, en_f, true, false);
    en->add_option("--checkpoint", en_ckpt, "enhancement checkpoint")->required();
    en->add_option("--input", en_input, "clip container to enhance")->required();
    en->add_option("--cond", en_cond, "class condition override");
    en->add_option("--out", en_out, "output directory")->required();

    CommonFlags ev_f;
    std::string ev_data, ev_s2, ev_s1, ev_mode = "enhance", ev_out;
    CLI::App* ev = app.add_subcommand("eval", "score a model over the validation split");
    add_common(ev, ev_f, true, false);
    ev->add_option("--data", ev_data, "dataset directory")->required();
    ev->add_option("--stage2-checkpoint", ev_s2, "enhancement checkpoint")->required();
    ev->add_option("--stage1-checkpoint", ev_s1, "generator checkpoint (two-stage mode)");
    ev->add_option("--mode", ev_mode, "enhance | two-stage");
    ev->add_option("--out", ev_out, "output directory")->required();

    CommonFlags sw_f;
    std::string sw_data, sw_ckpt, sw_axis, sw_values, sw_out;
    CLI::App* sw = app.add_subcommand("sweep", "sweep nfe/cfg/noise over the validation split");
    add_common(sw, sw_f, true, false);
    sw->add_option("--data", sw_data, "dataset directory")->required();
    sw->add_option("--checkpoint", sw_ckpt, "enhancement checkpoint")->required();
    sw->add_option("--axis", sw_axis, "nfe | cfg | noise")->required();
    sw->add_option("--values", sw_values, "comma-separated values (default: published axis)");
    sw->add_option("--out", sw_out, "output directory")->required();

    std::string cost_out;
    CLI::App* co = app.add_subcommand("cost", "print the analytic inference-cost report");
    co->add_option("--out", cost_out, "also write the report to this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_f, gen_out);
        if (t1->parsed()) return cmd_train(t1_f, t1_data, t1_out, "stage1", t1_init);
        if (t2->parsed()) return cmd_train(t2_f, t2_data, t2_out, "stage2", "");
        if (sm->parsed()) return cmd_sample(sm_f, sm_s1, sm_s2, sm_cond, sm_out);
        if (en->parsed()) return cmd_enhance(en_f, en_ckpt, en_input, en_cond, en_out);
        if (ev->parsed()) return cmd_eval(ev_f, ev_data, ev_s2, ev_s1, ev_mode, ev_out);
        if (sw->parsed()) return cmd_sweep(sw_f, sw_data, sw_ckpt, sw_axis, sw_values, sw_out);
        if (co->parsed()) return cmd_cost(cost_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    std::fprintf(stderr, "error: no subcommand\n");
    return 1;
}
