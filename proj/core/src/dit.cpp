#include "cascadeflow/dit.hpp"

#include <cmath>
#include <stdexcept>

namespace cascadeflow {

namespace {
void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("dit: " + msg);
}

std::int64_t round_to_even(double x) {
    auto r = static_cast<std::int64_t>(std::llround(x / 2.0));
    return 2 * std::max<std::int64_t>(1, r);
}
}  // namespace

std::array<std::int64_t, 3> default_rope_split(std::int64_t head_dim) {
    require(head_dim >= 6 && head_dim % 2 == 0, "head_dim must be even and >= 6 for a 3-way split");
    std::int64_t dt = round_to_even(static_cast<double>(head_dim) / 4.0);
    if (dt > head_dim - 4) dt = head_dim - 4;
    std::int64_t dh = round_to_even(static_cast<double>(head_dim - dt) / 2.0);
    if (dh > head_dim - dt - 2) dh = head_dim - dt - 2;
    std::int64_t dw = head_dim - dt - dh;
    return {dt, dh, dw};
}

std::int64_t DiTConfig::head_dim() const {
    require(heads > 0 && dim % heads == 0,
            "dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
    return dim / heads;
}

void DiTConfig::validate() const {
    require(layers >= 1, "layers must be >= 1");
    require(dim >= 2 && heads >= 1 && dim % heads == 0, "dim must be a positive multiple of heads");
    require(dim % 2 == 0, "dim must be even (sinusoidal features pair sin/cos)");
    require(latent_channels >= 1, "latent_channels must be >= 1");
    require(cond_classes >= 1, "cond_classes must be >= 1");
    std::int64_t hd = head_dim();
    std::int64_t dt = rope_dim_t, dh = rope_dim_h, dw = rope_dim_w;
    if (dt == 0 && dh == 0 && dw == 0) {
        auto s = default_rope_split(hd);
        dt = s[0];
        dh = s[1];
        dw = s[2];
    }
    require(dt > 0 && dh > 0 && dw > 0 && dt % 2 == 0 && dh % 2 == 0 && dw % 2 == 0,
            "rotary split parts must be positive and even");
    require(dt + dh + dw == hd, "rotary split must sum to head_dim " + std::to_string(hd));
    require(rope_base > 1.0, "rope_base must exceed 1");
    require(max_t >= 1 && max_h >= 1 && max_w >= 1, "absolute table extents must be >= 1");
    if (lora) require(lora->rank >= 1 && lora->alpha > 0.0, "lora rank/alpha must be positive");
}

DiTConfig DiTConfig::stage1_preset(std::int64_t latent_channels, std::int64_t cond_classes) {
    DiTConfig c;
    c.layers = 6;
    c.dim = 128;
    c.heads = 4;
    c.latent_channels = latent_channels;
    c.cond_classes = cond_classes;
    return c;
}

DiTConfig DiTConfig::stage2_preset(std::int64_t latent_channels, std::int64_t cond_classes) {
    DiTConfig c;
    c.layers = 4;
    c.dim = 64;
    c.heads = 4;
    c.latent_channels = latent_channels;
    c.cond_classes = cond_classes;
    return c;
}

void ParamStore::add(std::string name, Tensor value, bool trainable) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry{std::move(name), std::move(value), trainable});
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

ParamEntry& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second];
}

const ParamEntry& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
    return entries_[it->second];
}

std::int64_t ParamStore::count(bool trainable_only) const {
    std::int64_t n = 0;
    for (const auto& e : entries_)
        if (!trainable_only || e.trainable) n += e.value.numel();
    return n;
}

namespace {

Tensor normal_tensor(std::vector<std::int64_t> shape, double std_dev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = std_dev * rng.normal();
    return t;
}

}  // namespace

ParamStore init_dit_params(const DiTConfig& cfg, Rng& rng) {
    cfg.validate();
    const std::int64_t C = cfg.dim, c = cfg.latent_channels;
    ParamStore ps;
    ps.add("in_proj.w", normal_tensor({C, c}, 0.02, rng));
    ps.add("in_proj.b", Tensor::zeros({C}));
    ps.add("cond.class_table", normal_tensor({cfg.cond_classes, C}, 0.02, rng));
    ps.add("cond.mlp1.w", normal_tensor({C, C}, 0.02, rng));
    ps.add("cond.mlp1.b", Tensor::zeros({C}));
    ps.add("cond.mlp2.w", normal_tensor({C, C}, 0.02, rng));
    ps.add("cond.mlp2.b", Tensor::zeros({C}));
    for (std::int64_t i = 0; i < cfg.layers; ++i) {
        std::string b = "block" + std::to_string(i) + ".";
        ps.add(b + "attn.wq", normal_tensor({C, C}, 0.02, rng));
        ps.add(b + "attn.bq", Tensor::zeros({C}));
        ps.add(b + "attn.wk", normal_tensor({C, C}, 0.02, rng));
        ps.add(b + "attn.bk", Tensor::zeros({C}));
        ps.add(b + "attn.wv", normal_tensor({C, C}, 0.02, rng));
        ps.add(b + "attn.bv", Tensor::zeros({C}));
        ps.add(b + "attn.wo", normal_tensor({C, C}, 0.02, rng));
        ps.add(b + "attn.bo", Tensor::zeros({C}));
        ps.add(b + "ffn.w1", normal_tensor({4 * C, C}, 0.02, rng));
        ps.add(b + "ffn.b1", Tensor::zeros({4 * C}));
        ps.add(b + "ffn.w2", normal_tensor({C, 4 * C}, 0.02, rng));
        ps.add(b + "ffn.b2", Tensor::zeros({C}));
        // Adaptive-norm modulation starts at zero: blocks are identity maps
        // at initialization.
        ps.add(b + "mod.w", Tensor::zeros({6 * C, C}));
        ps.add(b + "mod.b", Tensor::zeros({6 * C}));
    }
    ps.add("final.mod.w", Tensor::zeros({2 * C, C}));
    ps.add("final.mod.b", Tensor::zeros({2 * C}));
    ps.add("head.w", Tensor::zeros({c, C}));
    ps.add("head.b", Tensor::zeros({c}));
    return ps;
}

std::vector<double> rope3d_phases(const DiTConfig& cfg, std::int64_t pt, std::int64_t ph,
                                  std::int64_t pw) {
    cfg.validate();
    std::int64_t hd = cfg.head_dim();
    std::int64_t dt = cfg.rope_dim_t, dh = cfg.rope_dim_h, dw = cfg.rope_dim_w;
    if (dt == 0 && dh == 0 && dw == 0) {
        auto s = default_rope_split(hd);
        dt = s[0];
        dh = s[1];
        dw = s[2];
    }
    std::vector<double> phases;
    phases.reserve(static_cast<std::size_t>(hd / 2));
    auto emit = [&](std::int64_t d, std::int64_t pos) {
        for (std::int64_t i = 0; i < d / 2; ++i) {
            double freq = std::pow(cfg.rope_base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
            phases.push_back(static_cast<double>(pos) * freq);
        }
    };
    emit(dt, pt);
    emit(dh, ph);
    emit(dw, pw);
    return phases;
}

ad::RopeTables make_rope_tables(const DiTConfig& cfg, std::int64_t t, std::int64_t h,
                                std::int64_t w) {
    require(t >= 1 && h >= 1 && w >= 1, "rope grid dims must be positive");
    ad::RopeTables tab;
    tab.rows = t * h * w;
    tab.half = cfg.head_dim() / 2;
    tab.cos_t.resize(static_cast<std::size_t>(tab.rows * tab.half));
    tab.sin_t.resize(static_cast<std::size_t>(tab.rows * tab.half));
    std::int64_t row = 0;
    for (std::int64_t ti = 0; ti < t; ++ti)
        for (std::int64_t hi = 0; hi < h; ++hi)
            for (std::int64_t wi = 0; wi < w; ++wi, ++row) {
                auto ph = rope3d_phases(cfg, ti, hi, wi);
                for (std::int64_t p = 0; p < tab.half; ++p) {
                    tab.cos_t[static_cast<std::size_t>(row * tab.half + p)] = std::cos(ph[static_cast<std::size_t>(p)]);
                    tab.sin_t[static_cast<std::size_t>(row * tab.half + p)] = std::sin(ph[static_cast<std::size_t>(p)]);
                }
            }
    return tab;
}

std::vector<double> sinusoidal_features(double value, std::int64_t dim) {
    if (dim < 2 || dim % 2 != 0)
        throw std::invalid_argument("sinusoidal feature dim must be even and >= 2");
    std::vector<double> f(static_cast<std::size_t>(dim));
    std::int64_t half = dim / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(half));
        f[static_cast<std::size_t>(2 * i)] = std::sin(value * freq);
        f[static_cast<std::size_t>(2 * i + 1)] = std::cos(value * freq);
    }
    return f;
}

Tensor make_abs_pos_embedding(const DiTConfig& cfg, std::int64_t t, std::int64_t h,
                              std::int64_t w) {
    cfg.validate();
    if (t > cfg.max_t || h > cfg.max_h || w > cfg.max_w)
        throw std::invalid_argument(
            "position table exhausted: grid [" + std::to_string(t) + "," + std::to_string(h) + "," +
            std::to_string(w) + "] exceeds absolute-PE extents [" + std::to_string(cfg.max_t) + "," +
            std::to_string(cfg.max_h) + "," + std::to_string(cfg.max_w) +
            "] (absolute positions do not extrapolate)");
    const std::int64_t C = cfg.dim;
    Tensor pe = Tensor::zeros({t * h * w, C});
    std::int64_t row = 0;
    for (std::int64_t ti = 0; ti < t; ++ti)
        for (std::int64_t hi = 0; hi < h; ++hi)
            for (std::int64_t wi = 0; wi < w; ++wi, ++row) {
                auto ft = sinusoidal_features(static_cast<double>(ti), C);
                auto fh = sinusoidal_features(static_cast<double>(hi), C);
                auto fw = sinusoidal_features(static_cast<double>(wi), C);
                double* out = pe.ptr() + row * C;
                for (std::int64_t k = 0; k < C; ++k)
                    out[k] = (ft[static_cast<std::size_t>(k)] + fh[static_cast<std::size_t>(k)] +
                              fw[static_cast<std::size_t>(k)]) /
                             3.0;
            }
    return pe;
}

std::vector<std::string> lora_target_names(const DiTConfig& cfg) {
    std::vector<std::string> names;
    for (std::int64_t i = 0; i < cfg.layers; ++i) {
        std::string b = "block" + std::to_string(i) + ".";
        for (const char* s : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "ffn.w1", "ffn.w2", "mod.w"})
            names.push_back(b + s);
    }
    names.push_back("final.mod.w");
    return names;
}

void apply_lora(ParamStore& params, const DiTConfig& cfg, Rng& rng) {
    require(cfg.lora.has_value(), "apply_lora called without an engaged lora spec");
    const auto spec = *cfg.lora;
    auto targets = lora_target_names(cfg);
    for (const auto& t : targets) {
        const auto& base = params.at(t);
        std::int64_t out_n = base.value.rows(), in_n = base.value.cols();
        if (spec.rank > std::min(out_n, in_n))
            throw std::invalid_argument("lora rank " + std::to_string(spec.rank) +
                                        " exceeds min dim of target " + t + " " +
                                        shape_str(base.value.shape));
    }
    // Freeze the whole base model; only adapters train.
    for (auto& e : params.entries()) e.trainable = false;
    for (const auto& t : targets) {
        const auto& base = params.at(t);
        std::int64_t out_n = base.value.rows(), in_n = base.value.cols();
        params.add("lora." + t + ".a", normal_tensor({spec.rank, in_n}, 0.02, rng), true);
        params.add("lora." + t + ".b", Tensor::zeros({out_n, spec.rank}), true);
    }
}

const ad::RopeTables* RopeCache::get(const DiTConfig& cfg, std::int64_t t, std::int64_t h,
                                     std::int64_t w) {
    std::array<std::int64_t, 3> key{t, h, w};
    auto it = cache_.find(key);
    if (it == cache_.end()) {
        auto tab = std::make_unique<ad::RopeTables>(make_rope_tables(cfg, t, h, w));
        it = cache_.emplace(key, std::move(tab)).first;
    }
    return it->second.get();
}

ad::Graph::Id BoundParams::id_of(const std::string& name) const {
    if (!store) throw std::logic_error("BoundParams not bound to a store");
    const auto& entries = store->entries();
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].name == name) return ids[i];
    throw std::out_of_range("no bound parameter named " + name);
}

BoundParams bind_params(ad::Graph& g, const ParamStore& params, bool with_grads) {
    BoundParams bp;
    bp.store = &params;
    bp.ids.reserve(params.entries().size());
    for (const auto& e : params.entries())
        bp.ids.push_back(g.input(e.value, with_grads && e.trainable));
    return bp;
}

namespace {

// Effective weight node: base, or base + (alpha/rank) * B*A when adapters
// are engaged for this name.
ad::Graph::Id weight_node(ad::Graph& g, const BoundParams& bp, const DiTConfig& cfg,
                          const std::string& name, bool lora_target) {
    ad::Graph::Id w = bp.id_of(name);
    if (cfg.lora && lora_target && bp.store->has("lora." + name + ".a")) {
        ad::Graph::Id a = bp.id_of("lora." + name + ".a");
        ad::Graph::Id b = bp.id_of("lora." + name + ".b");
        ad::Graph::Id delta = g.scale(g.matmul(b, a), cfg.lora->alpha / static_cast<double>(cfg.lora->rank));
        w = g.add(w, delta);
    }
    return w;
}

}  // namespace

ad::Graph::Id dit_build(ad::Graph& g, const BoundParams& bp, const DiTConfig& cfg,
                        const LatentTensor& z, double t, std::int64_t noise_step,
                        std::int64_t cond, const ad::RopeTables* rope) {
    cfg.validate();
    require(z.c == cfg.latent_channels, "latent has " + std::to_string(z.c) +
                                            " channels, model expects " +
                                            std::to_string(cfg.latent_channels));
    require(t >= 0.0 && t <= 1.0, "flow time " + std::to_string(t) + " outside [0, 1]");
    require(noise_step >= 0, "noise step must be non-negative");
    require(cond == kNullCond || (cond >= 0 && cond < cfg.cond_classes),
            "condition class " + std::to_string(cond) + " outside [0, " +
                std::to_string(cfg.cond_classes) + ") and not null");
    require(all_finite(z.data), "latent input contains non-finite values");
    const std::int64_t m = z.tokens(), C = cfg.dim;

    if (cfg.pos_mode == PosMode::rope3d) {
        require(rope != nullptr && rope->rows == m && rope->half * 2 == cfg.head_dim(),
                "rotary tables missing or mismatched for grid " + z.shape_str());
    }

    // Tokens: [m, c] view of the latent grid.
    ad::Graph::Id x = g.input(Tensor({m, cfg.latent_channels}, z.data), false);
    x = g.linear(x, bp.id_of("in_proj.w"), bp.id_of("in_proj.b"));

    if (cfg.pos_mode == PosMode::absolute)
        x = g.add(x, g.input(make_abs_pos_embedding(cfg, z.t, z.h, z.w), false));

    // Conditioning vector: sinusoidal features of flow time (scaled to the
    // schedule's step magnitude) plus features of the noise step, plus the
    // class row when conditioned.
    auto ft = sinusoidal_features(1000.0 * t, C);
    auto fs = sinusoidal_features(static_cast<double>(noise_step), C);
    Tensor feat = Tensor::zeros({1, C});
    for (std::int64_t k = 0; k < C; ++k)
        feat.data[static_cast<std::size_t>(k)] =
            ft[static_cast<std::size_t>(k)] + fs[static_cast<std::size_t>(k)];
    ad::Graph::Id e = g.input(std::move(feat), false);
    if (cond != kNullCond) e = g.add(e, g.table_row(bp.id_of("cond.class_table"), cond));
    e = g.linear(e, bp.id_of("cond.mlp1.w"), bp.id_of("cond.mlp1.b"));
    e = g.silu(e);
    e = g.linear(e, bp.id_of("cond.mlp2.w"), bp.id_of("cond.mlp2.b"));
    ad::Graph::Id e_act = g.silu(e);

    for (std::int64_t i = 0; i < cfg.layers; ++i) {
        std::string b = "block" + std::to_string(i) + ".";
        ad::Graph::Id mod =
            g.linear(e_act, weight_node(g, bp, cfg, b + "mod.w", true), bp.id_of(b + "mod.b"));
        ad::Graph::Id shift1 = g.slice_cols(mod, 0, C);
        ad::Graph::Id scale1 = g.slice_cols(mod, C, 2 * C);
        ad::Graph::Id gate1 = g.slice_cols(mod, 2 * C, 3 * C);
        ad::Graph::Id shift2 = g.slice_cols(mod, 3 * C, 4 * C);
        ad::Graph::Id scale2 = g.slice_cols(mod, 4 * C, 5 * C);
        ad::Graph::Id gate2 = g.slice_cols(mod, 5 * C, 6 * C);

        ad::Graph::Id h1 = g.row_affine(g.layer_norm(x), scale1, shift1);
        ad::Graph::Id q = g.linear(h1, weight_node(g, bp, cfg, b + "attn.wq", true), bp.id_of(b + "attn.bq"));
        ad::Graph::Id k = g.linear(h1, weight_node(g, bp, cfg, b + "attn.wk", true), bp.id_of(b + "attn.bk"));
        ad::Graph::Id v = g.linear(h1, weight_node(g, bp, cfg, b + "attn.wv", true), bp.id_of(b + "attn.bv"));
        if (cfg.pos_mode == PosMode::rope3d) {
            q = g.rope(q, rope, cfg.heads);
            k = g.rope(k, rope, cfg.heads);
        }
        ad::Graph::Id att = g.attention(q, k, v, cfg.heads);
        att = g.linear(att, weight_node(g, bp, cfg, b + "attn.wo", true), bp.id_of(b + "attn.bo"));
        x = g.add(x, g.row_scale(att, gate1));

        ad::Graph::Id h2 = g.row_affine(g.layer_norm(x), scale2, shift2);
        ad::Graph::Id f =
            g.linear(h2, weight_node(g, bp, cfg, b + "ffn.w1", true), bp.id_of(b + "ffn.b1"));
        f = g.silu(f);
        f = g.linear(f, weight_node(g, bp, cfg, b + "ffn.w2", true), bp.id_of(b + "ffn.b2"));
        x = g.add(x, g.row_scale(f, gate2));
    }

    ad::Graph::Id fmod =
        g.linear(e_act, weight_node(g, bp, cfg, "final.mod.w", true), bp.id_of("final.mod.b"));
    ad::Graph::Id fshift = g.slice_cols(fmod, 0, C);
    ad::Graph::Id fscale = g.slice_cols(fmod, C, 2 * C);
    x = g.row_affine(g.layer_norm(x), fscale, fshift);
    return g.linear(x, bp.id_of("head.w"), bp.id_of("head.b"));
}

LatentTensor dit_forward(const DiTConfig& cfg, const ParamStore& params, RopeCache& ropes,
                         const LatentTensor& z, double t, std::int64_t noise_step,
                         std::int64_t cond) {
    ad::Graph g;
    BoundParams bp = bind_params(g, params, false);
    const ad::RopeTables* tab =
        cfg.pos_mode == PosMode::rope3d ? ropes.get(cfg, z.t, z.h, z.w) : nullptr;
    ad::Graph::Id out = dit_build(g, bp, cfg, z, t, noise_step, cond, tab);
    LatentTensor r(z.t, z.h, z.w, z.c);
    r.data = g.val(out).data;
    return r;
}

}  // namespace cascadeflow
