#include <doctest.h>

#include <cascadeflow/dit.hpp>
#include <cascadeflow/rng.hpp>

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace cascadeflow;

namespace {

DiTConfig tiny_config() {
    DiTConfig cfg;
    cfg.layers = 2;
    cfg.dim = 32;
    cfg.heads = 2;
    cfg.latent_channels = 8;
    cfg.cond_classes = 8;
    cfg.max_t = 4;
    cfg.max_h = 8;
    cfg.max_w = 8;
    return cfg;
}

LatentTensor random_latent(std::int64_t t, std::int64_t h, std::int64_t w, std::int64_t c,
                           std::uint64_t seed) {
    LatentTensor z(t, h, w, c);
    Rng r(seed);
    for (auto& x : z.data) x = r.normal();
    return z;
}

// Scatter noise into every parameter so the model output is nontrivial.
void perturb_params(ParamStore& params, std::uint64_t seed, double scale = 0.05) {
    Rng r(seed);
    for (auto& e : params.entries())
        for (auto& x : e.value.data) x += scale * r.normal();
}

// Rotate one head-dim row by the phases of a grid position.
std::vector<double> rotated(const DiTConfig& cfg, const std::vector<double>& x, std::int64_t pt,
                            std::int64_t ph, std::int64_t pw) {
    std::vector<double> phases = rope3d_phases(cfg, pt, ph, pw);
    std::vector<double> y(x.size());
    for (std::size_t p = 0; p < phases.size(); ++p) {
        double c = std::cos(phases[p]), s = std::sin(phases[p]);
        y[2 * p] = x[2 * p] * c - x[2 * p + 1] * s;
        y[2 * p + 1] = x[2 * p] * s + x[2 * p + 1] * c;
    }
    return y;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return d;
}

}  // namespace

TEST_SUITE("dit") {
    TEST_CASE("config validation") {
        DiTConfig cfg = tiny_config();
        CHECK_NOTHROW(cfg.validate());
        CHECK(cfg.head_dim() == 16);
        DiTConfig bad = cfg;
        bad.heads = 3;  // 32 % 3 != 0
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
        DiTConfig odd = cfg;
        odd.dim = 34;
        odd.heads = 17;  // head_dim 2 < 6, cannot split across three axes
        CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
    }

    TEST_CASE("default rotary split is even and sums to head_dim") {
        for (std::int64_t hd : {6ll, 8ll, 12ll, 16ll, 32ll, 64ll}) {
            auto s = default_rope_split(hd);
            CHECK(s[0] + s[1] + s[2] == hd);
            CHECK(s[0] % 2 == 0);
            CHECK(s[1] % 2 == 0);
            CHECK(s[2] % 2 == 0);
            CHECK(s[0] >= 2);
            // Spatial axes get at least as much as time.
            CHECK(s[1] >= s[0]);
            CHECK(s[2] >= s[0]);
        }
        CHECK(default_rope_split(16)[0] == 4);
        CHECK(default_rope_split(16)[1] == 6);
        CHECK(default_rope_split(16)[2] == 6);
    }

    TEST_CASE("fresh parameters produce exactly the zero field") {
        DiTConfig cfg = tiny_config();
        Rng rng(7);
        ParamStore params = init_dit_params(cfg, rng);
        RopeCache ropes;
        LatentTensor z = random_latent(2, 4, 4, cfg.latent_channels, 3);
        LatentTensor out = dit_forward(cfg, params, ropes, z, 0.3, 675, 5);
        for (double v : out.data) CHECK(v == 0.0);
    }

    TEST_CASE("no-grad forward equals the graph forward") {
        DiTConfig cfg = tiny_config();
        Rng rng(8);
        ParamStore params = init_dit_params(cfg, rng);
        perturb_params(params, 21);
        RopeCache ropes;
        LatentTensor z = random_latent(2, 4, 4, cfg.latent_channels, 5);

        LatentTensor fast = dit_forward(cfg, params, ropes, z, 0.25, 700, 2);

        ad::Graph g;
        BoundParams bp = bind_params(g, params, false);
        const ad::RopeTables* rt = ropes.get(cfg, z.t, z.h, z.w);
        ad::Graph::Id out = dit_build(g, bp, cfg, z, 0.25, 700, 2, rt);
        const Tensor& ov = g.val(out);
        REQUIRE(ov.numel() == z.numel());
        for (std::int64_t i = 0; i < ov.numel(); ++i)
            CHECK(fast.data[static_cast<std::size_t>(i)] ==
                  doctest::Approx(ov.data[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }

    TEST_CASE("rotary phases are linear in position") {
        DiTConfig cfg = tiny_config();
        auto delta = [&](std::int64_t t0, std::int64_t h0, std::int64_t w0, std::int64_t dt,
                         std::int64_t dh, std::int64_t dw) {
            auto a = rope3d_phases(cfg, t0, h0, w0);
            auto b = rope3d_phases(cfg, t0 + dt, h0 + dh, w0 + dw);
            std::vector<double> d(a.size());
            for (std::size_t i = 0; i < a.size(); ++i) d[i] = b[i] - a[i];
            return d;
        };
        auto d1 = delta(0, 0, 0, 1, 2, 3);
        auto d2 = delta(2, 5, 1, 1, 2, 3);
        REQUIRE(d1.size() == d2.size());
        for (std::size_t i = 0; i < d1.size(); ++i)
            CHECK(d1[i] == doctest::Approx(d2[i]).epsilon(1e-12));
    }

    TEST_CASE("rotary attention logits depend only on relative position") {
        DiTConfig cfg = tiny_config();
        Rng r(11);
        std::vector<double> q(static_cast<std::size_t>(cfg.head_dim()));
        std::vector<double> k(q.size());
        for (auto& x : q) x = r.normal();
        for (auto& x : k) x = r.normal();

        struct Triple {
            std::int64_t pt, ph, pw, qt, qh, qw, dt, dh, dw;
        };
        for (const Triple& tr : {Triple{0, 1, 2, 1, 3, 0, 2, 4, 5}, Triple{1, 0, 0, 0, 2, 3, 5, 9, 7},
                                 Triple{2, 2, 2, 2, 5, 1, 11, 3, 2}}) {
            double base = dot(rotated(cfg, q, tr.pt, tr.ph, tr.pw),
                              rotated(cfg, k, tr.qt, tr.qh, tr.qw));
            double shifted = dot(rotated(cfg, q, tr.pt + tr.dt, tr.ph + tr.dh, tr.pw + tr.dw),
                                 rotated(cfg, k, tr.qt + tr.dt, tr.qh + tr.dh, tr.qw + tr.dw));
            CHECK(base == doctest::Approx(shifted).epsilon(1e-9));
        }
    }

    TEST_CASE("absolute tables are not shift-invariant") {
        DiTConfig cfg = tiny_config();
        cfg.pos_mode = PosMode::absolute;
        Tensor emb = make_abs_pos_embedding(cfg, 4, 8, 8);
        REQUIRE(emb.rows() == 4 * 8 * 8);
        REQUIRE(emb.cols() == cfg.dim);
        // The difference between embeddings one step apart changes with
        // position; a constant difference would preserve logit shifts.
        auto row = [&](std::int64_t t, std::int64_t h, std::int64_t w) {
            std::int64_t idx = (t * 8 + h) * 8 + w;
            return std::vector<double>(emb.data.begin() + idx * cfg.dim,
                                       emb.data.begin() + (idx + 1) * cfg.dim);
        };
        auto a0 = row(0, 0, 0), a1 = row(0, 0, 1);
        auto b0 = row(0, 3, 4), b1 = row(0, 3, 5);
        double diff = 0;
        for (std::int64_t i = 0; i < cfg.dim; ++i)
            diff = std::max(diff, std::fabs((a1[static_cast<std::size_t>(i)] -
                                             a0[static_cast<std::size_t>(i)]) -
                                            (b1[static_cast<std::size_t>(i)] -
                                             b0[static_cast<std::size_t>(i)])));
        CHECK(diff > 1e-3);
    }

    TEST_CASE("absolute mode rejects grids beyond its tables") {
        DiTConfig cfg = tiny_config();
        cfg.pos_mode = PosMode::absolute;
        CHECK_NOTHROW(make_abs_pos_embedding(cfg, 4, 8, 8));
        CHECK_THROWS_AS(make_abs_pos_embedding(cfg, 5, 8, 8), std::invalid_argument);
        CHECK_THROWS_AS(make_abs_pos_embedding(cfg, 4, 16, 8), std::invalid_argument);
        CHECK_THROWS_AS(make_abs_pos_embedding(cfg, 4, 8, 16), std::invalid_argument);

        // The rejection also fires through the forward pass.
        Rng rng(2);
        ParamStore params = init_dit_params(cfg, rng);
        RopeCache ropes;
        LatentTensor big = random_latent(4, 16, 8, cfg.latent_channels, 5);
        CHECK_THROWS_AS(dit_forward(cfg, params, ropes, big, 0.5, 0, kNullCond),
                        std::invalid_argument);
    }

    TEST_CASE("rotary mode runs on grids beyond the training extents") {
        DiTConfig cfg = tiny_config();
        Rng rng(3);
        ParamStore params = init_dit_params(cfg, rng);
        perturb_params(params, 33);
        RopeCache ropes;
        LatentTensor big = random_latent(4, 16, 16, cfg.latent_channels, 6);
        LatentTensor out = dit_forward(cfg, params, ropes, big, 0.5, 0, kNullCond);
        CHECK(all_finite(out.data));
    }

    TEST_CASE("condition id changes the output; null condition is accepted") {
        DiTConfig cfg = tiny_config();
        Rng rng(4);
        ParamStore params = init_dit_params(cfg, rng);
        perturb_params(params, 44);
        RopeCache ropes;
        LatentTensor z = random_latent(2, 4, 4, cfg.latent_channels, 7);
        LatentTensor a = dit_forward(cfg, params, ropes, z, 0.4, 650, 1);
        LatentTensor b = dit_forward(cfg, params, ropes, z, 0.4, 650, 2);
        LatentTensor n = dit_forward(cfg, params, ropes, z, 0.4, 650, kNullCond);
        CHECK(a.data != b.data);
        CHECK(a.data != n.data);
        CHECK_THROWS_AS(dit_forward(cfg, params, ropes, z, 0.4, 650, cfg.cond_classes),
                        std::invalid_argument);
    }

    TEST_CASE("time and noise step embeddings matter") {
        DiTConfig cfg = tiny_config();
        Rng rng(5);
        ParamStore params = init_dit_params(cfg, rng);
        perturb_params(params, 55);
        RopeCache ropes;
        LatentTensor z = random_latent(2, 4, 4, cfg.latent_channels, 8);
        LatentTensor a = dit_forward(cfg, params, ropes, z, 0.1, 650, 1);
        LatentTensor b = dit_forward(cfg, params, ropes, z, 0.9, 650, 1);
        LatentTensor c = dit_forward(cfg, params, ropes, z, 0.1, 900, 1);
        CHECK(a.data != b.data);
        CHECK(a.data != c.data);
    }

    TEST_CASE("sinusoidal features are bounded and injective enough") {
        auto f = sinusoidal_features(0.37, 32);
        CHECK(f.size() == 32);
        for (double v : f) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
        CHECK(sinusoidal_features(0.37, 32) != sinusoidal_features(0.38, 32));
    }

    TEST_CASE("parameter store rejects duplicates and counts scalars") {
        ParamStore ps;
        ps.add("a", Tensor::zeros({2, 3}), true);
        ps.add("b", Tensor::zeros({4}), false);
        CHECK_THROWS_AS(ps.add("a", Tensor::zeros({1}), true), std::invalid_argument);
        CHECK(ps.count(false) == 10);
        CHECK(ps.count(true) == 6);
        CHECK(ps.has("b"));
        CHECK_FALSE(ps.has("c"));
        CHECK_THROWS_AS(ps.at("c"), std::out_of_range);
    }

    TEST_CASE("zero-impact adapters leave the forward pass bitwise unchanged") {
        DiTConfig cfg = tiny_config();
        Rng rng(6);
        ParamStore params = init_dit_params(cfg, rng);
        perturb_params(params, 66);
        RopeCache ropes;
        LatentTensor z = random_latent(2, 4, 4, cfg.latent_channels, 9);
        LatentTensor before = dit_forward(cfg, params, ropes, z, 0.6, 700, 3);

        DiTConfig lcfg = cfg;
        lcfg.lora = LoraSpec{4, 8.0};
        Rng lrng(100);
        apply_lora(params, lcfg, lrng);
        LatentTensor after = dit_forward(lcfg, params, ropes, z, 0.6, 700, 3);
        CHECK(before.data == after.data);
    }

    TEST_CASE("adapters freeze the base and add trainable pairs per target") {
        DiTConfig cfg = tiny_config();
        cfg.lora = LoraSpec{4, 8.0};
        Rng rng(7);
        ParamStore params = init_dit_params(cfg, rng);
        std::int64_t base_entries = static_cast<std::int64_t>(params.entries().size());
        Rng lrng(8);
        apply_lora(params, cfg, lrng);

        auto targets = lora_target_names(cfg);
        CHECK(static_cast<std::int64_t>(params.entries().size()) ==
              base_entries + 2 * static_cast<std::int64_t>(targets.size()));
        for (std::int64_t i = 0; i < base_entries; ++i)
            CHECK_FALSE(params.entries()[static_cast<std::size_t>(i)].trainable);
        for (const auto& t : targets) {
            const auto& a = params.at("lora." + t + ".a");
            const auto& b = params.at("lora." + t + ".b");
            CHECK(a.trainable);
            CHECK(b.trainable);
            CHECK(a.value.rows() == 4);
            for (double v : b.value.data) CHECK(v == 0.0);  // zero-impact init
        }
    }

    TEST_CASE("adapter application requires an engaged spec") {
        DiTConfig cfg = tiny_config();  // no lora member set
        Rng rng(9);
        ParamStore params = init_dit_params(cfg, rng);
        CHECK_THROWS_AS(apply_lora(params, cfg, rng), std::invalid_argument);
        DiTConfig bad = cfg;
        bad.lora = LoraSpec{0, 1.0};
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}
