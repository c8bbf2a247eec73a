#include <doctest.h>

#include <cascadeflow/graph.hpp>
#include <cascadeflow/rng.hpp>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

using namespace cascadeflow;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, Rng& r, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = scale * r.normal();
    return t;
}

using Builder =
    std::function<ad::Graph::Id(ad::Graph&, const std::vector<ad::Graph::Id>&)>;

double eval_loss(const std::vector<Tensor>& inputs, const Builder& build) {
    ad::Graph g;
    std::vector<ad::Graph::Id> ids;
    ids.reserve(inputs.size());
    for (const auto& t : inputs) ids.push_back(g.input(t, false));
    return g.val(build(g, ids)).data[0];
}

// Central-difference check of every input element against the tape.
void fd_check(std::vector<Tensor> inputs, const Builder& build, double tol = 1e-6) {
    ad::Graph g;
    std::vector<ad::Graph::Id> ids;
    for (const auto& t : inputs) ids.push_back(g.input(t, true));
    ad::Graph::Id root = build(g, ids);
    REQUIRE(g.val(root).numel() == 1);
    g.backward(root);

    const double h = 1e-5;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& analytic = g.grad_of(ids[k]);
        for (std::size_t j = 0; j < inputs[k].data.size(); ++j) {
            double saved = inputs[k].data[j];
            inputs[k].data[j] = saved + h;
            double lp = eval_loss(inputs, build);
            inputs[k].data[j] = saved - h;
            double lm = eval_loss(inputs, build);
            inputs[k].data[j] = saved;
            double fd = (lp - lm) / (2 * h);
            double denom = std::max({1e-6, std::fabs(fd), std::fabs(analytic.data[j])});
            CHECK_MESSAGE(std::fabs(analytic.data[j] - fd) / denom < tol,
                          "input ", k, " element ", j, ": analytic ", analytic.data[j], " vs fd ",
                          fd);
        }
    }
}

Tensor fixed_target(std::vector<std::int64_t> shape, std::uint64_t seed) {
    Rng r(seed);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data) x = r.normal();
    return t;
}

}  // namespace

TEST_SUITE("graph") {
    TEST_CASE("elementwise ops differentiate") {
        Rng r(1);
        Tensor a = random_tensor({3, 4}, r), b = random_tensor({3, 4}, r);
        fd_check({a, b}, [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            auto s = g.add(in[0], in[1]);
            auto d = g.sub(s, in[1]);
            auto m = g.mul(d, in[1]);
            auto sc = g.scale(m, -1.7);
            return g.mse(sc, fixed_target({3, 4}, 10));
        });
    }

    TEST_CASE("matmul differentiates") {
        Rng r(2);
        Tensor a = random_tensor({3, 5}, r), b = random_tensor({5, 2}, r);
        fd_check({a, b}, [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            return g.mse(g.matmul(in[0], in[1]), fixed_target({3, 2}, 11));
        });
    }

    TEST_CASE("linear layer differentiates and matches x w^T + bias") {
        Rng r(3);
        Tensor x = random_tensor({4, 3}, r), w = random_tensor({2, 3}, r),
               bias = random_tensor({2}, r);
        {
            ad::Graph g;
            auto y = g.linear(g.input(x), g.input(w), g.input(bias));
            const Tensor& yv = g.val(y);
            REQUIRE(yv.rows() == 4);
            REQUIRE(yv.cols() == 2);
            for (std::int64_t i = 0; i < 4; ++i)
                for (std::int64_t o = 0; o < 2; ++o) {
                    double want = bias.data[static_cast<std::size_t>(o)];
                    for (std::int64_t j = 0; j < 3; ++j)
                        want += x.data[static_cast<std::size_t>(i * 3 + j)] *
                                w.data[static_cast<std::size_t>(o * 3 + j)];
                    CHECK(yv.data[static_cast<std::size_t>(i * 2 + o)] ==
                          doctest::Approx(want).epsilon(1e-12));
                }
        }
        fd_check({x, w, bias}, [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            return g.mse(g.linear(in[0], in[1], in[2]), fixed_target({4, 2}, 12));
        });
    }

    TEST_CASE("layer_norm rows have zero mean, unit variance, and differentiate") {
        Rng r(4);
        Tensor x = random_tensor({3, 6}, r, 2.0);
        {
            ad::Graph g;
            auto y = g.layer_norm(g.input(x));
            const Tensor& yv = g.val(y);
            for (std::int64_t i = 0; i < 3; ++i) {
                double s = 0, s2 = 0;
                for (std::int64_t j = 0; j < 6; ++j) {
                    double v = yv.data[static_cast<std::size_t>(i * 6 + j)];
                    s += v;
                    s2 += v * v;
                }
                CHECK(s / 6 == doctest::Approx(0.0).epsilon(1e-9));
                CHECK(s2 / 6 == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts it slightly
            }
        }
        fd_check({x}, [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            return g.mse(g.layer_norm(in[0]), fixed_target({3, 6}, 13));
        });
    }

    TEST_CASE("silu differentiates") {
        Rng r(5);
        fd_check({random_tensor({2, 7}, r, 3.0)},
                 [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
                     return g.mse(g.silu(in[0]), fixed_target({2, 7}, 14));
                 });
    }

    TEST_CASE("row_affine and row_scale differentiate") {
        Rng r(6);
        Tensor x = random_tensor({4, 3}, r), sc = random_tensor({1, 3}, r),
               sh = random_tensor({1, 3}, r), gate = random_tensor({1, 3}, r);
        fd_check({x, sc, sh, gate}, [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            auto y = g.row_affine(in[0], in[1], in[2]);
            return g.mse(g.row_scale(y, in[3]), fixed_target({4, 3}, 15));
        });
    }

    TEST_CASE("slice_cols and table_row differentiate") {
        Rng r(7);
        Tensor row = random_tensor({1, 8}, r), table = random_tensor({5, 4}, r);
        fd_check({row, table}, [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            auto part = g.slice_cols(in[0], 2, 6);  // [1,4]
            auto trow = g.table_row(in[1], 3);      // [1,4]
            return g.mse(g.add(part, trow), fixed_target({1, 4}, 16));
        });
    }

    TEST_CASE("rope rotates pairs and differentiates") {
        const std::int64_t m = 4, heads = 2, dim = 8, half = 2;
        ad::RopeTables tables;
        tables.rows = m;
        tables.half = half;
        Rng pr(8);
        for (std::int64_t i = 0; i < m * half; ++i) {
            double th = pr.uniform(0.0, 6.28);
            tables.cos_t.push_back(std::cos(th));
            tables.sin_t.push_back(std::sin(th));
        }
        Rng r(9);
        Tensor x = random_tensor({m, dim}, r);
        {
            ad::Graph g;
            auto y = g.rope(g.input(x), &tables, heads);
            const Tensor& yv = g.val(y);
            // Same rotation applies to both heads' pair p of row i.
            for (std::int64_t i = 0; i < m; ++i)
                for (std::int64_t h = 0; h < heads; ++h)
                    for (std::int64_t p = 0; p < half; ++p) {
                        double c = tables.cos_t[static_cast<std::size_t>(i * half + p)];
                        double s = tables.sin_t[static_cast<std::size_t>(i * half + p)];
                        std::size_t base = static_cast<std::size_t>(i * dim + h * (dim / heads) + 2 * p);
                        double a = x.data[base], b = x.data[base + 1];
                        CHECK(yv.data[base] == doctest::Approx(a * c - b * s).epsilon(1e-12));
                        CHECK(yv.data[base + 1] == doctest::Approx(a * s + b * c).epsilon(1e-12));
                    }
        }
        fd_check({x}, [&tables](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
            return g.mse(g.rope(in[0], &tables, heads), fixed_target({m, dim}, 17));
        });
    }

    TEST_CASE("attention matches a softmax reference") {
        const std::int64_t m = 3, dim = 4, heads = 2, dh = dim / heads;
        Rng r(10);
        Tensor q = random_tensor({m, dim}, r), k = random_tensor({m, dim}, r),
               v = random_tensor({m, dim}, r);
        ad::Graph g;
        auto out = g.attention(g.input(q), g.input(k), g.input(v), heads);
        const Tensor& ov = g.val(out);
        double scale = 1.0 / std::sqrt(static_cast<double>(dh));
        for (std::int64_t h = 0; h < heads; ++h)
            for (std::int64_t i = 0; i < m; ++i) {
                std::vector<double> logits(m);
                double mx = -1e300;
                for (std::int64_t j = 0; j < m; ++j) {
                    double dot = 0;
                    for (std::int64_t d = 0; d < dh; ++d)
                        dot += q.data[static_cast<std::size_t>(i * dim + h * dh + d)] *
                               k.data[static_cast<std::size_t>(j * dim + h * dh + d)];
                    logits[static_cast<std::size_t>(j)] = dot * scale;
                    mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
                }
                double denom = 0;
                for (double& l : logits) {
                    l = std::exp(l - mx);
                    denom += l;
                }
                for (std::int64_t d = 0; d < dh; ++d) {
                    double want = 0;
                    for (std::int64_t j = 0; j < m; ++j)
                        want += logits[static_cast<std::size_t>(j)] / denom *
                                v.data[static_cast<std::size_t>(j * dim + h * dh + d)];
                    CHECK(ov.data[static_cast<std::size_t>(i * dim + h * dh + d)] ==
                          doctest::Approx(want).epsilon(1e-10));
                }
            }
    }

    TEST_CASE("attention differentiates through q, k, and v") {
        Rng r(11);
        Tensor q = random_tensor({5, 8}, r, 0.7), k = random_tensor({5, 8}, r, 0.7),
               v = random_tensor({5, 8}, r);
        fd_check(
            {q, k, v},
            [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
                return g.mse(g.attention(in[0], in[1], in[2], 2), fixed_target({5, 8}, 18));
            },
            5e-6);
    }

    TEST_CASE("mse value matches the elementwise mean") {
        ad::Graph g;
        Tensor pred({2, 2}, {1.0, 2.0, 3.0, 4.0});
        Tensor target({2, 2}, {1.0, 1.0, 1.0, 1.0});
        auto id = g.mse(g.input(pred), target);
        CHECK(g.val(id).data[0] == doctest::Approx((0.0 + 1.0 + 4.0 + 9.0) / 4.0).epsilon(1e-15));
    }

    TEST_CASE("gradients accumulate across fan-out") {
        // loss = mse(x + x, 0) => d/dx = 2 * (2x) * 2 / n ... verified via fd.
        Rng r(12);
        fd_check({random_tensor({2, 3}, r)},
                 [](ad::Graph& g, const std::vector<ad::Graph::Id>& in) {
                     return g.mse(g.add(in[0], in[0]), Tensor::zeros({2, 3}));
                 });
    }

    TEST_CASE("no-grad inputs receive zero gradient") {
        ad::Graph g;
        Tensor x({1, 2}, {1.0, 2.0});
        auto a = g.input(x, true);
        auto b = g.input(x, false);
        auto loss = g.mse(g.mul(a, b), Tensor::zeros({1, 2}));
        g.backward(loss);
        CHECK(g.grad_of(a).data[0] != 0.0);
        const Tensor& gb = g.grad_of(b);
        for (double v : gb.data) CHECK(v == 0.0);
    }

    TEST_CASE("shape mismatches are rejected") {
        ad::Graph g;
        auto a = g.input(Tensor::zeros({2, 3}));
        auto b = g.input(Tensor::zeros({3, 2}));
        CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
        CHECK_THROWS_AS(g.mul(a, b), std::invalid_argument);
        CHECK_THROWS_AS(g.matmul(a, a), std::invalid_argument);
        CHECK_THROWS_AS(g.attention(a, a, a, 2), std::invalid_argument);  // 3 % 2 != 0
    }

    TEST_CASE("backward requires a scalar root") {
        ad::Graph g;
        auto a = g.input(Tensor::zeros({2, 2}), true);
        CHECK_THROWS_AS(g.backward(a), std::invalid_argument);
    }
}
