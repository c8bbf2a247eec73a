#include "cascadeflow/graph.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace cascadeflow::ad {

namespace {
void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("graph: " + msg);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Graph::Id Graph::push(Tensor value, bool rg, BwdFn bwd) {
    nodes_.push_back(Node{std::move(value), Tensor{}, rg, std::move(bwd)});
    return static_cast<Id>(nodes_.size() - 1);
}

Graph::Id Graph::input(Tensor value, bool requires_grad) {
    return push(std::move(value), requires_grad, nullptr);
}

Tensor& Graph::grad_buf(Id id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.data.empty() && !n.value.data.empty()) n.grad = Tensor::zeros(n.value.shape);
    return n.grad;
}

bool Graph::grad_live(Id id) const {
    return !nodes_[static_cast<std::size_t>(id)].grad.data.empty();
}

const Tensor& Graph::grad_of(Id id) { return grad_buf(id); }

void Graph::backward(Id root) {
    require(v(root).numel() == 1, "backward root must be scalar");
    grad_buf(root).data[0] = 1.0;
    for (Id i = root; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.rg || !n.bwd || n.grad.data.empty()) continue;
        n.bwd(*this, i);
    }
}

Graph::Id Graph::add(Id a, Id b) {
    require(v(a).same_shape(v(b)), "add shape mismatch " + shape_str(v(a).shape) + " vs " +
                                       shape_str(v(b).shape));
    Tensor out = v(a);
    const auto& bd = v(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
    bool rg = requires_grad(a) || requires_grad(b);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [a, b](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            if (g.requires_grad(a)) {
                auto& ga = g.grad_buf(a).data;
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (g.requires_grad(b)) {
                auto& gb = g.grad_buf(b).data;
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::sub(Id a, Id b) {
    require(v(a).same_shape(v(b)), "sub shape mismatch");
    Tensor out = v(a);
    const auto& bd = v(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bd[i];
    bool rg = requires_grad(a) || requires_grad(b);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [a, b](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            if (g.requires_grad(a)) {
                auto& ga = g.grad_buf(a).data;
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
            }
            if (g.requires_grad(b)) {
                auto& gb = g.grad_buf(b).data;
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::mul(Id a, Id b) {
    require(v(a).same_shape(v(b)), "mul shape mismatch");
    Tensor out = v(a);
    const auto& bd = v(b).data;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bd[i];
    bool rg = requires_grad(a) || requires_grad(b);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [a, b](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            const auto& av = g.v(a).data;
            const auto& bv = g.v(b).data;
            if (g.requires_grad(a)) {
                auto& ga = g.grad_buf(a).data;
                for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
            }
            if (g.requires_grad(b)) {
                auto& gb = g.grad_buf(b).data;
                for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::scale(Id a, double s) {
    Tensor out = v(a);
    for (auto& x : out.data) x *= s;
    bool rg = requires_grad(a);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [a, s](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            auto& ga = g.grad_buf(a).data;
            for (std::size_t i = 0; i < go.size(); ++i) ga[i] += s * go[i];
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::matmul(Id a, Id b) {
    const Tensor& av = v(a);
    const Tensor& bv = v(b);
    require(av.shape.size() == 2 && bv.shape.size() == 2, "matmul needs 2-D operands");
    require(av.cols() == bv.rows(), "matmul inner dims differ: " + shape_str(av.shape) + " x " +
                                        shape_str(bv.shape));
    const std::int64_t p = av.rows(), q = av.cols(), r = bv.cols();
    Tensor out = Tensor::zeros({p, r});
    {
        const double* __restrict__ A = av.ptr();
        const double* __restrict__ B = bv.ptr();
        double* __restrict__ C = out.ptr();
        for (std::int64_t i = 0; i < p; ++i)
            for (std::int64_t k = 0; k < q; ++k) {
                double aik = A[i * q + k];
                if (aik == 0.0) continue;
                const double* Bk = B + k * r;
                double* Ci = C + i * r;
                for (std::int64_t j = 0; j < r; ++j) Ci[j] += aik * Bk[j];
            }
    }
    bool rg = requires_grad(a) || requires_grad(b);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [a, b, p, q, r](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            if (g.requires_grad(a)) {
                double* GA = g.grad_buf(a).ptr();
                const double* B = g.v(b).ptr();
                // dA[i,k] += dot(dC[i,:], B[k,:])
                for (std::int64_t i = 0; i < p; ++i)
                    for (std::int64_t k = 0; k < q; ++k) {
                        double acc = 0.0;
                        const double* goi = GO + i * r;
                        const double* Bk = B + k * r;
                        for (std::int64_t j = 0; j < r; ++j) acc += goi[j] * Bk[j];
                        GA[i * q + k] += acc;
                    }
            }
            if (g.requires_grad(b)) {
                double* GB = g.grad_buf(b).ptr();
                const double* A = g.v(a).ptr();
                // dB[k,:] += A[i,k] * dC[i,:]
                for (std::int64_t i = 0; i < p; ++i)
                    for (std::int64_t k = 0; k < q; ++k) {
                        double aik = A[i * q + k];
                        if (aik == 0.0) continue;
                        const double* goi = GO + i * r;
                        double* GBk = GB + k * r;
                        for (std::int64_t j = 0; j < r; ++j) GBk[j] += aik * goi[j];
                    }
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::linear(Id x, Id w, Id bias) {
    const Tensor& xv = v(x);
    const Tensor& wv = v(w);
    const Tensor& bv = v(bias);
    require(xv.shape.size() == 2 && wv.shape.size() == 2, "linear needs 2-D x and w");
    require(xv.cols() == wv.cols(), "linear: x cols " + std::to_string(xv.cols()) +
                                        " != w cols " + std::to_string(wv.cols()));
    require(bv.shape.size() == 1 && bv.shape[0] == wv.rows(),
            "linear: bias shape mismatches w rows");
    const std::int64_t m = xv.rows(), in = xv.cols(), out_n = wv.rows();
    Tensor out = Tensor::zeros({m, out_n});
    {
        const double* __restrict__ X = xv.ptr();
        const double* __restrict__ W = wv.ptr();
        const double* __restrict__ B = bv.ptr();
        double* __restrict__ Y = out.ptr();
        for (std::int64_t i = 0; i < m; ++i) {
            const double* xi = X + i * in;
            double* yi = Y + i * out_n;
            for (std::int64_t o = 0; o < out_n; ++o) {
                const double* wo = W + o * in;
                double acc = B[o];
                for (std::int64_t k = 0; k < in; ++k) acc += xi[k] * wo[k];
                yi[o] = acc;
            }
        }
    }
    bool rg = requires_grad(x) || requires_grad(w) || requires_grad(bias);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x, w, bias, m, in, out_n](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            if (g.requires_grad(x)) {
                double* GX = g.grad_buf(x).ptr();
                const double* W = g.v(w).ptr();
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* goi = GO + i * out_n;
                    double* gxi = GX + i * in;
                    for (std::int64_t o = 0; o < out_n; ++o) {
                        double go = goi[o];
                        if (go == 0.0) continue;
                        const double* wo = W + o * in;
                        for (std::int64_t k = 0; k < in; ++k) gxi[k] += go * wo[k];
                    }
                }
            }
            if (g.requires_grad(w)) {
                double* GW = g.grad_buf(w).ptr();
                const double* X = g.v(x).ptr();
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* goi = GO + i * out_n;
                    const double* xi = X + i * in;
                    for (std::int64_t o = 0; o < out_n; ++o) {
                        double go = goi[o];
                        if (go == 0.0) continue;
                        double* gwo = GW + o * in;
                        for (std::int64_t k = 0; k < in; ++k) gwo[k] += go * xi[k];
                    }
                }
            }
            if (g.requires_grad(bias)) {
                double* GB = g.grad_buf(bias).ptr();
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* goi = GO + i * out_n;
                    for (std::int64_t o = 0; o < out_n; ++o) GB[o] += goi[o];
                }
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::layer_norm(Id x, double eps) {
    const Tensor& xv = v(x);
    require(xv.shape.size() == 2, "layer_norm needs a 2-D tensor");
    const std::int64_t m = xv.rows(), c = xv.cols();
    Tensor out = Tensor::zeros({m, c});
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < m; ++i) {
        const double* xi = xv.ptr() + i * c;
        double* yi = out.ptr() + i * c;
        double mu = 0.0;
        for (std::int64_t k = 0; k < c; ++k) mu += xi[k];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t k = 0; k < c; ++k) {
            double d = xi[k] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<std::size_t>(i)] = is;
        for (std::int64_t k = 0; k < c; ++k) yi[k] = (xi[k] - mu) * is;
    }
    bool rg = requires_grad(x);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x, m, c, inv_std](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            const double* Y = g.v(self).ptr();
            double* GX = g.grad_buf(x).ptr();
            for (std::int64_t i = 0; i < m; ++i) {
                const double* goi = GO + i * c;
                const double* yi = Y + i * c;
                double* gxi = GX + i * c;
                double mean_g = 0.0, mean_gy = 0.0;
                for (std::int64_t k = 0; k < c; ++k) {
                    mean_g += goi[k];
                    mean_gy += goi[k] * yi[k];
                }
                mean_g /= static_cast<double>(c);
                mean_gy /= static_cast<double>(c);
                double is = (*inv_std)[static_cast<std::size_t>(i)];
                for (std::int64_t k = 0; k < c; ++k)
                    gxi[k] += is * (goi[k] - mean_g - yi[k] * mean_gy);
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::silu(Id x) {
    Tensor out = v(x);
    for (auto& a : out.data) a = a * sigmoid(a);
    bool rg = requires_grad(x);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            const auto& xv = g.v(x).data;
            auto& gx = g.grad_buf(x).data;
            for (std::size_t i = 0; i < go.size(); ++i) {
                double s = sigmoid(xv[i]);
                gx[i] += go[i] * s * (1.0 + xv[i] * (1.0 - s));
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::row_affine(Id x, Id scale_row, Id shift_row) {
    const Tensor& xv = v(x);
    const Tensor& sv = v(scale_row);
    const Tensor& tv = v(shift_row);
    require(xv.shape.size() == 2, "row_affine needs 2-D x");
    const std::int64_t m = xv.rows(), c = xv.cols();
    require(sv.shape.size() == 2 && sv.rows() == 1 && sv.cols() == c, "row_affine scale must be [1,c]");
    require(tv.shape.size() == 2 && tv.rows() == 1 && tv.cols() == c, "row_affine shift must be [1,c]");
    Tensor out = Tensor::zeros({m, c});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t k = 0; k < c; ++k)
            out.data[static_cast<std::size_t>(i * c + k)] =
                xv.data[static_cast<std::size_t>(i * c + k)] * (1.0 + sv.data[static_cast<std::size_t>(k)]) +
                tv.data[static_cast<std::size_t>(k)];
    bool rg = requires_grad(x) || requires_grad(scale_row) || requires_grad(shift_row);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x, scale_row, shift_row, m, c](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            const double* X = g.v(x).ptr();
            const double* S = g.v(scale_row).ptr();
            if (g.requires_grad(x)) {
                double* GX = g.grad_buf(x).ptr();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t k = 0; k < c; ++k)
                        GX[i * c + k] += GO[i * c + k] * (1.0 + S[k]);
            }
            if (g.requires_grad(scale_row)) {
                double* GS = g.grad_buf(scale_row).ptr();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t k = 0; k < c; ++k) GS[k] += GO[i * c + k] * X[i * c + k];
            }
            if (g.requires_grad(shift_row)) {
                double* GT = g.grad_buf(shift_row).ptr();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t k = 0; k < c; ++k) GT[k] += GO[i * c + k];
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::row_scale(Id x, Id gate_row) {
    const Tensor& xv = v(x);
    const Tensor& gv = v(gate_row);
    require(xv.shape.size() == 2, "row_scale needs 2-D x");
    const std::int64_t m = xv.rows(), c = xv.cols();
    require(gv.shape.size() == 2 && gv.rows() == 1 && gv.cols() == c, "row_scale gate must be [1,c]");
    Tensor out = Tensor::zeros({m, c});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t k = 0; k < c; ++k)
            out.data[static_cast<std::size_t>(i * c + k)] =
                xv.data[static_cast<std::size_t>(i * c + k)] * gv.data[static_cast<std::size_t>(k)];
    bool rg = requires_grad(x) || requires_grad(gate_row);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x, gate_row, m, c](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            if (g.requires_grad(x)) {
                const double* GATE = g.v(gate_row).ptr();
                double* GX = g.grad_buf(x).ptr();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t k = 0; k < c; ++k) GX[i * c + k] += GO[i * c + k] * GATE[k];
            }
            if (g.requires_grad(gate_row)) {
                const double* X = g.v(x).ptr();
                double* GG = g.grad_buf(gate_row).ptr();
                for (std::int64_t i = 0; i < m; ++i)
                    for (std::int64_t k = 0; k < c; ++k) GG[k] += GO[i * c + k] * X[i * c + k];
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::slice_cols(Id x, std::int64_t lo, std::int64_t hi) {
    const Tensor& xv = v(x);
    require(xv.shape.size() == 2 && xv.rows() == 1, "slice_cols expects a [1,n] row");
    require(0 <= lo && lo < hi && hi <= xv.cols(), "slice_cols range out of bounds");
    Tensor out = Tensor::zeros({1, hi - lo});
    for (std::int64_t k = lo; k < hi; ++k)
        out.data[static_cast<std::size_t>(k - lo)] = xv.data[static_cast<std::size_t>(k)];
    bool rg = requires_grad(x);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x, lo, hi](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            auto& gx = g.grad_buf(x).data;
            for (std::int64_t k = lo; k < hi; ++k)
                gx[static_cast<std::size_t>(k)] += go[static_cast<std::size_t>(k - lo)];
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::table_row(Id table, std::int64_t row) {
    const Tensor& tv = v(table);
    require(tv.shape.size() == 2, "table_row needs a 2-D table");
    require(0 <= row && row < tv.rows(), "table_row index " + std::to_string(row) +
                                             " out of range [0, " + std::to_string(tv.rows()) + ")");
    const std::int64_t c = tv.cols();
    Tensor out = Tensor::zeros({1, c});
    for (std::int64_t k = 0; k < c; ++k)
        out.data[static_cast<std::size_t>(k)] = tv.data[static_cast<std::size_t>(row * c + k)];
    bool rg = requires_grad(table);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [table, row, c](Graph& g, Id self) {
            const auto& go = g.grad_buf(self).data;
            auto& gt = g.grad_buf(table).data;
            for (std::int64_t k = 0; k < c; ++k)
                gt[static_cast<std::size_t>(row * c + k)] += go[static_cast<std::size_t>(k)];
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::rope(Id x, const RopeTables* tables, std::int64_t heads) {
    const Tensor& xv = v(x);
    require(xv.shape.size() == 2, "rope needs 2-D input");
    const std::int64_t m = xv.rows(), dim = xv.cols();
    require(heads > 0 && dim % heads == 0, "rope: dim not divisible by heads");
    const std::int64_t dh = dim / heads;
    require(tables != nullptr && tables->rows == m && tables->half * 2 == dh,
            "rope tables do not match input grid/head size");
    Tensor out = Tensor::zeros({m, dim});
    const double* C = tables->cos_t.data();
    const double* S = tables->sin_t.data();
    const std::int64_t half = tables->half;
    for (std::int64_t i = 0; i < m; ++i) {
        const double* xi = xv.ptr() + i * dim;
        double* yi = out.ptr() + i * dim;
        const double* ci = C + i * half;
        const double* si = S + i * half;
        for (std::int64_t h = 0; h < heads; ++h) {
            const double* xh = xi + h * dh;
            double* yh = yi + h * dh;
            for (std::int64_t p = 0; p < half; ++p) {
                double a = xh[2 * p], b = xh[2 * p + 1];
                yh[2 * p] = a * ci[p] - b * si[p];
                yh[2 * p + 1] = a * si[p] + b * ci[p];
            }
        }
    }
    bool rg = requires_grad(x);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [x, tables, heads, m, dim, dh](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            double* GX = g.grad_buf(x).ptr();
            const double* C = tables->cos_t.data();
            const double* S = tables->sin_t.data();
            const std::int64_t half = tables->half;
            for (std::int64_t i = 0; i < m; ++i) {
                const double* goi = GO + i * dim;
                double* gxi = GX + i * dim;
                const double* ci = C + i * half;
                const double* si = S + i * half;
                for (std::int64_t h = 0; h < heads; ++h) {
                    const double* gh = goi + h * dh;
                    double* gxh = gxi + h * dh;
                    for (std::int64_t p = 0; p < half; ++p) {
                        double ga = gh[2 * p], gb = gh[2 * p + 1];
                        // inverse rotation (transpose)
                        gxh[2 * p] += ga * ci[p] + gb * si[p];
                        gxh[2 * p + 1] += -ga * si[p] + gb * ci[p];
                    }
                }
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::attention(Id q, Id k, Id val_in, std::int64_t heads) {
    const Tensor& qv = v(q);
    const Tensor& kv = v(k);
    const Tensor& vv = v(val_in);
    require(qv.shape.size() == 2 && qv.same_shape(kv) && qv.same_shape(vv),
            "attention q/k/v must share a 2-D shape");
    const std::int64_t m = qv.rows(), dim = qv.cols();
    require(heads > 0 && dim % heads == 0, "attention: dim not divisible by heads");
    const std::int64_t dh = dim / heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor out = Tensor::zeros({m, dim});
    std::vector<double> p(static_cast<std::size_t>(m));
    const double* Q = qv.ptr();
    const double* K = kv.ptr();
    const double* V = vv.ptr();
    double* O = out.ptr();
    for (std::int64_t h = 0; h < heads; ++h) {
        const std::int64_t off = h * dh;
        for (std::int64_t i = 0; i < m; ++i) {
            const double* qi = Q + i * dim + off;
            double mx = -1e300;
            for (std::int64_t j = 0; j < m; ++j) {
                const double* kj = K + j * dim + off;
                double s = 0.0;
                for (std::int64_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                s *= scl;
                p[static_cast<std::size_t>(j)] = s;
                if (s > mx) mx = s;
            }
            double z = 0.0;
            for (std::int64_t j = 0; j < m; ++j) {
                double e = std::exp(p[static_cast<std::size_t>(j)] - mx);
                p[static_cast<std::size_t>(j)] = e;
                z += e;
            }
            double inv_z = 1.0 / z;
            double* oi = O + i * dim + off;
            for (std::int64_t j = 0; j < m; ++j) {
                double w = p[static_cast<std::size_t>(j)] * inv_z;
                if (w == 0.0) continue;
                const double* vj = V + j * dim + off;
                for (std::int64_t d = 0; d < dh; ++d) oi[d] += w * vj[d];
            }
        }
    }
    bool rg = requires_grad(q) || requires_grad(k) || requires_grad(val_in);
    BwdFn bwd = nullptr;
    if (rg)
        bwd = [q, k, val_in, heads, m, dim, dh, scl](Graph& g, Id self) {
            const double* GO = g.grad_buf(self).ptr();
            const double* Q = g.v(q).ptr();
            const double* K = g.v(k).ptr();
            const double* V = g.v(val_in).ptr();
            double* GQ = g.grad_buf(q).ptr();
            double* GK = g.grad_buf(k).ptr();
            double* GV = g.grad_buf(val_in).ptr();
            std::vector<double> p(static_cast<std::size_t>(m));
            std::vector<double> dp(static_cast<std::size_t>(m));
            for (std::int64_t h = 0; h < heads; ++h) {
                const std::int64_t off = h * dh;
                for (std::int64_t i = 0; i < m; ++i) {
                    const double* qi = Q + i * dim + off;
                    // Recompute the softmax row (not stored in forward).
                    double mx = -1e300;
                    for (std::int64_t j = 0; j < m; ++j) {
                        const double* kj = K + j * dim + off;
                        double s = 0.0;
                        for (std::int64_t d = 0; d < dh; ++d) s += qi[d] * kj[d];
                        s *= scl;
                        p[static_cast<std::size_t>(j)] = s;
                        if (s > mx) mx = s;
                    }
                    double z = 0.0;
                    for (std::int64_t j = 0; j < m; ++j) {
                        double e = std::exp(p[static_cast<std::size_t>(j)] - mx);
                        p[static_cast<std::size_t>(j)] = e;
                        z += e;
                    }
                    double inv_z = 1.0 / z;
                    for (std::int64_t j = 0; j < m; ++j) p[static_cast<std::size_t>(j)] *= inv_z;

                    const double* goi = GO + i * dim + off;
                    double dot_pp = 0.0;
                    for (std::int64_t j = 0; j < m; ++j) {
                        const double* vj = V + j * dim + off;
                        double acc = 0.0;
                        for (std::int64_t d = 0; d < dh; ++d) acc += goi[d] * vj[d];
                        dp[static_cast<std::size_t>(j)] = acc;
                        dot_pp += acc * p[static_cast<std::size_t>(j)];
                        double w = p[static_cast<std::size_t>(j)];
                        if (w != 0.0) {
                            double* gvj = GV + j * dim + off;
                            for (std::int64_t d = 0; d < dh; ++d) gvj[d] += w * goi[d];
                        }
                    }
                    double* gqi = GQ + i * dim + off;
                    for (std::int64_t j = 0; j < m; ++j) {
                        double ds = p[static_cast<std::size_t>(j)] *
                                    (dp[static_cast<std::size_t>(j)] - dot_pp) * scl;
                        if (ds == 0.0) continue;
                        const double* kj = K + j * dim + off;
                        double* gkj = GK + j * dim + off;
                        for (std::int64_t d = 0; d < dh; ++d) {
                            gqi[d] += ds * kj[d];
                            gkj[d] += ds * qi[d];
                        }
                    }
                }
            }
        };
    return push(std::move(out), rg, std::move(bwd));
}

Graph::Id Graph::mse(Id pred, Tensor target) {
    const Tensor& pv = v(pred);
    require(pv.same_shape(target), "mse: prediction shape " + shape_str(pv.shape) +
                                       " vs target " + shape_str(target.shape));
    require(pv.numel() > 0, "mse on empty tensor");
    const std::int64_t n = pv.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double d = pv.data[static_cast<std::size_t>(i)] - target.data[static_cast<std::size_t>(i)];
        acc += d * d;
    }
    Tensor out({1}, {acc / static_cast<double>(n)});
    bool rg = requires_grad(pred);
    BwdFn bwd = nullptr;
    if (rg) {
        auto tgt = std::make_shared<Tensor>(std::move(target));
        bwd = [pred, tgt, n](Graph& g, Id self) {
            double go = g.grad_buf(self).data[0];
            const auto& pv2 = g.v(pred).data;
            auto& gp = g.grad_buf(pred).data;
            double c = 2.0 * go / static_cast<double>(n);
            for (std::int64_t i = 0; i < n; ++i)
                gp[static_cast<std::size_t>(i)] +=
                    c * (pv2[static_cast<std::size_t>(i)] - tgt->data[static_cast<std::size_t>(i)]);
        };
    }
    return push(std::move(out), rg, std::move(bwd));
}

}  // namespace cascadeflow::ad
