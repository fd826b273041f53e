#include "mtpd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "mtpd/error.hpp"

namespace mtpd::ops {

const double bce_logit_clamp = std::log((1.0 - bce_probability_floor) / bce_probability_floor);

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

bool wants_grad(const detail::Node& self, std::size_t i) {
    return i < self.parents.size() && self.parents[i]->requires_grad;
}

std::vector<double>& parent_grad(detail::Node& self, std::size_t i) {
    auto& p = *self.parents[i];
    p.ensure_grad();
    return p.grad;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
    if (x.rank() != rank) {
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             " input, got " + shape_str(x.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
    std::size_t patch() const { return cin * k * k; }
    std::size_t positions() const { return ho * wo; }
    bool is_pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* img, const ConvGeometry& g, double* col) {
    const std::size_t P = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = col + ((c * g.k + ky) * g.k + kx) * P;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    double* out = row + oy * g.wo;
                    if (iy < 0 || iy >= static_cast<long>(g.h)) {
                        std::fill(out, out + g.wo, 0.0);
                        continue;
                    }
                    const double* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        out[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
    const std::size_t P = g.positions();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = col + ((c * g.k + ky) * g.k + kx) * P;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
                    if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
                    double* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    const double* in = row + oy * g.wo;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
                        if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += in[ox];
                    }
                }
            }
        }
    }
}

// Per-axis interpolation taps for half-pixel bilinear resizing.
struct Taps {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;
};

Taps bilinear_taps(std::size_t in, std::size_t out) {
    Taps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        t.lo[o] = lo;
        t.hi[o] = std::min(lo + 1, in - 1);
        t.frac[o] = t.hi[o] == lo ? 0.0 : src - static_cast<double>(lo);
    }
    return t;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
    require_rank(x, 4, "conv2d");
    require_rank(weight, 4, "conv2d weight");
    if (weight.dim(2) != weight.dim(3)) throw DimensionError("conv2d: non-square kernel");
    if (weight.dim(1) != x.dim(1)) {
        throw DimensionError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                             std::to_string(weight.dim(1)));
    }
    if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
        throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " for " +
                             std::to_string(weight.dim(0)) + " filters");
    }
    if (stride == 0) throw DimensionError("conv2d: stride 0");
    ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2), stride, padding, 0, 0};
    if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) throw DimensionError("conv2d: kernel larger than input");
    g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
    g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;

    const std::size_t K = g.patch(), P = g.positions(), in_img = g.cin * g.h * g.w;
    std::vector<double> out(g.n * g.cout * P, 0.0);
    auto cols = std::make_shared<std::vector<double>>();
    if (!g.is_pointwise()) cols->resize(g.n * K * P);

    const auto xd = x.data();
    ConstMap W(weight.data().data(), static_cast<long>(g.cout), static_cast<long>(K));
    for (std::size_t n = 0; n < g.n; ++n) {
        const double* colp = xd.data() + n * in_img;
        if (!g.is_pointwise()) {
            im2col(colp, g, cols->data() + n * K * P);
            colp = cols->data() + n * K * P;
        }
        ConstMap C(colp, static_cast<long>(K), static_cast<long>(P));
        MutMap Y(out.data() + n * g.cout * P, static_cast<long>(g.cout), static_cast<long>(P));
        Y.noalias() = W * C;
        if (!bias.empty()) {
            const auto bd = bias.data();
            for (std::size_t o = 0; o < g.cout; ++o) Y.row(static_cast<long>(o)).array() += bd[o];
        }
    }

    return Tensor::make_result(
        {g.n, g.cout, g.ho, g.wo}, std::move(out), {x, weight, bias}, [g, cols](detail::Node& self) {
            const std::size_t K = g.patch(), P = g.positions(), in_img = g.cin * g.h * g.w;
            const auto& xn = *self.parents[0];
            const auto& wn = *self.parents[1];
            ConstMap W(wn.data.data(), static_cast<long>(g.cout), static_cast<long>(K));
            std::vector<double> dcol(g.is_pointwise() ? 0 : K * P);
            for (std::size_t n = 0; n < g.n; ++n) {
                ConstMap dY(self.grad.data() + n * g.cout * P, static_cast<long>(g.cout), static_cast<long>(P));
                const double* colp = g.is_pointwise() ? xn.data.data() + n * in_img : cols->data() + n * K * P;
                if (wants_grad(self, 1)) {
                    ConstMap C(colp, static_cast<long>(K), static_cast<long>(P));
                    MutMap dW(parent_grad(self, 1).data(), static_cast<long>(g.cout), static_cast<long>(K));
                    dW.noalias() += dY * C.transpose();
                }
                if (wants_grad(self, 2)) {
                    auto& db = parent_grad(self, 2);
                    for (std::size_t o = 0; o < g.cout; ++o) db[o] += dY.row(static_cast<long>(o)).sum();
                }
                if (wants_grad(self, 0)) {
                    double* dx = parent_grad(self, 0).data() + n * in_img;
                    if (g.is_pointwise()) {
                        MutMap dX(dx, static_cast<long>(K), static_cast<long>(P));
                        dX.noalias() += W.transpose() * dY;
                    } else {
                        MutMap dC(dcol.data(), static_cast<long>(K), static_cast<long>(P));
                        dC.noalias() = W.transpose() * dY;
                        col2im_add(dcol.data(), g, dx);
                    }
                }
            }
        });
}

Tensor relu(const Tensor& x) {
    const auto xd = x.data();
    std::vector<double> out(xd.size());
    for (std::size_t i = 0; i < xd.size(); ++i) out[i] = xd[i] > 0.0 ? xd[i] : 0.0;
    return Tensor::make_result(x.shape(), std::move(out), {x}, [](detail::Node& self) {
        const auto& in = self.parents[0]->data;
        auto& dx = parent_grad(self, 0);
        for (std::size_t i = 0; i < in.size(); ++i) {
            if (in[i] > 0.0) dx[i] += self.grad[i];
        }
    });
}

Tensor maxpool2x2(const Tensor& x) {
    require_rank(x, 4, "maxpool2x2");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H < 2 || W < 2) throw DimensionError("maxpool2x2: spatial size below 2");
    const std::size_t Ho = H / 2, Wo = W / 2;
    const auto xd = x.data();
    std::vector<double> out(N * C * Ho * Wo);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* plane = xd.data() + nc * H * W;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                std::size_t best = (2 * oy) * W + 2 * ox;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = (2 * oy + dy) * W + 2 * ox + dx;
                        if (plane[idx] > plane[best]) best = idx;
                    }
                }
                const std::size_t o = (nc * Ho + oy) * Wo + ox;
                out[o] = plane[best];
                (*argmax)[o] = nc * H * W + best;
            }
        }
    }
    return Tensor::make_result({N, C, Ho, Wo}, std::move(out), {x}, [argmax](detail::Node& self) {
        auto& dx = parent_grad(self, 0);
        for (std::size_t o = 0; o < self.grad.size(); ++o) dx[(*argmax)[o]] += self.grad[o];
    });
}

Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    require_rank(x, 4, "resize_bilinear");
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H == 0 || W == 0 || out_h == 0 || out_w == 0) throw DimensionError("resize_bilinear: empty spatial size");
    auto ty = std::make_shared<Taps>(bilinear_taps(H, out_h));
    auto tx = std::make_shared<Taps>(bilinear_taps(W, out_w));
    const auto xd = x.data();
    std::vector<double> out(N * C * out_h * out_w);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        const double* plane = xd.data() + nc * H * W;
        double* dst = out.data() + nc * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const double fy = ty->frac[oy];
            const double* r0 = plane + ty->lo[oy] * W;
            const double* r1 = plane + ty->hi[oy] * W;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const double fx = tx->frac[ox];
                const std::size_t x0 = tx->lo[ox], x1 = tx->hi[ox];
                const double top = r0[x0] + fx * (r0[x1] - r0[x0]);
                const double bot = r1[x0] + fx * (r1[x1] - r1[x0]);
                dst[oy * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    return Tensor::make_result({N, C, out_h, out_w}, std::move(out), {x},
                               [ty, tx, H, W, out_h, out_w](detail::Node& self) {
                                   auto& dx = parent_grad(self, 0);
                                   const std::size_t planes = self.grad.size() / (out_h * out_w);
                                   for (std::size_t nc = 0; nc < planes; ++nc) {
                                       double* plane = dx.data() + nc * H * W;
                                       const double* g = self.grad.data() + nc * out_h * out_w;
                                       for (std::size_t oy = 0; oy < out_h; ++oy) {
                                           const double fy = ty->frac[oy];
                                           double* r0 = plane + ty->lo[oy] * W;
                                           double* r1 = plane + ty->hi[oy] * W;
                                           for (std::size_t ox = 0; ox < out_w; ++ox) {
                                               const double fx = tx->frac[ox];
                                               const std::size_t x0 = tx->lo[ox], x1 = tx->hi[ox];
                                               const double v = g[oy * out_w + ox];
                                               r0[x0] += v * (1 - fy) * (1 - fx);
                                               r0[x1] += v * (1 - fy) * fx;
                                               r1[x0] += v * fy * (1 - fx);
                                               r1[x1] += v * fy * fx;
                                           }
                                       }
                                   }
                               });
}

Tensor upsample_bilinear(const Tensor& x, std::size_t scale) {
    require_rank(x, 4, "upsample_bilinear");
    if (scale == 0) throw DimensionError("upsample_bilinear: scale 0");
    return resize_bilinear(x, x.dim(2) * scale, x.dim(3) * scale);
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    const auto xd = x.data();
    std::vector<double> out(N * C, 0.0);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        double s = 0.0;
        for (std::size_t i = 0; i < HW; ++i) s += xd[nc * HW + i];
        out[nc] = s / static_cast<double>(HW);
    }
    return Tensor::make_result({N, C}, std::move(out), {x}, [HW](detail::Node& self) {
        auto& dx = parent_grad(self, 0);
        const double inv = 1.0 / static_cast<double>(HW);
        for (std::size_t nc = 0; nc < self.grad.size(); ++nc) {
            const double g = self.grad[nc] * inv;
            for (std::size_t i = 0; i < HW; ++i) dx[nc * HW + i] += g;
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear weight");
    if (weight.dim(1) != x.dim(1)) {
        throw DimensionError("linear: input has " + std::to_string(x.dim(1)) + " features, weight expects " +
                             std::to_string(weight.dim(1)));
    }
    if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
        throw DimensionError("linear: bias shape " + shape_str(bias.shape()));
    }
    const long B = static_cast<long>(x.dim(0)), In = static_cast<long>(x.dim(1)), Out = static_cast<long>(weight.dim(0));
    std::vector<double> out(static_cast<std::size_t>(B * Out));
    MutMap Y(out.data(), B, Out);
    Y.noalias() = ConstMap(x.data().data(), B, In) * ConstMap(weight.data().data(), Out, In).transpose();
    if (!bias.empty()) {
        const auto bd = bias.data();
        for (long b = 0; b < B; ++b)
            for (long o = 0; o < Out; ++o) Y(b, o) += bd[static_cast<std::size_t>(o)];
    }
    return Tensor::make_result({static_cast<std::size_t>(B), static_cast<std::size_t>(Out)}, std::move(out),
                               {x, weight, bias}, [B, In, Out](detail::Node& self) {
                                   ConstMap dY(self.grad.data(), B, Out);
                                   if (wants_grad(self, 0)) {
                                       MutMap dX(parent_grad(self, 0).data(), B, In);
                                       dX.noalias() += dY * ConstMap(self.parents[1]->data.data(), Out, In);
                                   }
                                   if (wants_grad(self, 1)) {
                                       MutMap dW(parent_grad(self, 1).data(), Out, In);
                                       dW.noalias() += dY.transpose() * ConstMap(self.parents[0]->data.data(), B, In);
                                   }
                                   if (wants_grad(self, 2)) {
                                       auto& db = parent_grad(self, 2);
                                       for (long o = 0; o < Out; ++o) db[static_cast<std::size_t>(o)] += dY.col(o).sum();
                                   }
                               });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const auto ad = a.data(), bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        for (std::size_t p = 0; p < 2; ++p) {
            if (!wants_grad(self, p)) continue;
            auto& d = parent_grad(self, p);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    const auto ad = a.data(), bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
        if (wants_grad(self, 0)) {
            auto& d = parent_grad(self, 0);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
        }
        if (wants_grad(self, 1)) {
            auto& d = parent_grad(self, 1);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= self.grad[i];
        }
    });
}

Tensor scale(const Tensor& a, double factor) {
    const auto ad = a.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * factor;
    return Tensor::make_result(a.shape(), std::move(out), {a}, [factor](detail::Node& self) {
        auto& d = parent_grad(self, 0);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i] * factor;
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return Tensor::make_result({1}, {s}, {a}, [](detail::Node& self) {
        auto& d = parent_grad(self, 0);
        for (double& v : d) v += self.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw DimensionError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor slice_columns(const Tensor& x, std::size_t begin, std::size_t end) {
    require_rank(x, 2, "slice_columns");
    const std::size_t B = x.dim(0), F = x.dim(1);
    if (begin >= end || end > F) throw DimensionError("slice_columns: bad range for " + shape_str(x.shape()));
    const std::size_t w = end - begin;
    const auto xd = x.data();
    std::vector<double> out(B * w);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t j = 0; j < w; ++j) out[b * w + j] = xd[b * F + begin + j];
    return Tensor::make_result({B, w}, std::move(out), {x}, [B, F, w, begin](detail::Node& self) {
        auto& d = parent_grad(self, 0);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t j = 0; j < w; ++j) d[b * F + begin + j] += self.grad[b * w + j];
    });
}

Tensor mse_loss(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse_loss");
    if (a.numel() == 0) throw DimensionError("mse_loss of empty tensor");
    const auto ad = a.data(), bd = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < ad.size(); ++i) {
        const double d = ad[i] - bd[i];
        s += d * d;
    }
    const double inv = 1.0 / static_cast<double>(ad.size());
    return Tensor::make_result({1}, {s * inv}, {a, b}, [inv](detail::Node& self) {
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        const double g = 2.0 * inv * self.grad[0];
        if (wants_grad(self, 0)) {
            auto& d = parent_grad(self, 0);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g * (av[i] - bv[i]);
        }
        if (wants_grad(self, 1)) {
            auto& d = parent_grad(self, 1);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g * (av[i] - bv[i]);
        }
    });
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
    require_same_shape(logits, targets, "bce_with_logits");
    if (logits.numel() == 0) throw DimensionError("bce_with_logits of empty tensor");
    const auto z = logits.data(), y = targets.data();
    const double L = bce_logit_clamp;
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double zc = std::clamp(z[i], -L, L);
        // softplus(zc) - y * zc, written to avoid overflow
        s += std::max(zc, 0.0) + std::log1p(std::exp(-std::abs(zc))) - y[i] * zc;
    }
    const double inv = 1.0 / static_cast<double>(z.size());
    return Tensor::make_result({1}, {s * inv}, {logits}, [inv, targets, L](detail::Node& self) {
        const auto& zv = self.parents[0]->data;
        const auto yv = targets.data();
        auto& d = parent_grad(self, 0);
        const double g = inv * self.grad[0];
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (zv[i] <= -L || zv[i] >= L) continue;
            const double p = 1.0 / (1.0 + std::exp(-zv[i]));
            d[i] += g * (p - yv[i]);
        }
    });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    require_rank(logits, 2, "cross_entropy");
    const std::size_t B = logits.dim(0), K = logits.dim(1);
    if (labels.size() != B) throw DimensionError("cross_entropy: label count does not match batch");
    const auto z = logits.data();
    auto probs = std::make_shared<std::vector<double>>(B * K);
    double s = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K) throw DimensionError("cross_entropy: label out of range");
        const double* row = z.data() + b * K;
        const double m = *std::max_element(row, row + K);
        double denom = 0.0;
        for (std::size_t k = 0; k < K; ++k) denom += std::exp(row[k] - m);
        const double log_denom = std::log(denom);
        for (std::size_t k = 0; k < K; ++k) (*probs)[b * K + k] = std::exp(row[k] - m - log_denom);
        s -= row[labels[b]] - m - log_denom;
    }
    const double inv = 1.0 / static_cast<double>(B);
    return Tensor::make_result({1}, {s * inv}, {logits}, [probs, labels, B, K, inv](detail::Node& self) {
        auto& d = parent_grad(self, 0);
        const double g = inv * self.grad[0];
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t k = 0; k < K; ++k) {
                const double onehot = static_cast<int>(k) == labels[b] ? 1.0 : 0.0;
                d[b * K + k] += g * ((*probs)[b * K + k] - onehot);
            }
        }
    });
}

}  // namespace mtpd::ops
