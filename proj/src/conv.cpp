#include <cmath>
#include <vector>

#include "epbc/tape.hpp"

namespace epbc {

// ---- convolution ------------------------------------------------------

namespace {

struct ConvDims {
    int N, Ci, H, W, Co, Cig, Cog, k, stride, pad, groups, Ho, Wo;
};

ConvDims conv_dims(const Shape& xs, const Shape& ws, int stride, int pad,
                   int groups) {
    ConvDims d;
    d.N = xs.n;
    d.Ci = xs.c;
    d.H = xs.h;
    d.W = xs.w;
    d.Co = ws.n;
    d.k = ws.h;
    d.stride = stride;
    d.pad = pad;
    d.groups = groups;
    if (groups < 1 || stride < 1 || pad < 0 || d.k < 1 || ws.h != ws.w)
        throw ShapeError("conv2d: bad stride/pad/groups/kernel");
    if (d.Ci % groups != 0 || d.Co % groups != 0)
        throw ShapeError("conv2d: channels " + std::to_string(d.Ci) + "->" +
                         std::to_string(d.Co) + " not divisible by groups " +
                         std::to_string(groups));
    d.Cig = d.Ci / groups;
    d.Cog = d.Co / groups;
    if (ws.c != d.Cig)
        throw ShapeError("conv2d: weight expects " + std::to_string(ws.c) +
                         " input channels per group, input has " +
                         std::to_string(d.Cig));
    if (d.k > d.H + 2 * pad || d.k > d.W + 2 * pad)
        throw ShapeError("conv2d: kernel " + std::to_string(d.k) +
                         " larger than padded input " +
                         std::to_string(d.H + 2 * pad));
    d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
    d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
    return d;
}

}  // namespace

Var conv2d(Var x, Var weight, std::optional<Var> bias, int stride, int pad,
           int groups) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Tensor& wv = T.val(weight);
    const ConvDims d = conv_dims(xv.shape, wv.shape, stride, pad, groups);
    if (bias) {
        const Shape bs = T.val(*bias).shape;
        if (bs.numel() != d.Co)
            throw ShapeError("conv2d: bias has " +
                             std::to_string(bs.numel()) + " values for " +
                             std::to_string(d.Co) + " output channels");
    }

    Tensor out(Shape{d.N, d.Co, d.Ho, d.Wo});
    const double* bp = bias ? T.val(*bias).v.data() : nullptr;

    for (int n = 0; n < d.N; ++n)
        for (int g = 0; g < d.groups; ++g)
            for (int cog = 0; cog < d.Cog; ++cog) {
                const int co = g * d.Cog + cog;
                double* op = out.plane(n, co);
                for (int ho = 0; ho < d.Ho; ++ho)
                    for (int wo = 0; wo < d.Wo; ++wo) {
                        double acc = 0.0;
                        const int hi0 = ho * d.stride - d.pad;
                        const int wi0 = wo * d.stride - d.pad;
                        for (int cig = 0; cig < d.Cig; ++cig) {
                            const double* xp =
                                xv.plane(n, g * d.Cig + cig);
                            const double* wp =
                                wv.plane(co, cig);
                            for (int kh = 0; kh < d.k; ++kh) {
                                const int hi = hi0 + kh;
                                if (hi < 0 || hi >= d.H) continue;
                                const double* xrow = xp + size_t(hi) * d.W;
                                const double* wrow = wp + size_t(kh) * d.k;
                                for (int kw = 0; kw < d.k; ++kw) {
                                    const int wi = wi0 + kw;
                                    if (wi < 0 || wi >= d.W) continue;
                                    acc += xrow[wi] * wrow[kw];
                                }
                            }
                        }
                        op[size_t(ho) * d.Wo + wo] = bp ? acc + bp[co] : acc;
                    }
            }

    bool ng = T.needs_grad(x) || T.needs_grad(weight) ||
              (bias && T.needs_grad(*bias));
    int ix = x.id, iw = weight.id, ib = bias ? bias->id : -1;
    return T.emplace(
        std::move(out), ng, [ix, iw, ib, d](Tape& t, const Tensor& g) {
            const Tensor& xv = t.val(Var{&t, ix});
            const Tensor& wv = t.val(Var{&t, iw});
            Tensor* gx = t.grad_sink(ix);
            Tensor* gw = t.grad_sink(iw);
            Tensor* gb = ib >= 0 ? t.grad_sink(ib) : nullptr;

            for (int n = 0; n < d.N; ++n)
                for (int gg = 0; gg < d.groups; ++gg)
                    for (int cog = 0; cog < d.Cog; ++cog) {
                        const int co = gg * d.Cog + cog;
                        const double* gp = g.plane(n, co);
                        for (int ho = 0; ho < d.Ho; ++ho)
                            for (int wo = 0; wo < d.Wo; ++wo) {
                                const double gval =
                                    gp[size_t(ho) * d.Wo + wo];
                                if (gval == 0.0) continue;
                                if (gb) gb->v[size_t(co)] += gval;
                                const int hi0 = ho * d.stride - d.pad;
                                const int wi0 = wo * d.stride - d.pad;
                                for (int cig = 0; cig < d.Cig; ++cig) {
                                    const int ci = gg * d.Cig + cig;
                                    const double* xp = xv.plane(n, ci);
                                    const double* wp = wv.plane(co, cig);
                                    double* gxp = gx ? gx->plane(n, ci) : nullptr;
                                    double* gwp = gw ? gw->plane(co, cig) : nullptr;
                                    for (int kh = 0; kh < d.k; ++kh) {
                                        const int hi = hi0 + kh;
                                        if (hi < 0 || hi >= d.H) continue;
                                        for (int kw = 0; kw < d.k; ++kw) {
                                            const int wi = wi0 + kw;
                                            if (wi < 0 || wi >= d.W) continue;
                                            const size_t xi =
                                                size_t(hi) * d.W + wi;
                                            const size_t wiy =
                                                size_t(kh) * d.k + kw;
                                            if (gxp)
                                                gxp[xi] += wp[wiy] * gval;
                                            if (gwp)
                                                gwp[wiy] += xp[xi] * gval;
                                        }
                                    }
                                }
                            }
                    }
        });
}

// ---- pooling ----------------------------------------------------------

Var global_avg_pool2d(Var x) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    if (s.h < 1 || s.w < 1) throw ShapeError("global_avg_pool2d: empty plane");
    const double inv = 1.0 / (double(s.h) * double(s.w));
    Tensor out(Shape{s.n, s.c, 1, 1});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* p = xv.plane(n, c);
            double acc = 0.0;
            for (int i = 0; i < s.h * s.w; ++i) acc += p[i];
            out.at(n, c, 0, 0) = acc * inv;
        }
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, s, inv](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (int n = 0; n < s.n; ++n)
                             for (int c = 0; c < s.c; ++c) {
                                 const double gs = g.at(n, c, 0, 0) * inv;
                                 double* p = gx->plane(n, c);
                                 for (int i = 0; i < s.h * s.w; ++i)
                                     p[i] += gs;
                             }
                     });
}

Var avg_pool_rows(Var x) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    const double inv = 1.0 / double(s.w);
    Tensor out(Shape{s.n, s.c, s.h, 1});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y) {
                double acc = 0.0;
                for (int xw = 0; xw < s.w; ++xw) acc += xv.at(n, c, y, xw);
                out.at(n, c, y, 0) = acc * inv;
            }
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, s, inv](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (int n = 0; n < s.n; ++n)
                             for (int c = 0; c < s.c; ++c)
                                 for (int y = 0; y < s.h; ++y) {
                                     const double gs = g.at(n, c, y, 0) * inv;
                                     for (int xw = 0; xw < s.w; ++xw)
                                         gx->at(n, c, y, xw) += gs;
                                 }
                     });
}

Var avg_pool_cols(Var x) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    const double inv = 1.0 / double(s.h);
    Tensor out(Shape{s.n, s.c, 1, s.w});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int xw = 0; xw < s.w; ++xw) {
                double acc = 0.0;
                for (int y = 0; y < s.h; ++y) acc += xv.at(n, c, y, xw);
                out.at(n, c, 0, xw) = acc * inv;
            }
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, s, inv](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (int n = 0; n < s.n; ++n)
                             for (int c = 0; c < s.c; ++c)
                                 for (int xw = 0; xw < s.w; ++xw) {
                                     const double gs = g.at(n, c, 0, xw) * inv;
                                     for (int y = 0; y < s.h; ++y)
                                         gx->at(n, c, y, xw) += gs;
                                 }
                     });
}

// ---- normalization ----------------------------------------------------

namespace {

void check_affine(const Shape& s, int channels, const char* op) {
    if (s.numel() != channels)
        throw ShapeError(std::string(op) + ": affine has " +
                         std::to_string(s.numel()) + " values for " +
                         std::to_string(channels) + " channels");
}

}  // namespace

Var batch_norm_train(Var x, Var gamma, Var beta, double eps,
                     Tensor* batch_mean, Tensor* batch_var) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    check_affine(T.val(gamma).shape, s.c, "batch_norm");
    check_affine(T.val(beta).shape, s.c, "batch_norm");

    const int64_t m = int64_t(s.n) * s.h * s.w;
    std::vector<double> mean(size_t(s.c), 0.0), invstd(size_t(s.c), 0.0),
        var(size_t(s.c), 0.0);
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = xv.plane(n, c);
            for (int i = 0; i < s.h * s.w; ++i) acc += p[i];
        }
        mean[size_t(c)] = acc / double(m);
        double vacc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = xv.plane(n, c);
            for (int i = 0; i < s.h * s.w; ++i) {
                double dx = p[i] - mean[size_t(c)];
                vacc += dx * dx;
            }
        }
        var[size_t(c)] = vacc / double(m);
        invstd[size_t(c)] = 1.0 / std::sqrt(var[size_t(c)] + eps);
    }
    if (batch_mean) {
        *batch_mean = Tensor(Shape{1, s.c, 1, 1});
        for (int c = 0; c < s.c; ++c) batch_mean->v[size_t(c)] = mean[size_t(c)];
    }
    if (batch_var) {
        *batch_var = Tensor(Shape{1, s.c, 1, 1});
        for (int c = 0; c < s.c; ++c) batch_var->v[size_t(c)] = var[size_t(c)];
    }

    const Tensor& gv = T.val(gamma);
    const Tensor& bv = T.val(beta);
    Tensor out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* p = xv.plane(n, c);
            double* o = out.plane(n, c);
            const double mu = mean[size_t(c)], is = invstd[size_t(c)];
            const double ga = gv.v[size_t(c)], be = bv.v[size_t(c)];
            for (int i = 0; i < s.h * s.w; ++i)
                o[i] = (p[i] - mu) * is * ga + be;
        }

    bool ng = T.needs_grad(x) || T.needs_grad(gamma) || T.needs_grad(beta);
    int ix = x.id, ig = gamma.id, ibta = beta.id;
    return T.emplace(
        std::move(out), ng,
        [ix, ig, ibta, s, m, mean, invstd](Tape& t, const Tensor& g) {
            const Tensor& xv = t.val(Var{&t, ix});
            const Tensor& gv = t.val(Var{&t, ig});
            Tensor* gx = t.grad_sink(ix);
            Tensor* gga = t.grad_sink(ig);
            Tensor* gbe = t.grad_sink(ibta);
            for (int c = 0; c < s.c; ++c) {
                const double mu = mean[size_t(c)], is = invstd[size_t(c)];
                const double ga = gv.v[size_t(c)];
                double sum_g = 0.0, sum_gx = 0.0;
                for (int n = 0; n < s.n; ++n) {
                    const double* gp = g.plane(n, c);
                    const double* xp = xv.plane(n, c);
                    for (int i = 0; i < s.h * s.w; ++i) {
                        sum_g += gp[i];
                        sum_gx += gp[i] * (xp[i] - mu) * is;
                    }
                }
                if (gga) gga->v[size_t(c)] += sum_gx;
                if (gbe) gbe->v[size_t(c)] += sum_g;
                if (gx) {
                    const double k1 = sum_g / double(m);
                    const double k2 = sum_gx / double(m);
                    for (int n = 0; n < s.n; ++n) {
                        const double* gp = g.plane(n, c);
                        const double* xp = xv.plane(n, c);
                        double* gxp = gx->plane(n, c);
                        for (int i = 0; i < s.h * s.w; ++i) {
                            const double xhat = (xp[i] - mu) * is;
                            gxp[i] += ga * is * (gp[i] - k1 - xhat * k2);
                        }
                    }
                }
            }
        });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    check_affine(T.val(gamma).shape, s.c, "batch_norm");
    check_affine(T.val(beta).shape, s.c, "batch_norm");
    check_affine(running_mean.shape, s.c, "batch_norm running stats");
    check_affine(running_var.shape, s.c, "batch_norm running stats");

    std::vector<double> mean(size_t(s.c)), invstd(size_t(s.c));
    for (int c = 0; c < s.c; ++c) {
        mean[size_t(c)] = running_mean.v[size_t(c)];
        invstd[size_t(c)] = 1.0 / std::sqrt(running_var.v[size_t(c)] + eps);
    }

    const Tensor& gv = T.val(gamma);
    const Tensor& bv = T.val(beta);
    Tensor out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const double* p = xv.plane(n, c);
            double* o = out.plane(n, c);
            const double mu = mean[size_t(c)], is = invstd[size_t(c)];
            const double ga = gv.v[size_t(c)], be = bv.v[size_t(c)];
            for (int i = 0; i < s.h * s.w; ++i)
                o[i] = (p[i] - mu) * is * ga + be;
        }

    bool ng = T.needs_grad(x) || T.needs_grad(gamma) || T.needs_grad(beta);
    int ix = x.id, ig = gamma.id, ibta = beta.id;
    return T.emplace(
        std::move(out), ng,
        [ix, ig, ibta, s, mean, invstd](Tape& t, const Tensor& g) {
            const Tensor& xv = t.val(Var{&t, ix});
            const Tensor& gv = t.val(Var{&t, ig});
            Tensor* gx = t.grad_sink(ix);
            Tensor* gga = t.grad_sink(ig);
            Tensor* gbe = t.grad_sink(ibta);
            for (int c = 0; c < s.c; ++c) {
                const double mu = mean[size_t(c)], is = invstd[size_t(c)];
                const double ga = gv.v[size_t(c)];
                for (int n = 0; n < s.n; ++n) {
                    const double* gp = g.plane(n, c);
                    const double* xp = xv.plane(n, c);
                    double* gxp = gx ? gx->plane(n, c) : nullptr;
                    for (int i = 0; i < s.h * s.w; ++i) {
                        if (gxp) gxp[i] += gp[i] * ga * is;
                        if (gga)
                            gga->v[size_t(c)] += gp[i] * (xp[i] - mu) * is;
                        if (gbe) gbe->v[size_t(c)] += gp[i];
                    }
                }
            }
        });
}

Var group_norm(Var x, int n_groups, Var gamma, Var beta, double eps) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    if (n_groups < 1 || s.c % n_groups != 0)
        throw ShapeError("group_norm: " + std::to_string(s.c) +
                         " channels not divisible into " +
                         std::to_string(n_groups) + " groups");
    check_affine(T.val(gamma).shape, s.c, "group_norm");
    check_affine(T.val(beta).shape, s.c, "group_norm");
    const int cg = s.c / n_groups;
    const int64_t m = int64_t(cg) * s.h * s.w;

    std::vector<double> mean(size_t(s.n) * n_groups),
        invstd(size_t(s.n) * n_groups);
    for (int n = 0; n < s.n; ++n)
        for (int gi = 0; gi < n_groups; ++gi) {
            double acc = 0.0;
            for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
                const double* p = xv.plane(n, c);
                for (int i = 0; i < s.h * s.w; ++i) acc += p[i];
            }
            const double mu = acc / double(m);
            double vacc = 0.0;
            for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
                const double* p = xv.plane(n, c);
                for (int i = 0; i < s.h * s.w; ++i) {
                    double dx = p[i] - mu;
                    vacc += dx * dx;
                }
            }
            mean[size_t(n) * n_groups + gi] = mu;
            invstd[size_t(n) * n_groups + gi] =
                1.0 / std::sqrt(vacc / double(m) + eps);
        }

    const Tensor& gv = T.val(gamma);
    const Tensor& bv = T.val(beta);
    Tensor out(s);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c) {
            const int gi = c / cg;
            const double mu = mean[size_t(n) * n_groups + gi];
            const double is = invstd[size_t(n) * n_groups + gi];
            const double ga = gv.v[size_t(c)], be = bv.v[size_t(c)];
            const double* p = xv.plane(n, c);
            double* o = out.plane(n, c);
            for (int i = 0; i < s.h * s.w; ++i)
                o[i] = (p[i] - mu) * is * ga + be;
        }

    bool ng = T.needs_grad(x) || T.needs_grad(gamma) || T.needs_grad(beta);
    int ix = x.id, ig = gamma.id, ibta = beta.id;
    return T.emplace(
        std::move(out), ng,
        [ix, ig, ibta, s, n_groups, cg, m, mean, invstd](Tape& t,
                                                         const Tensor& g) {
            const Tensor& xv = t.val(Var{&t, ix});
            const Tensor& gv = t.val(Var{&t, ig});
            Tensor* gx = t.grad_sink(ix);
            Tensor* gga = t.grad_sink(ig);
            Tensor* gbe = t.grad_sink(ibta);

            if (gga || gbe) {
                for (int c = 0; c < s.c; ++c) {
                    const int gi = c / cg;
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int n = 0; n < s.n; ++n) {
                        const double mu = mean[size_t(n) * n_groups + gi];
                        const double is = invstd[size_t(n) * n_groups + gi];
                        const double* gp = g.plane(n, c);
                        const double* xp = xv.plane(n, c);
                        for (int i = 0; i < s.h * s.w; ++i) {
                            sum_g += gp[i];
                            sum_gx += gp[i] * (xp[i] - mu) * is;
                        }
                    }
                    if (gga) gga->v[size_t(c)] += sum_gx;
                    if (gbe) gbe->v[size_t(c)] += sum_g;
                }
            }
            if (gx) {
                for (int n = 0; n < s.n; ++n)
                    for (int gi = 0; gi < n_groups; ++gi) {
                        const double mu = mean[size_t(n) * n_groups + gi];
                        const double is = invstd[size_t(n) * n_groups + gi];
                        double sum_h = 0.0, sum_hx = 0.0;
                        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
                            const double ga = gv.v[size_t(c)];
                            const double* gp = g.plane(n, c);
                            const double* xp = xv.plane(n, c);
                            for (int i = 0; i < s.h * s.w; ++i) {
                                const double h = gp[i] * ga;
                                sum_h += h;
                                sum_hx += h * (xp[i] - mu) * is;
                            }
                        }
                        const double k1 = sum_h / double(m);
                        const double k2 = sum_hx / double(m);
                        for (int c = gi * cg; c < (gi + 1) * cg; ++c) {
                            const double ga = gv.v[size_t(c)];
                            const double* gp = g.plane(n, c);
                            const double* xp = xv.plane(n, c);
                            double* gxp = gx->plane(n, c);
                            for (int i = 0; i < s.h * s.w; ++i) {
                                const double xhat = (xp[i] - mu) * is;
                                gxp[i] += is * (gp[i] * ga - k1 - xhat * k2);
                            }
                        }
                    }
            }
        });
}

// ---- matmul -----------------------------------------------------------

Var matmul(Var a, Var b) {
    Tape& T = *a.tape;
    const Tensor& av = T.val(a);
    const Tensor& bv = T.val(b);
    const Shape as = av.shape, bs = bv.shape;
    if (as.c != 1 || bs.c != 1 || as.n != bs.n || as.w != bs.h)
        throw ShapeError("matmul: " + as.str() + " x " + bs.str());
    const int B = as.n, M = as.h, K = as.w, L = bs.w;
    Tensor out(Shape{B, 1, M, L});
    for (int n = 0; n < B; ++n) {
        const double* ap = av.plane(n, 0);
        const double* bp = bv.plane(n, 0);
        double* op = out.plane(n, 0);
        for (int i = 0; i < M; ++i)
            for (int j = 0; j < L; ++j) {
                double acc = 0.0;
                for (int k = 0; k < K; ++k)
                    acc += ap[size_t(i) * K + k] * bp[size_t(k) * L + j];
                op[size_t(i) * L + j] = acc;
            }
    }
    bool ng = T.needs_grad(a) || T.needs_grad(b);
    int ia = a.id, ib = b.id;
    return T.emplace(
        std::move(out), ng, [ia, ib, B, M, K, L](Tape& t, const Tensor& g) {
            const Tensor& av = t.val(Var{&t, ia});
            const Tensor& bv = t.val(Var{&t, ib});
            Tensor* ga = t.grad_sink(ia);
            Tensor* gb = t.grad_sink(ib);
            for (int n = 0; n < B; ++n) {
                const double* ap = av.plane(n, 0);
                const double* bp = bv.plane(n, 0);
                const double* gp = g.plane(n, 0);
                if (ga) {
                    double* gap = ga->plane(n, 0);
                    for (int i = 0; i < M; ++i)
                        for (int k = 0; k < K; ++k) {
                            double acc = 0.0;
                            for (int j = 0; j < L; ++j)
                                acc += gp[size_t(i) * L + j] *
                                       bp[size_t(k) * L + j];
                            gap[size_t(i) * K + k] += acc;
                        }
                }
                if (gb) {
                    double* gbp = gb->plane(n, 0);
                    for (int k = 0; k < K; ++k)
                        for (int j = 0; j < L; ++j) {
                            double acc = 0.0;
                            for (int i = 0; i < M; ++i)
                                acc += ap[size_t(i) * K + k] *
                                       gp[size_t(i) * L + j];
                            gbp[size_t(k) * L + j] += acc;
                        }
                }
            }
        });
}

}  // namespace epbc
