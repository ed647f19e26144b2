#pragma once

// Single-file straight-line re-implementation of the attention dataflow,
// written first and kept independent of the library. Plain loops over
// flat buffers; the library implementation must agree bit-exactly.

#include <cmath>
#include <vector>

namespace emaref {

inline double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// x is N*C*H*W row-major. G groups, large-branch kernel k (odd).
// w1: Cg*Cg (1x1), b1: Cg, wk: Cg*Cg*k*k, bk: Cg, gamma/beta: Cg.
inline std::vector<double> ema_forward(
    const std::vector<double>& x, int N, int C, int H, int W, int G, int k,
    const std::vector<double>& w1, const std::vector<double>& b1,
    const std::vector<double>& wk, const std::vector<double>& bk,
    const std::vector<double>& gamma, const std::vector<double>& beta,
    double gn_eps) {
    const int Cg = C / G;
    const int NG = N * G;
    const int HW = H * W;
    auto gidx = [&](int ng, int cg, int y, int xx) {
        return ((size_t(ng) * Cg + cg) * H + y) * W + xx;
    };

    // directional pools
    std::vector<double> xh(size_t(NG) * Cg * H), xw(size_t(NG) * Cg * W);
    for (int ng = 0; ng < NG; ++ng)
        for (int cg = 0; cg < Cg; ++cg) {
            for (int y = 0; y < H; ++y) {
                double acc = 0.0;
                for (int xx = 0; xx < W; ++xx) acc += x[gidx(ng, cg, y, xx)];
                xh[(size_t(ng) * Cg + cg) * H + y] = acc * (1.0 / double(W));
            }
            for (int xx = 0; xx < W; ++xx) {
                double acc = 0.0;
                for (int y = 0; y < H; ++y) acc += x[gidx(ng, cg, y, xx)];
                xw[(size_t(ng) * Cg + cg) * W + xx] = acc * (1.0 / double(H));
            }
        }

    // shared 1x1 over the stacked H+W rows, then split into the two gates
    std::vector<double> gh(size_t(NG) * Cg * H), gw(size_t(NG) * Cg * W);
    for (int ng = 0; ng < NG; ++ng) {
        for (int r = 0; r < H + W; ++r)
            for (int co = 0; co < Cg; ++co) {
                double acc = 0.0;
                for (int ci = 0; ci < Cg; ++ci) {
                    double in = r < H ? xh[(size_t(ng) * Cg + ci) * H + r]
                                      : xw[(size_t(ng) * Cg + ci) * W + (r - H)];
                    acc += in * w1[size_t(co) * Cg + ci];
                }
                double out = acc + b1[size_t(co)];
                if (r < H)
                    gh[(size_t(ng) * Cg + co) * H + r] = sig(out);
                else
                    gw[(size_t(ng) * Cg + co) * W + (r - H)] = sig(out);
            }
    }

    // gate, then normalize per group over Cg*H*W
    std::vector<double> x1(size_t(NG) * Cg * HW);
    for (int ng = 0; ng < NG; ++ng) {
        for (int cg = 0; cg < Cg; ++cg)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    double t1 = x[gidx(ng, cg, y, xx)] *
                                gh[(size_t(ng) * Cg + cg) * H + y];
                    double t2 = t1 * gw[(size_t(ng) * Cg + cg) * W + xx];
                    x1[gidx(ng, cg, y, xx)] = t2;
                }
        const int m = Cg * HW;
        double acc = 0.0;
        for (int cg = 0; cg < Cg; ++cg)
            for (int i = 0; i < HW; ++i)
                acc += x1[(size_t(ng) * Cg + cg) * HW + i];
        const double mu = acc / double(m);
        double vacc = 0.0;
        for (int cg = 0; cg < Cg; ++cg)
            for (int i = 0; i < HW; ++i) {
                double d = x1[(size_t(ng) * Cg + cg) * HW + i] - mu;
                vacc += d * d;
            }
        const double is = 1.0 / std::sqrt(vacc / double(m) + gn_eps);
        for (int cg = 0; cg < Cg; ++cg)
            for (int i = 0; i < HW; ++i) {
                double& v = x1[(size_t(ng) * Cg + cg) * HW + i];
                v = (v - mu) * is * gamma[size_t(cg)] + beta[size_t(cg)];
            }
    }

    // large spatial branch
    const int pad = k / 2;
    std::vector<double> x2(size_t(NG) * Cg * HW);
    for (int ng = 0; ng < NG; ++ng)
        for (int co = 0; co < Cg; ++co)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx) {
                    double acc = 0.0;
                    for (int ci = 0; ci < Cg; ++ci)
                        for (int kh = 0; kh < k; ++kh) {
                            int yy = y - pad + kh;
                            if (yy < 0 || yy >= H) continue;
                            for (int kw = 0; kw < k; ++kw) {
                                int xc = xx - pad + kw;
                                if (xc < 0 || xc >= W) continue;
                                acc += x[gidx(ng, ci, yy, xc)] *
                                       wk[((size_t(co) * Cg + ci) * k + kh) * k +
                                          kw];
                            }
                        }
                    x2[gidx(ng, co, y, xx)] = acc + bk[size_t(co)];
                }

    // cross-branch attention
    std::vector<double> out(x.size());
    std::vector<double> a1(size_t(Cg)), a2(size_t(Cg));
    for (int ng = 0; ng < NG; ++ng) {
        auto pooled_softmax = [&](const std::vector<double>& src,
                                  std::vector<double>& dst) {
            std::vector<double> p(size_t(Cg));
            const double inv = 1.0 / (double(H) * double(W));
            for (int cg = 0; cg < Cg; ++cg) {
                double acc = 0.0;
                for (int i = 0; i < HW; ++i)
                    acc += src[(size_t(ng) * Cg + cg) * HW + i];
                p[size_t(cg)] = acc * inv;
            }
            double mx = p[0];
            for (int cg = 1; cg < Cg; ++cg) mx = std::max(mx, p[size_t(cg)]);
            double denom = 0.0;
            for (int cg = 0; cg < Cg; ++cg) {
                dst[size_t(cg)] = std::exp(p[size_t(cg)] - mx);
                denom += dst[size_t(cg)];
            }
            for (int cg = 0; cg < Cg; ++cg) dst[size_t(cg)] /= denom;
        };
        pooled_softmax(x1, a1);
        pooled_softmax(x2, a2);

        for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
                const int l = y * W + xx;
                double y1 = 0.0;
                for (int cg = 0; cg < Cg; ++cg)
                    y1 += a1[size_t(cg)] * x2[(size_t(ng) * Cg + cg) * HW + l];
                double y2 = 0.0;
                for (int cg = 0; cg < Cg; ++cg)
                    y2 += a2[size_t(cg)] * x1[(size_t(ng) * Cg + cg) * HW + l];
                const double attn = sig(y1 + y2);
                for (int cg = 0; cg < Cg; ++cg)
                    out[gidx(ng, cg, y, xx)] =
                        x[gidx(ng, cg, y, xx)] * attn;
            }
    }
    return out;
}

}  // namespace emaref
