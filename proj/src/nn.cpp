#include "epbc/nn.hpp"

#include <cmath>

namespace epbc {

Tensor conv_weight_init(Rng& rng, int co, int ci, int k) {
    double bound = 1.0 / std::sqrt(double(ci) * k * k);
    return rng.uniform_tensor({co, ci, k, k}, -bound, bound);
}

// ---- BatchNorm ---------------------------------------------------------

void BatchNorm::init(ParamSet& ps) const {
    Tensor gamma({1, channels, 1, 1});
    for (auto& v : gamma.v) v = 1.0;
    ps.create(prefix + ".gamma", gamma);
    ps.create(prefix + ".beta", Tensor({1, channels, 1, 1}));
    ps.create(prefix + ".running_mean", Tensor({1, channels, 1, 1}), false);
    Tensor rv({1, channels, 1, 1});
    for (auto& v : rv.v) v = 1.0;
    ps.create(prefix + ".running_var", rv, false);
}

Var BatchNorm::forward(Ctx& ctx, Var x) const {
    Var gamma = ctx.param(prefix + ".gamma");
    Var beta = ctx.param(prefix + ".beta");
    if (ctx.training) {
        Tensor bm, bv;
        Var y = batch_norm_train(x, gamma, beta, kBnEps, &bm, &bv);
        Param& rm = ctx.params->at(prefix + ".running_mean");
        Param& rv = ctx.params->at(prefix + ".running_var");
        for (int c = 0; c < channels; ++c) {
            rm.value.v[size_t(c)] = (1.0 - kBnMomentum) * rm.value.v[size_t(c)] +
                                    kBnMomentum * bm.v[size_t(c)];
            rv.value.v[size_t(c)] = (1.0 - kBnMomentum) * rv.value.v[size_t(c)] +
                                    kBnMomentum * bv.v[size_t(c)];
        }
        return y;
    }
    const Param& rm = ctx.params->at(prefix + ".running_mean");
    const Param& rv = ctx.params->at(prefix + ".running_var");
    return batch_norm_eval(x, gamma, beta, rm.value, rv.value, kBnEps);
}

// ---- ConvModule ----------------------------------------------------------

void ConvModule::init(ParamSet& ps, Rng& rng) const {
    ps.create(prefix + ".conv.w", conv_weight_init(rng, co, ci, k));
    BatchNorm{prefix + ".bn", co}.init(ps);
}

Var ConvModule::forward(Ctx& ctx, Var x) const {
    Var w = ctx.param(prefix + ".conv.w");
    Var y = conv2d(x, w, std::nullopt, stride, k / 2);
    y = BatchNorm{prefix + ".bn", co}.forward(ctx, y);
    return act ? silu(y) : y;
}

Costing ConvModule::cost(int h, int w) const {
    int ho = out_extent(h), wo = out_extent(w);
    Costing c;
    c.params = int64_t(co) * ci * k * k + 2 * co;
    c.flops = 2LL * k * k * ci * co * ho * wo;
    return c;
}

// ---- Bottleneck ----------------------------------------------------------

void Bottleneck::init(ParamSet& ps, Rng& rng) const {
    ConvModule{prefix + ".cv1", channels, channels, 3, 1}.init(ps, rng);
    ConvModule{prefix + ".cv2", channels, channels, 3, 1}.init(ps, rng);
}

Var Bottleneck::forward(Ctx& ctx, Var x) const {
    Var y = ConvModule{prefix + ".cv1", channels, channels, 3, 1}.forward(ctx, x);
    y = ConvModule{prefix + ".cv2", channels, channels, 3, 1}.forward(ctx, y);
    return shortcut ? add(x, y) : y;
}

Costing Bottleneck::cost(int h, int w) const {
    Costing c;
    c += ConvModule{prefix + ".cv1", channels, channels, 3, 1}.cost(h, w);
    c += ConvModule{prefix + ".cv2", channels, channels, 3, 1}.cost(h, w);
    return c;
}

// ---- C2f -----------------------------------------------------------------

void C2f::init(ParamSet& ps, Rng& rng) const {
    const int c = hidden();
    ConvModule{prefix + ".cv1", c1, 2 * c, 1, 1}.init(ps, rng);
    for (int i = 0; i < n; ++i)
        Bottleneck{prefix + ".m" + std::to_string(i), c, shortcut}.init(ps, rng);
    ConvModule{prefix + ".cv2", (2 + n) * c, c2, 1, 1}.init(ps, rng);
}

Var C2f::forward(Ctx& ctx, Var x) const {
    const int c = hidden();
    Var y = ConvModule{prefix + ".cv1", c1, 2 * c, 1, 1}.forward(ctx, x);
    std::vector<Var> parts{slice_channels(y, 0, c), slice_channels(y, c, 2 * c)};
    for (int i = 0; i < n; ++i)
        parts.push_back(Bottleneck{prefix + ".m" + std::to_string(i), c,
                                   shortcut}
                            .forward(ctx, parts.back()));
    Var cat = concat_channels(parts);
    return ConvModule{prefix + ".cv2", (2 + n) * c, c2, 1, 1}.forward(ctx, cat);
}

Costing C2f::cost(int h, int w) const {
    const int c = hidden();
    Costing total;
    total += ConvModule{prefix + ".cv1", c1, 2 * c, 1, 1}.cost(h, w);
    for (int i = 0; i < n; ++i)
        total +=
            Bottleneck{prefix + ".m" + std::to_string(i), c, shortcut}.cost(h, w);
    total += ConvModule{prefix + ".cv2", (2 + n) * c, c2, 1, 1}.cost(h, w);
    return total;
}

}  // namespace epbc
