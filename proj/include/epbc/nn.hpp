#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epbc/rng.hpp"
#include "epbc/tape.hpp"

namespace epbc {

// One forward/backward execution context: a tape bound to the model's
// parameters plus the train/eval mode switch.
struct Ctx {
    Tape tape;
    ParamSet* params = nullptr;
    bool training = false;

    Ctx() = default;
    explicit Ctx(ParamSet& ps, bool train = false)
        : params(&ps), training(train) {}

    Var param(const std::string& name) { return tape.param(*params, name); }
    Var input(Tensor t) { return tape.input(std::move(t)); }
    Var constant(Tensor t) { return tape.constant(std::move(t)); }
};

// Multiply-add accounting at a fixed input resolution.
struct Costing {
    int64_t params = 0;
    int64_t flops = 0;
    Costing& operator+=(const Costing& o) {
        params += o.params;
        flops += o.flops;
        return *this;
    }
};

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Uniform init over +/- 1/sqrt(fan_in).
Tensor conv_weight_init(Rng& rng, int co, int ci, int k);

// Batch-norm state bundle living in a ParamSet: gamma/beta trainable,
// running stats not.
struct BatchNorm {
    std::string prefix;
    int channels = 0;

    void init(ParamSet& ps) const;
    Var forward(Ctx& ctx, Var x) const;
    int64_t param_count() const { return 2 * channels; }
};

// conv + BN + SiLU, the standard block every stage is made of.
struct ConvModule {
    std::string prefix;
    int ci = 0, co = 0, k = 1, stride = 1;
    bool act = true;

    void init(ParamSet& ps, Rng& rng) const;
    Var forward(Ctx& ctx, Var x) const;
    Costing cost(int h, int w) const;
    int out_extent(int e) const { return (e + 2 * (k / 2) - k) / stride + 1; }
};

// YOLOv8-style bottleneck: two 3x3 conv modules with optional residual.
struct Bottleneck {
    std::string prefix;
    int channels = 0;
    bool shortcut = true;

    void init(ParamSet& ps, Rng& rng) const;
    Var forward(Ctx& ctx, Var x) const;
    Costing cost(int h, int w) const;
};

// Split/bottleneck-chain/concat block (the baseline the EMA variant
// extends): entry 1x1 -> split halves -> n bottlenecks on the running
// half -> concat all -> exit 1x1.
struct C2f {
    std::string prefix;
    int c1 = 0, c2 = 0, n = 1;
    bool shortcut = true;

    int hidden() const { return c2 / 2; }
    void init(ParamSet& ps, Rng& rng) const;
    Var forward(Ctx& ctx, Var x) const;
    Costing cost(int h, int w) const;
};

}  // namespace epbc
