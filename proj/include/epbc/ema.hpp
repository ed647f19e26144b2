#pragma once

#include "epbc/nn.hpp"

namespace epbc {

// Grouped cross-spatial attention configuration. groups = 0 selects the
// default: 8 when the channel count allows it, otherwise one group per
// channel.
struct EmaConfig {
    int groups = 0;
    int large_kernel = 5;  // 3 or 5
};

int resolve_ema_groups(int channels, const EmaConfig& cfg);

// Attention over G channel groups: directional pools feed a shared 1x1
// gate pair, a large-kernel branch runs in parallel, and the two branch
// descriptors cross-multiply into a sigmoid spatial gate per group.
// Output shape always equals input shape.
struct Ema {
    std::string prefix;
    int channels = 0;
    EmaConfig cfg;

    void init(ParamSet& ps, Rng& rng) const;
    Var forward(Ctx& ctx, Var x) const;
    Costing cost(int h, int w) const;
};

// Bottleneck variant that appends the attention stage: conv, conv, EMA,
// with the residual only when the shortcut flag is set.
struct EmaBottleneck {
    std::string prefix;
    int channels = 0;
    bool shortcut = true;
    EmaConfig cfg;

    void init(ParamSet& ps, Rng& rng) const;
    Var forward(Ctx& ctx, Var x) const;
    Costing cost(int h, int w) const;
};

// C2f with EMA-augmented bottlenecks.
struct C2fEma {
    std::string prefix;
    int c1 = 0, c2 = 0, n = 1;
    bool shortcut = true;
    EmaConfig cfg;

    int hidden() const { return c2 / 2; }
    void init(ParamSet& ps, Rng& rng) const;
    Var forward(Ctx& ctx, Var x) const;
    Costing cost(int h, int w) const;
};

}  // namespace epbc
