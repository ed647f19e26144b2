#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "epbc/tensor.hpp"

namespace epbc {

// Seeded RNG with hand-rolled distributions. std::mt19937_64 output is
// pinned by the standard; the distribution helpers below avoid the
// implementation-defined std::*_distribution classes so that identical
// seeds give identical streams on every toolchain.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return double(eng_() >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }
    // Integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        int span = hi - lo + 1;
        int k = int(uniform() * span);
        if (k >= span) k = span - 1;
        return lo + k;
    }
    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    Tensor uniform_tensor(Shape s, double lo, double hi) {
        Tensor t(s);
        for (auto& x : t.v) x = uniform(lo, hi);
        return t;
    }
    Tensor normal_tensor(Shape s, double stddev = 1.0) {
        Tensor t(s);
        for (auto& x : t.v) x = normal() * stddev;
        return t;
    }

    // Fisher-Yates shuffle of an index vector.
    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (size_t i = xs.size(); i > 1; --i) {
            size_t j = size_t(uniform() * double(i));
            if (j >= i) j = i - 1;
            std::swap(xs[i - 1], xs[j]);
        }
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace epbc
