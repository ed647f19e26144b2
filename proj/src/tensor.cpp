#include "epbc/tensor.hpp"

#include <cmath>

namespace epbc {

Tensor Tensor::from(Shape s, std::vector<double> data) {
    if (int64_t(data.size()) != s.numel())
        throw ShapeError("Tensor::from: " + std::to_string(data.size()) +
                         " values for shape " + s.str());
    Tensor t;
    t.shape = s;
    t.v = std::move(data);
    return t;
}

bool Tensor::all_finite() const {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

double Tensor::max_abs() const {
    double m = 0.0;
    for (double x : v) {
        double a = std::fabs(x);
        if (a > m) m = a;
    }
    return m;
}

}  // namespace epbc
