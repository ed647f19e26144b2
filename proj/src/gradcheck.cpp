#include "epbc/gradcheck.hpp"

#include <cmath>

namespace epbc {

double finite_diff_max_rel_err(const ScalarFn& f,
                               const std::vector<Tensor>& point,
                               const std::vector<Tensor>& analytic,
                               double step) {
    if (point.size() != analytic.size())
        throw std::invalid_argument("finite_diff: tensor/gradient count mismatch");
    std::vector<Tensor> work = point;
    double worst = 0.0;
    for (size_t t = 0; t < work.size(); ++t) {
        if (!(work[t].shape == analytic[t].shape))
            throw ShapeError("finite_diff: gradient shape mismatch at slot " +
                             std::to_string(t));
        for (size_t i = 0; i < work[t].v.size(); ++i) {
            const double keep = work[t].v[i];
            work[t].v[i] = keep + step;
            const double fp = f(work);
            work[t].v[i] = keep - step;
            const double fm = f(work);
            work[t].v[i] = keep;

            const double numeric = (fp - fm) / (2.0 * step);
            const double a = analytic[t].v[i];
            const double denom =
                std::max(1.0, std::max(std::fabs(a), std::fabs(numeric)));
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > worst) worst = rel;
        }
    }
    return worst;
}

}  // namespace epbc
