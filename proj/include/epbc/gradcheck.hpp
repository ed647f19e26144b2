#pragma once

#include <functional>
#include <string>
#include <vector>

#include "epbc/tensor.hpp"

namespace epbc {

// Scalar function of a list of tensors, evaluated with no gradient state.
using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

// Central finite differences against analytic gradients. Perturbs every
// coordinate of every tensor by +/- step and returns the worst relative
// error max(|a - n| / max(1, |a|, |n|)). The numeric side never touches
// the tape, so it stays an independent oracle for whatever produced
// `analytic`.
double finite_diff_max_rel_err(const ScalarFn& f,
                               const std::vector<Tensor>& point,
                               const std::vector<Tensor>& analytic,
                               double step = 1e-5);

// One named entry of the gradient suite; run() returns the max relative
// error for that case.
struct GradCase {
    std::string name;
    double tolerance;
    std::function<double()> run;
};

// Every differentiable operation and composite module, on fixed seeds.
std::vector<GradCase> gradient_suite();

// Per-module slices of the suite, kept separate so unit tests can run
// just their own cases.
std::vector<GradCase> tensor_core_grad_cases();

}  // namespace epbc
