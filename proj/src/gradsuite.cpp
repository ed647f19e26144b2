#include <cmath>

#include "epbc/gradcheck.hpp"
#include "epbc/rng.hpp"
#include "epbc/tape.hpp"

namespace epbc {

namespace {

// Generic driver: `build` wires a scalar loss from leaf Vars created on
// the given tape, one per point tensor. Analytic gradients come from one
// taped backward pass; the numeric side re-evaluates the same wiring on
// fresh tapes.
double check_fn(const std::vector<Tensor>& point,
                const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                double step = 1e-5) {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const Tensor& t : point) leaves.push_back(tape.input(t));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<Tensor> analytic;
    for (Var v : leaves) analytic.push_back(tape.grad(v));

    ScalarFn f = [&build](const std::vector<Tensor>& at) {
        Tape t2;
        std::vector<Var> ls;
        ls.reserve(at.size());
        for (const Tensor& t : at) ls.push_back(t2.constant(t));
        // Constants skip backward bookkeeping; value path is identical.
        return t2.val(build(t2, ls)).v[0];
    };
    return finite_diff_max_rel_err(f, point, analytic, step);
}

// Weighted sum against fixed coefficients turns any tensor output into a
// scalar without flattening the gradient structure.
Var pin(Tape& t, Var y, uint64_t seed) {
    Rng rng(seed);
    Tensor coeff = rng.uniform_tensor(t.val(y).shape, -1.0, 1.0);
    return sum_all(mul(y, t.constant(coeff)));
}

}  // namespace

std::vector<GradCase> tensor_core_grad_cases() {
    std::vector<GradCase> cases;
    const double tol = 1e-6;

    cases.push_back({"conv2d", tol, [] {
        Rng rng(11);
        Tensor x = rng.uniform_tensor({1, 2, 5, 5}, -1, 1);
        Tensor w = rng.uniform_tensor({3, 2, 3, 3}, -1, 1);
        Tensor b = rng.uniform_tensor({1, 3, 1, 1}, -1, 1);
        return check_fn({x, w, b}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, conv2d(v[0], v[1], v[2], 1, 1), 12);
        });
    }});
    cases.push_back({"conv2d.strided", tol, [] {
        Rng rng(21);
        Tensor x = rng.uniform_tensor({2, 3, 6, 6}, -1, 1);
        Tensor w = rng.uniform_tensor({4, 3, 3, 3}, -1, 1);
        return check_fn({x, w}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, conv2d(v[0], v[1], std::nullopt, 2, 1), 22);
        });
    }});
    cases.push_back({"conv2d.grouped", tol, [] {
        Rng rng(31);
        Tensor x = rng.uniform_tensor({1, 4, 4, 4}, -1, 1);
        Tensor w = rng.uniform_tensor({6, 2, 3, 3}, -1, 1);
        Tensor b = rng.uniform_tensor({1, 6, 1, 1}, -1, 1);
        return check_fn({x, w, b}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, conv2d(v[0], v[1], v[2], 1, 1, 2), 32);
        });
    }});
    cases.push_back({"activations", tol, [] {
        Rng rng(41);
        Tensor x = rng.uniform_tensor({1, 3, 4, 4}, -2, 2);
        return check_fn({x}, [](Tape& t, const std::vector<Var>& v) {
            Var a = sigmoid(v[0]);
            Var b = silu(v[0]);
            Var c = softplus(v[0]);
            return add(add(pin(t, a, 42), pin(t, b, 43)), pin(t, c, 44));
        });
    }});
    cases.push_back({"softmax", tol, [] {
        Rng rng(51);
        Tensor x = rng.uniform_tensor({2, 5, 3, 3}, -2, 2);
        return check_fn({x}, [](Tape& t, const std::vector<Var>& v) {
            return add(pin(t, softmax(v[0], 1), 52),
                       pin(t, softmax(v[0], 3), 53));
        });
    }});
    cases.push_back({"pooling", tol, [] {
        Rng rng(61);
        Tensor x = rng.uniform_tensor({2, 3, 4, 5}, -1, 1);
        return check_fn({x}, [](Tape& t, const std::vector<Var>& v) {
            return add(add(pin(t, global_avg_pool2d(v[0]), 62),
                           pin(t, avg_pool_rows(v[0]), 63)),
                       pin(t, avg_pool_cols(v[0]), 64));
        });
    }});
    cases.push_back({"batch_norm.train", tol, [] {
        Rng rng(71);
        Tensor x = rng.uniform_tensor({3, 4, 3, 3}, -1, 1);
        Tensor ga = rng.uniform_tensor({1, 4, 1, 1}, 0.5, 1.5);
        Tensor be = rng.uniform_tensor({1, 4, 1, 1}, -0.5, 0.5);
        return check_fn({x, ga, be}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, batch_norm_train(v[0], v[1], v[2], 1e-5), 72);
        });
    }});
    cases.push_back({"batch_norm.eval", tol, [] {
        Rng rng(81);
        Tensor x = rng.uniform_tensor({2, 3, 3, 3}, -1, 1);
        Tensor ga = rng.uniform_tensor({1, 3, 1, 1}, 0.5, 1.5);
        Tensor be = rng.uniform_tensor({1, 3, 1, 1}, -0.5, 0.5);
        Tensor m = rng.uniform_tensor({1, 3, 1, 1}, -0.2, 0.2);
        Tensor vv = rng.uniform_tensor({1, 3, 1, 1}, 0.5, 1.5);
        return check_fn({x, ga, be}, [m, vv](Tape& t, const std::vector<Var>& v) {
            return pin(t, batch_norm_eval(v[0], v[1], v[2], m, vv, 1e-5), 82);
        });
    }});
    cases.push_back({"group_norm", tol, [] {
        Rng rng(91);
        Tensor x = rng.uniform_tensor({2, 6, 3, 3}, -1, 1);
        Tensor ga = rng.uniform_tensor({1, 6, 1, 1}, 0.5, 1.5);
        Tensor be = rng.uniform_tensor({1, 6, 1, 1}, -0.5, 0.5);
        return check_fn({x, ga, be}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, group_norm(v[0], 3, v[1], v[2], 1e-5), 92);
        });
    }});
    cases.push_back({"layout", tol, [] {
        Rng rng(101);
        Tensor a = rng.uniform_tensor({1, 2, 3, 3}, -1, 1);
        Tensor b = rng.uniform_tensor({1, 3, 3, 3}, -1, 1);
        return check_fn({a, b}, [](Tape& t, const std::vector<Var>& v) {
            Var cat = concat_channels({v[0], v[1]});
            Var up = nearest_upsample(slice_channels(cat, 1, 4), 2);
            Var sw = swap_hw(v[1]);
            return add(pin(t, up, 102), pin(t, sw, 103));
        });
    }});
    cases.push_back({"pixel_shuffle", tol, [] {
        Rng rng(111);
        Tensor x = rng.uniform_tensor({1, 8, 2, 3}, -1, 1);
        return check_fn({x}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, pixel_shuffle(v[0], 2), 112);
        });
    }});
    cases.push_back({"matmul", tol, [] {
        Rng rng(121);
        Tensor a = rng.uniform_tensor({2, 1, 3, 4}, -1, 1);
        Tensor b = rng.uniform_tensor({2, 1, 4, 5}, -1, 1);
        return check_fn({a, b}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, matmul(v[0], v[1]), 122);
        });
    }});
    cases.push_back({"elementwise", tol, [] {
        Rng rng(131);
        Tensor a = rng.uniform_tensor({1, 2, 3, 3}, 0.5, 2.0);
        Tensor b = rng.uniform_tensor({1, 2, 3, 3}, 0.7, 2.2);
        return check_fn({a, b}, [](Tape& t, const std::vector<Var>& v) {
            Var d = divide(v[0], v[1]);
            Var mn = vmin(v[0], v[1]);
            Var mx = vmax(v[0], v[1]);
            Var r = relu(sub(v[0], v[1]));
            return add(add(pin(t, d, 132), pin(t, mn, 133)),
                       add(pin(t, mx, 134), pin(t, r, 135)));
        });
    }});
    cases.push_back({"mul_bcast", tol, [] {
        Rng rng(141);
        Tensor a = rng.uniform_tensor({2, 3, 4, 4}, -1, 1);
        Tensor b = rng.uniform_tensor({2, 3, 4, 1}, -1, 1);
        Tensor c = rng.uniform_tensor({2, 1, 4, 4}, -1, 1);
        return check_fn({a, b, c}, [](Tape& t, const std::vector<Var>& v) {
            return pin(t, mul_bcast(mul_bcast(v[0], v[1]), v[2]), 142);
        });
    }});
    cases.push_back({"gather_cells", tol, [] {
        Rng rng(151);
        Tensor x = rng.uniform_tensor({2, 3, 4, 4}, -1, 1);
        std::vector<Cell> cells{{0, 1, 2}, {1, 3, 0}, {0, 1, 2}};
        return check_fn({x}, [cells](Tape& t, const std::vector<Var>& v) {
            return pin(t, gather_cells(v[0], cells), 152);
        });
    }});
    cases.push_back({"bce_with_logits", tol, [] {
        Rng rng(161);
        Tensor z = rng.uniform_tensor({1, 4, 3, 3}, -3, 3);
        Tensor y(z.shape);
        for (auto& t : y.v) t = rng.uniform() < 0.3 ? 1.0 : 0.0;
        return check_fn({z}, [y](Tape& t, const std::vector<Var>& v) {
            return mean_all(bce_with_logits(v[0], y));
        });
    }});

    return cases;
}

std::vector<GradCase> gradient_suite() {
    return tensor_core_grad_cases();
}

}  // namespace epbc
