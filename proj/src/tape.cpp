#include "epbc/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace epbc {

namespace {

void check_same_tape(Var a, Var b) {
    if (a.tape != b.tape)
        throw std::invalid_argument("operands live on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!(a.shape == b.shape))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape.str() +
                         " vs " + b.shape.str());
}

}  // namespace

// ---- Tape mechanics ---------------------------------------------------

Var Tape::emplace(Tensor value, bool needs_grad, BackFn back) {
    auto node = std::make_unique<Node>();
    node->value = std::move(value);
    node->needs_grad = needs_grad;
    if (needs_grad) node->back = std::move(back);
    nodes_.push_back(std::move(node));
    return Var{this, int(nodes_.size()) - 1};
}

Var Tape::input(Tensor t) {
    return emplace(std::move(t), true, nullptr);
}

Var Tape::constant(Tensor t) {
    return emplace(std::move(t), false, nullptr);
}

Var Tape::param(ParamSet& ps, const std::string& name) {
    Param& p = ps.at(name);
    Var v = emplace(p.value, true, nullptr);
    nodes_[size_t(v.id)]->external_grad = &p.grad;
    return v;
}

const Tensor& Tape::val(Var v) const {
    return nodes_.at(size_t(v.id))->value;
}

bool Tape::needs_grad(Var v) const {
    return nodes_.at(size_t(v.id))->needs_grad;
}

Tensor* Tape::grad_sink(int id) {
    Node& n = *nodes_.at(size_t(id));
    if (!n.needs_grad) return nullptr;
    if (!pass_alloc_[size_t(id)]) {
        pass_grads_[size_t(id)] = Tensor(n.value.shape);
        pass_alloc_[size_t(id)] = 1;
    }
    return &pass_grads_[size_t(id)];
}

const Tensor& Tape::grad(Var v) {
    Node& n = *nodes_.at(size_t(v.id));
    if (n.external_grad) return *n.external_grad;
    if (!n.has_grad_storage) {
        n.own_grad = Tensor(n.value.shape);
        n.has_grad_storage = true;
    }
    return n.own_grad;
}

void Tape::backward(Var scalar_loss) {
    if (scalar_loss.tape != this)
        throw std::invalid_argument("backward: loss from another tape");
    Node& loss = *nodes_.at(size_t(scalar_loss.id));
    if (!loss.value.is_scalar())
        throw std::invalid_argument("backward requires a scalar loss, got " +
                                    loss.value.shape.str());

    pass_grads_.assign(nodes_.size(), Tensor{});
    pass_alloc_.assign(nodes_.size(), 0);
    if (Tensor* g = grad_sink(scalar_loss.id)) g->v[0] += 1.0;

    for (int i = scalar_loss.id; i >= 0; --i) {
        Node& n = *nodes_[size_t(i)];
        if (!n.needs_grad || !n.back || !pass_alloc_[size_t(i)]) continue;
        n.back(*this, pass_grads_[size_t(i)]);
    }

    // Leaves keep their accumulated gradient across calls.
    for (size_t i = 0; i < nodes_.size(); ++i) {
        Node& n = *nodes_[i];
        if (!pass_alloc_[i] || n.back) continue;
        Tensor* sink = n.external_grad ? n.external_grad : &n.own_grad;
        if (!n.external_grad && !n.has_grad_storage) {
            n.own_grad = Tensor(n.value.shape);
            n.has_grad_storage = true;
        }
        const Tensor& src = pass_grads_[i];
        for (size_t k = 0; k < src.v.size(); ++k) sink->v[k] += src.v[k];
    }
    pass_grads_.clear();
    pass_alloc_.clear();
}

// ---- elementwise ------------------------------------------------------

namespace {

template <typename FwdFn, typename BackAFn, typename BackBFn>
Var binary_op(Var a, Var b, const char* name, FwdFn fwd, BackAFn ba,
              BackBFn bb) {
    check_same_tape(a, b);
    Tape& T = *a.tape;
    const Tensor& av = T.val(a);
    const Tensor& bv = T.val(b);
    check_same_shape(av, bv, name);
    Tensor out(av.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = fwd(av.v[i], bv.v[i]);
    bool ng = T.needs_grad(a) || T.needs_grad(b);
    int ia = a.id, ib = b.id;
    return T.emplace(std::move(out), ng,
                     [ia, ib, ba, bb](Tape& t, const Tensor& g) {
                         const Tensor& x = t.val(Var{&t, ia});
                         const Tensor& y = t.val(Var{&t, ib});
                         if (Tensor* ga = t.grad_sink(ia))
                             for (size_t i = 0; i < g.v.size(); ++i)
                                 ga->v[i] += ba(g.v[i], x.v[i], y.v[i]);
                         if (Tensor* gb = t.grad_sink(ib))
                             for (size_t i = 0; i < g.v.size(); ++i)
                                 gb->v[i] += bb(g.v[i], x.v[i], y.v[i]);
                     });
}

template <typename FwdFn, typename DerivFn>
Var unary_op(Var x, FwdFn fwd, DerivFn deriv) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    Tensor out(xv.shape);
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = fwd(xv.v[i]);
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, deriv](Tape& t, const Tensor& g) {
                         if (Tensor* gx = t.grad_sink(ix)) {
                             const Tensor& xv = t.val(Var{&t, ix});
                             for (size_t i = 0; i < g.v.size(); ++i)
                                 gx->v[i] += g.v[i] * deriv(xv.v[i]);
                         }
                     });
}

double sigmoid_s(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

Var add(Var a, Var b) {
    return binary_op(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double g, double, double) { return g; },
        [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
    return binary_op(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double g, double, double) { return g; },
        [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
    return binary_op(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double g, double, double y) { return g * y; },
        [](double g, double x, double) { return g * x; });
}

Var divide(Var a, Var b) {
    return binary_op(
        a, b, "divide", [](double x, double y) { return x / y; },
        [](double g, double, double y) { return g / y; },
        [](double g, double x, double y) { return -g * x / (y * y); });
}

Var vmin(Var a, Var b) {
    return binary_op(
        a, b, "vmin", [](double x, double y) { return x <= y ? x : y; },
        [](double g, double x, double y) { return x <= y ? g : 0.0; },
        [](double g, double x, double y) { return x <= y ? 0.0 : g; });
}

Var vmax(Var a, Var b) {
    return binary_op(
        a, b, "vmax", [](double x, double y) { return x >= y ? x : y; },
        [](double g, double x, double y) { return x >= y ? g : 0.0; },
        [](double g, double x, double y) { return x >= y ? 0.0 : g; });
}

Var mul_bcast(Var a, Var b) {
    check_same_tape(a, b);
    Tape& T = *a.tape;
    const Tensor& av = T.val(a);
    const Tensor& bv = T.val(b);
    const Shape& as = av.shape;
    const Shape& bs = bv.shape;
    auto bad = [&] {
        throw ShapeError("mul_bcast: cannot broadcast " + bs.str() + " onto " +
                         as.str());
    };
    if ((bs.n != as.n && bs.n != 1) || (bs.c != as.c && bs.c != 1) ||
        (bs.h != as.h && bs.h != 1) || (bs.w != as.w && bs.w != 1))
        bad();

    const int64_t sn = bs.n == 1 ? 0 : int64_t(bs.c) * bs.h * bs.w;
    const int64_t sc = bs.c == 1 ? 0 : int64_t(bs.h) * bs.w;
    const int64_t sh = bs.h == 1 ? 0 : bs.w;
    const int64_t sw = bs.w == 1 ? 0 : 1;

    Tensor out(as);
    size_t i = 0;
    for (int n = 0; n < as.n; ++n)
        for (int c = 0; c < as.c; ++c)
            for (int y = 0; y < as.h; ++y)
                for (int x = 0; x < as.w; ++x, ++i)
                    out.v[i] =
                        av.v[i] * bv.v[size_t(n * sn + c * sc + y * sh + x * sw)];

    bool ng = T.needs_grad(a) || T.needs_grad(b);
    int ia = a.id, ib = b.id;
    return T.emplace(
        std::move(out), ng, [ia, ib, sn, sc, sh, sw, as](Tape& t, const Tensor& g) {
            const Tensor& av = t.val(Var{&t, ia});
            const Tensor& bv = t.val(Var{&t, ib});
            Tensor* ga = t.grad_sink(ia);
            Tensor* gb = t.grad_sink(ib);
            size_t i = 0;
            for (int n = 0; n < as.n; ++n)
                for (int c = 0; c < as.c; ++c)
                    for (int y = 0; y < as.h; ++y)
                        for (int x = 0; x < as.w; ++x, ++i) {
                            size_t j = size_t(n * sn + c * sc + y * sh + x * sw);
                            if (ga) ga->v[i] += g.v[i] * bv.v[j];
                            if (gb) gb->v[j] += g.v[i] * av.v[i];
                        }
        });
}

Var scale(Var x, double k) {
    return unary_op(
        x, [k](double v) { return v * k; }, [k](double) { return k; });
}

Var offset(Var x, double k) {
    return unary_op(
        x, [k](double v) { return v + k; }, [](double) { return 1.0; });
}

Var relu(Var x) {
    return unary_op(
        x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
    return unary_op(
        x, [](double v) { return sigmoid_s(v); },
        [](double v) {
            double s = sigmoid_s(v);
            return s * (1.0 - s);
        });
}

Var silu(Var x) {
    return unary_op(
        x, [](double v) { return v * sigmoid_s(v); },
        [](double v) {
            double s = sigmoid_s(v);
            return s * (1.0 + v * (1.0 - s));
        });
}

Var softplus(Var x) {
    return unary_op(
        x,
        [](double v) {
            return (v > 0.0 ? v : 0.0) + std::log1p(std::exp(-std::fabs(v)));
        },
        [](double v) { return sigmoid_s(v); });
}

// ---- reductions -------------------------------------------------------

Var sum_all(Var x) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    double s = 0.0;
    for (double v : xv.v) s += v;
    int ix = x.id;
    return T.emplace(Tensor::scalar(s), T.needs_grad(x),
                     [ix](Tape& t, const Tensor& g) {
                         if (Tensor* gx = t.grad_sink(ix)) {
                             double gs = g.v[0];
                             for (double& v : gx->v) v += gs;
                         }
                     });
}

Var mean_all(Var x) {
    const Tensor& xv = x.tape->val(x);
    return scale(sum_all(x), 1.0 / double(xv.numel()));
}

// ---- softmax ----------------------------------------------------------

Var softmax(Var x, int axis) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    if (axis < 0 || axis > 3)
        throw ShapeError("softmax: axis " + std::to_string(axis) +
                         " out of range");
    const Shape s = xv.shape;
    const int ext[4] = {s.n, s.c, s.h, s.w};
    const int64_t strides[4] = {int64_t(s.c) * s.h * s.w, int64_t(s.h) * s.w,
                                s.w, 1};
    const int L = ext[axis];
    const int64_t step = strides[axis];

    // Enumerate every slice along the chosen axis.
    std::vector<int64_t> bases;
    bases.reserve(size_t(xv.numel() / L));
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int xw = 0; xw < s.w; ++xw) {
                    int idx[4] = {n, c, y, xw};
                    if (idx[axis] != 0) continue;
                    bases.push_back(n * strides[0] + c * strides[1] +
                                    y * strides[2] + xw * strides[3]);
                }

    Tensor out(s);
    for (int64_t base : bases) {
        double m = xv.v[size_t(base)];
        for (int k = 1; k < L; ++k)
            m = std::max(m, xv.v[size_t(base + k * step)]);
        double denom = 0.0;
        for (int k = 0; k < L; ++k) {
            double e = std::exp(xv.v[size_t(base + k * step)] - m);
            out.v[size_t(base + k * step)] = e;
            denom += e;
        }
        for (int k = 0; k < L; ++k) out.v[size_t(base + k * step)] /= denom;
    }

    int ix = x.id;
    Tensor out_copy = out;  // backward needs the normalized values
    return T.emplace(
        std::move(out), T.needs_grad(x),
        [ix, bases, L, step, out_copy](Tape& t, const Tensor& g) {
            Tensor* gx = t.grad_sink(ix);
            if (!gx) return;
            for (int64_t base : bases) {
                double dot = 0.0;
                for (int k = 0; k < L; ++k) {
                    size_t j = size_t(base + k * step);
                    dot += g.v[j] * out_copy.v[j];
                }
                for (int k = 0; k < L; ++k) {
                    size_t j = size_t(base + k * step);
                    gx->v[j] += out_copy.v[j] * (g.v[j] - dot);
                }
            }
        });
}

// ---- layout -----------------------------------------------------------

namespace {

// Shared body for channel- and row-axis concatenation.
Var concat_axis(const std::vector<Var>& xs, int axis, const char* name) {
    if (xs.empty()) throw ShapeError(std::string(name) + ": no inputs");
    Tape& T = *xs[0].tape;
    const Shape s0 = T.val(xs[0]).shape;
    int total = 0;
    for (Var x : xs) {
        check_same_tape(xs[0], x);
        const Shape s = T.val(x).shape;
        Shape cmp = s;
        if (axis == 1)
            cmp.c = s0.c;
        else
            cmp.h = s0.h;
        if (!(cmp == s0))
            throw ShapeError(std::string(name) + ": incompatible input " +
                             s.str() + " vs " + s0.str());
        total += (axis == 1) ? s.c : s.h;
    }
    Shape os = s0;
    (axis == 1 ? os.c : os.h) = total;
    Tensor out(os);

    bool ng = false;
    std::vector<int> ids;
    std::vector<int> lens;
    for (Var x : xs) {
        ng = ng || T.needs_grad(x);
        ids.push_back(x.id);
        const Shape s = T.val(x).shape;
        lens.push_back(axis == 1 ? s.c : s.h);
    }

    int off = 0;
    for (size_t k = 0; k < xs.size(); ++k) {
        const Tensor& xv = T.val(xs[k]);
        const Shape s = xv.shape;
        for (int n = 0; n < s.n; ++n)
            for (int c = 0; c < s.c; ++c)
                for (int y = 0; y < s.h; ++y)
                    for (int x2 = 0; x2 < s.w; ++x2) {
                        int oc = axis == 1 ? c + off : c;
                        int oy = axis == 1 ? y : y + off;
                        out.at(n, oc, oy, x2) = xv.at(n, c, y, x2);
                    }
        off += lens[k];
    }

    return T.emplace(std::move(out), ng,
                     [ids, lens, axis](Tape& t, const Tensor& g) {
                         int off = 0;
                         for (size_t k = 0; k < ids.size(); ++k) {
                             Tensor* gx = t.grad_sink(ids[k]);
                             if (gx) {
                                 const Shape s = gx->shape;
                                 for (int n = 0; n < s.n; ++n)
                                     for (int c = 0; c < s.c; ++c)
                                         for (int y = 0; y < s.h; ++y)
                                             for (int x2 = 0; x2 < s.w; ++x2) {
                                                 int oc = axis == 1 ? c + off : c;
                                                 int oy = axis == 1 ? y : y + off;
                                                 gx->at(n, c, y, x2) +=
                                                     g.at(n, oc, oy, x2);
                                             }
                             }
                             off += lens[k];
                         }
                     });
}

Var slice_axis(Var x, int axis, int a0, int a1, const char* name) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    int ext = axis == 1 ? s.c : s.h;
    if (a0 < 0 || a1 > ext || a0 >= a1)
        throw ShapeError(std::string(name) + ": range [" + std::to_string(a0) +
                         "," + std::to_string(a1) + ") of extent " +
                         std::to_string(ext));
    Shape os = s;
    (axis == 1 ? os.c : os.h) = a1 - a0;
    Tensor out(os);
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int x2 = 0; x2 < os.w; ++x2)
                    out.at(n, c, y, x2) = axis == 1
                                              ? xv.at(n, c + a0, y, x2)
                                              : xv.at(n, c, y + a0, x2);
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, axis, a0, os](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (int n = 0; n < os.n; ++n)
                             for (int c = 0; c < os.c; ++c)
                                 for (int y = 0; y < os.h; ++y)
                                     for (int x2 = 0; x2 < os.w; ++x2) {
                                         if (axis == 1)
                                             gx->at(n, c + a0, y, x2) +=
                                                 g.at(n, c, y, x2);
                                         else
                                             gx->at(n, c, y + a0, x2) +=
                                                 g.at(n, c, y, x2);
                                     }
                     });
}

}  // namespace

Var concat_channels(const std::vector<Var>& xs) {
    return concat_axis(xs, 1, "concat_channels");
}

Var slice_channels(Var x, int c0, int c1) {
    return slice_axis(x, 1, c0, c1, "slice_channels");
}

Var concat_rows(const std::vector<Var>& xs) {
    return concat_axis(xs, 2, "concat_rows");
}

Var slice_rows(Var x, int h0, int h1) {
    return slice_axis(x, 2, h0, h1, "slice_rows");
}

Var swap_hw(Var x) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    Tensor out(Shape{s.n, s.c, s.w, s.h});
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
            for (int y = 0; y < s.h; ++y)
                for (int x2 = 0; x2 < s.w; ++x2)
                    out.at(n, c, x2, y) = xv.at(n, c, y, x2);
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, s](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (int n = 0; n < s.n; ++n)
                             for (int c = 0; c < s.c; ++c)
                                 for (int y = 0; y < s.h; ++y)
                                     for (int x2 = 0; x2 < s.w; ++x2)
                                         gx->at(n, c, y, x2) +=
                                             g.at(n, c, x2, y);
                     });
}

Var nearest_upsample(Var x, int factor) {
    if (factor < 1) throw ShapeError("nearest_upsample: factor must be >= 1");
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    Shape os{s.n, s.c, s.h * factor, s.w * factor};
    Tensor out(os);
    for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int y = 0; y < os.h; ++y)
                for (int x2 = 0; x2 < os.w; ++x2)
                    out.at(n, c, y, x2) = xv.at(n, c, y / factor, x2 / factor);
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, os, factor](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (int n = 0; n < os.n; ++n)
                             for (int c = 0; c < os.c; ++c)
                                 for (int y = 0; y < os.h; ++y)
                                     for (int x2 = 0; x2 < os.w; ++x2)
                                         gx->at(n, c, y / factor, x2 / factor) +=
                                             g.at(n, c, y, x2);
                     });
}

Var pixel_shuffle(Var x, int factor) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    int f2 = factor * factor;
    if (factor < 1 || s.c % f2 != 0)
        throw ShapeError("pixel_shuffle: channels " + std::to_string(s.c) +
                         " not divisible by " + std::to_string(f2));
    Shape os{s.n, s.c / f2, s.h * factor, s.w * factor};
    Tensor out(os);
    for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < os.c; ++c)
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) {
                    int ic = c * f2 + dy * factor + dx;
                    for (int y = 0; y < s.h; ++y)
                        for (int x2 = 0; x2 < s.w; ++x2)
                            out.at(n, c, y * factor + dy, x2 * factor + dx) =
                                xv.at(n, ic, y, x2);
                }
    int ix = x.id;
    return T.emplace(
        std::move(out), T.needs_grad(x),
        [ix, s, os, factor, f2](Tape& t, const Tensor& g) {
            Tensor* gx = t.grad_sink(ix);
            if (!gx) return;
            for (int n = 0; n < s.n; ++n)
                for (int c = 0; c < os.c; ++c)
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx) {
                            int ic = c * f2 + dy * factor + dx;
                            for (int y = 0; y < s.h; ++y)
                                for (int x2 = 0; x2 < s.w; ++x2)
                                    gx->at(n, ic, y, x2) += g.at(
                                        n, c, y * factor + dy, x2 * factor + dx);
                        }
        });
}

Var reshape(Var x, Shape s) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    if (s.numel() != xv.numel())
        throw ShapeError("reshape: " + xv.shape.str() + " to " + s.str());
    Tensor out;
    out.shape = s;
    out.v = xv.v;
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix](Tape& t, const Tensor& g) {
                         if (Tensor* gx = t.grad_sink(ix))
                             for (size_t i = 0; i < g.v.size(); ++i)
                                 gx->v[i] += g.v[i];
                     });
}

Var gather_cells(Var x, const std::vector<Cell>& cells) {
    Tape& T = *x.tape;
    const Tensor& xv = T.val(x);
    const Shape s = xv.shape;
    for (const Cell& c : cells)
        if (c.n < 0 || c.n >= s.n || c.y < 0 || c.y >= s.h || c.x < 0 ||
            c.x >= s.w)
            throw ShapeError("gather_cells: cell out of range for " + s.str());
    Shape os{int(cells.size()), s.c, 1, 1};
    Tensor out(os);
    for (size_t k = 0; k < cells.size(); ++k)
        for (int c = 0; c < s.c; ++c)
            out.at(int(k), c, 0, 0) = xv.at(cells[k].n, c, cells[k].y, cells[k].x);
    int ix = x.id;
    return T.emplace(std::move(out), T.needs_grad(x),
                     [ix, cells, s](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         for (size_t k = 0; k < cells.size(); ++k)
                             for (int c = 0; c < s.c; ++c)
                                 gx->at(cells[k].n, c, cells[k].y, cells[k].x) +=
                                     g.at(int(k), c, 0, 0);
                     });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
    Tape& T = *logits.tape;
    const Tensor& z = T.val(logits);
    check_same_shape(z, targets, "bce_with_logits");
    Tensor out(z.shape);
    for (size_t i = 0; i < out.v.size(); ++i) {
        double zi = z.v[i], yi = targets.v[i];
        out.v[i] = (zi > 0.0 ? zi : 0.0) - zi * yi +
                   std::log1p(std::exp(-std::fabs(zi)));
    }
    int ix = logits.id;
    Tensor y = targets;
    return T.emplace(std::move(out), T.needs_grad(logits),
                     [ix, y](Tape& t, const Tensor& g) {
                         Tensor* gx = t.grad_sink(ix);
                         if (!gx) return;
                         const Tensor& z = t.val(Var{&t, ix});
                         for (size_t i = 0; i < g.v.size(); ++i)
                             gx->v[i] +=
                                 g.v[i] * (sigmoid_s(z.v[i]) - y.v[i]);
                     });
}

}  // namespace epbc
