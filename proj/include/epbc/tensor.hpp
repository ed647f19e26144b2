#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace epbc {

// Extents of a rank-4 tensor in batch/channel/height/width order.
struct Shape {
    int n = 0, c = 0, h = 0, w = 0;

    int64_t numel() const {
        return int64_t(n) * c * h * w;
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }
};

// Dense 64-bit float tensor, row-major within each channel plane.
class Tensor {
public:
    Shape shape{};
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(s), v(size_t(s.numel()), fill) {}

    static Tensor scalar(double x) {
        Tensor t(Shape{1, 1, 1, 1});
        t.v[0] = x;
        return t;
    }
    static Tensor from(Shape s, std::vector<double> data);

    int64_t numel() const { return int64_t(v.size()); }
    bool is_scalar() const { return v.size() == 1; }

    double& at(int n, int c, int y, int x) {
        return v[((size_t(n) * shape.c + c) * shape.h + y) * shape.w + x];
    }
    double at(int n, int c, int y, int x) const {
        return v[((size_t(n) * shape.c + c) * shape.h + y) * shape.w + x];
    }

    double* plane(int n, int c) {
        return v.data() + (size_t(n) * shape.c + c) * shape.h * shape.w;
    }
    const double* plane(int n, int c) const {
        return v.data() + (size_t(n) * shape.c + c) * shape.h * shape.w;
    }

    bool all_finite() const;
    double max_abs() const;
};

// Thrown on extent or channel/group mismatches.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown on invalid module or model configuration.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace epbc
