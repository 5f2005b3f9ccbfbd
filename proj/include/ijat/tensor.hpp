#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ijat/error.hpp"

namespace ijat {

// Dense row-major tensor of doubles. Rank 0/1/2 is what the library uses in
// practice; the shape vector is kept general so callers can carry flat views.
// Immutable-by-convention once handed to a Tape.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (count(shape_) != data_.size()) {
            throw ShapeError("tensor: shape " + shape_str(shape_) + " needs " +
                             std::to_string(count(shape_)) + " values, got " +
                             std::to_string(data_.size()));
        }
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor vector(std::vector<double> v) {
        std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }

    static Tensor matrix(std::size_t rows, std::size_t cols,
                         std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }

    static Tensor zeros(std::size_t rows, std::size_t cols) {
        return Tensor({rows, cols});
    }

    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }

    // Rows/cols of the 2-D view: a vector is one row, a scalar is 1x1.
    std::size_t rows() const { return rank() >= 2 ? shape_[0] : 1; }
    std::size_t cols() const {
        if (rank() >= 2) return shape_[1];
        return rank() == 1 ? shape_[0] : 1;
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const {
        return data_[r * cols() + c];
    }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(),
                           [](double v) { return std::isfinite(v); });
    }

    // Throws NonFiniteError at the first bad entry, reported in the 2-D view.
    void ensure_finite(const std::string& what) const {
        for (std::size_t i = 0; i < data_.size(); ++i) {
            if (!std::isfinite(data_[i])) {
                std::size_t c = cols() ? cols() : 1;
                throw NonFiniteError(what + ": non-finite value at (" +
                                         std::to_string(i / c) + ", " +
                                         std::to_string(i % c) + ")",
                                     i / c, i % c);
            }
        }
    }

    double sum() const {
        return std::accumulate(data_.begin(), data_.end(), 0.0);
    }

    double norm() const {
        double s = 0.0;
        for (double v : data_) s += v * v;
        return std::sqrt(s);
    }

    double max_abs_diff(const Tensor& o) const {
        if (!same_shape(o)) {
            throw ShapeError("max_abs_diff: shape " + shape_str(shape_) +
                             " vs " + shape_str(o.shape_));
        }
        double m = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i)
            m = std::max(m, std::abs(data_[i] - o.data_[i]));
        return m;
    }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

    static std::string shape_str(const std::vector<std::size_t>& shape) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << 'x';
            os << shape[i];
        }
        os << ']';
        return os.str();
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace ijat
