#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

#include "amoc/common.hpp"

namespace amoc {

// Dense row-major tensor of doubles. Shapes used in practice are
// (N,C,H,W) for image batches and (N,D) for matrices; everything heavier
// than elementwise work (GEMM, im2col) lives in the .cpp files on Eigen.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)), v(count(shape), 0.0) {}
    Tensor(std::vector<int64_t> s, std::vector<double> data) : shape(std::move(s)), v(std::move(data)) {
        check_internal(v.size() == static_cast<size_t>(count(shape)), "Tensor: data/shape mismatch");
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int64_t> s, double value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(v.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    int rank() const { return static_cast<int>(shape.size()); }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    double& at2(int64_t i, int64_t j) { return v[i * shape[1] + j]; }
    double at2(int64_t i, int64_t j) const { return v[i * shape[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(0.0); }

    // y += a*x, shapes must match.
    void axpy(double a, const Tensor& x) {
        check_internal(same_shape(x), "Tensor::axpy shape mismatch");
        for (size_t i = 0; i < v.size(); ++i) v[i] += a * x.v[i];
    }
    void scale(double a) {
        for (double& e : v) e *= a;
    }

    bool all_finite() const;
    bool bitwise_equal(const Tensor& o) const;
};

// Slice of the leading (batch) axis: rows [b0, b0+n) of a (N,...) tensor.
Tensor take_rows(const Tensor& t, const std::vector<int64_t>& idx);
Tensor slice_rows(const Tensor& t, int64_t b0, int64_t n);

// C = A(n,k) * B(k,m), with options to transpose either input.
void matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out);

double dot(const Tensor& a, const Tensor& b);
double l2_norm(const Tensor& a);

}  // namespace amoc
