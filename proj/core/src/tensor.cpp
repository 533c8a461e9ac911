#include "amoc/tensor.hpp"

#include <Eigen/Core>
#include <cmath>
#include <cstring>

namespace amoc {

using MatMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstMatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

bool Tensor::all_finite() const {
    for (double e : v)
        if (!std::isfinite(e)) return false;
    return true;
}

bool Tensor::bitwise_equal(const Tensor& o) const {
    return shape == o.shape &&
           std::memcmp(v.data(), o.v.data(), v.size() * sizeof(double)) == 0;
}

Tensor take_rows(const Tensor& t, const std::vector<int64_t>& idx) {
    check_arg(t.rank() >= 1, "take_rows: rank-0 tensor");
    int64_t row = t.numel() / t.shape[0];
    std::vector<int64_t> s = t.shape;
    s[0] = static_cast<int64_t>(idx.size());
    Tensor out(s);
    for (size_t i = 0; i < idx.size(); ++i) {
        check_arg(idx[i] >= 0 && idx[i] < t.shape[0], "take_rows: index out of range");
        std::memcpy(out.v.data() + i * row, t.v.data() + idx[i] * row, row * sizeof(double));
    }
    return out;
}

Tensor slice_rows(const Tensor& t, int64_t b0, int64_t n) {
    check_arg(b0 >= 0 && n >= 0 && b0 + n <= t.shape[0], "slice_rows: out of range");
    int64_t row = t.numel() / t.shape[0];
    std::vector<int64_t> s = t.shape;
    s[0] = n;
    Tensor out(s);
    std::memcpy(out.v.data(), t.v.data() + b0 * row, n * row * sizeof(double));
    return out;
}

void matmul(const Tensor& a, bool trans_a, const Tensor& b, bool trans_b, Tensor& out) {
    check_arg(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 inputs required");
    int64_t an = trans_a ? a.shape[1] : a.shape[0];
    int64_t ak = trans_a ? a.shape[0] : a.shape[1];
    int64_t bk = trans_b ? b.shape[1] : b.shape[0];
    int64_t bm = trans_b ? b.shape[0] : b.shape[1];
    check_arg(ak == bk, "matmul: inner dimension mismatch");
    if (out.shape != std::vector<int64_t>{an, bm}) out = Tensor({an, bm});

    ConstMatMap A(a.data(), a.shape[0], a.shape[1]);
    ConstMatMap B(b.data(), b.shape[0], b.shape[1]);
    MatMap C(out.data(), an, bm);
    if (!trans_a && !trans_b)
        C.noalias() = A * B;
    else if (trans_a && !trans_b)
        C.noalias() = A.transpose() * B;
    else if (!trans_a && trans_b)
        C.noalias() = A * B.transpose();
    else
        C.noalias() = A.transpose() * B.transpose();
}

double dot(const Tensor& a, const Tensor& b) {
    check_arg(a.numel() == b.numel(), "dot: size mismatch");
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.v[i] * b.v[i];
    return s;
}

double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace amoc
