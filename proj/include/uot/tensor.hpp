#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace uot {

/// Dense row-major array of 64-bit reals. The value type carried by the tape.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::size_t> shape, double v) { return Tensor(std::move(shape), v); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    bool defined() const { return !shape_.empty(); }

    // 2-D accessors; call only on rank-2 tensors.
    std::size_t rows() const { return shape_[0]; }
    std::size_t cols() const { return shape_[1]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool is_scalar() const { return numel() == 1; }

    /// Index of the first non-finite entry, or numel() if all entries are finite.
    std::size_t first_nonfinite() const;
    bool all_finite() const { return first_nonfinite() == numel(); }

    std::size_t byte_size() const { return data_.size() * sizeof(double); }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// Matrix kernels. All matrices row-major; `acc` accumulates into c instead of
// overwriting. Sizes are plain loop bounds; no aliasing between c and a/b.

/// c(m,n) = a(m,k) * b(k,n)
void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool acc);

/// c(m,n) = a(m,k) * b(n,k)^T
void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool acc);

/// c(k,n) = a(m,k)^T * b(m,n)
void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool acc);

/// y(m) = a(m,k) * x(k)
void gemv_n(const double* a, const double* x, double* y,
            std::size_t m, std::size_t k, bool acc);

/// y(k) = a(m,k)^T * x(m)
void gemv_t(const double* a, const double* x, double* y,
            std::size_t m, std::size_t k, bool acc);

/// c(m,k) += x(m) * y(k)^T
void outer_acc(const double* x, const double* y, double* c,
               std::size_t m, std::size_t k);

}  // namespace uot
