#include "uot/tensor.hpp"

#include <cmath>
#include <sstream>

#include "uot/errors.hpp"

namespace uot {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
    for (std::size_t s : shape_)
        if (s == 0) throw shape_error("tensor dimensions must be positive");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != data_.size())
        throw shape_error("tensor shape " + shape_string(shape_) + " does not match value count");
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::size_t Tensor::first_nonfinite() const {
    for (std::size_t i = 0; i < data_.size(); ++i)
        if (!std::isfinite(data_[i])) return i;
    return data_.size();
}

// The gemm shapes in this library are tall-skinny (m is the sample batch,
// k and n are the space dimension or the hidden width). The nn kernel keeps
// a compile-time-sized block of the output row in registers so the k loop
// is a pure broadcast/fma stream over rows of b.

namespace {

template <int W>
void nn_cols(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, std::size_t j0, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        double t[W];
        double* crow = c + i * n + j0;
        if (acc)
            for (int j = 0; j < W; ++j) t[j] = crow[j];
        else
            for (int j = 0; j < W; ++j) t[j] = 0.0;
        const double* arow = a + i * k;
        const double* bp = b + j0;
        for (std::size_t p = 0; p < k; ++p, bp += n) {
            const double av = arow[p];
            for (int j = 0; j < W; ++j) t[j] += av * bp[j];
        }
        for (int j = 0; j < W; ++j) crow[j] = t[j];
    }
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool acc) {
    std::size_t j0 = 0;
    while (n - j0 >= 16) {
        nn_cols<16>(a, b, c, m, k, n, j0, acc);
        j0 += 16;
    }
    const std::size_t rem = n - j0;
    switch (rem) {
        case 0: break;
        case 1: nn_cols<1>(a, b, c, m, k, n, j0, acc); break;
        case 2: nn_cols<2>(a, b, c, m, k, n, j0, acc); break;
        case 3: nn_cols<3>(a, b, c, m, k, n, j0, acc); break;
        case 4: nn_cols<4>(a, b, c, m, k, n, j0, acc); break;
        case 5: nn_cols<5>(a, b, c, m, k, n, j0, acc); break;
        case 6: nn_cols<6>(a, b, c, m, k, n, j0, acc); break;
        case 7: nn_cols<7>(a, b, c, m, k, n, j0, acc); break;
        case 8: nn_cols<8>(a, b, c, m, k, n, j0, acc); break;
        case 9: nn_cols<9>(a, b, c, m, k, n, j0, acc); break;
        case 10: nn_cols<10>(a, b, c, m, k, n, j0, acc); break;
        case 11: nn_cols<11>(a, b, c, m, k, n, j0, acc); break;
        case 12: nn_cols<12>(a, b, c, m, k, n, j0, acc); break;
        case 13: nn_cols<13>(a, b, c, m, k, n, j0, acc); break;
        case 14: nn_cols<14>(a, b, c, m, k, n, j0, acc); break;
        default: nn_cols<15>(a, b, c, m, k, n, j0, acc); break;
    }
}

void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            std::size_t p = 0;
            for (; p + 4 <= k; p += 4) {
                s0 += arow[p] * brow[p];
                s1 += arow[p + 1] * brow[p + 1];
                s2 += arow[p + 2] * brow[p + 2];
                s3 += arow[p + 3] * brow[p + 3];
            }
            for (; p < k; ++p) s0 += arow[p] * brow[p];
            const double s = (s0 + s1) + (s2 + s3);
            crow[j] = acc ? crow[j] + s : s;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n, bool acc) {
    if (!acc)
        for (std::size_t i = 0; i < k * n; ++i) c[i] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemv_n(const double* a, const double* x, double* y,
            std::size_t m, std::size_t k, bool acc) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) {
            s0 += arow[p] * x[p];
            s1 += arow[p + 1] * x[p + 1];
            s2 += arow[p + 2] * x[p + 2];
            s3 += arow[p + 3] * x[p + 3];
        }
        for (; p < k; ++p) s0 += arow[p] * x[p];
        const double s = (s0 + s1) + (s2 + s3);
        y[i] = acc ? y[i] + s : s;
    }
}

void gemv_t(const double* a, const double* x, double* y,
            std::size_t m, std::size_t k, bool acc) {
    if (!acc)
        for (std::size_t p = 0; p < k; ++p) y[p] = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) y[p] += xi * arow[p];
    }
}

void outer_acc(const double* x, const double* y, double* c,
               std::size_t m, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double xi = x[i];
        double* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) crow[p] += xi * y[p];
    }
}

}  // namespace uot
