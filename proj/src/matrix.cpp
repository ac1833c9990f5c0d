#include "vidagg/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vidagg {

namespace {
// Below this many multiply-adds the omp fork overhead dominates.
constexpr long kParallelThreshold = 1 << 15;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape mismatch");
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b.row(p);
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: shape mismatch");
    const int m = a.rows(), k = a.cols(), n = b.rows();
    Matrix c(m, n);
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int i = 0; i < m; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int j = 0; j < n; ++j) {
            const double* brow = b.row(j);
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: shape mismatch");
    const int m = a.cols(), k = a.rows(), n = b.cols();
    Matrix c(m, n);
    const long work = static_cast<long>(m) * k * n;
#pragma omp parallel for schedule(static) if (work > kParallelThreshold)
    for (int i = 0; i < m; ++i) {
        double* crow = c.row(i);
        for (int p = 0; p < k; ++p) {
            const double av = a(p, i);
            const double* brow = b.row(p);
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

void softmax_rows_inplace(Matrix& m) {
    const int rows = m.rows(), cols = m.cols();
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelThreshold)
    for (int i = 0; i < rows; ++i) {
        double* r = m.row(i);
        double mx = r[0];
        for (int j = 1; j < cols; ++j) mx = std::max(mx, r[j]);
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < cols; ++j) r[j] *= inv;
    }
}

void add_inplace(Matrix& dst, const Matrix& src) {
    if (dst.rows() != src.rows() || dst.cols() != src.cols())
        throw std::invalid_argument("add_inplace: shape mismatch");
    for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] += src.data()[i];
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a.data()[i] - b.data()[i]));
    return d;
}

bool all_finite(const Matrix& m) {
    for (size_t i = 0; i < m.size(); ++i)
        if (!std::isfinite(m.data()[i])) return false;
    return true;
}

}  // namespace vidagg
