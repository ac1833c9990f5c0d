#ifndef VIDAGG_MATRIX_HPP
#define VIDAGG_MATRIX_HPP

#include <cstddef>
#include <vector>

namespace vidagg {

// Dense row-major double matrix. All aggregation math runs in 64-bit;
// 32-bit floats appear only at file boundaries.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }

    double* row(int r) { return data_.data() + static_cast<size_t>(r) * cols_; }
    const double* row(int r) const { return data_.data() + static_cast<size_t>(r) * cols_; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    size_t size() const { return data_.size(); }

    bool operator==(const Matrix& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
    }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

// C = A * B. Each output element is accumulated in a fixed serial order, so
// results are identical for any thread count.
Matrix matmul(const Matrix& a, const Matrix& b);

// C = A * B^T (rows of B are the right-hand vectors).
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// C = A^T * B. Used for weight gradients.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// In-place row-wise softmax with max subtraction.
void softmax_rows_inplace(Matrix& m);

// dst += src, elementwise.
void add_inplace(Matrix& dst, const Matrix& src);

double max_abs_diff(const Matrix& a, const Matrix& b);

bool all_finite(const Matrix& m);

}  // namespace vidagg

#endif
