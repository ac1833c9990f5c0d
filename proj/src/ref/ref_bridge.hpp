#ifndef VIDAGG_REF_REF_BRIDGE_HPP
#define VIDAGG_REF_REF_BRIDGE_HPP

#include "ref/reference.hpp"
#include "vidagg/fam.hpp"
#include "vidagg/matrix.hpp"

// Data conversion glue between the production types and the reference
// kernels. Conversion only; no arithmetic lives here.
namespace vidagg::ref {

inline Mat to_mat(const Matrix& m) {
    Mat out = make_mat(m.rows(), m.cols());
    for (int i = 0; i < m.rows(); ++i)
        for (int j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
    return out;
}

inline Matrix to_matrix(const Mat& m) {
    Matrix out(static_cast<int>(m.size()), m.empty() ? 0 : static_cast<int>(m[0].size()));
    for (int i = 0; i < out.rows(); ++i)
        for (int j = 0; j < out.cols(); ++j) out(i, j) = m[i][j];
    return out;
}

inline double max_abs_diff(const Matrix& a, const Mat& b) {
    double d = 0.0;
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) d = std::max(d, std::fabs(a(i, j) - b[i][j]));
    return d;
}

inline RefWeights to_ref_weights(const FamWeights& w) {
    RefWeights out;
    out.m = w.m;
    out.d_head = w.d_head;
    out.d_q = w.d_q;
    out.num_classes = w.num_classes;
    for (int h = 0; h < w.m; ++h) {
        out.wq_cls.push_back(to_mat(w.wq_cls[h]));
        out.wk_cls.push_back(to_mat(w.wk_cls[h]));
        out.wq_reg.push_back(to_mat(w.wq_reg[h]));
        out.wk_reg.push_back(to_mat(w.wk_reg[h]));
        out.wv.push_back(to_mat(w.wv[h]));
    }
    out.w_out = to_mat(w.w_out);
    return out;
}

}  // namespace vidagg::ref

#endif
