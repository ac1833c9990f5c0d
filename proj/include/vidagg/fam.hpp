#ifndef VIDAGG_FAM_HPP
#define VIDAGG_FAM_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "vidagg/fsm.hpp"
#include "vidagg/matrix.hpp"

namespace vidagg {

// Learnable projections of the aggregation module. Query/key projections are
// kept per branch; the value projection is shared and built from the
// classification branch. The classifier input is the pooled features
// concatenated with the key features, each of width 2*D, hence w_out has
// 4*D rows. num_classes here may exceed the stream's class count by one when
// the weights were trained with a background class.
struct FamWeights {
    int m = 0;
    int d_head = 0;
    int d_q = 0;
    int num_classes = 0;
    std::vector<Matrix> wq_cls, wk_cls, wq_reg, wk_reg;  // m matrices, d_q x d_head
    std::vector<Matrix> wv;                              // m matrices, d_q x d_head
    Matrix w_out;                                        // 4*D x num_classes
    uint64_t revision = 0;  // bumped on every mutation; guards stale gradient caches

    int feature_dim() const { return m * d_head; }  // D

    void validate() const;
};

// Query/key/value entries drawn uniform in [-1/sqrt(d_q), 1/sqrt(d_q)];
// w_out zeroed so an untrained model predicts the uniform distribution.
FamWeights init_fam_weights(int m, int d_head, int d_q, int num_classes, uint64_t seed);

// Framed binary container "VAGW": u16 version=1, m, d_head, d_q, num_classes,
// then wq_cls, wk_cls, wq_reg, wk_reg (head-major), wv, w_out as row-major
// little-endian f32. Byte-deterministic.
void save_fam_weights(const FamWeights& w, const std::string& path);
FamWeights load_fam_weights(const std::string& path);

// Proposals of the sampled frames stacked in frame order, then within-frame
// confidence order. frame_of_row holds the position of the source frame in
// the list that built the batch.
struct AggregationBatch {
    Matrix C;  // N x d_q
    Matrix R;  // N x d_q
    Matrix P;  // N x 2
    std::vector<int> frame_of_row;

    int rows() const { return C.rows(); }
};

AggregationBatch build_batch(const std::vector<const FrameFeatureSet*>& sets);

enum class AttentionMode { affinity, qk };

// A = Q K^T / sqrt(d). Shapes must match.
Matrix scaled_dot_attention_logits(const Matrix& q, const Matrix& k);

// Score matrices with constant columns: S_c[i][j] and S_r[i][j] carry the
// classification and IoU score of proposal j, so attention toward a key is
// modulated by that key's quality.
std::pair<Matrix, Matrix> build_score_matrices(const Matrix& p_all);

// Row-wise normalization to zero mean and unit population variance
// (epsilon 1e-5), no learnable affine.
Matrix layernorm_rows(const Matrix& x);

// Intermediates kept for the backward pass.
struct FamTrace {
    uint64_t weights_revision = 0;
    AttentionMode mode = AttentionMode::affinity;
    double tau = 0.0;
    std::vector<Matrix> qc, kc, qr, kr, v;  // per head, N x d_head
    std::vector<Matrix> wc, wr;             // per head softmax weights, N x N
    Matrix sa_f;
    Matrix v_full;
    Matrix pooled;
    std::vector<std::vector<int>> survivors;
    Matrix logits;
    Matrix probs;
};

struct FamForward {
    Matrix sa_f;    // N x 2D: [SA_c + SA_r | V_c]
    Matrix v_full;  // N x D head-concatenated value features
};

// Multi-head cross-frame attention. In affinity mode the pre-softmax logits
// of each branch are Hadamard-multiplied by the key-quality score matrices;
// in qk mode the scores are replaced by ones. A zero score therefore drives
// a logit to the neutral value 0 rather than masking the key.
FamForward affinity_attention(const AggregationBatch& batch, const FamWeights& w, AttentionMode mode,
                              FamTrace* trace = nullptr);

// Normalized similarity N(V) N(V)^T / D. Self-similarity of a generic row is
// 1 up to the layer-norm epsilon; entries never exceed 1.
Matrix similarity_matrix(const Matrix& v_full);

// For each row, average the SA_F rows of all references whose similarity is
// >= tau; the row itself always survives, which keeps tau = 1 equivalent to
// passing SA_F through. tau = -1 pools every row (test hook).
Matrix average_pool_refs(const Matrix& sa_f, const Matrix& v_full, double tau,
                         std::vector<std::vector<int>>* survivors_out = nullptr);

// Row-wise softmax of [pooled | key] * w_out.
Matrix classify(const Matrix& pooled, const Matrix& key, const FamWeights& w);
Matrix classify_logits(const Matrix& pooled, const Matrix& key, const FamWeights& w);

// Rows most similar to key_row by cosine over raw classification features,
// key excluded, zero-norm rows skipped. Diagnostic for comparing selection
// behaviour against the attention-based manners.
std::vector<int> cosine_select(const AggregationBatch& batch, int key_row, int top_n);

// Full module forward: attention, reference pooling, classification.
struct FamOutputs {
    Matrix sa_f;
    Matrix v_full;
    Matrix pooled;
    Matrix probs;
};
FamOutputs fam_forward(const AggregationBatch& batch, const FamWeights& w, AttentionMode mode,
                       double tau, FamTrace* trace = nullptr);

}  // namespace vidagg

#endif
