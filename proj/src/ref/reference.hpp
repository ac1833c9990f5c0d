#ifndef VIDAGG_REF_REFERENCE_HPP
#define VIDAGG_REF_REFERENCE_HPP

#include <array>
#include <cstdint>
#include <vector>

// Serial reference kernels written as plain explicit loops over nested
// vectors. They share no code with the production library and exist to
// check it: tests compare the two paths element by element, and the bench
// tool times them against each other.
namespace vidagg::ref {

using Mat = std::vector<std::vector<double>>;

Mat make_mat(int rows, int cols);

struct RefWeights {
    int m = 0;
    int d_head = 0;
    int d_q = 0;
    int num_classes = 0;
    std::vector<Mat> wq_cls, wk_cls, wq_reg, wk_reg, wv;  // per head, d_q x d_head
    Mat w_out;                                            // 4*m*d_head x num_classes
};

struct MacCounter {
    long long projection = 0;
    long long logits = 0;
    long long apply = 0;
    long long similarity = 0;
    long long classifier = 0;
};

struct RefResult {
    Mat sa_f;
    Mat v_full;
    Mat pooled;
    Mat probs;
};

Mat attention_logits(const Mat& q, const Mat& k);
Mat layernorm(const Mat& x);
Mat similarity(const Mat& v_full);
Mat average_pool(const Mat& sa_f, const Mat& v_full, double tau);
Mat classify(const Mat& pooled, const Mat& key, const Mat& w_out);

RefResult fam_forward(const Mat& c, const Mat& r, const Mat& p, const RefWeights& w, bool affinity,
                      double tau, MacCounter* macs = nullptr);

// Brute-force greedy suppression: repeatedly take the best unsuppressed box
// (ties by lowest index) and drop everything overlapping it above the
// threshold. Boxes are (x1, y1, x2, y2).
std::vector<int> nms(const std::vector<std::array<double, 4>>& boxes,
                     const std::vector<double>& scores, double iou_threshold);

}  // namespace vidagg::ref

#endif
