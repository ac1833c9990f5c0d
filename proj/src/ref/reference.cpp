#include "ref/reference.hpp"

#include <cmath>

namespace vidagg::ref {

Mat make_mat(int rows, int cols) {
    return Mat(rows, std::vector<double>(cols, 0.0));
}

namespace {

Mat project(const Mat& x, const Mat& w, MacCounter* macs) {
    const int n = static_cast<int>(x.size());
    const int d_in = static_cast<int>(w.size());
    const int d_out = static_cast<int>(w[0].size());
    Mat out = make_mat(n, d_out);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_out; ++j) {
            double acc = 0.0;
            for (int t = 0; t < d_in; ++t) {
                acc += x[i][t] * w[t][j];
                if (macs) ++macs->projection;
            }
            out[i][j] = acc;
        }
    return out;
}

void softmax_row(std::vector<double>& row) {
    double mx = row[0];
    for (double v : row) mx = std::max(mx, v);
    double sum = 0.0;
    for (double& v : row) {
        v = std::exp(v - mx);
        sum += v;
    }
    for (double& v : row) v /= sum;
}

}  // namespace

Mat attention_logits(const Mat& q, const Mat& k) {
    const int n = static_cast<int>(q.size());
    const int d = static_cast<int>(q[0].size());
    const double inv = 1.0 / std::sqrt(static_cast<double>(d));
    Mat a = make_mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < d; ++t) acc += q[i][t] * k[j][t];
            a[i][j] = acc * inv;
        }
    return a;
}

Mat layernorm(const Mat& x) {
    const int n = static_cast<int>(x.size());
    const int d = static_cast<int>(x[0].size());
    Mat out = make_mat(n, d);
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += x[i][j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x[i][j] - mean) * (x[i][j] - mean);
        var /= d;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int j = 0; j < d; ++j) out[i][j] = (x[i][j] - mean) * inv;
    }
    return out;
}

Mat similarity(const Mat& v_full) {
    const int n = static_cast<int>(v_full.size());
    const int d = static_cast<int>(v_full[0].size());
    const Mat z = layernorm(v_full);
    Mat sim = make_mat(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < d; ++t) acc += z[i][t] * z[j][t];
            sim[i][j] = acc / d;
        }
    return sim;
}

Mat average_pool(const Mat& sa_f, const Mat& v_full, double tau) {
    const int n = static_cast<int>(sa_f.size());
    const int width = static_cast<int>(sa_f[0].size());
    const Mat sim = similarity(v_full);
    Mat pooled = make_mat(n, width);
    for (int i = 0; i < n; ++i) {
        std::vector<int> surv;
        for (int j = 0; j < n; ++j)
            if (sim[i][j] >= tau || j == i) surv.push_back(j);
        for (int j : surv)
            for (int t = 0; t < width; ++t) pooled[i][t] += sa_f[j][t];
        for (int t = 0; t < width; ++t) pooled[i][t] /= static_cast<double>(surv.size());
    }
    return pooled;
}

Mat classify(const Mat& pooled, const Mat& key, const Mat& w_out) {
    const int n = static_cast<int>(pooled.size());
    const int half = static_cast<int>(pooled[0].size());
    const int classes = static_cast<int>(w_out[0].size());
    Mat probs = make_mat(n, classes);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < classes; ++c) {
            double acc = 0.0;
            for (int t = 0; t < half; ++t) acc += pooled[i][t] * w_out[t][c];
            for (int t = 0; t < half; ++t) acc += key[i][t] * w_out[half + t][c];
            probs[i][c] = acc;
        }
        softmax_row(probs[i]);
    }
    return probs;
}

RefResult fam_forward(const Mat& c, const Mat& r, const Mat& p, const RefWeights& w, bool affinity,
                      double tau, MacCounter* macs) {
    const int n = static_cast<int>(c.size());
    const int dh = w.d_head;
    const int d = w.m * dh;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    RefResult res;
    res.sa_f = make_mat(n, 2 * d);
    res.v_full = make_mat(n, d);

    for (int h = 0; h < w.m; ++h) {
        const Mat qc = project(c, w.wq_cls[h], macs);
        const Mat kc = project(c, w.wk_cls[h], macs);
        const Mat qr = project(r, w.wq_reg[h], macs);
        const Mat kr = project(r, w.wk_reg[h], macs);
        const Mat v = project(c, w.wv[h], macs);

        Mat wc = make_mat(n, n);
        Mat wr = make_mat(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                double lc = 0.0, lr = 0.0;
                for (int t = 0; t < dh; ++t) {
                    lc += qc[i][t] * kc[j][t];
                    lr += qr[i][t] * kr[j][t];
                    if (macs) macs->logits += 2;
                }
                lc *= inv_sqrt;
                lr *= inv_sqrt;
                if (affinity) {
                    lc *= p[j][0];
                    lr *= p[j][1];
                }
                wc[i][j] = lc;
                wr[i][j] = lr;
            }
            softmax_row(wc[i]);
            softmax_row(wr[i]);
        }

        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j)
                for (int t = 0; t < dh; ++t) {
                    res.sa_f[i][h * dh + t] += wc[i][j] * v[j][t] + wr[i][j] * v[j][t];
                    if (macs) macs->apply += 2;
                }
            for (int t = 0; t < dh; ++t) {
                res.sa_f[i][d + h * dh + t] = v[i][t];
                res.v_full[i][h * dh + t] = v[i][t];
            }
        }
    }

    if (macs) {
        macs->similarity += static_cast<long long>(n) * n * d;
        macs->classifier += static_cast<long long>(n) * w.num_classes * 4 * d;
    }
    res.pooled = average_pool(res.sa_f, res.v_full, tau);
    res.probs = classify(res.pooled, res.sa_f, w.w_out);
    return res;
}

std::vector<int> nms(const std::vector<std::array<double, 4>>& boxes,
                     const std::vector<double>& scores, double iou_threshold) {
    const int n = static_cast<int>(boxes.size());
    std::vector<bool> alive(n, true);
    std::vector<int> kept;

    auto box_iou = [&](int a, int b) {
        const double ix =
            std::min(boxes[a][2], boxes[b][2]) - std::max(boxes[a][0], boxes[b][0]);
        const double iy =
            std::min(boxes[a][3], boxes[b][3]) - std::max(boxes[a][1], boxes[b][1]);
        if (ix <= 0.0 || iy <= 0.0) return 0.0;
        const double inter = ix * iy;
        const double area_a = (boxes[a][2] - boxes[a][0]) * (boxes[a][3] - boxes[a][1]);
        const double area_b = (boxes[b][2] - boxes[b][0]) * (boxes[b][3] - boxes[b][1]);
        return inter / (area_a + area_b - inter);
    };

    while (true) {
        int best = -1;
        for (int i = 0; i < n; ++i)
            if (alive[i] && (best == -1 || scores[i] > scores[best])) best = i;
        if (best == -1) break;
        kept.push_back(best);
        alive[best] = false;
        for (int i = 0; i < n; ++i)
            if (alive[i] && box_iou(best, i) > iou_threshold) alive[i] = false;
    }
    return kept;
}

}  // namespace vidagg::ref
