#include "vidagg/fam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "vidagg/errors.hpp"

namespace vidagg {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr char kMagic[4] = {'V', 'A', 'G', 'W'};
constexpr uint16_t kVersion = 1;

void require(bool cond, const std::string& msg) {
    if (!cond) throw SchemaError(msg);
}

void check_stage_finite(const Matrix& m, const char* stage) {
    if (!all_finite(m)) throw NumericError(std::string("non-finite values in ") + stage);
}

void put_u16(std::string& buf, uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_matrix(std::string& buf, const Matrix& m) {
    for (size_t i = 0; i < m.size(); ++i) {
        const float f = static_cast<float>(m.data()[i]);
        uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        for (int b = 0; b < 4; ++b) buf.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
}

}  // namespace

void FamWeights::validate() const {
    if (m < 1 || d_head < 1 || d_q < 1 || num_classes < 1)
        throw SchemaError("fam weights: dimensions must be positive");
    auto check_set = [&](const std::vector<Matrix>& set, const char* name) {
        require(static_cast<int>(set.size()) == m, std::string(name) + ": expected one matrix per head");
        for (const Matrix& mat : set) {
            require(mat.rows() == d_q && mat.cols() == d_head,
                    std::string(name) + ": expected d_q x d_head");
            if (!all_finite(mat)) throw DataError(std::string("data error: non-finite weight in ") + name);
        }
    };
    check_set(wq_cls, "wq_cls");
    check_set(wk_cls, "wk_cls");
    check_set(wq_reg, "wq_reg");
    check_set(wk_reg, "wk_reg");
    check_set(wv, "wv");
    require(w_out.rows() == 4 * feature_dim() && w_out.cols() == num_classes,
            "w_out: expected 4*D x num_classes");
    if (!all_finite(w_out)) throw DataError("data error: non-finite weight in w_out");
}

namespace {
// Gain on the query/key init. At 1x the initial logits of unit-norm features
// are O(1/d_q): softmax starts uniform, score modulation multiplies
// near-zero logits, and plain SGD cannot bootstrap the attention path at
// desk scale. The gain puts initial logits at O(1).
constexpr double kQkInitGain = 8.0;
}

FamWeights init_fam_weights(int m, int d_head, int d_q, int num_classes, uint64_t seed) {
    if (m < 1 || d_head < 1 || d_q < 1 || num_classes < 1)
        throw std::invalid_argument("init_fam_weights: dimensions must be positive");
    FamWeights w;
    w.m = m;
    w.d_head = d_head;
    w.d_q = d_q;
    w.num_classes = num_classes;

    std::mt19937_64 rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(d_q));
    auto fill = [&](Matrix& mat, double s) {
        mat = Matrix(d_q, d_head);
        for (size_t i = 0; i < mat.size(); ++i) {
            // 53-bit uniform in [0,1), then centered.
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            mat.data()[i] = (2.0 * u - 1.0) * s;
        }
    };
    w.wq_cls.resize(m);
    w.wk_cls.resize(m);
    w.wq_reg.resize(m);
    w.wk_reg.resize(m);
    w.wv.resize(m);
    for (int h = 0; h < m; ++h) {
        // Queries and keys start tied, so q.k approximates feature similarity
        // through a random projection; training unties them.
        fill(w.wq_cls[h], scale * kQkInitGain);
        w.wk_cls[h] = w.wq_cls[h];
        fill(w.wq_reg[h], scale * kQkInitGain);
        w.wk_reg[h] = w.wq_reg[h];
        fill(w.wv[h], scale);
    }
    w.w_out = Matrix(4 * w.feature_dim(), num_classes);
    w.revision = 1;
    return w;
}

void save_fam_weights(const FamWeights& w, const std::string& path) {
    w.validate();
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u16(buf, static_cast<uint16_t>(w.m));
    put_u16(buf, static_cast<uint16_t>(w.d_head));
    put_u16(buf, static_cast<uint16_t>(w.d_q));
    put_u16(buf, static_cast<uint16_t>(w.num_classes));
    for (const auto* set : {&w.wq_cls, &w.wk_cls, &w.wq_reg, &w.wk_reg, &w.wv})
        for (const Matrix& mat : *set) put_matrix(buf, mat);
    put_matrix(buf, w.w_out);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("data error: cannot open " + path + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("data error: write failed for " + path);
}

FamWeights load_fam_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("data error: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    size_t pos = 0;
    auto need = [&](size_t n) {
        if (bytes.size() - pos < n) throw FormatError("truncated weights file " + path);
    };
    need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic in " + path);
    pos = 4;
    auto get_u16 = [&]() {
        need(2);
        uint16_t v = static_cast<uint8_t>(bytes[pos]) | static_cast<uint16_t>(static_cast<uint8_t>(bytes[pos + 1])) << 8;
        pos += 2;
        return v;
    };
    const uint16_t version = get_u16();
    if (version != kVersion) throw FormatError("unsupported weights version " + std::to_string(version));

    FamWeights w;
    w.m = get_u16();
    w.d_head = get_u16();
    w.d_q = get_u16();
    w.num_classes = get_u16();
    if (w.m < 1 || w.d_head < 1 || w.d_q < 1 || w.num_classes < 1)
        throw SchemaError("weights header declares non-positive dimensions");

    auto get_matrix = [&](int rows, int cols) {
        Matrix mat(rows, cols);
        need(static_cast<size_t>(rows) * cols * 4);
        for (size_t i = 0; i < mat.size(); ++i) {
            uint32_t bits = 0;
            for (int b = 0; b < 4; ++b)
                bits |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos + b])) << (8 * b);
            pos += 4;
            float f;
            std::memcpy(&f, &bits, sizeof(f));
            mat.data()[i] = f;
        }
        return mat;
    };

    for (auto* set : {&w.wq_cls, &w.wk_cls, &w.wq_reg, &w.wk_reg, &w.wv}) {
        set->resize(w.m);
        for (Matrix& mat : *set) mat = get_matrix(w.d_q, w.d_head);
    }
    w.w_out = get_matrix(4 * w.feature_dim(), w.num_classes);
    if (pos != bytes.size()) throw SchemaError("weights file has trailing bytes");
    w.revision = 1;
    w.validate();
    return w;
}

AggregationBatch build_batch(const std::vector<const FrameFeatureSet*>& sets) {
    int n = 0;
    int d_q = 0;
    for (const FrameFeatureSet* s : sets) {
        n += s->a_eff();
        if (s->a_eff() > 0) d_q = s->C.cols();
    }
    AggregationBatch batch;
    batch.C = Matrix(n, d_q);
    batch.R = Matrix(n, d_q);
    batch.P = Matrix(n, 2);
    batch.frame_of_row.reserve(n);

    int row = 0;
    for (size_t f = 0; f < sets.size(); ++f) {
        const FrameFeatureSet* s = sets[f];
        require(s->a_eff() == 0 || s->C.cols() == d_q, "build_batch: frames disagree on d_q");
        for (int r = 0; r < s->a_eff(); ++r, ++row) {
            std::memcpy(batch.C.row(row), s->C.row(r), sizeof(double) * d_q);
            std::memcpy(batch.R.row(row), s->R.row(r), sizeof(double) * d_q);
            batch.P(row, 0) = s->P(r, 0);
            batch.P(row, 1) = s->P(r, 1);
            batch.frame_of_row.push_back(static_cast<int>(f));
        }
    }
    return batch;
}

Matrix scaled_dot_attention_logits(const Matrix& q, const Matrix& k) {
    if (q.rows() != k.rows() || q.cols() != k.cols())
        throw std::invalid_argument("scaled_dot_attention_logits: shape mismatch");
    if (q.cols() < 1) throw std::invalid_argument("scaled_dot_attention_logits: empty feature dim");
    Matrix a = matmul_nt(q, k);
    const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    for (size_t i = 0; i < a.size(); ++i) a.data()[i] *= inv;
    return a;
}

std::pair<Matrix, Matrix> build_score_matrices(const Matrix& p_all) {
    if (p_all.cols() != 2) throw std::invalid_argument("build_score_matrices: P must be N x 2");
    const int n = p_all.rows();
    Matrix s_c(n, n), s_r(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            s_c(i, j) = p_all(j, 0);
            s_r(i, j) = p_all(j, 1);
        }
    return {std::move(s_c), std::move(s_r)};
}

Matrix layernorm_rows(const Matrix& x) {
    if (x.cols() < 2) throw std::invalid_argument("layernorm_rows: need at least 2 columns");
    const int rows = x.rows(), cols = x.cols();
    Matrix out(rows, cols);
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > (1 << 14))
    for (int i = 0; i < rows; ++i) {
        const double* in = x.row(i);
        double* o = out.row(i);
        double mean = 0.0;
        for (int j = 0; j < cols; ++j) mean += in[j];
        mean /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) {
            const double d = in[j] - mean;
            var += d * d;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (int j = 0; j < cols; ++j) o[j] = (in[j] - mean) * inv;
    }
    return out;
}

FamForward affinity_attention(const AggregationBatch& batch, const FamWeights& w, AttentionMode mode,
                              FamTrace* trace) {
    w.validate();
    const int n = batch.rows();
    require(n >= 1, "affinity_attention: empty batch");
    require(batch.C.cols() == w.d_q && batch.R.cols() == w.d_q,
            "affinity_attention: batch d_q does not match weights");
    require(batch.P.rows() == n && batch.P.cols() == 2, "affinity_attention: P must be N x 2");

    const int dh = w.d_head;
    const int d = w.feature_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    FamForward out;
    out.sa_f = Matrix(n, 2 * d);
    out.v_full = Matrix(n, d);

    if (trace) {
        trace->weights_revision = w.revision;
        trace->mode = mode;
        trace->qc.assign(w.m, Matrix());
        trace->kc.assign(w.m, Matrix());
        trace->qr.assign(w.m, Matrix());
        trace->kr.assign(w.m, Matrix());
        trace->v.assign(w.m, Matrix());
        trace->wc.assign(w.m, Matrix());
        trace->wr.assign(w.m, Matrix());
    }

    for (int h = 0; h < w.m; ++h) {
        Matrix qc = matmul(batch.C, w.wq_cls[h]);
        Matrix kc = matmul(batch.C, w.wk_cls[h]);
        Matrix qr = matmul(batch.R, w.wq_reg[h]);
        Matrix kr = matmul(batch.R, w.wk_reg[h]);
        Matrix v = matmul(batch.C, w.wv[h]);

        // Logits, score modulation, softmax and the weighted sum are fused
        // per query row; every row is independent, so the loop parallelizes
        // without changing any accumulation order.
        Matrix wc(n, n), wr(n, n);
        Matrix sac(n, dh), sar(n, dh);
#pragma omp parallel for schedule(static) if (static_cast<long>(n) * n * dh > (1 << 15))
        for (int i = 0; i < n; ++i) {
            double* wc_row = wc.row(i);
            double* wr_row = wr.row(i);
            const double* qc_row = qc.row(i);
            const double* qr_row = qr.row(i);
            for (int j = 0; j < n; ++j) {
                double lc = 0.0, lr = 0.0;
                const double* kc_row = kc.row(j);
                const double* kr_row = kr.row(j);
                for (int t = 0; t < dh; ++t) {
                    lc += qc_row[t] * kc_row[t];
                    lr += qr_row[t] * kr_row[t];
                }
                lc *= inv_sqrt;
                lr *= inv_sqrt;
                if (mode == AttentionMode::affinity) {
                    lc *= batch.P(j, 0);
                    lr *= batch.P(j, 1);
                }
                wc_row[j] = lc;
                wr_row[j] = lr;
            }
            auto softmax_row = [n](double* row) {
                double mx = row[0];
                for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
                double sum = 0.0;
                for (int j = 0; j < n; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    sum += row[j];
                }
                const double inv = 1.0 / sum;
                for (int j = 0; j < n; ++j) row[j] *= inv;
            };
            softmax_row(wc_row);
            softmax_row(wr_row);

            double* sac_row = sac.row(i);
            double* sar_row = sar.row(i);
            for (int j = 0; j < n; ++j) {
                const double* v_row = v.row(j);
                const double a = wc_row[j];
                const double b = wr_row[j];
                for (int t = 0; t < dh; ++t) {
                    sac_row[t] += a * v_row[t];
                    sar_row[t] += b * v_row[t];
                }
            }
        }

        for (int i = 0; i < n; ++i) {
            double* sa_row = out.sa_f.row(i);
            double* vf_row = out.v_full.row(i);
            const double* v_row = v.row(i);
            for (int t = 0; t < dh; ++t) {
                sa_row[h * dh + t] = sac(i, t) + sar(i, t);
                sa_row[d + h * dh + t] = v_row[t];
                vf_row[h * dh + t] = v_row[t];
            }
        }

        if (trace) {
            trace->qc[h] = std::move(qc);
            trace->kc[h] = std::move(kc);
            trace->qr[h] = std::move(qr);
            trace->kr[h] = std::move(kr);
            trace->v[h] = std::move(v);
            trace->wc[h] = std::move(wc);
            trace->wr[h] = std::move(wr);
        }
    }

    check_stage_finite(out.v_full, "value projection");
    check_stage_finite(out.sa_f, "attention output");
    if (trace) {
        trace->sa_f = out.sa_f;
        trace->v_full = out.v_full;
    }
    return out;
}

Matrix similarity_matrix(const Matrix& v_full) {
    Matrix z = layernorm_rows(v_full);
    Matrix sim = matmul_nt(z, z);
    const double inv = 1.0 / static_cast<double>(v_full.cols());
    for (size_t i = 0; i < sim.size(); ++i) sim.data()[i] *= inv;
    return sim;
}

Matrix average_pool_refs(const Matrix& sa_f, const Matrix& v_full, double tau,
                         std::vector<std::vector<int>>* survivors_out) {
    if (sa_f.rows() != v_full.rows()) throw std::invalid_argument("average_pool_refs: row mismatch");
    if (!(tau >= -1.0 && tau <= 1.0))
        throw std::invalid_argument("average_pool_refs: tau out of [-1,1]");
    const int n = sa_f.rows();
    const int width = sa_f.cols();
    const Matrix sim = similarity_matrix(v_full);

    Matrix pooled(n, width);
    std::vector<std::vector<int>> survivors(n);
#pragma omp parallel for schedule(static) if (static_cast<long>(n) * n > (1 << 12))
    for (int i = 0; i < n; ++i) {
        std::vector<int>& surv = survivors[i];
        for (int j = 0; j < n; ++j)
            if (sim(i, j) >= tau || j == i) surv.push_back(j);
        double* prow = pooled.row(i);
        for (int j : surv) {
            const double* srow = sa_f.row(j);
            for (int t = 0; t < width; ++t) prow[t] += srow[t];
        }
        const double inv = 1.0 / static_cast<double>(surv.size());
        for (int t = 0; t < width; ++t) prow[t] *= inv;
    }
    check_stage_finite(pooled, "reference pooling");
    if (survivors_out) *survivors_out = std::move(survivors);
    return pooled;
}

Matrix classify_logits(const Matrix& pooled, const Matrix& key, const FamWeights& w) {
    require(pooled.rows() == key.rows() && pooled.cols() == key.cols(),
            "classify: pooled and key features must align");
    require(pooled.cols() == 2 * w.feature_dim(), "classify: feature width must be 2*D");
    const int n = pooled.rows();
    Matrix g(n, 4 * w.feature_dim());
    for (int i = 0; i < n; ++i) {
        std::memcpy(g.row(i), pooled.row(i), sizeof(double) * pooled.cols());
        std::memcpy(g.row(i) + pooled.cols(), key.row(i), sizeof(double) * key.cols());
    }
    Matrix logits = matmul(g, w.w_out);
    check_stage_finite(logits, "classifier logits");
    return logits;
}

Matrix classify(const Matrix& pooled, const Matrix& key, const FamWeights& w) {
    Matrix probs = classify_logits(pooled, key, w);
    softmax_rows_inplace(probs);
    return probs;
}

std::vector<int> cosine_select(const AggregationBatch& batch, int key_row, int top_n) {
    const int n = batch.rows();
    if (key_row < 0 || key_row >= n) throw std::out_of_range("cosine_select: key_row out of range");
    if (top_n < 1) throw std::invalid_argument("cosine_select: top_n must be >= 1");

    const int d = batch.C.cols();
    auto norm = [&](int row) {
        double s = 0.0;
        const double* r = batch.C.row(row);
        for (int t = 0; t < d; ++t) s += r[t] * r[t];
        return std::sqrt(s);
    };
    const double key_norm = norm(key_row);
    if (key_norm == 0.0) return {};

    std::vector<std::pair<double, int>> ranked;
    for (int j = 0; j < n; ++j) {
        if (j == key_row) continue;
        const double nj = norm(j);
        if (nj == 0.0) continue;
        double dot = 0.0;
        const double* a = batch.C.row(key_row);
        const double* b = batch.C.row(j);
        for (int t = 0; t < d; ++t) dot += a[t] * b[t];
        ranked.emplace_back(dot / (key_norm * nj), j);
    }
    std::sort(ranked.begin(), ranked.end(), [](const auto& lhs, const auto& rhs) {
        if (lhs.first != rhs.first) return lhs.first > rhs.first;
        return lhs.second < rhs.second;
    });
    if (static_cast<int>(ranked.size()) > top_n) ranked.resize(top_n);

    std::vector<int> out;
    out.reserve(ranked.size());
    for (const auto& [sim, idx] : ranked) out.push_back(idx);
    return out;
}

FamOutputs fam_forward(const AggregationBatch& batch, const FamWeights& w, AttentionMode mode,
                       double tau, FamTrace* trace) {
    FamOutputs out;
    FamForward fwd = affinity_attention(batch, w, mode, trace);
    out.pooled = average_pool_refs(fwd.sa_f, fwd.v_full, tau, trace ? &trace->survivors : nullptr);
    Matrix logits = classify_logits(out.pooled, fwd.sa_f, w);
    out.probs = logits;
    softmax_rows_inplace(out.probs);
    if (trace) {
        trace->tau = tau;
        trace->pooled = out.pooled;
        trace->logits = std::move(logits);
        trace->probs = out.probs;
    }
    out.sa_f = std::move(fwd.sa_f);
    out.v_full = std::move(fwd.v_full);
    return out;
}

}  // namespace vidagg
