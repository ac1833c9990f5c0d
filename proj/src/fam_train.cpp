#include "vidagg/fam_train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "vidagg/errors.hpp"
#include "vidagg/rng.hpp"
#include "vidagg/sampling.hpp"

namespace vidagg {

namespace {

FamGradients zero_gradients(const FamWeights& w) {
    FamGradients g;
    auto zeros = [&] { return std::vector<Matrix>(w.m, Matrix(w.d_q, w.d_head)); };
    g.wq_cls = zeros();
    g.wk_cls = zeros();
    g.wq_reg = zeros();
    g.wk_reg = zeros();
    g.wv = zeros();
    g.w_out = Matrix(4 * w.feature_dim(), w.num_classes);
    return g;
}

// dL[i][j] = W[i][j] * (dW[i][j] - sum_k dW[i][k] W[i][k])
Matrix softmax_backward(const Matrix& weights, const Matrix& dweights) {
    const int n = weights.rows();
    Matrix dlogits(n, n);
#pragma omp parallel for schedule(static) if (static_cast<long>(n) * n > (1 << 13))
    for (int i = 0; i < n; ++i) {
        const double* wrow = weights.row(i);
        const double* drow = dweights.row(i);
        double dot = 0.0;
        for (int j = 0; j < n; ++j) dot += wrow[j] * drow[j];
        double* out = dlogits.row(i);
        for (int j = 0; j < n; ++j) out[j] = wrow[j] * (drow[j] - dot);
    }
    return dlogits;
}

Matrix slice_cols(const Matrix& src, int col0, int width) {
    Matrix out(src.rows(), width);
    for (int i = 0; i < src.rows(); ++i)
        std::memcpy(out.row(i), src.row(i) + col0, sizeof(double) * width);
    return out;
}

}  // namespace

ForwardLoss forward_loss(const AggregationBatch& batch, const std::vector<int>& labels,
                         const FamWeights& w, double tau, AttentionMode mode) {
    const int n = batch.rows();
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("forward_loss: one label per batch row required");
    for (int label : labels)
        if (label < 0 || label >= w.num_classes)
            throw std::out_of_range("forward_loss: label outside [0, num_classes)");

    ForwardLoss fl;
    fl.labels = labels;
    fam_forward(batch, w, mode, tau, &fl.cache);

    // Stable mean cross-entropy straight from the logits.
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = fl.cache.logits.row(i);
        double mx = row[0];
        for (int c = 1; c < w.num_classes; ++c) mx = std::max(mx, row[c]);
        double sum = 0.0;
        for (int c = 0; c < w.num_classes; ++c) sum += std::exp(row[c] - mx);
        total += std::log(sum) + mx - row[labels[i]];
    }
    fl.loss = total / n;
    return fl;
}

FamGradients backward(const ForwardLoss& fl, const AggregationBatch& batch, const FamWeights& w) {
    const FamTrace& t = fl.cache;
    if (t.weights_revision != w.revision)
        throw std::logic_error("backward: stale cache, weights changed since forward");
    const int n = batch.rows();
    if (static_cast<int>(fl.labels.size()) != n || t.sa_f.rows() != n)
        throw std::logic_error("backward: cache does not match batch");

    const int dh = w.d_head;
    const int d = w.feature_dim();
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    const bool affinity = t.mode == AttentionMode::affinity;

    FamGradients g = zero_gradients(w);

    // Mean cross-entropy: dlogits = (probs - onehot) / n.
    Matrix dlogits = t.probs;
    const double inv_n = 1.0 / n;
    for (int i = 0; i < n; ++i) {
        double* row = dlogits.row(i);
        row[fl.labels[i]] -= 1.0;
        for (int c = 0; c < w.num_classes; ++c) row[c] *= inv_n;
    }

    // Classifier: logits = [pooled | sa_f] * w_out.
    Matrix gmat(n, 4 * d);
    for (int i = 0; i < n; ++i) {
        std::memcpy(gmat.row(i), t.pooled.row(i), sizeof(double) * 2 * d);
        std::memcpy(gmat.row(i) + 2 * d, t.sa_f.row(i), sizeof(double) * 2 * d);
    }
    g.w_out = matmul_tn(gmat, dlogits);
    const Matrix dgmat = matmul_nt(dlogits, w.w_out);

    // Pooling backward with frozen survivor sets, plus the direct key path.
    Matrix dsa = slice_cols(dgmat, 2 * d, 2 * d);
    for (int i = 0; i < n; ++i) {
        const std::vector<int>& surv = t.survivors[i];
        const double inv = 1.0 / static_cast<double>(surv.size());
        const double* dp = dgmat.row(i);  // first 2*d columns = dpooled
        for (int j : surv) {
            double* row = dsa.row(j);
            for (int c = 0; c < 2 * d; ++c) row[c] += inv * dp[c];
        }
    }

    for (int h = 0; h < w.m; ++h) {
        // Branch sums share the same upstream slice; the value columns of
        // sa_f add a direct path into dv.
        const Matrix dsac = slice_cols(dsa, h * dh, dh);
        Matrix dv = slice_cols(dsa, d + h * dh, dh);
        add_inplace(dv, matmul_tn(t.wc[h], dsac));
        add_inplace(dv, matmul_tn(t.wr[h], dsac));

        Matrix dwc = matmul_nt(dsac, t.v[h]);
        Matrix dwr = dwc;
        Matrix dlc = softmax_backward(t.wc[h], dwc);
        Matrix dlr = softmax_backward(t.wr[h], dwr);
        if (affinity) {
            for (int i = 0; i < n; ++i) {
                double* lc = dlc.row(i);
                double* lr = dlr.row(i);
                for (int j = 0; j < n; ++j) {
                    lc[j] *= batch.P(j, 0);
                    lr[j] *= batch.P(j, 1);
                }
            }
        }

        auto scaled = [&](Matrix mtx) {
            for (size_t idx = 0; idx < mtx.size(); ++idx) mtx.data()[idx] *= inv_sqrt;
            return mtx;
        };
        const Matrix dqc = scaled(matmul(dlc, t.kc[h]));
        const Matrix dkc = scaled(matmul_tn(dlc, t.qc[h]));
        const Matrix dqr = scaled(matmul(dlr, t.kr[h]));
        const Matrix dkr = scaled(matmul_tn(dlr, t.qr[h]));

        g.wq_cls[h] = matmul_tn(batch.C, dqc);
        g.wk_cls[h] = matmul_tn(batch.C, dkc);
        g.wq_reg[h] = matmul_tn(batch.R, dqr);
        g.wk_reg[h] = matmul_tn(batch.R, dkr);
        g.wv[h] = matmul_tn(batch.C, dv);
    }
    return g;
}

void apply_sgd(FamWeights& w, const FamGradients& g, double lr) {
    auto step = [&](Matrix& dst, const Matrix& src) {
        for (size_t i = 0; i < dst.size(); ++i) dst.data()[i] -= lr * src.data()[i];
    };
    for (int h = 0; h < w.m; ++h) {
        step(w.wq_cls[h], g.wq_cls[h]);
        step(w.wk_cls[h], g.wk_cls[h]);
        step(w.wq_reg[h], g.wq_reg[h]);
        step(w.wk_reg[h], g.wk_reg[h]);
        step(w.wv[h], g.wv[h]);
    }
    step(w.w_out, g.w_out);
    ++w.revision;
}

std::vector<int> assign_labels(const FrameFeatureSet& set, const std::vector<GroundTruthBox>& gts,
                               int num_classes) {
    std::vector<int> labels(set.a_eff(), num_classes);  // background by default
    for (int r = 0; r < set.a_eff(); ++r) {
        double best_iou = 0.0;
        int best_class = num_classes;
        for (const GroundTruthBox& gt : gts) {
            const double v = iou(set.boxes[r], gt.box);
            if (v > best_iou) {
                best_iou = v;
                best_class = static_cast<int>(gt.class_id);
            }
        }
        if (best_iou >= 0.5) labels[r] = best_class;
    }
    return labels;
}

FamWeights train(const StreamData& stream, const PipelineConfig& cfg, const TrainOptions& opts) {
    cfg.validate();
    if (cfg.mode != PipelineMode::affinity && cfg.mode != PipelineMode::qk)
        throw ConfigError("train requires mode affinity or qk");
    if (opts.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (opts.lr < 0.0) throw ConfigError("lr must be >= 0");
    if (!stream.has_ground_truth())
        throw DataError("data error: training stream carries no ground truth");
    const AttentionMode mode =
        cfg.mode == PipelineMode::affinity ? AttentionMode::affinity : AttentionMode::qk;

    // Group records per video; the reader guarantees (video, frame) order.
    std::vector<std::vector<const FrameRecord*>> videos;
    for (const FrameRecord& rec : stream.records) {
        if (videos.empty() || videos.back().front()->video_id != rec.video_id) videos.emplace_back();
        videos.back().push_back(&rec);
    }

    // Selection and labels are invariant across epochs; compute once.
    std::vector<std::vector<FrameFeatureSet>> sets(videos.size());
    std::vector<std::vector<std::vector<int>>> labels(videos.size());
    for (size_t v = 0; v < videos.size(); ++v) {
        sets[v].reserve(videos[v].size());
        labels[v].reserve(videos[v].size());
        for (const FrameRecord* rec : videos[v]) {
            FrameFeatureSet set = select_features(*rec, cfg);
            labels[v].push_back(assign_labels(
                set, rec->ground_truth ? *rec->ground_truth : std::vector<GroundTruthBox>{},
                stream.num_classes));
            sets[v].push_back(std::move(set));
        }
    }

    FamWeights w =
        init_fam_weights(cfg.m, cfg.d_head, stream.d_q, stream.num_classes + 1, mix64(opts.seed));

    std::vector<std::pair<int, int>> keyframes;
    for (size_t v = 0; v < videos.size(); ++v)
        for (size_t f = 0; f < videos[v].size(); ++f)
            keyframes.emplace_back(static_cast<int>(v), static_cast<int>(f));

    for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
        std::vector<std::pair<int, int>> order = keyframes;
        std::mt19937_64 shuffle_rng(mix64(opts.seed ^ (0x5e5u + static_cast<uint64_t>(epoch))));
        deterministic_shuffle(order, shuffle_rng);

        double loss_sum = 0.0;
        long batches = 0;
        for (const auto& [v, key_pos] : order) {
            const int video_len = static_cast<int>(videos[v].size());
            const uint32_t video_id = videos[v].front()->video_id;
            const uint32_t key_frame_id = videos[v][key_pos]->frame_id;
            std::vector<int> frame_idx =
                cfg.sampling_mode == SamplingMode::global
                    ? sample_global(video_len, cfg.f_g, key_pos,
                                    draw_seed(opts.seed, video_id, key_frame_id))
                    : sample_local(video_len, cfg.f_l, key_pos);

            std::vector<const FrameFeatureSet*> batch_sets;
            std::vector<int> batch_labels;
            for (int f : frame_idx) {
                batch_sets.push_back(&sets[v][f]);
                batch_labels.insert(batch_labels.end(), labels[v][f].begin(), labels[v][f].end());
            }
            AggregationBatch batch = build_batch(batch_sets);
            if (batch.rows() == 0) continue;

            ForwardLoss fl = forward_loss(batch, batch_labels, w, cfg.tau, mode);
            FamGradients g = backward(fl, batch, w);
            apply_sgd(w, g, opts.lr);
            loss_sum += fl.loss;
            ++batches;
        }
        const double mean_loss = batches > 0 ? loss_sum / batches : 0.0;
        if (opts.on_epoch) opts.on_epoch(epoch, mean_loss, w);
    }
    return w;
}

}  // namespace vidagg
