#include "vidagg/fsm.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace vidagg {

std::vector<int> top_k_indices(const FrameRecord& frame, int k) {
    if (k < 1) throw std::invalid_argument("top_k_select: k must be >= 1");
    const int n = static_cast<int>(frame.predictions.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    const auto better = [&](int lhs, int rhs) {
        const double cl = confidence(frame.predictions[lhs]);
        const double cr = confidence(frame.predictions[rhs]);
        if (cl != cr) return cl > cr;
        return frame.predictions[lhs].position_id < frame.predictions[rhs].position_id;
    };
    if (n > k) {
        std::partial_sort(order.begin(), order.begin() + k, order.end(), better);
        order.resize(k);
    } else {
        std::sort(order.begin(), order.end(), better);
    }
    return order;
}

std::vector<DensePrediction> top_k_select(const FrameRecord& frame, int k) {
    std::vector<DensePrediction> out;
    for (int idx : top_k_indices(frame, k)) out.push_back(frame.predictions[idx]);
    return out;
}

FrameFeatureSet select_features(const FrameRecord& frame, const PipelineConfig& cfg) {
    cfg.validate();

    const std::vector<int> top = top_k_indices(frame, cfg.k);
    std::vector<BoundingBox> boxes;
    std::vector<double> scores;
    boxes.reserve(top.size());
    scores.reserve(top.size());
    for (int idx : top) {
        boxes.push_back(frame.predictions[idx].box);
        scores.push_back(confidence(frame.predictions[idx]));
    }

    std::vector<int> kept = nms(boxes, scores, cfg.nms_select);
    if (static_cast<int>(kept.size()) > cfg.a) kept.resize(cfg.a);

    FrameFeatureSet set;
    set.frame_id = frame.frame_id;
    const int a_eff = static_cast<int>(kept.size());
    const int d_q = a_eff > 0 ? static_cast<int>(frame.predictions[top[kept[0]]].feature_cls.size()) : 0;
    set.C = Matrix(a_eff, d_q);
    set.R = Matrix(a_eff, d_q);
    set.P = Matrix(a_eff, 2);
    set.boxes.reserve(a_eff);
    set.class_ids.reserve(a_eff);
    set.iou_scores.reserve(a_eff);

    for (int row = 0; row < a_eff; ++row) {
        const DensePrediction& p = frame.predictions[top[kept[row]]];
        for (int j = 0; j < d_q; ++j) {
            set.C(row, j) = p.feature_cls[j];
            set.R(row, j) = p.feature_reg[j];
        }
        double best = 0.0;
        for (float s : p.class_scores) best = std::max(best, static_cast<double>(s));
        set.P(row, 0) = best;
        set.P(row, 1) = p.iou_score;
        set.boxes.push_back(p.box);
        set.class_ids.push_back(argmax_class(p));
        set.iou_scores.push_back(p.iou_score);
    }
    return set;
}

}  // namespace vidagg
