#ifndef VIDAGG_FSM_HPP
#define VIDAGG_FSM_HPP

#include <vector>

#include "vidagg/config.hpp"
#include "vidagg/geometry.hpp"
#include "vidagg/matrix.hpp"
#include "vidagg/stream.hpp"

namespace vidagg {

// Selected proposals of one frame, rows ordered by descending confidence.
// a_eff may fall short of the configured cap; rows are never padded.
struct FrameFeatureSet {
    uint32_t frame_id = 0;
    Matrix C;                      // a_eff x d_q classification-branch features
    Matrix R;                      // a_eff x d_q regression-branch features
    Matrix P;                      // a_eff x 2: [max class score, iou score]
    std::vector<BoundingBox> boxes;
    std::vector<int> class_ids;    // detector argmax class per row
    std::vector<float> iou_scores; // original iou_score per row

    int a_eff() const { return C.rows(); }

    bool operator==(const FrameFeatureSet&) const = default;
};

// Indices of the k highest-confidence predictions, descending confidence,
// ties broken by ascending position_id.
std::vector<int> top_k_indices(const FrameRecord& frame, int k);
std::vector<DensePrediction> top_k_select(const FrameRecord& frame, int k);

// top-k, class-agnostic NMS at cfg.nms_select, cap at cfg.a, then gather
// features. Selection here targets feature redundancy; class-aware NMS for
// final detections lives in the pipeline.
FrameFeatureSet select_features(const FrameRecord& frame, const PipelineConfig& cfg);

}  // namespace vidagg

#endif
