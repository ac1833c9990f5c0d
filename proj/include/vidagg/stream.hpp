#ifndef VIDAGG_STREAM_HPP
#define VIDAGG_STREAM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidagg/geometry.hpp"

namespace vidagg {

// One dense detector output cell: decoded box, per-class scores, localization
// quality score and the two branch feature vectors a base detector exposes.
struct DensePrediction {
    BoundingBox box;
    std::vector<float> class_scores;   // length num_classes, each in [0,1]
    float iou_score = 0.0f;            // in [0,1]
    std::vector<float> feature_cls;    // length d_q
    std::vector<float> feature_reg;    // length d_q
    uint32_t position_id = 0;          // flattened feature-map index

    bool operator==(const DensePrediction&) const = default;
};

struct GroundTruthBox {
    uint32_t frame_id = 0;
    BoundingBox box;
    uint32_t class_id = 0;

    bool operator==(const GroundTruthBox&) const = default;
};

struct FrameRecord {
    uint32_t video_id = 0;
    uint32_t frame_id = 0;
    std::vector<DensePrediction> predictions;
    std::optional<std::vector<GroundTruthBox>> ground_truth;

    bool operator==(const FrameRecord&) const = default;
};

// A full feature stream: header dimensions plus frame records in
// (video_id, frame_id) order.
struct StreamData {
    uint16_t num_classes = 0;
    uint16_t d_q = 0;
    std::vector<FrameRecord> records;

    bool has_ground_truth() const;

    bool operator==(const StreamData&) const = default;
};

// Ranking signal used by selection and evaluation: the best class score
// multiplied by the localization quality score.
double confidence(const DensePrediction& p);

int argmax_class(const DensePrediction& p);

// Binary feature-stream container, all integers and floats little-endian:
//   "VAGG" | u16 version=1 | u16 num_classes | u16 d_q | u16 flags (bit 0: ground truth)
// then per frame a u32 payload length followed by the payload:
//   u32 video_id | u32 frame_id | u32 n_predictions | predictions
//   [flags&1: u32 n_gt | ground-truth records]
// Prediction fields in declaration order: box (4 x f32), class_scores,
// iou_score, feature_cls, feature_reg, position_id (u32). Ground-truth
// record: u32 frame_id | box (4 x f32) | u32 class_id.
// Writes are byte-deterministic for identical input.
void write_feature_stream(const StreamData& stream, const std::string& path);
StreamData read_feature_stream(const std::string& path);

}  // namespace vidagg

#endif
