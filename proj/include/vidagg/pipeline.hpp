#ifndef VIDAGG_PIPELINE_HPP
#define VIDAGG_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vidagg/config.hpp"
#include "vidagg/fam.hpp"
#include "vidagg/stream.hpp"

namespace vidagg {

struct Detection {
    uint32_t video_id = 0;
    uint32_t frame_id = 0;
    BoundingBox box;
    int class_id = 0;
    double score = 0.0;

    bool operator==(const Detection&) const = default;
};

struct FrameGt {
    uint32_t video_id = 0;
    GroundTruthBox gt;
};

// Detect one keyframe of a video: sample references, select features per
// frame, aggregate, classify, rescore the keyframe proposals and apply
// class-aware NMS at cfg.nms_final. Boxes and localization come straight
// from the base predictions; only classification is refined. In baseline
// (and cosine_diag) mode FAM is skipped and original scores are used.
// `weights` may be null in those modes.
std::vector<Detection> run_keyframe(const std::vector<FrameRecord>& video, int key_pos,
                                    const FamWeights* weights, const PipelineConfig& cfg,
                                    int stream_num_classes);

// Every frame of every video acts as keyframe once. Keyframes are evaluated
// in parallel; output is ordered by (video_id, frame_id) regardless of the
// worker count.
std::vector<Detection> run_stream(const StreamData& stream, const FamWeights* weights,
                                  const PipelineConfig& cfg);

// VOC-style average precision at IoU >= 0.5 with all-point interpolation,
// averaged over classes present in the ground truth. Returns -1.0 when no
// ground truth is supplied.
double ap50(const std::vector<Detection>& detections, const std::vector<FrameGt>& gts);
std::map<int, double> ap50_per_class(const std::vector<Detection>& detections,
                                     const std::vector<FrameGt>& gts);

std::vector<FrameGt> collect_ground_truth(const StreamData& stream);

// Line-delimited text, one detection per line:
// video_id frame_id x1 y1 x2 y2 class_id score
void write_detections(const std::vector<Detection>& dets, const std::string& path);
std::vector<Detection> read_detections(const std::string& path);

struct AblationRow {
    std::string value;
    double ap50 = 0.0;
    double mean_ms_per_frame = 0.0;
};

// One full evaluation per sweep value with a fixed seed. Supported sweep
// parameters: f_g, f_l, a, tau, mode.
std::vector<AblationRow> ablate(const StreamData& stream, const FamWeights* weights,
                                const PipelineConfig& base_cfg, const std::string& param,
                                const std::vector<std::string>& values);

void write_ablation_table(const std::vector<AblationRow>& rows, const std::string& path);
void write_ablation_plot(const std::vector<AblationRow>& rows, const std::string& path);

// Closed-form multiply-accumulate counts for one aggregation of N proposals.
// Projections scale linearly in N, attention terms quadratically.
struct OpCounts {
    long long projection_macs = 0;            // 5 m N d_q d_head
    long long logit_macs_per_head_branch = 0;  // N^2 d_head
    long long logit_macs = 0;                  // 2 m N^2 d_head
    long long apply_macs = 0;                  // 2 m N^2 d_head
    long long similarity_macs = 0;             // N^2 m d_head
    long long classifier_macs = 0;             // N 4D num_classes
    long long pooling_adds_worst = 0;          // N^2 2D, survivor-dependent upper bound

    long long attention_macs() const { return logit_macs + apply_macs; }
    long long total_macs() const {
        return projection_macs + logit_macs + apply_macs + similarity_macs + classifier_macs;
    }
};

OpCounts count_ops(const PipelineConfig& cfg, long long n, int d_q, int num_classes);

// Per-proposal reference listing in cosine_diag mode: for every keyframe
// proposal, the top references by raw-feature cosine similarity.
void write_cosine_diagnostics(const StreamData& stream, const PipelineConfig& cfg, int top_n,
                              const std::string& path);

}  // namespace vidagg

#endif
