#ifndef VIDAGG_FAM_TRAIN_HPP
#define VIDAGG_FAM_TRAIN_HPP

#include <functional>
#include <vector>

#include "vidagg/config.hpp"
#include "vidagg/fam.hpp"
#include "vidagg/stream.hpp"

namespace vidagg {

struct FamGradients {
    std::vector<Matrix> wq_cls, wk_cls, wq_reg, wk_reg, wv;
    Matrix w_out;
};

struct ForwardLoss {
    double loss = 0.0;
    std::vector<int> labels;
    FamTrace cache;
};

// Mean cross-entropy of the module's refined class probabilities against
// per-proposal labels. The cache holds everything backward needs.
ForwardLoss forward_loss(const AggregationBatch& batch, const std::vector<int>& labels,
                         const FamWeights& w, double tau, AttentionMode mode);

// Analytic gradients for every weight matrix. Pooling survivor sets are
// treated as constant (threshold selection is not differentiable). Throws
// std::logic_error if the weights changed since the cache was built.
FamGradients backward(const ForwardLoss& fl, const AggregationBatch& batch, const FamWeights& w);

// w -= lr * g; bumps the weights revision.
void apply_sgd(FamWeights& w, const FamGradients& g, double lr);

// Proposal labels for one frame: the class of the best-overlapping ground
// truth at IoU >= 0.5, else the background label (== stream num_classes).
std::vector<int> assign_labels(const FrameFeatureSet& set, const std::vector<GroundTruthBox>& gts,
                               int num_classes);

struct TrainOptions {
    int epochs = 3;
    double lr = 0.5;
    uint64_t seed = 1;
    // Called after each epoch with the mean batch loss and a weight snapshot.
    std::function<void(int epoch, double mean_loss, const FamWeights& w)> on_epoch;
};

// Plain SGD over per-keyframe aggregation batches. The stream must carry
// ground truth. Weights get num_classes + 1 outputs; the extra column is the
// background class. Deterministic for a given seed.
FamWeights train(const StreamData& stream, const PipelineConfig& cfg, const TrainOptions& opts);

}  // namespace vidagg

#endif
