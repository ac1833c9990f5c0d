#include "vidagg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vidagg {

bool BoundingBox::valid() const {
    return std::isfinite(x1) && std::isfinite(y1) && std::isfinite(x2) && std::isfinite(y2) &&
           x2 > x1 && y2 > y1;
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (!a.valid() || !b.valid()) throw std::invalid_argument("iou: degenerate bounding box");
    const double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    return inter / (a.area() + b.area() - inter);
}

std::vector<int> nms(const std::vector<BoundingBox>& boxes, const std::vector<double>& scores,
                     double iou_threshold) {
    if (boxes.size() != scores.size()) throw std::invalid_argument("nms: boxes/scores size mismatch");
    if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
        throw std::invalid_argument("nms: iou_threshold out of [0,1]");
    for (double s : scores)
        if (!std::isfinite(s)) throw std::invalid_argument("nms: non-finite score");

    std::vector<int> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int lhs, int rhs) {
        if (scores[lhs] != scores[rhs]) return scores[lhs] > scores[rhs];
        return lhs < rhs;
    });

    std::vector<int> kept;
    for (int idx : order) {
        bool suppressed = false;
        for (int k : kept) {
            if (iou(boxes[idx], boxes[k]) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

}  // namespace vidagg
