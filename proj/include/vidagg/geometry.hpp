#ifndef VIDAGG_GEOMETRY_HPP
#define VIDAGG_GEOMETRY_HPP

#include <vector>

namespace vidagg {

// Axis-aligned box in corner form. Width and height must be strictly positive.
struct BoundingBox {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double area() const { return width() * height(); }
    bool valid() const;

    bool operator==(const BoundingBox&) const = default;
};

// Intersection over union, in [0,1]. Throws std::invalid_argument on
// degenerate boxes.
double iou(const BoundingBox& a, const BoundingBox& b);

// Greedy non-maximum suppression. Returns indices of retained boxes in
// descending score order; a box is suppressed iff its IoU with an already
// retained box is strictly greater than iou_threshold. Equal scores are
// broken by original index (lower index wins) so results are reproducible.
std::vector<int> nms(const std::vector<BoundingBox>& boxes, const std::vector<double>& scores,
                     double iou_threshold);

}  // namespace vidagg

#endif
