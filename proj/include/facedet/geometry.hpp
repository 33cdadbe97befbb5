#pragma once

namespace facedet {

/// Pixel-space box: top-left (x, y), width w, height h.
struct BoundingBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double area() const { return w * h; }
    bool operator==(const BoundingBox&) const = default;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);

// area(a & b) / area(a | b); 0 when the union is empty.
double iou(const BoundingBox& a, const BoundingBox& b);

}  // namespace facedet
