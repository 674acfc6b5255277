#pragma once

#include <array>

#include "qar/error.hpp"

namespace qar {

// Axis-aligned box in corner form, pixel coordinates.
struct Box {
    double x1 = 0.0;
    double y1 = 0.0;
    double x2 = 0.0;
    double y2 = 0.0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double center_x() const { return 0.5 * (x1 + x2); }
    double center_y() const { return 0.5 * (y1 + y2); }
    double area() const { return width() * height(); }

    bool valid() const { return x2 > x1 && y2 > y1; }

    void require_valid() const {
        if (!valid()) fail(ErrorCode::InvalidArgument, "degenerate box: x2<=x1 or y2<=y1");
    }

    bool operator==(const Box& o) const = default;
};

// (dx, dy, dw, dh) in the R-CNN parameterization: center shifts are relative
// to the proposal size, size changes are log-ratios.
struct BoxDeltas {
    double dx = 0.0;
    double dy = 0.0;
    double dw = 0.0;
    double dh = 0.0;

    double operator[](int k) const {
        const std::array<const double*, 4> p = {&dx, &dy, &dw, &dh};
        return *p[static_cast<size_t>(k)];
    }
};

double box_iou(const Box& a, const Box& b);

// Deltas that map `proposal` onto `gt`.
BoxDeltas regression_targets(const Box& proposal, const Box& gt);

// Inverse of regression_targets.
Box apply_deltas(const Box& box, const BoxDeltas& deltas);

} // namespace qar
