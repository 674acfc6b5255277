#include "qar/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace qar {

double box_iou(const Box& a, const Box& b) {
    a.require_valid();
    b.require_valid();
    double ix1 = std::max(a.x1, b.x1);
    double iy1 = std::max(a.y1, b.y1);
    double ix2 = std::min(a.x2, b.x2);
    double iy2 = std::min(a.y2, b.y2);
    double iw = ix2 - ix1;
    double ih = iy2 - iy1;
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    double inter = iw * ih;
    double uni = a.area() + b.area() - inter;
    return inter / uni;
}

BoxDeltas regression_targets(const Box& proposal, const Box& gt) {
    proposal.require_valid();
    gt.require_valid();
    BoxDeltas d;
    d.dx = (gt.center_x() - proposal.center_x()) / proposal.width();
    d.dy = (gt.center_y() - proposal.center_y()) / proposal.height();
    d.dw = std::log(gt.width() / proposal.width());
    d.dh = std::log(gt.height() / proposal.height());
    return d;
}

Box apply_deltas(const Box& box, const BoxDeltas& deltas) {
    box.require_valid();
    double cx = box.center_x() + box.width() * deltas.dx;
    double cy = box.center_y() + box.height() * deltas.dy;
    double w = box.width() * std::exp(deltas.dw);
    double h = box.height() * std::exp(deltas.dh);
    return Box{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
}

} // namespace qar
