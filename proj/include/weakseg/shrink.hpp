#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "weakseg/raster.hpp"

namespace weakseg {

struct ShrinkConfig {
    double delta = 0.2;        // required probability rise over the contour value
    int consecutive_hits = 2;  // rises in a row needed to stop the walk
    int max_steps = 0;         // walk-length cap; 0 = component diameter
};

/// Skeleton pixel closest to p in Euclidean distance; ties prefer smaller
/// y, then smaller x.
inline Point nearest_skeleton(Point p, const std::vector<Point>& skeleton) {
    if (skeleton.empty()) throw std::invalid_argument("nearest_skeleton: empty skeleton");
    Point best = skeleton.front();
    long best_d2 = -1;
    for (const auto& s : skeleton) {
        const long dx = s.x - p.x, dy = s.y - p.y;
        const long d2 = dx * dx + dy * dy;
        if (best_d2 < 0 || d2 < best_d2 ||
            (d2 == best_d2 && (s.y < best.y || (s.y == best.y && s.x < best.x)))) {
            best_d2 = d2;
            best = s;
        }
    }
    return best;
}

/// Walks the Bresenham line from p toward s (p itself excluded). A pixel
/// "hits" when its probability exceeds the probability at p by delta; the
/// walk stops at the first run of consecutive_hits hits and returns the
/// first pixel of that run. If no such run occurs before s (or before
/// max_steps pixels), returns p.
inline Point walk_and_stop(Point p, Point s, const ProbMap& m, const ShrinkConfig& cfg) {
    if (!m.in_bounds(p.x, p.y) || !m.in_bounds(s.x, s.y))
        throw std::invalid_argument("walk_and_stop: endpoint out of bounds");
    const double reference = m.at(p.x, p.y);
    const auto line = bresenham_line(p, s);
    const int needed = std::max(1, cfg.consecutive_hits);
    int run = 0;
    for (std::size_t i = 1; i < line.size(); ++i) {
        if (cfg.max_steps > 0 && static_cast<int>(i) > cfg.max_steps) break;
        if (m.at(line[i].x, line[i].y) > reference + cfg.delta) {
            if (++run == needed) return line[i - static_cast<std::size_t>(needed) + 1];
        } else {
            run = 0;
        }
    }
    return p;
}

namespace detail {

/// Shortest 8-connected path (BFS) inside `domain` from any seed pixel to
/// any target pixel; appends the path to `out`. Returns false when no
/// target is reachable. Deterministic: row-major seeding and scan order.
inline bool bridge_path(const BinaryMask& domain, const BinaryMask& seeds,
                        const BinaryMask& targets, BinaryMask& out) {
    const int w = domain.width(), h = domain.height();
    Raster<int> parent(w, h, -2);  // -2 unvisited, -1 root
    std::vector<Point> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (seeds.at(x, y)) {
                parent.at(x, y) = -1;
                queue.push_back({x, y});
            }
    for (std::size_t head = 0; head < queue.size(); ++head) {
        const Point p = queue[head];
        if (targets.at(p.x, p.y)) {
            Point cur = p;
            while (parent.at(cur.x, cur.y) != -1) {
                out.at(cur.x, cur.y) = 1;
                const int enc = parent.at(cur.x, cur.y);
                cur = {enc % w, enc / w};
            }
            return true;
        }
        for (const auto& d : detail::kNeighbors8) {
            const int nx = p.x + d.x, ny = p.y + d.y;
            if (domain.in_bounds(nx, ny) && domain.at(nx, ny) && parent.at(nx, ny) == -2) {
                parent.at(nx, ny) = p.y * w + p.x;
                queue.push_back({nx, ny});
            }
        }
    }
    return false;
}

}  // namespace detail

/// Shrinks one 8-connected region: every outer-contour pixel walks toward
/// its nearest skeleton pixel until the Myopic probability rises, the
/// stopped points are reconnected in contour order and filled, and the
/// result is clipped to the component. Components of fewer than 2 pixels
/// pass through unchanged.
inline BinaryMask shrink_component(const BinaryMask& component_mask, const ProbMap& m,
                                   const ShrinkConfig& cfg) {
    if (!component_mask.same_size(m))
        throw std::invalid_argument("shrink_component: dimension mismatch");
    const std::size_t area = count_nonzero(component_mask);
    if (area < 2) return component_mask;

    const auto contours = outer_contours(component_mask);
    if (contours.empty()) return component_mask;
    const ContourPath& contour = contours.front();

    const BinaryMask skel = skeletonize(component_mask);
    std::vector<Point> skeleton_points;
    int min_x = component_mask.width(), max_x = -1, min_y = component_mask.height(), max_y = -1;
    for (int y = 0; y < skel.height(); ++y)
        for (int x = 0; x < skel.width(); ++x) {
            if (skel.at(x, y)) skeleton_points.push_back({x, y});
            if (component_mask.at(x, y)) {
                min_x = std::min(min_x, x);
                max_x = std::max(max_x, x);
                min_y = std::min(min_y, y);
                max_y = std::max(max_y, y);
            }
        }
    if (skeleton_points.empty()) return component_mask;

    ShrinkConfig effective = cfg;
    if (effective.max_steps <= 0) {
        const double bw = max_x - min_x + 1, bh = max_y - min_y + 1;
        effective.max_steps = static_cast<int>(std::ceil(std::sqrt(bw * bw + bh * bh)));
    }

    // Successful stops back up one pixel toward the contour, so the stop
    // pixel itself (often the first crack pixel of the cross-section) stays
    // inside the filled region. Points remain on the p -> s segment.
    std::vector<Point> refined_points;
    refined_points.reserve(contour.points.size());
    for (const auto& p : contour.points) {
        const Point target = nearest_skeleton(p, skeleton_points);
        Point stop = walk_and_stop(p, target, m, effective);
        if (!(stop == p)) {
            const auto line = bresenham_line(p, target);
            for (std::size_t k = 1; k < line.size(); ++k)
                if (line[k] == stop) { stop = line[k - 1]; break; }
        }
        refined_points.push_back(stop);
    }

    // Reconnect the stopped points in contour order, closing the loop.
    ContourPath loop;
    loop.closed = true;
    for (std::size_t i = 0; i < refined_points.size(); ++i) {
        const Point a = refined_points[i];
        const Point b = refined_points[(i + 1) % refined_points.size()];
        for (const auto& q : bresenham_line(a, b))
            if (loop.points.empty() || !(loop.points.back() == q)) loop.points.push_back(q);
    }

    BinaryMask refined = fill_closed_path(loop, component_mask.width(), component_mask.height());
    for (std::size_t i = 0; i < refined.size(); ++i)
        refined.data()[i] = refined.data()[i] && component_mask.data()[i];
    if (count_nonzero(refined) == 0) return component_mask;

    // Clipping a loop that cut across a concavity can split the result;
    // reconnect the pieces along shortest paths inside the component.
    for (;;) {
        const ComponentLabeling pieces = connected_components(refined);
        if (pieces.count <= 1) break;
        BinaryMask seeds(refined.width(), refined.height(), 0);
        BinaryMask targets(refined.width(), refined.height(), 0);
        for (int y = 0; y < refined.height(); ++y)
            for (int x = 0; x < refined.width(); ++x) {
                if (pieces.labels.at(x, y) == 1) seeds.at(x, y) = 1;
                if (pieces.labels.at(x, y) > 1) targets.at(x, y) = 1;
            }
        if (!detail::bridge_path(component_mask, seeds, targets, refined)) break;
    }

    // The refined region must keep hold of the medial line it shrank toward.
    bool touches_skeleton = false;
    for (const auto& s : skeleton_points)
        if (refined.at(s.x, s.y)) { touches_skeleton = true; break; }
    if (!touches_skeleton)
        detail::bridge_path(component_mask, refined, skel, refined);

    return refined;
}

/// Applies shrink_component to every 8-connected component of L
/// independently and unions the results. The output is contained in L and
/// preserves L's component count.
inline BinaryMask refine_annotation(const BinaryMask& lq, const ProbMap& m,
                                    const ShrinkConfig& cfg) {
    if (!lq.same_size(m)) throw std::invalid_argument("refine_annotation: dimension mismatch");
    const ComponentLabeling comps = connected_components(lq);
    BinaryMask out(lq.width(), lq.height(), 0);
    for (int label = 1; label <= comps.count; ++label) {
        BinaryMask component(lq.width(), lq.height(), 0);
        for (std::size_t i = 0; i < lq.size(); ++i)
            component.data()[i] = comps.labels.data()[i] == label;
        const BinaryMask refined = shrink_component(component, m, cfg);
        for (std::size_t i = 0; i < out.size(); ++i)
            out.data()[i] = out.data()[i] || refined.data()[i];
    }
    return out;
}

}  // namespace weakseg
