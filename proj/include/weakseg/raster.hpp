#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace weakseg {

/// Row-major raster of values. All pipeline images are one of the aliases
/// below; pixels outside the raster are treated as background (zero) by
/// every neighborhood operation.
template <typename T>
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height),
          data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
        if (width < 0 || height < 0)
            throw std::invalid_argument("Raster: negative dimensions");
    }

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }
    bool empty_dims() const { return data_.empty(); }

    bool in_bounds(int x, int y) const {
        return x >= 0 && x < width_ && y >= 0 && y < height_;
    }

    T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Value at (x,y), or `outside` when out of bounds.
    T value_or(int x, int y, T outside) const {
        return in_bounds(x, y) ? at(x, y) : outside;
    }

    std::vector<T>& data() { return data_; }
    const std::vector<T>& data() const { return data_; }

    template <typename U>
    bool same_size(const Raster<U>& o) const {
        return width_ == o.width() && height_ == o.height();
    }

    friend bool operator==(const Raster& a, const Raster& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using GrayImage = Raster<double>;   // luminance in [0,1]
using ProbMap = Raster<double>;     // probabilities in [0,1]
using BinaryMask = Raster<std::uint8_t>;  // values in {0,1}

struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Ordered pixel path; consecutive points are 8-adjacent, and a closed
/// path wraps from the last point back to the first.
struct ContourPath {
    std::vector<Point> points;
    bool closed = false;
};

/// 8-connected foreground labeling. Label 0 is background; components are
/// numbered 1..count in row-major discovery order.
struct ComponentLabeling {
    Raster<int> labels;
    int count = 0;
};

namespace detail {

// Offsets of the 8-neighborhood in the clockwise order Zhang-Suen uses:
// N, NE, E, SE, S, SW, W, NW (screen coordinates, y grows downward).
inline constexpr std::array<Point, 8> kNeighbors8 = {
    Point{0, -1}, Point{1, -1}, Point{1, 0},  Point{1, 1},
    Point{0, 1},  Point{-1, 1}, Point{-1, 0}, Point{-1, -1}};

}  // namespace detail

inline std::size_t count_nonzero(const BinaryMask& m) {
    std::size_t n = 0;
    for (auto v : m.data()) n += (v != 0);
    return n;
}

/// n successive 8-neighborhood (full 3x3 structuring element) dilations.
inline BinaryMask dilate(const BinaryMask& mask, int n) {
    if (n < 0) throw std::invalid_argument("dilate: n must be >= 0");
    BinaryMask cur = mask;
    for (int iter = 0; iter < n; ++iter) {
        BinaryMask next(cur.width(), cur.height(), 0);
        for (int y = 0; y < cur.height(); ++y) {
            for (int x = 0; x < cur.width(); ++x) {
                std::uint8_t v = cur.at(x, y);
                if (!v) {
                    for (const auto& d : detail::kNeighbors8) {
                        if (cur.value_or(x + d.x, y + d.y, 0)) { v = 1; break; }
                    }
                }
                next.at(x, y) = v;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

inline ComponentLabeling connected_components(const BinaryMask& mask) {
    ComponentLabeling out;
    out.labels = Raster<int>(mask.width(), mask.height(), 0);
    std::vector<Point> queue;
    for (int sy = 0; sy < mask.height(); ++sy) {
        for (int sx = 0; sx < mask.width(); ++sx) {
            if (!mask.at(sx, sy) || out.labels.at(sx, sy) != 0) continue;
            const int label = ++out.count;
            queue.clear();
            queue.push_back({sx, sy});
            out.labels.at(sx, sy) = label;
            for (std::size_t head = 0; head < queue.size(); ++head) {
                const Point p = queue[head];
                for (const auto& d : detail::kNeighbors8) {
                    const int nx = p.x + d.x, ny = p.y + d.y;
                    if (mask.in_bounds(nx, ny) && mask.at(nx, ny) &&
                        out.labels.at(nx, ny) == 0) {
                        out.labels.at(nx, ny) = label;
                        queue.push_back({nx, ny});
                    }
                }
            }
        }
    }
    return out;
}

namespace detail {

inline bool zhang_suen_removable(const BinaryMask& m, int x, int y, bool second_pass) {
    // Neighbor ring p2..p9: N, NE, E, SE, S, SW, W, NW.
    std::array<int, 8> p;
    for (int i = 0; i < 8; ++i)
        p[i] = m.value_or(x + kNeighbors8[i].x, y + kNeighbors8[i].y, 0) ? 1 : 0;
    const int b = p[0] + p[1] + p[2] + p[3] + p[4] + p[5] + p[6] + p[7];
    if (b < 2 || b > 6) return false;
    int transitions = 0;
    for (int i = 0; i < 8; ++i) transitions += (p[i] == 0 && p[(i + 1) % 8] == 1);
    if (transitions != 1) return false;
    if (!second_pass)
        return (p[0] * p[2] * p[4] == 0) && (p[2] * p[4] * p[6] == 0);
    return (p[0] * p[2] * p[6] == 0) && (p[0] * p[4] * p[6] == 0);
}

}  // namespace detail

/// Zhang-Suen thinning to a 1-pixel-wide, 8-connected medial skeleton.
/// Plain Zhang-Suen erases 2x2 blocks entirely; to keep the guarantee that
/// every component leaves a non-empty skeleton, any component that would
/// vanish keeps its topmost-leftmost pixel.
inline BinaryMask skeletonize(const BinaryMask& mask) {
    const ComponentLabeling comps = connected_components(mask);
    BinaryMask skel = mask;
    std::vector<Point> marked;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int pass = 0; pass < 2; ++pass) {
            marked.clear();
            for (int y = 0; y < skel.height(); ++y)
                for (int x = 0; x < skel.width(); ++x)
                    if (skel.at(x, y) && detail::zhang_suen_removable(skel, x, y, pass == 1))
                        marked.push_back({x, y});
            for (const auto& p : marked) skel.at(p.x, p.y) = 0;
            changed = changed || !marked.empty();
        }
    }
    if (comps.count > 0) {
        std::vector<char> has_pixel(static_cast<std::size_t>(comps.count) + 1, 0);
        for (int y = 0; y < skel.height(); ++y)
            for (int x = 0; x < skel.width(); ++x)
                if (skel.at(x, y)) has_pixel[comps.labels.at(x, y)] = 1;
        std::vector<char> restored(has_pixel.size(), 0);
        for (int y = 0; y < mask.height(); ++y) {
            for (int x = 0; x < mask.width(); ++x) {
                const int label = comps.labels.at(x, y);
                if (label && !has_pixel[label] && !restored[label]) {
                    skel.at(x, y) = 1;  // first row-major pixel of the component
                    restored[label] = 1;
                }
            }
        }
    }
    return skel;
}

/// One closed path per 8-connected component, visiting the component's
/// outer boundary pixels in counterclockwise order (screen coordinates).
/// Border following after Suzuki-Abe: the trace ends when it stands on the
/// anchor pixel (the first neighbor found at the start) about to re-enter
/// the start, which bounds it to a single lap.
inline std::vector<ContourPath> outer_contours(const BinaryMask& mask) {
    const ComponentLabeling comps = connected_components(mask);
    std::vector<ContourPath> paths;
    paths.reserve(comps.count);
    std::vector<char> seen(static_cast<std::size_t>(comps.count) + 1, 0);

    // Counterclockwise neighbor order on screen (y down): W, SW, S, SE, E, NE, N, NW.
    static constexpr std::array<Point, 8> ccw = {
        Point{-1, 0}, Point{-1, 1}, Point{0, 1},  Point{1, 1},
        Point{1, 0},  Point{1, -1}, Point{0, -1}, Point{-1, -1}};
    // Anchor scan runs clockwise starting at W.
    static constexpr std::array<int, 8> cw_from_west = {0, 7, 6, 5, 4, 3, 2, 1};

    for (int sy = 0; sy < mask.height(); ++sy) {
        for (int sx = 0; sx < mask.width(); ++sx) {
            const int label = comps.labels.value_or(sx, sy, 0);
            if (!label || seen[label]) continue;
            seen[label] = 1;

            ContourPath path;
            path.closed = true;
            const Point start{sx, sy};
            auto is_fg = [&](Point p) { return comps.labels.value_or(p.x, p.y, 0) == label; };

            int anchor_dir = -1;
            for (int k : cw_from_west) {
                if (is_fg({sx + ccw[k].x, sy + ccw[k].y})) { anchor_dir = k; break; }
            }
            if (anchor_dir < 0) {  // isolated pixel
                path.points.push_back(start);
                paths.push_back(std::move(path));
                continue;
            }
            const Point anchor{sx + ccw[anchor_dir].x, sy + ccw[anchor_dir].y};

            auto dir_index = [&](Point from, Point to) {
                for (int i = 0; i < 8; ++i)
                    if (from.x + ccw[i].x == to.x && from.y + ccw[i].y == to.y) return i;
                return 0;
            };
            Point prev = anchor, cur = start;
            const std::size_t step_cap = 4 * count_nonzero(mask) + 8;
            while (path.points.size() < step_cap) {
                const int back = dir_index(cur, prev);
                Point next = cur;
                for (int k = 1; k <= 8; ++k) {
                    const Point q{cur.x + ccw[(back + k) % 8].x, cur.y + ccw[(back + k) % 8].y};
                    if (is_fg(q)) { next = q; break; }
                }
                path.points.push_back(cur);
                if (cur == anchor && next == start) break;
                prev = cur;
                cur = next;
            }
            paths.push_back(std::move(path));
        }
    }
    return paths;
}

/// All integer pixels of the line segment from a to b, inclusive.
inline std::vector<Point> bresenham_line(Point a, Point b) {
    std::vector<Point> out;
    int x = a.x, y = a.y;
    const int dx = std::abs(b.x - a.x), dy = -std::abs(b.y - a.y);
    const int sx = a.x < b.x ? 1 : -1, sy = a.y < b.y ? 1 : -1;
    int err = dx + dy;
    while (true) {
        out.push_back({x, y});
        if (x == b.x && y == b.y) break;
        const int e2 = 2 * err;
        if (e2 >= dy) { err += dy; x += sx; }
        if (e2 <= dx) { err += dx; y += sy; }
    }
    return out;
}

/// Path pixels plus every pixel whose center lies inside the polygon the
/// path describes (even-odd rule). Paths with fewer than 3 distinct points
/// rasterize to the path pixels alone.
inline BinaryMask fill_closed_path(const ContourPath& path, int width, int height) {
    BinaryMask out(width, height, 0);
    for (const auto& p : path.points) {
        if (!out.in_bounds(p.x, p.y))
            throw std::invalid_argument("fill_closed_path: point out of bounds");
        out.at(p.x, p.y) = 1;
    }
    std::vector<Point> distinct;
    for (const auto& p : path.points)
        if (std::find(distinct.begin(), distinct.end(), p) == distinct.end())
            distinct.push_back(p);
    if (distinct.size() < 3) return out;

    const auto& pts = path.points;
    const std::size_t n = pts.size();
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            if (out.at(x, y)) continue;
            bool inside = false;
            for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
                const Point& a = pts[i];
                const Point& b = pts[j];
                if ((a.y > y) != (b.y > y)) {
                    const double x_cross =
                        (static_cast<double>(b.x - a.x) * (y - a.y)) / (b.y - a.y) + a.x;
                    if (x < x_cross) inside = !inside;
                }
            }
            if (inside) out.at(x, y) = 1;
        }
    }
    return out;
}

}  // namespace weakseg
