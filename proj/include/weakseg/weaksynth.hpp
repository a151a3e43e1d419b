#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "weakseg/raster.hpp"
#include "weakseg/rng.hpp"

namespace weakseg {

/// Parameters of the weak-annotation synthesis procedure.
struct SynthConfig {
    int n_dil = 4;               // dilations applied before deformation
    double sigma = 12.0;         // Gaussian stddev of the displacement field
    double alpha_affine = 0.2;   // corner jitter of the affine component, pixels
    double r_low = 0.925;        // recall acceptance band
    double r_high = 0.975;
    double alpha_min = 10.0;     // initial deformation search bracket
    double alpha_max = 10000.0;
    int max_iters = 50;
    std::uint64_t seed = 0;
};

struct SynthResult {
    BinaryMask weak_mask;
    double achieved_recall = 0.0;
    double alpha_used = 0.0;
    int iterations = 0;
    bool converged = false;  // true iff achieved_recall is inside [r_low, r_high]
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += k[i + radius];
    }
    for (auto& v : k) v /= sum;
    return k;
}

/// Separable Gaussian smoothing; borders clamp to the edge sample.
inline Raster<double> gaussian_smooth(const Raster<double>& in, double sigma) {
    const auto kernel = gaussian_kernel(sigma);
    const int radius = static_cast<int>(kernel.size() / 2);
    const int w = in.width(), h = in.height();
    Raster<double> tmp(w, h, 0.0), out(w, h, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * in.at(std::clamp(x + i, 0, w - 1), y);
            tmp.at(x, y) = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
            out.at(x, y) = acc;
        }
    }
    return out;
}

/// Frozen random displacement data for one sample: a smoothed unit field
/// plus raw affine corner jitters. The deformation magnitude alpha scales
/// the elastic part only, so one field supports the whole alpha search.
struct ElasticField {
    Raster<double> dx, dy;     // smoothed uniform[-1,1] fields
    double jitter[6] = {};     // raw corner jitters in [-1,1]: (x0,y0,x1,y1,x2,y2)

    ElasticField(int width, int height, double sigma, Rng& rng) {
        Raster<double> raw_x(width, height, 0.0), raw_y(width, height, 0.0);
        for (auto& v : raw_x.data()) v = rng.uniform(-1.0, 1.0);
        for (auto& v : raw_y.data()) v = rng.uniform(-1.0, 1.0);
        dx = gaussian_smooth(raw_x, sigma);
        dy = gaussian_smooth(raw_y, sigma);
        for (double& j : jitter) j = rng.uniform(-1.0, 1.0);
    }

    BinaryMask apply(const BinaryMask& mask, double alpha, double alpha_affine) const {
        const int w = mask.width(), h = mask.height();
        // Affine map fixed by the control points (0,0), (w-1,0), (0,h-1)
        // displaced by alpha_affine * jitter.
        const double j0x = alpha_affine * jitter[0], j0y = alpha_affine * jitter[1];
        const double j1x = alpha_affine * jitter[2], j1y = alpha_affine * jitter[3];
        const double j2x = alpha_affine * jitter[4], j2y = alpha_affine * jitter[5];
        const double sx = w > 1 ? (j1x - j0x) / (w - 1) : 0.0;
        const double sy = h > 1 ? (j2x - j0x) / (h - 1) : 0.0;
        const double tx = w > 1 ? (j1y - j0y) / (w - 1) : 0.0;
        const double ty = h > 1 ? (j2y - j0y) / (h - 1) : 0.0;
        BinaryMask out(w, h, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double src_x = (1.0 + sx) * x + sy * y + j0x + alpha * dx.at(x, y);
                const double src_y = tx * x + (1.0 + ty) * y + j0y + alpha * dy.at(x, y);
                const int ix = static_cast<int>(std::lround(src_x));
                const int iy = static_cast<int>(std::lround(src_y));
                out.at(x, y) = mask.value_or(ix, iy, 0);
            }
        }
        return out;
    }
};

}  // namespace detail

/// Warps a mask by a random smooth displacement field of magnitude alpha,
/// composed with a small random affine map. Nearest-neighbor sampling keeps
/// the output binary; fixed seed gives a fixed result.
inline BinaryMask elastic_transform(const BinaryMask& mask, double alpha, double sigma,
                                    double alpha_affine, std::uint64_t seed) {
    if (alpha < 0.0) throw std::invalid_argument("elastic_transform: alpha must be >= 0");
    if (sigma <= 0.0) throw std::invalid_argument("elastic_transform: sigma must be > 0");
    Rng rng(seed);
    const detail::ElasticField field(mask.width(), mask.height(), sigma, rng);
    return field.apply(mask, alpha, alpha_affine);
}

/// |candidate AND precise| / |precise|; 1.0 when precise is empty.
inline double recall(const BinaryMask& candidate, const BinaryMask& precise) {
    if (!candidate.same_size(precise))
        throw std::invalid_argument("recall: dimension mismatch");
    std::size_t hit = 0, total = 0;
    for (std::size_t i = 0; i < precise.size(); ++i) {
        if (precise.data()[i]) {
            ++total;
            hit += (candidate.data()[i] != 0);
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(total);
}

/// Dilates the precise mask n_dil times, then searches for a deformation
/// magnitude whose warped result has recall against the precise mask inside
/// [r_low, r_high]. The magnitude is drawn uniformly from a bracket that
/// shrinks monotonically: recall too low pulls the upper bound down to the
/// drawn value, recall too high pushes the lower bound up. The displacement
/// field is frozen per sample and scaled by the drawn magnitude.
///
/// On budget exhaustion the result carries the best candidate seen (closest
/// to the recall band) with converged = false.
inline SynthResult synthesize_weak(const BinaryMask& precise, const SynthConfig& cfg) {
    if (count_nonzero(precise) == 0)
        throw std::invalid_argument("synthesize_weak: precise mask is empty");
    if (!(cfg.r_low > 0.0 && cfg.r_low < cfg.r_high && cfg.r_high <= 1.0))
        throw std::invalid_argument("synthesize_weak: bad recall bounds");
    if (cfg.alpha_min >= cfg.alpha_max)
        throw std::invalid_argument("synthesize_weak: bad alpha range");
    if (cfg.sigma <= 0.0) throw std::invalid_argument("synthesize_weak: sigma must be > 0");

    const BinaryMask dilated = dilate(precise, cfg.n_dil);
    Rng rng(cfg.seed);
    const detail::ElasticField field(precise.width(), precise.height(), cfg.sigma, rng);

    double lo = cfg.alpha_min, hi = cfg.alpha_max;
    SynthResult best;
    double best_dist = -1.0;
    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        const double alpha = rng.uniform(lo, hi);
        BinaryMask candidate = field.apply(dilated, alpha, cfg.alpha_affine);
        const double r = recall(candidate, precise);
        if (r >= cfg.r_low && r <= cfg.r_high) {
            return {std::move(candidate), r, alpha, iter, true};
        }
        const double dist = r < cfg.r_low ? cfg.r_low - r : r - cfg.r_high;
        if (best_dist < 0.0 || dist < best_dist) {
            best_dist = dist;
            best = {std::move(candidate), r, alpha, iter, false};
        }
        if (r < cfg.r_low)
            hi = alpha;
        else
            lo = alpha;
    }
    best.iterations = cfg.max_iters;
    return best;
}

/// Procedural toy benchmark: dark thin polyline "cracks" over a smoothed
/// noise background. A desk-scale stand-in for real crack imagery.
struct ToyConfig {
    int image_size = 128;
    int crack_count_min = 1;
    int crack_count_max = 2;
    int crack_width_min = 3;
    int crack_width_max = 5;
    double crack_brightness_mean = 0.20;
    double crack_brightness_stddev = 0.06;
    double background_brightness_mean = 0.60;
    double background_brightness_stddev = 0.11;
    // Short stretches of each crack fade toward the background, rising by
    // this fraction of the crack-to-background gap. Faded episodes are what
    // darkness thresholds and purely local models lose.
    double crack_fade = 0.85;
    double crack_fade_rate = 0.12;  // per-segment chance an episode starts
    // Brightness rises toward the crack edge by this fraction of the gap at
    // the rim (cracks shade off instead of ending abruptly).
    double crack_edge_lightening = 0.35;
    double noise_texture_scale = 2.0;
    std::uint64_t seed = 0;

    static ToyConfig dark_cracks() { return {}; }

    /// Inverted-contrast preset: cracks brighter than the background.
    static ToyConfig bright_cracks() {
        ToyConfig cfg;
        cfg.crack_brightness_mean = 0.90;
        cfg.background_brightness_mean = 0.50;
        return cfg;
    }
};

namespace detail {

inline void stamp_disk(BinaryMask& mask, Raster<double>& base, int cx, int cy, int width_px,
                       double center_brightness, double edge_delta) {
    const double radius = width_px / 2.0;
    const int r = static_cast<int>(std::ceil(radius));
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            const double d2 = dx * dx + dy * dy;
            if (d2 > radius * radius || !mask.in_bounds(cx + dx, cy + dy)) continue;
            const double value = center_brightness + edge_delta * (d2 / (radius * radius));
            mask.at(cx + dx, cy + dy) = 1;
            // Overlapping stamps keep the darkest (most crack-like) value.
            if (!base.at(cx + dx, cy + dy) || value < base.at(cx + dx, cy + dy))
                base.at(cx + dx, cy + dy) = value;
        }
}

}  // namespace detail

/// Generates the index-th toy sample: (image, exact crack mask). Pure in
/// (cfg.seed, index).
inline std::pair<GrayImage, BinaryMask> gen_toy_sample(const ToyConfig& cfg, std::uint64_t index) {
    if (cfg.image_size < 8) throw std::invalid_argument("gen_toy_sample: image_size too small");
    const int n = cfg.image_size;
    Rng rng(derive_seed(cfg.seed, index));

    // Background texture: white noise smoothed to the configured scale and
    // re-standardized to the configured mean/stddev.
    Raster<double> noise(n, n, 0.0);
    for (auto& v : noise.data()) v = rng.normal();
    Raster<double> smooth = detail::gaussian_smooth(noise, cfg.noise_texture_scale);
    double mean = 0.0;
    for (auto v : smooth.data()) mean += v;
    mean /= static_cast<double>(smooth.size());
    double var = 0.0;
    for (auto v : smooth.data()) var += (v - mean) * (v - mean);
    var /= static_cast<double>(smooth.size());
    const double scale = var > 0.0 ? cfg.background_brightness_stddev / std::sqrt(var) : 0.0;

    GrayImage image(n, n, 0.0);
    for (std::size_t i = 0; i < image.size(); ++i)
        image.data()[i] = std::clamp(
            cfg.background_brightness_mean + scale * (smooth.data()[i] - mean), 0.0, 1.0);

    // Cracks: random-walk polylines of fixed per-crack width. A bounded
    // random walk fades each crack's base brightness toward the background
    // and back along its length.
    BinaryMask mask(n, n, 0);
    Raster<double> crack_base(n, n, 0.0);
    const double gap = cfg.background_brightness_mean - cfg.crack_brightness_mean;
    const int crack_count =
        static_cast<int>(rng.uniform_int(cfg.crack_count_min, cfg.crack_count_max));
    for (int c = 0; c < crack_count; ++c) {
        const int width_px =
            static_cast<int>(rng.uniform_int(cfg.crack_width_min, cfg.crack_width_max));
        double x = rng.uniform(0.1 * n, 0.9 * n);
        double y = rng.uniform(0.1 * n, 0.9 * n);
        double angle = rng.uniform(0.0, 6.283185307179586);
        const double total_length = rng.uniform(1.0, 1.6) * n;
        // Two or three faded episodes per crack, at random positions.
        const int episode_count = static_cast<int>(rng.uniform_int(3, 4));
        std::vector<std::pair<double, double>> episodes;  // (start, end) along length
        for (int e = 0; e < episode_count; ++e) {
            const double at = rng.uniform(0.05, 0.95) * total_length;
            episodes.push_back({at, at + rng.uniform(8.0, 16.0)});
        }
        const double episode_fade = rng.uniform(0.75, 1.0);
        double traveled = 0.0;
        double remaining = total_length;
        while (remaining > 0.0) {
            const double seg = rng.uniform(4.0, 9.0);
            angle += rng.normal(0.0, 0.25);
            bool in_episode = false;
            for (const auto& [lo, hi] : episodes)
                if (traveled >= lo && traveled < hi) { in_episode = true; break; }
            traveled += seg;
            const double fade = in_episode ? episode_fade : 0.0;
            const double base =
                cfg.crack_brightness_mean + fade * cfg.crack_fade * gap;
            const double edge_delta = cfg.crack_edge_lightening * gap;
            const double nx = x + seg * std::cos(angle);
            const double ny = y + seg * std::sin(angle);
            const auto line = bresenham_line(
                {static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))},
                {static_cast<int>(std::lround(nx)), static_cast<int>(std::lround(ny))});
            for (const auto& p : line)
                detail::stamp_disk(mask, crack_base, p.x, p.y, width_px, base, edge_delta);
            x = nx;
            y = ny;
            remaining -= seg;
            if (x < 0 || x >= n || y < 0 || y >= n) break;  // crack leaves the frame
        }
    }

    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            if (mask.at(x, y))
                image.at(x, y) = std::clamp(
                    crack_base.at(x, y) + rng.normal(0.0, cfg.crack_brightness_stddev), 0.0, 1.0);

    return {std::move(image), std::move(mask)};
}

}  // namespace weakseg
