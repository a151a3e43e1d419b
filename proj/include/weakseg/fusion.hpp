#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "weakseg/raster.hpp"

namespace weakseg {

enum class DarknessNormalization { minmax, percentile_clip, global };

struct DarknessConfig {
    DarknessNormalization normalization = DarknessNormalization::percentile_clip;
    double clip_low = 1.0;   // percentile, percentile_clip mode only
    double clip_high = 99.0;
};

namespace detail {

inline double percentile(const std::vector<double>& sorted, double pct) {
    const auto n = sorted.size();
    const auto idx = static_cast<std::size_t>(
        std::lround(pct / 100.0 * static_cast<double>(n - 1)));
    return sorted[std::min(idx, n - 1)];
}

}  // namespace detail

/// Per-pixel darkness as crack probability: one minus the image brightness
/// mapped onto [0,1] by the configured normalization. Constant images (or a
/// degenerate clip range) produce a uniform 0.5 map.
inline ProbMap darkness_map(const GrayImage& image, const DarknessConfig& cfg) {
    if (cfg.clip_low >= cfg.clip_high)
        throw std::invalid_argument("darkness_map: clip_low must be < clip_high");
    if (image.size() == 0) return ProbMap(image.width(), image.height(), 0.0);

    double lo = 0.0, hi = 1.0;
    switch (cfg.normalization) {
        case DarknessNormalization::global:
            break;
        case DarknessNormalization::minmax: {
            const auto [mn, mx] = std::minmax_element(image.data().begin(), image.data().end());
            lo = *mn;
            hi = *mx;
            break;
        }
        case DarknessNormalization::percentile_clip: {
            std::vector<double> sorted = image.data();
            std::sort(sorted.begin(), sorted.end());
            lo = detail::percentile(sorted, cfg.clip_low);
            hi = detail::percentile(sorted, cfg.clip_high);
            break;
        }
    }
    ProbMap out(image.width(), image.height(), 0.0);
    if (hi <= lo) {
        for (auto& v : out.data()) v = 0.5;
        return out;
    }
    for (std::size_t i = 0; i < image.size(); ++i)
        out.data()[i] = 1.0 - std::clamp((image.data()[i] - lo) / (hi - lo), 0.0, 1.0);
    return out;
}

/// Pointwise product of the two branch outputs.
inline ProbMap fuse(const ProbMap& macro_map, const ProbMap& micro_map) {
    if (!macro_map.same_size(micro_map)) throw std::invalid_argument("fuse: dimension mismatch");
    ProbMap out = macro_map;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= micro_map.data()[i];
    return out;
}

/// mask(x) = 1 iff prob(x) > t.
inline BinaryMask binarize(const ProbMap& prob, double t) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("binarize: threshold outside [0,1]");
    BinaryMask out(prob.width(), prob.height(), 0);
    for (std::size_t i = 0; i < prob.size(); ++i) out.data()[i] = prob.data()[i] > t;
    return out;
}

}  // namespace weakseg
