#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakseg/binio.hpp"
#include "weakseg/raster.hpp"
#include "weakseg/rng.hpp"

namespace weakseg {

/// A three-layer CNN whose total receptive field is exactly 3x3: one 3x3
/// convolution followed by two 1x1 convolutions. The tight field keeps the
/// model blind to whether a pixel merely lies near a dark structure, which
/// is what makes it reject over-drawn annotation borders.
///
/// Hidden activations are ReLU; the output is a per-pixel sigmoid.
struct MyopicParams {
    int c1 = 16;
    int c2 = 16;
    std::vector<double> conv1_w;  // c1 x 9, kernel row-major (dy,dx in -1..1)
    std::vector<double> conv1_b;  // c1
    std::vector<double> conv2_w;  // c2 x c1
    std::vector<double> conv2_b;  // c2
    std::vector<double> conv3_w;  // c2
    double conv3_b = 0.0;

    std::size_t parameter_count() const {
        return conv1_w.size() + conv1_b.size() + conv2_w.size() + conv2_b.size() +
               conv3_w.size() + 1;
    }
};

/// Pointers to every parameter in declaration order; shared by the SGD
/// update, finite-difference checks, and serialization.
inline std::vector<double*> parameter_view(MyopicParams& p) {
    std::vector<double*> out;
    out.reserve(p.parameter_count());
    for (auto& v : p.conv1_w) out.push_back(&v);
    for (auto& v : p.conv1_b) out.push_back(&v);
    for (auto& v : p.conv2_w) out.push_back(&v);
    for (auto& v : p.conv2_b) out.push_back(&v);
    for (auto& v : p.conv3_w) out.push_back(&v);
    out.push_back(&p.conv3_b);
    return out;
}

struct MyopicTrainConfig {
    int c1 = 16;
    int c2 = 16;
    double learning_rate = 0.05;
    double momentum = 0.9;
    int epochs = 30;
    double q = 0.9;  // keep fraction of the ignore conditions
    std::uint64_t seed = 0;
};

/// Pixel index sets the modified cross-entropy is restricted to: H keeps
/// the top-q fraction of annotated-crack pixels by predicted probability,
/// B the bottom-q fraction of annotated-non-crack pixels. Ties break by
/// ascending pixel index.
struct IgnoreSets {
    std::vector<std::uint32_t> h;
    std::vector<std::uint32_t> b;
    double q = 0.9;
};

namespace detail {

constexpr double kProbEps = 1e-7;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double clamp_prob(double p) {
    return std::clamp(p, kProbEps, 1.0 - kProbEps);
}

/// ceil(q*n) with a guard against floating-point carry-over
/// (e.g. 0.9 * 10 evaluating just above 9).
inline std::size_t keep_count(double q, std::size_t n) {
    const double raw = q * static_cast<double>(n);
    auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
    return std::min(k, n);
}

}  // namespace detail

inline MyopicParams init_myopic(const MyopicTrainConfig& cfg) {
    if (cfg.c1 < 1 || cfg.c2 < 1)
        throw std::invalid_argument("init_myopic: channel counts must be >= 1");
    MyopicParams p;
    p.c1 = cfg.c1;
    p.c2 = cfg.c2;
    p.conv1_w.resize(static_cast<std::size_t>(p.c1) * 9);
    p.conv1_b.assign(p.c1, 0.0);
    p.conv2_w.resize(static_cast<std::size_t>(p.c2) * p.c1);
    p.conv2_b.assign(p.c2, 0.0);
    p.conv3_w.resize(p.c2);
    Rng rng(cfg.seed);
    const double bound1 = std::sqrt(6.0 / 9.0);
    const double bound2 = std::sqrt(6.0 / p.c1);
    const double bound3 = std::sqrt(6.0 / p.c2);
    for (auto& w : p.conv1_w) w = rng.uniform(-bound1, bound1);
    for (auto& w : p.conv2_w) w = rng.uniform(-bound2, bound2);
    for (auto& w : p.conv3_w) w = rng.uniform(-bound3, bound3);
    return p;
}

/// Per-pixel crack probability; same dimensions as the input. The 3x3 layer
/// uses replicate padding, so the value at (x,y) depends only on the 3x3
/// neighborhood of (x,y).
inline ProbMap myopic_forward(const MyopicParams& params, const GrayImage& image) {
    const int w = image.width(), h = image.height();
    ProbMap out(w, h, 0.0);
    std::vector<double> h1(params.c1), h2(params.c2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < params.c1; ++c) {
                double z = params.conv1_b[c];
                const double* kw = &params.conv1_w[static_cast<std::size_t>(c) * 9];
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = std::clamp(y + ky - 1, 0, h - 1);
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sx = std::clamp(x + kx - 1, 0, w - 1);
                        z += kw[ky * 3 + kx] * image.at(sx, sy);
                    }
                }
                h1[c] = z > 0.0 ? z : 0.0;
            }
            for (int d = 0; d < params.c2; ++d) {
                double z = params.conv2_b[d];
                const double* kw = &params.conv2_w[static_cast<std::size_t>(d) * params.c1];
                for (int c = 0; c < params.c1; ++c) z += kw[c] * h1[c];
                h2[d] = z > 0.0 ? z : 0.0;
            }
            double z3 = params.conv3_b;
            for (int d = 0; d < params.c2; ++d) z3 += params.conv3_w[d] * h2[d];
            out.at(x, y) = detail::sigmoid(z3);
        }
    }
    return out;
}

/// Distance of the hidden pre-activations from the ReLU kink and the
/// largest output logit. Finite-difference checks use this to pick
/// instances where the loss is smooth inside the probe step.
struct MyopicActivationStats {
    double min_abs_preact = std::numeric_limits<double>::infinity();
    double max_abs_logit = 0.0;
};

inline MyopicActivationStats myopic_activation_stats(const MyopicParams& params,
                                                     const GrayImage& image) {
    MyopicActivationStats stats;
    const int w = image.width(), h = image.height();
    std::vector<double> h1(params.c1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < params.c1; ++c) {
                double z = params.conv1_b[c];
                const double* kw = &params.conv1_w[static_cast<std::size_t>(c) * 9];
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = std::clamp(y + ky - 1, 0, h - 1);
                    for (int kx = 0; kx < 3; ++kx)
                        z += kw[ky * 3 + kx] * image.at(std::clamp(x + kx - 1, 0, w - 1), sy);
                }
                stats.min_abs_preact = std::min(stats.min_abs_preact, std::abs(z));
                h1[c] = z > 0.0 ? z : 0.0;
            }
            double z3 = params.conv3_b;
            for (int d = 0; d < params.c2; ++d) {
                double z = params.conv2_b[d];
                const double* kw = &params.conv2_w[static_cast<std::size_t>(d) * params.c1];
                for (int c = 0; c < params.c1; ++c) z += kw[c] * h1[c];
                stats.min_abs_preact = std::min(stats.min_abs_preact, std::abs(z));
                z3 += params.conv3_w[d] * (z > 0.0 ? z : 0.0);
            }
            stats.max_abs_logit = std::max(stats.max_abs_logit, std::abs(z3));
        }
    }
    return stats;
}

inline IgnoreSets ignore_sets(const ProbMap& probmap, const BinaryMask& lq, double q) {
    if (!probmap.same_size(lq)) throw std::invalid_argument("ignore_sets: dimension mismatch");
    if (!(q > 0.0 && q <= 1.0)) throw std::invalid_argument("ignore_sets: q must be in (0,1]");
    std::vector<std::pair<double, std::uint32_t>> crack, noncrack;
    for (std::size_t i = 0; i < lq.size(); ++i) {
        const auto entry = std::make_pair(probmap.data()[i], static_cast<std::uint32_t>(i));
        if (lq.data()[i])
            crack.push_back(entry);
        else
            noncrack.push_back(entry);
    }
    // H: highest probabilities first; B: lowest first. Equal probabilities
    // prefer the smaller pixel index.
    std::sort(crack.begin(), crack.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::sort(noncrack.begin(), noncrack.end());
    IgnoreSets sets;
    sets.q = q;
    const std::size_t keep_h = detail::keep_count(q, crack.size());
    const std::size_t keep_b = detail::keep_count(q, noncrack.size());
    sets.h.reserve(keep_h);
    sets.b.reserve(keep_b);
    for (std::size_t i = 0; i < keep_h; ++i) sets.h.push_back(crack[i].second);
    for (std::size_t i = 0; i < keep_b; ++i) sets.b.push_back(noncrack[i].second);
    std::sort(sets.h.begin(), sets.h.end());
    std::sort(sets.b.begin(), sets.b.end());
    return sets;
}

/// Cross-entropy restricted to the kept pixel sets, divided by |H|+|B| for
/// scale stability. Probabilities are clamped to [eps, 1-eps], eps = 1e-7.
inline double ignore_ce_loss(const ProbMap& probmap, const IgnoreSets& sets) {
    const std::size_t denom = sets.h.size() + sets.b.size();
    if (denom == 0) throw std::invalid_argument("ignore_ce_loss: both pixel sets are empty");
    double loss = 0.0;
    for (auto i : sets.h) loss -= std::log(detail::clamp_prob(probmap.data()[i]));
    for (auto i : sets.b) loss -= std::log(1.0 - detail::clamp_prob(probmap.data()[i]));
    return loss / static_cast<double>(denom);
}

namespace detail {

/// Loss and analytic parameter gradients of ignore_ce_loss over a fixed
/// pixel-set selection. One full forward/backward pass.
inline double myopic_loss_gradient(const MyopicParams& params, const GrayImage& image,
                                   const IgnoreSets& sets, MyopicParams& grads) {
    const int w = image.width(), h = image.height();
    const std::size_t denom = sets.h.size() + sets.b.size();
    if (denom == 0) throw std::invalid_argument("myopic_loss_gradient: empty pixel sets");

    grads = params;
    for (double* g : parameter_view(grads)) *g = 0.0;

    // dL/d(logit) per pixel; zero outside H and B and where the clamp is active.
    const ProbMap prob = myopic_forward(params, image);
    Raster<double> dlogit(w, h, 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(denom);
    for (auto i : sets.h) {
        const double p = prob.data()[i];
        const double pc = clamp_prob(p);
        loss -= std::log(pc) * inv;
        if (p > kProbEps && p < 1.0 - kProbEps)
            dlogit.data()[i] = -(1.0 - p) * inv;  // d(-log p)/dz = -(1-p)
    }
    for (auto i : sets.b) {
        const double p = prob.data()[i];
        const double pc = clamp_prob(p);
        loss -= std::log(1.0 - pc) * inv;
        if (p > kProbEps && p < 1.0 - kProbEps)
            dlogit.data()[i] = p * inv;  // d(-log(1-p))/dz = p
    }

    std::vector<double> h1(params.c1), z2(params.c2), h2(params.c2);
    std::vector<double> d2(params.c2), d1(params.c1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double dz3 = dlogit.at(x, y);
            if (dz3 == 0.0) continue;
            // Recompute this pixel's activations (cheaper than storing all).
            for (int c = 0; c < params.c1; ++c) {
                double z = params.conv1_b[c];
                const double* kw = &params.conv1_w[static_cast<std::size_t>(c) * 9];
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = std::clamp(y + ky - 1, 0, h - 1);
                    for (int kx = 0; kx < 3; ++kx)
                        z += kw[ky * 3 + kx] * image.at(std::clamp(x + kx - 1, 0, w - 1), sy);
                }
                d1[c] = z;  // stash pre-activation
                h1[c] = z > 0.0 ? z : 0.0;
            }
            for (int d = 0; d < params.c2; ++d) {
                double z = params.conv2_b[d];
                const double* kw = &params.conv2_w[static_cast<std::size_t>(d) * params.c1];
                for (int c = 0; c < params.c1; ++c) z += kw[c] * h1[c];
                z2[d] = z;
                h2[d] = z > 0.0 ? z : 0.0;
            }
            for (int d = 0; d < params.c2; ++d) {
                grads.conv3_w[d] += dz3 * h2[d];
                d2[d] = dz3 * params.conv3_w[d] * (z2[d] > 0.0 ? 1.0 : 0.0);
            }
            grads.conv3_b += dz3;
            for (int d = 0; d < params.c2; ++d) {
                if (d2[d] == 0.0) continue;
                double* gw = &grads.conv2_w[static_cast<std::size_t>(d) * params.c1];
                for (int c = 0; c < params.c1; ++c) gw[c] += d2[d] * h1[c];
                grads.conv2_b[d] += d2[d];
            }
            for (int c = 0; c < params.c1; ++c) {
                double acc = 0.0;
                for (int d = 0; d < params.c2; ++d)
                    acc += d2[d] * params.conv2_w[static_cast<std::size_t>(d) * params.c1 + c];
                const double dz1 = acc * (d1[c] > 0.0 ? 1.0 : 0.0);
                if (dz1 == 0.0) continue;
                double* gw = &grads.conv1_w[static_cast<std::size_t>(c) * 9];
                for (int ky = 0; ky < 3; ++ky) {
                    const int sy = std::clamp(y + ky - 1, 0, h - 1);
                    for (int kx = 0; kx < 3; ++kx)
                        gw[ky * 3 + kx] += dz1 * image.at(std::clamp(x + kx - 1, 0, w - 1), sy);
                }
                grads.conv1_b[c] += dz1;
            }
        }
    }
    return loss;
}

}  // namespace detail

/// Trains on full-image passes with SGD + momentum. The kept pixel sets are
/// recomputed from the current probabilities on every image pass.
inline MyopicParams train_myopic(const std::vector<GrayImage>& images,
                                 const std::vector<BinaryMask>& lq_masks,
                                 const MyopicTrainConfig& cfg) {
    if (images.empty()) throw std::invalid_argument("train_myopic: empty dataset");
    if (images.size() != lq_masks.size())
        throw std::invalid_argument("train_myopic: image/mask count mismatch");
    for (std::size_t i = 0; i < images.size(); ++i)
        if (images[i].width() != lq_masks[i].width() ||
            images[i].height() != lq_masks[i].height())
            throw std::invalid_argument("train_myopic: image/mask dimension mismatch");
    if (cfg.learning_rate < 0.0)
        throw std::invalid_argument("train_myopic: negative learning rate");

    MyopicParams params = init_myopic(cfg);
    MyopicParams velocity = params, grads = params;
    for (double* v : parameter_view(velocity)) *v = 0.0;

    auto pv = parameter_view(params);
    auto vv = parameter_view(velocity);
    auto gv = parameter_view(grads);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < images.size(); ++i) {
            const ProbMap prob = myopic_forward(params, images[i]);
            const IgnoreSets sets = ignore_sets(prob, lq_masks[i], cfg.q);
            detail::myopic_loss_gradient(params, images[i], sets, grads);
            for (std::size_t k = 0; k < pv.size(); ++k) {
                *vv[k] = cfg.momentum * *vv[k] - cfg.learning_rate * *gv[k];
                *pv[k] += *vv[k];
            }
        }
    }
    return params;
}

/// Max relative error between analytic gradients and central finite
/// differences of the restricted cross-entropy, with the pixel sets frozen
/// at the initial forward pass. Step 1e-5, double precision.
inline double grad_check(const MyopicParams& params, const GrayImage& image,
                         const BinaryMask& lq, double q) {
    const IgnoreSets sets = ignore_sets(myopic_forward(params, image), lq, q);
    MyopicParams work = params, grads = params;
    detail::myopic_loss_gradient(work, image, sets, grads);

    auto wv = parameter_view(work);
    auto gv = parameter_view(grads);
    const double step = 1e-5;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < wv.size(); ++k) {
        const double saved = *wv[k];
        *wv[k] = saved + step;
        const double lp = ignore_ce_loss(myopic_forward(work, image), sets);
        *wv[k] = saved - step;
        const double lm = ignore_ce_loss(myopic_forward(work, image), sets);
        *wv[k] = saved;
        const double fd = (lp - lm) / (2.0 * step);
        const double analytic = *gv[k];
        const double rel = std::abs(analytic - fd) /
                           std::max({std::abs(analytic), std::abs(fd), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

// --- parameter serialization -----------------------------------------------
// Flat little-endian binary: magic "MYO1", u32 c1, u32 c2, then every weight
// in declaration order as 32-bit floats.

inline void save_myopic(const MyopicParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error(io_error::Kind::open, "cannot open for write: " + path);
    os.write("MYO1", 4);
    binio::write_u32le(os, static_cast<std::uint32_t>(params.c1));
    binio::write_u32le(os, static_cast<std::uint32_t>(params.c2));
    MyopicParams copy = params;
    for (double* p : parameter_view(copy)) binio::write_f32le(os, static_cast<float>(*p));
    if (!os) throw io_error(io_error::Kind::open, "write failed: " + path);
}

inline MyopicParams load_myopic(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error(io_error::Kind::open, "cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw io_error(io_error::Kind::truncated, "truncated header: " + path);
    if (std::string(magic, 4) != "MYO1")
        throw io_error(io_error::Kind::format, "bad magic in " + path);
    std::uint32_t c1 = 0, c2 = 0;
    if (!binio::read_u32le(is, c1) || !binio::read_u32le(is, c2))
        throw io_error(io_error::Kind::truncated, "truncated header: " + path);
    if (c1 == 0 || c2 == 0 || c1 > 65536 || c2 > 65536)
        throw io_error(io_error::Kind::dimension, "implausible channel counts in " + path);
    MyopicTrainConfig shape;
    shape.c1 = static_cast<int>(c1);
    shape.c2 = static_cast<int>(c2);
    MyopicParams params = init_myopic(shape);
    for (double* p : parameter_view(params)) {
        float v = 0.0f;
        if (!binio::read_f32le(is, v))
            throw io_error(io_error::Kind::truncated, "truncated weights: " + path);
        *p = static_cast<double>(v);
    }
    return params;
}

}  // namespace weakseg
