#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "weakseg/binio.hpp"
#include "weakseg/myopic.hpp"  // sigmoid/clamp helpers, io_error
#include "weakseg/raster.hpp"
#include "weakseg/rng.hpp"

namespace weakseg {

/// Small fully-convolutional segmentation net: seven 3x3 convolution
/// layers, six filters each (one on the last), strides 1,2,1,2,1,1,1.
/// Logits come out at 1/4 resolution and are bilinearly upsampled back.
/// ReLU hidden activations, sigmoid output, replicate padding throughout.
struct MacroParams {
    static constexpr int kLayers = 7;
    static constexpr std::array<int, kLayers> kStrides = {1, 2, 1, 2, 1, 1, 1};

    int hidden = 6;
    std::array<std::vector<double>, kLayers> weights;  // [out][in][ky*3+kx]
    std::array<std::vector<double>, kLayers> biases;   // [out]

    int in_channels(int layer) const { return layer == 0 ? 1 : hidden; }
    int out_channels(int layer) const { return layer == kLayers - 1 ? 1 : hidden; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (int l = 0; l < kLayers; ++l) n += weights[l].size() + biases[l].size();
        return n;
    }
};

inline std::vector<double*> parameter_view(MacroParams& p) {
    std::vector<double*> out;
    out.reserve(p.parameter_count());
    for (int l = 0; l < MacroParams::kLayers; ++l) {
        for (auto& v : p.weights[l]) out.push_back(&v);
        for (auto& v : p.biases[l]) out.push_back(&v);
    }
    return out;
}

struct MacroTrainConfig {
    int hidden = 6;
    double learning_rate = 0.02;
    double momentum = 0.5;  // faster settings kill hidden ReLU channels
    int epochs = 60;
    std::uint64_t seed = 0;  // parameter init and per-epoch image order
};

namespace detail {

/// Channel-major feature planes.
struct FeatureMap {
    int w = 0, h = 0, ch = 0;
    std::vector<double> v;

    FeatureMap() = default;
    FeatureMap(int w_, int h_, int ch_)
        : w(w_), h(h_), ch(ch_),
          v(static_cast<std::size_t>(w_) * h_ * ch_, 0.0) {}

    double& at(int c, int x, int y) {
        return v[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
    double at(int c, int x, int y) const {
        return v[(static_cast<std::size_t>(c) * h + y) * w + x];
    }
};

inline int strided_extent(int extent, int stride) { return (extent + stride - 1) / stride; }

/// 3x3 convolution, replicate padding, given stride. Returns pre-activations.
inline FeatureMap conv_forward(const FeatureMap& in, const std::vector<double>& w,
                               const std::vector<double>& b, int out_ch, int stride) {
    const int ow = strided_extent(in.w, stride), oh = strided_extent(in.h, stride);
    FeatureMap out(ow, oh, out_ch);
    for (int co = 0; co < out_ch; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double z = b[co];
                for (int ci = 0; ci < in.ch; ++ci) {
                    const double* kw = &w[(static_cast<std::size_t>(co) * in.ch + ci) * 9];
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = std::clamp(oy * stride + ky - 1, 0, in.h - 1);
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = std::clamp(ox * stride + kx - 1, 0, in.w - 1);
                            z += kw[ky * 3 + kx] * in.at(ci, sx, sy);
                        }
                    }
                }
                out.at(co, ox, oy) = z;
            }
        }
    }
    return out;
}

/// Gradients of one convolution layer; accumulates dL/d(input activations).
inline void conv_backward(const FeatureMap& dout, const FeatureMap& in,
                          const std::vector<double>& w, int stride,
                          std::vector<double>& gw, std::vector<double>& gb,
                          FeatureMap& din) {
    for (int co = 0; co < dout.ch; ++co) {
        for (int oy = 0; oy < dout.h; ++oy) {
            for (int ox = 0; ox < dout.w; ++ox) {
                const double d = dout.at(co, ox, oy);
                if (d == 0.0) continue;
                gb[co] += d;
                for (int ci = 0; ci < in.ch; ++ci) {
                    const std::size_t base = (static_cast<std::size_t>(co) * in.ch + ci) * 9;
                    for (int ky = 0; ky < 3; ++ky) {
                        const int sy = std::clamp(oy * stride + ky - 1, 0, in.h - 1);
                        for (int kx = 0; kx < 3; ++kx) {
                            const int sx = std::clamp(ox * stride + kx - 1, 0, in.w - 1);
                            gw[base + ky * 3 + kx] += d * in.at(ci, sx, sy);
                            din.at(ci, sx, sy) += d * w[base + ky * 3 + kx];
                        }
                    }
                }
            }
        }
    }
}

inline FeatureMap relu(const FeatureMap& z) {
    FeatureMap a = z;
    for (auto& v : a.v) v = v > 0.0 ? v : 0.0;
    return a;
}

inline FeatureMap image_to_feature(const GrayImage& image) {
    FeatureMap f(image.width(), image.height(), 1);
    std::copy(image.data().begin(), image.data().end(), f.v.begin());
    return f;
}

/// Full forward pass; fills pre-activation maps z[0..6].
inline void macro_forward_stack(const MacroParams& p, const GrayImage& image,
                                std::array<FeatureMap, MacroParams::kLayers>& z) {
    FeatureMap a = image_to_feature(image);
    for (int l = 0; l < MacroParams::kLayers; ++l) {
        z[l] = conv_forward(a, p.weights[l], p.biases[l], p.out_channels(l),
                            MacroParams::kStrides[l]);
        if (l + 1 < MacroParams::kLayers) a = relu(z[l]);
    }
}

}  // namespace detail

inline MacroParams init_macro(const MacroTrainConfig& cfg) {
    if (cfg.hidden < 1) throw std::invalid_argument("init_macro: hidden channels must be >= 1");
    MacroParams p;
    p.hidden = cfg.hidden;
    Rng rng(cfg.seed);
    for (int l = 0; l < MacroParams::kLayers; ++l) {
        const int fan_in = p.in_channels(l) * 9;
        const double bound = std::sqrt(6.0 / fan_in);
        p.weights[l].resize(static_cast<std::size_t>(p.out_channels(l)) * p.in_channels(l) * 9);
        p.biases[l].assign(p.out_channels(l), 0.0);
        for (auto& w : p.weights[l]) w = rng.uniform(-bound, bound);
    }
    // Thin structures cover few blocks; starting the output near the prior
    // spares the hidden layers the initial all-positive gradient shock.
    p.biases.back()[0] = -1.5;
    return p;
}

/// Logits at 1/4 resolution, bilinearly upsampled x4 and sigmoid-mapped.
/// Input dimensions must be divisible by 4 (callers pad and crop).
inline ProbMap infer_macro(const MacroParams& params, const GrayImage& image) {
    if (image.width() % 4 != 0 || image.height() % 4 != 0)
        throw std::invalid_argument("infer_macro: dimensions must be divisible by 4");
    std::array<detail::FeatureMap, MacroParams::kLayers> z;
    detail::macro_forward_stack(params, image, z);
    const detail::FeatureMap& logits = z.back();

    ProbMap out(image.width(), image.height(), 0.0);
    for (int y = 0; y < out.height(); ++y) {
        const double v = (y + 0.5) / 4.0 - 0.5;
        const double vc = std::clamp(v, 0.0, static_cast<double>(logits.h - 1));
        const int y0 = static_cast<int>(std::floor(vc));
        const int y1 = std::min(y0 + 1, logits.h - 1);
        const double fy = vc - y0;
        for (int x = 0; x < out.width(); ++x) {
            const double u = (x + 0.5) / 4.0 - 0.5;
            const double uc = std::clamp(u, 0.0, static_cast<double>(logits.w - 1));
            const int x0 = static_cast<int>(std::floor(uc));
            const int x1 = std::min(x0 + 1, logits.w - 1);
            const double fx = uc - x0;
            const double top = (1.0 - fx) * logits.at(0, x0, y0) + fx * logits.at(0, x1, y0);
            const double bot = (1.0 - fx) * logits.at(0, x0, y1) + fx * logits.at(0, x1, y1);
            out.at(x, y) = detail::sigmoid((1.0 - fy) * top + fy * bot);
        }
    }
    return out;
}

namespace detail {

/// Training targets live on the logit grid: a 4x4 block counts as crack if
/// any of its pixels is annotated (max-pooling keeps thin positives).
inline FeatureMap pool_targets(const BinaryMask& mask) {
    FeatureMap t(mask.width() / 4, mask.height() / 4, 1);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x)
            if (mask.at(x, y)) t.at(0, x / 4, y / 4) = 1.0;
    return t;
}

/// Mean pixel binary cross-entropy between sigmoid(logits) and targets.
inline double macro_loss(const MacroParams& params, const GrayImage& image,
                         const FeatureMap& targets) {
    std::array<FeatureMap, MacroParams::kLayers> z;
    macro_forward_stack(params, image, z);
    const FeatureMap& logits = z.back();
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.v.size(); ++i) {
        const double p = clamp_prob(sigmoid(logits.v[i]));
        const double t = targets.v[i];
        loss += -t * std::log(p) - (1.0 - t) * std::log(1.0 - p);
    }
    return loss / static_cast<double>(logits.v.size());
}

/// Loss plus analytic gradients for one image.
inline double macro_loss_gradient(const MacroParams& params, const GrayImage& image,
                                  const FeatureMap& targets, MacroParams& grads) {
    grads = params;
    for (double* g : parameter_view(grads)) *g = 0.0;

    std::array<FeatureMap, MacroParams::kLayers> z;
    macro_forward_stack(params, image, z);
    const FeatureMap& logits = z.back();
    const double inv = 1.0 / static_cast<double>(logits.v.size());

    FeatureMap delta(logits.w, logits.h, 1);
    double loss = 0.0;
    for (std::size_t i = 0; i < logits.v.size(); ++i) {
        const double p = sigmoid(logits.v[i]);
        const double pc = clamp_prob(p);
        const double t = targets.v[i];
        loss += (-t * std::log(pc) - (1.0 - t) * std::log(1.0 - pc)) * inv;
        if (p > kProbEps && p < 1.0 - kProbEps) delta.v[i] = (p - t) * inv;
    }

    for (int l = MacroParams::kLayers - 1; l >= 0; --l) {
        const FeatureMap a_in =
            l == 0 ? image_to_feature(image) : relu(z[l - 1]);
        FeatureMap din(a_in.w, a_in.h, a_in.ch);
        conv_backward(delta, a_in, params.weights[l], MacroParams::kStrides[l],
                      grads.weights[l], grads.biases[l], din);
        if (l > 0) {
            for (std::size_t i = 0; i < din.v.size(); ++i)
                din.v[i] = z[l - 1].v[i] > 0.0 ? din.v[i] : 0.0;
            delta = std::move(din);
        }
    }
    return loss;
}

}  // namespace detail

/// SGD + momentum on mean pixel BCE against 4x4 max-pooled targets. Image
/// order is reshuffled every epoch from the config seed. When epoch_losses
/// is given it receives the mean training loss of each epoch.
inline MacroParams train_macro(const std::vector<GrayImage>& images,
                               const std::vector<BinaryMask>& masks,
                               const MacroTrainConfig& cfg,
                               std::vector<double>* epoch_losses = nullptr) {
    if (images.empty()) throw std::invalid_argument("train_macro: empty dataset");
    if (cfg.learning_rate < 0.0)
        throw std::invalid_argument("train_macro: negative learning rate");
    if (images.size() != masks.size())
        throw std::invalid_argument("train_macro: image/mask count mismatch");
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].width() != masks[i].width() || images[i].height() != masks[i].height())
            throw std::invalid_argument("train_macro: image/mask dimension mismatch");
        if (images[i].width() % 4 != 0 || images[i].height() % 4 != 0)
            throw std::invalid_argument("train_macro: dimensions must be divisible by 4");
    }

    std::vector<detail::FeatureMap> targets;
    targets.reserve(masks.size());
    for (const auto& m : masks) targets.push_back(detail::pool_targets(m));

    MacroParams params = init_macro(cfg);
    MacroParams velocity = params, grads = params;
    for (double* v : parameter_view(velocity)) *v = 0.0;
    auto pv = parameter_view(params);
    auto vv = parameter_view(velocity);
    auto gv = parameter_view(grads);

    if (epoch_losses) epoch_losses->clear();
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5u + static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1],
                      order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, static_cast<long>(i) - 1))]);
        double epoch_loss = 0.0;
        for (const std::size_t idx : order) {
            epoch_loss += detail::macro_loss_gradient(params, images[idx], targets[idx], grads);
            for (std::size_t k = 0; k < pv.size(); ++k) {
                *vv[k] = cfg.momentum * *vv[k] - cfg.learning_rate * *gv[k];
                *pv[k] += *vv[k];
            }
        }
        if (epoch_losses) epoch_losses->push_back(epoch_loss / static_cast<double>(images.size()));
    }
    return params;
}

/// Finite-difference check of the training loss gradients (step 1e-5).
inline double macro_grad_check(const MacroParams& params, const GrayImage& image,
                               const BinaryMask& mask) {
    const detail::FeatureMap targets = detail::pool_targets(mask);
    MacroParams work = params, grads = params;
    detail::macro_loss_gradient(work, image, targets, grads);
    auto wv = parameter_view(work);
    auto gv = parameter_view(grads);
    const double step = 1e-5;
    double max_rel = 0.0;
    for (std::size_t k = 0; k < wv.size(); ++k) {
        const double saved = *wv[k];
        *wv[k] = saved + step;
        const double lp = detail::macro_loss(work, image, targets);
        *wv[k] = saved - step;
        const double lm = detail::macro_loss(work, image, targets);
        *wv[k] = saved;
        const double fd = (lp - lm) / (2.0 * step);
        const double rel = std::abs(*gv[k] - fd) /
                           std::max({std::abs(*gv[k]), std::abs(fd), 1e-6});
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

/// Kink margins for finite-difference instance screening (see Myopic).
inline MyopicActivationStats macro_activation_stats(const MacroParams& params,
                                                    const GrayImage& image) {
    std::array<detail::FeatureMap, MacroParams::kLayers> z;
    detail::macro_forward_stack(params, image, z);
    MyopicActivationStats stats;
    for (int l = 0; l + 1 < MacroParams::kLayers; ++l)
        for (double v : z[l].v)
            stats.min_abs_preact = std::min(stats.min_abs_preact, std::abs(v));
    for (double v : z.back().v) stats.max_abs_logit = std::max(stats.max_abs_logit, std::abs(v));
    return stats;
}

// --- parameter serialization -------------------------------------------------
// Same scheme as the Myopic file: magic "MAC1", u32 hidden channel count,
// then every weight in declaration order as little-endian 32-bit floats.

inline void save_macro(const MacroParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error(io_error::Kind::open, "cannot open for write: " + path);
    os.write("MAC1", 4);
    binio::write_u32le(os, static_cast<std::uint32_t>(params.hidden));
    MacroParams copy = params;
    for (double* p : parameter_view(copy)) binio::write_f32le(os, static_cast<float>(*p));
    if (!os) throw io_error(io_error::Kind::open, "write failed: " + path);
}

inline MacroParams load_macro(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error(io_error::Kind::open, "cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4)) throw io_error(io_error::Kind::truncated, "truncated header: " + path);
    if (std::string(magic, 4) != "MAC1")
        throw io_error(io_error::Kind::format, "bad magic in " + path);
    std::uint32_t hidden = 0;
    if (!binio::read_u32le(is, hidden))
        throw io_error(io_error::Kind::truncated, "truncated header: " + path);
    if (hidden == 0 || hidden > 4096)
        throw io_error(io_error::Kind::dimension, "implausible channel count in " + path);
    MacroTrainConfig shape;
    shape.hidden = static_cast<int>(hidden);
    MacroParams params = init_macro(shape);
    for (double* p : parameter_view(params)) {
        float v = 0.0f;
        if (!binio::read_f32le(is, v))
            throw io_error(io_error::Kind::truncated, "truncated weights: " + path);
        *p = static_cast<double>(v);
    }
    return params;
}

// --- PMAP probability-map format --------------------------------------------
// Bytes 0-3, magic "PMAP"; bytes 4-7 little-endian u32 width; bytes 8-11
// little-endian u32 height; then width*height little-endian 32-bit floats,
// row-major.

inline void export_pmap(const ProbMap& map, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error(io_error::Kind::open, "cannot open for write: " + path);
    os.write("PMAP", 4);
    binio::write_u32le(os, static_cast<std::uint32_t>(map.width()));
    binio::write_u32le(os, static_cast<std::uint32_t>(map.height()));
    for (double v : map.data()) binio::write_f32le(os, static_cast<float>(v));
    if (!os) throw io_error(io_error::Kind::open, "write failed: " + path);
}

inline ProbMap import_probmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error(io_error::Kind::open, "cannot open: " + path);
    char magic[4];
    if (!is.read(magic, 4))
        throw io_error(io_error::Kind::truncated, "truncated header: " + path);
    if (std::string(magic, 4) != "PMAP")
        throw io_error(io_error::Kind::format, "bad magic in " + path);
    std::uint32_t w = 0, h = 0;
    if (!binio::read_u32le(is, w) || !binio::read_u32le(is, h))
        throw io_error(io_error::Kind::truncated, "truncated header: " + path);
    constexpr std::uint64_t kMaxPixels = 100'000'000;
    if (static_cast<std::uint64_t>(w) * h > kMaxPixels)
        throw io_error(io_error::Kind::dimension, "implausible dimensions in " + path);
    ProbMap map(static_cast<int>(w), static_cast<int>(h), 0.0);
    for (auto& v : map.data()) {
        float f = 0.0f;
        if (!binio::read_f32le(is, f))
            throw io_error(io_error::Kind::truncated, "truncated data: " + path);
        v = std::isfinite(f) ? std::clamp(static_cast<double>(f), 0.0, 1.0) : 0.0;
    }
    return map;
}

}  // namespace weakseg
