#pragma once

#include <png.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "weakseg/binio.hpp"
#include "weakseg/raster.hpp"

namespace weakseg {

namespace detail {

/// Decodes any PNG to 8-bit RGB rows via the libpng simplified API.
inline std::vector<std::uint8_t> read_png_rgb(const std::string& path, int& width, int& height) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&im, path.c_str()))
        throw io_error(io_error::Kind::open, "cannot read PNG: " + path + " (" + im.message + ")");
    im.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(im));
    if (!png_image_finish_read(&im, nullptr, buffer.data(), 0, nullptr)) {
        png_image_free(&im);
        throw io_error(io_error::Kind::format, "cannot decode PNG: " + path + " (" + im.message + ")");
    }
    width = static_cast<int>(im.width);
    height = static_cast<int>(im.height);
    return buffer;
}

}  // namespace detail

/// Reads a PNG as luminance in [0,1]; color inputs convert by Rec. 601 luma.
inline GrayImage read_gray_png(const std::string& path) {
    int w = 0, h = 0;
    const auto rgb = detail::read_png_rgb(path, w, h);
    GrayImage out(w, h, 0.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double r = rgb[3 * i + 0], g = rgb[3 * i + 1], b = rgb[3 * i + 2];
        out.data()[i] = (0.299 * r + 0.587 * g + 0.114 * b) / 255.0;
    }
    return out;
}

/// Reads a PNG as a binary mask: any pixel with luma >= 128 counts as
/// foreground (tolerates anti-aliased third-party masks).
inline BinaryMask read_mask_png(const std::string& path) {
    int w = 0, h = 0;
    const auto rgb = detail::read_png_rgb(path, w, h);
    BinaryMask out(w, h, 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double luma =
            0.299 * rgb[3 * i + 0] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
        out.data()[i] = luma >= 128.0 - 1e-9;
    }
    return out;
}

namespace detail {

inline void write_png_buffer(const std::string& path, const std::uint8_t* pixels, int width,
                             int height, png_uint_32 format) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    im.width = static_cast<png_uint_32>(width);
    im.height = static_cast<png_uint_32>(height);
    im.format = format;
    if (!png_image_write_to_file(&im, path.c_str(), 0, pixels, 0, nullptr))
        throw io_error(io_error::Kind::open, "cannot write PNG: " + path + " (" + im.message + ")");
}

}  // namespace detail

/// 8-bit grayscale PNG; values round to the nearest of 256 levels.
inline void write_gray_png(const GrayImage& image, const std::string& path) {
    std::vector<std::uint8_t> buf(image.size());
    for (std::size_t i = 0; i < image.size(); ++i)
        buf[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
    detail::write_png_buffer(path, buf.data(), image.width(), image.height(), PNG_FORMAT_GRAY);
}

/// Mask PNG: background 0, foreground 255.
inline void write_mask_png(const BinaryMask& mask, const std::string& path) {
    std::vector<std::uint8_t> buf(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) buf[i] = mask.data()[i] ? 255 : 0;
    detail::write_png_buffer(path, buf.data(), mask.width(), mask.height(), PNG_FORMAT_GRAY);
}

/// 8-bit preview of a probability map (lossy; PMAP keeps the real values).
inline void write_prob_png(const ProbMap& map, const std::string& path) {
    std::vector<std::uint8_t> buf(map.size());
    for (std::size_t i = 0; i < map.size(); ++i)
        buf[i] = static_cast<std::uint8_t>(
            std::lround(std::clamp(map.data()[i], 0.0, 1.0) * 255.0));
    detail::write_png_buffer(path, buf.data(), map.width(), map.height(), PNG_FORMAT_GRAY);
}

/// Diagnostic overlay: grayscale image with prediction/ground-truth tints
/// (correct hits yellow, false positives red, misses green).
inline void write_overlay_png(const GrayImage& image, const BinaryMask& pred,
                              const BinaryMask* gt, const std::string& path) {
    std::vector<std::uint8_t> buf(image.size() * 3);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const auto v = static_cast<std::uint8_t>(
            std::lround(std::clamp(image.data()[i], 0.0, 1.0) * 255.0));
        std::uint8_t r = v, g = v, b = v;
        const bool p = pred.data()[i] != 0;
        const bool t = gt != nullptr && gt->data()[i] != 0;
        if (p && t) { r = 255; g = 215; b = 0; }
        else if (p) { r = 230; g = 40; b = 40; }
        else if (t) { r = 40; g = 200; b = 60; }
        buf[3 * i + 0] = r;
        buf[3 * i + 1] = g;
        buf[3 * i + 2] = b;
    }
    detail::write_png_buffer(path, buf.data(), image.width(), image.height(), PNG_FORMAT_RGB);
}

}  // namespace weakseg
