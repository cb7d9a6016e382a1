// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include <png.h>

#include "orsiflow/tensor.hpp"

namespace orsiflow {

namespace detail {

struct PngReadCtx {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReadCtx() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWriteCtx {
    FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriteCtx() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

/// Decodes an 8-bit PNG into interleaved bytes with `want_channels` (1 or 3).
/// 16-bit files are rejected; palette and alpha variants are normalized.
inline std::vector<unsigned char> read_png_bytes(const std::filesystem::path& path, int want_channels, int& width,
                                                 int& height) {
    PngReadCtx ctx;
    ctx.fp = std::fopen(path.string().c_str(), "rb");
    if (!ctx.fp) throw UnreadableImage("cannot open " + path.string());

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, ctx.fp) != 8 || png_sig_cmp(sig, 0, 8))
        throw UnreadableImage(path.string() + " is not a PNG file");

    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw UnreadableImage("libpng init failure");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw UnreadableImage("libpng init failure");

    std::vector<unsigned char> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(ctx.png))) throw UnreadableImage("libpng decode error in " + path.string());

    png_init_io(ctx.png, ctx.fp);
    png_set_sig_bytes(ctx.png, 8);
    png_read_info(ctx.png, ctx.info);

    width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
    const int color_type = png_get_color_type(ctx.png, ctx.info);
    if (bit_depth == 16) throw UnreadableImage(path.string() + ": 16-bit PNG is unsupported, expected 8-bit");

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(ctx.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    png_set_strip_alpha(ctx.png);
    if (want_channels == 1) {
        if (color_type == PNG_COLOR_TYPE_RGB || color_type == PNG_COLOR_TYPE_RGB_ALPHA ||
            color_type == PNG_COLOR_TYPE_PALETTE)
            png_set_rgb_to_gray(ctx.png, 1, -1.0, -1.0);
    } else {
        if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
            png_set_gray_to_rgb(ctx.png);
    }
    png_set_interlace_handling(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    const int channels = png_get_channels(ctx.png, ctx.info);
    if (channels != want_channels)
        throw UnreadableImage(path.string() + ": unexpected channel count " + std::to_string(channels));

    data.resize(static_cast<size_t>(width) * height * want_channels);
    rows.resize(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y)
        rows[static_cast<size_t>(y)] = data.data() + static_cast<size_t>(y) * width * want_channels;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
    return data;
}

inline void write_png_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& data, int width,
                            int height, int channels) {
    PngWriteCtx ctx;
    ctx.fp = std::fopen(path.string().c_str(), "wb");
    if (!ctx.fp) throw IoError("cannot open " + path.string() + " for writing");
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw IoError("libpng init failure");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw IoError("libpng init failure");

    std::vector<png_bytep> rows(static_cast<size_t>(height));
    if (setjmp(png_jmpbuf(ctx.png))) throw IoError("libpng encode error for " + path.string());

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    for (int y = 0; y < height; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(data.data() + static_cast<size_t>(y) * width * channels);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

inline unsigned char to_byte(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

} // namespace detail

/// Loads an 8-bit grayscale PNG as [1,H,W] with values in [0,1].
inline Tensor load_mask(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto bytes = detail::read_png_bytes(path, 1, w, h);
    std::vector<double> data(bytes.size());
    for (size_t i = 0; i < bytes.size(); ++i) data[i] = bytes[i] / 255.0;
    return Tensor::from({1, h, w}, std::move(data));
}

/// Saves [1,H,W] or [H,W] values in [0,1] as an 8-bit grayscale PNG.
inline void save_mask(const std::filesystem::path& path, const Tensor& t) {
    int h, w;
    if (t.ndim() == 3 && t.dim(0) == 1) {
        h = t.dim(1);
        w = t.dim(2);
    } else if (t.ndim() == 2) {
        h = t.dim(0);
        w = t.dim(1);
    } else {
        throw ShapeMismatch("save_mask expects [1,H,W] or [H,W], got " + shape_str(t.shape()));
    }
    std::vector<unsigned char> bytes(static_cast<size_t>(h) * w);
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::to_byte(t.data()[i]);
    detail::write_png_bytes(path, bytes, w, h, 1);
}

/// Loads an 8-bit PNG as RGB [3,H,W] in [0,1] (planar).
inline Tensor load_image(const std::filesystem::path& path) {
    int w = 0, h = 0;
    const auto bytes = detail::read_png_bytes(path, 3, w, h);
    std::vector<double> data(static_cast<size_t>(3) * h * w);
    const size_t plane = static_cast<size_t>(h) * w;
    for (size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) data[static_cast<size_t>(c) * plane + i] = bytes[i * 3 + static_cast<size_t>(c)] / 255.0;
    return Tensor::from({3, h, w}, std::move(data));
}

/// Saves [3,H,W] values in [0,1] as an 8-bit RGB PNG.
inline void save_image(const std::filesystem::path& path, const Tensor& t) {
    if (t.ndim() != 3 || t.dim(0) != 3)
        throw ShapeMismatch("save_image expects [3,H,W], got " + shape_str(t.shape()));
    const int h = t.dim(1), w = t.dim(2);
    const size_t plane = static_cast<size_t>(h) * w;
    std::vector<unsigned char> bytes(plane * 3);
    for (size_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c)
            bytes[i * 3 + static_cast<size_t>(c)] = detail::to_byte(t.data()[static_cast<size_t>(c) * plane + i]);
    detail::write_png_bytes(path, bytes, w, h, 3);
}

} // namespace orsiflow
