#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "adave/errors.hpp"

namespace adave {

// Round-half-up; every integer intensity produced in the project uses this.
inline int round_half_up(double x) { return static_cast<int>(std::floor(x + 0.5)); }

inline std::uint8_t clamp_u8(int v) {
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

// 8-bit RGB raster, row-major (r,g,b) triples.
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    static Frame filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
        Frame f;
        f.width = w;
        f.height = h;
        f.pixels.resize(static_cast<std::size_t>(w) * h * 3);
        for (std::size_t i = 0; i < f.pixels.size(); i += 3) {
            f.pixels[i] = r;
            f.pixels[i + 1] = g;
            f.pixels[i + 2] = b;
        }
        return f;
    }

    std::uint8_t* at(int x, int y) {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* at(int x, int y) const {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    bool same_dims(const Frame& o) const { return width == o.width && height == o.height; }
};

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> values;

    static GrayImage filled(int w, int h, std::uint8_t v) {
        return GrayImage{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, v)};
    }

    std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline void check_frame(const Frame& f, const char* what = "frame") {
    if (f.width < 1 || f.height < 1 ||
        f.pixels.size() != static_cast<std::size_t>(f.width) * f.height * 3)
        throw ValidationError(std::string(what) + ": inconsistent dimensions");
}

inline void check_gray(const GrayImage& g, const char* what = "gray image") {
    if (g.width < 1 || g.height < 1 ||
        g.values.size() != static_cast<std::size_t>(g.width) * g.height)
        throw ValidationError(std::string(what) + ": inconsistent dimensions");
}

// ITU-R BT.601 luma.
inline GrayImage rgb_to_gray(const Frame& frame) {
    check_frame(frame);
    GrayImage out;
    out.width = frame.width;
    out.height = frame.height;
    out.values.resize(static_cast<std::size_t>(frame.width) * frame.height);
    const std::uint8_t* p = frame.pixels.data();
    for (std::size_t i = 0; i < out.values.size(); ++i, p += 3) {
        const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
        out.values[i] = clamp_u8(round_half_up(y));
    }
    return out;
}

// Box-filter downsampling: each output cell is the rounded mean of its
// area-mapped source rectangle. Upsampling is out of contract.
inline GrayImage downsample_avg(const GrayImage& image, int target_w, int target_h) {
    check_gray(image);
    if (target_w < 1 || target_h < 1)
        throw ValidationError("downsample_avg: target dimensions must be >= 1");
    if (target_w > image.width || target_h > image.height)
        throw ValidationError("downsample_avg: target larger than source");

    GrayImage out;
    out.width = target_w;
    out.height = target_h;
    out.values.resize(static_cast<std::size_t>(target_w) * target_h);
    for (int oy = 0; oy < target_h; ++oy) {
        const int y0 = static_cast<int>(static_cast<std::int64_t>(oy) * image.height / target_h);
        const int y1 = static_cast<int>(static_cast<std::int64_t>(oy + 1) * image.height / target_h);
        for (int ox = 0; ox < target_w; ++ox) {
            const int x0 = static_cast<int>(static_cast<std::int64_t>(ox) * image.width / target_w);
            const int x1 = static_cast<int>(static_cast<std::int64_t>(ox + 1) * image.width / target_w);
            std::int64_t sum = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x) sum += image.at(x, y);
            const std::int64_t count = static_cast<std::int64_t>(y1 - y0) * (x1 - x0);
            out.at(ox, oy) =
                clamp_u8(round_half_up(static_cast<double>(sum) / static_cast<double>(count)));
        }
    }
    return out;
}

// Otsu's threshold: smallest t in [0,255] maximizing the between-class
// variance of the split {<=t} vs {>t}. Returns nullopt for a single-value
// histogram; the policy for that case belongs to the caller.
inline std::optional<std::uint8_t> otsu_threshold(const GrayImage& image) {
    check_gray(image);
    std::array<std::int64_t, 256> hist{};
    for (std::uint8_t v : image.values) ++hist[v];

    int distinct = 0;
    for (auto c : hist)
        if (c > 0) ++distinct;
    if (distinct <= 1) return std::nullopt;

    const double n = static_cast<double>(image.values.size());
    double total = 0;
    for (int v = 0; v < 256; ++v) total += static_cast<double>(hist[v]) * v;

    double best_var = -1.0;
    int best_t = 0;
    double w0 = 0, sum0 = 0;
    for (int t = 0; t < 256; ++t) {
        w0 += static_cast<double>(hist[t]);
        sum0 += static_cast<double>(hist[t]) * t;
        const double w1 = n - w0;
        if (w0 == 0 || w1 == 0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (total - sum0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return static_cast<std::uint8_t>(best_t);
}

}  // namespace adave
