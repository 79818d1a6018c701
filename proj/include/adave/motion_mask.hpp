#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "adave/errors.hpp"
#include "adave/flow.hpp"
#include "adave/image.hpp"
#include "adave/image_io.hpp"
#include "adave/mask.hpp"

namespace adave {

// ---------------------------------------------------------------------------
// Flow visualization: Middlebury color coding. Hue encodes direction via the
// 55-entry color wheel, saturation scales with magnitude normalized by the
// field's maximum, zero motion is white.
// ---------------------------------------------------------------------------

namespace detail {

inline const std::vector<std::array<float, 3>>& flow_color_wheel() {
    static const std::vector<std::array<float, 3>> wheel = [] {
        constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
        std::vector<std::array<float, 3>> w;
        w.reserve(RY + YG + GC + CB + BM + MR);
        for (int i = 0; i < RY; ++i) w.push_back({255.f, 255.f * i / RY, 0.f});
        for (int i = 0; i < YG; ++i) w.push_back({255.f - 255.f * i / YG, 255.f, 0.f});
        for (int i = 0; i < GC; ++i) w.push_back({0.f, 255.f, 255.f * i / GC});
        for (int i = 0; i < CB; ++i) w.push_back({0.f, 255.f - 255.f * i / CB, 255.f});
        for (int i = 0; i < BM; ++i) w.push_back({255.f * i / BM, 0.f, 255.f});
        for (int i = 0; i < MR; ++i) w.push_back({255.f, 0.f, 255.f - 255.f * i / MR});
        return w;
    }();
    return wheel;
}

}  // namespace detail

inline constexpr double kFlowMagnitudeEps = 1e-6;

inline Frame flow_to_rgb(const FlowField& flow) {
    check_flow(flow);
    const auto& wheel = detail::flow_color_wheel();
    const int ncols = static_cast<int>(wheel.size());

    double max_mag = 0.0;
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x)
            max_mag = std::max(max_mag, std::hypot(double(flow.u(x, y)), double(flow.v(x, y))));
    const double norm = max_mag < kFlowMagnitudeEps ? 1.0 : max_mag;

    Frame out;
    out.width = flow.width;
    out.height = flow.height;
    out.pixels.resize(static_cast<std::size_t>(flow.width) * flow.height * 3);
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            const double u = flow.u(x, y) / norm;
            const double v = flow.v(x, y) / norm;
            const double rad = std::hypot(u, v);
            const double angle = std::atan2(v, u) / 3.14159265358979323846;  // [-1, 1]
            const double fk = (angle + 1.0) / 2.0 * (ncols - 1);
            const int k0 = std::min(static_cast<int>(std::floor(fk)), ncols - 1);
            const int k1 = (k0 + 1) % ncols;
            const double f = fk - k0;
            std::uint8_t* px = out.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double col0 = wheel[k0][c] / 255.0;
                const double col1 = wheel[k1][c] / 255.0;
                double col = (1.0 - f) * col0 + f * col1;
                col = 1.0 - rad * (1.0 - col);  // white at zero motion
                px[c] = clamp_u8(round_half_up(255.0 * col));
            }
        }
    }
    return out;
}

// Raw magnitude view, normalized by the field maximum to [0,255].
// Moving regions are bright here, the opposite polarity of the gray chain.
inline GrayImage flow_magnitude_image(const FlowField& flow) {
    check_flow(flow);
    double max_mag = 0.0;
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x)
            max_mag = std::max(max_mag, std::hypot(double(flow.u(x, y)), double(flow.v(x, y))));
    const double norm = max_mag < kFlowMagnitudeEps ? 1.0 : max_mag;
    GrayImage out;
    out.width = flow.width;
    out.height = flow.height;
    out.values.resize(static_cast<std::size_t>(flow.width) * flow.height);
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x)
            out.at(x, y) = clamp_u8(round_half_up(
                255.0 * std::hypot(double(flow.u(x, y)), double(flow.v(x, y))) / norm));
    return out;
}

// ---------------------------------------------------------------------------
// Mask construction
// ---------------------------------------------------------------------------

// What happens when the thresholding input is uniform (e.g. whole-frame
// camera pan). Default treats the frame as fully static: its content is
// still covered by the full-frame indices of the sparse extension.
enum class UniformMotionPolicy { all_static, all_moving };

enum class MaskMode { gray_otsu, magnitude_otsu };

struct MaskOptions {
    MaskMode mode = MaskMode::gray_otsu;
    UniformMotionPolicy uniform = UniformMotionPolicy::all_static;
};

// Grid width for a target resolution: block_res names the height; width is
// scaled up to preserve aspect ratio for non-square inputs.
inline int mask_width_for(int block_res, int src_w, int src_h) {
    return std::max(1, static_cast<int>((static_cast<std::int64_t>(block_res) * src_w + src_h - 1) /
                                        src_h));
}

// Downsample the grayscale flow visualization to the block grid and apply
// Otsu. Moving cells are the dark class (motion is darker than the white
// static background under the coding above), so bit = intensity <= t.
inline MotionMask build_mask(const GrayImage& gray_flow, int block_res, int frame_index = 2,
                             UniformMotionPolicy policy = UniformMotionPolicy::all_static) {
    check_gray(gray_flow, "gray flow");
    if (block_res < 1) throw ValidationError("build_mask: block_res must be >= 1");
    if (block_res > std::min(gray_flow.width, gray_flow.height))
        throw ValidationError("build_mask: block_res exceeds source dimensions");

    const int cells_w = mask_width_for(block_res, gray_flow.width, gray_flow.height);
    const GrayImage down = downsample_avg(gray_flow, cells_w, block_res);

    MotionMask mask;
    mask.frame_index = frame_index;
    mask.block_res = block_res;
    mask.width = cells_w;
    mask.height = block_res;
    mask.bits.assign(down.values.size(), 0);

    const auto threshold = otsu_threshold(down);
    if (!threshold) {
        if (policy == UniformMotionPolicy::all_moving)
            std::fill(mask.bits.begin(), mask.bits.end(), std::uint8_t{1});
        return mask;
    }
    for (std::size_t i = 0; i < down.values.size(); ++i)
        mask.bits[i] = down.values[i] <= *threshold ? 1 : 0;
    return mask;
}

// Magnitude-threshold alternative: Otsu on the normalized magnitude image,
// moving cells are the bright class.
inline MotionMask build_mask_magnitude(const GrayImage& magnitude, int block_res,
                                       int frame_index = 2,
                                       UniformMotionPolicy policy = UniformMotionPolicy::all_static) {
    check_gray(magnitude, "magnitude");
    if (block_res < 1) throw ValidationError("build_mask_magnitude: block_res must be >= 1");
    if (block_res > std::min(magnitude.width, magnitude.height))
        throw ValidationError("build_mask_magnitude: block_res exceeds source dimensions");

    const int cells_w = mask_width_for(block_res, magnitude.width, magnitude.height);
    const GrayImage down = downsample_avg(magnitude, cells_w, block_res);

    MotionMask mask;
    mask.frame_index = frame_index;
    mask.block_res = block_res;
    mask.width = cells_w;
    mask.height = block_res;
    mask.bits.assign(down.values.size(), 0);

    const auto threshold = otsu_threshold(down);
    if (!threshold) {
        if (policy == UniformMotionPolicy::all_moving)
            std::fill(mask.bits.begin(), mask.bits.end(), std::uint8_t{1});
        return mask;
    }
    for (std::size_t i = 0; i < down.values.size(); ++i)
        mask.bits[i] = down.values[i] > *threshold ? 1 : 0;
    return mask;
}

inline MotionMask build_mask_from_flow(const FlowField& flow, int block_res, int frame_index,
                                       const MaskOptions& options = {}) {
    if (options.mode == MaskMode::magnitude_otsu)
        return build_mask_magnitude(flow_magnitude_image(flow), block_res, frame_index,
                                    options.uniform);
    return build_mask(rgb_to_gray(flow_to_rgb(flow)), block_res, frame_index, options.uniform);
}

// ---------------------------------------------------------------------------
// Pyramid construction from a reference-frame sequence
// ---------------------------------------------------------------------------

struct FlowSourceSpec {
    enum class Kind { block_matching, flo_directory };
    Kind kind = Kind::block_matching;
    int block = 8;   // block-matching tile size
    int radius = 8;  // block-matching search radius
    std::filesystem::path flo_dir;  // expects flow files indexed by the pair's second frame
};

inline std::string flo_filename(int pair_second_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "flow_%04d.flo", pair_second_index);
    return buf;
}

// Flows between successive reference frames: index i in {2..Z} names the
// pair (i-1, i).
inline std::vector<FlowField> reference_flows(const std::vector<Frame>& frames,
                                              const FlowSourceSpec& source) {
    std::vector<FlowField> flows;
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (source.kind == FlowSourceSpec::Kind::flo_directory) {
            const auto path = source.flo_dir / flo_filename(static_cast<int>(i + 1));
            FlowField f = read_flo(path);
            if (f.width != frames[i].width || f.height != frames[i].height)
                throw ValidationError("flow dimension mismatch: " + path.string());
            flows.push_back(std::move(f));
        } else {
            flows.push_back(estimate_flow_block_matching(frames[i - 1], frames[i], source.block,
                                                         source.radius));
        }
    }
    return flows;
}

inline MaskPyramid build_mask_pyramid(const std::vector<Frame>& reference_frames,
                                      const std::vector<int>& resolutions,
                                      const FlowSourceSpec& source,
                                      const MaskOptions& options = {}) {
    if (reference_frames.size() < 2)
        throw ValidationError("build_mask_pyramid: need at least 2 reference frames");
    if (resolutions.empty())
        throw ValidationError("build_mask_pyramid: need at least one resolution");
    for (std::size_t i = 1; i < reference_frames.size(); ++i)
        if (!reference_frames[i].same_dims(reference_frames[0]))
            throw ValidationError("build_mask_pyramid: frame dimension mismatch");

    const std::vector<FlowField> flows = reference_flows(reference_frames, source);

    MaskPyramid pyramid;
    pyramid.frame_count = static_cast<int>(reference_frames.size());
    pyramid.resolutions = resolutions;
    for (std::size_t pair = 0; pair < flows.size(); ++pair) {
        const int frame_index = static_cast<int>(pair + 2);
        for (int res : resolutions)
            pyramid.insert(build_mask_from_flow(flows[pair], res, frame_index, options));
    }
    return pyramid;
}

// ---------------------------------------------------------------------------
// Persistence: PGM per mask, 0 = static, 255 = moving, filename encodes
// (frame, resolution).
// ---------------------------------------------------------------------------

inline std::string mask_filename(int frame_index, int block_res) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "mask_%04d_d%03d.pgm", frame_index, block_res);
    return buf;
}

inline void save_mask_pyramid(const MaskPyramid& pyramid, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [key, mask] : pyramid.masks) {
        GrayImage img;
        img.width = mask.width;
        img.height = mask.height;
        img.values.resize(mask.bits.size());
        for (std::size_t i = 0; i < mask.bits.size(); ++i)
            img.values[i] = mask.bits[i] ? 255 : 0;
        write_pgm(img, dir / mask_filename(key.first, key.second));
    }
}

inline MaskPyramid load_mask_pyramid(const std::filesystem::path& dir, int frame_count,
                                     const std::vector<int>& resolutions) {
    MaskPyramid pyramid;
    pyramid.frame_count = frame_count;
    pyramid.resolutions = resolutions;
    for (int i = 2; i <= frame_count; ++i) {
        for (int res : resolutions) {
            const GrayImage img = read_pgm(dir / mask_filename(i, res));
            MotionMask mask;
            mask.frame_index = i;
            mask.block_res = res;
            mask.width = img.width;
            mask.height = img.height;
            mask.bits.resize(img.values.size());
            for (std::size_t k = 0; k < img.values.size(); ++k)
                mask.bits[k] = img.values[k] >= 128 ? 1 : 0;
            pyramid.insert(std::move(mask));
        }
    }
    return pyramid;
}

}  // namespace adave
