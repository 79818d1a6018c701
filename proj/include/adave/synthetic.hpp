#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "adave/errors.hpp"
#include "adave/image.hpp"
#include "adave/rng.hpp"

namespace adave {

// Deterministic per-pixel texture: value depends only on (seed, x, y), so
// translated crops of the "same" texture stay consistent.
inline std::uint8_t texture_value(std::uint64_t seed, int x, int y, int channel) {
    SplitMix64 g(mix_seed(seed, (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
                                    static_cast<std::uint32_t>(y),
                          static_cast<std::uint64_t>(channel)));
    return g.next_byte();
}

inline Frame texture_frame(int w, int h, std::uint64_t seed, int x_offset = 0, int y_offset = 0) {
    Frame f;
    f.width = w;
    f.height = h;
    f.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::uint8_t* p = f.at(x, y);
            for (int c = 0; c < 3; ++c)
                p[c] = texture_value(seed, x + x_offset, y + y_offset, c);
        }
    return f;
}

// ---------------------------------------------------------------------------
// Moving-rectangle scene: a textured rectangle translating at constant
// velocity over a static textured background. The workhorse for mask-IoU
// and motion-pipeline checks.
// ---------------------------------------------------------------------------

struct RectScene {
    int width = 64;
    int height = 64;
    int frame_count = 4;
    int rect_w = 24;
    int rect_h = 24;
    int rect_x = 8;   // top-left at frame 1
    int rect_y = 10;
    int vel_x = 4;    // pixels per frame
    int vel_y = 0;
    std::uint64_t texture_seed = 7;
};

inline std::pair<int, int> rect_position(const RectScene& s, int frame_index /*1-based*/) {
    return {s.rect_x + (frame_index - 1) * s.vel_x, s.rect_y + (frame_index - 1) * s.vel_y};
}

inline std::vector<Frame> generate_rect_scene(const RectScene& s) {
    if (s.width < 1 || s.height < 1 || s.frame_count < 1 || s.rect_w < 1 || s.rect_h < 1)
        throw ValidationError("generate_rect_scene: bad scene dimensions");
    const std::uint64_t bg_seed = mix_seed(s.texture_seed, 0xb9);
    const std::uint64_t fg_seed = mix_seed(s.texture_seed, 0xf9);
    std::vector<Frame> frames;
    frames.reserve(s.frame_count);
    for (int i = 1; i <= s.frame_count; ++i) {
        Frame f = texture_frame(s.width, s.height, bg_seed);
        const auto [rx, ry] = rect_position(s, i);
        for (int y = 0; y < s.rect_h; ++y) {
            const int py = ry + y;
            if (py < 0 || py >= s.height) continue;
            for (int x = 0; x < s.rect_w; ++x) {
                const int px = rx + x;
                if (px < 0 || px >= s.width) continue;
                std::uint8_t* p = f.at(px, py);
                for (int c = 0; c < 3; ++c) p[c] = texture_value(fg_seed, x, y, c);
            }
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

// Cells of a block_res-high grid whose overlap with the union of the
// rectangle's footprints in frames (index-1, index) is at least min_overlap.
// Ground truth for mask IoU checks.
inline std::vector<std::uint8_t> rect_scene_truth_mask(const RectScene& s, int frame_index,
                                                       int block_res,
                                                       double min_overlap = 0.5) {
    const auto [ax, ay] = rect_position(s, frame_index - 1);
    const auto [bx, by] = rect_position(s, frame_index);
    std::vector<std::uint8_t> moving(static_cast<std::size_t>(s.width) * s.height, 0);
    auto paint = [&](int rx, int ry) {
        for (int y = std::max(0, ry); y < std::min(s.height, ry + s.rect_h); ++y)
            for (int x = std::max(0, rx); x < std::min(s.width, rx + s.rect_w); ++x)
                moving[static_cast<std::size_t>(y) * s.width + x] = 1;
    };
    paint(ax, ay);
    paint(bx, by);

    const int cells_w = std::max(1, (block_res * s.width + s.height - 1) / s.height);
    std::vector<std::uint8_t> truth(static_cast<std::size_t>(cells_w) * block_res, 0);
    for (int cy = 0; cy < block_res; ++cy) {
        const int y0 = cy * s.height / block_res;
        const int y1 = (cy + 1) * s.height / block_res;
        for (int cx = 0; cx < cells_w; ++cx) {
            const int x0 = cx * s.width / cells_w;
            const int x1 = (cx + 1) * s.width / cells_w;
            int covered = 0;
            for (int y = y0; y < y1; ++y)
                for (int x = x0; x < x1; ++x)
                    covered += moving[static_cast<std::size_t>(y) * s.width + x];
            const int area = (y1 - y0) * (x1 - x0);
            truth[static_cast<std::size_t>(cy) * cells_w + cx] =
                covered >= min_overlap * area ? 1 : 0;
        }
    }
    return truth;
}

// ---------------------------------------------------------------------------
// Half-moving scene: the left half pans over a wide texture while the right
// half stays put. Used for mask-density checks.
// ---------------------------------------------------------------------------

struct HalfScene {
    int width = 64;
    int height = 64;
    int frame_count = 2;
    int shift_x = 4;  // pan per frame, left half only
    std::uint64_t texture_seed = 11;
};

inline std::vector<Frame> generate_half_moving_scene(const HalfScene& s) {
    if (s.width < 2 || s.height < 1 || s.frame_count < 1)
        throw ValidationError("generate_half_moving_scene: bad scene dimensions");
    const std::uint64_t left_seed = mix_seed(s.texture_seed, 0x1e);
    const std::uint64_t right_seed = mix_seed(s.texture_seed, 0x71);
    const int half = s.width / 2;
    std::vector<Frame> frames;
    frames.reserve(s.frame_count);
    for (int i = 1; i <= s.frame_count; ++i) {
        Frame f;
        f.width = s.width;
        f.height = s.height;
        f.pixels.resize(static_cast<std::size_t>(s.width) * s.height * 3);
        for (int y = 0; y < s.height; ++y) {
            for (int x = 0; x < s.width; ++x) {
                std::uint8_t* p = f.at(x, y);
                if (x < half) {
                    for (int c = 0; c < 3; ++c)
                        p[c] = texture_value(left_seed, x + (i - 1) * s.shift_x, y, c);
                } else {
                    for (int c = 0; c < 3; ++c) p[c] = texture_value(right_seed, x, y, c);
                }
            }
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

// A pair of same-size crops of one larger texture, offset by (dx, dy):
// next(p) = prev(p + (dx, dy)) wherever prev is in range, and next carries
// fresh texture where it is not. Interior flow recovery is exact; border
// columns/rows measure clamping honestly.
inline std::pair<Frame, Frame> shifted_texture_pair(int w, int h, int dx, int dy,
                                                    std::uint64_t seed) {
    const int ox = dx < 0 ? -dx : 0;
    const int oy = dy < 0 ? -dy : 0;
    Frame prev = texture_frame(w, h, seed, ox, oy);
    Frame next = texture_frame(w, h, seed, ox + dx, oy + dy);
    return {std::move(prev), std::move(next)};
}

}  // namespace adave
