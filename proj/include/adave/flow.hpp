#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <vector>

#include "adave/errors.hpp"
#include "adave/image.hpp"

namespace adave {

// Per-pixel 2-vector motion field between a frame pair (prev, next).
//
// Convention used throughout: the vector (u, v) stored at pixel p satisfies
// prev(p + (u, v)) ~ next(p), so warp_bilinear(prev, flow) reconstructs next.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> uv;  // row-major (u, v) pairs

    static FlowField zeros(int w, int h) {
        return FlowField{w, h, std::vector<float>(static_cast<std::size_t>(w) * h * 2, 0.0f)};
    }

    float u(int x, int y) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
    float v(int x, int y) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }
    void set(int x, int y, float fu, float fv) {
        uv[(static_cast<std::size_t>(y) * width + x) * 2] = fu;
        uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1] = fv;
    }
};

inline void check_flow(const FlowField& f, const char* what = "flow field") {
    if (f.width < 1 || f.height < 1 ||
        f.uv.size() != static_cast<std::size_t>(f.width) * f.height * 2)
        throw ValidationError(std::string(what) + ": inconsistent dimensions");
    for (float c : f.uv)
        if (!std::isfinite(c)) throw ValidationError(std::string(what) + ": non-finite component");
}

// ---------------------------------------------------------------------------
// Exhaustive block matching. Coarse by design: the cost of being exhaustive
// at tile granularity is tiny next to the attention passes it guides, and
// the exhaustive search is directly checkable against constructed shifts.
// ---------------------------------------------------------------------------

namespace detail {

inline std::int64_t tile_sad(const Frame& prev, const Frame& next, int tx0, int ty0, int tx1,
                             int ty1, int du, int dv) {
    std::int64_t sad = 0;
    for (int y = ty0; y < ty1; ++y) {
        const int sy = std::clamp(y + dv, 0, prev.height - 1);
        for (int x = tx0; x < tx1; ++x) {
            const int sx = std::clamp(x + du, 0, prev.width - 1);
            const std::uint8_t* a = prev.at(sx, sy);
            const std::uint8_t* b = next.at(x, y);
            sad += std::abs(int(a[0]) - int(b[0])) + std::abs(int(a[1]) - int(b[1])) +
                   std::abs(int(a[2]) - int(b[2]));
        }
    }
    return sad;
}

}  // namespace detail

// For each tile of the shared pixel grid, searches displacements within
// +-radius for the (u,v) minimizing SAD(prev sampled at tile+(u,v), next at
// tile); all pixels of the tile receive the winning vector. Ties prefer the
// smallest |u|+|v|, then smallest v, then smallest u. Displaced samples that
// fall outside prev clamp to the nearest edge pixel.
inline FlowField estimate_flow_block_matching(const Frame& prev, const Frame& next, int block = 8,
                                              int radius = 8) {
    check_frame(prev, "prev");
    check_frame(next, "next");
    if (!prev.same_dims(next))
        throw ValidationError("estimate_flow_block_matching: dimension mismatch");
    if (block < 1) throw ValidationError("estimate_flow_block_matching: block must be >= 1");
    if (radius < 0) throw ValidationError("estimate_flow_block_matching: radius must be >= 0");

    FlowField flow = FlowField::zeros(prev.width, prev.height);
    for (int ty0 = 0; ty0 < prev.height; ty0 += block) {
        const int ty1 = std::min(ty0 + block, prev.height);
        for (int tx0 = 0; tx0 < prev.width; tx0 += block) {
            const int tx1 = std::min(tx0 + block, prev.width);

            std::int64_t best_sad = std::numeric_limits<std::int64_t>::max();
            int best_l1 = 0, best_u = 0, best_v = 0;
            for (int dv = -radius; dv <= radius; ++dv) {
                for (int du = -radius; du <= radius; ++du) {
                    const std::int64_t sad =
                        detail::tile_sad(prev, next, tx0, ty0, tx1, ty1, du, dv);
                    const int l1 = std::abs(du) + std::abs(dv);
                    if (sad < best_sad ||
                        (sad == best_sad &&
                         (l1 < best_l1 || (l1 == best_l1 &&
                                           (dv < best_v || (dv == best_v && du < best_u)))))) {
                        best_sad = sad;
                        best_l1 = l1;
                        best_u = du;
                        best_v = dv;
                    }
                }
            }
            for (int y = ty0; y < ty1; ++y)
                for (int x = tx0; x < tx1; ++x)
                    flow.set(x, y, static_cast<float>(best_u), static_cast<float>(best_v));
        }
    }
    return flow;
}

// output(x,y) = bilinear sample of image at (x+u, y+v); out-of-bounds
// coordinates clamp to the nearest edge pixel.
inline Frame warp_bilinear(const Frame& image, const FlowField& flow) {
    check_frame(image);
    check_flow(flow);
    if (image.width != flow.width || image.height != flow.height)
        throw ValidationError("warp_bilinear: dimension mismatch");

    Frame out;
    out.width = image.width;
    out.height = image.height;
    out.pixels.resize(image.pixels.size());
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            double sx = x + flow.u(x, y);
            double sy = y + flow.v(x, y);
            sx = std::clamp(sx, 0.0, static_cast<double>(image.width - 1));
            sy = std::clamp(sy, 0.0, static_cast<double>(image.height - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, image.width - 1);
            const int y1 = std::min(y0 + 1, image.height - 1);
            const double fx = sx - x0;
            const double fy = sy - y0;
            const std::uint8_t* p00 = image.at(x0, y0);
            const std::uint8_t* p10 = image.at(x1, y0);
            const std::uint8_t* p01 = image.at(x0, y1);
            const std::uint8_t* p11 = image.at(x1, y1);
            std::uint8_t* o = out.at(x, y);
            for (int c = 0; c < 3; ++c) {
                const double top = p00[c] * (1.0 - fx) + p10[c] * fx;
                const double bot = p01[c] * (1.0 - fx) + p11[c] * fx;
                o[c] = clamp_u8(round_half_up(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Middlebury .flo: float magic 202021.25, int32 width, int32 height, then
// interleaved float32 (u,v) row-major. Little-endian host assumed.
// ---------------------------------------------------------------------------

inline constexpr float kFloMagic = 202021.25f;

inline void write_flo(const FlowField& field, const std::filesystem::path& path) {
    check_flow(field);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    const std::int32_t w = field.width, h = field.height;
    out.write(reinterpret_cast<const char*>(&kFloMagic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    out.write(reinterpret_cast<const char*>(field.uv.data()),
              static_cast<std::streamsize>(field.uv.size() * sizeof(float)));
    if (!out) throw IoError("short write: " + path.string());
}

inline FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path.string());
    float magic = 0.0f;
    std::int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&magic), 4);
    if (in.gcount() != 4 || magic != kFloMagic)
        throw IoError("bad .flo magic: " + path.string());
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || w < 1 || h < 1) throw IoError("bad .flo dimensions: " + path.string());
    FlowField field;
    field.width = w;
    field.height = h;
    field.uv.resize(static_cast<std::size_t>(w) * h * 2);
    in.read(reinterpret_cast<char*>(field.uv.data()),
            static_cast<std::streamsize>(field.uv.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(field.uv.size() * sizeof(float)))
        throw IoError("truncated .flo payload: " + path.string());
    for (float c : field.uv)
        if (!std::isfinite(c)) throw IoError("non-finite .flo component: " + path.string());
    return field;
}

}  // namespace adave
