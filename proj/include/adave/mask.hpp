#pragma once

#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "adave/errors.hpp"

namespace adave {

// Binary moving-region grid at one attention-block resolution, for one
// reference frame i >= 2 (frame 1 has no predecessor). block_res names the
// grid height; width differs only for non-square inputs.
struct MotionMask {
    int frame_index = 0;  // 1-based reference index, >= 2
    int block_res = 0;    // d
    int width = 0;        // cells per row (== block_res for square frames)
    int height = 0;       // == block_res
    std::vector<std::uint8_t> bits;  // row-major, 0 = static, 1 = moving

    static MotionMask all_ones(int frame_index, int res) {
        return MotionMask{frame_index, res, res, res,
                          std::vector<std::uint8_t>(static_cast<std::size_t>(res) * res, 1)};
    }
    static MotionMask all_zeros(int frame_index, int res) {
        return MotionMask{frame_index, res, res, res,
                          std::vector<std::uint8_t>(static_cast<std::size_t>(res) * res, 0)};
    }

    std::size_t cell_count() const { return bits.size(); }
    std::size_t popcount() const {
        return static_cast<std::size_t>(
            std::accumulate(bits.begin(), bits.end(), std::int64_t{0}));
    }
    double density() const { return bits.empty() ? 0.0 : double(popcount()) / double(bits.size()); }
};

inline void check_mask(const MotionMask& m, const char* what = "mask") {
    if (m.width < 1 || m.height < 1 ||
        m.bits.size() != static_cast<std::size_t>(m.width) * m.height)
        throw ValidationError(std::string(what) + ": inconsistent dimensions");
    for (auto b : m.bits)
        if (b > 1) throw ValidationError(std::string(what) + ": non-binary cell");
}

// All masks for one run: frame i in {2..Z} x every attention resolution.
struct MaskPyramid {
    int frame_count = 0;  // Z
    std::vector<int> resolutions;
    std::map<std::pair<int, int>, MotionMask> masks;  // key (frame i, resolution)

    bool contains(int frame, int res) const { return masks.count({frame, res}) != 0; }

    const MotionMask& at(int frame, int res) const {
        auto it = masks.find({frame, res});
        if (it == masks.end())
            throw ValidationError("mask missing for frame " + std::to_string(frame) +
                                  " at resolution " + std::to_string(res));
        return it->second;
    }

    void insert(MotionMask mask) {
        const auto key = std::make_pair(mask.frame_index, mask.block_res);
        if (masks.count(key))
            throw ValidationError("duplicate mask for frame " + std::to_string(key.first));
        masks.emplace(key, std::move(mask));
    }

    std::size_t size() const { return masks.size(); }
};

// View of one resolution level, in the form build_sparse_kv consumes.
inline std::map<int, const MotionMask*> mask_slice(const MaskPyramid& pyramid, int res) {
    std::map<int, const MotionMask*> slice;
    for (const auto& [key, mask] : pyramid.masks)
        if (key.second == res) slice.emplace(key.first, &mask);
    return slice;
}

}  // namespace adave
