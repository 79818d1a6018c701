#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "adave/errors.hpp"
#include "adave/mask.hpp"
#include "adave/parallel.hpp"
#include "adave/rng.hpp"

namespace adave {

// ---------------------------------------------------------------------------
// TokenMatrix: T x c float32 matrix of per-frame tokens. spatial_res records
// the block grid the rows were laid out from (0 = unspecified).
// ---------------------------------------------------------------------------

struct TokenMatrix {
    int rows = 0;
    int cols = 0;
    int spatial_res = 0;
    std::vector<float> data;

    static TokenMatrix zeros(int r, int c, int res = 0) {
        return TokenMatrix{r, c, res, std::vector<float>(static_cast<std::size_t>(r) * c, 0.0f)};
    }

    // Uniform [-1, 1) entries from the deterministic generator.
    static TokenMatrix seeded(int r, int c, std::uint64_t seed, int res = 0) {
        TokenMatrix m = zeros(r, c, res);
        SplitMix64 rng(seed);
        for (auto& x : m.data) x = rng.next_float_signed();
        return m;
    }

    float* row(int i) { return data.data() + static_cast<std::size_t>(i) * cols; }
    const float* row(int i) const { return data.data() + static_cast<std::size_t>(i) * cols; }
    float& at(int i, int j) { return data[static_cast<std::size_t>(i) * cols + j]; }
    float at(int i, int j) const { return data[static_cast<std::size_t>(i) * cols + j]; }

    bool same_shape(const TokenMatrix& o) const { return rows == o.rows && cols == o.cols; }
    bool same_bits(const TokenMatrix& o) const {
        return same_shape(o) &&
               std::memcmp(data.data(), o.data.data(), data.size() * sizeof(float)) == 0;
    }
};

inline void check_tokens(const TokenMatrix& m, const char* what = "token matrix") {
    if (m.rows < 1 || m.cols < 1 ||
        m.data.size() != static_cast<std::size_t>(m.rows) * m.cols)
        throw ValidationError(std::string(what) + ": inconsistent shape");
}

// out = a * b, float32 accumulation in ascending k order.
inline TokenMatrix matmul(const TokenMatrix& a, const TokenMatrix& b, unsigned workers = 1) {
    check_tokens(a, "matmul lhs");
    check_tokens(b, "matmul rhs");
    if (a.cols != b.rows) throw ValidationError("matmul: inner dimension mismatch");
    TokenMatrix out = TokenMatrix::zeros(a.rows, b.cols, a.spatial_res);
    parallel_for(static_cast<std::size_t>(a.rows), workers, [&](std::size_t i) {
        float* o = out.row(static_cast<int>(i));
        const float* ar = a.row(static_cast<int>(i));
        for (int k = 0; k < a.cols; ++k) {
            const float av = ar[k];
            const float* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) o[j] += av * br[j];
        }
    });
    return out;
}

// ---------------------------------------------------------------------------
// Attention kernel. One code path serves basic, fully extended, sparse and
// cached attention; the variants differ only in how the KV side was built.
// Row results depend only on their own index, so worker count never changes
// the bytes produced.
// ---------------------------------------------------------------------------

namespace detail {

inline float dot_f32(const float* a, const float* b, int n) {
    float s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    int c = 0;
    for (; c + 4 <= n; c += 4) {
        s0 += a[c] * b[c];
        s1 += a[c + 1] * b[c + 1];
        s2 += a[c + 2] * b[c + 2];
        s3 += a[c + 3] * b[c + 3];
    }
    float s = (s0 + s1) + (s2 + s3);
    for (; c < n; ++c) s += a[c] * b[c];
    return s;
}

// Strided single-head attention: Q rows live at q + i*q_stride (dh floats
// used), likewise K/V/out. Query rows are processed in blocks of 16 so the
// KV side streams once per block instead of once per row.
inline void attention_head(const float* q, std::size_t q_stride, std::size_t q_rows,
                           const float* k, std::size_t k_stride, const float* v,
                           std::size_t v_stride, std::size_t kv_rows, int dh, float scale,
                           float* out, std::size_t out_stride, unsigned workers) {
    constexpr std::size_t kBlock = 16;
    const std::size_t blocks = (q_rows + kBlock - 1) / kBlock;
    parallel_for(blocks, workers, [&](std::size_t bi) {
        const std::size_t r0 = bi * kBlock;
        const std::size_t r1 = std::min(r0 + kBlock, q_rows);
        const std::size_t nb = r1 - r0;
        std::vector<float> scores(nb * kv_rows);

        for (std::size_t l = 0; l < kv_rows; ++l) {
            const float* kr = k + l * k_stride;
            for (std::size_t i = 0; i < nb; ++i)
                scores[i * kv_rows + l] = dot_f32(q + (r0 + i) * q_stride, kr, dh) * scale;
        }
        std::vector<float> inv(nb);
        for (std::size_t i = 0; i < nb; ++i) {
            float* row = scores.data() + i * kv_rows;
            float mx = row[0];
            for (std::size_t l = 1; l < kv_rows; ++l) mx = std::max(mx, row[l]);
            float sum = 0.0f;
            for (std::size_t l = 0; l < kv_rows; ++l) {
                row[l] = std::exp(row[l] - mx);
                sum += row[l];
            }
            inv[i] = 1.0f / sum;
            float* o = out + (r0 + i) * out_stride;
            std::fill(o, o + dh, 0.0f);
        }
        for (std::size_t l = 0; l < kv_rows; ++l) {
            const float* vr = v + l * v_stride;
            for (std::size_t i = 0; i < nb; ++i) {
                const float w = scores[i * kv_rows + l] * inv[i];
                float* o = out + (r0 + i) * out_stride;
                for (int c = 0; c < dh; ++c) o[c] += w * vr[c];
            }
        }
    });
}

inline void check_heads(int scale_dim, int head_count) {
    if (head_count < 1) throw ValidationError("head_count must be >= 1");
    if (scale_dim % head_count != 0)
        throw ValidationError("scale dimension must be divisible by head_count");
}

}  // namespace detail

inline TokenMatrix softmax_rows(const TokenMatrix& m) {
    check_tokens(m, "softmax input");
    TokenMatrix out = TokenMatrix::zeros(m.rows, m.cols, m.spatial_res);
    for (int i = 0; i < m.rows; ++i) {
        const float* r = m.row(i);
        float* o = out.row(i);
        float mx = r[0];
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, r[j]);
        float sum = 0.0f;
        for (int j = 0; j < m.cols; ++j) {
            o[j] = std::exp(r[j] - mx);
            sum += o[j];
        }
        const float inv = 1.0f / sum;
        for (int j = 0; j < m.cols; ++j) o[j] *= inv;
    }
    return out;
}

// Softmax(Q Kt / sqrt(d)) V. Multi-head splits the columns into head_count
// equal slices, each attending independently with scale sqrt(d/heads),
// outputs concatenated.
inline TokenMatrix self_attention(const TokenMatrix& q, const TokenMatrix& k,
                                  const TokenMatrix& v, int scale_dim, int head_count = 1,
                                  unsigned workers = 1) {
    check_tokens(q, "Q");
    check_tokens(k, "K");
    check_tokens(v, "V");
    if (q.cols != scale_dim || k.cols != scale_dim || v.cols != scale_dim)
        throw ValidationError("self_attention: column dimension must equal scale dim");
    if (k.rows != v.rows) throw ValidationError("self_attention: K/V row mismatch");
    detail::check_heads(scale_dim, head_count);

    const int dh = scale_dim / head_count;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
    TokenMatrix out = TokenMatrix::zeros(q.rows, scale_dim, q.spatial_res);
    for (int h = 0; h < head_count; ++h) {
        const std::size_t off = static_cast<std::size_t>(h) * dh;
        detail::attention_head(q.data.data() + off, q.cols, q.rows, k.data.data() + off, k.cols,
                               v.data.data() + off, v.cols, k.rows, dh, scale,
                               out.data.data() + off, out.cols, workers);
    }
    return out;
}

// ---------------------------------------------------------------------------
// SparseKV: concatenated keys/values gathered from the reference frames,
// with per-token provenance in canonical (frame, position) order.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kSparseKvLayoutVersion = 1;

struct TokenRef {
    std::uint32_t frame = 0;     // 1-based reference index
    std::uint32_t position = 0;  // 0-based token position within the frame
    friend bool operator==(const TokenRef&, const TokenRef&) = default;
};

struct SparseKV {
    std::uint32_t layout_version = kSparseKvLayoutVersion;
    int dim = 0;
    TokenMatrix keys;    // L x dim
    TokenMatrix values;  // L x dim
    std::vector<TokenRef> provenance;

    std::size_t token_count() const { return provenance.size(); }

    // Serialized size minus the 12-byte header.
    std::size_t payload_bytes() const {
        const std::size_t l = token_count();
        return 2 * l * static_cast<std::size_t>(dim) * sizeof(float) + 8 * l;
    }

    bool same_bits(const SparseKV& o) const {
        return layout_version == o.layout_version && dim == o.dim && keys.same_bits(o.keys) &&
               values.same_bits(o.values) && provenance == o.provenance;
    }
};

inline constexpr std::size_t kSparseKvHeaderBytes = 12;

inline std::vector<std::uint8_t> serialize_sparse_kv(const SparseKV& kv) {
    const std::uint32_t l = static_cast<std::uint32_t>(kv.token_count());
    const std::uint32_t d = static_cast<std::uint32_t>(kv.dim);
    std::vector<std::uint8_t> out;
    out.resize(kSparseKvHeaderBytes + kv.payload_bytes());
    std::uint8_t* p = out.data();
    auto put_u32 = [&p](std::uint32_t x) {
        std::memcpy(p, &x, 4);
        p += 4;
    };
    put_u32(kv.layout_version);
    put_u32(l);
    put_u32(d);
    const std::size_t mat_bytes = static_cast<std::size_t>(l) * d * sizeof(float);
    std::memcpy(p, kv.keys.data.data(), mat_bytes);
    p += mat_bytes;
    std::memcpy(p, kv.values.data.data(), mat_bytes);
    p += mat_bytes;
    for (const TokenRef& t : kv.provenance) {
        std::memcpy(p, &t.frame, 4);
        p += 4;
        std::memcpy(p, &t.position, 4);
        p += 4;
    }
    return out;
}

inline SparseKV deserialize_sparse_kv(const std::uint8_t* data, std::size_t size) {
    if (size < kSparseKvHeaderBytes) throw IoError("SparseKV record truncated");
    std::uint32_t version = 0, l = 0, d = 0;
    std::memcpy(&version, data, 4);
    std::memcpy(&l, data + 4, 4);
    std::memcpy(&d, data + 8, 4);
    if (version != kSparseKvLayoutVersion)
        throw IoError("SparseKV layout_version mismatch: " + std::to_string(version));
    const std::size_t payload =
        2 * static_cast<std::size_t>(l) * d * sizeof(float) + 8 * static_cast<std::size_t>(l);
    if (size != kSparseKvHeaderBytes + payload)
        throw IoError("SparseKV record size mismatch");
    SparseKV kv;
    kv.layout_version = version;
    kv.dim = static_cast<int>(d);
    kv.keys = TokenMatrix::zeros(static_cast<int>(l), static_cast<int>(d));
    kv.values = TokenMatrix::zeros(static_cast<int>(l), static_cast<int>(d));
    kv.provenance.resize(l);
    const std::uint8_t* p = data + kSparseKvHeaderBytes;
    const std::size_t mat_bytes = static_cast<std::size_t>(l) * d * sizeof(float);
    std::memcpy(kv.keys.data.data(), p, mat_bytes);
    p += mat_bytes;
    std::memcpy(kv.values.data.data(), p, mat_bytes);
    p += mat_bytes;
    for (std::uint32_t i = 0; i < l; ++i) {
        std::memcpy(&kv.provenance[i].frame, p, 4);
        p += 4;
        std::memcpy(&kv.provenance[i].position, p, 4);
        p += 4;
    }
    return kv;
}

inline SparseKV deserialize_sparse_kv(const std::vector<std::uint8_t>& bytes) {
    return deserialize_sparse_kv(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// KV extension
// ---------------------------------------------------------------------------

// Reference indices whose full token set enters the sparse KV: frame 1,
// every multiple of the interval, and the last frame.
inline std::vector<int> full_frame_indices(int z, int r) {
    if (z < 1) throw ValidationError("full_frame_indices: Z must be >= 1");
    if (r < 1) throw ValidationError("full_frame_indices: interval must be >= 1");
    std::set<int> full{1, z};
    for (int i = r; i <= z; i += r) full.insert(i);
    return {full.begin(), full.end()};
}

struct FrameTokens {
    int frame_index = 0;  // 1-based reference index
    TokenMatrix k;
    TokenMatrix v;
};

namespace detail {

inline void check_frame_tokens(const std::vector<FrameTokens>& frames, int z) {
    if (z < 1) throw ValidationError("KV extension: Z must be >= 1");
    if (frames.size() != static_cast<std::size_t>(z))
        throw ValidationError("KV extension: expected " + std::to_string(z) + " frames, got " +
                              std::to_string(frames.size()));
    std::set<int> seen;
    for (const auto& f : frames) {
        check_tokens(f.k, "K");
        check_tokens(f.v, "V");
        if (!f.k.same_shape(frames.front().k) || !f.v.same_shape(frames.front().v))
            throw ValidationError("KV extension: heterogeneous frame shapes");
        if (f.k.rows != f.v.rows || f.k.cols != f.v.cols)
            throw ValidationError("KV extension: K/V shape mismatch");
        if (f.frame_index < 1 || f.frame_index > z || !seen.insert(f.frame_index).second)
            throw ValidationError("KV extension: frame indices must be a permutation of 1..Z");
    }
}

}  // namespace detail

// Eq.-style sparse gather. Frames at full indices contribute every token;
// each other frame contributes exactly the 1-positions of its mask. Masked
// rows are gathered (dropped), not zeroed: the token count L is what the
// compute and memory savings are made of. Input frame order is irrelevant;
// output provenance is always ascending (frame, position).
inline SparseKV build_sparse_kv(std::vector<FrameTokens> frames,
                                const std::map<int, const MotionMask*>& masks,
                                int full_interval, int z) {
    detail::check_frame_tokens(frames, z);
    std::sort(frames.begin(), frames.end(),
              [](const FrameTokens& a, const FrameTokens& b) { return a.frame_index < b.frame_index; });

    const int tokens_per_frame = frames.front().k.rows;
    const int dim = frames.front().k.cols;
    const std::vector<int> full = full_frame_indices(z, full_interval);
    const std::set<int> full_set(full.begin(), full.end());

    std::size_t total = 0;
    std::vector<std::vector<std::uint32_t>> gathered(frames.size());
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        const int index = frames[fi].frame_index;
        if (full_set.count(index)) {
            gathered[fi].resize(tokens_per_frame);
            for (int p = 0; p < tokens_per_frame; ++p)
                gathered[fi][p] = static_cast<std::uint32_t>(p);
        } else {
            auto it = masks.find(index);
            if (it == masks.end() || it->second == nullptr)
                throw ValidationError("build_sparse_kv: mask missing for frame " +
                                      std::to_string(index));
            const MotionMask& mask = *it->second;
            check_mask(mask);
            if (mask.cell_count() != static_cast<std::size_t>(tokens_per_frame))
                throw ValidationError("build_sparse_kv: mask/token resolution mismatch for frame " +
                                      std::to_string(index));
            if (frames[fi].k.spatial_res > 0 && mask.block_res > 0 &&
                frames[fi].k.spatial_res != mask.block_res)
                throw ValidationError("build_sparse_kv: mask resolution disagrees with tokens");
            for (std::size_t p = 0; p < mask.bits.size(); ++p)
                if (mask.bits[p]) gathered[fi].push_back(static_cast<std::uint32_t>(p));
        }
        total += gathered[fi].size();
    }

    SparseKV kv;
    kv.dim = dim;
    kv.keys = TokenMatrix::zeros(static_cast<int>(total), dim, frames.front().k.spatial_res);
    kv.values = TokenMatrix::zeros(static_cast<int>(total), dim, frames.front().v.spatial_res);
    kv.provenance.reserve(total);
    int row = 0;
    for (std::size_t fi = 0; fi < frames.size(); ++fi) {
        const auto& frame = frames[fi];
        for (std::uint32_t p : gathered[fi]) {
            std::memcpy(kv.keys.row(row), frame.k.row(static_cast<int>(p)),
                        sizeof(float) * dim);
            std::memcpy(kv.values.row(row), frame.v.row(static_cast<int>(p)),
                        sizeof(float) * dim);
            kv.provenance.push_back({static_cast<std::uint32_t>(frame.frame_index), p});
            ++row;
        }
    }
    return kv;
}

// Fully extended KV: every frame contributes every token. Equivalent to
// build_sparse_kv with all-ones masks and interval 1.
inline SparseKV extend_kv_full(const std::vector<TokenMatrix>& per_frame_k,
                               const std::vector<TokenMatrix>& per_frame_v) {
    if (per_frame_k.empty() || per_frame_k.size() != per_frame_v.size())
        throw ValidationError("extend_kv_full: need matching non-empty K/V lists");
    std::vector<FrameTokens> frames;
    frames.reserve(per_frame_k.size());
    for (std::size_t i = 0; i < per_frame_k.size(); ++i)
        frames.push_back({static_cast<int>(i + 1), per_frame_k[i], per_frame_v[i]});
    return build_sparse_kv(std::move(frames), {}, 1, static_cast<int>(per_frame_k.size()));
}

// Sparse extension of self-attention: one softmax over the concatenated
// sparse KV shared by every reference frame at a given (block, timestep).
inline TokenMatrix sesa(const TokenMatrix& q, const SparseKV& kv, int scale_dim,
                        int head_count = 1, unsigned workers = 1) {
    if (kv.dim != scale_dim)
        throw ValidationError("sesa: sparse KV dim disagrees with scale dim");
    return self_attention(q, kv.keys, kv.values, scale_dim, head_count, workers);
}

// Inter-frame attention for intermediate frames: the same kernel over the
// cached sparse KV. Kept as a named entry point so call sites say which
// pass they belong to; outputs are bit-identical to sesa on equal inputs.
inline TokenMatrix ifsa(const TokenMatrix& q, const SparseKV& cached, int scale_dim,
                        int head_count = 1, unsigned workers = 1) {
    return sesa(q, cached, scale_dim, head_count, workers);
}

// ---------------------------------------------------------------------------
// Cost model
// ---------------------------------------------------------------------------

// Per query frame: scores 2*Tq*L*d, softmax Tq*L, weighted sum 2*Tq*L*d.
inline double attention_flops(std::size_t t_q, std::size_t l, std::size_t d) {
    return 2.0 * static_cast<double>(t_q) * static_cast<double>(l) * static_cast<double>(d) +
           static_cast<double>(t_q) * static_cast<double>(l) +
           2.0 * static_cast<double>(t_q) * static_cast<double>(l) * static_cast<double>(d);
}

struct KvCost {
    std::size_t tokens = 0;  // L
    double flops = 0.0;      // per query frame of T rows
};

inline KvCost kv_token_count(int z, int tokens_per_frame,
                             const std::map<int, std::size_t>& mask_popcounts, int r, int dim) {
    if (tokens_per_frame < 1) throw ValidationError("kv_token_count: T must be >= 1");
    const std::vector<int> full = full_frame_indices(z, r);
    const std::set<int> full_set(full.begin(), full.end());
    std::size_t l = full.size() * static_cast<std::size_t>(tokens_per_frame);
    for (int i = 1; i <= z; ++i) {
        if (full_set.count(i)) continue;
        auto it = mask_popcounts.find(i);
        if (it == mask_popcounts.end())
            throw ValidationError("kv_token_count: popcount missing for frame " +
                                  std::to_string(i));
        if (it->second > static_cast<std::size_t>(tokens_per_frame))
            throw ValidationError("kv_token_count: popcount exceeds tokens per frame");
        l += it->second;
    }
    return {l, attention_flops(static_cast<std::size_t>(tokens_per_frame), l,
                               static_cast<std::size_t>(dim))};
}

// ---------------------------------------------------------------------------
// Projection weights (artifact plumbing; no trained model in scope)
// ---------------------------------------------------------------------------

struct ProjectionWeights {
    TokenMatrix wq, wk, wv;  // channels x dim
    int head_count = 1;

    static ProjectionWeights seeded(int channels, int dim, int head_count, std::uint64_t seed) {
        if (channels < 1 || dim < 1) throw ValidationError("ProjectionWeights: bad dimensions");
        detail::check_heads(dim, head_count);
        const float scale = 1.0f / std::sqrt(static_cast<float>(channels));
        ProjectionWeights w;
        w.head_count = head_count;
        auto make = [&](std::uint64_t which) {
            TokenMatrix m = TokenMatrix::zeros(channels, dim);
            SplitMix64 rng(mix_seed(seed, which));
            for (auto& x : m.data) x = rng.next_float_signed() * scale;
            return m;
        };
        w.wq = make(1);
        w.wk = make(2);
        w.wv = make(3);
        return w;
    }
};

}  // namespace adave
