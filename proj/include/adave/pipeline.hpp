#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "adave/attention.hpp"
#include "adave/errors.hpp"
#include "adave/kv_cache.hpp"
#include "adave/motion_mask.hpp"
#include "adave/parallel.hpp"
#include "adave/synthetic.hpp"

namespace adave {

// ---------------------------------------------------------------------------
// Schedule configuration
// ---------------------------------------------------------------------------

inline std::vector<int> descending_steps(int n) {
    std::vector<int> steps;
    for (int t = n; t >= 1; --t) steps.push_back(t);
    return steps;
}

struct BlockSpec {
    int res = 16;      // token grid height d
    int channels = 8;  // token feature width c
    int dim = 0;       // projection dim; 0 means channels
    int effective_dim() const { return dim > 0 ? dim : channels; }
};

struct ScheduleConfig {
    int total_frames = 8;         // N
    int ref_interval = 3;         // s: reference sampling interval
    int full_frame_interval = 4;  // r: full-frame KV interval among references
    std::vector<int> timesteps = descending_steps(50);
    std::uint64_t seed = 1;
    std::vector<BlockSpec> blocks{BlockSpec{}};
    int head_count = 1;
    unsigned workers = 0;  // 0 = available parallelism
    MaskOptions mask_options;
    FlowSourceSpec flow;

    void validate() const {
        if (total_frames < 1) throw ValidationError("config: total_frames must be >= 1");
        if (ref_interval < 1 || ref_interval > total_frames)
            throw ValidationError("config: ref_interval must be in [1, total_frames]");
        if (full_frame_interval < 1)
            throw ValidationError("config: full_frame_interval must be >= 1");
        if (timesteps.empty()) throw ValidationError("config: timesteps must be nonempty");
        for (std::size_t i = 1; i < timesteps.size(); ++i)
            if (timesteps[i] >= timesteps[i - 1])
                throw ValidationError("config: timesteps must be strictly decreasing");
        if (blocks.empty()) throw ValidationError("config: need at least one block");
        if (head_count < 1) throw ValidationError("config: head_count must be >= 1");
        for (const auto& b : blocks) {
            if (b.res < 1 || b.channels < 1)
                throw ValidationError("config: block res/channels must be >= 1");
            if (b.effective_dim() % head_count != 0)
                throw ValidationError("config: block dim must be divisible by head_count");
        }
    }
};

// ---------------------------------------------------------------------------
// Frame scheduling
// ---------------------------------------------------------------------------

// {1, 1+s, 1+2s, ...} plus the final frame, so the tail is never extrapolated.
inline std::vector<int> select_reference_frames(int n, int s) {
    if (n < 1) throw ValidationError("select_reference_frames: N must be >= 1");
    if (s < 1) throw ValidationError("select_reference_frames: s must be >= 1");
    std::vector<int> refs;
    for (int i = 1; i <= n; i += s) refs.push_back(i);
    if (refs.back() != n) refs.push_back(n);
    return refs;
}

// Midpoint-bisection processing order for the frames outside R: level by
// level, each level holds the midpoints of adjacent already-scheduled pairs
// with gap > 1, ascending within a level. Frames outside the hull of R (no
// adjacent scheduled pair can reach them) are appended ascending at the end.
inline std::vector<int> hierarchical_order(int n, const std::vector<int>& refs) {
    if (n < 0) throw ValidationError("hierarchical_order: N must be >= 0");
    std::set<int> scheduled;
    for (int r : refs) {
        if (r < 1 || r > n) throw ValidationError("hierarchical_order: reference out of range");
        scheduled.insert(r);
    }
    std::vector<int> order;
    while (true) {
        std::vector<int> level;
        int prev = 0;
        bool have_prev = false;
        for (int cur : scheduled) {
            if (have_prev && cur - prev > 1) level.push_back((prev + cur) / 2);
            prev = cur;
            have_prev = true;
        }
        if (level.empty()) break;
        for (int m : level) scheduled.insert(m);
        order.insert(order.end(), level.begin(), level.end());
    }
    for (int i = 1; i <= n; ++i)
        if (!scheduled.count(i)) order.push_back(i);
    return order;
}

// ---------------------------------------------------------------------------
// Synthetic denoiser: seeded projections plus a fixed linear mixing stage
// with a residual connection per block. Enough structure to make the
// multi-block, multi-timestep plumbing meaningful; no trained weights.
// ---------------------------------------------------------------------------

struct DenoiserBlock {
    int res = 0;
    int channels = 0;
    int dim = 0;
    ProjectionWeights proj;
    TokenMatrix mix;  // dim x channels
};

struct SyntheticDenoiser {
    std::vector<DenoiserBlock> blocks;
    int head_count = 1;

    static SyntheticDenoiser seeded(const ScheduleConfig& cfg) {
        cfg.validate();
        SyntheticDenoiser d;
        d.head_count = cfg.head_count;
        for (std::size_t j = 0; j < cfg.blocks.size(); ++j) {
            const BlockSpec& spec = cfg.blocks[j];
            DenoiserBlock block;
            block.res = spec.res;
            block.channels = spec.channels;
            block.dim = spec.effective_dim();
            block.proj = ProjectionWeights::seeded(spec.channels, block.dim, cfg.head_count,
                                                   mix_seed(cfg.seed, 0xb10c, j));
            block.mix = TokenMatrix::zeros(block.dim, spec.channels);
            SplitMix64 rng(mix_seed(cfg.seed, 0x310c, j));
            const float scale = 0.5f / std::sqrt(static_cast<float>(block.dim));
            for (auto& x : block.mix.data) x = rng.next_float_signed() * scale;
            d.blocks.push_back(std::move(block));
        }
        return d;
    }
};

// Per-frame token state entering each block.
struct LatentState {
    int frame_id = 0;  // 1-based video frame index
    std::vector<TokenMatrix> blocks;
};

// Token grid width for a block given the video aspect; square for w == h.
inline int block_grid_width(int res, int frame_w, int frame_h) {
    return mask_width_for(res, frame_w, frame_h);
}

inline std::uint64_t frame_content_hash(const Frame& f) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto feed = [&h](std::uint64_t x) {
        for (int i = 0; i < 8; ++i) {
            h ^= (x >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    feed(static_cast<std::uint64_t>(f.width));
    feed(static_cast<std::uint64_t>(f.height));
    for (std::uint8_t p : f.pixels) {
        h ^= p;
        h *= 1099511628211ULL;
    }
    return h;
}

// Initial latents stand in for the inversion step that is out of scope:
// deterministic pseudo-random tokens seeded from (run seed, frame content).
// Content seeding means identical frames get identical latents, which is
// what makes zero-motion videos come out byte-identical end to end.
inline std::vector<LatentState> initial_latents(const ScheduleConfig& cfg,
                                                const std::vector<int>& frame_ids,
                                                const std::vector<Frame>& frames) {
    std::vector<LatentState> latents;
    latents.reserve(frame_ids.size());
    for (int id : frame_ids) {
        if (id < 1 || id > static_cast<int>(frames.size()))
            throw ValidationError("initial_latents: frame id out of range");
        const Frame& frame = frames[id - 1];
        const std::uint64_t content = frame_content_hash(frame);
        LatentState state;
        state.frame_id = id;
        for (std::size_t j = 0; j < cfg.blocks.size(); ++j) {
            const BlockSpec& b = cfg.blocks[j];
            const int cells_w = block_grid_width(b.res, frame.width, frame.height);
            state.blocks.push_back(TokenMatrix::seeded(
                b.res * cells_w, b.channels, mix_seed(cfg.seed, content, j), b.res));
        }
        latents.push_back(std::move(state));
    }
    return latents;
}

namespace detail {

inline void add_inplace(TokenMatrix& a, const TokenMatrix& b) {
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Two-pass editing
// ---------------------------------------------------------------------------

// Pass 1 (Fig.-2 style joint editing): for every timestep and block, project
// all reference frames, build the shared sparse KV, cache it, and update
// each reference frame through SESA plus the mixing stage. Seals the cache.
inline void joint_edit_pass(std::vector<LatentState>& ref_latents, const MaskPyramid& masks,
                            const ScheduleConfig& cfg, const SyntheticDenoiser& denoiser,
                            KVCache& cache) {
    if (cache.sealed() || cache.size() != 0)
        throw ValidationError("joint_edit_pass: cache must be unsealed and empty");
    const int z = static_cast<int>(ref_latents.size());
    if (z < 1) throw ValidationError("joint_edit_pass: need at least one reference frame");

    for (int t : cfg.timesteps) {
        for (std::size_t j = 0; j < denoiser.blocks.size(); ++j) {
            const DenoiserBlock& block = denoiser.blocks[j];
            const auto slice = mask_slice(masks, block.res);

            std::vector<FrameTokens> frames(z);
            parallel_for(static_cast<std::size_t>(z), cfg.workers, [&](std::size_t i) {
                frames[i].frame_index = static_cast<int>(i + 1);
                frames[i].k = matmul(ref_latents[i].blocks[j], block.proj.wk);
                frames[i].v = matmul(ref_latents[i].blocks[j], block.proj.wv);
            });

            SparseKV kv = build_sparse_kv(std::move(frames), slice, cfg.full_frame_interval, z);
            cache.put(CacheKey{t, static_cast<int>(j)}, kv);

            parallel_for(static_cast<std::size_t>(z), cfg.workers, [&](std::size_t i) {
                TokenMatrix q = matmul(ref_latents[i].blocks[j], block.proj.wq);
                TokenMatrix attended = sesa(q, kv, block.dim, denoiser.head_count);
                detail::add_inplace(ref_latents[i].blocks[j], matmul(attended, block.mix));
            });
        }
    }
    cache.seal();
}

// Pass 2: intermediate frames query the cached sparse KV; nothing is ever
// written back. `order` gives positions into int_latents (defaults to
// ascending); outputs do not depend on it.
inline void intermediate_pass(std::vector<LatentState>& int_latents, const ScheduleConfig& cfg,
                              const SyntheticDenoiser& denoiser, const KVCache& cache,
                              const std::vector<int>* order = nullptr) {
    if (!cache.sealed()) throw CacheNotSealed("intermediate_pass: cache must be sealed");
    std::vector<int> positions;
    if (order) {
        positions = *order;
        if (positions.size() != int_latents.size())
            throw ValidationError("intermediate_pass: order size mismatch");
        std::set<int> seen;
        for (int p : positions)
            if (p < 0 || p >= static_cast<int>(int_latents.size()) || !seen.insert(p).second)
                throw ValidationError("intermediate_pass: order must be a permutation");
    } else {
        positions.resize(int_latents.size());
        for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
    }

    parallel_for(positions.size(), cfg.workers, [&](std::size_t oi) {
        LatentState& state = int_latents[positions[oi]];
        for (int t : cfg.timesteps) {
            for (std::size_t j = 0; j < denoiser.blocks.size(); ++j) {
                const DenoiserBlock& block = denoiser.blocks[j];
                const SparseKV& kv = cache.get(CacheKey{t, static_cast<int>(j)});
                TokenMatrix q = matmul(state.blocks[j], block.proj.wq);
                TokenMatrix attended = ifsa(q, kv, block.dim, denoiser.head_count);
                detail::add_inplace(state.blocks[j], matmul(attended, block.mix));
            }
        }
    });
}

// ---------------------------------------------------------------------------
// End-to-end run
// ---------------------------------------------------------------------------

struct RunReport {
    int total_frames = 0;
    int reference_count = 0;  // Z
    std::vector<int> reference_frames;
    std::vector<int> full_frames;  // reference-list indices with full KV
    std::vector<std::size_t> kv_tokens_per_block;  // L at each block (stable across timesteps)
    std::vector<std::size_t> full_tokens_per_block;  // Z*T per block, for comparison
    std::size_t cache_entries = 0;
    std::size_t cache_payload_bytes = 0;
    std::size_t cache_total_bytes = 0;
    double modeled_attention_flops = 0.0;
    double preprocess_ms = 0.0;
    double joint_ms = 0.0;
    double intermediate_ms = 0.0;
    unsigned workers = 1;
    std::uint64_t seed = 0;
    std::uint64_t latents_fingerprint = 0;
};

inline std::uint64_t latents_fingerprint(const std::vector<LatentState>& latents) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    for (const auto& state : latents) {
        feed(&state.frame_id, sizeof(state.frame_id));
        for (const auto& m : state.blocks) {
            feed(&m.rows, sizeof(m.rows));
            feed(&m.cols, sizeof(m.cols));
            feed(m.data.data(), m.data.size() * sizeof(float));
        }
    }
    return h;
}

struct PipelineResult {
    std::vector<LatentState> latents;  // all N frames, ascending frame_id
    KVCache cache;
    RunReport report;
};

inline PipelineResult run_pipeline(const ScheduleConfig& cfg, const std::vector<Frame>& frames) {
    using clock = std::chrono::steady_clock;
    cfg.validate();
    if (frames.size() != static_cast<std::size_t>(cfg.total_frames))
        throw ValidationError("run_pipeline: frame count disagrees with config");
    for (const auto& f : frames) check_frame(f);

    const std::vector<int> refs = select_reference_frames(cfg.total_frames, cfg.ref_interval);
    const int z = static_cast<int>(refs.size());

    const auto t0 = clock::now();

    std::set<int> res_set;
    for (const auto& b : cfg.blocks) res_set.insert(b.res);
    MaskPyramid masks;
    masks.frame_count = z;
    masks.resolutions.assign(res_set.begin(), res_set.end());
    if (z >= 2) {
        std::vector<Frame> ref_frames;
        ref_frames.reserve(z);
        for (int r : refs) ref_frames.push_back(frames[r - 1]);
        masks = build_mask_pyramid(ref_frames, masks.resolutions, cfg.flow, cfg.mask_options);
    }

    const auto t1 = clock::now();

    const int fw = frames.front().width, fh = frames.front().height;
    std::vector<int> intermediates;
    const std::set<int> ref_set(refs.begin(), refs.end());
    for (int i = 1; i <= cfg.total_frames; ++i)
        if (!ref_set.count(i)) intermediates.push_back(i);

    std::vector<LatentState> ref_latents = initial_latents(cfg, refs, frames);
    std::vector<LatentState> int_latents = initial_latents(cfg, intermediates, frames);

    const SyntheticDenoiser denoiser = SyntheticDenoiser::seeded(cfg);
    KVCache cache;
    joint_edit_pass(ref_latents, masks, cfg, denoiser, cache);

    const auto t2 = clock::now();

    // Hierarchical midpoint order; outputs are order-independent, the order
    // is the processing narrative only.
    const std::vector<int> frame_order = hierarchical_order(cfg.total_frames, refs);
    std::vector<int> positions;
    positions.reserve(frame_order.size());
    std::map<int, int> pos_of;
    for (std::size_t i = 0; i < intermediates.size(); ++i) pos_of[intermediates[i]] = static_cast<int>(i);
    for (int fid : frame_order) positions.push_back(pos_of.at(fid));
    intermediate_pass(int_latents, cfg, denoiser, cache, &positions);

    const auto t3 = clock::now();

    PipelineResult result;
    result.latents.resize(cfg.total_frames);
    for (auto& state : ref_latents) result.latents[state.frame_id - 1] = std::move(state);
    for (auto& state : int_latents) result.latents[state.frame_id - 1] = std::move(state);
    result.cache = std::move(cache);

    RunReport& rep = result.report;
    rep.total_frames = cfg.total_frames;
    rep.reference_count = z;
    rep.reference_frames = refs;
    rep.full_frames = full_frame_indices(z, cfg.full_frame_interval);
    const int first_t = cfg.timesteps.front();
    for (std::size_t j = 0; j < cfg.blocks.size(); ++j) {
        const auto& kv = result.cache.get(CacheKey{first_t, static_cast<int>(j)});
        rep.kv_tokens_per_block.push_back(kv.token_count());
        const int cells_w = block_grid_width(cfg.blocks[j].res, fw, fh);
        rep.full_tokens_per_block.push_back(static_cast<std::size_t>(z) * cfg.blocks[j].res *
                                            cells_w);
    }
    const CacheStats stats = cache_stats(result.cache);
    rep.cache_entries = stats.entry_count;
    rep.cache_payload_bytes = stats.payload_bytes;
    rep.cache_total_bytes = stats.total_bytes;
    for (const auto& [key, kv] : result.cache.entries()) {
        const std::size_t jj = static_cast<std::size_t>(key.block);
        const int cells_w = block_grid_width(cfg.blocks[jj].res, fw, fh);
        rep.modeled_attention_flops +=
            static_cast<double>(cfg.total_frames) *
            attention_flops(static_cast<std::size_t>(cfg.blocks[jj].res) * cells_w,
                            kv.token_count(),
                            static_cast<std::size_t>(cfg.blocks[jj].effective_dim()));
    }
    rep.preprocess_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rep.joint_ms = std::chrono::duration<double, std::milli>(t2 - t1).count();
    rep.intermediate_ms = std::chrono::duration<double, std::milli>(t3 - t2).count();
    rep.workers = cfg.workers;
    rep.seed = cfg.seed;
    rep.latents_fingerprint = latents_fingerprint(result.latents);
    return result;
}

inline PipelineResult run_pipeline(const ScheduleConfig& cfg, const RectScene& scene) {
    return run_pipeline(cfg, generate_rect_scene(scene));
}

// ---------------------------------------------------------------------------
// Latent dump: deterministic binary layout for byte-level comparisons.
// ---------------------------------------------------------------------------

inline void save_latents(const std::vector<LatentState>& latents,
                         const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    auto put_u32 = [&out](std::uint32_t x) { out.write(reinterpret_cast<const char*>(&x), 4); };
    out.write("ADLT", 4);
    put_u32(1);  // version
    put_u32(static_cast<std::uint32_t>(latents.size()));
    for (const auto& state : latents) {
        put_u32(static_cast<std::uint32_t>(state.frame_id));
        put_u32(static_cast<std::uint32_t>(state.blocks.size()));
        for (const auto& m : state.blocks) {
            put_u32(static_cast<std::uint32_t>(m.rows));
            put_u32(static_cast<std::uint32_t>(m.cols));
            put_u32(static_cast<std::uint32_t>(m.spatial_res));
            out.write(reinterpret_cast<const char*>(m.data.data()),
                      static_cast<std::streamsize>(m.data.size() * sizeof(float)));
        }
    }
    if (!out) throw IoError("short write: " + path.string());
}

// ---------------------------------------------------------------------------
// JSON bindings (config files and run reports)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const BlockSpec& b) {
    j = {{"res", b.res}, {"channels", b.channels}, {"dim", b.dim}};
}
inline void from_json(const nlohmann::json& j, BlockSpec& b) {
    b.res = j.value("res", 16);
    b.channels = j.value("channels", 8);
    b.dim = j.value("dim", 0);
}

inline void to_json(nlohmann::json& j, const ScheduleConfig& c) {
    j = {{"total_frames", c.total_frames},
         {"ref_interval", c.ref_interval},
         {"full_frame_interval", c.full_frame_interval},
         {"timesteps", c.timesteps},
         {"seed", c.seed},
         {"blocks", c.blocks},
         {"head_count", c.head_count},
         {"workers", c.workers},
         {"mask_mode", c.mask_options.mode == MaskMode::magnitude_otsu ? "magnitude" : "gray"},
         {"uniform_motion",
          c.mask_options.uniform == UniformMotionPolicy::all_moving ? "moving" : "static"},
         {"flow_source",
          c.flow.kind == FlowSourceSpec::Kind::flo_directory ? "flo_dir" : "block_matching"},
         {"flow_block", c.flow.block},
         {"flow_radius", c.flow.radius},
         {"flo_dir", c.flow.flo_dir.string()}};
}

inline void from_json(const nlohmann::json& j, ScheduleConfig& c) {
    c.total_frames = j.value("total_frames", c.total_frames);
    c.ref_interval = j.value("ref_interval", c.ref_interval);
    c.full_frame_interval = j.value("full_frame_interval", c.full_frame_interval);
    if (j.contains("timesteps"))
        c.timesteps = j.at("timesteps").get<std::vector<int>>();
    else if (j.contains("timestep_count"))
        c.timesteps = descending_steps(j.at("timestep_count").get<int>());
    c.seed = j.value("seed", c.seed);
    if (j.contains("blocks")) c.blocks = j.at("blocks").get<std::vector<BlockSpec>>();
    c.head_count = j.value("head_count", c.head_count);
    c.workers = j.value("workers", c.workers);
    const std::string mode = j.value("mask_mode", "gray");
    if (mode == "magnitude")
        c.mask_options.mode = MaskMode::magnitude_otsu;
    else if (mode == "gray")
        c.mask_options.mode = MaskMode::gray_otsu;
    else
        throw ValidationError("config: unknown mask_mode: " + mode);
    const std::string uniform = j.value("uniform_motion", "static");
    if (uniform == "moving")
        c.mask_options.uniform = UniformMotionPolicy::all_moving;
    else if (uniform == "static")
        c.mask_options.uniform = UniformMotionPolicy::all_static;
    else
        throw ValidationError("config: unknown uniform_motion: " + uniform);
    const std::string source = j.value("flow_source", "block_matching");
    if (source == "flo_dir")
        c.flow.kind = FlowSourceSpec::Kind::flo_directory;
    else if (source == "block_matching")
        c.flow.kind = FlowSourceSpec::Kind::block_matching;
    else
        throw ValidationError("config: unknown flow_source: " + source);
    c.flow.block = j.value("flow_block", c.flow.block);
    c.flow.radius = j.value("flow_radius", c.flow.radius);
    c.flow.flo_dir = j.value("flo_dir", c.flow.flo_dir.string());
}

inline void to_json(nlohmann::json& j, const RunReport& r) {
    j = {{"total_frames", r.total_frames},
         {"reference_count", r.reference_count},
         {"reference_frames", r.reference_frames},
         {"full_frames", r.full_frames},
         {"kv_tokens_per_block", r.kv_tokens_per_block},
         {"full_tokens_per_block", r.full_tokens_per_block},
         {"cache_entries", r.cache_entries},
         {"cache_payload_bytes", r.cache_payload_bytes},
         {"cache_total_bytes", r.cache_total_bytes},
         {"modeled_attention_flops", r.modeled_attention_flops},
         {"phase_ms",
          {{"preprocess", r.preprocess_ms},
           {"joint", r.joint_ms},
           {"intermediate", r.intermediate_ms}}},
         {"workers", r.workers},
         {"seed", r.seed},
         {"latents_fingerprint", r.latents_fingerprint}};
}

}  // namespace adave
