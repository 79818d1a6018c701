// adave: motion-adaptive sparse cross-frame attention toolkit.
//
// Subcommands: flow, masks, edit, bench, warp-error. All reports are JSON.
// Exit codes: 0 ok, 2 I/O error, 3 configuration/validation error,
// 4 internal invariant breach.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adave/bench.hpp"
#include "adave/errors.hpp"
#include "adave/image_io.hpp"
#include "adave/motion_mask.hpp"
#include "adave/pipeline.hpp"
#include "adave/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int log_level() {
    const char* env = std::getenv("ADAVE_LOG");
    if (!env) return 1;
    const std::string v(env);
    if (v == "quiet" || v == "0") return 0;
    if (v == "debug" || v == "2") return 2;
    return 1;
}

void log_info(const std::string& msg) {
    if (log_level() >= 1) std::fprintf(stderr, "[adave] %s\n", msg.c_str());
}

void log_debug(const std::string& msg) {
    if (log_level() >= 2) std::fprintf(stderr, "[adave:debug] %s\n", msg.c_str());
}

json load_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw adave::IoError("cannot open: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw adave::ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw adave::IoError("cannot open for writing: " + path.string());
    out << text;
    if (!out) throw adave::IoError("short write: " + path.string());
}

// --------------------------------------------------------------------------
// flow: N frames in, N-1 .flo files out
// --------------------------------------------------------------------------

struct FlowArgs {
    std::string frames_dir;
    std::string out_dir;
    int block = 8;
    int radius = 8;
};

int cmd_flow(const FlowArgs& args) {
    const auto frames = adave::read_frame_sequence(args.frames_dir);
    if (frames.size() < 2)
        throw adave::ValidationError("flow: need at least 2 frames, got " +
                                     std::to_string(frames.size()));
    fs::create_directories(args.out_dir);
    for (std::size_t i = 1; i < frames.size(); ++i) {
        const adave::FlowField field = adave::estimate_flow_block_matching(
            frames[i - 1], frames[i], args.block, args.radius);
        const fs::path out = fs::path(args.out_dir) / adave::flo_filename(static_cast<int>(i + 1));
        adave::write_flo(field, out);
        log_debug("wrote " + out.string());
    }
    log_info("wrote " + std::to_string(frames.size() - 1) + " flow files to " + args.out_dir);
    std::cout << args.out_dir << "\n";
    return 0;
}

// --------------------------------------------------------------------------
// masks: PGM pyramid + density summary
// --------------------------------------------------------------------------

struct MasksArgs {
    std::string frames_dir;
    std::string out_dir;
    std::vector<int> resolutions{16};
    std::string flo_dir;
    std::string mask_mode = "gray";
    std::string uniform_policy = "static";
    int block = 8;
    int radius = 8;
};

int cmd_masks(const MasksArgs& args) {
    const auto frames = adave::read_frame_sequence(args.frames_dir);
    adave::FlowSourceSpec source;
    if (!args.flo_dir.empty()) {
        source.kind = adave::FlowSourceSpec::Kind::flo_directory;
        source.flo_dir = args.flo_dir;
    } else {
        source.block = args.block;
        source.radius = args.radius;
    }
    adave::MaskOptions options;
    if (args.mask_mode == "magnitude")
        options.mode = adave::MaskMode::magnitude_otsu;
    else if (args.mask_mode != "gray")
        throw adave::ValidationError("masks: unknown --mask-mode: " + args.mask_mode);
    if (args.uniform_policy == "moving")
        options.uniform = adave::UniformMotionPolicy::all_moving;
    else if (args.uniform_policy != "static")
        throw adave::ValidationError("masks: unknown --uniform-policy: " + args.uniform_policy);

    const adave::MaskPyramid pyramid =
        adave::build_mask_pyramid(frames, args.resolutions, source, options);
    adave::save_mask_pyramid(pyramid, args.out_dir);

    json summary;
    summary["frames"] = pyramid.frame_count;
    summary["resolutions"] = args.resolutions;
    summary["densities"] = json::object();
    for (const auto& [key, mask] : pyramid.masks)
        summary["densities"][std::to_string(key.first)][std::to_string(key.second)] =
            mask.density();
    const fs::path summary_path = fs::path(args.out_dir) / "masks_summary.json";
    write_text_file(summary_path, summary.dump(2) + "\n");
    log_info("wrote " + std::to_string(pyramid.size()) + " masks to " + args.out_dir);
    std::cout << summary_path.string() << "\n";
    return 0;
}

// --------------------------------------------------------------------------
// edit: full two-pass pipeline
// --------------------------------------------------------------------------

struct EditArgs {
    std::string config_path;
    std::string out_dir = "adave_out";
    std::string frames_dir;  // overrides the config input
    bool save_cache = false;
    // Flag overrides; <0 / 0 mean "not set".
    int s = -1;
    int r = -1;
    int total_frames = -1;
    std::int64_t seed = -1;
    int workers = -1;
};

std::vector<adave::Frame> edit_input_frames(const json& cfg_json, const EditArgs& args,
                                            const adave::ScheduleConfig& cfg) {
    if (!args.frames_dir.empty()) return adave::read_frame_sequence(args.frames_dir);
    const json input = cfg_json.value("input", json{{"type", "synthetic"}});
    const std::string type = input.value("type", "synthetic");
    if (type == "frames") {
        if (!input.contains("dir"))
            throw adave::ValidationError("edit: input.type=frames requires input.dir");
        return adave::read_frame_sequence(input.at("dir").get<std::string>());
    }
    if (type != "synthetic")
        throw adave::ValidationError("edit: unknown input.type: " + type);
    adave::RectScene scene;
    scene.frame_count = cfg.total_frames;
    if (input.contains("scene")) {
        const json& s = input.at("scene");
        scene.width = s.value("width", scene.width);
        scene.height = s.value("height", scene.height);
        scene.rect_w = s.value("rect_w", scene.rect_w);
        scene.rect_h = s.value("rect_h", scene.rect_h);
        scene.rect_x = s.value("rect_x", scene.rect_x);
        scene.rect_y = s.value("rect_y", scene.rect_y);
        scene.vel_x = s.value("vel_x", scene.vel_x);
        scene.vel_y = s.value("vel_y", scene.vel_y);
        scene.texture_seed = s.value("texture_seed", scene.texture_seed);
    }
    return adave::generate_rect_scene(scene);
}

int cmd_edit(const EditArgs& args) {
    json cfg_json = json::object();
    if (!args.config_path.empty()) cfg_json = load_json_file(args.config_path);

    adave::ScheduleConfig cfg;
    try {
        cfg = cfg_json.get<adave::ScheduleConfig>();
    } catch (const json::exception& e) {
        throw adave::ValidationError(std::string("edit: bad config: ") + e.what());
    }
    if (args.total_frames > 0) cfg.total_frames = args.total_frames;
    if (args.s > 0) cfg.ref_interval = args.s;
    if (args.r > 0) cfg.full_frame_interval = args.r;
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.workers >= 0) cfg.workers = static_cast<unsigned>(args.workers);
    cfg.validate();

    std::vector<adave::Frame> frames = edit_input_frames(cfg_json, args, cfg);
    if (static_cast<int>(frames.size()) != cfg.total_frames) {
        // Frames on disk win over the config's frame count.
        cfg.total_frames = static_cast<int>(frames.size());
        cfg.validate();
    }

    log_info("editing " + std::to_string(cfg.total_frames) + " frames, s=" +
             std::to_string(cfg.ref_interval) + ", r=" + std::to_string(cfg.full_frame_interval));
    adave::PipelineResult result = adave::run_pipeline(cfg, frames);

    fs::create_directories(args.out_dir);
    const fs::path report_path = fs::path(args.out_dir) / "report.json";
    write_text_file(report_path, json(result.report).dump(2) + "\n");
    adave::save_latents(result.latents, fs::path(args.out_dir) / "latents.bin");
    if (args.save_cache) result.cache.save(fs::path(args.out_dir) / "cache");

    std::cout << report_path.string() << "\n";
    return 0;
}

// --------------------------------------------------------------------------
// bench: sparse vs full attention latency
// --------------------------------------------------------------------------

struct BenchArgs {
    std::string config_path;
    std::string out_path;
    std::string csv_path;
    int z = -1, tokens = -1, dim = -1, heads = -1, r = -1, reps = -1, warmup = -1,
        query_frames = -1;
    double density = -1.0;
    std::int64_t seed = -1;
    int workers = -1;
};

int cmd_bench(const BenchArgs& args) {
    adave::BenchConfig cfg;
    if (!args.config_path.empty()) {
        try {
            cfg = load_json_file(args.config_path).get<adave::BenchConfig>();
        } catch (const json::exception& e) {
            throw adave::ValidationError(std::string("bench: bad config: ") + e.what());
        }
    }
    if (args.z > 0) cfg.z = args.z;
    if (args.tokens > 0) cfg.tokens = args.tokens;
    if (args.dim > 0) cfg.dim = args.dim;
    if (args.heads > 0) cfg.head_count = args.heads;
    if (args.r > 0) cfg.full_interval = args.r;
    if (args.density >= 0.0) cfg.density = args.density;
    if (args.reps > 0) cfg.repetitions = args.reps;
    if (args.warmup >= 0) cfg.warmup = args.warmup;
    if (args.query_frames > 0) cfg.query_frames = args.query_frames;
    if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
    if (args.workers >= 0) cfg.multi_workers = static_cast<unsigned>(args.workers);
    cfg.validate();

    log_info("benchmarking Z=" + std::to_string(cfg.z) + " T=" + std::to_string(cfg.tokens) +
             " d=" + std::to_string(cfg.dim) + " density=" + std::to_string(cfg.density));
    const adave::BenchReport report = adave::bench_attention(cfg);
    const std::string text = json(report).dump(2) + "\n";
    if (!args.out_path.empty()) {
        write_text_file(args.out_path, text);
        std::cout << args.out_path << "\n";
    } else {
        std::cout << text;
    }
    if (!args.csv_path.empty()) write_text_file(args.csv_path, adave::bench_report_csv(report));
    return 0;
}

// --------------------------------------------------------------------------
// warp-error
// --------------------------------------------------------------------------

struct WarpErrorArgs {
    std::string frames_dir;
    std::string flo_dir;
};

int cmd_warp_error(const WarpErrorArgs& args) {
    const auto frames = adave::read_frame_sequence(args.frames_dir);
    if (frames.size() < 2) throw adave::ValidationError("warp-error: need at least 2 frames");
    std::vector<adave::FlowField> flows;
    for (std::size_t i = 1; i < frames.size(); ++i)
        flows.push_back(
            adave::read_flo(fs::path(args.flo_dir) / adave::flo_filename(static_cast<int>(i + 1))));
    const double raw = adave::warp_error(frames, flows);
    log_debug("paper-scale value: " + std::to_string(adave::warp_error_paper_scale(raw)));
    std::printf("%.6f\n", raw);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Motion-adaptive sparse cross-frame attention toolkit"};
    app.require_subcommand(1);

    FlowArgs flow_args;
    auto* flow = app.add_subcommand("flow", "Estimate flow between successive frames");
    flow->add_option("frames_dir", flow_args.frames_dir, "Directory of indexed .png frames")
        ->required();
    flow->add_option("out_dir", flow_args.out_dir, "Output directory for .flo files")->required();
    flow->add_option("--block", flow_args.block, "Block-matching tile size");
    flow->add_option("--radius", flow_args.radius, "Search radius in pixels");

    MasksArgs masks_args;
    auto* masks = app.add_subcommand("masks", "Build motion-mask pyramid (PGM + summary)");
    masks->add_option("frames_dir", masks_args.frames_dir, "Directory of indexed .png frames")
        ->required();
    masks->add_option("out_dir", masks_args.out_dir, "Output directory")->required();
    masks->add_option("--resolutions", masks_args.resolutions, "Block resolutions")
        ->delimiter(',');
    masks->add_option("--flows", masks_args.flo_dir, "Directory of precomputed .flo files");
    masks->add_option("--mask-mode", masks_args.mask_mode, "gray | magnitude");
    masks->add_option("--uniform-policy", masks_args.uniform_policy, "static | moving");
    masks->add_option("--block", masks_args.block, "Block-matching tile size");
    masks->add_option("--radius", masks_args.radius, "Search radius in pixels");

    EditArgs edit_args;
    auto* edit = app.add_subcommand("edit", "Run the two-pass editing pipeline");
    edit->add_option("--config", edit_args.config_path, "JSON config file");
    edit->add_option("-o,--out", edit_args.out_dir, "Output directory");
    edit->add_option("--frames-dir", edit_args.frames_dir, "Frame directory (overrides config)");
    edit->add_option("--frames", edit_args.total_frames, "Total frame count override");
    edit->add_option("--s", edit_args.s, "Reference sampling interval override");
    edit->add_option("--r", edit_args.r, "Full-frame interval override");
    edit->add_option("--seed", edit_args.seed, "Seed override");
    edit->add_option("--workers", edit_args.workers, "Worker count (0 = auto)");
    edit->add_flag("--save-cache", edit_args.save_cache, "Persist the KV cache");

    BenchArgs bench_args;
    auto* bench = app.add_subcommand("bench", "Benchmark sparse vs full attention");
    bench->add_option("--config", bench_args.config_path, "JSON config file");
    bench->add_option("-o,--out", bench_args.out_path, "Report JSON path (stdout if omitted)");
    bench->add_option("--csv", bench_args.csv_path, "Also write a CSV flattening");
    bench->add_option("--z", bench_args.z, "Reference frame count");
    bench->add_option("--t", bench_args.tokens, "Tokens per frame");
    bench->add_option("--dim", bench_args.dim, "Projection dimension");
    bench->add_option("--heads", bench_args.heads, "Head count");
    bench->add_option("--r", bench_args.r, "Full-frame interval");
    bench->add_option("--density", bench_args.density, "Mask density on non-full frames");
    bench->add_option("--reps", bench_args.reps, "Timed repetitions");
    bench->add_option("--warmup", bench_args.warmup, "Warmup runs");
    bench->add_option("--query-frames", bench_args.query_frames, "Query frames timed per run");
    bench->add_option("--seed", bench_args.seed, "Seed");
    bench->add_option("--workers", bench_args.workers, "Multi-worker mode worker count");

    WarpErrorArgs warp_args;
    auto* warp = app.add_subcommand("warp-error", "Mean warp error of a frame sequence");
    warp->add_option("frames_dir", warp_args.frames_dir, "Directory of indexed .png frames")
        ->required();
    warp->add_option("flo_dir", warp_args.flo_dir, "Directory of flow_%04d.flo files")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 3;
    }

    try {
        if (flow->parsed()) return cmd_flow(flow_args);
        if (masks->parsed()) return cmd_masks(masks_args);
        if (edit->parsed()) return cmd_edit(edit_args);
        if (bench->parsed()) return cmd_bench(bench_args);
        if (warp->parsed()) return cmd_warp_error(warp_args);
    } catch (const adave::InvariantError& e) {
        std::fprintf(stderr, "invariant breach: %s\n", e.what());
        return 4;
    } catch (const adave::IoError& e) {
        std::fprintf(stderr, "i/o error: %s\n", e.what());
        return 2;
    } catch (const adave::ValidationError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 4;
    }
    return 3;
}
