#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "adave/flow.hpp"
#include "adave/image_io.hpp"
#include "adave/motion_mask.hpp"
#include "adave/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Invokes the installed CLI binary (path from the ADAVE_CLI environment
// variable, set by ctest) and captures stdout and the exit code.
struct CliResult {
    int exit_code = -1;
    std::string out;
};

std::string cli_path() {
    const char* env = std::getenv("ADAVE_CLI");
    REQUIRE(env != nullptr);
    return env;
}

CliResult run_cli(const std::string& args) {
    const fs::path out_file = fs::temp_directory_path() / "adave_cli_stdout.txt";
    const std::string cmd = cli_path() + " " + args + " > " + out_file.string() + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CliResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_file);
    result.out.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return result;
}

fs::path temp_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("adave_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_frames(const fs::path& dir, const std::vector<adave::Frame>& frames) {
    fs::create_directories(dir);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "f_%03zu.png", i);
        adave::write_png(frames[i], dir / name);
    }
}

}  // namespace

TEST_CASE("help exits cleanly and lists every subcommand", "[cli]") {
    const auto result = run_cli("--help");
    CHECK(result.exit_code == 0);
    for (const char* sub : {"flow", "masks", "edit", "bench", "warp-error"})
        CHECK(result.out.find(sub) != std::string::npos);
}

TEST_CASE("unknown flags are a configuration error", "[cli]") {
    CHECK(run_cli("edit --definitely-not-a-flag").exit_code == 3);
    CHECK(run_cli("frobnicate").exit_code != 0);
}

TEST_CASE("flow subcommand", "[cli]") {
    SECTION("identical frames produce an all-zero field") {
        const auto frames_dir = temp_dir("flow_in");
        const auto out_dir = temp_dir("flow_out");
        const adave::Frame f = adave::texture_frame(24, 24, 5);
        write_frames(frames_dir, {f, f});
        const auto result =
            run_cli("flow " + frames_dir.string() + " " + out_dir.string() + " --radius 4");
        REQUIRE(result.exit_code == 0);
        const auto field = adave::read_flo(out_dir / adave::flo_filename(2));
        for (float c : field.uv) CHECK(c == 0.0f);
    }
    SECTION("a shifted pair recovers the shift in the interior") {
        const auto frames_dir = temp_dir("flow_shift");
        const auto out_dir = temp_dir("flow_shift_out");
        const auto [prev, next] = adave::shifted_texture_pair(32, 32, 2, 0, 8);
        write_frames(frames_dir, {prev, next});
        REQUIRE(run_cli("flow " + frames_dir.string() + " " + out_dir.string() +
                        " --block 8 --radius 4")
                    .exit_code == 0);
        const auto field = adave::read_flo(out_dir / adave::flo_filename(2));
        for (int y = 8; y < 24; ++y)
            for (int x = 8; x < 24; ++x) CHECK(field.u(x, y) == 2.0f);
    }
    SECTION("missing directory is an i/o error") {
        CHECK(run_cli("flow /nonexistent/frames /tmp/adave_flow_none").exit_code == 2);
    }
}

TEST_CASE("masks subcommand", "[cli]") {
    SECTION("a static video has zero density everywhere") {
        const auto frames_dir = temp_dir("masks_static");
        const auto out_dir = temp_dir("masks_static_out");
        const adave::Frame f = adave::texture_frame(32, 32, 7);
        write_frames(frames_dir, {f, f, f});
        const auto result = run_cli("masks " + frames_dir.string() + " " + out_dir.string() +
                                    " --resolutions 8,4");
        REQUIRE(result.exit_code == 0);
        const json summary = json::parse(slurp(out_dir / "masks_summary.json"));
        for (const auto& [frame, by_res] : summary.at("densities").items())
            for (const auto& [res, density] : by_res.items())
                CHECK(density.get<double>() == 0.0);
    }
    SECTION("half-moving scene sits near half density") {
        const auto frames_dir = temp_dir("masks_half");
        const auto out_dir = temp_dir("masks_half_out");
        adave::HalfScene scene;
        scene.width = 64;
        scene.height = 64;
        write_frames(frames_dir, adave::generate_half_moving_scene(scene));
        REQUIRE(run_cli("masks " + frames_dir.string() + " " + out_dir.string() +
                        " --resolutions 16")
                    .exit_code == 0);
        const json summary = json::parse(slurp(out_dir / "masks_summary.json"));
        const double density = summary.at("densities").at("2").at("16").get<double>();
        CHECK(density == Catch::Approx(0.5).margin(0.1));
    }
    SECTION("rerun produces bit-identical PGMs") {
        const auto frames_dir = temp_dir("masks_det");
        const auto out_a = temp_dir("masks_det_a");
        const auto out_b = temp_dir("masks_det_b");
        adave::RectScene scene;
        scene.width = 32;
        scene.height = 32;
        scene.frame_count = 3;
        scene.rect_w = 10;
        scene.rect_h = 10;
        write_frames(frames_dir, adave::generate_rect_scene(scene));
        REQUIRE(run_cli("masks " + frames_dir.string() + " " + out_a.string() +
                        " --resolutions 8")
                    .exit_code == 0);
        REQUIRE(run_cli("masks " + frames_dir.string() + " " + out_b.string() +
                        " --resolutions 8")
                    .exit_code == 0);
        for (int i = 2; i <= 3; ++i)
            CHECK(slurp(out_a / adave::mask_filename(i, 8)) ==
                  slurp(out_b / adave::mask_filename(i, 8)));
    }
}

TEST_CASE("edit subcommand", "[cli]") {
    const auto cfg_path = fs::temp_directory_path() / "adave_cli_edit_cfg.json";
    {
        json cfg;
        cfg["total_frames"] = 4;
        cfg["ref_interval"] = 4;
        cfg["timesteps"] = {2, 1};
        cfg["blocks"] = {{{"res", 8}, {"channels", 4}}};
        cfg["input"] = {{"type", "synthetic"},
                        {"scene",
                         {{"width", 32}, {"height", 32}, {"rect_w", 10}, {"rect_h", 10}}}};
        std::ofstream out(cfg_path);
        out << cfg.dump(2);
    }

    SECTION("s = N: two references, cache entries = timesteps x blocks") {
        const auto out_dir = temp_dir("edit");
        const auto result = run_cli("edit --config " + cfg_path.string() + " -o " +
                                    out_dir.string() + " --seed 3");
        REQUIRE(result.exit_code == 0);
        const json report = json::parse(slurp(out_dir / "report.json"));
        CHECK(report.at("reference_count").get<int>() == 2);
        CHECK(report.at("cache_entries").get<int>() == 2);
        CHECK(fs::exists(out_dir / "latents.bin"));
    }
    SECTION("same seed twice is byte-identical, different seed is not") {
        const auto out_a = temp_dir("edit_a");
        const auto out_b = temp_dir("edit_b");
        const auto out_c = temp_dir("edit_c");
        const std::string base = "edit --config " + cfg_path.string();
        REQUIRE(run_cli(base + " -o " + out_a.string() + " --seed 9").exit_code == 0);
        REQUIRE(run_cli(base + " -o " + out_b.string() + " --seed 9").exit_code == 0);
        REQUIRE(run_cli(base + " -o " + out_c.string() + " --seed 10").exit_code == 0);
        CHECK(slurp(out_a / "latents.bin") == slurp(out_b / "latents.bin"));
        CHECK(slurp(out_a / "latents.bin") != slurp(out_c / "latents.bin"));
        const json ra = json::parse(slurp(out_a / "report.json"));
        const json rb = json::parse(slurp(out_b / "report.json"));
        CHECK(ra.at("latents_fingerprint") == rb.at("latents_fingerprint"));
    }
    SECTION("frames from disk win over the config frame count") {
        const auto frames_dir = temp_dir("edit_frames");
        const auto out_dir = temp_dir("edit_frames_out");
        adave::RectScene scene;
        scene.width = 32;
        scene.height = 32;
        scene.frame_count = 3;
        scene.rect_w = 10;
        scene.rect_h = 10;
        write_frames(frames_dir, adave::generate_rect_scene(scene));
        const auto result = run_cli("edit --config " + cfg_path.string() + " --frames-dir " +
                                    frames_dir.string() + " --s 2 -o " + out_dir.string());
        REQUIRE(result.exit_code == 0);
        const json report = json::parse(slurp(out_dir / "report.json"));
        CHECK(report.at("total_frames").get<int>() == 3);
        CHECK(report.at("reference_frames").get<std::vector<int>>() == std::vector<int>{1, 3});
    }
    SECTION("missing config file is an i/o error") {
        CHECK(run_cli("edit --config /nonexistent/cfg.json").exit_code == 2);
    }
    SECTION("invalid config is a configuration error") {
        const auto bad_path = fs::temp_directory_path() / "adave_cli_bad_cfg.json";
        {
            std::ofstream out(bad_path);
            out << R"({"timesteps": [1, 2]})";  // not strictly decreasing
        }
        CHECK(run_cli("edit --config " + bad_path.string()).exit_code == 3);
    }
}

TEST_CASE("bench subcommand", "[cli]") {
    const auto out_path = fs::temp_directory_path() / "adave_cli_bench.json";
    const auto result = run_cli("bench --z 4 --t 64 --dim 16 --r 2 --density 0.5 --reps 3 "
                                "--warmup 1 -o " +
                                out_path.string());
    REQUIRE(result.exit_code == 0);
    const json report = json::parse(slurp(out_path));
    CHECK(report.at("l_full").get<int>() == 4 * 64);
    CHECK(report.at("single_worker").at("full").at("median_ms").get<double>() > 0.0);
}

TEST_CASE("warp-error subcommand", "[cli]") {
    const auto frames_dir = temp_dir("warp_frames");
    const auto flo_dir = temp_dir("warp_flows");
    const adave::Frame f = adave::texture_frame(16, 16, 3);
    write_frames(frames_dir, {f, f});
    adave::write_flo(adave::FlowField::zeros(16, 16), flo_dir / adave::flo_filename(2));
    const auto result = run_cli("warp-error " + frames_dir.string() + " " + flo_dir.string());
    REQUIRE(result.exit_code == 0);
    CHECK(std::stod(result.out) == 0.0);
}
