// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

// logasset: command-line front end over the pipeline and module operations.

#include "logasset/error.hpp"
#include "logasset/flowmatch.hpp"
#include "logasset/metrics.hpp"
#include "logasset/pipeline.hpp"
#include "logasset/synth.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace logasset;

namespace {

constexpr int kUsageError = 64;

struct Common {
    bool json_out = false;
    std::optional<std::uint64_t> seed;
    std::string config;
    std::optional<int> jobs;

    void attach(CLI::App* app) {
        app->add_flag("--json", json_out, "Print machine-readable JSON");
        app->add_option("--seed", seed, "Random seed");
        app->add_option("--config", config, "Pipeline config file (JSON)")->check(CLI::ExistingFile);
        app->add_option("--jobs", jobs, "Worker pool width")->check(CLI::PositiveNumber);
    }

    [[nodiscard]] PipelineConfig pipeline_config() const {
        PipelineConfig cfg = config.empty() ? PipelineConfig{} : load_config(config);
        if (seed) cfg.seed = *seed;
        if (jobs) cfg.jobs = *jobs;
        return cfg;
    }
};

void emit(const Common& c, const json& doc, const std::string& text) {
    if (c.json_out) {
        std::cout << doc.dump(2) << '\n';
    } else {
        std::cout << text;
    }
}

std::string batch_text(const std::string& stage, const BatchResult& r) {
    std::string out;
    for (const auto& s : r.instances) {
        out += stage + " " + s.object_id + ": " + (s.ok ? "ok" : "FLAGGED") + (s.skipped ? " (unchanged)" : "");
        if (!s.message.empty()) out += " - " + s.message;
        out += '\n';
    }
    if (r.instances.empty()) out += stage + ": no instances\n";
    return out;
}

json batch_json(const std::string& command, const BatchResult& r) {
    json j = r.to_json();
    j["command"] = command;
    return j;
}

json selection_summary(const fs::path& ws) {
    json out = json::object();
    for (const auto& id : list_instances(ws)) {
        const InstanceBundle b = load_bundle(ws / id);
        out[id] = {{"status", b.status},
                   {"candidates", b.candidates.size()},
                   {"selected", b.selected.size()},
                   {"held_out", b.held_out.size()}};
    }
    return out;
}

std::string selection_text(const json& s) {
    std::string out;
    for (const auto& [id, v] : s.items()) {
        out += id + ": " + std::to_string(v["selected"].get<std::size_t>()) + " selected of " +
               std::to_string(v["candidates"].get<std::size_t>()) + " candidates (" +
               std::to_string(v["held_out"].get<std::size_t>()) + " held out)\n";
    }
    return out;
}

Vec3 parse_rgb(const std::vector<double>& v) {
    if (v.size() != 3) {
        throw CLI::ValidationError("--background", "expects three values");
    }
    return {v[0], v[1], v[2]};
}

std::vector<PinholeCamera> load_cameras(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
        fail(ErrorCode::SchemaViolation, path.string() + ": invalid JSON");
    }
    if (doc.is_object() && doc.contains("cameras")) doc = doc["cameras"];
    if (!doc.is_array()) {
        fail(ErrorCode::SchemaViolation, path.string() + ": expected an array of cameras");
    }
    std::vector<PinholeCamera> cams;
    for (const auto& c : doc) {
        cams.push_back(camera_from_json(c));
        cams.back().validate();
    }
    return cams;
}

json fm_demo(std::uint64_t seed) {
    Rng rng(seed);
    const Conditioning none;
    json out;
    out["schema"] = 1;

    // Straight-line oracle: Euler lands on x1 for every step count.
    VecX x0(2), x1(2);
    x0 << rng.normal(), rng.normal();
    x1 << x0[0] + 3.0, x0[1] + 4.0;
    const ConstantField oracle(x1 - x0);
    double worst = 0.0;
    for (const int n : {1, 2, 3, 7, 16, 100}) {
        worst = std::max(worst, (integrate(oracle, x0, none, n, OdeMethod::Euler).x - x1).cwiseAbs().maxCoeff());
    }
    out["constant"] = {{"max_endpoint_error", worst}};

    // Gaussian OT coupling: closed-form transport map.
    VecX mu0 = VecX::Zero(2), mu1(2);
    mu1 << 3.0, 4.0;
    const AnalyticGaussianOTField ot(mu0, 1.0, mu1, 2.0);
    double ot_euler = 0.0, ot_heun = 0.0;
    for (int k = 0; k < 8; ++k) {
        VecX s(2);
        s << rng.normal(), rng.normal();
        const VecX target = ot.transport(s);
        ot_euler = std::max(ot_euler, (integrate(ot, s, none, 8, OdeMethod::Euler).x - target).cwiseAbs().maxCoeff());
        ot_heun = std::max(ot_heun, (integrate(ot, s, none, 8, OdeMethod::Heun).x - target).cwiseAbs().maxCoeff());
    }
    out["gaussian_ot"] = {{"euler_max_error", ot_euler}, {"heun_max_error", ot_heun}};

    const std::vector<int> steps = {8, 16, 32, 64, 128};
    out["exponential"] = {{"steps", steps},
                          {"euler_order", convergence_order(OdeMethod::Euler, steps)},
                          {"heun_order", convergence_order(OdeMethod::Heun, steps)}};

    std::vector<VecX> a, b;
    for (int k = 0; k < 16; ++k) {
        VecX s(2);
        s << rng.normal(), rng.normal();
        a.push_back(s);
        b.push_back(s + mu1);
    }
    const auto batch = sample_batch(a, b, seed);
    out["cfm_loss"] = {{"oracle", cfm_loss(ConstantField(mu1), batch)},
                       {"zero_field", cfm_loss(ConstantField(VecX::Zero(2)), batch)}};
    return out;
}

std::string fm_text(const json& j) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "constant field: euler endpoint error %.3g\n"
                  "gaussian ot: euler error %.3g, heun error %.3g (8 steps)\n"
                  "exponential: euler order %.3f, heun order %.3f\n"
                  "cfm loss: oracle %.3g, zero field %.6g\n",
                  j["constant"]["max_endpoint_error"].get<double>(), j["gaussian_ot"]["euler_max_error"].get<double>(),
                  j["gaussian_ot"]["heun_max_error"].get<double>(), j["exponential"]["euler_order"].get<double>(),
                  j["exponential"]["heun_order"].get<double>(), j["cfm_loss"]["oracle"].get<double>(),
                  j["cfm_loss"]["zero_field"].get<double>());
    return buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Object asset harvesting and evaluation from driving logs"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for every subcommand");

    Common common;
    int code = 0;

    // synth
    auto* synth = app.add_subcommand("synth", "Write a synthetic driving log");
    std::string synth_spec = "ring8";
    std::string synth_out = "synth";
    synth->add_option("--spec", synth_spec, "ring8 | ring8-fisheye | wall | half");
    synth->add_option("--out", synth_out, "Output directory");
    common.attach(synth);
    synth->callback([&] {
        SynthScene scene = synth_scene(parse_synth_spec(synth_spec), common.seed.value_or(0));
        write_synth_scene(scene, synth_out);
        const fs::path manifest = fs::path(synth_out) / "manifest.json";
        json j = {{"schema", 1},
                  {"command", "synth"},
                  {"spec", synth_spec},
                  {"frames", scene.log.frames.size()},
                  {"tracks", scene.log.tracks.size()},
                  {"manifest", manifest.string()}};
        emit(common, j,
             "wrote " + std::to_string(scene.log.frames.size()) + " frames, " +
                 std::to_string(scene.log.tracks.size()) + " tracks to " + manifest.string() + "\n");
    });

    // harvest
    auto* harv = app.add_subcommand("harvest", "Ingest a log and select views per tracked object");
    std::string log_path;
    std::string workspace = "workspace";
    harv->add_option("--log", log_path, "Log manifest (manifest.json)")->required();
    harv->add_option("--workspace,-w", workspace, "Workspace directory");
    common.attach(harv);
    harv->callback([&] {
        const PipelineConfig cfg = common.pipeline_config();
        const SensorLog log = parse_log(log_path);
        BatchResult r = harvest(log, cfg, workspace);
        const BatchResult s = select_views(cfg, workspace);
        for (std::size_t i = 0; i < r.instances.size(); ++i) {
            for (const auto& si : s.instances) {
                if (si.object_id != r.instances[i].object_id) continue;
                r.instances[i].ok = r.instances[i].ok && si.ok;
                r.instances[i].skipped = r.instances[i].skipped && si.skipped;
                if (r.instances[i].message.empty()) r.instances[i].message = si.message;
            }
        }
        const json sel = selection_summary(workspace);
        json j = batch_json("harvest", r);
        j["selection"] = sel;
        emit(common, j, batch_text("harvest", r) + selection_text(sel));
        code = r.exit_code();
    });

    auto* sel = app.add_subcommand("select-views", "Rerun view selection on a harvested workspace");
    sel->add_option("--workspace,-w", workspace, "Workspace directory");
    common.attach(sel);
    sel->callback([&] {
        const BatchResult r = select_views(common.pipeline_config(), workspace);
        const json s = selection_summary(workspace);
        json j = batch_json("select-views", r);
        j["selection"] = s;
        emit(common, j, batch_text("select", r) + selection_text(s));
        code = r.exit_code();
    });

    // generate
    auto* gen = app.add_subcommand("generate", "Write target views with a generator stub");
    std::string gen_mode;
    std::string external_dir;
    gen->add_option("--workspace,-w", workspace, "Workspace directory");
    gen->add_option("--mode", gen_mode, "solid_color | copy_nearest | external_dir");
    gen->add_option("--external-dir", external_dir, "Directory of <object_id>/target_XX.png files");
    common.attach(gen);
    gen->callback([&] {
        PipelineConfig cfg = common.pipeline_config();
        if (!gen_mode.empty()) cfg.generator.mode = parse_generator_mode(gen_mode);
        if (!external_dir.empty()) cfg.generator.external_dir = external_dir;
        const BatchResult r = generate_views(cfg, workspace);
        emit(common, batch_json("generate", r), batch_text("generate", r));
        code = r.exit_code();
    });

    // lift
    auto* lift = app.add_subcommand("lift", "Produce a Gaussian asset per instance");
    std::string lift_mode;
    std::string asset_dir;
    lift->add_option("--workspace,-w", workspace, "Workspace directory");
    lift->add_option("--mode", lift_mode, "fit_free | external_asset");
    lift->add_option("--asset-dir", asset_dir, "Directory of <object_id>.gsa files");
    common.attach(lift);
    lift->callback([&] {
        PipelineConfig cfg = common.pipeline_config();
        if (!lift_mode.empty()) cfg.lift.mode = parse_lift_mode(lift_mode);
        if (!asset_dir.empty()) cfg.lift.asset_dir = asset_dir;
        const BatchResult r = lift_views(cfg, workspace);
        emit(common, batch_json("lift", r), batch_text("lift", r));
        code = r.exit_code();
    });

    // render
    auto* rend = app.add_subcommand("render", "Render an asset file to PNGs");
    std::string asset_path;
    std::string cameras_path;
    std::string render_out = "renders";
    int orbit_views = 16;
    double orbit_fov = 30.0;
    double orbit_distance = 0.0;
    double orbit_elevation = 0.0;
    int orbit_size = 128;
    std::vector<double> background = {0.0, 0.0, 0.0};
    rend->add_option("--asset", asset_path, "Asset file (.gsa)")->required()->check(CLI::ExistingFile);
    rend->add_option("--cameras", cameras_path, "JSON array of pinhole cameras")->check(CLI::ExistingFile);
    rend->add_option("--out", render_out, "Output directory");
    rend->add_option("--views", orbit_views, "Orbit views when no camera file is given")->check(CLI::PositiveNumber);
    rend->add_option("--fov", orbit_fov, "Orbit field of view, degrees");
    rend->add_option("--distance", orbit_distance, "Orbit radius (default: fit the bounding sphere)");
    rend->add_option("--elevation", orbit_elevation, "Orbit elevation, degrees");
    rend->add_option("--size", orbit_size, "Orbit image size")->check(CLI::PositiveNumber);
    rend->add_option("--background", background, "Background RGB")->expected(3);
    common.attach(rend);
    rend->callback([&] {
        const GaussianAsset asset = load_asset(asset_path);
        std::vector<PinholeCamera> cams;
        if (!cameras_path.empty()) {
            cams = load_cameras(cameras_path);
        } else {
            const auto sphere = asset.bounding_sphere();
            const double dist = orbit_distance > 0.0
                                    ? orbit_distance
                                    : 1.2 * (sphere.center.norm() + sphere.radius) /
                                          std::sin(deg_to_rad(orbit_fov) / 2.0);
            cams = generate_target_cameras(orbit_fov, dist, orbit_views, orbit_elevation, orbit_size);
        }
        RenderOptions opts;
        if (common.jobs) opts.threads = *common.jobs;
        const Vec3 bg = parse_rgb(background);
        fs::create_directories(render_out);
        json files = json::array();
        std::size_t culled = 0, degenerate = 0;
        for (std::size_t k = 0; k < cams.size(); ++k) {
            const RenderedImage img = render(asset, cams[k], bg, opts);
            char name[32];
            std::snprintf(name, sizeof name, "render_%02zu.png", k);
            write_png(fs::path(render_out) / name, img.rgb);
            files.push_back((fs::path(render_out) / name).string());
            culled += img.culled_splats;
            degenerate += img.degenerate_splats;
        }
        json j = {{"schema", 1},
                  {"command", "render"},
                  {"files", files},
                  {"culled_splats", culled},
                  {"degenerate_splats", degenerate}};
        emit(common, j, "wrote " + std::to_string(files.size()) + " images to " + render_out + "\n");
    });

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate lifted assets (Part A metrics or Part B judge)");
    std::string part;
    ev->add_option("--workspace,-w", workspace, "Workspace directory");
    ev->add_option("--part", part, "A | B")->check(CLI::IsMember({"A", "B"}));
    common.attach(ev);
    ev->callback([&] {
        PipelineConfig cfg = common.pipeline_config();
        if (!part.empty()) cfg.eval.part = part;
        const BatchResult r = evaluate(cfg, workspace);
        json j = batch_json("eval", r);
        std::ifstream in(fs::path(workspace) / "summary.json");
        j["summary"] = json::parse(in, nullptr, false);
        std::string text = batch_text("eval", r);
        if (j["summary"].contains("table")) text += j["summary"]["table"].get<std::string>();
        if (j["summary"].contains("mean")) text += "mean: " + j["summary"]["mean"].dump() + "\n";
        emit(common, j, text);
        code = r.exit_code();
    });

    // bench-check
    auto* bench = app.add_subcommand("bench-check", "Validate a benchmark manifest and print split counts");
    std::string bench_manifest;
    bench->add_option("manifest", bench_manifest, "Benchmark manifest (JSON)")->required()->check(CLI::ExistingFile);
    common.attach(bench);
    bench->callback([&] {
        const BenchCounts counts = benchmark_manifest_check(fs::path(bench_manifest));
        json j = bench_counts_json(counts);
        j["command"] = "bench-check";
        emit(common, j, format_bench_table(counts));
    });

    // fm-demo
    auto* fm = app.add_subcommand("fm-demo", "Run flow-matching checks and print convergence orders");
    common.attach(fm);
    fm->callback([&] {
        json j = fm_demo(common.seed.value_or(0));
        j["command"] = "fm-demo";
        emit(common, j, fm_text(j));
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    } catch (const Error& e) {
        if (common.json_out) {
            std::cout << json{{"schema", 1}, {"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump(2)
                      << '\n';
        }
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return code;
}
