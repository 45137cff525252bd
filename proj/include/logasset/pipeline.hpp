// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/camera.hpp"
#include "logasset/gaussians.hpp"
#include "logasset/geometry.hpp"
#include "logasset/judge.hpp"
#include "logasset/logstore.hpp"
#include "logasset/losses.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace logasset {

struct FpsConfig {
    std::size_t k_max = 32;
    double min_angle_deg = 15.0;
};

struct CropConfig {
    int out_size = 128;
    double fov_margin = 1.2; // crop fov = 2 asin(r / d) * margin
    double min_fov_deg = 10.0;
    double max_fov_deg = 40.0;
};

struct TargetConfig {
    int n_views = 16;
    double fov_deg = 30.0;
    double elevation_deg = 0.0;
    int image_size = 128;
    double distance_margin = 1.2; // distance = margin * r / sin(fov / 2)
};

struct HarvestConfig {
    double time_tolerance_s = 0.05; // frames this far outside a track span still count
    int occlusion_samples = kDefaultOcclusionSamples;
    int held_out = 1;
};

enum class GeneratorMode { SolidColor, CopyNearest, ExternalDir };
std::string_view to_string(GeneratorMode mode) noexcept;
GeneratorMode parse_generator_mode(std::string_view name);

struct GeneratorConfig {
    GeneratorMode mode = GeneratorMode::SolidColor;
    std::array<double, 3> color = {1.0, 0.0, 0.0};
    std::string external_dir; // <dir>/<object_id>/target_<j>.png
};

enum class LiftMode { FitFree, ExternalAsset };
std::string_view to_string(LiftMode mode) noexcept;
LiftMode parse_lift_mode(std::string_view name);

struct LiftConfig {
    LiftMode mode = LiftMode::FitFree;
    std::string asset_dir; // external_asset: <dir>/<object_id>.gsa
    int block = 8;
    double opacity = 0.9;
    std::array<double, 3> background = {0.0, 0.0, 0.0};
    ReconWeights weights;
};

struct EvalConfig {
    std::string part = "A";
    int patch_size = 8;
    std::string keypoints_dir; // <dir>/<object_id>/{gt,render}_<k>.json
    std::string lpips_file;    // JSON {"<object_id>": score}
};

struct JudgeConfig {
    std::string endpoint; // empty: requests are written but not sent
    std::string model = "judge";
    std::string token_env = "LOGASSET_JUDGE_TOKEN";
    int max_in_flight = 4;
    double timeout_s = 60.0;
    int max_retries = 2;
    std::map<std::string, std::string> baselines; // name -> asset directory
};

struct PipelineConfig {
    FilterConfig filter;
    FpsConfig fps;
    CropConfig crop;
    TargetConfig targets;
    HarvestConfig harvest;
    GeneratorConfig generator;
    LiftConfig lift;
    EvalConfig eval;
    JudgeConfig judge;
    std::uint64_t seed = 0;
    int jobs = 1;

    // Missing keys keep their defaults; unknown keys throw InvalidConfig.
    static PipelineConfig from_json(const nlohmann::json& doc);
    [[nodiscard]] nlohmann::json to_json() const;
};

PipelineConfig load_config(const std::filesystem::path& path);

enum class Stage { Ingested, Selected, Generated, Lifted, Evaluated };
std::string_view to_string(Stage stage) noexcept;
Stage parse_stage(std::string_view name);

struct InstanceStatus {
    std::string object_id;
    bool ok = true;       // false: flagged or failed
    bool skipped = false; // stage already complete with matching inputs
    std::string message;
};

struct BatchResult {
    std::vector<InstanceStatus> instances;
    bool fatal = false;
    std::string fatal_message;

    // 0 all ok, 2 some instances flagged or failed, 1 fatal.
    [[nodiscard]] int exit_code() const;
    [[nodiscard]] nlohmann::json to_json() const;
};

// Per-instance stage manifest, stored as <ws>/<object_id>/stage.json.
struct ViewRecord {
    std::size_t id = 0;
    std::size_t frame_index = 0;
    std::string camera_id;
    double timestamp = 0.0;
    double distance = 0.0;
    Vec3 viewing_direction = Vec3::UnitX(); // object frame
    Box2 bbox;
    double occlusion = 0.0;
    std::optional<double> mask_iou;
    std::vector<std::string> flags;
    bool passed = false;
    std::string crop;      // relative to the instance directory
    std::string crop_mask; // relative to the instance directory
    std::optional<PinholeCamera> camera; // virtual crop camera, object frame
};

struct InstanceBundle {
    std::string object_id;
    ObjectClass class_label = ObjectClass::Other;
    Stage stage = Stage::Ingested;
    std::string status = "ok"; // ok | flagged | error
    std::string message;
    double object_radius = 0.0;
    std::vector<ViewRecord> candidates;
    std::vector<std::size_t> selected; // candidate ids in FPS order
    std::vector<std::size_t> held_out; // subset of selected
    std::vector<PinholeCamera> target_cameras;
    std::vector<std::string> target_images;
    std::string asset;
    std::optional<double> recon_loss;
    std::map<std::string, std::string> hashes; // stage name -> input hash

    // Selected views minus held-out ones, in FPS order.
    [[nodiscard]] std::vector<std::size_t> input_views() const;
    [[nodiscard]] const ViewRecord& candidate(std::size_t id) const;
    [[nodiscard]] nlohmann::json to_json() const;
    static InstanceBundle from_json(const nlohmann::json& doc);
};

InstanceBundle load_bundle(const std::filesystem::path& instance_dir);
void save_bundle(const std::filesystem::path& instance_dir, const InstanceBundle& bundle);
// Instance directories (those holding a stage.json), sorted by name.
std::vector<std::string> list_instances(const std::filesystem::path& workspace);

// Ingest: per track, interpolate, project, measure occlusion and mask
// alignment, filter and rectify passing views. Writes the workspace.
BatchResult harvest(const SensorLog& log, const PipelineConfig& cfg, const std::filesystem::path& workspace);
// Farthest-point selection over passing candidates plus held-out reservation.
BatchResult select_views(const PipelineConfig& cfg, const std::filesystem::path& workspace);
// Canonical target cameras and one stub image per target.
BatchResult generate_views(const PipelineConfig& cfg, const std::filesystem::path& workspace);
BatchResult lift_views(const PipelineConfig& cfg, const std::filesystem::path& workspace);
// Part A or B evaluation; also writes <ws>/summary.json.
BatchResult evaluate(const PipelineConfig& cfg, const std::filesystem::path& workspace);

// Degenerate lifting baseline: one flat Gaussian per block of every target
// view, on the plane through the origin facing that view, inside the object
// radius.
GaussianAsset fit_free_asset(std::span<const TargetView> views, double object_radius, int block, double opacity);

// Target-view index -> input-view index with the smallest angle between
// viewing directions (ties to the lower index).
std::vector<std::size_t> nearest_views(std::span<const Vec3> target_dirs, std::span<const Vec3> input_dirs);

std::string sha256_hex(std::string_view data);
// SHA-256 over the sorted relative paths and contents of every file.
std::string workspace_digest(const std::filesystem::path& workspace);

nlohmann::json camera_to_json(const PinholeCamera& camera);
PinholeCamera camera_from_json(const nlohmann::json& j);

} // namespace logasset
