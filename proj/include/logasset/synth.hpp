// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/gaussians.hpp"
#include "logasset/geometry.hpp"
#include "logasset/image.hpp"
#include "logasset/logstore.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace logasset {

// Built-in scenes:
//   ring8          one cube seen by a pinhole camera from 8 azimuths
//   ring8-fisheye  the same ring with an f-theta camera
//   wall           a cube hidden behind a wall from every frame
//   half           a cube whose camera-facing face is exactly half covered
enum class SynthSpec { Ring8, Ring8Fisheye, Wall, Half };
SynthSpec parse_synth_spec(std::string_view name);
std::string_view to_string(SynthSpec spec) noexcept;

struct VisibilityTruth {
    std::size_t frame_index = 0;
    std::string object_id;
    double occlusion = 0.0; // analytic, area-weighted like occlusion_fraction
    bool in_view = false;   // every cuboid corner projects inside the image
};

struct SynthScene {
    SensorLog log;
    std::vector<Vec3> colors; // per track, linear RGB
    std::vector<VisibilityTruth> truth;
};

SynthScene synth_scene(SynthSpec spec, std::uint64_t seed);

// Ray-cast rendering of the cuboids for one frame plus one instance mask per
// track (same order as log.tracks).
struct SynthFrame {
    Image image;
    std::vector<Mask> masks;
};
SynthFrame render_synth_frame(const SynthScene& scene, std::size_t frame_index);

// Writes manifest.json, images/<camera_id>/<frame>.png,
// masks/<object_id>/<frame>.png and truth.json under `dir`, and points
// scene.log.root at it.
void write_synth_scene(SynthScene& scene, const std::filesystem::path& dir);
nlohmann::json truth_json(const SynthScene& scene);

// Exact occlusion of the camera-facing faces of `target`, weighted per face
// the same way as occlusion_fraction. Shadows are computed by central
// projection of each occluder onto the face planes and clipped polygon
// areas. Occluder parts behind a face or past the camera are clipped.
double analytic_occlusion(const Vec3& camera_center, const Cuboid& target, std::span<const Cuboid> occluders);

// Random asset of `count` Gaussians inside a sphere of radius `radius`.
GaussianAsset synth_asset(std::uint64_t seed, std::size_t count, int sh_degree, double radius = 1.0);

} // namespace logasset
