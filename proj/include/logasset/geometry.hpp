// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/camera.hpp"
#include "logasset/image.hpp"
#include "logasset/logstore.hpp"
#include "logasset/math.hpp"

#include <array>
#include <optional>
#include <span>
#include <vector>

namespace logasset {

struct Cuboid {
    Vec3 center = Vec3::Zero();
    Vec3 half_extents = Vec3::Ones();
    Quat rotation = Quat::Identity(); // box axes -> world

    static Cuboid from_state(const CuboidState& s) { return {s.center, s.half_extents, s.rotation}; }
    [[nodiscard]] Vec3 to_local(const Vec3& world) const { return rotation.conjugate() * (world - center); }
    [[nodiscard]] Vec3 to_world(const Vec3& local) const { return rotation * local + center; }
    [[nodiscard]] bool contains(const Vec3& world) const;
    // Corner i has local coordinates (+-hx, +-hy, +-hz) where bit 0 of i
    // selects +x, bit 1 selects +y and bit 2 selects +z.
    [[nodiscard]] std::array<Vec3, 8> corners() const;
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ(); // unit length

    [[nodiscard]] Vec3 at(double t) const { return origin + t * direction; }
};

struct RayHit {
    double t_near = 0.0;
    double t_far = 0.0;
};

// Slab test in the box frame. Returns the entry/exit parameters when the ray
// meets the box at some t > 0; t_near is negative when the origin is inside.
std::optional<RayHit> ray_box_intersect(const Ray& ray, const Cuboid& box);

inline constexpr int kDefaultOcclusionSamples = 64;

// Fraction of stratified samples on the camera-facing faces of `target` whose
// line of sight enters some occluder strictly before reaching the target.
// Samples are split across visible faces in proportion to their projected
// area. Throws CameraInsideTarget.
double occlusion_fraction(const Vec3& camera_center, const Cuboid& target, std::span<const Cuboid> occluders,
                          int n_samples = kDefaultOcclusionSamples);

// Sample points used by occlusion_fraction, exposed for testing.
std::vector<Vec3> occlusion_samples(const Vec3& camera_center, const Cuboid& target, int n_samples);

struct Box2 {
    double x0 = 0.0;
    double y0 = 0.0;
    double x1 = 0.0;
    double y1 = 0.0;

    [[nodiscard]] bool empty() const noexcept { return !(x1 > x0 && y1 > y0); }
    [[nodiscard]] double width() const noexcept { return std::max(0.0, x1 - x0); }
    [[nodiscard]] double height() const noexcept { return std::max(0.0, y1 - y0); }
    [[nodiscard]] double area() const noexcept { return width() * height(); }
    [[nodiscard]] Box2 intersect(const Box2& o) const;
    bool operator==(const Box2&) const = default;
};

double iou(const Box2& a, const Box2& b);

struct CuboidProjection {
    std::array<Vec2, 8> corners{};     // order of Cuboid::corners()
    std::array<bool, 8> corner_ok{};
    Box2 bbox;                         // AABB of projected corners, unclipped
    Box2 clipped;                      // bbox clipped to the image
    bool fully_in_front = false;       // every corner projected successfully
};

CuboidProjection project_cuboid(const Camera& camera, const Cuboid& cuboid);

enum class QualityFlag : unsigned {
    LowResolution = 1u << 0,
    Truncated = 1u << 1,
    OutOfDistanceRange = 1u << 2,
    Occluded = 1u << 3,
    MaskMisaligned = 1u << 4,
};

struct QualityFlags {
    unsigned bits = 0;

    void set(QualityFlag f) { bits |= static_cast<unsigned>(f); }
    [[nodiscard]] bool has(QualityFlag f) const { return (bits & static_cast<unsigned>(f)) != 0; }
    [[nodiscard]] bool none() const { return bits == 0; }
    [[nodiscard]] std::vector<std::string> names() const;
    bool operator==(const QualityFlags&) const = default;
};

struct FilterConfig {
    double min_px = 64.0;
    double border_px = 2.0;
    double d_min = 3.0;
    double d_max = 60.0;
    double max_occlusion = 0.3;
    double min_mask_iou = 0.5;
};

struct ViewCandidate {
    std::size_t frame_index = 0;
    Camera camera = PinholeCamera{};
    Vec3 viewing_direction = Vec3::UnitX(); // camera -> object center, unit
    double distance = 0.0;
    Box2 bbox;                     // unclipped projected cuboid AABB
    int image_width = 0;
    int image_height = 0;
    double occlusion_fraction = 0.0;
    std::optional<double> mask_iou; // absent when no instance mask exists
    QualityFlags quality_flags;
};

struct QualityResult {
    bool pass = true;
    QualityFlags flags;
    bool operator==(const QualityResult&) const = default;
};

QualityResult quality_filter(const ViewCandidate& candidate, const FilterConfig& cfg);

struct MaskIou {
    double iou = 0.0;
    bool empty_mask = false;
};

// Bounding box of the foreground pixels (continuous coordinates).
std::optional<Box2> mask_bbox(const Mask& mask);
// IoU of the mask's bounding box against a projected cuboid AABB. An empty
// mask yields IoU 0 with `empty_mask` set.
MaskIou mask_cuboid_iou(const Mask& mask, const Box2& projected_bbox);

// Greedy farthest-point selection on the angle between viewing directions.
// Starts at `seed_index`; stops at k_max picks or when the best remaining
// candidate is closer than min_angle_deg to the selection. Ties go to the
// lowest index. Returns indices in selection order.
std::vector<std::size_t> fps_orientations(std::span<const Vec3> directions, std::size_t k_max,
                                          double min_angle_deg, std::size_t seed_index);
std::vector<std::size_t> fps_orientations(std::span<const ViewCandidate> candidates, std::size_t k_max,
                                          double min_angle_deg, std::size_t seed_index);

} // namespace logasset
