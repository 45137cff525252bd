// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/image.hpp"
#include "logasset/logstore.hpp"
#include "logasset/math.hpp"

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace logasset {

// Pixel convention used everywhere: pixel (i, j) covers [i, i+1) x [j, j+1)
// and samples the continuous coordinate (i + 0.5, j + 0.5).

struct PinholeCamera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    RigidTransform pose; // world -> camera (x right, y down, z forward)

    // Square-pixel camera with the principal point at the image center.
    static PinholeCamera from_fov(double fov_deg, int width, int height, const RigidTransform& pose);

    [[nodiscard]] Vec3 center() const { return pose.inverse().translation; }
    [[nodiscard]] double fov_x_deg() const;
    // Throws InvalidCamera when the invariants do not hold.
    void validate() const;

    bool operator==(const PinholeCamera&) const = default;
};

// Equidistant-family fisheye: r(theta) = k1 theta + k2 theta^3 + k3 theta^5 ...
class FThetaCamera {
public:
    // theta_max defaults to the angle at which r reaches the farthest image
    // corner (capped at pi). r must be strictly increasing on [0, theta_max];
    // this is checked on a dense grid and violations throw InvalidCamera.
    FThetaCamera(std::vector<double> poly, double cx, double cy, int width, int height, const RigidTransform& pose,
                 std::optional<double> theta_max = std::nullopt);

    [[nodiscard]] double radius(double theta) const;
    // Inverse of radius() on [0, theta_max] by bisection; nullopt when the
    // radius is beyond r(theta_max).
    [[nodiscard]] std::optional<double> theta_for_radius(double r) const;

    [[nodiscard]] const std::vector<double>& poly() const noexcept { return poly_; }
    [[nodiscard]] double cx() const noexcept { return cx_; }
    [[nodiscard]] double cy() const noexcept { return cy_; }
    [[nodiscard]] int width() const noexcept { return width_; }
    [[nodiscard]] int height() const noexcept { return height_; }
    [[nodiscard]] double theta_max() const noexcept { return theta_max_; }
    [[nodiscard]] const RigidTransform& pose() const noexcept { return pose_; }
    [[nodiscard]] Vec3 center() const { return pose_.inverse().translation; }

    bool operator==(const FThetaCamera&) const = default;

private:
    std::vector<double> poly_;
    double cx_;
    double cy_;
    int width_;
    int height_;
    RigidTransform pose_;
    double theta_max_ = 0.0;
};

using Camera = std::variant<PinholeCamera, FThetaCamera>;

enum class ProjectionStatus { Ok, Behind, OutOfFov };

struct Projection {
    Vec2 pixel = Vec2::Zero();
    ProjectionStatus status = ProjectionStatus::Ok;
    [[nodiscard]] bool ok() const noexcept { return status == ProjectionStatus::Ok; }
};

Projection project(const PinholeCamera& camera, const Vec3& world);
Projection project(const FThetaCamera& camera, const Vec3& world);
Projection project(const Camera& camera, const Vec3& world);

// Depth as accepted by unproject(): z in the camera frame for pinhole
// cameras, distance along the ray for f-theta cameras (which see past 90
// degrees, where z stops being a usable depth).
double depth_of(const Camera& camera, const Vec3& world);

// Throws OutOfImage for pixels outside [0, width] x [0, height] and
// RootFindFailure when an f-theta radius has no inverse in [0, theta_max].
Vec3 unproject(const PinholeCamera& camera, const Vec2& pixel, double depth);
Vec3 unproject(const FThetaCamera& camera, const Vec2& pixel, double depth);
Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth);

// Unit viewing ray through a continuous pixel coordinate, world frame.
Vec3 ray_direction(const PinholeCamera& camera, const Vec2& pixel);

Vec3 camera_center(const Camera& camera);
RigidTransform camera_pose(const Camera& camera);
int camera_width(const Camera& camera);
int camera_height(const Camera& camera);
// Same intrinsics, different world -> camera pose.
Camera with_pose(const Camera& camera, const RigidTransform& pose);

// Builds the world-frame camera for one frame: world -> vehicle -> camera.
Camera make_camera(const CameraCalibration& calib, const RigidTransform& ego_pose = {});

struct ViewCrop {
    Image image;          // -1 in every channel where `valid` is 0
    Mask valid;           // 1 where the source image covered the pixel
    Mask foreground;      // resampled object mask, empty when none was given
    PinholeCamera camera; // virtual canonical camera
    bool fov_clamped = false;
};

inline constexpr float kInvalidPixel = -1.0f;

struct RectifyOptions {
    double min_fov_deg = 10.0;
    double max_fov_deg = 40.0;
};

// Resamples the view of `look_at` into a square virtual pinhole camera at the
// source camera center. The virtual camera's roll puts world up at the top of
// the image. Throws BehindCamera when the source camera cannot see `look_at`.
ViewCrop rectify_crop(const Camera& source, const Image& image, const Vec3& look_at, double fov_deg, int out_size,
                      const Mask* source_mask = nullptr, const RectifyOptions& options = {});

// Per-pixel (origin, direction) rays in the world frame, stored row-major.
struct RayMap {
    int width = 0;
    int height = 0;
    std::vector<Vec3> origins;
    std::vector<Vec3> directions;

    [[nodiscard]] const Vec3& origin(int x, int y) const { return origins[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] const Vec3& direction(int x, int y) const {
        return directions[static_cast<std::size_t>(y) * width + x];
    }
};

RayMap plucker_map(const PinholeCamera& camera);

// Cameras on a circle of radius `distance` around the origin, looking at it,
// azimuths k * 360 / n degrees measured from +x towards +y.
std::vector<PinholeCamera> generate_target_cameras(double fov_deg, double distance, int n_views = 16,
                                                   double elevation_deg = 0.0, int image_size = 256);

struct CameraJitter {
    double fov_deg = 0.0;
    double rotation_deg = 0.0;
    double translation_m = 0.0;
};

// Uniform jitter of field of view, orientation (about a random axis) and
// center (per axis). Deterministic in `seed`; zero magnitudes leave the
// corresponding parameters bit-identical.
PinholeCamera perturb_camera(const PinholeCamera& camera, std::uint64_t seed, const CameraJitter& jitter);

} // namespace logasset
