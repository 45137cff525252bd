// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/camera.hpp"

#include "logasset/error.hpp"

#include <algorithm>
#include <stdexcept>

namespace logasset {

namespace {

constexpr int kMonotonicityGrid = 10000;

bool inside_image(const Vec2& px, int width, int height) {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width && px.y() <= height;
}

void require_positive_depth(double depth) {
    if (!(depth > 0.0)) {
        throw std::invalid_argument("unproject: depth must be positive");
    }
}

} // namespace

// ---------------------------------------------------------------------------
// Pinhole

PinholeCamera PinholeCamera::from_fov(double fov_deg, int width, int height, const RigidTransform& pose) {
    PinholeCamera cam;
    const double f = 0.5 * width / std::tan(0.5 * deg_to_rad(fov_deg));
    cam.fx = f;
    cam.fy = f;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    cam.pose = pose;
    return cam;
}

double PinholeCamera::fov_x_deg() const { return rad_to_deg(2.0 * std::atan(0.5 * width / fx)); }

void PinholeCamera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) {
        fail(ErrorCode::InvalidCamera, "focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        fail(ErrorCode::InvalidCamera, "image size must be positive");
    }
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        fail(ErrorCode::InvalidCamera, "principal point outside the image");
    }
}

Projection project(const PinholeCamera& camera, const Vec3& world) {
    const Vec3 p = camera.pose.apply(world);
    if (p.z() <= 0.0) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {Vec2(nan, nan), ProjectionStatus::Behind};
    }
    return {Vec2(camera.fx * p.x() / p.z() + camera.cx, camera.fy * p.y() / p.z() + camera.cy),
            ProjectionStatus::Ok};
}

Vec3 unproject(const PinholeCamera& camera, const Vec2& pixel, double depth) {
    require_positive_depth(depth);
    if (!inside_image(pixel, camera.width, camera.height)) {
        fail(ErrorCode::OutOfImage, "pixel outside the pinhole image");
    }
    const Vec3 p((pixel.x() - camera.cx) / camera.fx * depth, (pixel.y() - camera.cy) / camera.fy * depth, depth);
    return camera.pose.inverse().apply(p);
}

Vec3 ray_direction(const PinholeCamera& camera, const Vec2& pixel) {
    const Vec3 d((pixel.x() - camera.cx) / camera.fx, (pixel.y() - camera.cy) / camera.fy, 1.0);
    return camera.pose.rotation.conjugate() * d.normalized();
}

// ---------------------------------------------------------------------------
// f-theta

FThetaCamera::FThetaCamera(std::vector<double> poly, double cx, double cy, int width, int height,
                           const RigidTransform& pose, std::optional<double> theta_max)
    : poly_(std::move(poly)), cx_(cx), cy_(cy), width_(width), height_(height), pose_(pose) {
    if (poly_.empty() || !(poly_.front() > 0.0)) {
        fail(ErrorCode::InvalidCamera, "f-theta polynomial needs a positive linear term");
    }
    if (width_ <= 0 || height_ <= 0) {
        fail(ErrorCode::InvalidCamera, "image size must be positive");
    }
    if (theta_max) {
        if (!(*theta_max > 0.0 && *theta_max <= kPi)) {
            fail(ErrorCode::InvalidCamera, "theta_max must be in (0, pi]");
        }
        theta_max_ = *theta_max;
    } else {
        double corner = 0.0;
        for (double x : {0.0, static_cast<double>(width_)}) {
            for (double y : {0.0, static_cast<double>(height_)}) {
                corner = std::max(corner, std::hypot(x - cx_, y - cy_));
            }
        }
        // First grid angle reaching the corner radius, refined by bisection.
        double lo = 0.0;
        double hi = kPi;
        for (int i = 1; i <= kMonotonicityGrid; ++i) {
            const double th = kPi * i / kMonotonicityGrid;
            const double r = radius(th);
            if (r <= radius(kPi * (i - 1) / kMonotonicityGrid)) {
                fail(ErrorCode::InvalidCamera, "f-theta polynomial is not increasing before reaching the image corner");
            }
            if (r >= corner) {
                hi = th;
                break;
            }
            lo = th;
        }
        if (radius(hi) >= corner) {
            while (hi - lo > 1e-12) {
                const double mid = 0.5 * (lo + hi);
                (radius(mid) >= corner ? hi : lo) = mid;
            }
        }
        theta_max_ = hi;
    }
    double prev = radius(0.0);
    for (int i = 1; i <= kMonotonicityGrid; ++i) {
        const double r = radius(theta_max_ * i / kMonotonicityGrid);
        if (!(r > prev)) {
            fail(ErrorCode::InvalidCamera, "f-theta polynomial is not strictly increasing on [0, theta_max]");
        }
        prev = r;
    }
}

double FThetaCamera::radius(double theta) const {
    // k1 t + k2 t^3 + k3 t^5 ... evaluated by Horner in t^2.
    const double t2 = theta * theta;
    double acc = 0.0;
    for (auto it = poly_.rbegin(); it != poly_.rend(); ++it) {
        acc = acc * t2 + *it;
    }
    return acc * theta;
}

std::optional<double> FThetaCamera::theta_for_radius(double r) const {
    if (r < 0.0 || r > radius(theta_max_)) {
        return std::nullopt;
    }
    double lo = 0.0;
    double hi = theta_max_;
    for (int iter = 0; iter < 200 && hi - lo > 1e-13; ++iter) {
        const double mid = 0.5 * (lo + hi);
        (radius(mid) < r ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Projection project(const FThetaCamera& camera, const Vec3& world) {
    const Vec3 p = camera.pose().apply(world);
    const double rho = std::hypot(p.x(), p.y());
    const double theta = std::atan2(rho, p.z());
    Vec2 pixel(camera.cx(), camera.cy());
    if (rho > 0.0) {
        const double r = camera.radius(theta);
        pixel += Vec2(p.x(), p.y()) * (r / rho);
    }
    return {pixel, theta > camera.theta_max() ? ProjectionStatus::OutOfFov : ProjectionStatus::Ok};
}

Vec3 unproject(const FThetaCamera& camera, const Vec2& pixel, double depth) {
    require_positive_depth(depth);
    if (!inside_image(pixel, camera.width(), camera.height())) {
        fail(ErrorCode::OutOfImage, "pixel outside the f-theta image");
    }
    const Vec2 off(pixel.x() - camera.cx(), pixel.y() - camera.cy());
    const double r = off.norm();
    const auto theta = camera.theta_for_radius(r);
    if (!theta) {
        fail(ErrorCode::RootFindFailure, "radius beyond r(theta_max)");
    }
    Vec3 dir(0.0, 0.0, 1.0);
    if (r > 0.0) {
        const double s = std::sin(*theta);
        dir = Vec3(s * off.x() / r, s * off.y() / r, std::cos(*theta));
    }
    return camera.pose().inverse().apply(dir * depth);
}

// ---------------------------------------------------------------------------
// Variant dispatch

Projection project(const Camera& camera, const Vec3& world) {
    return std::visit([&](const auto& c) { return project(c, world); }, camera);
}

Vec3 unproject(const Camera& camera, const Vec2& pixel, double depth) {
    return std::visit([&](const auto& c) { return unproject(c, pixel, depth); }, camera);
}

double depth_of(const Camera& camera, const Vec3& world) {
    if (const auto* pin = std::get_if<PinholeCamera>(&camera)) {
        return pin->pose.apply(world).z();
    }
    return std::get<FThetaCamera>(camera).pose().apply(world).norm();
}

Vec3 camera_center(const Camera& camera) {
    return std::visit([](const auto& c) { return c.center(); }, camera);
}

RigidTransform camera_pose(const Camera& camera) {
    if (const auto* pin = std::get_if<PinholeCamera>(&camera)) {
        return pin->pose;
    }
    return std::get<FThetaCamera>(camera).pose();
}

int camera_width(const Camera& camera) {
    if (const auto* pin = std::get_if<PinholeCamera>(&camera)) {
        return pin->width;
    }
    return std::get<FThetaCamera>(camera).width();
}

int camera_height(const Camera& camera) {
    if (const auto* pin = std::get_if<PinholeCamera>(&camera)) {
        return pin->height;
    }
    return std::get<FThetaCamera>(camera).height();
}

Camera with_pose(const Camera& camera, const RigidTransform& pose) {
    if (const auto* pin = std::get_if<PinholeCamera>(&camera)) {
        PinholeCamera out = *pin;
        out.pose = pose;
        return out;
    }
    const auto& ft = std::get<FThetaCamera>(camera);
    return FThetaCamera(ft.poly(), ft.cx(), ft.cy(), ft.width(), ft.height(), pose, ft.theta_max());
}

Camera make_camera(const CameraCalibration& calib, const RigidTransform& ego_pose) {
    const RigidTransform world_to_camera = calib.extrinsics * ego_pose.inverse();
    const auto& k = calib.intrinsics;
    if (calib.model == CameraModel::Pinhole) {
        if (k.size() != 4) {
            fail(ErrorCode::InvalidCamera, "pinhole intrinsics need 4 values");
        }
        PinholeCamera cam{k[0], k[1], k[2], k[3], calib.width, calib.height, world_to_camera};
        cam.validate();
        return cam;
    }
    if (k.size() < 3) {
        fail(ErrorCode::InvalidCamera, "f-theta intrinsics need cx, cy and at least one coefficient");
    }
    return FThetaCamera(std::vector<double>(k.begin() + 2, k.end()), k[0], k[1], calib.width, calib.height,
                        world_to_camera, calib.theta_max);
}

// ---------------------------------------------------------------------------
// Rectification

ViewCrop rectify_crop(const Camera& source, const Image& image, const Vec3& look_at, double fov_deg, int out_size,
                      const Mask* source_mask, const RectifyOptions& options) {
    if (!project(source, look_at).ok()) {
        fail(ErrorCode::BehindCamera, "look-at point not visible to the source camera");
    }
    if (out_size <= 0) {
        throw std::invalid_argument("rectify_crop: out_size must be positive");
    }
    ViewCrop crop;
    const double fov = std::clamp(fov_deg, options.min_fov_deg, options.max_fov_deg);
    crop.fov_clamped = fov != fov_deg;

    const Vec3 center = camera_center(source);
    crop.camera = PinholeCamera::from_fov(fov, out_size, out_size, look_at_pose(center, look_at));
    crop.image = Image(out_size, out_size, image.channels(), kInvalidPixel);
    crop.valid = Mask(out_size, out_size, 0);
    if (source_mask != nullptr) {
        crop.foreground = Mask(out_size, out_size, 0);
    }
    const int src_w = camera_width(source);
    const int src_h = camera_height(source);
    for (int y = 0; y < out_size; ++y) {
        for (int x = 0; x < out_size; ++x) {
            const Vec3 dir = ray_direction(crop.camera, Vec2(x + 0.5, y + 0.5));
            const Projection pr = project(source, center + dir);
            if (!pr.ok() || !inside_image(pr.pixel, src_w, src_h)) {
                continue;
            }
            crop.valid.at(x, y) = 1;
            for (int c = 0; c < image.channels(); ++c) {
                crop.image.at(x, y, c) = image.sample(pr.pixel.x(), pr.pixel.y(), c);
            }
            if (source_mask != nullptr) {
                const int sx = std::clamp(static_cast<int>(std::floor(pr.pixel.x())), 0, src_w - 1);
                const int sy = std::clamp(static_cast<int>(std::floor(pr.pixel.y())), 0, src_h - 1);
                crop.foreground.at(x, y) = source_mask->at(sx, sy);
            }
        }
    }
    return crop;
}

// ---------------------------------------------------------------------------
// Rays and camera sets

RayMap plucker_map(const PinholeCamera& camera) {
    RayMap map;
    map.width = camera.width;
    map.height = camera.height;
    const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
    map.origins.assign(n, camera.center());
    map.directions.resize(n);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            map.directions[static_cast<std::size_t>(y) * camera.width + x] =
                ray_direction(camera, Vec2(x + 0.5, y + 0.5));
        }
    }
    return map;
}

std::vector<PinholeCamera> generate_target_cameras(double fov_deg, double distance, int n_views,
                                                   double elevation_deg, int image_size) {
    if (n_views < 1 || !(distance > 0.0)) {
        throw std::invalid_argument("generate_target_cameras: need n_views >= 1 and distance > 0");
    }
    std::vector<PinholeCamera> cams;
    cams.reserve(static_cast<std::size_t>(n_views));
    const double elev = deg_to_rad(elevation_deg);
    for (int k = 0; k < n_views; ++k) {
        const double az = deg_to_rad(360.0 * k / n_views);
        const Vec3 center = distance * Vec3(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az),
                                            std::sin(elev));
        cams.push_back(PinholeCamera::from_fov(fov_deg, image_size, image_size, look_at_pose(center, Vec3::Zero())));
    }
    return cams;
}

PinholeCamera perturb_camera(const PinholeCamera& camera, std::uint64_t seed, const CameraJitter& jitter) {
    if (jitter.fov_deg < 0.0 || jitter.rotation_deg < 0.0 || jitter.translation_m < 0.0) {
        throw std::invalid_argument("perturb_camera: jitter magnitudes must be non-negative");
    }
    Rng rng(seed);
    // Draw in a fixed order so a given seed always maps to the same jitter.
    const double dfov = rng.uniform(-1.0, 1.0) * jitter.fov_deg;
    const Vec3 axis = rng.unit_vector();
    const double angle = rng.uniform(-1.0, 1.0) * jitter.rotation_deg;
    const Vec3 dt(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));

    PinholeCamera out = camera;
    if (jitter.fov_deg > 0.0) {
        const double fov = std::clamp(camera.fov_x_deg() + dfov, 1.0, 179.0);
        const double f = 0.5 * camera.width / std::tan(0.5 * deg_to_rad(fov));
        const double ratio = f / camera.fx;
        out.fx = f;
        out.fy = camera.fy * ratio;
    }
    if (jitter.rotation_deg > 0.0 || jitter.translation_m > 0.0) {
        Vec3 center = camera.center();
        Quat rot = camera.pose.rotation;
        if (jitter.rotation_deg > 0.0) {
            rot = (Quat(Eigen::AngleAxisd(deg_to_rad(angle), axis)) * rot).normalized();
        }
        if (jitter.translation_m > 0.0) {
            center += dt * jitter.translation_m;
        }
        out.pose.rotation = rot;
        out.pose.translation = -(rot * center);
    }
    return out;
}

} // namespace logasset
