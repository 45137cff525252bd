// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace logasset {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

// Quaternions follow the (w, x, y, z) Hamilton convention throughout; the
// world frame is right-handed with z up.
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = std::numbers::pi;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Angle between two unit vectors, robust to rounding just outside [-1, 1].
inline double angle_between(const Vec3& a, const Vec3& b) {
    const double c = a.dot(b);
    return std::acos(std::clamp(c, -1.0, 1.0));
}

// Rigid transform p' = R p + t.
struct RigidTransform {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    [[nodiscard]] Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    [[nodiscard]] Mat3 matrix() const { return rotation.toRotationMatrix(); }

    [[nodiscard]] RigidTransform inverse() const {
        const Quat inv = rotation.conjugate();
        return {inv, -(inv * translation)};
    }

    // (this * other).apply(p) == this->apply(other.apply(p))
    [[nodiscard]] RigidTransform operator*(const RigidTransform& other) const {
        return {(rotation * other.rotation).normalized(), rotation * other.translation + translation};
    }

    bool operator==(const RigidTransform& o) const {
        return rotation.coeffs() == o.rotation.coeffs() && translation == o.translation;
    }
};

// Builds a world-to-camera transform for a camera at `center` looking at
// `target`, with the roll fixed so that world `up` projects upward in the
// image (camera axes: x right, y down, z forward).
RigidTransform look_at_pose(const Vec3& center, const Vec3& target, const Vec3& up = Vec3::UnitZ());

// Deterministic random source. The distributions are implemented here rather
// than with <random>'s distributions, whose outputs differ between standard
// libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal();
    Vec3 unit_vector();
    std::uint64_t next_u64() { return engine_(); }
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n; }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

Quat random_rotation(Rng& rng);

} // namespace logasset
