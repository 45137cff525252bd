// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/math.hpp"

namespace logasset {

RigidTransform look_at_pose(const Vec3& center, const Vec3& target, const Vec3& up) {
    const Vec3 forward = (target - center).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) {
        // Looking straight along `up`: any roll is as good as another.
        right = forward.cross(Vec3::UnitY());
        if (right.norm() < 1e-9) {
            right = forward.cross(Vec3::UnitX());
        }
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();
    RigidTransform pose;
    pose.rotation = Quat(r).normalized();
    pose.translation = -(pose.rotation * center);
    return pose;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * kPi * u2);
    has_spare_ = true;
    return mag * std::cos(2.0 * kPi * u2);
}

Vec3 Rng::unit_vector() {
    const double z = uniform(-1.0, 1.0);
    const double phi = uniform(0.0, 2.0 * kPi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

Quat random_rotation(Rng& rng) {
    Quat q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q.normalized();
}

} // namespace logasset
