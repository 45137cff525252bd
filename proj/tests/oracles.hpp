// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

// Independent reference implementations shared by the unit and acceptance
// tests. None of these call into the code they check.

#pragma once

#include "logasset/geometry.hpp"
#include "logasset/math.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace logasset::oracle {

struct MarchResult {
    bool hit = false;
    double t_near = 0.0;
    double min_sdf = std::numeric_limits<double>::infinity(); // closest approach to the surface
};

// Marches the ray with a fixed step through the bounding sphere of the box
// and tests each point against the box discretized on a voxel grid. Half
// extents are expected to be multiples of `voxel`, so the voxelized box is
// the box itself.
inline MarchResult voxel_march(const Ray& ray, const Cuboid& box, double step = 1e-4, double voxel = 1e-3) {
    MarchResult out;
    const double radius = box.half_extents.norm();
    const Vec3 oc = box.center - ray.origin;
    const double tc = oc.dot(ray.direction);
    const double d2 = oc.squaredNorm() - tc * tc;
    if (d2 > radius * radius) return out;
    const double half = std::sqrt(radius * radius - d2);
    const double t0 = std::max(0.0, tc - half);
    const double t1 = tc + half;
    const Mat3 rt = box.rotation.toRotationMatrix().transpose();
    long n[3];
    for (int i = 0; i < 3; ++i) n[i] = std::lround(box.half_extents[i] / voxel);
    for (double t = t0; t <= t1; t += step) {
        const Vec3 local = rt * (ray.origin + t * ray.direction - box.center);
        double sdf = -std::numeric_limits<double>::infinity();
        bool inside = true;
        for (int i = 0; i < 3; ++i) {
            sdf = std::max(sdf, std::abs(local[i]) - box.half_extents[i]);
            const long idx = static_cast<long>(std::floor(local[i] / voxel));
            if (idx < -n[i] || idx >= n[i]) inside = false;
        }
        out.min_sdf = std::min(out.min_sdf, sdf);
        if (inside && !out.hit) {
            out.hit = true;
            out.t_near = t;
            return out;
        }
    }
    return out;
}

// Angle between two vectors via atan2 of the cross and dot products.
inline double angle_atan2(const Vec3& a, const Vec3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

// Brute-force greedy farthest-point selection: at every step scan every
// unselected candidate, take the one whose minimum angle to the selection is
// largest (lowest index on ties), stop below the threshold or at k.
inline std::vector<std::size_t> fps_greedy(const std::vector<Vec3>& dirs, std::size_t k, double min_angle_deg,
                                           std::size_t seed) {
    std::vector<std::size_t> sel = {seed};
    std::vector<bool> used(dirs.size(), false);
    used[seed] = true;
    const double thr = min_angle_deg * kPi / 180.0;
    while (sel.size() < k) {
        double best = -1.0;
        std::size_t best_i = dirs.size();
        for (std::size_t i = 0; i < dirs.size(); ++i) {
            if (used[i]) continue;
            double m = std::numeric_limits<double>::infinity();
            for (const auto s : sel) m = std::min(m, angle_atan2(dirs[i].normalized(), dirs[s].normalized()));
            if (m > best) {
                best = m;
                best_i = i;
            }
        }
        if (best_i == dirs.size() || best < thr) break;
        used[best_i] = true;
        sel.push_back(best_i);
    }
    return sel;
}

} // namespace logasset::oracle
