// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/geometry.hpp"

#include "logasset/error.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace logasset {

bool Cuboid::contains(const Vec3& world) const {
    const Vec3 p = to_local(world);
    return (p.array().abs() <= half_extents.array()).all();
}

std::array<Vec3, 8> Cuboid::corners() const {
    std::array<Vec3, 8> out;
    for (int i = 0; i < 8; ++i) {
        const Vec3 local((i & 1) ? half_extents.x() : -half_extents.x(), (i & 2) ? half_extents.y() : -half_extents.y(),
                         (i & 4) ? half_extents.z() : -half_extents.z());
        out[static_cast<std::size_t>(i)] = to_world(local);
    }
    return out;
}

std::optional<RayHit> ray_box_intersect(const Ray& ray, const Cuboid& box) {
    const Vec3 o = box.to_local(ray.origin);
    const Vec3 d = box.rotation.conjugate() * ray.direction;
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        const double h = box.half_extents[i];
        if (d[i] == 0.0) {
            if (o[i] < -h || o[i] > h) {
                return std::nullopt;
            }
            continue;
        }
        const double inv = 1.0 / d[i];
        double t0 = (-h - o[i]) * inv;
        double t1 = (h - o[i]) * inv;
        if (t0 > t1) {
            std::swap(t0, t1);
        }
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far) {
            return std::nullopt;
        }
    }
    if (t_far <= 0.0) {
        return std::nullopt;
    }
    return RayHit{t_near, t_far};
}

// ---------------------------------------------------------------------------
// Occlusion

namespace {

struct FaceRef {
    int axis;
    double sign;
    double weight;
};

// Visible faces in the fixed order (x-, x+, y-, y+, z-, z+).
std::vector<FaceRef> visible_faces(const Vec3& cam_local, const Vec3& h) {
    std::vector<FaceRef> faces;
    for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {-1.0, 1.0}) {
            if (sign * cam_local[axis] <= h[axis]) {
                continue;
            }
            Vec3 fc = Vec3::Zero();
            fc[axis] = sign * h[axis];
            const Vec3 to_cam = cam_local - fc;
            const double dist2 = to_cam.squaredNorm();
            const double cos = sign * to_cam[axis] / std::sqrt(dist2);
            const double area = 4.0 * h[(axis + 1) % 3] * h[(axis + 2) % 3];
            faces.push_back({axis, sign, area * cos / dist2});
        }
    }
    return faces;
}

// Largest-remainder apportionment of n samples; ties go to the earlier face.
std::vector<int> apportion(const std::vector<FaceRef>& faces, int n) {
    double total = 0.0;
    for (const auto& f : faces) {
        total += f.weight;
    }
    std::vector<int> counts(faces.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    int assigned = 0;
    for (std::size_t i = 0; i < faces.size(); ++i) {
        const double quota = n * faces[i].weight / total;
        counts[i] = static_cast<int>(std::floor(quota));
        assigned += counts[i];
        remainders.emplace_back(quota - counts[i], i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) {
        ++counts[remainders[k % remainders.size()].second];
    }
    return counts;
}

} // namespace

std::vector<Vec3> occlusion_samples(const Vec3& camera_center, const Cuboid& target, int n_samples) {
    if (n_samples < 1) {
        throw std::invalid_argument("occlusion_samples: n_samples must be >= 1");
    }
    if (target.contains(camera_center)) {
        fail(ErrorCode::CameraInsideTarget, "camera center lies inside the target cuboid");
    }
    const Vec3 cam_local = target.to_local(camera_center);
    const Vec3& h = target.half_extents;
    const auto faces = visible_faces(cam_local, h);
    const auto counts = apportion(faces, n_samples);

    std::vector<Vec3> samples;
    samples.reserve(static_cast<std::size_t>(n_samples));
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const int m = counts[f];
        if (m == 0) {
            continue;
        }
        const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(m))));
        const int rows = (m + cols - 1) / cols;
        const int a1 = (faces[f].axis + 1) % 3;
        const int a2 = (faces[f].axis + 2) % 3;
        for (int j = 0; j < m; ++j) {
            const int r = j / cols;
            const int c = j % cols;
            const int in_row = (r == rows - 1) ? m - cols * (rows - 1) : cols;
            const double u = (c + 0.5) / in_row;
            const double v = (r + 0.5) / rows;
            Vec3 local;
            local[faces[f].axis] = faces[f].sign * h[faces[f].axis];
            local[a1] = (2.0 * u - 1.0) * h[a1];
            local[a2] = (2.0 * v - 1.0) * h[a2];
            samples.push_back(target.to_world(local));
        }
    }
    return samples;
}

double occlusion_fraction(const Vec3& camera_center, const Cuboid& target, std::span<const Cuboid> occluders,
                          int n_samples) {
    const auto samples = occlusion_samples(camera_center, target, n_samples);
    int occluded = 0;
    for (const Vec3& p : samples) {
        const Vec3 to = p - camera_center;
        const double dist = to.norm();
        const Ray ray{camera_center, to / dist};
        for (const Cuboid& occ : occluders) {
            const auto hit = ray_box_intersect(ray, occ);
            if (hit && hit->t_near < dist) {
                ++occluded;
                break;
            }
        }
    }
    return static_cast<double>(occluded) / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------------------
// Projection and filtering

Box2 Box2::intersect(const Box2& o) const {
    return {std::max(x0, o.x0), std::max(y0, o.y0), std::min(x1, o.x1), std::min(y1, o.y1)};
}

double iou(const Box2& a, const Box2& b) {
    const double inter = a.intersect(b).area();
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

CuboidProjection project_cuboid(const Camera& camera, const Cuboid& cuboid) {
    CuboidProjection out;
    const auto corners = cuboid.corners();
    bool any = false;
    out.fully_in_front = true;
    Box2 box{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < 8; ++i) {
        const Projection p = project(camera, corners[i]);
        out.corners[i] = p.pixel;
        out.corner_ok[i] = p.ok();
        if (!p.ok()) {
            out.fully_in_front = false;
            continue;
        }
        any = true;
        box.x0 = std::min(box.x0, p.pixel.x());
        box.y0 = std::min(box.y0, p.pixel.y());
        box.x1 = std::max(box.x1, p.pixel.x());
        box.y1 = std::max(box.y1, p.pixel.y());
    }
    if (any) {
        out.bbox = box;
        out.clipped = box.intersect(Box2{0.0, 0.0, static_cast<double>(camera_width(camera)),
                                         static_cast<double>(camera_height(camera))});
    }
    return out;
}

std::vector<std::string> QualityFlags::names() const {
    std::vector<std::string> out;
    if (has(QualityFlag::LowResolution)) out.emplace_back("low_resolution");
    if (has(QualityFlag::Truncated)) out.emplace_back("truncated");
    if (has(QualityFlag::OutOfDistanceRange)) out.emplace_back("out_of_distance_range");
    if (has(QualityFlag::Occluded)) out.emplace_back("occluded");
    if (has(QualityFlag::MaskMisaligned)) out.emplace_back("mask_misaligned");
    return out;
}

QualityResult quality_filter(const ViewCandidate& candidate, const FilterConfig& cfg) {
    QualityResult r;
    const Box2 frame{0.0, 0.0, static_cast<double>(candidate.image_width),
                     static_cast<double>(candidate.image_height)};
    const Box2 visible = candidate.bbox.intersect(frame);
    if (visible.empty() || std::min(visible.width(), visible.height()) < cfg.min_px) {
        r.flags.set(QualityFlag::LowResolution);
    }
    const Box2& b = candidate.bbox;
    if (b.x0 < cfg.border_px || b.y0 < cfg.border_px || b.x1 > candidate.image_width - cfg.border_px ||
        b.y1 > candidate.image_height - cfg.border_px) {
        r.flags.set(QualityFlag::Truncated);
    }
    if (candidate.distance < cfg.d_min || candidate.distance > cfg.d_max) {
        r.flags.set(QualityFlag::OutOfDistanceRange);
    }
    if (candidate.occlusion_fraction > cfg.max_occlusion) {
        r.flags.set(QualityFlag::Occluded);
    }
    if (candidate.mask_iou && *candidate.mask_iou < cfg.min_mask_iou) {
        r.flags.set(QualityFlag::MaskMisaligned);
    }
    r.pass = r.flags.none();
    return r;
}

std::optional<Box2> mask_bbox(const Mask& mask) {
    int x0 = mask.width();
    int y0 = mask.height();
    int x1 = -1;
    int y1 = -1;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) != 0) {
                x0 = std::min(x0, x);
                y0 = std::min(y0, y);
                x1 = std::max(x1, x);
                y1 = std::max(y1, y);
            }
        }
    }
    if (x1 < 0) {
        return std::nullopt;
    }
    return Box2{static_cast<double>(x0), static_cast<double>(y0), static_cast<double>(x1 + 1),
                static_cast<double>(y1 + 1)};
}

MaskIou mask_cuboid_iou(const Mask& mask, const Box2& projected_bbox) {
    const auto box = mask_bbox(mask);
    if (!box) {
        return {0.0, true};
    }
    return {iou(*box, projected_bbox), false};
}

// ---------------------------------------------------------------------------
// Farthest-point view selection

std::vector<std::size_t> fps_orientations(std::span<const Vec3> directions, std::size_t k_max,
                                          double min_angle_deg, std::size_t seed_index) {
    const std::size_t n = directions.size();
    if (n == 0 || k_max == 0 || seed_index >= n) {
        throw std::invalid_argument("fps_orientations: need candidates, k_max > 0 and a valid seed");
    }
    const double min_angle = deg_to_rad(min_angle_deg);
    std::vector<std::size_t> selected{seed_index};
    std::vector<bool> taken(n, false);
    taken[seed_index] = true;
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = angle_between(directions[i], directions[seed_index]);
    }
    while (selected.size() < k_max) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i] && (best == n || nearest[i] > nearest[best])) {
                best = i;
            }
        }
        if (best == n || nearest[best] < min_angle) {
            break;
        }
        selected.push_back(best);
        taken[best] = true;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], angle_between(directions[i], directions[best]));
        }
    }
    return selected;
}

std::vector<std::size_t> fps_orientations(std::span<const ViewCandidate> candidates, std::size_t k_max,
                                          double min_angle_deg, std::size_t seed_index) {
    std::vector<Vec3> dirs;
    dirs.reserve(candidates.size());
    for (const auto& c : candidates) {
        dirs.push_back(c.viewing_direction);
    }
    return fps_orientations(dirs, k_max, min_angle_deg, seed_index);
}

} // namespace logasset
