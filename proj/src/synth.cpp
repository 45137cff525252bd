// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/synth.hpp"

#include "logasset/camera.hpp"
#include "logasset/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace logasset {

SynthSpec parse_synth_spec(std::string_view name) {
    if (name == "ring8") return SynthSpec::Ring8;
    if (name == "ring8-fisheye") return SynthSpec::Ring8Fisheye;
    if (name == "wall") return SynthSpec::Wall;
    if (name == "half") return SynthSpec::Half;
    throw std::invalid_argument("unknown synth spec '" + std::string(name) + "'");
}

std::string_view to_string(SynthSpec spec) noexcept {
    switch (spec) {
    case SynthSpec::Ring8: return "ring8";
    case SynthSpec::Ring8Fisheye: return "ring8-fisheye";
    case SynthSpec::Wall: return "wall";
    case SynthSpec::Half: return "half";
    }
    return "ring8";
}

namespace {

constexpr int kImageSize = 256;
constexpr double kFrameDt = 0.1;

// Vehicle frame: x forward, y left, z up. The camera looks along vehicle +x.
RigidTransform vehicle_to_camera() {
    Mat3 r;
    r << 0, -1, 0, 0, 0, -1, 1, 0, 0;
    return {Quat(r), Vec3::Zero()};
}

// Vehicle at `position`, facing `target`, level with the ground.
RigidTransform ego_facing(const Vec3& position, const Vec3& target) {
    Vec3 x = target - position;
    x.z() = 0.0;
    x.normalize();
    const Vec3 z = Vec3::UnitZ();
    const Vec3 y = z.cross(x);
    Mat3 r;
    r.col(0) = x;
    r.col(1) = y;
    r.col(2) = z;
    return {Quat(r).normalized(), position};
}

std::string frame_name(std::size_t i) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return buf;
}

CuboidTrack static_track(const std::string& id, ObjectClass cls, const Vec3& center, const Vec3& half, double t_end) {
    CuboidTrack tr;
    tr.object_id = id;
    tr.class_label = cls;
    CuboidState s;
    s.center = center;
    s.half_extents = half;
    s.timestamp = 0.0;
    tr.states.push_back(s);
    s.timestamp = t_end;
    tr.states.push_back(s);
    return tr;
}

} // namespace

SynthScene synth_scene(SynthSpec spec, std::uint64_t seed) {
    Rng rng(seed);
    SynthScene scene;
    SensorLog& log = scene.log;
    log.session_id = std::string("synth-") + std::string(to_string(spec)) + "-" + std::to_string(seed);

    CameraCalibration cam;
    cam.camera_id = "front";
    cam.width = kImageSize;
    cam.height = kImageSize;
    cam.extrinsics = vehicle_to_camera();
    if (spec == SynthSpec::Ring8Fisheye) {
        cam.model = CameraModel::FTheta;
        cam.intrinsics = {kImageSize / 2.0, kImageSize / 2.0, 400.0, -20.0};
    } else {
        cam.model = CameraModel::Pinhole;
        cam.intrinsics = {400.0, 400.0, kImageSize / 2.0, kImageSize / 2.0};
    }
    log.cameras.push_back(cam);

    std::vector<Vec3> positions;
    const double phase = rng.uniform(0.0, 45.0);
    switch (spec) {
    case SynthSpec::Ring8:
    case SynthSpec::Ring8Fisheye:
        for (int k = 0; k < 8; ++k) {
            const double a = deg_to_rad(phase + 45.0 * k);
            positions.emplace_back(10.0 * std::cos(a), 10.0 * std::sin(a), 0.0);
        }
        break;
    case SynthSpec::Wall:
        for (int k = -2; k <= 2; ++k) {
            const double a = deg_to_rad(15.0 * k);
            positions.emplace_back(10.0 * std::cos(a), 10.0 * std::sin(a), 0.0);
        }
        break;
    case SynthSpec::Half:
        for (int k = 0; k < 3; ++k) {
            positions.emplace_back(10.0, 0.0, 0.0);
        }
        break;
    }
    for (std::size_t k = 0; k < positions.size(); ++k) {
        FrameRecord f;
        f.camera_id = cam.camera_id;
        f.timestamp = kFrameDt * static_cast<double>(k);
        f.image = "images/" + cam.camera_id + "/" + frame_name(k) + ".png";
        f.ego_pose = ego_facing(positions[k], Vec3::Zero());
        log.frames.push_back(f);
    }
    const double t_end = kFrameDt * static_cast<double>(positions.size() - 1);
    switch (spec) {
    case SynthSpec::Ring8:
    case SynthSpec::Ring8Fisheye:
        log.tracks.push_back(static_track("obj0", ObjectClass::ConsumerVehicle, Vec3::Zero(), Vec3::Ones(), t_end));
        break;
    case SynthSpec::Wall:
        log.tracks.push_back(static_track("target", ObjectClass::ConsumerVehicle, Vec3::Zero(), Vec3::Ones(), t_end));
        log.tracks.push_back(static_track("wall", ObjectClass::Other, Vec3(5.0, 0.0, 0.0), Vec3(0.25, 4.5, 4.0), t_end));
        break;
    case SynthSpec::Half:
        log.tracks.push_back(static_track("target", ObjectClass::ConsumerVehicle, Vec3::Zero(), Vec3::Ones(), t_end));
        log.tracks.push_back(
            static_track("occluder", ObjectClass::Other, Vec3(4.5, 1.5, 0.0), Vec3(0.5, 1.5, 3.0), t_end));
        break;
    }
    for (std::size_t i = 0; i < log.tracks.size(); ++i) {
        scene.colors.emplace_back(rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9), rng.uniform(0.2, 0.9));
    }
    // Per-frame mask files exist for every track.
    for (std::size_t k = 0; k < log.frames.size(); ++k) {
        for (const auto& tr : log.tracks) {
            log.frames[k].masks[tr.object_id] = "masks/" + tr.object_id + "/" + frame_name(k) + ".png";
        }
    }
    log.reindex();

    for (std::size_t k = 0; k < log.frames.size(); ++k) {
        const auto& frame = log.frames[k];
        const Camera camera = make_camera(log.camera(frame.camera_id), frame.ego_pose);
        const Vec3 center = camera_center(camera);
        for (std::size_t i = 0; i < log.tracks.size(); ++i) {
            const Cuboid target = Cuboid::from_state(interpolate_cuboid(log.tracks[i], frame.timestamp).state);
            std::vector<Cuboid> occluders;
            for (std::size_t j = 0; j < log.tracks.size(); ++j) {
                if (j != i) {
                    occluders.push_back(Cuboid::from_state(interpolate_cuboid(log.tracks[j], frame.timestamp).state));
                }
            }
            if (target.contains(center)) {
                continue;
            }
            VisibilityTruth t;
            t.frame_index = k;
            t.object_id = log.tracks[i].object_id;
            t.occlusion = analytic_occlusion(center, target, occluders);
            const auto proj = project_cuboid(camera, target);
            t.in_view = proj.fully_in_front && proj.bbox.x0 >= 0.0 && proj.bbox.y0 >= 0.0 &&
                        proj.bbox.x1 <= camera_width(camera) && proj.bbox.y1 <= camera_height(camera);
            scene.truth.push_back(t);
        }
    }
    return scene;
}

namespace {

std::optional<Vec3> pixel_ray(const Camera& camera, const Vec2& pixel) {
    if (const auto* p = std::get_if<PinholeCamera>(&camera)) {
        return ray_direction(*p, pixel);
    }
    try {
        const Vec3 point = unproject(camera, pixel, 1.0);
        return (point - camera_center(camera)).normalized();
    } catch (const Error&) {
        return std::nullopt;
    }
}

Vec3 face_normal_world(const Cuboid& box, const Vec3& hit) {
    const Vec3 local = box.to_local(hit);
    int axis = 0;
    double best = -1.0;
    for (int a = 0; a < 3; ++a) {
        const double v = std::abs(local[a]) / box.half_extents[a];
        if (v > best) {
            best = v;
            axis = a;
        }
    }
    Vec3 n = Vec3::Zero();
    n[axis] = local[axis] >= 0.0 ? 1.0 : -1.0;
    return box.rotation * n;
}

} // namespace

SynthFrame render_synth_frame(const SynthScene& scene, std::size_t frame_index) {
    const SensorLog& log = scene.log;
    const FrameRecord& frame = log.frames.at(frame_index);
    const Camera camera = make_camera(log.camera(frame.camera_id), frame.ego_pose);
    const Vec3 center = camera_center(camera);
    std::vector<Cuboid> boxes;
    for (const auto& tr : log.tracks) {
        boxes.push_back(Cuboid::from_state(interpolate_cuboid(tr, frame.timestamp).state));
    }
    const int w = camera_width(camera);
    const int h = camera_height(camera);
    SynthFrame out;
    out.image = Image(w, h, 3, 0.5f);
    out.masks.assign(boxes.size(), Mask(w, h, 0));
    const Vec3 light = Vec3(0.3, 0.5, 0.8).normalized();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto dir = pixel_ray(camera, Vec2(x + 0.5, y + 0.5));
            if (!dir) continue;
            const Ray ray{center, *dir};
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_i = boxes.size();
            for (std::size_t i = 0; i < boxes.size(); ++i) {
                const auto hit = ray_box_intersect(ray, boxes[i]);
                if (hit && hit->t_near > 0.0 && hit->t_near < best) {
                    best = hit->t_near;
                    best_i = i;
                }
            }
            if (best_i == boxes.size()) continue;
            const Vec3 n = face_normal_world(boxes[best_i], ray.at(best));
            const double shade = 0.55 + 0.45 * std::abs(n.dot(light));
            const Vec3 c = scene.colors[best_i] * shade;
            for (int ch = 0; ch < 3; ++ch) {
                out.image.at(x, y, ch) = static_cast<float>(c[ch]);
            }
            out.masks[best_i].at(x, y) = 1;
        }
    }
    return out;
}

nlohmann::json truth_json(const SynthScene& scene) {
    nlohmann::json j;
    j["schema"] = 1;
    j["session_id"] = scene.log.session_id;
    j["visibility"] = nlohmann::json::array();
    for (const auto& t : scene.truth) {
        j["visibility"].push_back(
            {{"frame_index", t.frame_index}, {"object_id", t.object_id}, {"occlusion", t.occlusion}, {"in_view", t.in_view}});
    }
    return j;
}

void write_synth_scene(SynthScene& scene, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    scene.log.root = dir;
    for (std::size_t k = 0; k < scene.log.frames.size(); ++k) {
        const FrameRecord& f = scene.log.frames[k];
        const SynthFrame rendered = render_synth_frame(scene, k);
        std::filesystem::create_directories((dir / f.image).parent_path());
        write_png(dir / f.image, rendered.image);
        for (std::size_t i = 0; i < scene.log.tracks.size(); ++i) {
            const auto& rel = f.masks.at(scene.log.tracks[i].object_id);
            std::filesystem::create_directories((dir / rel).parent_path());
            write_png(dir / rel, rendered.masks[i]);
        }
    }
    write_manifest(scene.log, dir);
    std::ofstream out(dir / "truth.json");
    out << truth_json(scene).dump(2) << '\n';
    if (!out) {
        fail(ErrorCode::IoError, "cannot write " + (dir / "truth.json").string());
    }
}

namespace {

using Poly = std::vector<Vec2>;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// Counter-clockwise convex hull (Andrew's monotone chain).
Poly convex_hull(Poly pts) {
    std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return {};
    Poly hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
        while (k >= t && cross2(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0.0) --k;
        hull[k++] = pts[i - 1];
    }
    hull.resize(k - 1);
    return hull;
}

// Sutherland-Hodgman clip of a polygon by a convex counter-clockwise polygon.
Poly clip(const Poly& subject, const Poly& clipper) {
    Poly out = subject;
    for (std::size_t i = 0; i < clipper.size() && !out.empty(); ++i) {
        const Vec2 a = clipper[i];
        const Vec2 b = clipper[(i + 1) % clipper.size()];
        const Poly in = out;
        out.clear();
        auto side = [&](const Vec2& p) { return cross2(b - a, p - a); };
        for (std::size_t j = 0; j < in.size(); ++j) {
            const Vec2 p = in[j];
            const Vec2 q = in[(j + 1) % in.size()];
            const double sp = side(p);
            const double sq = side(q);
            if (sp >= 0.0) out.push_back(p);
            if ((sp >= 0.0) != (sq >= 0.0)) {
                out.push_back(p + (q - p) * (sp / (sp - sq)));
            }
        }
    }
    return out;
}

double area(const Poly& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s += cross2(p[i], p[(i + 1) % p.size()]);
    }
    return 0.5 * std::abs(s);
}

} // namespace

double analytic_occlusion(const Vec3& camera_center, const Cuboid& target, std::span<const Cuboid> occluders) {
    if (target.contains(camera_center)) {
        fail(ErrorCode::CameraInsideTarget, "camera center lies inside the target cuboid");
    }
    const Vec3 c = target.to_local(camera_center);
    const Vec3& h = target.half_extents;
    double weighted = 0.0;
    double total = 0.0;
    static constexpr int kEdges[12][2] = {{0, 1}, {2, 3}, {4, 5}, {6, 7}, {0, 2}, {1, 3},
                                          {4, 6}, {5, 7}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};
    for (int axis = 0; axis < 3; ++axis) {
        for (double sign : {-1.0, 1.0}) {
            if (sign * c[axis] <= h[axis]) continue;
            const int a1 = (axis + 1) % 3;
            const int a2 = (axis + 2) % 3;
            Vec3 fc = Vec3::Zero();
            fc[axis] = sign * h[axis];
            const Vec3 to_cam = c - fc;
            const double weight =
                4.0 * h[a1] * h[a2] * (sign * to_cam[axis] / to_cam.norm()) / to_cam.squaredNorm();
            total += weight;

            const double plane = sign * h[axis];
            const double gc = sign * (c[axis] - plane); // > 0
            auto g = [&](const Vec3& p) { return sign * (p[axis] - plane); };
            auto to_face = [&](const Vec3& p) {
                const double lambda = gc / (gc - g(p));
                const Vec3 x = c + lambda * (p - c);
                return Vec2(x[a1], x[a2]);
            };
            const Poly face = {{-h[a1], -h[a2]}, {h[a1], -h[a2]}, {h[a1], h[a2]}, {-h[a1], h[a2]}};
            std::vector<Poly> shadows;
            for (const Cuboid& occ : occluders) {
                std::array<Vec3, 8> corners;
                const auto world = occ.corners();
                for (std::size_t i = 0; i < 8; ++i) corners[i] = target.to_local(world[i]);
                // Clip to the slab between the face plane and a plane just
                // short of the camera; parts beyond it shadow nothing finite.
                const double upper = gc * (1.0 - 1e-9);
                Poly pts;
                for (const auto& p : corners) {
                    const double gp = g(p);
                    if (gp > 0.0 && gp <= upper) pts.push_back(to_face(p));
                }
                for (const auto& e : kEdges) {
                    const Vec3& p0 = corners[static_cast<std::size_t>(e[0])];
                    const Vec3& p1 = corners[static_cast<std::size_t>(e[1])];
                    const double g0 = g(p0);
                    const double g1 = g(p1);
                    for (const double level : {0.0, upper}) {
                        if ((g0 > level) != (g1 > level)) {
                            pts.push_back(to_face(p0 + (p1 - p0) * ((g0 - level) / (g0 - g1))));
                        }
                    }
                }
                Poly hull = convex_hull(pts);
                if (!hull.empty()) shadows.push_back(clip(hull, face));
            }
            // Union area by inclusion-exclusion over intersections.
            double covered = 0.0;
            const std::size_t n = shadows.size();
            if (n > 16) {
                throw std::invalid_argument("analytic_occlusion: too many occluders");
            }
            for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
                Poly inter;
                bool first = true;
                int bits = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (!(mask & (std::size_t{1} << i))) continue;
                    ++bits;
                    if (first) {
                        inter = shadows[i];
                        first = false;
                    } else if (!inter.empty()) {
                        inter = clip(inter, convex_hull(shadows[i]));
                    }
                }
                const double a = inter.size() >= 3 ? area(inter) : 0.0;
                covered += (bits % 2 == 1) ? a : -a;
            }
            weighted += weight * covered / (4.0 * h[a1] * h[a2]);
        }
    }
    return total > 0.0 ? std::clamp(weighted / total, 0.0, 1.0) : 0.0;
}

GaussianAsset synth_asset(std::uint64_t seed, std::size_t count, int sh_degree, double radius) {
    Rng rng(seed);
    GaussianAsset asset;
    asset.sh_degree = sh_degree;
    const int n_sh = 3 * sh_coeff_count(sh_degree);
    for (std::size_t i = 0; i < count; ++i) {
        const Vec3 p = rng.unit_vector() * radius * std::cbrt(rng.uniform());
        const Vec3 s(rng.uniform(0.02, 0.15), rng.uniform(0.02, 0.15), rng.uniform(0.02, 0.15));
        std::vector<float> sh(static_cast<std::size_t>(n_sh));
        for (int k = 0; k < n_sh; ++k) {
            sh[static_cast<std::size_t>(k)] = static_cast<float>(k < 3 ? rng.uniform(-1.5, 1.5) : rng.uniform(-0.3, 0.3));
        }
        asset.gaussians.push_back(Gaussian::from_activated(p, s, random_rotation(rng), rng.uniform(0.2, 0.95), sh));
    }
    return asset;
}

} // namespace logasset
