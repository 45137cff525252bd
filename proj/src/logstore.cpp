// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/logstore.hpp"

#include "logasset/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace logasset {

using nlohmann::json;

std::string_view to_string(ObjectClass c) noexcept {
    switch (c) {
    case ObjectClass::ConsumerVehicle: return "consumer_vehicle";
    case ObjectClass::CommercialVehicle: return "commercial_vehicle";
    case ObjectClass::VruPedestrian: return "vru_pedestrian";
    case ObjectClass::VruRider: return "vru_rider";
    case ObjectClass::Other: return "other";
    }
    return "other";
}

std::string_view to_string(CameraModel m) noexcept {
    return m == CameraModel::Pinhole ? "pinhole" : "f-theta";
}

ObjectClass parse_object_class(std::string_view label) {
    for (ObjectClass c : kObjectClasses) {
        if (to_string(c) == label) {
            return c;
        }
    }
    fail(ErrorCode::UnknownClass, "unknown class label '" + std::string(label) + "'");
}

const CameraCalibration* SensorLog::find_camera(std::string_view id) const {
    auto it = std::find_if(cameras.begin(), cameras.end(), [&](const auto& c) { return c.camera_id == id; });
    return it == cameras.end() ? nullptr : &*it;
}

const CameraCalibration& SensorLog::camera(std::string_view id) const {
    const auto* cam = find_camera(id);
    if (cam == nullptr) {
        fail(ErrorCode::UnknownCameraId, std::string(id));
    }
    return *cam;
}

void SensorLog::reindex() {
    frame_index_.clear();
    for (const auto& cam : cameras) {
        frame_index_[cam.camera_id];
    }
    for (std::size_t i = 0; i < frames.size(); ++i) {
        frame_index_[frames[i].camera_id].push_back(i);
    }
    for (auto& [id, idx] : frame_index_) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return frames[a].timestamp < frames[b].timestamp; });
    }
}

const std::vector<std::size_t>& SensorLog::frames_of(std::string_view camera_id) const {
    auto it = frame_index_.find(camera_id);
    if (it == frame_index_.end()) {
        fail(ErrorCode::UnknownCameraId, std::string(camera_id));
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json quat_json(const Quat& q) { return json::array({q.w(), q.x(), q.y(), q.z()}); }
json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json pose_json(const RigidTransform& p) {
    return {{"rotation", quat_json(p.rotation)}, {"translation", vec_json(p.translation)}};
}

} // namespace

json serialize_log(const SensorLog& log) {
    json doc;
    doc["schema"] = kManifestSchema;
    doc["session_id"] = log.session_id;
    json cams = json::array();
    for (const auto& c : log.cameras) {
        json jc = {{"camera_id", c.camera_id},
                   {"model", to_string(c.model)},
                   {"intrinsics", c.intrinsics},
                   {"extrinsics", pose_json(c.extrinsics)},
                   {"width", c.width},
                   {"height", c.height}};
        if (c.theta_max) {
            jc["theta_max"] = *c.theta_max;
        }
        cams.push_back(std::move(jc));
    }
    doc["cameras"] = std::move(cams);
    json frames = json::array();
    for (const auto& f : log.frames) {
        json jf = {{"camera_id", f.camera_id}, {"timestamp", f.timestamp}, {"image", f.image},
                   {"ego_pose", pose_json(f.ego_pose)}};
        if (!f.masks.empty()) {
            jf["masks"] = f.masks;
        }
        frames.push_back(std::move(jf));
    }
    doc["frames"] = std::move(frames);
    json tracks = json::array();
    for (const auto& t : log.tracks) {
        json states = json::array();
        for (const auto& s : t.states) {
            states.push_back({{"timestamp", s.timestamp},
                              {"center", vec_json(s.center)},
                              {"half_extents", vec_json(s.half_extents)},
                              {"rotation", quat_json(s.rotation)}});
        }
        tracks.push_back({{"object_id", t.object_id}, {"class_label", to_string(t.class_label)}, {"states", states}});
    }
    doc["tracks"] = std::move(tracks);
    return doc;
}

void write_manifest(const SensorLog& log, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "manifest.json");
    if (!out) {
        fail(ErrorCode::IoError, "cannot write " + (dir / "manifest.json").string());
    }
    out << serialize_log(log).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    fail(ErrorCode::SchemaViolation, where + ": " + what);
}

const json& field(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object()) {
        schema_error(where, "expected object");
    }
    auto it = obj.find(key);
    if (it == obj.end()) {
        schema_error(where + "." + key, "missing");
    }
    return *it;
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) {
        schema_error(where, "expected number");
    }
    return j.get<double>();
}

std::string string_field(const json& obj, const char* key, const std::string& where) {
    const json& j = field(obj, key, where);
    if (!j.is_string()) {
        schema_error(where + "." + key, "expected string");
    }
    return j.get<std::string>();
}

std::vector<double> numbers(const json& j, const std::string& where, std::size_t expected = 0) {
    if (!j.is_array()) {
        schema_error(where, "expected array");
    }
    if (expected != 0 && j.size() != expected) {
        schema_error(where, "expected " + std::to_string(expected) + " numbers");
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(number(j[i], where + "[" + std::to_string(i) + "]"));
    }
    return out;
}

Vec3 vec3_field(const json& obj, const char* key, const std::string& where) {
    const auto v = numbers(field(obj, key, where), where + "." + key, 3);
    return {v[0], v[1], v[2]};
}

Quat quat_field(const json& obj, const char* key, const std::string& where) {
    const auto v = numbers(field(obj, key, where), where + "." + key, 4);
    Quat q(v[0], v[1], v[2], v[3]);
    if (std::abs(q.norm() - 1.0) > 1e-9) {
        schema_error(where + "." + key, "quaternion is not unit-norm");
    }
    return q;
}

RigidTransform pose_field(const json& obj, const char* key, const std::string& where) {
    const json& j = field(obj, key, where);
    const std::string w = where + "." + key;
    return {quat_field(j, "rotation", w), vec3_field(j, "translation", w)};
}

int positive_int(const json& obj, const char* key, const std::string& where) {
    const json& j = field(obj, key, where);
    if (!j.is_number_integer() || j.get<long long>() <= 0) {
        schema_error(where + "." + key, "expected positive integer");
    }
    return j.get<int>();
}

void require_file(const std::filesystem::path& root, const std::string& rel, const std::string& where) {
    const auto p = root / rel;
    if (!std::filesystem::is_regular_file(p)) {
        fail(ErrorCode::MissingFile, where + ": " + p.string());
    }
}

CameraCalibration parse_camera(const json& jc, const std::string& where) {
    CameraCalibration c;
    c.camera_id = string_field(jc, "camera_id", where);
    const std::string model = string_field(jc, "model", where);
    if (model == "pinhole") {
        c.model = CameraModel::Pinhole;
    } else if (model == "f-theta") {
        c.model = CameraModel::FTheta;
    } else {
        schema_error(where + ".model", "expected 'pinhole' or 'f-theta'");
    }
    c.intrinsics = numbers(field(jc, "intrinsics", where), where + ".intrinsics");
    if (c.model == CameraModel::Pinhole) {
        if (c.intrinsics.size() != 4 || c.intrinsics[0] <= 0.0 || c.intrinsics[1] <= 0.0) {
            schema_error(where + ".intrinsics", "pinhole expects [fx, fy, cx, cy] with fx, fy > 0");
        }
    } else if (c.intrinsics.size() < 3 || c.intrinsics[2] <= 0.0) {
        schema_error(where + ".intrinsics", "f-theta expects [cx, cy, k1, ...] with k1 > 0");
    }
    c.extrinsics = pose_field(jc, "extrinsics", where);
    c.width = positive_int(jc, "width", where);
    c.height = positive_int(jc, "height", where);
    if (auto it = jc.find("theta_max"); it != jc.end()) {
        const double tm = number(*it, where + ".theta_max");
        if (tm <= 0.0) {
            schema_error(where + ".theta_max", "must be positive");
        }
        c.theta_max = tm;
    }
    return c;
}

} // namespace

SensorLog parse_log_json(const json& doc, const std::filesystem::path& root, bool check_files) {
    const std::string top = "manifest";
    const json& schema = field(doc, "schema", top);
    if (!schema.is_number_integer() || schema.get<int>() != kManifestSchema) {
        schema_error("manifest.schema", "expected 1");
    }
    SensorLog log;
    log.root = root;
    log.session_id = string_field(doc, "session_id", top);

    const json& cams = field(doc, "cameras", top);
    if (!cams.is_array()) {
        schema_error("manifest.cameras", "expected array");
    }
    std::set<std::string> camera_ids;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        auto cam = parse_camera(cams[i], "cameras[" + std::to_string(i) + "]");
        if (!camera_ids.insert(cam.camera_id).second) {
            schema_error("cameras[" + std::to_string(i) + "].camera_id", "duplicate id " + cam.camera_id);
        }
        log.cameras.push_back(std::move(cam));
    }

    const json& frames = field(doc, "frames", top);
    if (!frames.is_array()) {
        schema_error("manifest.frames", "expected array");
    }
    std::map<std::string, double> last_time;
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const std::string where = "frames[" + std::to_string(i) + "]";
        const json& jf = frames[i];
        FrameRecord f;
        f.camera_id = string_field(jf, "camera_id", where);
        if (camera_ids.count(f.camera_id) == 0) {
            fail(ErrorCode::UnknownCameraId, where + ".camera_id: " + f.camera_id);
        }
        f.timestamp = number(field(jf, "timestamp", where), where + ".timestamp");
        f.image = string_field(jf, "image", where);
        if (jf.contains("ego_pose")) {
            f.ego_pose = pose_field(jf, "ego_pose", where);
        }
        if (auto it = jf.find("masks"); it != jf.end()) {
            if (!it->is_object()) {
                schema_error(where + ".masks", "expected object");
            }
            for (const auto& [obj, path] : it->items()) {
                if (!path.is_string()) {
                    schema_error(where + ".masks." + obj, "expected string");
                }
                f.masks[obj] = path.get<std::string>();
            }
        }
        if (auto it = last_time.find(f.camera_id); it != last_time.end() && f.timestamp <= it->second) {
            fail(ErrorCode::TimestampOrderViolation,
                 where + ": timestamp not strictly increasing for camera " + f.camera_id);
        }
        last_time[f.camera_id] = f.timestamp;
        if (check_files) {
            require_file(root, f.image, where + ".image");
            for (const auto& [obj, path] : f.masks) {
                require_file(root, path, where + ".masks." + obj);
            }
        }
        log.frames.push_back(std::move(f));
    }

    const json& tracks = field(doc, "tracks", top);
    if (!tracks.is_array()) {
        schema_error("manifest.tracks", "expected array");
    }
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        const std::string where = "tracks[" + std::to_string(i) + "]";
        const json& jt = tracks[i];
        CuboidTrack t;
        t.object_id = string_field(jt, "object_id", where);
        const std::string label = string_field(jt, "class_label", where);
        try {
            t.class_label = parse_object_class(label);
        } catch (const Error&) {
            schema_error(where + ".class_label", "unknown class '" + label + "'");
        }
        const json& states = field(jt, "states", where);
        if (!states.is_array() || states.empty()) {
            schema_error(where + ".states", "expected non-empty array");
        }
        for (std::size_t k = 0; k < states.size(); ++k) {
            const std::string ws = where + ".states[" + std::to_string(k) + "]";
            CuboidState s;
            s.timestamp = number(field(states[k], "timestamp", ws), ws + ".timestamp");
            s.center = vec3_field(states[k], "center", ws);
            s.half_extents = vec3_field(states[k], "half_extents", ws);
            if ((s.half_extents.array() <= 0.0).any()) {
                schema_error(ws + ".half_extents", "all components must be positive");
            }
            s.rotation = quat_field(states[k], "rotation", ws);
            if (!t.states.empty() && s.timestamp <= t.states.back().timestamp) {
                fail(ErrorCode::TimestampOrderViolation, ws + ": state timestamps not strictly increasing");
            }
            t.states.push_back(s);
        }
        log.tracks.push_back(std::move(t));
    }
    log.reindex();
    return log;
}

SensorLog parse_log(const std::filesystem::path& manifest_path) {
    if (!std::filesystem::is_regular_file(manifest_path)) {
        fail(ErrorCode::MissingFile, manifest_path.string());
    }
    std::ifstream in(manifest_path);
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        fail(ErrorCode::SchemaViolation, "manifest: " + std::string(e.what()));
    }
    return parse_log_json(doc, manifest_path.parent_path(), true);
}

// ---------------------------------------------------------------------------
// Queries

InterpolatedState interpolate_cuboid(const CuboidTrack& track, double t) {
    const auto& states = track.states;
    if (states.empty()) {
        fail(ErrorCode::EmptyTrack, track.object_id);
    }
    if (t <= states.front().timestamp) {
        return {states.front(), t < states.front().timestamp};
    }
    if (t >= states.back().timestamp) {
        return {states.back(), t > states.back().timestamp};
    }
    const auto hi = std::upper_bound(states.begin(), states.end(), t,
                                     [](double v, const CuboidState& s) { return v < s.timestamp; });
    const auto& b = *hi;
    const auto& a = *(hi - 1);
    if (a.timestamp == t) {
        return {a, false};
    }
    const double alpha = (t - a.timestamp) / (b.timestamp - a.timestamp);
    CuboidState out;
    out.timestamp = t;
    out.center = (1.0 - alpha) * a.center + alpha * b.center;
    out.half_extents = (1.0 - alpha) * a.half_extents + alpha * b.half_extents;
    // Eigen's slerp takes the shorter arc.
    out.rotation = a.rotation.slerp(alpha, b.rotation).normalized();
    return {out, false};
}

std::vector<FrameRecord> frames_near(const SensorLog& log, std::string_view camera_id, double t, double window) {
    const auto& idx = log.frames_of(camera_id);
    auto lo = std::lower_bound(idx.begin(), idx.end(), t - window,
                               [&](std::size_t i, double v) { return log.frames[i].timestamp < v; });
    std::vector<std::size_t> hits;
    for (auto it = lo; it != idx.end() && log.frames[*it].timestamp <= t + window; ++it) {
        if (std::abs(log.frames[*it].timestamp - t) <= window) {
            hits.push_back(*it);
        }
    }
    std::stable_sort(hits.begin(), hits.end(), [&](std::size_t a, std::size_t b) {
        const double da = std::abs(log.frames[a].timestamp - t);
        const double db = std::abs(log.frames[b].timestamp - t);
        if (da != db) {
            return da < db;
        }
        return log.frames[a].timestamp < log.frames[b].timestamp;
    });
    std::vector<FrameRecord> out;
    out.reserve(hits.size());
    for (std::size_t i : hits) {
        out.push_back(log.frames[i]);
    }
    return out;
}

} // namespace logasset
