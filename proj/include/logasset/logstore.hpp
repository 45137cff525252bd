// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/math.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace logasset {

enum class CameraModel { Pinhole, FTheta };

enum class ObjectClass { ConsumerVehicle, CommercialVehicle, VruPedestrian, VruRider, Other };

inline constexpr std::array<ObjectClass, 5> kObjectClasses = {
    ObjectClass::ConsumerVehicle, ObjectClass::CommercialVehicle, ObjectClass::VruPedestrian,
    ObjectClass::VruRider, ObjectClass::Other};

std::string_view to_string(ObjectClass c) noexcept;
std::string_view to_string(CameraModel m) noexcept;
// Throws UnknownClass for labels outside the five-class taxonomy.
ObjectClass parse_object_class(std::string_view label);

// Intrinsics layout:
//   pinhole: [fx, fy, cx, cy]
//   f-theta: [cx, cy, k1, k2, ...] with r(theta) = k1 theta + k2 theta^3 + ...
struct CameraCalibration {
    std::string camera_id;
    CameraModel model = CameraModel::Pinhole;
    std::vector<double> intrinsics;
    RigidTransform extrinsics; // vehicle frame -> camera frame
    int width = 0;
    int height = 0;
    // f-theta only: maximum angle from the optical axis, radians.
    std::optional<double> theta_max;

    bool operator==(const CameraCalibration&) const = default;
};

struct FrameRecord {
    std::string camera_id;
    double timestamp = 0.0;
    std::string image; // relative to the session root
    RigidTransform ego_pose; // vehicle frame -> world frame
    std::map<std::string, std::string> masks; // object_id -> relative mask path

    bool operator==(const FrameRecord&) const = default;
};

struct CuboidState {
    double timestamp = 0.0;
    Vec3 center = Vec3::Zero();
    Vec3 half_extents = Vec3::Ones();
    Quat rotation = Quat::Identity(); // box axes -> world

    bool operator==(const CuboidState& o) const {
        return timestamp == o.timestamp && center == o.center && half_extents == o.half_extents &&
               rotation.coeffs() == o.rotation.coeffs();
    }
};

struct CuboidTrack {
    std::string object_id;
    ObjectClass class_label = ObjectClass::Other;
    std::vector<CuboidState> states;

    bool operator==(const CuboidTrack&) const = default;
};

struct SensorLog {
    std::string session_id;
    std::vector<CameraCalibration> cameras;
    std::vector<FrameRecord> frames;
    std::vector<CuboidTrack> tracks;
    std::filesystem::path root; // session directory; not part of equality

    [[nodiscard]] const CameraCalibration* find_camera(std::string_view id) const;
    [[nodiscard]] const CameraCalibration& camera(std::string_view id) const;

    // Per-camera frame indices sorted by timestamp. Must be rebuilt after the
    // frame list changes; parse_log and the synthetic generator do this.
    void reindex();
    [[nodiscard]] const std::vector<std::size_t>& frames_of(std::string_view camera_id) const;

    bool operator==(const SensorLog& o) const {
        return session_id == o.session_id && cameras == o.cameras && frames == o.frames && tracks == o.tracks;
    }

private:
    std::map<std::string, std::vector<std::size_t>, std::less<>> frame_index_;
};

inline constexpr int kManifestSchema = 1;

nlohmann::json serialize_log(const SensorLog& log);
// Writes <dir>/manifest.json (images are not touched).
void write_manifest(const SensorLog& log, const std::filesystem::path& dir);

// Parses and validates a manifest. Referenced image and mask files must exist
// relative to the manifest's directory; they are not decoded.
SensorLog parse_log(const std::filesystem::path& manifest_path);
// Same validation on an in-memory document; file checks only when
// `check_files` is set.
SensorLog parse_log_json(const nlohmann::json& doc, const std::filesystem::path& root, bool check_files);

struct InterpolatedState {
    CuboidState state;
    bool clamped = false; // query time was outside the track's span
};

// Linear center and extents, shortest-arc slerp rotation. Queries outside
// the track span clamp to the nearest end state and set `clamped`.
InterpolatedState interpolate_cuboid(const CuboidTrack& track, double t);

// Frames of `camera_id` with |timestamp - t| <= window, sorted by |dt| then
// timestamp.
std::vector<FrameRecord> frames_near(const SensorLog& log, std::string_view camera_id, double t, double window);

} // namespace logasset
