// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/image.hpp"
#include "logasset/logstore.hpp"
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

// Patch features laid out [channel][row][col].
struct FeatureMap {
    int channels = 0;
    int grid_h = 0;
    int grid_w = 0;
    int patch_size = 1;
    std::vector<float> values;

    [[nodiscard]] float at(int c, int i, int j) const {
        return values[(static_cast<std::size_t>(c) * grid_h + i) * grid_w + j];
    }
    float& at(int c, int i, int j) { return values[(static_cast<std::size_t>(c) * grid_h + i) * grid_w + j]; }
};

// Feature file: ASCII header "FEAT 1", "channels <C>", "grid <H> <W>",
// "patch <P>", "end_header", then C*H*W little-endian float32 values.
FeatureMap load_feature_map(const std::filesystem::path& path);
void save_feature_map(const std::filesystem::path& path, const FeatureMap& features);

// Test feature extractor: the mean color of each patch_size x patch_size
// cell. Partial cells at the right and bottom edges are dropped.
FeatureMap color_features(const Image& image, int patch_size);

struct AlignmentTransform {
    Vec2 translation = Vec2::Zero(); // gt centroid - render centroid, pixels
    double scale = 1.0;              // applied about the gt centroid
    Vec2 pivot = Vec2::Zero();       // gt centroid
};

struct AlignedRender {
    Image rgb;
    Mask mask;
    AlignmentTransform transform;
};

// Centroid of the foreground pixel centers.
Vec2 mask_centroid(const Mask& mask);

// Moves the render so the mask centroids coincide, then scales it by
// sqrt(A_gt / A_r) about that point. Output has the gt mask's size. RGB is
// resampled bilinearly (0 outside the source); the mask keeps pixels whose
// bilinear coverage is at least 0.5. Throws EmptyRenderMask / EmptyGtMask.
AlignedRender align_to_gt(const Image& render_rgb, const Mask& render_mask, const Mask& gt_mask);

// Patch-grid foreground: a cell is foreground when at least half of its
// pixels are set. Row-major, grid_h x grid_w.
std::vector<std::uint8_t> patch_foreground(const Mask& mask, int grid_h, int grid_w, int patch_size);

// Mean feature vector over foreground patches. Throws NoForegroundPatches.
Eigen::VectorXd pooled_embedding(const FeatureMap& features, const Mask& mask);

// 1 - cos(a, b). Throws ZeroEmbedding when either vector is zero.
double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

double ed_r(const FeatureMap& feat_r, const Mask& mask_r, const FeatureMap& feat_gt, const Mask& mask_gt);

enum class BodyPart { Head, Torso, LeftArm, RightArm, LeftLeg, RightLeg };
inline constexpr std::array<BodyPart, 6> kBodyParts = {BodyPart::Head,    BodyPart::Torso,   BodyPart::LeftArm,
                                                       BodyPart::RightArm, BodyPart::LeftLeg, BodyPart::RightLeg};
std::string_view to_string(BodyPart part) noexcept;

struct Keypoint {
    Vec2 position = Vec2::Zero();
    double confidence = 1.0;
};

// Names: head, neck, pelvis, {left,right}_{shoulder,elbow,wrist,hip,knee,ankle}.
using Keypoints = std::map<std::string, Keypoint>;

// JSON file {"keypoints": {"<name>": [x, y, confidence], ...}}.
Keypoints load_keypoints(const std::filesystem::path& path);

inline constexpr std::int8_t kBackgroundLabel = -1;

struct PartLabelMap {
    int width = 0;
    int height = 0;
    std::vector<std::int8_t> labels; // BodyPart index, or kBackgroundLabel

    [[nodiscard]] std::int8_t at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    [[nodiscard]] Mask part_mask(BodyPart part) const;
    // Parts with at least one labeled pixel, in kBodyParts order.
    [[nodiscard]] std::vector<BodyPart> visible_parts() const;
};

// Labels each foreground pixel with the part owning its nearest skeleton
// segment. Keypoints below `min_confidence` count as missing, and so do the
// segments that use them. Ties go to the earlier part in kBodyParts order.
// Throws InsufficientKeypoints when neck or pelvis is missing.
PartLabelMap partition_parts(const Mask& mask, const Keypoints& keypoints, double min_confidence = 0.0);

// Mean over parts with foreground patches in both maps of the per-part
// cosine distance. Throws NoCommonParts.
double ed_p(const FeatureMap& feat_r, const PartLabelMap& parts_r, const FeatureMap& feat_gt,
            const PartLabelMap& parts_gt);

enum class BenchSplit { A, B };

struct BenchCounts {
    std::array<std::array<std::size_t, 5>, 2> cells{}; // [split][ObjectClass]

    [[nodiscard]] std::size_t at(BenchSplit split, ObjectClass cls) const {
        return cells[static_cast<std::size_t>(split)][static_cast<std::size_t>(cls)];
    }
    [[nodiscard]] std::size_t split_total(BenchSplit split) const;
    [[nodiscard]] std::size_t class_total(ObjectClass cls) const;
    [[nodiscard]] std::size_t total() const;
};

// Manifest: {"schema": 1, "instances": [{"instance_id", "class_label",
// "split": "A" | "B"}]}. Throws UnknownClass or SchemaViolation.
BenchCounts benchmark_manifest_check(const nlohmann::json& manifest);
BenchCounts benchmark_manifest_check(const std::filesystem::path& path);
std::string format_bench_table(const BenchCounts& counts);
nlohmann::json bench_counts_json(const BenchCounts& counts);

} // namespace logasset
