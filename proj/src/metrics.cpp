// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/metrics.hpp"

#include "logasset/error.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace logasset {

namespace {

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return __builtin_bswap32(v);
    }
    return v;
}

} // namespace

FeatureMap load_feature_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    std::string magic, line, key, end;
    FeatureMap f;
    std::getline(in, magic);
    std::getline(in, line);
    std::istringstream(line) >> key >> f.channels;
    bool ok = key == "channels";
    std::getline(in, line);
    std::istringstream(line) >> key >> f.grid_h >> f.grid_w;
    ok = ok && key == "grid";
    std::getline(in, line);
    std::istringstream(line) >> key >> f.patch_size;
    ok = ok && key == "patch";
    std::getline(in, end);
    if (!in || !ok || magic != "FEAT 1" || end != "end_header" || f.channels < 1 || f.grid_h < 1 || f.grid_w < 1 ||
        f.patch_size < 1) {
        fail(ErrorCode::CorruptHeader, "bad feature header in " + path.string());
    }
    const std::size_t n = static_cast<std::size_t>(f.channels) * f.grid_h * f.grid_w;
    std::vector<std::uint32_t> words(n);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n * 4));
    if (static_cast<std::size_t>(in.gcount()) != n * 4) {
        fail(ErrorCode::TruncatedPayload, "feature payload too short in " + path.string());
    }
    f.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        f.values[i] = std::bit_cast<float>(to_little(words[i]));
    }
    return f;
}

void save_feature_map(const std::filesystem::path& path, const FeatureMap& f) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot open " + path.string());
    }
    out << "FEAT 1\nchannels " << f.channels << "\ngrid " << f.grid_h << ' ' << f.grid_w << "\npatch "
        << f.patch_size << "\nend_header\n";
    for (float v : f.values) {
        const std::uint32_t w = to_little(std::bit_cast<std::uint32_t>(v));
        out.write(reinterpret_cast<const char*>(&w), 4);
    }
}

FeatureMap color_features(const Image& image, int patch_size) {
    if (patch_size < 1 || image.width() < patch_size || image.height() < patch_size) {
        fail(ErrorCode::ShapeMismatch, "image smaller than one patch");
    }
    FeatureMap f;
    f.channels = image.channels();
    f.grid_h = image.height() / patch_size;
    f.grid_w = image.width() / patch_size;
    f.patch_size = patch_size;
    f.values.assign(static_cast<std::size_t>(f.channels) * f.grid_h * f.grid_w, 0.0f);
    const double inv = 1.0 / (patch_size * patch_size);
    for (int i = 0; i < f.grid_h; ++i) {
        for (int j = 0; j < f.grid_w; ++j) {
            for (int c = 0; c < f.channels; ++c) {
                double s = 0.0;
                for (int y = i * patch_size; y < (i + 1) * patch_size; ++y) {
                    for (int x = j * patch_size; x < (j + 1) * patch_size; ++x) {
                        s += image.at(x, y, c);
                    }
                }
                f.at(c, i, j) = static_cast<float>(s * inv);
            }
        }
    }
    return f;
}

Vec2 mask_centroid(const Mask& mask) {
    Vec2 sum = Vec2::Zero();
    std::size_t n = 0;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.at(x, y) != 0) {
                sum += Vec2(x + 0.5, y + 0.5);
                ++n;
            }
        }
    }
    return n == 0 ? Vec2(Vec2::Zero()) : Vec2(sum / static_cast<double>(n));
}

namespace {

// Bilinear foreground coverage at continuous pixel coordinates, zero outside.
double mask_coverage(const Mask& m, const Vec2& p) {
    const double fx = p.x() - 0.5;
    const double fy = p.y() - 0.5;
    const int x0 = static_cast<int>(std::floor(fx));
    const int y0 = static_cast<int>(std::floor(fy));
    const double tx = fx - x0;
    const double ty = fy - y0;
    auto at = [&](int x, int y) -> double {
        if (x < 0 || y < 0 || x >= m.width() || y >= m.height()) return 0.0;
        return m.at(x, y) != 0 ? 1.0 : 0.0;
    };
    return (1 - ty) * ((1 - tx) * at(x0, y0) + tx * at(x0 + 1, y0)) +
           ty * ((1 - tx) * at(x0, y0 + 1) + tx * at(x0 + 1, y0 + 1));
}

} // namespace

AlignedRender align_to_gt(const Image& render_rgb, const Mask& render_mask, const Mask& gt_mask) {
    const std::size_t a_r = render_mask.count();
    const std::size_t a_gt = gt_mask.count();
    if (a_r == 0) {
        fail(ErrorCode::EmptyRenderMask, "rendered mask has no foreground");
    }
    if (a_gt == 0) {
        fail(ErrorCode::EmptyGtMask, "reference mask has no foreground");
    }
    if (render_rgb.width() != render_mask.width() || render_rgb.height() != render_mask.height()) {
        fail(ErrorCode::ShapeMismatch, "render image and mask sizes differ");
    }
    const Vec2 c_r = mask_centroid(render_mask);
    const Vec2 c_gt = mask_centroid(gt_mask);
    AlignedRender out;
    out.transform.translation = c_gt - c_r;
    out.transform.scale = std::sqrt(static_cast<double>(a_gt) / static_cast<double>(a_r));
    out.transform.pivot = c_gt;
    const int w = gt_mask.width();
    const int h = gt_mask.height();
    const int channels = render_rgb.channels();
    out.rgb = Image(w, h, channels, 0.0f);
    out.mask = Mask(w, h, 0);
    const double inv_s = 1.0 / out.transform.scale;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 q(x + 0.5, y + 0.5);
            const Vec2 p = c_r + (q - c_gt) * inv_s;
            if (p.x() < 0.0 || p.y() < 0.0 || p.x() >= render_rgb.width() || p.y() >= render_rgb.height()) {
                continue;
            }
            for (int c = 0; c < channels; ++c) {
                out.rgb.at(x, y, c) = render_rgb.sample(p.x(), p.y(), c);
            }
            out.mask.at(x, y) = mask_coverage(render_mask, p) >= 0.5 ? 1 : 0;
        }
    }
    return out;
}

std::vector<std::uint8_t> patch_foreground(const Mask& mask, int grid_h, int grid_w, int patch_size) {
    if (grid_h * patch_size > mask.height() || grid_w * patch_size > mask.width()) {
        fail(ErrorCode::ShapeMismatch, "patch grid " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                                           " at patch " + std::to_string(patch_size) + " exceeds mask " +
                                           std::to_string(mask.width()) + "x" + std::to_string(mask.height()));
    }
    std::vector<std::uint8_t> fg(static_cast<std::size_t>(grid_h) * grid_w, 0);
    const int area = patch_size * patch_size;
    for (int i = 0; i < grid_h; ++i) {
        for (int j = 0; j < grid_w; ++j) {
            int n = 0;
            for (int y = i * patch_size; y < (i + 1) * patch_size; ++y) {
                for (int x = j * patch_size; x < (j + 1) * patch_size; ++x) {
                    n += mask.at(x, y) != 0 ? 1 : 0;
                }
            }
            fg[static_cast<std::size_t>(i) * grid_w + j] = 2 * n >= area ? 1 : 0;
        }
    }
    return fg;
}

Eigen::VectorXd pooled_embedding(const FeatureMap& features, const Mask& mask) {
    const auto fg = patch_foreground(mask, features.grid_h, features.grid_w, features.patch_size);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(features.channels);
    std::size_t n = 0;
    for (int i = 0; i < features.grid_h; ++i) {
        for (int j = 0; j < features.grid_w; ++j) {
            if (fg[static_cast<std::size_t>(i) * features.grid_w + j] == 0) continue;
            for (int c = 0; c < features.channels; ++c) {
                e[c] += features.at(c, i, j);
            }
            ++n;
        }
    }
    if (n == 0) {
        fail(ErrorCode::NoForegroundPatches, "mask covers no patch by half");
    }
    return e / static_cast<double>(n);
}

double cosine_distance(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) {
        fail(ErrorCode::DimMismatch, "embedding sizes differ");
    }
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) {
        fail(ErrorCode::ZeroEmbedding, "cosine distance of a zero embedding");
    }
    return 0.5 * (a / na - b / nb).squaredNorm();
}

double ed_r(const FeatureMap& feat_r, const Mask& mask_r, const FeatureMap& feat_gt, const Mask& mask_gt) {
    return cosine_distance(pooled_embedding(feat_r, mask_r), pooled_embedding(feat_gt, mask_gt));
}

std::string_view to_string(BodyPart part) noexcept {
    switch (part) {
    case BodyPart::Head: return "head";
    case BodyPart::Torso: return "torso";
    case BodyPart::LeftArm: return "left_arm";
    case BodyPart::RightArm: return "right_arm";
    case BodyPart::LeftLeg: return "left_leg";
    case BodyPart::RightLeg: return "right_leg";
    }
    return "unknown";
}

Keypoints load_keypoints(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("keypoints") || !doc["keypoints"].is_object()) {
        fail(ErrorCode::SchemaViolation, path.string() + ": keypoints: expected object");
    }
    Keypoints kp;
    for (const auto& [name, value] : doc["keypoints"].items()) {
        if (!value.is_array() || value.size() < 2 || value.size() > 3 ||
            !std::all_of(value.begin(), value.end(), [](const nlohmann::json& v) { return v.is_number(); })) {
            fail(ErrorCode::SchemaViolation, path.string() + ": keypoints." + name + ": expected [x, y, confidence]");
        }
        Keypoint k;
        k.position = {value[0].get<double>(), value[1].get<double>()};
        k.confidence = value.size() == 3 ? value[2].get<double>() : 1.0;
        kp[name] = k;
    }
    return kp;
}

Mask PartLabelMap::part_mask(BodyPart part) const {
    Mask m(width, height, 0);
    const auto label = static_cast<std::int8_t>(part);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        m.data()[i] = labels[i] == label ? 1 : 0;
    }
    return m;
}

std::vector<BodyPart> PartLabelMap::visible_parts() const {
    std::array<bool, 6> seen{};
    for (const auto l : labels) {
        if (l >= 0) seen[static_cast<std::size_t>(l)] = true;
    }
    std::vector<BodyPart> out;
    for (const auto p : kBodyParts) {
        if (seen[static_cast<std::size_t>(p)]) out.push_back(p);
    }
    return out;
}

namespace {

struct SegmentDef {
    BodyPart part;
    const char* a;
    const char* b;
};

// Listed in part order so that the first minimum wins ties.
constexpr SegmentDef kSkeleton[] = {
    {BodyPart::Head, "head", "neck"},
    {BodyPart::Torso, "neck", "pelvis"},
    {BodyPart::Torso, "neck", "left_shoulder"},
    {BodyPart::Torso, "neck", "right_shoulder"},
    {BodyPart::Torso, "pelvis", "left_hip"},
    {BodyPart::Torso, "pelvis", "right_hip"},
    {BodyPart::Torso, "left_shoulder", "left_hip"},
    {BodyPart::Torso, "right_shoulder", "right_hip"},
    {BodyPart::LeftArm, "left_shoulder", "left_elbow"},
    {BodyPart::LeftArm, "left_elbow", "left_wrist"},
    {BodyPart::RightArm, "right_shoulder", "right_elbow"},
    {BodyPart::RightArm, "right_elbow", "right_wrist"},
    {BodyPart::LeftLeg, "left_hip", "left_knee"},
    {BodyPart::LeftLeg, "left_knee", "left_ankle"},
    {BodyPart::RightLeg, "right_hip", "right_knee"},
    {BodyPart::RightLeg, "right_knee", "right_ankle"},
};

double segment_dist2(const Vec2& p, const Vec2& a, const Vec2& b) {
    const Vec2 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * ab)).squaredNorm();
}

} // namespace

PartLabelMap partition_parts(const Mask& mask, const Keypoints& keypoints, double min_confidence) {
    auto find = [&](const char* name) -> const Keypoint* {
        const auto it = keypoints.find(name);
        if (it == keypoints.end() || it->second.confidence < min_confidence) return nullptr;
        return &it->second;
    };
    if (find("neck") == nullptr || find("pelvis") == nullptr) {
        fail(ErrorCode::InsufficientKeypoints, "neck and pelvis keypoints are required");
    }
    struct Segment {
        BodyPart part;
        Vec2 a;
        Vec2 b;
    };
    std::vector<Segment> segments;
    for (const auto& def : kSkeleton) {
        const Keypoint* a = find(def.a);
        const Keypoint* b = find(def.b);
        if (a != nullptr && b != nullptr) {
            segments.push_back({def.part, a->position, b->position});
        }
    }
    PartLabelMap map;
    map.width = mask.width();
    map.height = mask.height();
    map.labels.assign(static_cast<std::size_t>(map.width) * map.height, kBackgroundLabel);
    for (int y = 0; y < map.height; ++y) {
        for (int x = 0; x < map.width; ++x) {
            if (mask.at(x, y) == 0) continue;
            const Vec2 p(x + 0.5, y + 0.5);
            double best = std::numeric_limits<double>::infinity();
            BodyPart best_part = BodyPart::Torso;
            for (const auto& s : segments) {
                const double d = segment_dist2(p, s.a, s.b);
                if (d < best) {
                    best = d;
                    best_part = s.part;
                }
            }
            map.labels[static_cast<std::size_t>(y) * map.width + x] = static_cast<std::int8_t>(best_part);
        }
    }
    return map;
}

double ed_p(const FeatureMap& feat_r, const PartLabelMap& parts_r, const FeatureMap& feat_gt,
            const PartLabelMap& parts_gt) {
    double sum = 0.0;
    int n = 0;
    for (const auto part : kBodyParts) {
        const Mask mr = parts_r.part_mask(part);
        const Mask mg = parts_gt.part_mask(part);
        const auto fr = patch_foreground(mr, feat_r.grid_h, feat_r.grid_w, feat_r.patch_size);
        const auto fg = patch_foreground(mg, feat_gt.grid_h, feat_gt.grid_w, feat_gt.patch_size);
        const bool in_r = std::any_of(fr.begin(), fr.end(), [](std::uint8_t v) { return v != 0; });
        const bool in_gt = std::any_of(fg.begin(), fg.end(), [](std::uint8_t v) { return v != 0; });
        if (!in_r || !in_gt) continue;
        sum += cosine_distance(pooled_embedding(feat_r, mr), pooled_embedding(feat_gt, mg));
        ++n;
    }
    if (n == 0) {
        fail(ErrorCode::NoCommonParts, "no body part is visible in both masks");
    }
    return sum / n;
}

std::size_t BenchCounts::split_total(BenchSplit split) const {
    std::size_t s = 0;
    for (const auto v : cells[static_cast<std::size_t>(split)]) s += v;
    return s;
}

std::size_t BenchCounts::class_total(ObjectClass cls) const {
    return at(BenchSplit::A, cls) + at(BenchSplit::B, cls);
}

std::size_t BenchCounts::total() const { return split_total(BenchSplit::A) + split_total(BenchSplit::B); }

BenchCounts benchmark_manifest_check(const nlohmann::json& manifest) {
    if (!manifest.is_object()) {
        fail(ErrorCode::SchemaViolation, "benchmark manifest: expected object");
    }
    if (!manifest.contains("schema") || manifest["schema"] != 1) {
        fail(ErrorCode::SchemaViolation, "schema: expected 1");
    }
    if (!manifest.contains("instances") || !manifest["instances"].is_array()) {
        fail(ErrorCode::SchemaViolation, "instances: expected array");
    }
    BenchCounts counts;
    const auto& instances = manifest["instances"];
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const auto& inst = instances[i];
        const std::string where = "instances[" + std::to_string(i) + "]";
        if (!inst.is_object()) {
            fail(ErrorCode::SchemaViolation, where + ": expected object");
        }
        for (const char* key : {"instance_id", "class_label", "split"}) {
            if (!inst.contains(key) || !inst[key].is_string()) {
                fail(ErrorCode::SchemaViolation, where + "." + key + ": expected string");
            }
        }
        const ObjectClass cls = parse_object_class(inst["class_label"].get<std::string>());
        const std::string split = inst["split"].get<std::string>();
        if (split != "A" && split != "B") {
            fail(ErrorCode::SchemaViolation, where + ".split: expected \"A\" or \"B\"");
        }
        ++counts.cells[split == "A" ? 0 : 1][static_cast<std::size_t>(cls)];
    }
    return counts;
}

BenchCounts benchmark_manifest_check(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::SchemaViolation, path.string() + ": " + e.what());
    }
    return benchmark_manifest_check(doc);
}

std::string format_bench_table(const BenchCounts& counts) {
    std::ostringstream os;
    os << std::left << std::setw(20) << "class" << std::right << std::setw(8) << "part_a" << std::setw(8) << "part_b"
       << std::setw(8) << "total" << '\n';
    for (const auto cls : kObjectClasses) {
        os << std::left << std::setw(20) << to_string(cls) << std::right << std::setw(8)
           << counts.at(BenchSplit::A, cls) << std::setw(8) << counts.at(BenchSplit::B, cls) << std::setw(8)
           << counts.class_total(cls) << '\n';
    }
    os << std::left << std::setw(20) << "total" << std::right << std::setw(8) << counts.split_total(BenchSplit::A)
       << std::setw(8) << counts.split_total(BenchSplit::B) << std::setw(8) << counts.total() << '\n';
    return os.str();
}

nlohmann::json bench_counts_json(const BenchCounts& counts) {
    nlohmann::json j;
    j["schema"] = 1;
    for (const auto cls : kObjectClasses) {
        j["classes"][std::string(to_string(cls))] = {{"A", counts.at(BenchSplit::A, cls)},
                                                     {"B", counts.at(BenchSplit::B, cls)},
                                                     {"total", counts.class_total(cls)}};
    }
    j["totals"] = {{"A", counts.split_total(BenchSplit::A)},
                   {"B", counts.split_total(BenchSplit::B)},
                   {"total", counts.total()}};
    return j;
}

} // namespace logasset
