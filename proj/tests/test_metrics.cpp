// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/error.hpp"
#include "logasset/metrics.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace logasset;

namespace {

template <class Fn>
ErrorCode code_of(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

FeatureMap constant_features(int c, int gh, int gw, int patch, std::vector<float> value) {
    FeatureMap f{c, gh, gw, patch, {}};
    f.values.resize(static_cast<std::size_t>(c) * gh * gw);
    for (int k = 0; k < c; ++k)
        for (int i = 0; i < gh; ++i)
            for (int j = 0; j < gw; ++j) f.at(k, i, j) = value[static_cast<std::size_t>(k)];
    return f;
}

struct Ellipse {
    Vec2 center;
    double a, b, angle;

    [[nodiscard]] Vec2 local(const Vec2& p) const {
        const double c = std::cos(angle), s = std::sin(angle);
        const Vec2 d = p - center;
        return {(c * d.x() + s * d.y()) / a, (-s * d.x() + c * d.y()) / b};
    }
    [[nodiscard]] bool inside(const Vec2& p) const { return local(p).squaredNorm() <= 1.0; }
};

// Object color as a function of the ellipse-normalized coordinate, so a
// translated and scaled copy carries the same pattern.
float pattern(const Vec2& u, int c) {
    return static_cast<float>(0.5 + 0.3 * std::sin(1.3 * u.x() + 0.7 * c) * std::cos(0.9 * u.y() - 0.4 * c));
}

void draw(const Ellipse& e, Image& rgb, Mask& mask) {
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            const Vec2 p(x + 0.5, y + 0.5);
            if (!e.inside(p)) continue;
            mask.at(x, y) = 1;
            for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = pattern(e.local(p), c);
        }
}

Mask rect_mask(int w, int h, int x0, int y0, int x1, int y1) {
    Mask m(w, h, 0);
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.at(x, y) = 1;
    return m;
}

} // namespace

TEST(Metrics, FeatureFileRoundTrip) {
    test::TempDir dir;
    Rng rng(50);
    FeatureMap f{4, 3, 5, 14, {}};
    for (int i = 0; i < 60; ++i) f.values.push_back(static_cast<float>(rng.normal()));
    save_feature_map(dir / "f.feat", f);
    const FeatureMap g = load_feature_map(dir / "f.feat");
    EXPECT_EQ(g.channels, 4);
    EXPECT_EQ(g.grid_h, 3);
    EXPECT_EQ(g.grid_w, 5);
    EXPECT_EQ(g.patch_size, 14);
    EXPECT_EQ(g.values, f.values);
    {
        std::ofstream out(dir / "bad.feat", std::ios::binary);
        out << "FEAT 1\nchannels 4\ngrid 3 5\npatch 14\nend_header\nxx";
    }
    EXPECT_EQ(code_of([&] { load_feature_map(dir / "bad.feat"); }), ErrorCode::TruncatedPayload);
    EXPECT_EQ(code_of([&] { load_feature_map(dir / "missing.feat"); }), ErrorCode::MissingFile);
}

TEST(Metrics, ColorFeaturesAreCellMeans) {
    Rng rng(51);
    Image img(10, 7, 3);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
    const FeatureMap f = color_features(img, 3);
    EXPECT_EQ(f.grid_w, 3);
    EXPECT_EQ(f.grid_h, 2);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int y = 3 * i; y < 3 * i + 3; ++y)
                    for (int x = 3 * j; x < 3 * j + 3; ++x) s += img.at(x, y, c);
                EXPECT_NEAR(f.at(c, i, j), s / 9.0, 1e-6);
            }
}

TEST(Metrics, AlignmentExamples) {
    const Mask m = rect_mask(40, 40, 10, 12, 20, 22);
    const Image rgb(40, 40, 3, 0.5f);
    const AlignedRender same = align_to_gt(rgb, m, m);
    EXPECT_EQ(same.transform.translation, Vec2::Zero());
    EXPECT_EQ(same.transform.scale, 1.0);
    EXPECT_EQ(same.mask.count(), m.count());

    const Mask small = rect_mask(40, 40, 15, 15, 25, 25); // area 100
    const Mask big = rect_mask(40, 40, 10, 10, 30, 30);   // area 400
    const AlignedRender up = align_to_gt(rgb, small, big);
    EXPECT_EQ(up.transform.scale, 2.0);
    EXPECT_EQ(up.transform.translation, Vec2::Zero());
    EXPECT_EQ(up.mask.count(), 400u);

    EXPECT_EQ(code_of([&] { align_to_gt(rgb, Mask(40, 40, 0), m); }), ErrorCode::EmptyRenderMask);
    EXPECT_EQ(code_of([&] { align_to_gt(rgb, m, Mask(40, 40, 0)); }), ErrorCode::EmptyGtMask);
}

TEST(Metrics, AlignmentRecoversEllipses) {
    Rng rng(52);
    for (int trial = 0; trial < 40; ++trial) {
        const Ellipse gt{{rng.uniform(50, 78), rng.uniform(50, 78)}, rng.uniform(14, 30), rng.uniform(14, 30),
                         rng.uniform(0, kPi)};
        const double s = rng.uniform(0.6, 1.5);
        const Ellipse moved{gt.center + Vec2(rng.uniform(-15, 15), rng.uniform(-15, 15)), gt.a * s, gt.b * s,
                            gt.angle};
        Image gt_rgb(128, 128, 3, 0.0f), r_rgb(128, 128, 3, 0.0f);
        Mask gt_mask(128, 128, 0), r_mask(128, 128, 0);
        draw(gt, gt_rgb, gt_mask);
        draw(moved, r_rgb, r_mask);
        const AlignedRender al = align_to_gt(r_rgb, r_mask, gt_mask);
        const double ratio = static_cast<double>(al.mask.count()) / static_cast<double>(gt_mask.count());
        EXPECT_GE(ratio, 0.98);
        EXPECT_LE(ratio, 1.02);
        EXPECT_LT((mask_centroid(al.mask) - mask_centroid(gt_mask)).norm(), 0.5);
        EXPECT_NEAR(al.transform.scale, 1.0 / s, 0.03);
        const double d = ed_r(color_features(al.rgb, 8), al.mask, color_features(gt_rgb, 8), gt_mask);
        EXPECT_LT(d, 1e-2);
    }
}

TEST(Metrics, PooledEmbeddingExamples) {
    const FeatureMap f = constant_features(3, 4, 4, 8, {0.1f, -2.0f, 3.0f});
    const Eigen::VectorXd e = pooled_embedding(f, rect_mask(32, 32, 3, 5, 30, 29));
    EXPECT_NEAR(e[0], 0.1f, 1e-7);
    EXPECT_EQ(e[1], -2.0);
    EXPECT_EQ(e[2], 3.0);

    Rng rng(53);
    FeatureMap r{2, 4, 4, 8, {}};
    for (int i = 0; i < 32; ++i) r.values.push_back(static_cast<float>(rng.normal()));
    const Eigen::VectorXd one = pooled_embedding(r, rect_mask(32, 32, 8, 16, 16, 24));
    EXPECT_EQ(one[0], r.at(0, 2, 1));
    EXPECT_EQ(one[1], r.at(1, 2, 1));
    EXPECT_EQ(code_of([&] { pooled_embedding(r, rect_mask(32, 32, 0, 0, 3, 3)); }), ErrorCode::NoForegroundPatches);
}

TEST(Metrics, PooledEmbeddingMatchesLoop) {
    Rng rng(54);
    for (int trial = 0; trial < 20; ++trial) {
        FeatureMap f{5, 6, 7, 4, {}};
        for (int i = 0; i < 5 * 6 * 7; ++i) f.values.push_back(static_cast<float>(rng.normal()));
        Mask m(28, 24, 0);
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 28; ++x) m.at(x, y) = rng.uniform() < 0.5 ? 1 : 0;
        m.at(0, 0) = m.at(1, 0) = m.at(0, 1) = m.at(1, 1) = 1;
        m.at(2, 0) = m.at(3, 0) = m.at(2, 1) = m.at(3, 1) = 1;
        std::vector<double> sum(5, 0.0);
        int n = 0;
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 7; ++j) {
                int cov = 0;
                for (int y = 4 * i; y < 4 * i + 4; ++y)
                    for (int x = 4 * j; x < 4 * j + 4; ++x) cov += m.at(x, y);
                if (cov < 8) continue;
                ++n;
                for (int c = 0; c < 5; ++c) sum[static_cast<std::size_t>(c)] += f.at(c, i, j);
            }
        ASSERT_GT(n, 0);
        const Eigen::VectorXd e = pooled_embedding(f, m);
        for (int c = 0; c < 5; ++c) EXPECT_NEAR(e[c], sum[static_cast<std::size_t>(c)] / n, 1e-12);
    }
}

TEST(Metrics, EdRExamples) {
    const Mask m = rect_mask(16, 16, 0, 0, 16, 16);
    const FeatureMap x = constant_features(2, 2, 2, 8, {1, 0});
    const FeatureMap y = constant_features(2, 2, 2, 8, {0, 1});
    const FeatureMap z = constant_features(2, 2, 2, 8, {-1, 0});
    EXPECT_EQ(ed_r(x, m, x, m), 0.0);
    EXPECT_EQ(ed_r(x, m, y, m), 1.0);
    EXPECT_EQ(ed_r(x, m, z, m), 2.0);
    const FeatureMap zero = constant_features(2, 2, 2, 8, {0, 0});
    EXPECT_EQ(code_of([&] { ed_r(x, m, zero, m); }), ErrorCode::ZeroEmbedding);

    Rng rng(55);
    for (int k = 0; k < 20; ++k) {
        Image img(64, 48, 3);
        for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
        Mask mask(64, 48, 0);
        draw(Ellipse{{32, 24}, rng.uniform(10, 25), rng.uniform(10, 20), rng.uniform(0, kPi)}, img, mask);
        const FeatureMap f = color_features(img, 8);
        const double d = ed_r(f, mask, f, mask);
        EXPECT_NEAR(d, 0.0, 1e-15);
        EXPECT_GE(d, -1e-15);
    }
}

namespace {

// Stick figure built from labeled rectangles.
struct Figure {
    Mask mask{200, 300, 0};
    std::map<BodyPart, std::array<int, 4>> rects;
    Keypoints kps;
};

Figure stick_figure() {
    Figure f;
    f.rects[BodyPart::Head] = {92, 8, 108, 42};
    f.rects[BodyPart::Torso] = {72, 50, 128, 150};
    f.rects[BodyPart::LeftArm] = {8, 56, 66, 64};
    f.rects[BodyPart::RightArm] = {134, 56, 192, 64};
    f.rects[BodyPart::LeftLeg] = {81, 156, 89, 272};
    f.rects[BodyPart::RightLeg] = {111, 156, 119, 272};
    for (const auto& [part, r] : f.rects)
        for (int y = r[1]; y < r[3]; ++y)
            for (int x = r[0]; x < r[2]; ++x) f.mask.at(x, y) = 1;
    auto put = [&](const char* name, double x, double y) { f.kps[name] = Keypoint{{x, y}, 1.0}; };
    put("head", 100, 25);
    put("neck", 100, 50);
    put("pelvis", 100, 150);
    put("left_shoulder", 72, 60);
    put("right_shoulder", 128, 60);
    put("left_elbow", 40, 60);
    put("right_elbow", 160, 60);
    put("left_wrist", 10, 60);
    put("right_wrist", 190, 60);
    put("left_hip", 85, 150);
    put("right_hip", 115, 150);
    put("left_knee", 85, 210);
    put("right_knee", 115, 210);
    put("left_ankle", 85, 270);
    put("right_ankle", 115, 270);
    return f;
}

} // namespace

TEST(Metrics, PartitionStickFigure) {
    const Figure f = stick_figure();
    const PartLabelMap map = partition_parts(f.mask, f.kps);
    for (const auto& [part, r] : f.rects) {
        int hit = 0, total = 0;
        for (int y = r[1]; y < r[3]; ++y)
            for (int x = r[0]; x < r[2]; ++x) {
                ++total;
                hit += map.at(x, y) == static_cast<std::int8_t>(part) ? 1 : 0;
            }
        EXPECT_GE(static_cast<double>(hit) / total, 0.95) << to_string(part);
    }
    for (int y = 0; y < 300; ++y)
        for (int x = 0; x < 200; ++x) EXPECT_EQ(map.at(x, y) == kBackgroundLabel, f.mask.at(x, y) == 0);
    EXPECT_EQ(map.visible_parts().size(), 6u);
}

TEST(Metrics, PartitionMissingArms) {
    Figure f = stick_figure();
    for (const char* k : {"left_elbow", "right_elbow", "left_wrist", "right_wrist"}) f.kps.erase(k);
    const auto parts = partition_parts(f.mask, f.kps).visible_parts();
    EXPECT_EQ(parts, (std::vector<BodyPart>{BodyPart::Head, BodyPart::Torso, BodyPart::LeftLeg, BodyPart::RightLeg}));
    Figure g = stick_figure();
    g.kps["left_elbow"].confidence = 0.1;
    g.kps["right_elbow"].confidence = 0.1;
    const auto low = partition_parts(g.mask, g.kps, 0.5).visible_parts();
    EXPECT_EQ(std::count(low.begin(), low.end(), BodyPart::LeftArm), 0);
    g.kps.erase("pelvis");
    EXPECT_EQ(code_of([&] { partition_parts(g.mask, g.kps); }), ErrorCode::InsufficientKeypoints);
}

TEST(Metrics, PartitionCollinear) {
    Mask m = rect_mask(20, 100, 8, 0, 12, 100);
    Keypoints k;
    k["head"] = {{10, 5}, 1};
    k["neck"] = {{10, 20}, 1};
    k["pelvis"] = {{10, 60}, 1};
    const PartLabelMap map = partition_parts(m, k);
    for (int y = 0; y < 19; ++y) EXPECT_EQ(map.at(10, y), static_cast<std::int8_t>(BodyPart::Head));
    for (int y = 21; y < 100; ++y) EXPECT_EQ(map.at(10, y), static_cast<std::int8_t>(BodyPart::Torso));
}

TEST(Metrics, KeypointFile) {
    test::TempDir dir;
    {
        std::ofstream out(dir / "k.json");
        out << R"({"keypoints": {"neck": [1.5, 2, 0.9], "pelvis": [3, 4, 1]}})";
    }
    const Keypoints k = load_keypoints(dir / "k.json");
    ASSERT_EQ(k.size(), 2u);
    EXPECT_EQ(k.at("neck").position, Vec2(1.5, 2));
    EXPECT_EQ(k.at("neck").confidence, 0.9);
    {
        std::ofstream out(dir / "bad.json");
        out << R"({"keypoints": {"neck": [1.5]}})";
    }
    EXPECT_EQ(code_of([&] { load_keypoints(dir / "bad.json"); }), ErrorCode::SchemaViolation);
}

namespace {

PartLabelMap labels_from(const std::vector<std::pair<BodyPart, Mask>>& parts, int w, int h) {
    PartLabelMap map{w, h, std::vector<std::int8_t>(static_cast<std::size_t>(w) * h, kBackgroundLabel)};
    for (const auto& [part, m] : parts)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (m.at(x, y) != 0) map.labels[static_cast<std::size_t>(y) * w + x] = static_cast<std::int8_t>(part);
    return map;
}

} // namespace

TEST(Metrics, EdPExamples) {
    // Two 8x8 cells side by side: head on the left, torso on the right.
    FeatureMap fr{2, 1, 2, 8, {1, 1, 0, 0}};
    FeatureMap fg{2, 1, 2, 8, {1, 0, 0, 1}};
    const PartLabelMap parts =
        labels_from({{BodyPart::Head, rect_mask(16, 8, 0, 0, 8, 8)}, {BodyPart::Torso, rect_mask(16, 8, 8, 0, 16, 8)}},
                    16, 8);
    EXPECT_EQ(ed_p(fr, parts, fr, parts), 0.0);
    // Head embeddings (1,0) vs (1,0); torso (1,0) vs (0,1).
    EXPECT_EQ(ed_p(fr, parts, fg, parts), 0.5);

    const PartLabelMap only_head = labels_from({{BodyPart::Head, rect_mask(16, 8, 0, 0, 8, 8)}}, 16, 8);
    const PartLabelMap only_torso = labels_from({{BodyPart::Torso, rect_mask(16, 8, 8, 0, 16, 8)}}, 16, 8);
    FeatureMap orth{2, 1, 2, 8, {0, 0, 1, 1}};
    EXPECT_EQ(ed_p(fr, only_torso, orth, parts), 1.0);
    EXPECT_EQ(code_of([&] { ed_p(fr, only_head, fr, only_torso); }), ErrorCode::NoCommonParts);
}

TEST(Metrics, EdPSinglePartEqualsEdR) {
    Rng rng(56);
    for (int k = 0; k < 20; ++k) {
        FeatureMap a{3, 4, 4, 4, {}}, b{3, 4, 4, 4, {}};
        for (int i = 0; i < 48; ++i) {
            a.values.push_back(static_cast<float>(rng.normal()));
            b.values.push_back(static_cast<float>(rng.normal()));
        }
        const Mask ma = rect_mask(16, 16, 0, 0, 4 + 4 * static_cast<int>(rng.index(3)), 12);
        const Mask mb = rect_mask(16, 16, 4, 4, 16, 16);
        const PartLabelMap pa = labels_from({{BodyPart::LeftLeg, ma}}, 16, 16);
        const PartLabelMap pb = labels_from({{BodyPart::LeftLeg, mb}}, 16, 16);
        EXPECT_NEAR(ed_p(a, pa, b, pb), ed_r(a, ma, b, mb), 1e-15);
    }
}

namespace {

nlohmann::json bench_manifest(const std::array<std::array<int, 5>, 2>& counts) {
    nlohmann::json j{{"schema", 1}, {"instances", nlohmann::json::array()}};
    int id = 0;
    for (int s = 0; s < 2; ++s)
        for (int c = 0; c < 5; ++c)
            for (int k = 0; k < counts[static_cast<std::size_t>(s)][static_cast<std::size_t>(c)]; ++k)
                j["instances"].push_back({{"instance_id", "i" + std::to_string(id++)},
                                          {"class_label", std::string(to_string(static_cast<ObjectClass>(c)))},
                                          {"split", s == 0 ? "A" : "B"}});
    return j;
}

} // namespace

TEST(Metrics, BenchmarkCounts) {
    const BenchCounts table = benchmark_manifest_check(bench_manifest({{{1472, 308, 330, 41, 55}, {602, 405, 383, 30, 90}}}));
    EXPECT_EQ(table.split_total(BenchSplit::A), 2206u);
    EXPECT_EQ(table.split_total(BenchSplit::B), 1510u);
    EXPECT_EQ(table.total(), 3716u);
    EXPECT_EQ(table.class_total(ObjectClass::ConsumerVehicle), 2074u);
    const std::string text = format_bench_table(table);
    EXPECT_NE(text.find("3716"), std::string::npos);
    EXPECT_EQ(bench_counts_json(table)["totals"]["total"], 3716);

    const BenchCounts empty = benchmark_manifest_check(nlohmann::json{{"schema", 1}, {"instances", nlohmann::json::array()}});
    EXPECT_EQ(empty.total(), 0u);
    const BenchCounts one = benchmark_manifest_check(bench_manifest({{{1, 0, 0, 0, 0}, {0, 0, 0, 0, 0}}}));
    EXPECT_EQ(one.at(BenchSplit::A, ObjectClass::ConsumerVehicle), 1u);
    EXPECT_EQ(one.total(), 1u);

    nlohmann::json bad = bench_manifest({{{1, 0, 0, 0, 0}, {0, 0, 0, 0, 0}}});
    bad["instances"][0]["class_label"] = "truck";
    EXPECT_EQ(code_of([&] { benchmark_manifest_check(bad); }), ErrorCode::UnknownClass);
    bad["instances"][0]["class_label"] = "other";
    bad["instances"][0]["split"] = "C";
    EXPECT_EQ(code_of([&] { benchmark_manifest_check(bad); }), ErrorCode::SchemaViolation);
}

TEST(Metrics, BenchmarkFixtureFile) {
    const BenchCounts table = benchmark_manifest_check(std::filesystem::path(LOGASSET_TEST_DATA) / "bench_splits.json");
    EXPECT_EQ(table.split_total(BenchSplit::A), 2206u);
    EXPECT_EQ(table.split_total(BenchSplit::B), 1510u);
    EXPECT_EQ(table.total(), 3716u);
}
