// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/synth.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace logasset;

TEST(Synth, SpecNames) {
    for (const auto s : {SynthSpec::Ring8, SynthSpec::Ring8Fisheye, SynthSpec::Wall, SynthSpec::Half}) {
        EXPECT_EQ(parse_synth_spec(to_string(s)), s);
    }
    EXPECT_THROW(parse_synth_spec("ring9"), std::invalid_argument);
}

TEST(Synth, RingHasEightFramesOneTrack) {
    for (const auto s : {SynthSpec::Ring8, SynthSpec::Ring8Fisheye}) {
        const SynthScene scene = synth_scene(s, 1);
        EXPECT_EQ(scene.log.frames.size(), 8u);
        ASSERT_EQ(scene.log.tracks.size(), 1u);
        EXPECT_EQ(scene.log.tracks[0].object_id, "obj0");
        ASSERT_EQ(scene.truth.size(), 8u);
        for (const auto& t : scene.truth) {
            EXPECT_EQ(t.occlusion, 0.0);
            EXPECT_TRUE(t.in_view);
        }
    }
}

TEST(Synth, SameSeedSameScene) {
    for (const auto s : {SynthSpec::Ring8, SynthSpec::Ring8Fisheye, SynthSpec::Wall, SynthSpec::Half}) {
        const SynthScene a = synth_scene(s, 11), b = synth_scene(s, 11), c = synth_scene(s, 12);
        EXPECT_EQ(serialize_log(a.log), serialize_log(b.log));
        EXPECT_EQ(a.colors, b.colors);
        EXPECT_EQ(truth_json(a), truth_json(b));
        EXPECT_NE(a.colors, c.colors);
        const SynthFrame fa = render_synth_frame(a, 0), fb = render_synth_frame(b, 0);
        EXPECT_EQ(fa.image.data(), fb.image.data());
    }
}

TEST(Synth, WallHidesTargetEverywhere) {
    const SynthScene scene = synth_scene(SynthSpec::Wall, 2);
    int frames = 0;
    for (const auto& t : scene.truth) {
        if (t.object_id != "target") continue;
        ++frames;
        EXPECT_NEAR(t.occlusion, 1.0, 1e-9);
        const SynthFrame f = render_synth_frame(scene, t.frame_index);
        EXPECT_EQ(f.masks[0].count(), 0u);
    }
    EXPECT_EQ(frames, 5);
}

TEST(Synth, MasksMatchProjectedSilhouette) {
    const SynthScene scene = synth_scene(SynthSpec::Ring8, 4);
    for (std::size_t k = 0; k < scene.log.frames.size(); ++k) {
        const SynthFrame f = render_synth_frame(scene, k);
        const auto& frame = scene.log.frames[k];
        const Camera cam = make_camera(scene.log.camera(frame.camera_id), frame.ego_pose);
        const Cuboid box = Cuboid::from_state(interpolate_cuboid(scene.log.tracks[0], frame.timestamp).state);
        const auto proj = project_cuboid(cam, box);
        ASSERT_GT(f.masks[0].count(), 100u);
        for (int y = 0; y < f.masks[0].height(); ++y)
            for (int x = 0; x < f.masks[0].width(); ++x) {
                if (f.masks[0].at(x, y) == 0) continue;
                EXPECT_GE(x + 0.5, proj.bbox.x0);
                EXPECT_LE(x + 0.5, proj.bbox.x1);
                EXPECT_GE(y + 0.5, proj.bbox.y0);
                EXPECT_LE(y + 0.5, proj.bbox.y1);
            }
        for (int c = 0; c < 3; ++c) EXPECT_GT(f.image.at(128, 128, c), 0.0f);
    }
}

TEST(Synth, AnalyticOcclusionCases) {
    Cuboid target;
    target.half_extents = Vec3::Ones();
    const Vec3 cam(10, 0, 0);
    EXPECT_EQ(analytic_occlusion(cam, target, {}), 0.0);
    Cuboid blocker;
    blocker.center = Vec3(5, 0, 0);
    blocker.half_extents = Vec3(0.1, 10, 10);
    const std::vector<Cuboid> wall = {blocker};
    EXPECT_NEAR(analytic_occlusion(cam, target, wall), 1.0, 1e-12);
    blocker.center = Vec3(10, 0, 0);
    const std::vector<Cuboid> around_camera = {blocker};
    EXPECT_NEAR(analytic_occlusion(cam, target, around_camera), 1.0, 1e-9);
    blocker.center = Vec3(0, 0, 5);
    blocker.half_extents = Vec3(10, 10, 0.5);
    const std::vector<Cuboid> above = {blocker};
    EXPECT_NEAR(analytic_occlusion(cam, target, above), 0.0, 1e-12);
}

TEST(Synth, WrittenSceneParses) {
    test::TempDir dir;
    SynthScene scene = synth_scene(SynthSpec::Half, 5);
    write_synth_scene(scene, dir.path());
    EXPECT_TRUE(std::filesystem::exists(dir / "truth.json"));
    const SensorLog log = parse_log(dir / "manifest.json");
    EXPECT_EQ(log.frames.size(), scene.log.frames.size());
    const Mask m = read_png_mask(dir / scene.log.frames[0].masks.at("target"));
    EXPECT_EQ(m.count(), render_synth_frame(scene, 0).masks[0].count());
}

TEST(Synth, AssetIsValidAndSeeded) {
    const GaussianAsset a = synth_asset(3, 50, 1, 0.5);
    EXPECT_EQ(a.size(), 50u);
    EXPECT_NO_THROW(a.validate());
    for (const auto& g : a.gaussians) EXPECT_LE(g.mean().norm(), 0.5 + 1e-6);
    const GaussianAsset b = synth_asset(3, 50, 1, 0.5);
    EXPECT_EQ(a.gaussians[7].position, b.gaussians[7].position);
    EXPECT_EQ(a.gaussians[7].sh, b.gaussians[7].sh);
}
