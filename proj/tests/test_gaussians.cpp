// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/error.hpp"
#include "logasset/gaussians.hpp"
#include "logasset/losses.hpp"
#include "logasset/synth.hpp"
#include "test_util.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <fstream>

using namespace logasset;

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::IoError;
}

PinholeCamera axis_camera(int size = 64, double f = 80.0) {
    PinholeCamera c;
    c.fx = c.fy = f;
    c.cx = c.cy = size / 2.0;
    c.width = c.height = size;
    return c;
}

std::vector<float> dc_color(const Vec3& rgb, int degree = 0) {
    std::vector<float> sh(static_cast<std::size_t>(3 * sh_coeff_count(degree)), 0.0f);
    for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c)] = static_cast<float>((rgb[c] - 0.5) / kC0);
    return sh;
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
    return m;
}

} // namespace

TEST(Gaussians, CovarianceExamples) {
    Gaussian g = Gaussian::from_activated(Vec3::Zero(), Vec3(1, 2, 3), Quat::Identity(), 0.5, dc_color(Vec3::Zero()));
    const Mat3 s = covariance(g);
    EXPECT_LT((s - Vec3(1, 4, 9).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-5);
    g = Gaussian::from_activated(Vec3::Zero(), Vec3(1, 2, 3), Quat(Eigen::AngleAxisd(kPi / 2, Vec3::UnitZ())), 0.5,
                                 dc_color(Vec3::Zero()));
    const Mat3 r = covariance(g);
    EXPECT_NEAR(r(0, 0), 4.0, 1e-5);
    EXPECT_NEAR(r(1, 1), 1.0, 1e-5);
    EXPECT_NEAR(r(2, 2), 9.0, 1e-5);
}

TEST(Gaussians, CovarianceEigenOracle) {
    Rng rng(20);
    for (int i = 0; i < 500; ++i) {
        const Vec3 scale(rng.uniform(0.01, 3), rng.uniform(0.01, 3), rng.uniform(0.01, 3));
        const Gaussian g = Gaussian::from_activated(Vec3::Zero(), scale, random_rotation(rng), 0.5, {0, 0, 0});
        const Mat3 s = covariance(g);
        EXPECT_LT((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-12);
        Eigen::SelfAdjointEigenSolver<Mat3> es(s);
        Vec3 expect = g.scale().cwiseAbs2();
        std::sort(expect.data(), expect.data() + 3);
        EXPECT_LT((es.eigenvalues() - expect).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, expect.maxCoeff()));
    }
}

TEST(Gaussians, ProjectOnAxisIsotropic) {
    const PinholeCamera cam = axis_camera(128, 200.0);
    const double sigma = 0.05, depth = 7.0;
    const Gaussian g =
        Gaussian::from_activated(Vec3(0, 0, depth), Vec3::Constant(sigma), Quat::Identity(), 0.5, {0, 0, 0});
    const auto s = project_gaussian(cam, g);
    ASSERT_TRUE(s);
    const double expect = 200.0 * g.scale().x() / depth;
    EXPECT_NEAR(std::sqrt(s->cov(0, 0)), expect, 1e-6 * expect);
    EXPECT_NEAR(std::sqrt(s->cov(1, 1)), expect, 1e-6 * expect);
    EXPECT_NEAR(s->cov(0, 1), 0.0, 1e-12);
    EXPECT_NEAR(s->depth, depth, 1e-6);
    const Gaussian behind =
        Gaussian::from_activated(Vec3(0, 0, -2), Vec3::Constant(sigma), Quat::Identity(), 0.5, {0, 0, 0});
    EXPECT_FALSE(project_gaussian(cam, behind));
}

TEST(Gaussians, ProjectMatchesNumericJacobian) {
    Rng rng(21);
    for (int i = 0; i < 100; ++i) {
        PinholeCamera cam = PinholeCamera::from_fov(60.0, 128, 96, {random_rotation(rng), Vec3::Zero()});
        const Vec3 local(rng.uniform(-2, 2), rng.uniform(-1.5, 1.5), rng.uniform(4, 10));
        const Vec3 mean = cam.pose.inverse().apply(local);
        const Gaussian g = Gaussian::from_activated(
            mean, Vec3(rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3), rng.uniform(0.01, 0.3)), random_rotation(rng),
            0.5, {0, 0, 0});
        const auto s = project_gaussian(cam, g);
        ASSERT_TRUE(s);
        Eigen::Matrix<double, 2, 3> j;
        const double h = 1e-5;
        for (int k = 0; k < 3; ++k) {
            Vec3 d = Vec3::Zero();
            d[k] = h;
            j.col(k) = (project(cam, g.mean() + d).pixel - project(cam, g.mean() - d).pixel) / (2 * h);
        }
        const Mat2 expect = j * covariance(g) * j.transpose();
        EXPECT_LT((s->cov - expect).norm(), 1e-4 * expect.norm());
        EXPECT_LT((s->mean - project(cam, g.mean()).pixel).norm(), 1e-9);
    }
}

TEST(Gaussians, ShExamples) {
    const std::vector<float> c0 = {0.3f, -1.0f, 5.0f};
    const Vec3 col = sh_eval(c0, Vec3::UnitX(), 0);
    EXPECT_NEAR(col[0], 0.28209479 * 0.3 + 0.5, 1e-7);
    EXPECT_NEAR(col[1], 0.28209479 * -1.0 + 0.5, 1e-7);
    EXPECT_EQ(col[2], 1.0);

    std::vector<float> c1(12, 0.0f);
    c1[2 * 3 + 0] = 0.2f; // z lobe, red
    const double up = sh_eval(c1, Vec3::UnitZ(), 1)[0];
    const double down = sh_eval(c1, -Vec3::UnitZ(), 1)[0];
    EXPECT_NEAR(up - down, 2 * 0.48860251 * 0.2, 1e-7);

    EXPECT_EQ(code_of([] { sh_eval(std::vector<float>(5), Vec3::UnitZ(), 0); }), ErrorCode::CoeffCountMismatch);
    EXPECT_EQ(code_of([] { sh_eval(std::vector<float>(48), Vec3::UnitZ(), 4); }), ErrorCode::CoeffCountMismatch);
}

TEST(Gaussians, ShDegreeOneAveragesToZero) {
    Rng rng(22);
    Vec3 sum = Vec3::Zero();
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const auto b = sh_basis(rng.unit_vector(), 1);
        sum += Vec3(b[1], b[2], b[3]);
    }
    EXPECT_LT((sum / n).cwiseAbs().maxCoeff(), 3.0 * kC1 / std::sqrt(3.0 * n) * 3.0);
}

TEST(Gaussians, ShBasisOrthonormalMonteCarlo) {
    Rng rng(23);
    const int n = 20000;
    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(16, 16);
    for (int i = 0; i < n; ++i) {
        const auto b = sh_basis(rng.unit_vector(), 3);
        const Eigen::Map<const Eigen::VectorXd> v(b.data(), 16);
        gram += v * v.transpose();
    }
    gram *= 4.0 * kPi / n;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff(), 0.06);
}

TEST(Gaussians, DecodeZeroBlock) {
    const std::vector<std::vector<float>> blocks = {std::vector<float>(64 * gaussian_stride(0), 0.0f)};
    const GaussianAsset a = decode_tokens(blocks, 0);
    ASSERT_EQ(a.size(), 64u);
    for (const auto& g : a.gaussians) {
        EXPECT_EQ(g.mean(), Vec3::Zero());
        EXPECT_EQ(g.scale(), Vec3::Ones());
        EXPECT_EQ(g.opacity(), 0.5);
        EXPECT_TRUE(g.orientation().coeffs().isApprox(Quat::Identity().coeffs()));
    }
    const std::vector<std::vector<float>> two(2, std::vector<float>(64 * gaussian_stride(2), 0.1f));
    EXPECT_EQ(decode_tokens(two, 2).size(), 128u);
    EXPECT_EQ(code_of([] { decode_tokens(std::vector<std::vector<float>>{std::vector<float>(10)}, 0); }),
              ErrorCode::BlockSizeMismatch);
    EXPECT_EQ(code_of([] { decode_tokens({}, 0); }), ErrorCode::BlockSizeMismatch);
}

TEST(Gaussians, EncodeDecodeRoundTrip) {
    const GaussianAsset a = synth_asset(5, 128, 2);
    const auto blocks = encode_tokens(a);
    ASSERT_EQ(blocks.size(), 2u);
    EXPECT_EQ(blocks[0].size(), static_cast<std::size_t>(64 * gaussian_stride(2)));
    EXPECT_EQ(decode_tokens(blocks, 2), a);
    // Activations invert the storage parameterization.
    Rng rng(24);
    for (int i = 0; i < 100; ++i) {
        const Vec3 s(rng.uniform(0.01, 2), rng.uniform(0.01, 2), rng.uniform(0.01, 2));
        const double op = rng.uniform(0.01, 0.99);
        const Quat q = random_rotation(rng);
        const Gaussian g = Gaussian::from_activated(Vec3::Zero(), s, q, op, {0, 0, 0});
        EXPECT_LT((g.scale() - s).norm(), 1e-6);
        EXPECT_NEAR(g.opacity(), op, 1e-6);
        EXPECT_LT(g.orientation().angularDistance(q), 1e-6);
    }
}

TEST(Gaussians, AssetFileRoundTripAndErrors) {
    test::TempDir dir;
    GaussianAsset a = synth_asset(6, 37, 1);
    a.gaussians[3].opacity_logit = -std::numeric_limits<float>::infinity();
    save_asset(dir / "a.gsa", a);
    EXPECT_EQ(load_asset(dir / "a.gsa"), a);

    std::ifstream in(dir / "a.gsa", std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});
    auto write = [&](const std::string& name, const std::string& content) {
        std::ofstream(dir / name, std::ios::binary) << content;
        return dir / name;
    };
    EXPECT_EQ(code_of([&] { load_asset(write("t.gsa", bytes.substr(0, bytes.size() - 3))); }),
              ErrorCode::TruncatedPayload);
    std::string more = bytes;
    more.replace(more.find("count 37"), 8, "count 36");
    EXPECT_EQ(code_of([&] { load_asset(write("m.gsa", more)); }), ErrorCode::CorruptHeader);
    EXPECT_EQ(code_of([&] { load_asset(write("h.gsa", "PLY\n" + bytes)); }), ErrorCode::CorruptHeader);
    EXPECT_EQ(code_of([&] { load_asset(dir / "missing.gsa"); }), ErrorCode::MissingFile);
}

TEST(Gaussians, ValidateRejectsBadAssets) {
    GaussianAsset a = synth_asset(7, 4, 1);
    EXPECT_NO_THROW(a.validate());
    a.gaussians[1].sh.pop_back();
    EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::CoeffCountMismatch);
    a = synth_asset(7, 4, 1);
    a.gaussians[0].position[1] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_EQ(code_of([&] { a.validate(); }), ErrorCode::ShapeMismatch);
    EXPECT_EQ(code_of([] { GaussianAsset{}.validate(); }), ErrorCode::ShapeMismatch);
}

TEST(Gaussians, TransparentAssetRendersBackground) {
    GaussianAsset a = synth_asset(8, 20, 0, 0.5);
    for (auto& g : a.gaussians) g.opacity_logit = -std::numeric_limits<float>::infinity();
    PinholeCamera cam = axis_camera();
    cam.pose.translation = Vec3(0, 0, 4);
    const Vec3 bg(0.2, 0.4, 0.6);
    const RenderedImage r = render(a, cam, bg);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            for (int c = 0; c < 3; ++c) ASSERT_EQ(r.rgb.at(x, y, c), static_cast<float>(bg[c]));
            ASSERT_EQ(r.alpha.at(x, y, 0), 0.0f);
        }
}

TEST(Gaussians, CompositingAlgebra) {
    PinholeCamera cam = axis_camera(64);
    cam.cx = cam.cy = 31.5;
    GaussianAsset a;
    a.gaussians.push_back(
        Gaussian::from_activated(Vec3(0, 0, 5), Vec3::Constant(0.2), Quat::Identity(), 0.5, dc_color(Vec3(1, 0, 0))));
    a.gaussians.push_back(
        Gaussian::from_activated(Vec3(0, 0, 8), Vec3::Constant(0.2), Quat::Identity(), 0.5, dc_color(Vec3(0, 0, 1))));
    const Vec3 bg(0, 1, 0);
    const RenderedImage r = render(a, cam, bg);
    EXPECT_NEAR(r.rgb.at(31, 31, 0), 0.5, 1e-6);
    EXPECT_NEAR(r.rgb.at(31, 31, 1), 0.25, 1e-6);
    EXPECT_NEAR(r.rgb.at(31, 31, 2), 0.25, 1e-6);
    EXPECT_NEAR(r.alpha.at(31, 31, 0), 0.75, 1e-6);
}

TEST(Gaussians, RenderOrderInvariantAndZeroOpacityNeutral) {
    PinholeCamera cam = PinholeCamera::from_fov(50.0, 64, 48, look_at_pose(Vec3(4, -3, 1), Vec3::Zero()));
    GaussianAsset a = synth_asset(9, 150, 2);
    const RenderedImage base = render(a, cam, Vec3(0.1, 0.2, 0.3));
    Rng rng(25);
    for (int k = 0; k < 5; ++k) {
        GaussianAsset p = a;
        for (std::size_t i = p.gaussians.size(); i > 1; --i) std::swap(p.gaussians[i - 1], p.gaussians[rng.index(i)]);
        const RenderedImage r = render(p, cam, Vec3(0.1, 0.2, 0.3));
        EXPECT_EQ(r.rgb, base.rgb);
        EXPECT_EQ(r.alpha, base.alpha);
    }
    GaussianAsset z = a;
    Gaussian ghost = a.gaussians[0];
    ghost.opacity_logit = -std::numeric_limits<float>::infinity();
    z.gaussians.insert(z.gaussians.begin() + 7, ghost);
    EXPECT_EQ(render(z, cam, Vec3(0.1, 0.2, 0.3)).rgb, base.rgb);
}

TEST(Gaussians, RenderThreadCountDoesNotMatter) {
    PinholeCamera cam = PinholeCamera::from_fov(50.0, 70, 50, look_at_pose(Vec3(3, 3, 1), Vec3::Zero()));
    const GaussianAsset a = synth_asset(10, 80, 1);
    RenderOptions one, four;
    one.threads = 1;
    four.threads = 4;
    EXPECT_EQ(render(a, cam, Vec3::Zero(), one).rgb, render(a, cam, Vec3::Zero(), four).rgb);
}

TEST(Gaussians, RigidEquivariance) {
    Rng rng(26);
    for (int trial = 0; trial < 3; ++trial) {
        const GaussianAsset a = synth_asset(30 + trial, 60, trial);
        const PinholeCamera cam = PinholeCamera::from_fov(45.0, 48, 48, look_at_pose(Vec3(4, 1, 2), Vec3::Zero()));
        const RigidTransform t{random_rotation(rng), Vec3(rng.normal(), rng.normal(), rng.normal())};
        const GaussianAsset moved = transform_asset(a, t);
        PinholeCamera cam2 = cam;
        cam2.pose = cam.pose * t.inverse();
        const RenderedImage r1 = render(a, cam, Vec3(0.3, 0.3, 0.3));
        const RenderedImage r2 = render(moved, cam2, Vec3(0.3, 0.3, 0.3));
        EXPECT_LT(max_abs_diff(r1.rgb, r2.rgb), 1e-5);
    }
}

TEST(Gaussians, AlphaBoundedAndMonotoneInOpacity) {
    const PinholeCamera cam = PinholeCamera::from_fov(50.0, 40, 40, look_at_pose(Vec3(3, 0, 1), Vec3::Zero()));
    GaussianAsset a = synth_asset(11, 40, 0);
    const RenderedImage before = render(a, cam, Vec3::Zero());
    for (auto& g : a.gaussians) g.opacity_logit += 0.5f;
    const RenderedImage after = render(a, cam, Vec3::Zero());
    for (std::size_t i = 0; i < before.alpha.data().size(); ++i) {
        EXPECT_GE(before.alpha.data()[i], 0.0f);
        EXPECT_LE(before.alpha.data()[i], 1.0f);
        EXPECT_GE(after.alpha.data()[i], before.alpha.data()[i] - 1e-7f);
    }
}

TEST(Gaussians, DegenerateSplatsCounted) {
    PinholeCamera cam = axis_camera();
    GaussianAsset a;
    a.gaussians.push_back(Gaussian::from_activated(Vec3(0, 0, 5), Vec3(1e-9, 1.0, 1e-9), Quat::Identity(), 0.9,
                                                   dc_color(Vec3(1, 1, 1))));
    a.gaussians.push_back(
        Gaussian::from_activated(Vec3(0, 0, -5), Vec3::Constant(0.1), Quat::Identity(), 0.9, dc_color(Vec3(1, 1, 1))));
    const RenderedImage r = render(a, cam, Vec3::Zero());
    EXPECT_EQ(r.degenerate_splats, 1);
    EXPECT_EQ(r.culled_splats, 1);
}

TEST(Gaussians, ReconLossZeroOnOwnRenders) {
    const GaussianAsset a = synth_asset(12, 50, 1);
    std::vector<TargetView> views;
    for (const auto& cam : generate_target_cameras(40.0, 4.0, 4, 10.0, 32)) {
        views.push_back({cam, render(a, cam, Vec3(1, 1, 1)).rgb});
    }
    EXPECT_NEAR(recon_loss(a, views, Vec3(1, 1, 1)), 0.0, 1e-12);
    views[0].image.at(3, 3, 0) = 0.0f;
    EXPECT_GT(recon_loss(a, views, Vec3(1, 1, 1)), 0.0);
    EXPECT_EQ(code_of([&] { recon_loss(a, {}, Vec3::Zero()); }), ErrorCode::EmptyViewSet);
}
