// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/camera.hpp"
#include "logasset/image.hpp"
#include "logasset/math.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace logasset {

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// One 3D Gaussian in its storage parameterization: raw position, log of the
// per-axis standard deviations, an unnormalized (w, x, y, z) quaternion, the
// pre-sigmoid opacity and SH coefficients laid out [coefficient][rgb].
// An opacity logit of -inf encodes an exactly transparent Gaussian.
struct Gaussian {
    std::array<float, 3> position{};
    std::array<float, 3> log_scale{};
    std::array<float, 4> rotation{1.0f, 0.0f, 0.0f, 0.0f};
    float opacity_logit = 0.0f;
    std::vector<float> sh;

    [[nodiscard]] Vec3 mean() const { return {position[0], position[1], position[2]}; }
    [[nodiscard]] Vec3 scale() const;
    // Normalized rotation; a zero quaternion decodes to identity.
    [[nodiscard]] Quat orientation() const;
    [[nodiscard]] double opacity() const;

    // Builds storage parameters from activated values.
    static Gaussian from_activated(const Vec3& mean, const Vec3& scale, const Quat& rotation, double opacity,
                                   std::vector<float> sh);

    bool operator==(const Gaussian&) const = default;
};

struct BoundingSphere {
    Vec3 center = Vec3::Zero();
    double radius = 0.0;
};

struct GaussianAsset {
    int sh_degree = 0;
    std::vector<Gaussian> gaussians;

    [[nodiscard]] std::size_t size() const noexcept { return gaussians.size(); }
    [[nodiscard]] BoundingSphere bounding_sphere() const;
    // Throws ShapeMismatch / CoeffCountMismatch when the invariants fail.
    void validate() const;

    bool operator==(const GaussianAsset&) const = default;
};

// Sigma = R diag(s^2) R^T.
Mat3 covariance(const Gaussian& g);

struct Splat2D {
    Vec2 mean = Vec2::Zero();
    Mat2 cov = Mat2::Identity();
    double depth = 0.0;
};

inline constexpr double kDefaultNearPlane = 0.05;

// EWA projection: cov2d = J W Sigma W^T J^T with J the perspective Jacobian
// at the mean. Returns nullopt (culled) when depth <= near.
std::optional<Splat2D> project_gaussian(const PinholeCamera& camera, const Gaussian& g,
                                        double near = kDefaultNearPlane);

// Real SH basis values up to `degree` (<= 3) for a unit direction, in the
// storage order of the coefficients.
std::vector<double> sh_basis(const Vec3& dir, int degree);

// Color along `view_dir` with the +0.5 offset convention, clamped to [0, 1].
// Throws CoeffCountMismatch when coeffs.size() != 3 * (degree + 1)^2.
Vec3 sh_eval(std::span<const float> coeffs, const Vec3& view_dir, int degree);

struct RenderOptions {
    int tile_size = 16;
    double cutoff_sigma = 4.0;    // splat support radius in standard deviations
    double near = kDefaultNearPlane;
    double min_transmittance = 1e-4;
    double max_weight = 0.999;
    double max_condition = 1e12;  // cov2d conditioning above this is skipped
    int threads = 0;              // 0 = hardware concurrency
};

struct RenderedImage {
    Image rgb;   // 3 channels
    Image alpha; // 1 channel, accumulated opacity
    int degenerate_splats = 0;
    int culled_splats = 0;
};

RenderedImage render(const GaussianAsset& asset, const PinholeCamera& camera, const Vec3& background,
                     const RenderOptions& options = {});

// Applies a rigid transform to positions, orientations and SH coefficients.
GaussianAsset transform_asset(const GaussianAsset& asset, const RigidTransform& transform);

inline constexpr int kGaussiansPerToken = 64;

inline int gaussian_stride(int sh_degree) { return 3 + 3 + 4 + 1 + 3 * sh_coeff_count(sh_degree); }

// Each block holds 64 consecutive Gaussians of gaussian_stride() floats:
// [position(3), log_scale(3), quaternion wxyz(4), opacity_logit(1), sh(...)].
GaussianAsset decode_tokens(std::span<const std::vector<float>> blocks, int sh_degree);
// Inverse of decode_tokens; the asset size must be a multiple of 64.
std::vector<std::vector<float>> encode_tokens(const GaussianAsset& asset);

// Binary asset file: ASCII header ("GSA 1", "count K", "sh_degree L",
// "end_header") followed by K little-endian float32 records in token layout.
void save_asset(const std::filesystem::path& path, const GaussianAsset& asset);
GaussianAsset load_asset(const std::filesystem::path& path);

} // namespace logasset
