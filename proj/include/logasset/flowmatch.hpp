// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/camera.hpp"
#include "logasset/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace logasset {

using VecX = Eigen::VectorXd;

struct FlowSample {
    VecX x0;
    VecX x1;
    double t = 0.0;
    VecX xt;
    VecX target_v;
};

// xt = (1 - t) x0 + t x1. Throws DimMismatch.
VecX ot_interpolate(const VecX& x0, const VecX& x1, double t);
FlowSample make_flow_sample(const VecX& x0, const VecX& x1, double t);

// Opaque conditioning passed through to fields. Most fields ignore it.
struct Conditioning {
    std::vector<float> values;
};

class VelocityField {
public:
    virtual ~VelocityField() = default;
    // Output dimension must equal x.size().
    [[nodiscard]] virtual VecX evaluate(const VecX& x, double t, const Conditioning& cond) const = 0;
};

class ConstantField final : public VelocityField {
public:
    explicit ConstantField(VecX v) : v_(std::move(v)) {}
    [[nodiscard]] VecX evaluate(const VecX& x, double t, const Conditioning& cond) const override;

private:
    VecX v_;
};

// Velocity of the monotone (optimal-transport) coupling between two
// isotropic Gaussians N(mu0, sigma0^2 I) and N(mu1, sigma1^2 I). With equal
// sigmas this is the constant field mu1 - mu0.
class AnalyticGaussianOTField final : public VelocityField {
public:
    AnalyticGaussianOTField(VecX mu0, double sigma0, VecX mu1, double sigma1);
    [[nodiscard]] VecX evaluate(const VecX& x, double t, const Conditioning& cond) const override;
    // Closed-form endpoint of the flow started at x0.
    [[nodiscard]] VecX transport(const VecX& x0) const;

private:
    VecX mu0_;
    VecX mu1_;
    double ratio_;
};

// v(x, t) = x.
class ExponentialField final : public VelocityField {
public:
    [[nodiscard]] VecX evaluate(const VecX& x, double t, const Conditioning& cond) const override;
};

class FunctionField final : public VelocityField {
public:
    using Fn = std::function<VecX(const VecX&, double, const Conditioning&)>;
    explicit FunctionField(Fn fn) : fn_(std::move(fn)) {}
    [[nodiscard]] VecX evaluate(const VecX& x, double t, const Conditioning& cond) const override;

private:
    Fn fn_;
};

// Affine field v = a(t) + b(t) * x (elementwise), with a and b tabulated on a
// uniform grid of knots over [0, 1] and linearly interpolated in t.
//
// File layout: ASCII header lines "TVF 1", "dim <D>", "knots <N>",
// "end_header", then N*D little-endian float32 offsets followed by N*D gains,
// both knot-major.
class TabulatedField final : public VelocityField {
public:
    TabulatedField(int dim, std::vector<float> offsets, std::vector<float> gains);
    static TabulatedField load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    [[nodiscard]] VecX evaluate(const VecX& x, double t, const Conditioning& cond) const override;
    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] int knots() const noexcept { return knots_; }

private:
    int dim_;
    int knots_;
    std::vector<float> offsets_;
    std::vector<float> gains_;
};

struct ConditionedSample {
    FlowSample sample;
    Conditioning cond;
};

// Mean over the batch of the per-dimension mean squared error between the
// field and x1 - x0. Throws EmptyViewSet for an empty batch.
double cfm_loss(const VelocityField& field, std::span<const ConditionedSample> batch);

// Batch of samples with t ~ U[0, 1] and the given endpoints, seeded.
std::vector<ConditionedSample> sample_batch(std::span<const VecX> x0, std::span<const VecX> x1, std::uint64_t seed);

enum class OdeMethod { Euler, Heun };
OdeMethod parse_ode_method(std::string_view name);

struct IntegrationResult {
    VecX x;
    std::vector<VecX> trajectory; // states at t_k = k / n, filled on request
};

// Fixed-step integration from t = 0 to t = 1. Throws NonFiniteState naming
// the step at which the state stopped being finite.
IntegrationResult integrate(const VelocityField& field, const VecX& x0, const Conditioning& cond, int n_steps,
                            OdeMethod method, bool keep_trajectory = false);

// Least-squares slope of log(error) against log(step size) over the given
// step counts, for the scalar problem x' = x, x(0) = 1.
double convergence_order(OdeMethod method, std::span<const int> step_counts);

struct InputView {
    Image image;
    PinholeCamera camera;
};

// Per-view channel stack [z(3) | plucker o(3), d(3) | indicator(1)], stored
// planar: channel c of view v is values[((v * channels) + c) * H * W ...].
struct ConditioningTensor {
    int views = 0;
    int input_views = 0;
    int height = 0;
    int width = 0;
    int latent_channels = 3;
    int patch_size = 0;
    std::size_t sequence_length = 0; // (v_in + v_out) * (H / p) * (W / p)
    std::vector<float> values;

    [[nodiscard]] int channels() const noexcept { return latent_channels + 7; }
    [[nodiscard]] float at(int view, int channel, int y, int x) const {
        return values[index(view, channel, y, x)];
    }
    [[nodiscard]] std::size_t index(int view, int channel, int y, int x) const {
        return ((static_cast<std::size_t>(view) * channels() + channel) * height + y) * width + x;
    }
};

// Inputs come first, then targets. z = 2 * rgb - 1 on inputs and 0 on
// targets. Throws EmptyViewSet and DimMismatch (unequal sizes, or sizes not
// divisible by the patch size).
ConditioningTensor build_conditioning(std::span<const InputView> inputs, std::span<const PinholeCamera> targets,
                                      int patch_size = 8);

} // namespace logasset
