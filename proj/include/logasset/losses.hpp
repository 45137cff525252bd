// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/gaussians.hpp"
#include "logasset/image.hpp"

#include <span>

namespace logasset {

// All image metrics expect equal shapes and throw ShapeMismatch otherwise.
// Means are taken over every pixel and channel.
double l1(const Image& a, const Image& b);
double mse(const Image& a, const Image& b);

inline constexpr double kPsnrCap = 100.0;

// 10 log10(1 / MSE) for [0, 1] images, capped when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

// Gaussian-window SSIM (11 x 11, sigma 1.5, C1 = 0.01^2, C2 = 0.03^2). The
// window is truncated at the image border and renormalized.
double ssim(const Image& a, const Image& b);

struct ReconWeights {
    double l1 = 0.8;
    double ssim = 0.2;
};

struct TargetView {
    PinholeCamera camera;
    Image image;
};

// Mean over views of l1 * L1 + ssim * (1 - SSIM) between render and target.
double recon_loss(const GaussianAsset& asset, std::span<const TargetView> views, const Vec3& background,
                  const ReconWeights& weights = {}, const RenderOptions& options = {});

} // namespace logasset
