// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/losses.hpp"

#include "logasset/error.hpp"

#include <array>
#include <cmath>
#include <string>

namespace logasset {

namespace {

void check_shapes(const Image& a, const Image& b) {
    if (a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels()) {
        fail(ErrorCode::ShapeMismatch, std::to_string(a.width()) + "x" + std::to_string(a.height()) + "x" +
                                           std::to_string(a.channels()) + " vs " + std::to_string(b.width()) + "x" +
                                           std::to_string(b.height()) + "x" + std::to_string(b.channels()));
    }
    if (a.empty()) {
        fail(ErrorCode::ShapeMismatch, "empty image");
    }
}

constexpr int kRadius = 5;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, 2 * kRadius + 1> window() {
    std::array<double, 2 * kRadius + 1> w{};
    for (int i = -kRadius; i <= kRadius; ++i) {
        w[static_cast<std::size_t>(i + kRadius)] = std::exp(-0.5 * i * i / (kSigma * kSigma));
    }
    return w;
}

// Separable normalized blur of one plane; truncation renormalizes per axis,
// which equals renormalizing the separable 2D window.
std::vector<double> blur(const std::vector<double>& src, int w, int h) {
    static const auto win = window();
    std::vector<double> tmp(src.size());
    std::vector<double> out(src.size());
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            double ws = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int xx = x + k;
                if (xx < 0 || xx >= w) continue;
                const double wk = win[static_cast<std::size_t>(k + kRadius)];
                s += wk * src[static_cast<std::size_t>(y) * w + xx];
                ws += wk;
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s / ws;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            double ws = 0.0;
            for (int k = -kRadius; k <= kRadius; ++k) {
                const int yy = y + k;
                if (yy < 0 || yy >= h) continue;
                const double wk = win[static_cast<std::size_t>(k + kRadius)];
                s += wk * tmp[static_cast<std::size_t>(yy) * w + x];
                ws += wk;
            }
            out[static_cast<std::size_t>(y) * w + x] = s / ws;
        }
    }
    return out;
}

} // namespace

double l1(const Image& a, const Image& b) {
    check_shapes(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += std::abs(static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]));
    }
    return s / static_cast<double>(a.size());
}

double mse(const Image& a, const Image& b) {
    check_shapes(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
    const double m = mse(a, b);
    if (m < 1e-10) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / m));
}

double ssim(const Image& a, const Image& b) {
    check_shapes(a, b);
    const int w = a.width();
    const int h = a.height();
    const int nc = a.channels();
    const std::size_t n = static_cast<std::size_t>(w) * h;
    double total = 0.0;
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (int c = 0; c < nc; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = a.data()[i * nc + c];
            y[i] = b.data()[i * nc + c];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = blur(x, w, h);
        const auto my = blur(y, w, h);
        const auto sxx = blur(xx, w, h);
        const auto syy = blur(yy, w, h);
        const auto sxy = blur(xy, w, h);
        for (std::size_t i = 0; i < n; ++i) {
            const double vx = sxx[i] - mx[i] * mx[i];
            const double vy = syy[i] - my[i] * my[i];
            const double cxy = sxy[i] - mx[i] * my[i];
            const double num = (2.0 * mx[i] * my[i] + kC1) * (2.0 * cxy + kC2);
            const double den = (mx[i] * mx[i] + my[i] * my[i] + kC1) * (vx + vy + kC2);
            total += num / den;
        }
    }
    return total / static_cast<double>(n * nc);
}

double recon_loss(const GaussianAsset& asset, std::span<const TargetView> views, const Vec3& background,
                  const ReconWeights& weights, const RenderOptions& options) {
    if (views.empty()) {
        fail(ErrorCode::EmptyViewSet, "recon_loss needs at least one view");
    }
    double total = 0.0;
    for (const auto& v : views) {
        const RenderedImage r = render(asset, v.camera, background, options);
        total += weights.l1 * l1(r.rgb, v.image) + weights.ssim * (1.0 - ssim(r.rgb, v.image));
    }
    return total / static_cast<double>(views.size());
}

} // namespace logasset
