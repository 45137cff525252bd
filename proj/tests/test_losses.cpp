// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/error.hpp"
#include "logasset/losses.hpp"

#include <gtest/gtest.h>

using namespace logasset;

namespace {

Image random_image(Rng& rng, int w, int h, int c = 3) {
    Image img(w, h, c);
    for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
    return img;
}

// Direct 2D evaluation: Gaussian weights over the taps that fall inside the
// image, normalized by their sum.
double reference_ssim(const Image& a, const Image& b) {
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double total = 0.0;
    for (int ch = 0; ch < a.channels(); ++ch)
        for (int y = 0; y < a.height(); ++y)
            for (int x = 0; x < a.width(); ++x) {
                double sw = 0, ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int dy = -5; dy <= 5; ++dy)
                    for (int dx = -5; dx <= 5; ++dx) {
                        const int u = x + dx, v = y + dy;
                        if (u < 0 || v < 0 || u >= a.width() || v >= a.height()) continue;
                        const double w = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
                        const double p = a.at(u, v, ch), q = b.at(u, v, ch);
                        sw += w;
                        ma += w * p;
                        mb += w * q;
                        saa += w * p * p;
                        sbb += w * q * q;
                        sab += w * p * q;
                    }
                ma /= sw;
                mb /= sw;
                const double va = saa / sw - ma * ma, vb = sbb / sw - mb * mb, cov = sab / sw - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
    return total / static_cast<double>(a.size());
}

} // namespace

TEST(Losses, IdenticalImages) {
    Rng rng(30);
    const Image a = random_image(rng, 20, 13);
    EXPECT_EQ(l1(a, a), 0.0);
    EXPECT_EQ(ssim(a, a), 1.0);
    EXPECT_EQ(psnr(a, a), kPsnrCap);
}

TEST(Losses, ConstantOffset) {
    Image a(16, 16, 3, 0.25f), b(16, 16, 3);
    for (std::size_t i = 0; i < b.data().size(); ++i) b.data()[i] = a.data()[i] + 0.1f;
    const double d = static_cast<double>(0.25f + 0.1f) - 0.25;
    EXPECT_NEAR(mse(a, b), d * d, 1e-15);
    EXPECT_NEAR(psnr(a, b), 10.0 * std::log10(1.0 / (d * d)), 1e-9);
    EXPECT_NEAR(psnr(a, b), 20.0, 1e-5);
    EXPECT_NEAR(l1(a, b), d, 1e-12);
}

TEST(Losses, SsimMatchesReference) {
    Rng rng(31);
    for (int i = 0; i < 10; ++i) {
        const Image a = random_image(rng, 8, 8);
        Image b = a;
        for (auto& v : b.data()) v = std::clamp(v + static_cast<float>(0.2 * rng.normal()), 0.0f, 1.0f);
        EXPECT_NEAR(ssim(a, b), reference_ssim(a, b), 1e-9);
    }
    const Image big = random_image(rng, 23, 17, 1);
    const Image other = random_image(rng, 23, 17, 1);
    EXPECT_NEAR(ssim(big, other), reference_ssim(big, other), 1e-9);
}

TEST(Losses, SsimShiftedLowerThanIdentical) {
    Rng rng(32);
    for (int i = 0; i < 10; ++i) {
        const Image a = random_image(rng, 8, 8);
        Image shifted(8, 8, 3);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                for (int c = 0; c < 3; ++c) shifted.at(x, y, c) = a.at((x + 1) % 8, y, c);
        EXPECT_LT(ssim(a, shifted), ssim(a, a));
        EXPECT_LT(reference_ssim(a, shifted), reference_ssim(a, a) + 1e-12);
        EXPECT_GE(ssim(a, shifted), -1.0);
    }
}

TEST(Losses, ShapeMismatch) {
    const Image a(4, 4, 3), b(4, 5, 3), c(4, 4, 1);
    for (const auto& fn : std::vector<std::function<double()>>{[&] { return l1(a, b); }, [&] { return mse(a, c); },
                                                              [&] { return psnr(a, b); }, [&] { return ssim(a, c); },
                                                              [&] { return ssim(Image{}, Image{}); }}) {
        try {
            fn();
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
        }
    }
}
