// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/flowmatch.hpp"

#include "logasset/error.hpp"
#include "logasset/math.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

namespace logasset {

namespace {

void check_dims(const VecX& a, const VecX& b, const char* what) {
    if (a.size() != b.size()) {
        fail(ErrorCode::DimMismatch, std::string(what) + ": " + std::to_string(a.size()) + " vs " +
                                         std::to_string(b.size()));
    }
}

} // namespace

VecX ot_interpolate(const VecX& x0, const VecX& x1, double t) {
    check_dims(x0, x1, "ot_interpolate");
    return (1.0 - t) * x0 + t * x1;
}

FlowSample make_flow_sample(const VecX& x0, const VecX& x1, double t) {
    FlowSample s;
    s.x0 = x0;
    s.x1 = x1;
    s.t = t;
    s.xt = ot_interpolate(x0, x1, t);
    s.target_v = x1 - x0;
    return s;
}

VecX ConstantField::evaluate(const VecX& x, double, const Conditioning&) const {
    check_dims(x, v_, "ConstantField");
    return v_;
}

AnalyticGaussianOTField::AnalyticGaussianOTField(VecX mu0, double sigma0, VecX mu1, double sigma1)
    : mu0_(std::move(mu0)), mu1_(std::move(mu1)), ratio_(sigma1 / sigma0) {
    check_dims(mu0_, mu1_, "AnalyticGaussianOTField");
    if (!(sigma0 > 0.0) || !(sigma1 > 0.0)) {
        throw std::invalid_argument("AnalyticGaussianOTField: sigmas must be positive");
    }
}

VecX AnalyticGaussianOTField::evaluate(const VecX& x, double t, const Conditioning&) const {
    check_dims(x, mu0_, "AnalyticGaussianOTField");
    const VecX dmu = mu1_ - mu0_;
    if (ratio_ == 1.0) {
        return dmu;
    }
    const double s = 1.0 + t * (ratio_ - 1.0);
    return dmu + (ratio_ - 1.0) * (x - mu0_ - t * dmu) / s;
}

VecX AnalyticGaussianOTField::transport(const VecX& x0) const {
    check_dims(x0, mu0_, "AnalyticGaussianOTField");
    return mu1_ + ratio_ * (x0 - mu0_);
}

VecX ExponentialField::evaluate(const VecX& x, double, const Conditioning&) const { return x; }

VecX FunctionField::evaluate(const VecX& x, double t, const Conditioning& cond) const {
    VecX v = fn_(x, t, cond);
    check_dims(x, v, "FunctionField output");
    return v;
}

TabulatedField::TabulatedField(int dim, std::vector<float> offsets, std::vector<float> gains)
    : dim_(dim), knots_(0), offsets_(std::move(offsets)), gains_(std::move(gains)) {
    if (dim < 1 || offsets_.empty() || offsets_.size() % static_cast<std::size_t>(dim) != 0 ||
        gains_.size() != offsets_.size()) {
        fail(ErrorCode::DimMismatch, "tabulated field tables do not match dim " + std::to_string(dim));
    }
    knots_ = static_cast<int>(offsets_.size() / static_cast<std::size_t>(dim));
}

VecX TabulatedField::evaluate(const VecX& x, double t, const Conditioning&) const {
    if (x.size() != dim_) {
        fail(ErrorCode::DimMismatch, "tabulated field dim " + std::to_string(dim_) + ", state " +
                                         std::to_string(x.size()));
    }
    std::size_t k0 = 0;
    double frac = 0.0;
    if (knots_ > 1) {
        const double u = std::clamp(t, 0.0, 1.0) * (knots_ - 1);
        k0 = std::min(static_cast<std::size_t>(u), static_cast<std::size_t>(knots_ - 2));
        frac = u - static_cast<double>(k0);
    }
    const std::size_t k1 = knots_ > 1 ? k0 + 1 : k0;
    VecX v(dim_);
    for (int i = 0; i < dim_; ++i) {
        const std::size_t a = k0 * dim_ + i;
        const std::size_t b = k1 * dim_ + i;
        const double off = (1.0 - frac) * offsets_[a] + frac * offsets_[b];
        const double gain = (1.0 - frac) * gains_[a] + frac * gains_[b];
        v[i] = off + gain * x[i];
    }
    return v;
}

namespace {

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return __builtin_bswap32(v);
    }
    return v;
}

} // namespace

TabulatedField TabulatedField::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    std::string magic, dim_key, knots_key, end;
    long long dim = 0, knots = 0;
    std::string line;
    std::getline(in, magic);
    std::getline(in, line);
    std::istringstream(line) >> dim_key >> dim;
    std::getline(in, line);
    std::istringstream(line) >> knots_key >> knots;
    std::getline(in, end);
    if (!in || magic != "TVF 1" || dim_key != "dim" || knots_key != "knots" || end != "end_header" || dim < 1 ||
        knots < 1) {
        fail(ErrorCode::CorruptHeader, "bad tabulated field header in " + path.string());
    }
    const std::size_t n = static_cast<std::size_t>(dim * knots);
    std::vector<std::uint32_t> words(2 * n);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (static_cast<std::size_t>(in.gcount()) != words.size() * 4) {
        fail(ErrorCode::TruncatedPayload, "tabulated field payload too short in " + path.string());
    }
    std::vector<float> offsets(n), gains(n);
    for (std::size_t i = 0; i < n; ++i) {
        offsets[i] = std::bit_cast<float>(to_little(words[i]));
        gains[i] = std::bit_cast<float>(to_little(words[n + i]));
    }
    return TabulatedField(static_cast<int>(dim), std::move(offsets), std::move(gains));
}

void TabulatedField::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot open " + path.string());
    }
    out << "TVF 1\ndim " << dim_ << "\nknots " << knots_ << "\nend_header\n";
    auto put = [&](const std::vector<float>& v) {
        for (float f : v) {
            const std::uint32_t w = to_little(std::bit_cast<std::uint32_t>(f));
            out.write(reinterpret_cast<const char*>(&w), 4);
        }
    };
    put(offsets_);
    put(gains_);
}

double cfm_loss(const VelocityField& field, std::span<const ConditionedSample> batch) {
    if (batch.empty()) {
        fail(ErrorCode::EmptyViewSet, "cfm_loss needs a nonempty batch");
    }
    double total = 0.0;
    for (const auto& item : batch) {
        const FlowSample& s = item.sample;
        const VecX v = field.evaluate(s.xt, s.t, item.cond);
        const VecX target = s.x1 - s.x0;
        check_dims(v, target, "cfm_loss");
        total += (v - target).squaredNorm() / static_cast<double>(target.size());
    }
    return total / static_cast<double>(batch.size());
}

std::vector<ConditionedSample> sample_batch(std::span<const VecX> x0, std::span<const VecX> x1, std::uint64_t seed) {
    if (x0.size() != x1.size()) {
        fail(ErrorCode::DimMismatch, "sample_batch: endpoint counts differ");
    }
    Rng rng(seed);
    std::vector<ConditionedSample> out;
    out.reserve(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out.push_back({make_flow_sample(x0[i], x1[i], rng.uniform()), {}});
    }
    return out;
}

OdeMethod parse_ode_method(std::string_view name) {
    if (name == "euler") return OdeMethod::Euler;
    if (name == "heun") return OdeMethod::Heun;
    throw std::invalid_argument("unknown ODE method '" + std::string(name) + "'");
}

IntegrationResult integrate(const VelocityField& field, const VecX& x0, const Conditioning& cond, int n_steps,
                            OdeMethod method, bool keep_trajectory) {
    if (n_steps < 1) {
        throw std::invalid_argument("integrate: n_steps must be >= 1");
    }
    IntegrationResult r;
    r.x = x0;
    if (keep_trajectory) {
        r.trajectory.reserve(static_cast<std::size_t>(n_steps) + 1);
        r.trajectory.push_back(r.x);
    }
    const double h = 1.0 / n_steps;
    for (int k = 0; k < n_steps; ++k) {
        const double t0 = static_cast<double>(k) / n_steps;
        const double t1 = static_cast<double>(k + 1) / n_steps;
        const VecX v0 = field.evaluate(r.x, t0, cond);
        check_dims(r.x, v0, "velocity");
        if (method == OdeMethod::Euler) {
            r.x += h * v0;
        } else {
            const VecX pred = r.x + h * v0;
            const VecX v1 = field.evaluate(pred, t1, cond);
            r.x += 0.5 * h * (v0 + v1);
        }
        if (!r.x.allFinite()) {
            fail(ErrorCode::NonFiniteState, "state not finite after step " + std::to_string(k));
        }
        if (keep_trajectory) {
            r.trajectory.push_back(r.x);
        }
    }
    return r;
}

double convergence_order(OdeMethod method, std::span<const int> step_counts) {
    if (step_counts.size() < 2) {
        throw std::invalid_argument("convergence_order needs at least two step counts");
    }
    const ExponentialField field;
    const VecX x0 = VecX::Ones(1);
    const double exact = std::exp(1.0);
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (int n : step_counts) {
        const double err = std::abs(integrate(field, x0, {}, n, method).x[0] - exact);
        const double lx = std::log(1.0 / n);
        const double ly = std::log(err);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double m = static_cast<double>(step_counts.size());
    return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

ConditioningTensor build_conditioning(std::span<const InputView> inputs, std::span<const PinholeCamera> targets,
                                      int patch_size) {
    if (inputs.empty() || targets.empty()) {
        fail(ErrorCode::EmptyViewSet, "need at least one input and one target view");
    }
    if (patch_size < 1) {
        fail(ErrorCode::DimMismatch, "patch size must be positive");
    }
    const int h = inputs.front().camera.height;
    const int w = inputs.front().camera.width;
    auto check_size = [&](int cw, int ch, const std::string& what) {
        if (cw != w || ch != h) {
            fail(ErrorCode::DimMismatch, what + " is " + std::to_string(cw) + "x" + std::to_string(ch) +
                                             ", expected " + std::to_string(w) + "x" + std::to_string(h));
        }
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        check_size(inputs[i].camera.width, inputs[i].camera.height, "input camera " + std::to_string(i));
        check_size(inputs[i].image.width(), inputs[i].image.height(), "input image " + std::to_string(i));
        if (inputs[i].image.channels() != 3) {
            fail(ErrorCode::DimMismatch, "input image " + std::to_string(i) + " is not RGB");
        }
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        check_size(targets[i].width, targets[i].height, "target camera " + std::to_string(i));
    }
    if (h % patch_size != 0 || w % patch_size != 0) {
        fail(ErrorCode::DimMismatch, "view size not divisible by patch size " + std::to_string(patch_size));
    }

    ConditioningTensor ct;
    ct.views = static_cast<int>(inputs.size() + targets.size());
    ct.input_views = static_cast<int>(inputs.size());
    ct.height = h;
    ct.width = w;
    ct.patch_size = patch_size;
    ct.sequence_length = static_cast<std::size_t>(ct.views) * static_cast<std::size_t>(h / patch_size) *
                         static_cast<std::size_t>(w / patch_size);
    ct.values.assign(static_cast<std::size_t>(ct.views) * ct.channels() * h * w, 0.0f);

    auto fill_view = [&](int v, const PinholeCamera& cam, const Image* image) {
        const RayMap rays = plucker_map(cam);
        const int zc = ct.latent_channels;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (image != nullptr) {
                    for (int c = 0; c < 3; ++c) {
                        ct.values[ct.index(v, c, y, x)] = 2.0f * image->at(x, y, c) - 1.0f;
                    }
                }
                const Vec3& o = rays.origin(x, y);
                const Vec3& d = rays.direction(x, y);
                for (int c = 0; c < 3; ++c) {
                    ct.values[ct.index(v, zc + c, y, x)] = static_cast<float>(o[c]);
                    ct.values[ct.index(v, zc + 3 + c, y, x)] = static_cast<float>(d[c]);
                }
                ct.values[ct.index(v, zc + 6, y, x)] = image != nullptr ? 1.0f : 0.0f;
            }
        }
    };
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        fill_view(static_cast<int>(i), inputs[i].camera, &inputs[i].image);
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
        fill_view(static_cast<int>(inputs.size() + i), targets[i], nullptr);
    }
    return ct;
}

} // namespace logasset
