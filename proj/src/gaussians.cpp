// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/gaussians.hpp"

#include "logasset/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <thread>

namespace logasset {

namespace {

constexpr double kShC0 = 0.28209479177387814;
constexpr double kShC1 = 0.4886025119029199;
constexpr double kShC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                            0.5462742152960396};
constexpr double kShC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                            -0.4570457994644658, 1.445305721320277,  -0.5900435899266435};

void check_degree(int degree) {
    if (degree < 0 || degree > 3) {
        fail(ErrorCode::CoeffCountMismatch, "sh degree " + std::to_string(degree) + " outside 0..3");
    }
}

bool finite3(const std::array<float, 3>& v) {
    return std::isfinite(v[0]) && std::isfinite(v[1]) && std::isfinite(v[2]);
}

} // namespace

Vec3 Gaussian::scale() const {
    return {std::exp(static_cast<double>(log_scale[0])), std::exp(static_cast<double>(log_scale[1])),
            std::exp(static_cast<double>(log_scale[2]))};
}

Quat Gaussian::orientation() const {
    Quat q(rotation[0], rotation[1], rotation[2], rotation[3]);
    const double n = q.norm();
    if (n == 0.0) {
        return Quat::Identity();
    }
    return Quat(q.coeffs() / n);
}

double Gaussian::opacity() const { return 1.0 / (1.0 + std::exp(-static_cast<double>(opacity_logit))); }

Gaussian Gaussian::from_activated(const Vec3& mean, const Vec3& scale, const Quat& rot, double opacity,
                                  std::vector<float> sh) {
    Gaussian g;
    for (int i = 0; i < 3; ++i) {
        g.position[i] = static_cast<float>(mean[i]);
        g.log_scale[i] = static_cast<float>(std::log(scale[i]));
    }
    const Quat q = rot.normalized();
    g.rotation = {static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                  static_cast<float>(q.z())};
    if (opacity <= 0.0) {
        g.opacity_logit = -std::numeric_limits<float>::infinity();
    } else {
        const double a = std::min(opacity, 1.0 - 0x1.0p-24);
        g.opacity_logit = static_cast<float>(std::log(a / (1.0 - a)));
    }
    g.sh = std::move(sh);
    return g;
}

BoundingSphere GaussianAsset::bounding_sphere() const {
    BoundingSphere s;
    if (gaussians.empty()) {
        return s;
    }
    for (const auto& g : gaussians) {
        s.center += g.mean();
    }
    s.center /= static_cast<double>(gaussians.size());
    for (const auto& g : gaussians) {
        s.radius = std::max(s.radius, (g.mean() - s.center).norm());
    }
    return s;
}

void GaussianAsset::validate() const {
    check_degree(sh_degree);
    if (gaussians.empty()) {
        fail(ErrorCode::ShapeMismatch, "asset has no gaussians");
    }
    const std::size_t n_sh = 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree));
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const auto& g = gaussians[i];
        if (g.sh.size() != n_sh) {
            fail(ErrorCode::CoeffCountMismatch, "gaussian " + std::to_string(i) + " has " +
                                                    std::to_string(g.sh.size()) + " sh values, expected " +
                                                    std::to_string(n_sh));
        }
        const bool rot_ok = std::all_of(g.rotation.begin(), g.rotation.end(), [](float v) { return std::isfinite(v); });
        const bool sh_ok = std::all_of(g.sh.begin(), g.sh.end(), [](float v) { return std::isfinite(v); });
        const bool opacity_ok = std::isfinite(g.opacity_logit) || g.opacity_logit < 0.0f;
        if (!finite3(g.position) || !finite3(g.log_scale) || !rot_ok || !sh_ok || !opacity_ok ||
            std::isnan(g.opacity_logit)) {
            fail(ErrorCode::ShapeMismatch, "gaussian " + std::to_string(i) + " has non-finite parameters");
        }
    }
}

Mat3 covariance(const Gaussian& g) {
    const Mat3 r = g.orientation().toRotationMatrix();
    const Vec3 s = g.scale();
    return r * s.cwiseProduct(s).asDiagonal() * r.transpose();
}

std::optional<Splat2D> project_gaussian(const PinholeCamera& camera, const Gaussian& g, double near) {
    const Vec3 pc = camera.pose.apply(g.mean());
    if (!(pc.z() > near)) {
        return std::nullopt;
    }
    const double z = pc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << camera.fx / z, 0.0, -camera.fx * pc.x() / (z * z), 0.0, camera.fy / z, -camera.fy * pc.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> t = j * camera.pose.matrix();
    Splat2D s;
    s.mean = {camera.fx * pc.x() / z + camera.cx, camera.fy * pc.y() / z + camera.cy};
    s.cov = t * covariance(g) * t.transpose();
    s.cov(0, 1) = s.cov(1, 0) = 0.5 * (s.cov(0, 1) + s.cov(1, 0));
    s.depth = z;
    return s;
}

std::vector<double> sh_basis(const Vec3& dir, int degree) {
    check_degree(degree);
    std::vector<double> b;
    b.reserve(static_cast<std::size_t>(sh_coeff_count(degree)));
    b.push_back(kShC0);
    if (degree < 1) {
        return b;
    }
    const double x = dir.x();
    const double y = dir.y();
    const double z = dir.z();
    b.push_back(-kShC1 * y);
    b.push_back(kShC1 * z);
    b.push_back(-kShC1 * x);
    if (degree < 2) {
        return b;
    }
    const double xx = x * x;
    const double yy = y * y;
    const double zz = z * z;
    b.push_back(kShC2[0] * x * y);
    b.push_back(kShC2[1] * y * z);
    b.push_back(kShC2[2] * (2.0 * zz - xx - yy));
    b.push_back(kShC2[3] * x * z);
    b.push_back(kShC2[4] * (xx - yy));
    if (degree < 3) {
        return b;
    }
    b.push_back(kShC3[0] * y * (3.0 * xx - yy));
    b.push_back(kShC3[1] * x * y * z);
    b.push_back(kShC3[2] * y * (4.0 * zz - xx - yy));
    b.push_back(kShC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy));
    b.push_back(kShC3[4] * x * (4.0 * zz - xx - yy));
    b.push_back(kShC3[5] * z * (xx - yy));
    b.push_back(kShC3[6] * x * (xx - 3.0 * yy));
    return b;
}

Vec3 sh_eval(std::span<const float> coeffs, const Vec3& view_dir, int degree) {
    check_degree(degree);
    const std::size_t n = static_cast<std::size_t>(sh_coeff_count(degree));
    if (coeffs.size() != 3 * n) {
        fail(ErrorCode::CoeffCountMismatch,
             "expected " + std::to_string(3 * n) + " sh values, got " + std::to_string(coeffs.size()));
    }
    const std::vector<double> basis = sh_basis(view_dir, degree);
    Vec3 rgb = Vec3::Constant(0.5);
    for (std::size_t k = 0; k < n; ++k) {
        for (int c = 0; c < 3; ++c) {
            rgb[c] += basis[k] * static_cast<double>(coeffs[k * 3 + c]);
        }
    }
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

namespace {

struct PreparedSplat {
    Vec2 mean;
    double conic_a = 0.0;
    double conic_b = 0.0;
    double conic_c = 0.0;
    double opacity = 0.0;
    double depth = 0.0;
    Vec3 color;
    double radius = 0.0;
    std::size_t source = 0;
};

// Strict weak order on the stored parameters, used to break depth ties so
// that the composite never depends on the input order.
bool raw_less(const Gaussian& a, const Gaussian& b) {
    if (a.position != b.position) return a.position < b.position;
    if (a.log_scale != b.log_scale) return a.log_scale < b.log_scale;
    if (a.rotation != b.rotation) return a.rotation < b.rotation;
    if (a.opacity_logit != b.opacity_logit) return a.opacity_logit < b.opacity_logit;
    return a.sh < b.sh;
}

} // namespace

RenderedImage render(const GaussianAsset& asset, const PinholeCamera& camera, const Vec3& background,
                     const RenderOptions& options) {
    camera.validate();
    const int width = camera.width;
    const int height = camera.height;
    RenderedImage out;
    out.rgb = Image(width, height, 3);
    out.alpha = Image(width, height, 1);

    const Vec3 center = camera.center();
    std::vector<PreparedSplat> splats;
    splats.reserve(asset.gaussians.size());
    for (std::size_t i = 0; i < asset.gaussians.size(); ++i) {
        const Gaussian& g = asset.gaussians[i];
        const double opacity = g.opacity();
        if (!(opacity > 0.0)) {
            continue;
        }
        const auto proj = project_gaussian(camera, g, options.near);
        if (!proj) {
            ++out.culled_splats;
            continue;
        }
        const double a = proj->cov(0, 0);
        const double b = proj->cov(0, 1);
        const double c = proj->cov(1, 1);
        const double mid = 0.5 * (a + c);
        const double disc = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
        const double lmax = mid + disc;
        const double det = a * c - b * b;
        const double lmin = lmax > 0.0 ? det / lmax : 0.0;
        if (!(lmin > 0.0) || !std::isfinite(lmax) || lmax / lmin > options.max_condition) {
            ++out.degenerate_splats;
            continue;
        }
        PreparedSplat s;
        s.mean = proj->mean;
        s.conic_a = c / det;
        s.conic_b = -b / det;
        s.conic_c = a / det;
        s.opacity = opacity;
        s.depth = proj->depth;
        s.color = sh_eval(g.sh, (g.mean() - center).normalized(), asset.sh_degree);
        s.radius = options.cutoff_sigma * std::sqrt(lmax);
        s.source = i;
        splats.push_back(s);
    }
    std::sort(splats.begin(), splats.end(), [&](const PreparedSplat& x, const PreparedSplat& y) {
        if (x.depth != y.depth) return x.depth < y.depth;
        return raw_less(asset.gaussians[x.source], asset.gaussians[y.source]);
    });

    const int ts = std::max(1, options.tile_size);
    const int tiles_x = (width + ts - 1) / ts;
    const int tiles_y = (height + ts - 1) / ts;
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t k = 0; k < splats.size(); ++k) {
        const auto& s = splats[k];
        // Pixel centers sit at i + 0.5.
        const double fx0 = std::ceil(s.mean.x() - s.radius - 0.5);
        const double fx1 = std::floor(s.mean.x() + s.radius - 0.5);
        const double fy0 = std::ceil(s.mean.y() - s.radius - 0.5);
        const double fy1 = std::floor(s.mean.y() + s.radius - 0.5);
        if (fx1 < 0.0 || fy1 < 0.0 || fx0 > width - 1 || fy0 > height - 1) {
            continue;
        }
        const int px0 = static_cast<int>(std::max(0.0, fx0));
        const int px1 = static_cast<int>(std::min<double>(width - 1, fx1));
        const int py0 = static_cast<int>(std::max(0.0, fy0));
        const int py1 = static_cast<int>(std::min<double>(height - 1, fy1));
        for (int ty = py0 / ts; ty <= py1 / ts; ++ty) {
            for (int tx = px0 / ts; tx <= px1 / ts; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
            }
        }
    }

    const double cutoff2 = options.cutoff_sigma * options.cutoff_sigma;
    auto shade_tile = [&](int tile) {
        const int tx = tile % tiles_x;
        const int ty = tile / tiles_x;
        const auto& bin = bins[static_cast<std::size_t>(tile)];
        for (int y = ty * ts; y < std::min(height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(width, (tx + 1) * ts); ++x) {
                const double px = x + 0.5;
                const double py = y + 0.5;
                Vec3 acc = Vec3::Zero();
                double trans = 1.0;
                for (const std::uint32_t k : bin) {
                    const auto& s = splats[k];
                    const double dx = px - s.mean.x();
                    const double dy = py - s.mean.y();
                    const double m2 = s.conic_a * dx * dx + 2.0 * s.conic_b * dx * dy + s.conic_c * dy * dy;
                    if (m2 > cutoff2) {
                        continue;
                    }
                    const double w = std::clamp(s.opacity * std::exp(-0.5 * m2), 0.0, options.max_weight);
                    acc += s.color * (w * trans);
                    trans *= 1.0 - w;
                    if (trans < options.min_transmittance) {
                        break;
                    }
                }
                const Vec3 rgb = (acc + trans * background).cwiseMax(0.0).cwiseMin(1.0);
                for (int c = 0; c < 3; ++c) {
                    out.rgb.at(x, y, c) = static_cast<float>(rgb[c]);
                }
                out.alpha.at(x, y, 0) = static_cast<float>(std::clamp(1.0 - trans, 0.0, 1.0));
            }
        }
    };

    const int n_tiles = tiles_x * tiles_y;
    int n_threads = options.threads > 0 ? options.threads : static_cast<int>(std::thread::hardware_concurrency());
    n_threads = std::clamp(n_threads, 1, std::max(1, n_tiles));
    if (n_threads == 1) {
        for (int t = 0; t < n_tiles; ++t) {
            shade_tile(t);
        }
    } else {
        std::vector<std::thread> workers;
        workers.reserve(static_cast<std::size_t>(n_threads));
        for (int w = 0; w < n_threads; ++w) {
            workers.emplace_back([&, w] {
                for (int t = w; t < n_tiles; t += n_threads) {
                    shade_tile(t);
                }
            });
        }
        for (auto& th : workers) {
            th.join();
        }
    }
    return out;
}

namespace {

// Fixed, well-spread directions used to fit the per-band SH rotation.
std::vector<Vec3> fit_directions() {
    std::vector<Vec3> dirs;
    constexpr int n = 48;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (2.0 * i + 1.0) / n;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = golden * i;
        dirs.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
    }
    return dirs;
}

// Matrix M with coefficients' = M * coefficients for each SH band under
// f'(d) = f(R^T d). Bands are rotation-closed, so the least-squares fit over
// sample directions is exact up to rounding.
Eigen::MatrixXd sh_rotation(const Mat3& r, int degree) {
    const int n = sh_coeff_count(degree);
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    m(0, 0) = 1.0;
    const auto dirs = fit_directions();
    const int rows = static_cast<int>(dirs.size());
    Eigen::MatrixXd a(rows, n);
    Eigen::MatrixXd b(rows, n);
    for (int k = 0; k < rows; ++k) {
        const auto ya = sh_basis(dirs[static_cast<std::size_t>(k)], degree);
        const auto yb = sh_basis(r.transpose() * dirs[static_cast<std::size_t>(k)], degree);
        for (int j = 0; j < n; ++j) {
            a(k, j) = ya[static_cast<std::size_t>(j)];
            b(k, j) = yb[static_cast<std::size_t>(j)];
        }
    }
    for (int l = 1; l <= degree; ++l) {
        const int off = l * l;
        const int size = 2 * l + 1;
        const Eigen::MatrixXd al = a.middleCols(off, size);
        const Eigen::MatrixXd bl = b.middleCols(off, size);
        m.block(off, off, size, size) = al.colPivHouseholderQr().solve(bl);
    }
    return m;
}

} // namespace

GaussianAsset transform_asset(const GaussianAsset& asset, const RigidTransform& transform) {
    check_degree(asset.sh_degree);
    const Mat3 r = transform.matrix();
    const int n = sh_coeff_count(asset.sh_degree);
    const Eigen::MatrixXd m = sh_rotation(r, asset.sh_degree);
    GaussianAsset out;
    out.sh_degree = asset.sh_degree;
    out.gaussians.reserve(asset.gaussians.size());
    for (const auto& g : asset.gaussians) {
        Gaussian h = g;
        const Vec3 p = transform.apply(g.mean());
        const Quat q = (transform.rotation * g.orientation()).normalized();
        for (int i = 0; i < 3; ++i) {
            h.position[i] = static_cast<float>(p[i]);
        }
        h.rotation = {static_cast<float>(q.w()), static_cast<float>(q.x()), static_cast<float>(q.y()),
                      static_cast<float>(q.z())};
        if (static_cast<int>(g.sh.size()) == 3 * n && n > 1) {
            for (int c = 0; c < 3; ++c) {
                Eigen::VectorXd v(n);
                for (int k = 0; k < n; ++k) {
                    v[k] = g.sh[static_cast<std::size_t>(k * 3 + c)];
                }
                const Eigen::VectorXd w = m * v;
                for (int k = 1; k < n; ++k) {
                    h.sh[static_cast<std::size_t>(k * 3 + c)] = static_cast<float>(w[k]);
                }
            }
        }
        out.gaussians.push_back(std::move(h));
    }
    return out;
}

namespace {

void write_record(const Gaussian& g, float* dst) {
    std::copy(g.position.begin(), g.position.end(), dst);
    std::copy(g.log_scale.begin(), g.log_scale.end(), dst + 3);
    std::copy(g.rotation.begin(), g.rotation.end(), dst + 6);
    dst[10] = g.opacity_logit;
    std::copy(g.sh.begin(), g.sh.end(), dst + 11);
}

Gaussian read_record(const float* src, int sh_degree) {
    Gaussian g;
    std::copy(src, src + 3, g.position.begin());
    std::copy(src + 3, src + 6, g.log_scale.begin());
    std::copy(src + 6, src + 10, g.rotation.begin());
    g.opacity_logit = src[10];
    g.sh.assign(src + 11, src + 11 + 3 * sh_coeff_count(sh_degree));
    return g;
}

std::uint32_t to_little(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return __builtin_bswap32(v);
    }
    return v;
}

} // namespace

GaussianAsset decode_tokens(std::span<const std::vector<float>> blocks, int sh_degree) {
    check_degree(sh_degree);
    if (blocks.empty()) {
        fail(ErrorCode::BlockSizeMismatch, "no token blocks");
    }
    const std::size_t stride = static_cast<std::size_t>(gaussian_stride(sh_degree));
    const std::size_t expected = stride * kGaussiansPerToken;
    GaussianAsset asset;
    asset.sh_degree = sh_degree;
    asset.gaussians.reserve(blocks.size() * kGaussiansPerToken);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (blocks[b].size() != expected) {
            fail(ErrorCode::BlockSizeMismatch, "block " + std::to_string(b) + " has " +
                                                   std::to_string(blocks[b].size()) + " values, expected " +
                                                   std::to_string(expected));
        }
        for (std::size_t k = 0; k < static_cast<std::size_t>(kGaussiansPerToken); ++k) {
            asset.gaussians.push_back(read_record(blocks[b].data() + k * stride, sh_degree));
        }
    }
    return asset;
}

std::vector<std::vector<float>> encode_tokens(const GaussianAsset& asset) {
    asset.validate();
    if (asset.size() % kGaussiansPerToken != 0) {
        fail(ErrorCode::BlockSizeMismatch,
             "asset size " + std::to_string(asset.size()) + " is not a multiple of " +
                 std::to_string(kGaussiansPerToken));
    }
    const std::size_t stride = static_cast<std::size_t>(gaussian_stride(asset.sh_degree));
    std::vector<std::vector<float>> blocks(asset.size() / kGaussiansPerToken,
                                           std::vector<float>(stride * kGaussiansPerToken));
    for (std::size_t i = 0; i < asset.size(); ++i) {
        write_record(asset.gaussians[i], blocks[i / kGaussiansPerToken].data() + (i % kGaussiansPerToken) * stride);
    }
    return blocks;
}

void save_asset(const std::filesystem::path& path, const GaussianAsset& asset) {
    asset.validate();
    const std::size_t stride = static_cast<std::size_t>(gaussian_stride(asset.sh_degree));
    std::vector<float> payload(stride * asset.size());
    for (std::size_t i = 0; i < asset.size(); ++i) {
        write_record(asset.gaussians[i], payload.data() + i * stride);
    }
    std::vector<std::uint32_t> words(payload.size());
    for (std::size_t i = 0; i < payload.size(); ++i) {
        words[i] = to_little(std::bit_cast<std::uint32_t>(payload[i]));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        fail(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    }
    out << "GSA 1\ncount " << asset.size() << "\nsh_degree " << asset.sh_degree << "\nend_header\n";
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!out) {
        fail(ErrorCode::IoError, "write failed for " + path.string());
    }
}

GaussianAsset load_asset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    std::string line;
    auto expect_line = [&](const std::string& key) -> std::string {
        if (!std::getline(in, line)) {
            fail(ErrorCode::CorruptHeader, "header ends before '" + key + "'");
        }
        if (line.rfind(key, 0) != 0) {
            fail(ErrorCode::CorruptHeader, "expected '" + key + "', got '" + line + "'");
        }
        return line.substr(key.size());
    };
    if (expect_line("GSA") != " 1") {
        fail(ErrorCode::CorruptHeader, "unsupported version line '" + line + "'");
    }
    auto parse_int = [&](const std::string& text, const char* what) {
        std::istringstream ss(text);
        long long v = -1;
        char extra = 0;
        if (!(ss >> v) || (ss >> extra) || v < 0) {
            fail(ErrorCode::CorruptHeader, std::string("bad ") + what + " '" + text + "'");
        }
        return v;
    };
    const long long count = parse_int(expect_line("count "), "count");
    const long long degree = parse_int(expect_line("sh_degree "), "sh_degree");
    if (expect_line("end_header") != "") {
        fail(ErrorCode::CorruptHeader, "trailing text after end_header");
    }
    if (count < 1 || degree > 3) {
        fail(ErrorCode::CorruptHeader, "count must be >= 1 and sh_degree <= 3");
    }
    const std::size_t stride = static_cast<std::size_t>(gaussian_stride(static_cast<int>(degree)));
    const std::size_t n_words = stride * static_cast<std::size_t>(count);
    std::vector<std::uint32_t> words(n_words);
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(n_words * 4));
    if (static_cast<std::size_t>(in.gcount()) != n_words * 4) {
        fail(ErrorCode::TruncatedPayload, "payload holds " + std::to_string(in.gcount()) + " of " +
                                              std::to_string(n_words * 4) + " bytes");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        fail(ErrorCode::CorruptHeader, "payload is longer than count " + std::to_string(count) + " implies");
    }
    std::vector<float> payload(n_words);
    for (std::size_t i = 0; i < n_words; ++i) {
        payload[i] = std::bit_cast<float>(to_little(words[i]));
    }
    GaussianAsset asset;
    asset.sh_degree = static_cast<int>(degree);
    asset.gaussians.reserve(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < static_cast<std::size_t>(count); ++i) {
        asset.gaussians.push_back(read_record(payload.data() + i * stride, asset.sh_degree));
    }
    return asset;
}

} // namespace logasset
