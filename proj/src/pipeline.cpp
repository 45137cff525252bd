// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/pipeline.hpp"

#include "logasset/error.hpp"
#include "logasset/metrics.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

namespace logasset {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Enum names

std::string_view to_string(GeneratorMode mode) noexcept {
    switch (mode) {
    case GeneratorMode::SolidColor: return "solid_color";
    case GeneratorMode::CopyNearest: return "copy_nearest";
    case GeneratorMode::ExternalDir: return "external_dir";
    }
    return "solid_color";
}

GeneratorMode parse_generator_mode(std::string_view name) {
    if (name == "solid_color" || name == "solid") return GeneratorMode::SolidColor;
    if (name == "copy_nearest") return GeneratorMode::CopyNearest;
    if (name == "external_dir") return GeneratorMode::ExternalDir;
    fail(ErrorCode::InvalidConfig, "unknown generator mode '" + std::string(name) + "'");
}

std::string_view to_string(LiftMode mode) noexcept {
    return mode == LiftMode::FitFree ? "fit_free" : "external_asset";
}

LiftMode parse_lift_mode(std::string_view name) {
    if (name == "fit_free") return LiftMode::FitFree;
    if (name == "external_asset") return LiftMode::ExternalAsset;
    fail(ErrorCode::InvalidConfig, "unknown lift mode '" + std::string(name) + "'");
}

std::string_view to_string(Stage stage) noexcept {
    switch (stage) {
    case Stage::Ingested: return "ingested";
    case Stage::Selected: return "selected";
    case Stage::Generated: return "generated";
    case Stage::Lifted: return "lifted";
    case Stage::Evaluated: return "evaluated";
    }
    return "ingested";
}

Stage parse_stage(std::string_view name) {
    for (const Stage s : {Stage::Ingested, Stage::Selected, Stage::Generated, Stage::Lifted, Stage::Evaluated}) {
        if (to_string(s) == name) return s;
    }
    fail(ErrorCode::SchemaViolation, "unknown stage '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Config

namespace {

// Reads keys from one JSON object and rejects any key it was not asked for.
class ConfigReader {
public:
    ConfigReader(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) {
            fail(ErrorCode::InvalidConfig, where() + ": expected object");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        const auto it = doc_.find(key);
        if (it == doc_.end()) return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            fail(ErrorCode::InvalidConfig, where() + "." + key + ": wrong type");
        }
    }

    ConfigReader child(const char* key) {
        seen_.insert(key);
        const auto it = doc_.find(key);
        static const json empty = json::object();
        return ConfigReader(it == doc_.end() ? empty : *it, where() + "." + key);
    }

    void finish() const {
        for (const auto& [key, value] : doc_.items()) {
            if (!seen_.contains(key)) {
                fail(ErrorCode::InvalidConfig, "unknown config key '" + where() + "." + key + "'");
            }
        }
    }

private:
    [[nodiscard]] std::string where() const { return path_; }

    const json& doc_;
    std::string path_;
    std::set<std::string, std::less<>> seen_;
};

} // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
    PipelineConfig c;
    ConfigReader root(doc, "config");
    {
        auto r = root.child("filter");
        r.get("min_px", c.filter.min_px);
        r.get("border_px", c.filter.border_px);
        r.get("d_min", c.filter.d_min);
        r.get("d_max", c.filter.d_max);
        r.get("max_occlusion", c.filter.max_occlusion);
        r.get("min_mask_iou", c.filter.min_mask_iou);
        r.finish();
    }
    {
        auto r = root.child("fps");
        r.get("k_max", c.fps.k_max);
        r.get("min_angle_deg", c.fps.min_angle_deg);
        r.finish();
    }
    {
        auto r = root.child("crop");
        r.get("out_size", c.crop.out_size);
        r.get("fov_margin", c.crop.fov_margin);
        r.get("min_fov_deg", c.crop.min_fov_deg);
        r.get("max_fov_deg", c.crop.max_fov_deg);
        r.finish();
    }
    {
        auto r = root.child("targets");
        r.get("n_views", c.targets.n_views);
        r.get("fov_deg", c.targets.fov_deg);
        r.get("elevation_deg", c.targets.elevation_deg);
        r.get("image_size", c.targets.image_size);
        r.get("distance_margin", c.targets.distance_margin);
        r.finish();
    }
    {
        auto r = root.child("harvest");
        r.get("time_tolerance_s", c.harvest.time_tolerance_s);
        r.get("occlusion_samples", c.harvest.occlusion_samples);
        r.get("held_out", c.harvest.held_out);
        r.finish();
    }
    {
        auto r = root.child("generator");
        std::string mode(to_string(c.generator.mode));
        r.get("mode", mode);
        c.generator.mode = parse_generator_mode(mode);
        r.get("color", c.generator.color);
        r.get("external_dir", c.generator.external_dir);
        r.finish();
    }
    {
        auto r = root.child("lift");
        std::string mode(to_string(c.lift.mode));
        r.get("mode", mode);
        c.lift.mode = parse_lift_mode(mode);
        r.get("asset_dir", c.lift.asset_dir);
        r.get("block", c.lift.block);
        r.get("opacity", c.lift.opacity);
        r.get("background", c.lift.background);
        r.get("l1_weight", c.lift.weights.l1);
        r.get("ssim_weight", c.lift.weights.ssim);
        r.finish();
    }
    {
        auto r = root.child("eval");
        r.get("part", c.eval.part);
        r.get("patch_size", c.eval.patch_size);
        r.get("keypoints_dir", c.eval.keypoints_dir);
        r.get("lpips_file", c.eval.lpips_file);
        r.finish();
    }
    {
        auto r = root.child("judge");
        r.get("endpoint", c.judge.endpoint);
        r.get("model", c.judge.model);
        r.get("token_env", c.judge.token_env);
        r.get("max_in_flight", c.judge.max_in_flight);
        r.get("timeout_s", c.judge.timeout_s);
        r.get("max_retries", c.judge.max_retries);
        r.get("baselines", c.judge.baselines);
        r.finish();
    }
    root.get("seed", c.seed);
    root.get("jobs", c.jobs);
    root.finish();

    if (c.eval.part != "A" && c.eval.part != "B") {
        fail(ErrorCode::InvalidConfig, "config.eval.part must be \"A\" or \"B\"");
    }
    if (c.fps.k_max < 1 || c.targets.n_views < 1 || c.crop.out_size < 1 || c.targets.image_size < 1 ||
        c.lift.block < 1 || c.eval.patch_size < 1 || c.jobs < 1 || c.harvest.held_out < 0 ||
        c.harvest.occlusion_samples < 1) {
        fail(ErrorCode::InvalidConfig, "counts and sizes must be positive");
    }
    const auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(c.filter.max_occlusion) || !unit(c.filter.min_mask_iou) || !(c.filter.d_min >= 0.0) ||
        !(c.filter.d_max > c.filter.d_min)) {
        fail(ErrorCode::InvalidConfig, "filter thresholds out of range");
    }
    if (!(c.crop.min_fov_deg > 0.0) || c.crop.max_fov_deg < c.crop.min_fov_deg || !(c.targets.fov_deg > 0.0) ||
        !(c.targets.fov_deg < 180.0)) {
        fail(ErrorCode::InvalidConfig, "field-of-view settings out of range");
    }
    return c;
}

json PipelineConfig::to_json() const {
    json j;
    j["filter"] = {{"min_px", filter.min_px},
                   {"border_px", filter.border_px},
                   {"d_min", filter.d_min},
                   {"d_max", filter.d_max},
                   {"max_occlusion", filter.max_occlusion},
                   {"min_mask_iou", filter.min_mask_iou}};
    j["fps"] = {{"k_max", fps.k_max}, {"min_angle_deg", fps.min_angle_deg}};
    j["crop"] = {{"out_size", crop.out_size},
                 {"fov_margin", crop.fov_margin},
                 {"min_fov_deg", crop.min_fov_deg},
                 {"max_fov_deg", crop.max_fov_deg}};
    j["targets"] = {{"n_views", targets.n_views},
                    {"fov_deg", targets.fov_deg},
                    {"elevation_deg", targets.elevation_deg},
                    {"image_size", targets.image_size},
                    {"distance_margin", targets.distance_margin}};
    j["harvest"] = {{"time_tolerance_s", harvest.time_tolerance_s},
                    {"occlusion_samples", harvest.occlusion_samples},
                    {"held_out", harvest.held_out}};
    j["generator"] = {{"mode", std::string(to_string(generator.mode))},
                      {"color", generator.color},
                      {"external_dir", generator.external_dir}};
    j["lift"] = {{"mode", std::string(to_string(lift.mode))},
                 {"asset_dir", lift.asset_dir},
                 {"block", lift.block},
                 {"opacity", lift.opacity},
                 {"background", lift.background},
                 {"l1_weight", lift.weights.l1},
                 {"ssim_weight", lift.weights.ssim}};
    j["eval"] = {{"part", eval.part},
                 {"patch_size", eval.patch_size},
                 {"keypoints_dir", eval.keypoints_dir},
                 {"lpips_file", eval.lpips_file}};
    j["judge"] = {{"endpoint", judge.endpoint},
                  {"model", judge.model},
                  {"token_env", judge.token_env},
                  {"max_in_flight", judge.max_in_flight},
                  {"timeout_s", judge.timeout_s},
                  {"max_retries", judge.max_retries},
                  {"baselines", judge.baselines}};
    j["seed"] = seed;
    j["jobs"] = jobs;
    return j;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidConfig, path.string() + ": " + e.what());
    }
    return PipelineConfig::from_json(doc);
}

// ---------------------------------------------------------------------------
// Batch results

int BatchResult::exit_code() const {
    if (fatal) return 1;
    for (const auto& s : instances) {
        if (!s.ok) return 2;
    }
    return 0;
}

json BatchResult::to_json() const {
    json j;
    j["schema"] = 1;
    j["exit_code"] = exit_code();
    if (fatal) j["fatal"] = fatal_message;
    j["instances"] = json::array();
    for (const auto& s : instances) {
        j["instances"].push_back(
            {{"object_id", s.object_id}, {"ok", s.ok}, {"skipped", s.skipped}, {"message", s.message}});
    }
    return j;
}

// ---------------------------------------------------------------------------
// Serialization helpers

json camera_to_json(const PinholeCamera& c) {
    const Quat& q = c.pose.rotation;
    return {{"fx", c.fx},
            {"fy", c.fy},
            {"cx", c.cx},
            {"cy", c.cy},
            {"width", c.width},
            {"height", c.height},
            {"rotation", {q.w(), q.x(), q.y(), q.z()}},
            {"translation", {c.pose.translation.x(), c.pose.translation.y(), c.pose.translation.z()}}};
}

PinholeCamera camera_from_json(const json& j) {
    try {
        PinholeCamera c;
        c.fx = j.at("fx").get<double>();
        c.fy = j.at("fy").get<double>();
        c.cx = j.at("cx").get<double>();
        c.cy = j.at("cy").get<double>();
        c.width = j.at("width").get<int>();
        c.height = j.at("height").get<int>();
        const auto r = j.at("rotation").get<std::array<double, 4>>();
        const auto t = j.at("translation").get<std::array<double, 3>>();
        c.pose.rotation = Quat(r[0], r[1], r[2], r[3]);
        c.pose.translation = Vec3(t[0], t[1], t[2]);
        return c;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("camera: ") + e.what());
    }
}

namespace {

json vec3_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
Vec3 vec3_from(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

std::string indexed(const char* prefix, std::size_t i, const char* suffix) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s%03zu%s", prefix, i, suffix);
    return buf;
}

std::string target_name(std::size_t j) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "target_%02zu.png", j);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) {
        fail(ErrorCode::IoError, "cannot write " + path.string());
    }
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::MissingFile, path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

std::vector<std::size_t> InstanceBundle::input_views() const {
    std::vector<std::size_t> out;
    for (const auto id : selected) {
        if (std::find(held_out.begin(), held_out.end(), id) == held_out.end()) out.push_back(id);
    }
    return out;
}

const ViewRecord& InstanceBundle::candidate(std::size_t id) const {
    for (const auto& c : candidates) {
        if (c.id == id) return c;
    }
    fail(ErrorCode::SchemaViolation, object_id + ": unknown candidate id " + std::to_string(id));
}

json InstanceBundle::to_json() const {
    json j;
    j["schema"] = 1;
    j["object_id"] = object_id;
    j["class_label"] = std::string(to_string(class_label));
    j["stage"] = std::string(to_string(stage));
    j["status"] = status;
    j["message"] = message;
    j["object_radius"] = object_radius;
    j["candidates"] = json::array();
    for (const auto& c : candidates) {
        json v;
        v["id"] = c.id;
        v["frame_index"] = c.frame_index;
        v["camera_id"] = c.camera_id;
        v["timestamp"] = c.timestamp;
        v["distance"] = c.distance;
        v["viewing_direction"] = vec3_json(c.viewing_direction);
        v["bbox"] = {c.bbox.x0, c.bbox.y0, c.bbox.x1, c.bbox.y1};
        v["occlusion"] = c.occlusion;
        v["mask_iou"] = c.mask_iou ? json(*c.mask_iou) : json(nullptr);
        v["flags"] = c.flags;
        v["passed"] = c.passed;
        v["crop"] = c.crop;
        v["crop_mask"] = c.crop_mask;
        v["camera"] = c.camera ? camera_to_json(*c.camera) : json(nullptr);
        j["candidates"].push_back(v);
    }
    j["selected"] = selected;
    j["held_out"] = held_out;
    j["target_cameras"] = json::array();
    for (const auto& c : target_cameras) j["target_cameras"].push_back(camera_to_json(c));
    j["target_images"] = target_images;
    j["asset"] = asset;
    j["recon_loss"] = recon_loss ? json(*recon_loss) : json(nullptr);
    j["hashes"] = hashes;
    return j;
}

InstanceBundle InstanceBundle::from_json(const json& j) {
    try {
        InstanceBundle b;
        b.object_id = j.at("object_id").get<std::string>();
        b.class_label = parse_object_class(j.at("class_label").get<std::string>());
        b.stage = parse_stage(j.at("stage").get<std::string>());
        b.status = j.at("status").get<std::string>();
        b.message = j.at("message").get<std::string>();
        b.object_radius = j.at("object_radius").get<double>();
        for (const auto& v : j.at("candidates")) {
            ViewRecord c;
            c.id = v.at("id").get<std::size_t>();
            c.frame_index = v.at("frame_index").get<std::size_t>();
            c.camera_id = v.at("camera_id").get<std::string>();
            c.timestamp = v.at("timestamp").get<double>();
            c.distance = v.at("distance").get<double>();
            c.viewing_direction = vec3_from(v.at("viewing_direction"));
            const auto bb = v.at("bbox").get<std::array<double, 4>>();
            c.bbox = {bb[0], bb[1], bb[2], bb[3]};
            c.occlusion = v.at("occlusion").get<double>();
            if (!v.at("mask_iou").is_null()) c.mask_iou = v.at("mask_iou").get<double>();
            c.flags = v.at("flags").get<std::vector<std::string>>();
            c.passed = v.at("passed").get<bool>();
            c.crop = v.at("crop").get<std::string>();
            c.crop_mask = v.at("crop_mask").get<std::string>();
            if (!v.at("camera").is_null()) c.camera = camera_from_json(v.at("camera"));
            b.candidates.push_back(std::move(c));
        }
        b.selected = j.at("selected").get<std::vector<std::size_t>>();
        b.held_out = j.at("held_out").get<std::vector<std::size_t>>();
        for (const auto& c : j.at("target_cameras")) b.target_cameras.push_back(camera_from_json(c));
        b.target_images = j.at("target_images").get<std::vector<std::string>>();
        b.asset = j.at("asset").get<std::string>();
        if (!j.at("recon_loss").is_null()) b.recon_loss = j.at("recon_loss").get<double>();
        b.hashes = j.at("hashes").get<std::map<std::string, std::string>>();
        return b;
    } catch (const json::exception& e) {
        fail(ErrorCode::SchemaViolation, std::string("stage.json: ") + e.what());
    }
}

InstanceBundle load_bundle(const fs::path& instance_dir) {
    const std::string text = read_text(instance_dir / "stage.json");
    const json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded()) {
        fail(ErrorCode::SchemaViolation, (instance_dir / "stage.json").string() + ": invalid JSON");
    }
    return InstanceBundle::from_json(doc);
}

void save_bundle(const fs::path& instance_dir, const InstanceBundle& bundle) {
    write_text(instance_dir / "stage.json", bundle.to_json().dump(2) + "\n");
}

std::vector<std::string> list_instances(const fs::path& workspace) {
    std::vector<std::string> out;
    if (!fs::is_directory(workspace)) return out;
    for (const auto& entry : fs::directory_iterator(workspace)) {
        if (entry.is_directory() && fs::exists(entry.path() / "stage.json")) {
            out.push_back(entry.path().filename().string());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Hashing

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::IoError, "sha256 failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
}

std::string workspace_digest(const fs::path& workspace) {
    std::vector<std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(workspace)) {
        if (entry.is_regular_file()) {
            files.push_back(fs::relative(entry.path(), workspace).generic_string());
        }
    }
    std::sort(files.begin(), files.end());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    for (const auto& rel : files) {
        const std::string content = read_text(workspace / rel);
        const std::string head = rel + '\0' + std::to_string(content.size()) + '\0';
        EVP_DigestUpdate(ctx, head.data(), head.size());
        EVP_DigestUpdate(ctx, content.data(), content.size());
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0xf]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Worker pool

namespace {

BatchResult run_pool(const std::vector<std::string>& ids, int jobs,
                     const std::function<InstanceStatus(const std::string&)>& work) {
    BatchResult result;
    result.instances.resize(ids.size());
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next++; i < ids.size(); i = next++) {
            try {
                result.instances[i] = work(ids[i]);
            } catch (const std::exception& e) {
                result.instances[i] = {ids[i], false, false, e.what()};
            }
        }
    };
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)),
                                                std::max<std::size_t>(1, ids.size()));
    if (n == 1) {
        body();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n; ++t) threads.emplace_back(body);
        for (auto& t : threads) t.join();
    }
    return result;
}

RenderOptions render_options(const PipelineConfig& cfg) {
    RenderOptions o;
    o.threads = cfg.jobs > 1 ? 1 : 0;
    return o;
}

Vec3 to_vec3(const std::array<double, 3>& a) { return {a[0], a[1], a[2]}; }

std::uint64_t mix_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t h = 1469598103934665603ull;
    for (const char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Skips a stage when it already ran on the same inputs and its outputs are
// still present.
bool stage_current(const InstanceBundle& b, Stage stage, const std::string& hash, const fs::path& dir,
                   const std::vector<std::string>& outputs) {
    if (b.stage < stage) return false;
    const auto it = b.hashes.find(std::string(to_string(stage)));
    if (it == b.hashes.end() || it->second != hash) return false;
    return std::all_of(outputs.begin(), outputs.end(), [&](const std::string& rel) { return fs::exists(dir / rel); });
}

// Drops everything produced by stages after `stage`.
void reset_after(InstanceBundle& b, Stage stage, const fs::path& dir) {
    if (stage < Stage::Selected) {
        b.selected.clear();
        b.held_out.clear();
    }
    if (stage < Stage::Generated) {
        b.target_cameras.clear();
        b.target_images.clear();
        fs::remove_all(dir / "targets");
    }
    if (stage < Stage::Lifted) {
        b.asset.clear();
        b.recon_loss.reset();
        fs::remove(dir / "asset.gsa");
    }
    if (stage < Stage::Evaluated) {
        fs::remove(dir / "report.json");
        fs::remove_all(dir / "judge");
    }
    for (auto it = b.hashes.begin(); it != b.hashes.end();) {
        if (parse_stage(it->first) > stage) {
            it = b.hashes.erase(it);
        } else {
            ++it;
        }
    }
    b.stage = stage;
}

std::string stage_hash(const InstanceBundle& b, Stage upstream, const json& params) {
    const auto it = b.hashes.find(std::string(to_string(upstream)));
    const std::string up = it == b.hashes.end() ? std::string() : it->second;
    return sha256_hex(up + "\n" + params.dump());
}

// Object-centric frame of a cuboid: object -> world.
RigidTransform object_frame(const Cuboid& c) { return {c.rotation, c.center}; }

Mask silhouette_mask(const PinholeCamera& camera, const Cuboid& box) {
    Mask m(camera.width, camera.height, 0);
    const Vec3 c = camera.center();
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const Ray ray{c, ray_direction(camera, Vec2(x + 0.5, y + 0.5))};
            if (ray_box_intersect(ray, box)) m.at(x, y) = 1;
        }
    }
    return m;
}

Image resample(const Image& src, int width, int height) {
    Image out(width, height, src.channels());
    const double sx = static_cast<double>(src.width()) / width;
    const double sy = static_cast<double>(src.height()) / height;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < src.channels(); ++c) {
                out.at(x, y, c) = src.sample((x + 0.5) * sx, (y + 0.5) * sy, c);
            }
        }
    }
    return out;
}

Image clamp01(Image img) {
    for (auto& v : img.data()) v = std::clamp(v, 0.0f, 1.0f);
    return img;
}

} // namespace

// ---------------------------------------------------------------------------
// Harvest

namespace {

InstanceBundle harvest_track(const SensorLog& log, std::size_t track_index, const PipelineConfig& cfg,
                             const fs::path& dir) {
    const CuboidTrack& track = log.tracks[track_index];
    InstanceBundle b;
    b.object_id = track.object_id;
    b.class_label = track.class_label;
    if (track.states.empty()) {
        fail(ErrorCode::EmptyTrack, track.object_id);
    }
    b.object_radius = track.states.front().half_extents.norm();
    fs::create_directories(dir / "views");

    const double t_first = track.states.front().timestamp;
    const double t_last = track.states.back().timestamp;
    auto active = [&](const CuboidTrack& tr, double t) {
        return t >= tr.states.front().timestamp - cfg.harvest.time_tolerance_s &&
               t <= tr.states.back().timestamp + cfg.harvest.time_tolerance_s;
    };

    for (std::size_t k = 0; k < log.frames.size(); ++k) {
        const FrameRecord& frame = log.frames[k];
        const double t = frame.timestamp;
        if (t < t_first - cfg.harvest.time_tolerance_s || t > t_last + cfg.harvest.time_tolerance_s) continue;
        const Cuboid cub = Cuboid::from_state(interpolate_cuboid(track, t).state);
        const Camera camera = make_camera(log.camera(frame.camera_id), frame.ego_pose);
        const CuboidProjection proj = project_cuboid(camera, cub);
        if (!proj.fully_in_front || proj.bbox.empty()) continue;
        const Vec3 center = camera_center(camera);
        if (cub.contains(center)) continue;

        std::vector<Cuboid> occluders;
        for (std::size_t j = 0; j < log.tracks.size(); ++j) {
            if (j == track_index || log.tracks[j].states.empty() || !active(log.tracks[j], t)) continue;
            occluders.push_back(Cuboid::from_state(interpolate_cuboid(log.tracks[j], t).state));
        }

        ViewCandidate cand;
        cand.frame_index = k;
        cand.camera = camera;
        const Vec3 to_obj = cub.center - center;
        cand.distance = to_obj.norm();
        cand.viewing_direction = to_obj / cand.distance;
        cand.bbox = proj.bbox;
        cand.image_width = camera_width(camera);
        cand.image_height = camera_height(camera);
        cand.occlusion_fraction = occlusion_fraction(center, cub, occluders, cfg.harvest.occlusion_samples);
        std::optional<Mask> source_mask;
        if (const auto it = frame.masks.find(track.object_id); it != frame.masks.end()) {
            source_mask = read_png_mask(log.root / it->second);
            cand.mask_iou = mask_cuboid_iou(*source_mask, proj.bbox).iou;
        }
        const QualityResult q = quality_filter(cand, cfg.filter);

        const RigidTransform obj = object_frame(cub);
        ViewRecord rec;
        rec.id = b.candidates.size();
        rec.frame_index = k;
        rec.camera_id = frame.camera_id;
        rec.timestamp = t;
        rec.distance = cand.distance;
        rec.viewing_direction = obj.rotation.conjugate() * cand.viewing_direction;
        rec.bbox = cand.bbox;
        rec.occlusion = cand.occlusion_fraction;
        rec.mask_iou = cand.mask_iou;
        rec.flags = q.flags.names();
        rec.passed = q.pass;
        if (q.pass) {
            const double r = b.object_radius;
            const double fov = rad_to_deg(2.0 * std::asin(std::min(1.0, r / cand.distance))) * cfg.crop.fov_margin;
            const Image image = read_png_rgb(log.root / frame.image);
            RectifyOptions ro;
            ro.min_fov_deg = cfg.crop.min_fov_deg;
            ro.max_fov_deg = cfg.crop.max_fov_deg;
            ViewCrop crop = rectify_crop(camera, image, cub.center, fov, cfg.crop.out_size,
                                         source_mask ? &*source_mask : nullptr, ro);
            if (!source_mask) {
                crop.foreground = silhouette_mask(crop.camera, cub);
            }
            rec.crop = "views/" + indexed("view_", rec.id, ".png");
            rec.crop_mask = "views/" + indexed("view_", rec.id, "_mask.png");
            write_png(dir / rec.crop, clamp01(crop.image));
            write_png(dir / rec.crop_mask, crop.foreground);
            PinholeCamera local = crop.camera;
            local.pose = crop.camera.pose * obj;
            rec.camera = local;
        }
        b.candidates.push_back(std::move(rec));
    }
    if (std::none_of(b.candidates.begin(), b.candidates.end(), [](const ViewRecord& v) { return v.passed; })) {
        b.status = "flagged";
        b.message = b.candidates.empty() ? "no frame sees the object" : "no view passes the quality filter";
    }
    return b;
}

} // namespace

BatchResult harvest(const SensorLog& log, const PipelineConfig& cfg, const fs::path& workspace) {
    fs::create_directories(workspace);
    const std::string log_hash = sha256_hex(serialize_log(log).dump());
    const json params = {{"filter", cfg.to_json()["filter"]},
                         {"crop", cfg.to_json()["crop"]},
                         {"harvest", cfg.to_json()["harvest"]}};
    std::vector<std::string> ids;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < log.tracks.size(); ++i) {
        ids.push_back(log.tracks[i].object_id);
        index[log.tracks[i].object_id] = i;
    }
    return run_pool(ids, cfg.jobs, [&](const std::string& id) {
        const fs::path dir = workspace / id;
        const std::string hash = sha256_hex(log_hash + "\n" + id + "\n" + params.dump());
        if (fs::exists(dir / "stage.json")) {
            try {
                const InstanceBundle old = load_bundle(dir);
                std::vector<std::string> outputs;
                for (const auto& c : old.candidates) {
                    if (!c.crop.empty()) outputs.push_back(c.crop);
                }
                if (stage_current(old, Stage::Ingested, hash, dir, outputs)) {
                    return InstanceStatus{id, old.status == "ok", true, old.message};
                }
            } catch (const Error&) {
                // Unreadable manifest: rebuild the instance.
            }
            fs::remove_all(dir);
        }
        InstanceBundle b;
        try {
            b = harvest_track(log, index.at(id), cfg, dir);
        } catch (const Error& e) {
            b = InstanceBundle{};
            b.object_id = id;
            b.class_label = log.tracks[index.at(id)].class_label;
            b.status = "error";
            b.message = e.what();
        }
        b.stage = Stage::Ingested;
        b.hashes[std::string(to_string(Stage::Ingested))] = hash;
        save_bundle(dir, b);
        return InstanceStatus{id, b.status == "ok", false, b.message};
    });
}

// ---------------------------------------------------------------------------
// Selection

BatchResult select_views(const PipelineConfig& cfg, const fs::path& workspace) {
    const json params = {{"fps", cfg.to_json()["fps"]}, {"held_out", cfg.harvest.held_out}};
    return run_pool(list_instances(workspace), cfg.jobs, [&](const std::string& id) {
        const fs::path dir = workspace / id;
        InstanceBundle b = load_bundle(dir);
        if (b.status == "error") return InstanceStatus{id, false, true, b.message};
        const std::string hash = stage_hash(b, Stage::Ingested, params);
        if (stage_current(b, Stage::Selected, hash, dir, {})) {
            return InstanceStatus{id, b.status == "ok", true, b.message};
        }
        reset_after(b, Stage::Ingested, dir);
        std::vector<std::size_t> pass_ids;
        std::vector<Vec3> dirs;
        std::size_t seed = 0;
        double best_area = -1.0;
        for (const auto& c : b.candidates) {
            if (!c.passed) continue;
            if (c.bbox.area() > best_area) {
                best_area = c.bbox.area();
                seed = pass_ids.size();
            }
            pass_ids.push_back(c.id);
            dirs.push_back(c.viewing_direction);
        }
        if (pass_ids.empty()) {
            b.status = "flagged";
            if (b.message.empty()) b.message = "no view passes the quality filter";
        } else {
            for (const auto k : fps_orientations(dirs, cfg.fps.k_max, cfg.fps.min_angle_deg, seed)) {
                b.selected.push_back(pass_ids[k]);
            }
            if (b.selected.size() >= 2 && cfg.harvest.held_out > 0) {
                const std::size_t n_hold =
                    std::min(static_cast<std::size_t>(cfg.harvest.held_out), b.selected.size() - 1);
                b.held_out.assign(b.selected.end() - static_cast<std::ptrdiff_t>(n_hold), b.selected.end());
            }
        }
        b.stage = Stage::Selected;
        b.hashes[std::string(to_string(Stage::Selected))] = hash;
        save_bundle(dir, b);
        return InstanceStatus{id, b.status == "ok", false, b.message};
    });
}

// ---------------------------------------------------------------------------
// Generation

std::vector<std::size_t> nearest_views(std::span<const Vec3> target_dirs, std::span<const Vec3> input_dirs) {
    if (input_dirs.empty()) {
        fail(ErrorCode::EmptyViewSet, "no input views to copy from");
    }
    std::vector<std::size_t> out;
    for (const Vec3& t : target_dirs) {
        std::size_t best = 0;
        double best_angle = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < input_dirs.size(); ++i) {
            const double a = angle_between(t, input_dirs[i]);
            if (a < best_angle) {
                best_angle = a;
                best = i;
            }
        }
        out.push_back(best);
    }
    return out;
}

BatchResult generate_views(const PipelineConfig& cfg, const fs::path& workspace) {
    const json params = {{"targets", cfg.to_json()["targets"]}, {"generator", cfg.to_json()["generator"]}};
    return run_pool(list_instances(workspace), cfg.jobs, [&](const std::string& id) {
        const fs::path dir = workspace / id;
        InstanceBundle b = load_bundle(dir);
        if (b.status != "ok") return InstanceStatus{id, false, true, b.message};
        if (b.stage < Stage::Selected) {
            return InstanceStatus{id, false, false, "views not selected yet"};
        }
        std::string hash = stage_hash(b, Stage::Selected, params);
        if (cfg.generator.mode == GeneratorMode::ExternalDir) {
            // External outputs are inputs of this stage.
            std::string content;
            for (int j = 0; j < cfg.targets.n_views; ++j) {
                const fs::path p = fs::path(cfg.generator.external_dir) / id / target_name(static_cast<std::size_t>(j));
                if (fs::exists(p)) content += sha256_hex(read_text(p));
            }
            hash = sha256_hex(hash + content);
        }
        if (stage_current(b, Stage::Generated, hash, dir, b.target_images)) {
            return InstanceStatus{id, true, true, ""};
        }
        reset_after(b, Stage::Selected, dir);
        const auto inputs = b.input_views();
        try {
            if (inputs.empty()) {
                fail(ErrorCode::EmptyViewSet, "no input views");
            }
            const double half = deg_to_rad(cfg.targets.fov_deg) / 2.0;
            const double distance = cfg.targets.distance_margin * b.object_radius / std::sin(half);
            const auto cams = generate_target_cameras(cfg.targets.fov_deg, distance, cfg.targets.n_views,
                                                      cfg.targets.elevation_deg, cfg.targets.image_size);
            const int size = cfg.targets.image_size;
            std::vector<Image> images;
            switch (cfg.generator.mode) {
            case GeneratorMode::SolidColor: {
                Image img(size, size, 3);
                for (int y = 0; y < size; ++y)
                    for (int x = 0; x < size; ++x)
                        for (int c = 0; c < 3; ++c)
                            img.at(x, y, c) = static_cast<float>(cfg.generator.color[static_cast<std::size_t>(c)]);
                images.assign(cams.size(), img);
                break;
            }
            case GeneratorMode::CopyNearest: {
                std::vector<Vec3> tdirs, idirs;
                for (const auto& c : cams) tdirs.push_back((-c.center()).normalized());
                for (const auto k : inputs) idirs.push_back(b.candidate(k).viewing_direction);
                for (const auto k : nearest_views(tdirs, idirs)) {
                    const Image src = read_png_rgb(dir / b.candidate(inputs[k]).crop);
                    images.push_back(resample(src, size, size));
                }
                break;
            }
            case GeneratorMode::ExternalDir: {
                std::size_t found = 0;
                for (std::size_t j = 0; j < cams.size(); ++j) {
                    if (fs::exists(fs::path(cfg.generator.external_dir) / id / target_name(j))) ++found;
                }
                if (found < cams.size()) {
                    fail(ErrorCode::MissingExternalOutputs, "found " + std::to_string(found) + " of " +
                                                                std::to_string(cams.size()) + " target images");
                }
                for (std::size_t j = 0; j < cams.size(); ++j) {
                    const Image src = read_png_rgb(fs::path(cfg.generator.external_dir) / id / target_name(j));
                    images.push_back(src.width() == size && src.height() == size ? src : resample(src, size, size));
                }
                break;
            }
            }
            fs::create_directories(dir / "targets");
            for (std::size_t j = 0; j < cams.size(); ++j) {
                const std::string rel = "targets/" + target_name(j);
                write_png(dir / rel, images[j]);
                b.target_images.push_back(rel);
            }
            b.target_cameras = cams;
        } catch (const Error& e) {
            b.target_cameras.clear();
            b.target_images.clear();
            save_bundle(dir, b);
            return InstanceStatus{id, false, false, e.what()};
        }
        b.stage = Stage::Generated;
        b.hashes[std::string(to_string(Stage::Generated))] = hash;
        save_bundle(dir, b);
        return InstanceStatus{id, true, false, ""};
    });
}

// ---------------------------------------------------------------------------
// Lifting

GaussianAsset fit_free_asset(std::span<const TargetView> views, double object_radius, int block, double opacity) {
    GaussianAsset asset;
    asset.sh_degree = 0;
    constexpr double kC0 = 0.28209479177387814;
    for (const auto& v : views) {
        const PinholeCamera& cam = v.camera;
        const Vec3 center = cam.center();
        const Mat3 r = cam.pose.matrix();
        const Vec3 axis = r.row(2).transpose();
        const double depth = std::abs(center.dot(axis));
        const double sigma = 0.5 * block * depth / cam.fx;
        const Quat orient(r.transpose());
        for (int by = 0; by + block <= cam.height; by += block) {
            for (int bx = 0; bx + block <= cam.width; bx += block) {
                const Vec2 px(bx + 0.5 * block, by + 0.5 * block);
                const Vec3 d = ray_direction(cam, px);
                const Vec3 p = center + d * (depth / d.dot(axis));
                if (p.norm() > object_radius) continue;
                Vec3 color = Vec3::Zero();
                for (int y = by; y < by + block; ++y)
                    for (int x = bx; x < bx + block; ++x)
                        for (int c = 0; c < 3; ++c) color[c] += v.image.at(x, y, c);
                color /= static_cast<double>(block * block);
                std::vector<float> sh(3);
                for (int c = 0; c < 3; ++c) sh[static_cast<std::size_t>(c)] = static_cast<float>((color[c] - 0.5) / kC0);
                asset.gaussians.push_back(
                    Gaussian::from_activated(p, Vec3(sigma, sigma, 0.01 * sigma), orient, opacity, std::move(sh)));
            }
        }
    }
    return asset;
}

namespace {

std::vector<TargetView> load_targets(const InstanceBundle& b, const fs::path& dir) {
    std::vector<TargetView> views;
    for (std::size_t j = 0; j < b.target_cameras.size(); ++j) {
        views.push_back({b.target_cameras[j], read_png_rgb(dir / b.target_images[j])});
    }
    return views;
}

} // namespace

BatchResult lift_views(const PipelineConfig& cfg, const fs::path& workspace) {
    const json params = {{"lift", cfg.to_json()["lift"]}};
    return run_pool(list_instances(workspace), cfg.jobs, [&](const std::string& id) {
        const fs::path dir = workspace / id;
        InstanceBundle b = load_bundle(dir);
        if (b.status != "ok") return InstanceStatus{id, false, true, b.message};
        if (b.stage < Stage::Generated) {
            return InstanceStatus{id, false, false, "target views not generated yet"};
        }
        std::string hash = stage_hash(b, Stage::Generated, params);
        const fs::path external = fs::path(cfg.lift.asset_dir) / (id + ".gsa");
        if (cfg.lift.mode == LiftMode::ExternalAsset && fs::exists(external)) {
            hash = sha256_hex(hash + sha256_hex(read_text(external)));
        }
        if (stage_current(b, Stage::Lifted, hash, dir, {"asset.gsa"})) {
            return InstanceStatus{id, true, true, ""};
        }
        reset_after(b, Stage::Generated, dir);
        try {
            const auto views = load_targets(b, dir);
            GaussianAsset asset;
            if (cfg.lift.mode == LiftMode::FitFree) {
                asset = fit_free_asset(views, b.object_radius, cfg.lift.block, cfg.lift.opacity);
                if (asset.gaussians.empty()) {
                    fail(ErrorCode::AssetLoadError, "fit_free produced no gaussians");
                }
            } else {
                try {
                    asset = load_asset(external);
                    asset.validate();
                } catch (const Error& e) {
                    fail(ErrorCode::AssetLoadError, external.string() + ": " + e.what());
                }
            }
            save_asset(dir / "asset.gsa", asset);
            b.asset = "asset.gsa";
            b.recon_loss = recon_loss(asset, views, to_vec3(cfg.lift.background), cfg.lift.weights, render_options(cfg));
        } catch (const Error& e) {
            save_bundle(dir, b);
            return InstanceStatus{id, false, false, e.what()};
        }
        b.stage = Stage::Lifted;
        b.hashes[std::string(to_string(Stage::Lifted))] = hash;
        save_bundle(dir, b);
        return InstanceStatus{id, true, false, ""};
    });
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Mask alpha_mask(const Image& alpha) {
    Mask m(alpha.width(), alpha.height(), 0);
    for (int y = 0; y < alpha.height(); ++y)
        for (int x = 0; x < alpha.width(); ++x) m.at(x, y) = alpha.at(x, y, 0) >= 0.5f ? 1 : 0;
    return m;
}

json evaluate_part_a(const InstanceBundle& b, const PipelineConfig& cfg, const fs::path& dir,
                     const GaussianAsset& asset, const json& lpips) {
    if (b.held_out.empty()) {
        fail(ErrorCode::NoHeldOutViews, b.object_id + " has no held-out views");
    }
    json report;
    report["views"] = json::array();
    double sum_psnr = 0.0, sum_ssim = 0.0, sum_edr = 0.0, sum_edp = 0.0;
    int n_edr = 0, n_edp = 0;
    std::vector<std::string> notes;
    const Vec3 bg = to_vec3(cfg.lift.background);
    for (const auto id : b.held_out) {
        const ViewRecord& v = b.candidate(id);
        if (!v.camera) {
            fail(ErrorCode::SchemaViolation, "held-out view " + std::to_string(id) + " has no camera");
        }
        const Image gt = read_png_rgb(dir / v.crop);
        const Mask gt_mask = read_png_mask(dir / v.crop_mask);
        const RenderedImage r = render(asset, *v.camera, bg, render_options(cfg));
        json view;
        view["view_id"] = id;
        const double p = psnr(r.rgb, gt);
        const double s = ssim(r.rgb, gt);
        view["psnr"] = p;
        view["ssim"] = s;
        sum_psnr += p;
        sum_ssim += s;
        try {
            const Mask r_mask = alpha_mask(r.alpha);
            const AlignedRender aligned = align_to_gt(r.rgb, r_mask, gt_mask);
            const double d = ed_r(color_features(aligned.rgb, cfg.eval.patch_size), aligned.mask,
                                  color_features(gt, cfg.eval.patch_size), gt_mask);
            view["ed_r"] = d;
            view["alignment"] = {{"translation", {aligned.transform.translation.x(), aligned.transform.translation.y()}},
                                 {"scale", aligned.transform.scale}};
            sum_edr += d;
            ++n_edr;
        } catch (const Error& e) {
            view["ed_r"] = nullptr;
            view["ed_r_note"] = e.what();
        }
        view["ed_p"] = nullptr;
        if (b.class_label == ObjectClass::VruPedestrian) {
            const fs::path kp_dir = fs::path(cfg.eval.keypoints_dir) / b.object_id;
            const fs::path kp_gt = kp_dir / indexed("gt_", id, ".json");
            const fs::path kp_r = kp_dir / indexed("render_", id, ".json");
            if (!cfg.eval.keypoints_dir.empty() && fs::exists(kp_gt) && fs::exists(kp_r)) {
                try {
                    const auto parts_gt = partition_parts(gt_mask, load_keypoints(kp_gt));
                    const auto parts_r = partition_parts(alpha_mask(r.alpha), load_keypoints(kp_r));
                    const double d = ed_p(color_features(r.rgb, cfg.eval.patch_size), parts_r,
                                          color_features(gt, cfg.eval.patch_size), parts_gt);
                    view["ed_p"] = d;
                    sum_edp += d;
                    ++n_edp;
                } catch (const Error& e) {
                    view["ed_p_note"] = e.what();
                }
            } else {
                view["ed_p_note"] = "no keypoint files";
            }
        }
        report["views"].push_back(view);
    }
    const double n = static_cast<double>(b.held_out.size());
    report["mean"] = {{"psnr", sum_psnr / n},
                      {"ssim", sum_ssim / n},
                      {"ed_r", n_edr > 0 ? json(sum_edr / n_edr) : json(nullptr)},
                      {"ed_p", n_edp > 0 ? json(sum_edp / n_edp) : json(nullptr)}};
    if (lpips.is_object() && lpips.contains(b.object_id) && lpips[b.object_id].is_number()) {
        report["lpips"] = lpips[b.object_id];
    } else {
        report["lpips"] = "unavailable";
    }
    return report;
}

Image masked_reference(const fs::path& dir, const ViewRecord& v) {
    Image img = read_png_rgb(dir / v.crop);
    const Mask m = read_png_mask(dir / v.crop_mask);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            if (m.at(x, y) == 0)
                for (int c = 0; c < 3; ++c) img.at(x, y, c) = 1.0f;
    return img;
}

json evaluate_part_b(const InstanceBundle& b, const PipelineConfig& cfg, const fs::path& dir,
                     const GaussianAsset& asset, std::vector<PreferenceRecord>& records) {
    json report;
    report["comparisons"] = json::array();
    const auto inputs = b.input_views();
    if (inputs.empty() || b.target_cameras.empty()) {
        fail(ErrorCode::EmptyViewSet, b.object_id + " has no reference view or target cameras");
    }
    const Image reference = masked_reference(dir, b.candidate(inputs.front()));
    const Vec3 white = Vec3::Ones();
    std::optional<JudgeClient> client;
    if (!cfg.judge.endpoint.empty()) {
        client.emplace(JudgeClientConfig{cfg.judge.endpoint, cfg.judge.model, cfg.judge.token_env,
                                         cfg.judge.max_in_flight, cfg.judge.timeout_s, cfg.judge.max_retries});
    }
    struct Pending {
        std::string baseline;
        Slot ours;
        json payload;
    };
    std::vector<Pending> pending;
    for (const auto& [name, asset_dir] : cfg.judge.baselines) {
        const std::uint64_t seed = mix_seed(cfg.seed, b.object_id + "/" + name);
        AssignmentSampler sampler(seed);
        Rng rng(seed);
        const std::size_t view = rng.index(b.target_cameras.size());
        const Slot ours = sampler.next();
        json cmp = {{"baseline", name}, {"seed", seed}, {"target_view", view}, {"ours_slot", std::string(to_string(ours))}};
        GaussianAsset other;
        try {
            other = load_asset(fs::path(asset_dir) / (b.object_id + ".gsa"));
        } catch (const Error& e) {
            cmp["reply"] = nullptr;
            cmp["winner"] = std::string(to_string(Winner::Invalid));
            cmp["note"] = std::string("baseline asset: ") + e.what();
            records.push_back({b.object_id, b.class_label, name, ours, JudgeReply::Error});
            report["comparisons"].push_back(cmp);
            continue;
        }
        const PinholeCamera& cam = b.target_cameras[view];
        const Image ours_img = render(asset, cam, white, render_options(cfg)).rgb;
        const Image other_img = render(other, cam, white, render_options(cfg)).rgb;
        const json payload = ours == Slot::B ? judge_request(reference, ours_img, other_img, cfg.judge.model)
                                             : judge_request(reference, other_img, ours_img, cfg.judge.model);
        write_text(dir / "judge" / (name + ".request.json"), payload.dump() + "\n");
        pending.push_back({name, ours, payload});
        report["comparisons"].push_back(cmp);
    }
    // Replies come from reply files when present, otherwise from the live
    // endpoint when one is configured.
    std::vector<json> to_send;
    std::vector<std::size_t> send_index;
    std::vector<std::optional<JudgeReply>> replies(pending.size());
    for (std::size_t i = 0; i < pending.size(); ++i) {
        const fs::path reply_file = dir / "judge" / (pending[i].baseline + ".reply.txt");
        if (fs::exists(reply_file)) {
            replies[i] = parse_judge_reply(read_text(reply_file));
        } else if (client) {
            to_send.push_back(pending[i].payload);
            send_index.push_back(i);
        }
    }
    std::vector<std::string> transport_errors(pending.size());
    if (client && !to_send.empty()) {
        const auto outcomes = client->ask_all(to_send);
        for (std::size_t k = 0; k < outcomes.size(); ++k) {
            const std::size_t i = send_index[k];
            if (outcomes[k].reply) {
                replies[i] = outcomes[k].reply;
                write_text(dir / "judge" / (pending[i].baseline + ".reply.txt"),
                           "[" + std::string(to_string(*outcomes[k].reply)) + "]\n");
            } else {
                transport_errors[i] = outcomes[k].error;
            }
        }
    }
    for (std::size_t i = 0; i < pending.size(); ++i) {
        for (auto& cmp : report["comparisons"]) {
            if (cmp["baseline"] != pending[i].baseline || cmp.contains("winner")) continue;
            if (replies[i]) {
                cmp["reply"] = std::string(to_string(*replies[i]));
                cmp["winner"] = std::string(to_string(resolve_winner(pending[i].ours, *replies[i])));
                records.push_back({b.object_id, b.class_label, pending[i].baseline, pending[i].ours, *replies[i]});
            } else {
                cmp["reply"] = nullptr;
                cmp["winner"] = nullptr;
                cmp["note"] = transport_errors[i].empty() ? "awaiting reply" : "transport: " + transport_errors[i];
            }
        }
    }
    return report;
}

} // namespace

BatchResult evaluate(const PipelineConfig& cfg, const fs::path& workspace) {
    json lpips;
    if (!cfg.eval.lpips_file.empty()) {
        lpips = json::parse(read_text(cfg.eval.lpips_file), nullptr, false);
        if (lpips.is_discarded()) {
            fail(ErrorCode::SchemaViolation, cfg.eval.lpips_file + ": invalid JSON");
        }
    }
    json params = {{"eval", cfg.to_json()["eval"]}, {"lpips", lpips}};
    if (cfg.eval.part == "B") {
        params["judge"] = cfg.to_json()["judge"];
        params["seed"] = cfg.seed;
    }
    const auto ids = list_instances(workspace);
    std::vector<std::vector<PreferenceRecord>> per_instance(ids.size());
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < ids.size(); ++i) slot[ids[i]] = i;

    BatchResult result = run_pool(ids, cfg.jobs, [&](const std::string& id) {
        const fs::path dir = workspace / id;
        InstanceBundle b = load_bundle(dir);
        if (b.status != "ok") return InstanceStatus{id, false, true, b.message};
        if (b.stage < Stage::Lifted) {
            return InstanceStatus{id, false, false, "asset not lifted yet"};
        }
        std::string hash = stage_hash(b, Stage::Lifted, params);
        if (cfg.eval.part == "B") {
            std::string replies;
            for (const auto& [name, d] : cfg.judge.baselines) {
                const fs::path f = dir / "judge" / (name + ".reply.txt");
                if (fs::exists(f)) replies += name + ":" + read_text(f);
            }
            hash = sha256_hex(hash + replies);
        }
        if (stage_current(b, Stage::Evaluated, hash, dir, {"report.json"})) {
            if (cfg.eval.part == "B") {
                const json old = json::parse(read_text(dir / "report.json"));
                for (const auto& cmp : old["part_b"]["comparisons"]) {
                    if (cmp["reply"].is_null()) continue;
                    const Slot ours = cmp["ours_slot"] == "B" ? Slot::B : Slot::C;
                    per_instance[slot.at(id)].push_back(
                        {id, b.class_label, cmp["baseline"].get<std::string>(), ours,
                         parse_judge_reply("[" + cmp["reply"].get<std::string>() + "]")});
                }
            }
            return InstanceStatus{id, true, true, ""};
        }
        // Keep judge reply files, which are inputs here.
        b.stage = Stage::Lifted;
        fs::remove(dir / "report.json");
        const GaussianAsset asset = load_asset(dir / b.asset);
        json report;
        report["schema"] = 1;
        report["object_id"] = id;
        report["class_label"] = std::string(to_string(b.class_label));
        report["part"] = cfg.eval.part;
        report["recon_loss"] = opt_json(b.recon_loss);
        try {
            if (cfg.eval.part == "A") {
                report["part_a"] = evaluate_part_a(b, cfg, dir, asset, lpips);
            } else {
                report["part_b"] = evaluate_part_b(b, cfg, dir, asset, per_instance[slot.at(id)]);
            }
        } catch (const Error& e) {
            report["error"] = e.what();
            write_text(dir / "report.json", report.dump(2) + "\n");
            save_bundle(dir, b);
            return InstanceStatus{id, false, false, e.what()};
        }
        write_text(dir / "report.json", report.dump(2) + "\n");
        b.stage = Stage::Evaluated;
        b.hashes[std::string(to_string(Stage::Evaluated))] = hash;
        save_bundle(dir, b);
        return InstanceStatus{id, true, false, ""};
    });

    // Aggregate over instances.
    json summary;
    summary["schema"] = 1;
    summary["part"] = cfg.eval.part;
    if (cfg.eval.part == "A") {
        json rows = json::array();
        double sp = 0.0, ss = 0.0, se = 0.0;
        int np = 0, ne = 0;
        for (const auto& id : ids) {
            const fs::path f = workspace / id / "report.json";
            if (!fs::exists(f)) continue;
            const json r = json::parse(read_text(f));
            if (!r.contains("part_a")) continue;
            const json& m = r["part_a"]["mean"];
            rows.push_back({{"object_id", id}, {"psnr", m["psnr"]}, {"ssim", m["ssim"]}, {"ed_r", m["ed_r"]},
                            {"ed_p", m["ed_p"]}});
            sp += m["psnr"].get<double>();
            ss += m["ssim"].get<double>();
            ++np;
            if (m["ed_r"].is_number()) {
                se += m["ed_r"].get<double>();
                ++ne;
            }
        }
        summary["instances"] = rows;
        summary["mean"] = {{"psnr", np > 0 ? json(sp / np) : json(nullptr)},
                           {"ssim", np > 0 ? json(ss / np) : json(nullptr)},
                           {"ed_r", ne > 0 ? json(se / ne) : json(nullptr)},
                           {"lpips", "unavailable"}};
    } else {
        std::vector<PreferenceRecord> all;
        for (const auto& v : per_instance) all.insert(all.end(), v.begin(), v.end());
        const PreferenceSummary s = aggregate_preferences(all);
        summary["preferences"] = preference_summary_json(s);
        summary["table"] = format_preference_table(s);
    }
    write_text(workspace / "summary.json", summary.dump(2) + "\n");
    return result;
}

} // namespace logasset
