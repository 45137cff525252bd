// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#include "logasset/judge.hpp"

#include "logasset/error.hpp"
#include "logasset/judge_prompt.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

namespace logasset {

std::string_view judge_prompt() { return generated::kJudgePromptV1; }

std::string_view to_string(JudgeReply reply) noexcept {
    switch (reply) {
    case JudgeReply::B: return "B";
    case JudgeReply::C: return "C";
    case JudgeReply::Error: return "ERROR";
    }
    return "ERROR";
}

std::string_view to_string(Slot slot) noexcept { return slot == Slot::B ? "B" : "C"; }

std::string_view to_string(Winner winner) noexcept {
    switch (winner) {
    case Winner::Ours: return "ours";
    case Winner::Baseline: return "baseline";
    case Winner::Invalid: return "invalid";
    }
    return "invalid";
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

} // namespace

JudgeReply parse_judge_reply(std::string_view text) noexcept {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    const std::string_view core = text.substr(b, e - b);
    if (core == "[B]") return JudgeReply::B;
    if (core == "[C]") return JudgeReply::C;
    return JudgeReply::Error;
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(),
                                  static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

nlohmann::json judge_request(const Image& reference, const Image& image_b, const Image& image_c,
                             const std::string& model) {
    auto image_part = [](const Image& img) {
        const auto png = encode_png(img);
        return nlohmann::json{{"type", "image_url"},
                              {"image_url", {{"url", "data:image/png;base64," + base64_encode(png)}}}};
    };
    nlohmann::json content = nlohmann::json::array();
    content.push_back(image_part(reference));
    content.push_back(image_part(image_b));
    content.push_back(image_part(image_c));
    return {{"model", model},
            {"messages",
             nlohmann::json::array({{{"role", "system"}, {"content", std::string(judge_prompt())}},
                                    {{"role", "user"}, {"content", content}}})}};
}

Winner resolve_winner(Slot ours, JudgeReply reply) noexcept {
    if (reply == JudgeReply::Error) return Winner::Invalid;
    const bool ours_picked = (reply == JudgeReply::B) == (ours == Slot::B);
    return ours_picked ? Winner::Ours : Winner::Baseline;
}

std::optional<double> PreferenceTally::ours_percent() const {
    if (valid() == 0) return std::nullopt;
    return 100.0 * static_cast<double>(ours) / static_cast<double>(valid());
}

std::vector<std::string> PreferenceSummary::baselines() const {
    std::vector<std::string> out;
    for (const auto& [name, avg] : class_average) out.push_back(name);
    return out;
}

PreferenceSummary aggregate_preferences(std::span<const PreferenceRecord> records) {
    PreferenceSummary s;
    for (const auto& r : records) {
        auto& cell = s.cells[{r.baseline_name, r.class_label}];
        switch (r.winner()) {
        case Winner::Ours: ++cell.ours; break;
        case Winner::Baseline: ++cell.baseline; break;
        case Winner::Invalid: ++cell.invalid; break;
        }
        s.class_average.try_emplace(r.baseline_name);
    }
    for (auto& [baseline, avg] : s.class_average) {
        double sum = 0.0;
        int n = 0;
        for (const auto cls : kObjectClasses) {
            const auto it = s.cells.find({baseline, cls});
            if (it == s.cells.end()) continue;
            if (const auto p = it->second.ours_percent()) {
                sum += *p;
                ++n;
            }
        }
        if (n > 0) avg = sum / n;
    }
    return s;
}

std::string format_preference_pair(std::optional<double> ours_percent) {
    if (!ours_percent) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << *ours_percent << " / " << (100.0 - *ours_percent);
    return os.str();
}

std::string format_preference_table(const PreferenceSummary& summary) {
    std::ostringstream os;
    const auto baselines = summary.baselines();
    os << std::left << std::setw(20) << "class";
    for (const auto& b : baselines) os << " | " << std::setw(16) << ("ours vs " + b);
    os << '\n';
    for (const auto cls : kObjectClasses) {
        os << std::left << std::setw(20) << to_string(cls);
        for (const auto& b : baselines) {
            const auto it = summary.cells.find({b, cls});
            const auto pct = it == summary.cells.end() ? std::nullopt : it->second.ours_percent();
            os << " | " << std::setw(16) << format_preference_pair(pct);
        }
        os << '\n';
    }
    os << std::left << std::setw(20) << "average";
    for (const auto& b : baselines) os << " | " << std::setw(16) << format_preference_pair(summary.class_average.at(b));
    os << '\n';
    return os.str();
}

nlohmann::json preference_summary_json(const PreferenceSummary& summary) {
    nlohmann::json j;
    j["schema"] = 1;
    j["baselines"] = nlohmann::json::object();
    for (const auto& b : summary.baselines()) {
        nlohmann::json entry;
        for (const auto cls : kObjectClasses) {
            const auto it = summary.cells.find({b, cls});
            if (it == summary.cells.end()) continue;
            const auto& t = it->second;
            const auto pct = t.ours_percent();
            entry["classes"][std::string(to_string(cls))] = {
                {"ours", t.ours},
                {"baseline", t.baseline},
                {"invalid", t.invalid},
                {"ours_percent", pct ? nlohmann::json(*pct) : nlohmann::json(nullptr)}};
        }
        const auto avg = summary.class_average.at(b);
        entry["average_ours_percent"] = avg ? nlohmann::json(*avg) : nlohmann::json(nullptr);
        entry["row"] = format_preference_pair(avg);
        j["baselines"][b] = entry;
    }
    return j;
}

std::optional<std::string> extract_reply_text(const std::string& body) {
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty()) return std::nullopt;
    const auto& first = (*choices)[0];
    if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) return std::nullopt;
    const auto& msg = first["message"];
    if (!msg.contains("content") || !msg["content"].is_string()) return std::nullopt;
    return msg["content"].get<std::string>();
}

JudgeClient::JudgeClient(JudgeClientConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.endpoint.find("://");
    if (scheme_end == std::string::npos) {
        fail(ErrorCode::InvalidConfig, "judge endpoint '" + config_.endpoint + "' has no scheme");
    }
    const auto path_start = config_.endpoint.find('/', scheme_end + 3);
    scheme_host_ = config_.endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.endpoint.substr(path_start);
    if (config_.max_in_flight < 1 || config_.max_retries < 0 || !(config_.timeout_s > 0.0)) {
        fail(ErrorCode::InvalidConfig, "judge client limits must be positive");
    }
}

JudgeOutcome JudgeClient::attempt(const nlohmann::json& payload) const {
    JudgeOutcome out;
    httplib::Client client(scheme_host_);
    const auto timeout = std::chrono::duration<double>(config_.timeout_s);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
    if (const char* token = std::getenv(config_.token_env.c_str()); token != nullptr && *token != '\0') {
        client.set_bearer_token_auth(token);
    }
    const std::string body = payload.dump();
    for (int i = 0; i <= config_.max_retries; ++i) {
        ++out.attempts;
        const auto res = client.Post(path_, body, "application/json");
        if (!res) {
            out.error = "transport: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            out.error = "http status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            out.error = "http status " + std::to_string(res->status);
            return out;
        }
        const auto text = extract_reply_text(res->body);
        out.reply = text ? parse_judge_reply(*text) : JudgeReply::Error;
        out.error.clear();
        return out;
    }
    return out;
}

JudgeReply JudgeClient::ask(const nlohmann::json& payload) const {
    const JudgeOutcome o = attempt(payload);
    if (!o.reply) {
        fail(ErrorCode::TransportError, o.error);
    }
    return *o.reply;
}

std::vector<JudgeOutcome> JudgeClient::ask_all(std::span<const nlohmann::json> payloads) const {
    std::vector<JudgeOutcome> results(payloads.size());
    std::atomic<std::size_t> next{0};
    const std::size_t n_workers = std::min<std::size_t>(static_cast<std::size_t>(config_.max_in_flight),
                                                        std::max<std::size_t>(1, payloads.size()));
    std::vector<std::thread> workers;
    workers.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next++; i < payloads.size(); i = next++) {
                results[i] = attempt(payloads[i]);
            }
        });
    }
    for (auto& t : workers) t.join();
    return results;
}

} // namespace logasset
