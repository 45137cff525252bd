// Copyright Contributors to the logasset project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "logasset/image.hpp"
#include "logasset/logstore.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace logasset {

// Pairwise judge system prompt, version 1, byte-exact.
std::string_view judge_prompt();
inline constexpr std::string_view kJudgePromptVersion = "v1";

enum class JudgeReply { B, C, Error };
std::string_view to_string(JudgeReply reply) noexcept;

// Accepts "[B]", "[C]" or "[ERROR]" with optional surrounding ASCII
// whitespace. Every other input, including invalid UTF-8, maps to Error.
JudgeReply parse_judge_reply(std::string_view text) noexcept;

std::string base64_encode(std::span<const std::uint8_t> bytes);

// Chat-completion request body: the system prompt followed by one user
// message carrying images A, B and C as PNG data URLs, in that order.
nlohmann::json judge_request(const Image& reference, const Image& image_b, const Image& image_c,
                             const std::string& model);

enum class Slot { B, C };
enum class Winner { Ours, Baseline, Invalid };
std::string_view to_string(Slot slot) noexcept;
std::string_view to_string(Winner winner) noexcept;

Winner resolve_winner(Slot ours, JudgeReply reply) noexcept;

// Seeded coin flips deciding which slot our render occupies.
class AssignmentSampler {
public:
    explicit AssignmentSampler(std::uint64_t seed) : seed_(seed), rng_(seed) {}
    Slot next() { return (rng_() >> 63) == 0 ? Slot::B : Slot::C; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 rng_;
};

struct PreferenceRecord {
    std::string instance_id;
    ObjectClass class_label = ObjectClass::Other;
    std::string baseline_name;
    Slot ours = Slot::B;
    JudgeReply reply = JudgeReply::Error;

    [[nodiscard]] Winner winner() const noexcept { return resolve_winner(ours, reply); }
};

struct PreferenceTally {
    std::size_t ours = 0;
    std::size_t baseline = 0;
    std::size_t invalid = 0;

    [[nodiscard]] std::size_t valid() const noexcept { return ours + baseline; }
    // Percentage of valid comparisons won by ours; absent with no valid ones.
    [[nodiscard]] std::optional<double> ours_percent() const;
};

struct PreferenceSummary {
    std::map<std::pair<std::string, ObjectClass>, PreferenceTally> cells; // (baseline, class)
    std::map<std::string, std::optional<double>> class_average;          // macro average per baseline

    [[nodiscard]] std::vector<std::string> baselines() const;
};

PreferenceSummary aggregate_preferences(std::span<const PreferenceRecord> records);

// "72.9 / 27.1" for a rate, "n/a" when absent.
std::string format_preference_pair(std::optional<double> ours_percent);
// Table with one row per class plus an "average" row and one column pair per
// baseline.
std::string format_preference_table(const PreferenceSummary& summary);
nlohmann::json preference_summary_json(const PreferenceSummary& summary);

struct JudgeClientConfig {
    std::string endpoint;                // e.g. https://host/v1/chat/completions
    std::string model = "judge";
    std::string token_env = "LOGASSET_JUDGE_TOKEN";
    int max_in_flight = 4;
    double timeout_s = 60.0;
    int max_retries = 2;
};

struct JudgeOutcome {
    std::optional<JudgeReply> reply; // absent on transport failure
    std::string error;
    int attempts = 0;
};

// Pulls the assistant text out of a chat-completion response body.
std::optional<std::string> extract_reply_text(const std::string& body);

class JudgeClient {
public:
    explicit JudgeClient(JudgeClientConfig config);
    // Throws TransportError after the retries are exhausted.
    JudgeReply ask(const nlohmann::json& payload) const;
    // Runs every request with at most max_in_flight concurrent calls. Results
    // keep the order of `payloads`.
    std::vector<JudgeOutcome> ask_all(std::span<const nlohmann::json> payloads) const;

private:
    JudgeOutcome attempt(const nlohmann::json& payload) const;

    JudgeClientConfig config_;
    std::string scheme_host_;
    std::string path_;
};

} // namespace logasset
