// Copyright 2026 The CVR Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvr/dataset_io.hpp"
#include "cvr/evalharness.hpp"

namespace httplib {
class Server;
}

namespace cvr::trials {

using dataset::SampleKey;
using generator::Split;
using json = nlohmann::json;

class TrialError : public std::runtime_error {
public:
    enum class Code {
        DuplicateSubmission,
        OutOfOrderSubmission,
        IndexOutOfRange,
        SessionComplete,
        UnknownSession,
        NoRulesAvailable,
    };
    TrialError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

std::string_view to_string(TrialError::Code c);

struct TrialConfig {
    std::filesystem::path dataset_root;
    std::filesystem::path results_log;
    std::uint64_t assignment_seed = 0;
    Split split = Split::Val;
    bool feedback = true;
    int rules_per_session = 6;
    int trials_per_rule = 20;
};

struct Session {
    std::string session_id;
    std::string participant_id;
    std::uint64_t assignment_seed = 0;
    int ordinal = 0;
    std::vector<std::string> rules;
    std::vector<SampleKey> trials;  // rule-major, trials_per_rule per rule
    std::size_t cursor = 0;
    std::int64_t created_at_ms = 0;
};

struct ResponseRecord {
    std::string session_id;
    std::string rule_id;
    std::size_t trial_id = 0;
    SampleKey sample;
    int chosen_index = 0;
    bool correct = false;
    std::int64_t rt_ms = 0;
    std::int64_t timestamp_ms = 0;
};

struct TrialPayload {
    std::string session_id;
    std::size_t trial_id = 0;
    std::string rule_id;
    int rule_number = 0;   // 1-based position among the session's rules
    int trial_number = 0;  // 1-based position within the rule
    int rules_total = 0;
    int trials_per_rule = 0;
    std::array<std::string, 4> panels;  // image URLs
};

struct SubmitResult {
    std::optional<bool> correct;  // empty when feedback is off
    bool session_complete = false;
};

struct Summary {
    eval::AccuracyReport accuracy;
    int tasks_above_80 = 0;
    std::size_t sessions = 0;
};

/// Rules for participant `ordinal`: a seeded permutation of `pool`, read as a
/// ring, and the window [k * ordinal, k * ordinal + k) of it.
std::vector<std::string> assign_rules(const std::vector<std::string>& pool, std::uint64_t seed, int ordinal,
                                      int per_session);

/// Sample indices shown to participant `ordinal` for `rule`. Participants who
/// see the same rule receive disjoint blocks while the split allows it.
std::vector<std::uint64_t> assign_trials(const std::vector<std::string>& pool, std::uint64_t seed, int ordinal,
                                         const std::string& rule, int per_session, int per_rule,
                                         std::size_t available);

/// Session bookkeeping over a generated dataset, persisted to an append-only
/// JSONL log that is replayed on construction. Thread-safe.
class TrialService {
public:
    explicit TrialService(TrialConfig config);
    ~TrialService();

    const TrialConfig& config() const { return config_; }
    const std::vector<std::string>& rule_pool() const { return pool_; }

    Session create_session(const std::string& participant_id);
    Session create_session(const std::string& participant_id, std::uint64_t assignment_seed);
    Session session(const std::string& session_id) const;
    std::vector<Session> sessions() const;

    TrialPayload next_trial(const std::string& session_id) const;
    SubmitResult submit_response(const std::string& session_id, std::size_t trial_id, int chosen_index,
                                 std::int64_t rt_ms);

    std::vector<ResponseRecord> responses(const std::optional<std::string>& session_id = std::nullopt) const;
    Summary summary(const std::optional<std::string>& session_id = std::nullopt) const;
    dataset::PredictionFile export_predictions(const std::optional<std::string>& session_id = std::nullopt) const;

    /// Path of a panel image inside the dataset, or nullopt for a malformed
    /// or unknown reference.
    std::optional<std::filesystem::path> image_path(const std::string& rule, const std::string& split,
                                                    const std::string& file) const;

    /// Stored label; used by scripted agents and tests, never by the HTTP API.
    int label(const SampleKey& key) const;

private:
    struct SessionState;

    void append(const json& record);
    void replay();
    SessionState& find(const std::string& session_id) const;

    TrialConfig config_;
    std::vector<std::string> pool_;
    std::map<SampleKey, int> labels_;
    std::map<std::string, std::size_t> available_;

    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::unique_ptr<SessionState>> sessions_;
    std::map<std::string, int> ordinals_;
    std::vector<ResponseRecord> log_records_;

    std::mutex log_mutex_;
    std::FILE* log_ = nullptr;
};

json to_json(const Session& s);
json to_json(const TrialPayload& p);
json to_json(const Summary& s);

/// HTTP front end. Routes:
///   POST /sessions                       {participant_id[, assignment_seed]}
///   GET  /sessions/{id}
///   GET  /sessions/{id}/next
///   POST /sessions/{id}/responses        {trial_id, chosen_index, rt_ms}
///   GET  /sessions/{id}/summary[?format=predictions]
///   GET  /summary[?format=predictions]
///   GET  /images/{rule}/{split}/{index}_{panel}.png
class TrialServer {
public:
    explicit TrialServer(TrialService& service);
    ~TrialServer();

    /// Binds; port 0 picks a free port. Returns the bound port or -1.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    bool listen();
    void stop();

private:
    TrialService& service_;
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace cvr::trials
