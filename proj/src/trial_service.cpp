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

#include "cvr/trial_service.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <regex>

#include "httplib.h"

#include "cvr/rng.hpp"

namespace cvr::trials {

namespace fs = std::filesystem;
using Code = TrialError::Code;

namespace {

constexpr std::uint64_t kPermutationStream = 0x5C;
constexpr std::uint64_t kTrialStream = 0x7A;
constexpr std::uint64_t kSessionIdStream = 0x1D;

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

std::vector<std::string> permuted(const std::vector<std::string>& pool, std::uint64_t seed) {
    std::vector<std::string> perm = pool;
    Rng rng(derive_seed(seed, {kPermutationStream}));
    rng.shuffle(perm);
    return perm;
}

json key_to_json(const SampleKey& k) {
    return {{"rule_id", k.rule_id}, {"split", std::string(generator::to_string(k.split))}, {"index", k.index}};
}

SampleKey key_from_json(const json& j) {
    auto split = generator::parse_split(j.at("split").get<std::string>());
    if (!split) throw std::runtime_error("bad split in results log");
    return {j.at("rule_id").get<std::string>(), *split, j.at("index").get<std::uint64_t>()};
}

std::string image_url(const SampleKey& k, int panel) {
    return "/images/" + k.rule_id + "/" + std::string(generator::to_string(k.split)) + "/" +
           dataset::panel_file(k.index, panel);
}

}  // namespace

std::string_view to_string(TrialError::Code c) {
    switch (c) {
        case Code::DuplicateSubmission: return "DuplicateSubmission";
        case Code::OutOfOrderSubmission: return "OutOfOrderSubmission";
        case Code::IndexOutOfRange: return "IndexOutOfRange";
        case Code::SessionComplete: return "SessionComplete";
        case Code::UnknownSession: return "UnknownSession";
        case Code::NoRulesAvailable: return "NoRulesAvailable";
    }
    return "?";
}

std::vector<std::string> assign_rules(const std::vector<std::string>& pool, std::uint64_t seed, int ordinal,
                                      int per_session) {
    if (pool.empty() || per_session <= 0) throw TrialError(Code::NoRulesAvailable, "no rules available for trials");
    const auto perm = permuted(pool, seed);
    const std::size_t n = perm.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(per_session), n);
    const std::size_t start = (k * static_cast<std::size_t>(ordinal)) % n;
    std::vector<std::string> out;
    for (std::size_t j = 0; j < k; ++j) out.push_back(perm[(start + j) % n]);
    return out;
}

std::vector<std::uint64_t> assign_trials(const std::vector<std::string>& pool, std::uint64_t seed, int ordinal,
                                         const std::string& rule, int per_session, int per_rule,
                                         std::size_t available) {
    const auto perm = permuted(pool, seed);
    const std::size_t n = perm.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(per_session), n);
    const std::size_t pos = static_cast<std::size_t>(std::find(perm.begin(), perm.end(), rule) - perm.begin());
    std::size_t earlier = 0;
    for (int q = 0; q < ordinal; ++q)
        if ((pos + n - (k * static_cast<std::size_t>(q)) % n) % n < k) ++earlier;

    std::vector<std::uint64_t> indices(available);
    for (std::size_t i = 0; i < available; ++i) indices[i] = i;
    Rng rng(derive_seed(seed, {fnv1a(rule), kTrialStream}));
    rng.shuffle(indices);
    const std::size_t m = static_cast<std::size_t>(per_rule);
    const std::size_t blocks = std::max<std::size_t>(1, available / m);
    const std::size_t block = earlier % blocks;
    return {indices.begin() + static_cast<std::ptrdiff_t>(block * m),
            indices.begin() + static_cast<std::ptrdiff_t>(std::min(available, block * m + m))};
}

struct TrialService::SessionState {
    Session session;
    std::vector<ResponseRecord> records;
    mutable std::mutex mutex;
};

TrialService::TrialService(TrialConfig config) : config_(std::move(config)) {
    const auto manifest = dataset::read_manifest(config_.dataset_root);
    for (const auto& [rule, splits] : manifest.counts) {
        auto it = splits.find(config_.split);
        if (it == splits.end() || it->second < static_cast<std::size_t>(config_.trials_per_rule)) continue;
        pool_.push_back(rule);
        available_[rule] = it->second;
        const auto labels = dataset::read_labels_csv(dataset::split_dir(config_.dataset_root, rule, config_.split) /
                                                     "labels.csv");
        for (std::size_t i = 0; i < labels.size(); ++i) labels_[{rule, config_.split, i}] = labels[i];
    }
    replay();
    log_ = std::fopen(config_.results_log.c_str(), "ab");
    if (!log_) throw dataset::DatasetError(dataset::DatasetError::Code::IoError,
                                           "cannot open results log " + config_.results_log.string());
}

TrialService::~TrialService() {
    if (log_) std::fclose(log_);
}

void TrialService::replay() {
    if (!fs::exists(config_.results_log)) return;
    std::ifstream in(config_.results_log, std::ios::binary);
    std::string line;
    std::uintmax_t good = 0, offset = 0;
    while (std::getline(in, line)) {
        const bool terminated = !in.eof();
        offset += line.size() + (terminated ? 1 : 0);
        json j;
        try {
            if (!terminated) throw std::runtime_error("torn record");
            j = json::parse(line);
        } catch (const std::exception&) {
            if (in.peek() == EOF) break;  // torn final append
            throw dataset::DatasetError(dataset::DatasetError::Code::ParseError, "corrupt results log record");
        }
        good = offset;
        const std::string type = j.at("type").get<std::string>();
        if (type == "session") {
            auto st = std::make_unique<SessionState>();
            Session& s = st->session;
            s.session_id = j.at("session_id").get<std::string>();
            s.participant_id = j.at("participant_id").get<std::string>();
            s.assignment_seed = j.at("assignment_seed").get<std::uint64_t>();
            s.ordinal = j.at("ordinal").get<int>();
            s.rules = j.at("rules").get<std::vector<std::string>>();
            for (const auto& t : j.at("trials")) s.trials.push_back(key_from_json(t));
            s.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
            ordinals_.emplace(s.participant_id, s.ordinal);
            sessions_[s.session_id] = std::move(st);
        } else if (type == "response") {
            ResponseRecord r;
            r.session_id = j.at("session_id").get<std::string>();
            r.rule_id = j.at("rule_id").get<std::string>();
            r.trial_id = j.at("trial_id").get<std::size_t>();
            r.sample = key_from_json(j.at("sample"));
            r.chosen_index = j.at("chosen_index").get<int>();
            r.correct = j.at("correct").get<bool>();
            r.rt_ms = j.at("rt_ms").get<std::int64_t>();
            r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
            auto it = sessions_.find(r.session_id);
            if (it == sessions_.end() || r.trial_id != it->second->records.size())
                throw dataset::DatasetError(dataset::DatasetError::Code::ParseError,
                                            "results log response out of sequence for " + r.session_id);
            it->second->records.push_back(std::move(r));
            it->second->session.cursor = it->second->records.size();
        }
    }
    in.close();
    if (good < fs::file_size(config_.results_log)) fs::resize_file(config_.results_log, good);
}

void TrialService::append(const json& record) {
    const std::string line = record.dump() + "\n";
    std::lock_guard lock(log_mutex_);
    if (std::fwrite(line.data(), 1, line.size(), log_) != line.size() || std::fflush(log_) != 0 ||
        ::fsync(fileno(log_)) != 0)
        throw dataset::DatasetError(dataset::DatasetError::Code::IoError, "failed to append to results log");
}

TrialService::SessionState& TrialService::find(const std::string& session_id) const {
    std::shared_lock lock(sessions_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw TrialError(Code::UnknownSession, "unknown session '" + session_id + "'");
    return *it->second;
}

Session TrialService::create_session(const std::string& participant_id) {
    return create_session(participant_id, config_.assignment_seed);
}

Session TrialService::create_session(const std::string& participant_id, std::uint64_t assignment_seed) {
    std::unique_lock lock(sessions_mutex_);
    const int ordinal = ordinals_.emplace(participant_id, static_cast<int>(ordinals_.size())).first->second;
    Session s;
    s.participant_id = participant_id;
    s.assignment_seed = assignment_seed;
    s.ordinal = ordinal;
    s.rules = assign_rules(pool_, assignment_seed, ordinal, config_.rules_per_session);
    for (const auto& rule : s.rules)
        for (std::uint64_t i : assign_trials(pool_, assignment_seed, ordinal, rule, config_.rules_per_session,
                                             config_.trials_per_rule, available_.at(rule)))
            s.trials.push_back({rule, config_.split, i});
    for (std::uint64_t salt = sessions_.size();; ++salt) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(derive_seed(
                          assignment_seed, {kSessionIdStream, fnv1a(participant_id), static_cast<std::uint64_t>(ordinal), salt})));
        if (!sessions_.contains(buf)) {
            s.session_id = buf;
            break;
        }
    }
    s.created_at_ms = now_ms();

    json trials = json::array();
    for (const auto& t : s.trials) trials.push_back(key_to_json(t));
    append({{"type", "session"},
            {"session_id", s.session_id},
            {"participant_id", s.participant_id},
            {"assignment_seed", s.assignment_seed},
            {"ordinal", s.ordinal},
            {"rules", s.rules},
            {"trials", std::move(trials)},
            {"created_at_ms", s.created_at_ms}});
    auto st = std::make_unique<SessionState>();
    st->session = s;
    sessions_[s.session_id] = std::move(st);
    return s;
}

Session TrialService::session(const std::string& session_id) const {
    const SessionState& st = find(session_id);
    std::lock_guard lock(st.mutex);
    return st.session;
}

std::vector<Session> TrialService::sessions() const {
    std::shared_lock lock(sessions_mutex_);
    std::vector<Session> out;
    for (const auto& [id, st] : sessions_) {
        std::lock_guard l(st->mutex);
        out.push_back(st->session);
    }
    std::sort(out.begin(), out.end(), [](const Session& a, const Session& b) {
        return std::tie(a.created_at_ms, a.session_id) < std::tie(b.created_at_ms, b.session_id);
    });
    return out;
}

TrialPayload TrialService::next_trial(const std::string& session_id) const {
    const SessionState& st = find(session_id);
    std::lock_guard lock(st.mutex);
    const Session& s = st.session;
    if (s.cursor >= s.trials.size()) throw TrialError(Code::SessionComplete, "session " + session_id + " is complete");
    TrialPayload p;
    p.session_id = s.session_id;
    p.trial_id = s.cursor;
    p.rule_id = s.trials[s.cursor].rule_id;
    const std::size_t per_rule = static_cast<std::size_t>(config_.trials_per_rule);
    p.rule_number = static_cast<int>(s.cursor / per_rule) + 1;
    p.trial_number = static_cast<int>(s.cursor % per_rule) + 1;
    p.rules_total = static_cast<int>(s.rules.size());
    p.trials_per_rule = config_.trials_per_rule;
    for (int i = 0; i < 4; ++i) p.panels[i] = image_url(s.trials[s.cursor], i);
    return p;
}

SubmitResult TrialService::submit_response(const std::string& session_id, std::size_t trial_id, int chosen_index,
                                           std::int64_t rt_ms) {
    SessionState& st = find(session_id);
    std::lock_guard lock(st.mutex);
    Session& s = st.session;
    if (chosen_index < 0 || chosen_index > 3)
        throw TrialError(Code::IndexOutOfRange, "chosen_index must be in 0..3");
    if (trial_id >= s.trials.size())
        throw TrialError(Code::IndexOutOfRange, "trial_id " + std::to_string(trial_id) + " does not exist");
    if (trial_id < s.cursor)
        throw TrialError(Code::DuplicateSubmission, "trial " + std::to_string(trial_id) + " was already answered");
    if (trial_id > s.cursor)
        throw TrialError(Code::OutOfOrderSubmission,
                         "trial " + std::to_string(trial_id) + " is not current (" + std::to_string(s.cursor) + ")");

    ResponseRecord r;
    r.session_id = s.session_id;
    r.sample = s.trials[trial_id];
    r.rule_id = r.sample.rule_id;
    r.trial_id = trial_id;
    r.chosen_index = chosen_index;
    r.correct = labels_.at(r.sample) == chosen_index;
    r.rt_ms = rt_ms;
    r.timestamp_ms = now_ms();
    append({{"type", "response"},
            {"session_id", r.session_id},
            {"rule_id", r.rule_id},
            {"trial_id", r.trial_id},
            {"sample", key_to_json(r.sample)},
            {"chosen_index", r.chosen_index},
            {"correct", r.correct},
            {"rt_ms", r.rt_ms},
            {"timestamp_ms", r.timestamp_ms}});
    st.records.push_back(r);
    s.cursor = st.records.size();

    SubmitResult result;
    if (config_.feedback) result.correct = r.correct;
    result.session_complete = s.cursor == s.trials.size();
    return result;
}

std::vector<ResponseRecord> TrialService::responses(const std::optional<std::string>& session_id) const {
    std::vector<ResponseRecord> out;
    if (session_id) {
        const SessionState& st = find(*session_id);
        std::lock_guard lock(st.mutex);
        return st.records;
    }
    for (const auto& s : sessions()) {
        const SessionState& st = find(s.session_id);
        std::lock_guard lock(st.mutex);
        out.insert(out.end(), st.records.begin(), st.records.end());
    }
    return out;
}

Summary TrialService::summary(const std::optional<std::string>& session_id) const {
    Summary out;
    out.sessions = session_id ? (find(*session_id), 1) : sessions().size();
    for (const auto& r : responses(session_id)) {
        auto& rule = out.accuracy.per_rule[r.rule_id];
        ++rule.total;
        ++out.accuracy.total;
        if (r.correct) {
            ++rule.correct;
            ++out.accuracy.correct;
        }
    }
    out.tasks_above_80 = eval::tasks_above(out.accuracy.rule_percent());
    return out;
}

dataset::PredictionFile TrialService::export_predictions(const std::optional<std::string>& session_id) const {
    dataset::PredictionFile f;
    f.model = session_id ? "participant:" + session(*session_id).participant_id : "human";
    for (const auto& r : responses(session_id)) f.rows.push_back({r.sample, r.chosen_index});
    return f;
}

std::optional<fs::path> TrialService::image_path(const std::string& rule, const std::string& split,
                                                 const std::string& file) const {
    static const std::regex kFile(R"(([0-9]{1,18})_([0-3])\.png)");
    std::smatch m;
    if (!available_.contains(rule) || !std::regex_match(file, m, kFile)) return std::nullopt;
    auto sp = generator::parse_split(split);
    if (!sp) return std::nullopt;
    fs::path p = dataset::split_dir(config_.dataset_root, rule, *sp) / file;
    if (!fs::is_regular_file(p)) return std::nullopt;
    return p;
}

int TrialService::label(const SampleKey& key) const { return labels_.at(key); }

json to_json(const Session& s) {
    return {{"session_id", s.session_id},
            {"participant_id", s.participant_id},
            {"rules", s.rules},
            {"trials_total", s.trials.size()},
            {"cursor", s.cursor},
            {"created_at_ms", s.created_at_ms}};
}

json to_json(const TrialPayload& p) {
    return {{"session_id", p.session_id},
            {"trial_id", p.trial_id},
            {"rule_number", p.rule_number},
            {"trial_number", p.trial_number},
            {"rules_total", p.rules_total},
            {"trials_per_rule", p.trials_per_rule},
            {"panels", p.panels}};
}

json to_json(const Summary& s) {
    json rules = json::object();
    for (const auto& [rule, acc] : s.accuracy.per_rule)
        rules[rule] = {{"accuracy", acc.percent()}, {"correct", acc.correct}, {"total", acc.total}};
    return {{"accuracy", s.accuracy.percent()},
            {"correct", s.accuracy.correct},
            {"total", s.accuracy.total},
            {"tasks_above_80", s.tasks_above_80},
            {"sessions", s.sessions},
            {"rules", std::move(rules)}};
}

namespace {

int status_for(Code c) {
    switch (c) {
        case Code::UnknownSession: return 404;
        case Code::IndexOutOfRange: return 400;
        case Code::NoRulesAvailable: return 503;
        default: return 409;
    }
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename F>
auto guarded(F&& f) {
    return [f = std::forward<F>(f)](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const TrialError& e) {
            send_json(res, status_for(e.code()), {{"error", std::string(to_string(e.code()))}, {"message", e.what()}});
        } catch (const json::exception& e) {
            send_json(res, 400, {{"error", "BadRequest"}, {"message", e.what()}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
        }
    };
}

std::optional<std::string> scope_of(const httplib::Request& req) {
    return req.matches.size() > 1 ? std::optional<std::string>(req.matches[1].str()) : std::nullopt;
}

}  // namespace

TrialServer::TrialServer(TrialService& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    auto& svc = service_;
    server_->Post("/sessions", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                      const json body = json::parse(req.body);
                      const std::string participant = body.at("participant_id").get<std::string>();
                      const Session s = body.contains("assignment_seed")
                                            ? svc.create_session(participant, body["assignment_seed"].get<std::uint64_t>())
                                            : svc.create_session(participant);
                      send_json(res, 201, to_json(s));
                  }));
    server_->Get(R"(/sessions/([0-9a-f]+))", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                     send_json(res, 200, to_json(svc.session(req.matches[1].str())));
                 }));
    server_->Get(R"(/sessions/([0-9a-f]+)/next)", guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                     send_json(res, 200, to_json(svc.next_trial(req.matches[1].str())));
                 }));
    server_->Post(R"(/sessions/([0-9a-f]+)/responses)",
                  guarded([&svc](const httplib::Request& req, httplib::Response& res) {
                      const json body = json::parse(req.body);
                      const auto trial = body.at("trial_id").get<std::int64_t>();
                      if (trial < 0) throw TrialError(Code::IndexOutOfRange, "trial_id must be non-negative");
                      const SubmitResult r =
                          svc.submit_response(req.matches[1].str(), static_cast<std::size_t>(trial),
                                              body.at("chosen_index").get<int>(), body.value("rt_ms", std::int64_t{0}));
                      json out = {{"accepted", true}, {"session_complete", r.session_complete}};
                      if (r.correct) out["correct"] = *r.correct;
                      send_json(res, 200, out);
                  }));
    auto summary = guarded([&svc](const httplib::Request& req, httplib::Response& res) {
        const auto scope = scope_of(req);
        if (req.get_param_value("format") == "predictions") {
            res.set_content(dataset::format_predictions(svc.export_predictions(scope)), "text/csv");
            return;
        }
        send_json(res, 200, to_json(svc.summary(scope)));
    });
    server_->Get(R"(/sessions/([0-9a-f]+)/summary)", summary);
    server_->Get("/summary", summary);
    server_->Get(R"(/images/([^/]+)/([^/]+)/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
        const auto path = svc.image_path(req.matches[1].str(), req.matches[2].str(), req.matches[3].str());
        if (!path) {
            send_json(res, 404, {{"error", "NotFound"}});
            return;
        }
        const auto bytes = dataset::read_file(*path);
        res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    });
}

TrialServer::~TrialServer() = default;

int TrialServer::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    return server_->bind_to_port(host, port) ? port : -1;
}

bool TrialServer::listen() { return server_->listen_after_bind(); }

void TrialServer::stop() { server_->stop(); }

}  // namespace cvr::trials
