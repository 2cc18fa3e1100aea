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

#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "httplib.h"

#include "cvr/trial_service.hpp"

namespace cvr::trials {
namespace {

namespace fs = std::filesystem;
using Code = TrialError::Code;

std::vector<std::string> names(int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back("rule_" + std::to_string(i));
    return out;
}

template <typename F>
Code code_of(F&& f) {
    try {
        f();
    } catch (const TrialError& e) {
        return e.code();
    }
    ADD_FAILURE() << "no TrialError thrown";
    return Code::NoRulesAvailable;
}

TEST(Scheduler, TwentyOneParticipantsCoverEveryRuleTwoOrThreeTimes) {
    const auto pool = names(45);
    std::map<std::string, int> coverage;
    for (int p = 0; p < 21; ++p) {
        const auto rules = assign_rules(pool, 11, p, 6);
        ASSERT_EQ(rules.size(), 6u);
        EXPECT_EQ(std::set<std::string>(rules.begin(), rules.end()).size(), 6u);
        for (const auto& r : rules) ++coverage[r];
    }
    ASSERT_EQ(coverage.size(), 45u);
    int slots = 0;
    for (const auto& [rule, c] : coverage) {
        EXPECT_TRUE(c == 2 || c == 3) << rule << " " << c;
        slots += c;
    }
    EXPECT_EQ(slots, 126);
}

TEST(Scheduler, DeterministicInSeed) {
    const auto pool = names(45);
    EXPECT_EQ(assign_rules(pool, 5, 3, 6), assign_rules(pool, 5, 3, 6));
    EXPECT_NE(assign_rules(pool, 5, 0, 6), assign_rules(pool, 6, 0, 6));
    EXPECT_EQ(assign_trials(pool, 5, 3, "rule_7", 6, 20, 500), assign_trials(pool, 5, 3, "rule_7", 6, 20, 500));
}

TEST(Scheduler, SingleParticipantGetsSixDistinctRules) {
    const auto rules = assign_rules(names(45), 0, 0, 6);
    EXPECT_EQ(std::set<std::string>(rules.begin(), rules.end()).size(), 6u);
    EXPECT_EQ(assign_rules(names(4), 0, 0, 6).size(), 4u);
    EXPECT_EQ(code_of([] { assign_rules({}, 0, 0, 6); }), Code::NoRulesAvailable);
}

TEST(Scheduler, ParticipantsSharingARuleSeeDisjointSamples) {
    const auto pool = names(45);
    std::map<std::string, std::set<std::uint64_t>> seen;
    std::map<std::string, std::size_t> shown;
    for (int p = 0; p < 21; ++p)
        for (const auto& r : assign_rules(pool, 3, p, 6)) {
            const auto idx = assign_trials(pool, 3, p, r, 6, 20, 500);
            ASSERT_EQ(idx.size(), 20u);
            seen[r].insert(idx.begin(), idx.end());
            shown[r] += idx.size();
        }
    for (const auto& [r, s] : seen) {
        EXPECT_EQ(s.size(), shown[r]) << r;
        for (auto i : s) EXPECT_LT(i, 500u);
    }
}

// A small val-split dataset over the elementary rules, built once.
class Service : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "cvr_trials_ds";
        fs::remove_all(root_);
        auto rules = rules::load_registry(fs::path(CVR_SOURCE_DIR) / "rules" / "manifest.json");
        rules.erase(rules.begin() + 9, rules.end());
        dataset::GenerateOptions opt;
        opt.master_seed = 99;
        opt.image_size = 32;
        opt.counts = {{Split::Val, 60}};
        dataset::write_dataset(root_, rules, opt);
        labels_ = dataset::read_labels(root_);
    }
    static void TearDownTestSuite() { fs::remove_all(root_); }

    void SetUp() override {
        log_ = fs::temp_directory_path() /
               ("cvr_trials_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + ".jsonl");
        fs::remove(log_);
    }
    void TearDown() override { fs::remove(log_); }

    TrialConfig config(bool feedback = true) const {
        TrialConfig c;
        c.dataset_root = root_;
        c.results_log = log_;
        c.assignment_seed = 17;
        c.feedback = feedback;
        return c;
    }

    static inline fs::path root_;
    static inline std::map<SampleKey, int> labels_;
    fs::path log_;
};

TEST_F(Service, SessionShape) {
    TrialService svc(config());
    EXPECT_EQ(svc.rule_pool().size(), 9u);
    const Session s = svc.create_session("p1");
    ASSERT_EQ(s.rules.size(), 6u);
    ASSERT_EQ(s.trials.size(), 120u);
    for (std::size_t i = 0; i < s.trials.size(); ++i) {
        EXPECT_EQ(s.trials[i].rule_id, s.rules[i / 20]);
        EXPECT_EQ(s.trials[i].split, Split::Val);
    }
    EXPECT_EQ(svc.session(s.session_id).trials, s.trials);
    EXPECT_EQ(svc.create_session("p1").rules, s.rules);
    EXPECT_NE(svc.create_session("p2").rules, s.rules);
}

TEST_F(Service, OracleAgentScoresPerfectly) {
    TrialService svc(config());
    const Session s = svc.create_session("oracle");
    for (;;) {
        const TrialPayload p = svc.next_trial(s.session_id);
        const SubmitResult r = svc.submit_response(s.session_id, p.trial_id, svc.label(s.trials[p.trial_id]), 500);
        ASSERT_TRUE(r.correct && *r.correct);
        if (r.session_complete) break;
    }
    EXPECT_EQ(code_of([&] { svc.next_trial(s.session_id); }), Code::SessionComplete);
    const Summary sum = svc.summary(s.session_id);
    EXPECT_EQ(sum.accuracy.percent(), 100.0);
    EXPECT_EQ(sum.accuracy.total, 120u);
    EXPECT_EQ(sum.tasks_above_80, 6);
}

TEST_F(Service, SummaryEqualsEvalOnExport) {
    TrialService svc(config());
    Rng rng(5);
    for (int p = 0; p < 4; ++p) {
        const Session s = svc.create_session("p" + std::to_string(p));
        const std::size_t answered = p == 3 ? 37 : s.trials.size();
        for (std::size_t t = 0; t < answered; ++t) {
            const int truth = svc.label(s.trials[t]);
            const int chosen = rng.bernoulli(0.6) ? truth : static_cast<int>(rng.uniform_int(0, 3));
            svc.submit_response(s.session_id, t, chosen, 100);
        }
    }
    const auto check = [&](const std::optional<std::string>& scope) {
        const Summary sum = svc.summary(scope);
        const auto exported = svc.export_predictions(scope);
        const auto reparsed = dataset::parse_predictions(dataset::format_predictions(exported));
        const auto report = eval::accuracy(reparsed, labels_);
        EXPECT_EQ(sum.accuracy.correct, report.correct);
        EXPECT_EQ(sum.accuracy.total, report.total);
        EXPECT_EQ(sum.accuracy.percent(), report.percent());
        EXPECT_EQ(sum.accuracy.rule_percent(), report.rule_percent());
        EXPECT_EQ(sum.tasks_above_80, eval::tasks_above(report.rule_percent()));
    };
    check(std::nullopt);
    for (const auto& s : svc.sessions()) check(s.session_id);
    EXPECT_EQ(svc.export_predictions().model, "human");
    EXPECT_EQ(svc.summary().sessions, 4u);
}

TEST_F(Service, SubmissionErrors) {
    TrialService svc(config());
    const Session s = svc.create_session("p");
    EXPECT_EQ(code_of([&] { svc.submit_response(s.session_id, 0, 5, 0); }), Code::IndexOutOfRange);
    EXPECT_EQ(code_of([&] { svc.submit_response(s.session_id, 0, -1, 0); }), Code::IndexOutOfRange);
    EXPECT_EQ(code_of([&] { svc.submit_response(s.session_id, 120, 0, 0); }), Code::IndexOutOfRange);
    EXPECT_EQ(code_of([&] { svc.submit_response(s.session_id, 1, 0, 0); }), Code::OutOfOrderSubmission);
    svc.submit_response(s.session_id, 0, 2, 0);
    const auto before = fs::file_size(log_);
    EXPECT_EQ(code_of([&] { svc.submit_response(s.session_id, 0, 1, 0); }), Code::DuplicateSubmission);
    EXPECT_EQ(fs::file_size(log_), before);
    EXPECT_EQ(svc.responses(s.session_id).size(), 1u);
    EXPECT_EQ(svc.responses(s.session_id)[0].chosen_index, 2);
    EXPECT_EQ(code_of([&] { svc.next_trial("0000000000000000"); }), Code::UnknownSession);
    EXPECT_EQ(code_of([&] { svc.submit_response("nope", 0, 0, 0); }), Code::UnknownSession);
}

TEST_F(Service, FeedbackOff) {
    TrialService svc(config(false));
    const Session s = svc.create_session("p");
    const SubmitResult r = svc.submit_response(s.session_id, 0, svc.label(s.trials[0]), 0);
    EXPECT_FALSE(r.correct.has_value());
    EXPECT_TRUE(svc.responses(s.session_id)[0].correct);
}

TEST_F(Service, PayloadsCarryNoAnswer) {
    TrialService svc(config());
    const Session s = svc.create_session("p");
    for (std::size_t t = 0; t < 25; ++t) {
        const TrialPayload p = svc.next_trial(s.session_id);
        EXPECT_EQ(p.trial_id, t);
        EXPECT_EQ(p.rule_number, static_cast<int>(t / 20) + 1);
        EXPECT_EQ(p.trial_number, static_cast<int>(t % 20) + 1);
        const std::string body = to_json(p).dump();
        EXPECT_EQ(body.find("outlier"), std::string::npos);
        EXPECT_EQ(body.find("correct"), std::string::npos);
        for (int i = 0; i < 4; ++i) {
            const auto& url = p.panels[static_cast<std::size_t>(i)];
            EXPECT_EQ(url.substr(url.size() - 6), "_" + std::to_string(i) + ".png");
        }
        svc.submit_response(s.session_id, t, 0, 0);
    }
    const std::string session_body = to_json(svc.session(s.session_id)).dump();
    EXPECT_EQ(session_body.find("outlier"), std::string::npos);
}

TEST_F(Service, ReplayRestoresSessions) {
    std::string id;
    std::vector<ResponseRecord> before;
    {
        TrialService svc(config());
        id = svc.create_session("p").session_id;
        for (std::size_t t = 0; t < 7; ++t) svc.submit_response(id, t, static_cast<int>(t % 4), 10);
        before = svc.responses(id);
    }
    TrialService svc(config());
    EXPECT_EQ(svc.session(id).cursor, 7u);
    const auto after = svc.responses(id);
    ASSERT_EQ(after.size(), before.size());
    for (std::size_t i = 0; i < after.size(); ++i) {
        EXPECT_EQ(after[i].sample, before[i].sample);
        EXPECT_EQ(after[i].correct, before[i].correct);
    }
    EXPECT_EQ(svc.next_trial(id).trial_id, 7u);
    svc.submit_response(id, 7, 0, 0);
    EXPECT_EQ(svc.create_session("p").ordinal, 0);
    EXPECT_EQ(svc.create_session("q").ordinal, 1);
}

TEST_F(Service, TornFinalRecordIsDropped) {
    std::string id;
    {
        TrialService svc(config());
        id = svc.create_session("p").session_id;
        for (std::size_t t = 0; t < 3; ++t) svc.submit_response(id, t, 0, 0);
    }
    const auto intact = fs::file_size(log_);
    {
        std::ofstream out(log_, std::ios::app | std::ios::binary);
        out << R"({"type":"response","session_id":")" << id << R"(","rule_id":)";
    }
    TrialService svc(config());
    EXPECT_EQ(svc.session(id).cursor, 3u);
    EXPECT_EQ(fs::file_size(log_), intact);
    svc.submit_response(id, 3, 1, 0);
    TrialService again(config());
    EXPECT_EQ(again.session(id).cursor, 4u);
}

TEST_F(Service, ImagePaths) {
    TrialService svc(config());
    const std::string rule = svc.rule_pool()[0];
    const auto p = svc.image_path(rule, "val", "3_2.png");
    ASSERT_TRUE(p);
    EXPECT_TRUE(fs::exists(*p));
    EXPECT_FALSE(svc.image_path(rule, "val", "../labels.csv"));
    EXPECT_FALSE(svc.image_path(rule, "val", "3_4.png"));
    EXPECT_FALSE(svc.image_path("nope", "val", "3_2.png"));
    EXPECT_FALSE(svc.image_path(rule, "bogus", "3_2.png"));
}

TEST_F(Service, Http) {
    TrialService svc(config());
    TrialServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    ASSERT_GT(port, 0);
    std::thread t([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);

    auto created = cli.Post("/sessions", R"({"participant_id":"web"})", "application/json");
    ASSERT_TRUE(created);
    EXPECT_EQ(created->status, 201);
    const json session = json::parse(created->body);
    const std::string id = session["session_id"];
    EXPECT_EQ(session["rules"].size(), 6u);

    auto next = cli.Get("/sessions/" + id + "/next");
    ASSERT_TRUE(next);
    EXPECT_EQ(next->status, 200);
    const json payload = json::parse(next->body);
    EXPECT_EQ(payload["trial_id"], 0);
    EXPECT_EQ(next->body.find("outlier"), std::string::npos);

    auto img = cli.Get(payload["panels"][0].get<std::string>());
    ASSERT_TRUE(img);
    EXPECT_EQ(img->status, 200);
    EXPECT_EQ(img->get_header_value("Content-Type"), "image/png");
    EXPECT_EQ(img->body.substr(1, 3), "PNG");

    const int truth = svc.label(svc.session(id).trials[0]);
    const std::string answer = json{{"trial_id", 0}, {"chosen_index", truth}, {"rt_ms", 812}}.dump();
    auto resp = cli.Post("/sessions/" + id + "/responses", answer, "application/json");
    ASSERT_TRUE(resp);
    EXPECT_EQ(resp->status, 200);
    EXPECT_EQ(json::parse(resp->body)["correct"], true);

    auto dup = cli.Post("/sessions/" + id + "/responses", answer, "application/json");
    EXPECT_EQ(dup->status, 409);
    EXPECT_EQ(json::parse(dup->body)["error"], "DuplicateSubmission");
    auto bad = cli.Post("/sessions/" + id + "/responses", R"({"trial_id":1,"chosen_index":5})", "application/json");
    EXPECT_EQ(bad->status, 400);
    auto garbled = cli.Post("/sessions/" + id + "/responses", "{", "application/json");
    EXPECT_EQ(garbled->status, 400);
    EXPECT_EQ(cli.Get("/sessions/ffffffffffffffff/next")->status, 404);
    EXPECT_EQ(cli.Get("/images/x/val/0_0.png")->status, 404);

    const json sum = json::parse(cli.Get("/sessions/" + id + "/summary")->body);
    EXPECT_EQ(sum["accuracy"], 100.0);
    EXPECT_EQ(sum["total"], 1);
    auto csv = cli.Get("/summary?format=predictions");
    const auto exported = dataset::parse_predictions(csv->body);
    ASSERT_EQ(exported.rows.size(), 1u);
    EXPECT_EQ(exported.rows[0].predicted_index, truth);

    server.stop();
    t.join();
}

}  // namespace
}  // namespace cvr::trials
