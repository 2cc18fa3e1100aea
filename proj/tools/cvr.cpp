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

#include <csignal>
#include <cstdio>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "cvr/dataset_io.hpp"
#include "cvr/evalharness.hpp"
#include "cvr/generator.hpp"
#include "cvr/rules.hpp"
#include "cvr/trial_service.hpp"

namespace {

using namespace cvr;
using generator::Split;

struct Config {
    std::uint64_t seed = 0;
    std::string manifest = "rules/manifest.json";
    std::string out = "dataset";
    std::string rules = "all";
    std::string counts = "10000,500,1000,1000";
    int size = renderer::kDefaultSize;
    int workers = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
    std::vector<std::string> predictions;
    int port = 8080;
    std::string results = "results.jsonl";
    std::string report;
    std::string split = "val";
    bool feedback = true;
    std::size_t samples = 50;
    std::size_t rederive = 10;
};

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string item;
    while (std::getline(in, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::map<Split, std::size_t> parse_counts(const std::string& s) {
    const auto parts = split_list(s);
    if (parts.size() != generator::kAllSplits.size())
        throw CLI::ValidationError("--counts", "expected four comma-separated counts (train,val,test,generalization)");
    std::map<Split, std::size_t> out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(parts[i], &pos);
        if (pos != parts[i].size()) throw CLI::ValidationError("--counts", "not a number: " + parts[i]);
        out[generator::kAllSplits[i]] = v;
    }
    return out;
}

std::vector<rules::RegistryEntry> select_rules(std::vector<rules::RegistryEntry> all, const std::string& filter) {
    if (filter == "all") return all;
    std::vector<rules::RegistryEntry> out;
    if (filter == "elementary") {
        for (auto& e : all)
            if (rules::is_elementary(e)) out.push_back(std::move(e));
        return out;
    }
    const auto wanted = split_list(filter);
    for (const auto& id : wanted) {
        auto it = std::find_if(all.begin(), all.end(), [&](const auto& e) { return e.id == id; });
        if (it == all.end()) throw std::runtime_error("unknown rule '" + id + "'");
        out.push_back(*it);
    }
    return out;
}

int cmd_generate(const Config& c) {
    const auto rules = select_rules(rules::load_registry(c.manifest), c.rules);
    dataset::GenerateOptions opt;
    opt.master_seed = c.seed;
    opt.image_size = c.size;
    opt.workers = c.workers;
    opt.counts = parse_counts(c.counts);
    std::size_t samples = 0, attempts = 0;
    double seconds = 0;
    std::printf("%-18s %-15s %8s %9s %8s %8s\n", "rule", "split", "samples", "attempts", "retry%", "seconds");
    dataset::write_dataset(c.out, rules, opt, [&](const dataset::SplitStats& s) {
        const double retry = s.samples ? 100.0 * static_cast<double>(s.attempts - s.samples) / static_cast<double>(s.samples) : 0.0;
        std::printf("%-18s %-15s %8zu %9zu %7.1f%% %8.2f\n", s.rule_id.c_str(),
                    std::string(generator::to_string(s.split)).c_str(), s.samples, s.attempts, retry, s.seconds);
        std::fflush(stdout);
        samples += s.samples;
        attempts += s.attempts;
        seconds += s.seconds;
    });
    std::printf("total: %zu samples from %zu rules, %zu attempts, %.1f s, written to %s\n", samples, rules.size(),
                attempts, seconds, c.out.c_str());
    return 0;
}

int cmd_validate(const Config& c) {
    std::vector<rules::RuleError> failures;
    const auto rules = rules::load_registry_lenient(c.manifest, failures);
    int bad = 0;
    for (const auto& f : failures) {
        std::printf("FAIL %s\n", f.what());
        ++bad;
    }
    for (const auto& e : rules) {
        std::size_t oracle = 0, decoy = 0, failed = 0;
        for (Split split : {Split::Train, Split::Generalization}) {
            const auto program = generator::program_for(e.program, split);
            for (std::size_t i = 0; i < c.samples; ++i) {
                try {
                    const auto s = generator::generate_problem(program, generator::sample_seed(c.seed, e.id, split, i));
                    if (!generator::oracle_ok(s.panels, s.outlier_index, e.spec)) ++oracle;
                    if (!generator::decoy_check(s.panels, program)) ++decoy;
                } catch (const generator::GenerationFailed& err) {
                    ++failed;
                }
            }
        }
        const bool ok = oracle == 0 && decoy == 0 && failed == 0;
        if (!ok) ++bad;
        std::printf("%s %-18s difficulty=%d oracle_failures=%zu decoys=%zu generation_failures=%zu\n",
                    ok ? "ok  " : "FAIL", e.id.c_str(), rules::difficulty(e.program), oracle, decoy, failed);
    }
    std::printf("%zu rules checked, %d failing\n", rules.size() + failures.size(), bad);
    return bad == 0 ? 0 : 1;
}

int cmd_eval(const Config& c) {
    if (c.predictions.empty()) throw CLI::ValidationError("--predictions", "at least one prediction file is required");
    const auto labels = dataset::read_labels(c.out);
    std::vector<dataset::PredictionFile> files;
    for (const auto& p : c.predictions) files.push_back(dataset::read_predictions(p));
    const auto report = eval::evaluate(files, labels);
    std::cout << eval::format_report(report);
    if (!c.report.empty()) dataset::write_file(c.report, eval::report_to_json(report).dump(2) + "\n");
    return 0;
}

int cmd_verify(const Config& c) {
    const auto r = dataset::verify(c.out, c.rederive);
    for (const auto& d : r.discrepancies) std::printf("discrepancy: %s\n", d.c_str());
    std::printf("%zu samples, %zu files, %zu re-derived, %zu discrepancies\n", r.samples, r.files, r.rederived,
                r.discrepancies.size());
    return r.ok() ? 0 : 1;
}

trials::TrialServer* g_server = nullptr;

int cmd_serve(const Config& c) {
    trials::TrialConfig tc;
    tc.dataset_root = c.out;
    tc.results_log = c.results;
    tc.assignment_seed = c.seed;
    tc.feedback = c.feedback;
    auto split = generator::parse_split(c.split);
    if (!split) throw CLI::ValidationError("--split", "unknown split " + c.split);
    tc.split = *split;
    trials::TrialService service(tc);
    trials::TrialServer server(service);
    const int port = server.bind("0.0.0.0", c.port);
    if (port < 0) {
        std::fprintf(stderr, "cannot bind port %d\n", c.port);
        return 1;
    }
    std::printf("serving %zu rules from %s on port %d, results in %s\n", service.rule_pool().size(), c.out.c_str(),
                port, c.results.c_str());
    std::fflush(stdout);
    g_server = &server;
    std::signal(SIGINT, [](int) { g_server->stop(); });
    std::signal(SIGTERM, [](int) { g_server->stop(); });
    server.listen();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    Config c;
    CLI::App app{"Generate, verify and evaluate compositional visual reasoning datasets."};
    app.set_config("--config", "", "TOML file with the same keys as the flags");
    app.require_subcommand(1);
    app.fallthrough();

    auto env = [](CLI::Option* o, const char* name) { o->envname(name); };
    env(app.add_option("--seed", c.seed, "Master seed")->capture_default_str(), "CVR_SEED");
    env(app.add_option("--manifest", c.manifest, "Rule manifest")->capture_default_str(), "CVR_MANIFEST");
    env(app.add_option("--out", c.out, "Dataset root")->capture_default_str(), "CVR_OUT");
    env(app.add_option("--rules", c.rules, "elementary, all, or a comma-separated list of rule ids")
            ->capture_default_str(),
        "CVR_RULES");
    env(app.add_option("--counts", c.counts, "train,val,test,generalization samples per rule")->capture_default_str(),
        "CVR_COUNTS");
    env(app.add_option("--size", c.size, "Image side in pixels")->capture_default_str()->check(CLI::Range(16, 4096)),
        "CVR_SIZE");
    env(app.add_option("--workers", c.workers, "Worker threads")->capture_default_str()->check(CLI::Range(1, 1024)),
        "CVR_WORKERS");
    env(app.add_option("--predictions", c.predictions, "Prediction CSV files, one per regime")->delimiter(','),
        "CVR_PREDICTIONS");
    env(app.add_option("--port", c.port, "Trial server port (0 picks one)")->capture_default_str(), "CVR_PORT");
    env(app.add_option("--results", c.results, "Trial results log")->capture_default_str(), "CVR_RESULTS");

    auto* generate = app.add_subcommand("generate", "Write a dataset");
    auto* validate = app.add_subcommand("validate", "Compile every rule and check sampled problems");
    env(validate->add_option("--samples", c.samples, "Samples per rule and split")->capture_default_str(),
        "CVR_SAMPLES");
    auto* evaluate = app.add_subcommand("eval", "Score prediction files against dataset labels");
    env(evaluate->add_option("--report", c.report, "Write the JSON report here"), "CVR_REPORT");
    auto* verify = app.add_subcommand("verify", "Check a dataset against its manifest");
    env(verify->add_option("--rederive", c.rederive, "Samples to regenerate and compare")->capture_default_str(),
        "CVR_REDERIVE");
    auto* serve = app.add_subcommand("serve", "Run the trial server");
    env(serve->add_option("--split", c.split, "Split trials are drawn from")->capture_default_str(), "CVR_SPLIT");
    env(serve->add_option("--feedback", c.feedback, "Report correctness after each response")->capture_default_str(),
        "CVR_FEEDBACK");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*generate) return cmd_generate(c);
        if (*validate) return cmd_validate(c);
        if (*evaluate) return cmd_eval(c);
        if (*verify) return cmd_verify(c);
        if (*serve) return cmd_serve(c);
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
