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

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <set>
#include <thread>

#include "httplib.h"

#include "cvr/evalharness.hpp"
#include "cvr/trial_service.hpp"

namespace {

namespace fs = std::filesystem;
using namespace cvr;
using generator::Split;
using json = nlohmann::json;

constexpr std::uint64_t kSeed = 0;

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void run(const char* name, const std::function<Outcome()>& f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = f();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("%s  %-22s %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), s);
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const std::vector<rules::RegistryEntry>& registry() {
    static const auto r = rules::load_registry(fs::path(CVR_SOURCE_DIR) / "rules" / "manifest.json");
    return r;
}

int workers() { return std::max(1, static_cast<int>(std::thread::hardware_concurrency())); }

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cvr_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

// Published model rows (accuracy at n = 20 .. 1000, SES, AUC).
struct Row {
    const char* name;
    std::vector<double> acc;
    double ses;
    double auc;
};

const std::vector<Row> kTable = {
    {"ResNet-50 ind", {28.0, 31.1, 32.5, 34.0, 38.7, 44.8}, 33.7, 34.9},
    {"ViT-small ind", {28.6, 30.1, 30.9, 31.9, 33.8, 35.1}, 31.3, 31.7},
    {"SCL ind", {26.9, 30.0, 30.3, 30.0, 31.4, 33.4}, 29.9, 30.3},
    {"WReN ind", {30.0, 32.0, 32.9, 34.1, 36.3, 39.0}, 33.4, 34.1},
    {"SCL-ResNet-18 ind", {31.4, 37.3, 37.8, 39.6, 42.7, 48.3}, 38.4, 39.5},
    {"ResNet-50 joint", {27.5, 28.2, 29.9, 33.9, 52.1, 59.2}, 36.0, 38.4},
    {"ViT-small joint", {27.3, 27.8, 28.0, 28.1, 29.9, 31.4}, 28.4, 28.7},
    {"SCL joint", {25.8, 25.8, 28.3, 34.1, 43.2, 46.2}, 32.2, 33.9},
    {"WReN joint", {26.8, 27.6, 28.5, 30.1, 36.4, 42.3}, 30.9, 32.0},
    {"SCL-ResNet-18 joint", {26.4, 28.4, 31.6, 40.7, 51.4, 64.0}, 37.6, 40.4},
    {"SSL ResNet-50 ind", {40.5, 47.3, 52.9, 56.8, 61.9, 67.7}, 52.4, 54.5},
    {"SSL ViT-small ind", {46.7, 51.6, 54.8, 57.5, 62.0, 65.5}, 54.9, 56.4},
    {"SSL ResNet-50 joint", {44.3, 50.3, 55.3, 59.5, 68.9, 79.2}, 57.0, 59.6},
    {"SSL ViT-small joint", {39.3, 39.5, 40.8, 44.1, 53.3, 60.7}, 44.7, 46.3},
};

Outcome metric_reproduction() {
    const auto t0 = std::chrono::steady_clock::now();
    constexpr double eps = 1e-9;
    std::string misses;
    for (const auto& r : kTable) {
        const auto regimes = eval::make_regimes(r.acc);
        const double auc = eval::auc(regimes), ses = eval::ses(regimes);
        if (std::abs(auc - r.auc) > 0.05 + eps) misses += fmt(" [%s AUC %.3f vs %.1f]", r.name, auc, r.auc);
        if (std::abs(ses - r.ses) > 0.15 + eps) misses += fmt(" [%s SES %.3f vs %.1f]", r.name, ses, r.ses);
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const auto r50 = eval::make_regimes(kTable[0].acc), vit = eval::make_regimes(kTable[1].acc);
    std::string d = fmt("14 rows; ResNet-50 ind AUC %.2f SES %.2f; ViT-small ind AUC %.2f SES %.2f; %.4f s",
                        eval::auc(r50), eval::ses(r50), eval::auc(vit), eval::ses(vit), s);
    if (!misses.empty()) d += "; out of tolerance:" + misses;
    return {misses.empty() && s < 1.0, d};
}

int shell(const std::string& cmd) {
    std::fflush(stdout);
    return std::system(cmd.c_str());
}

std::size_t count_files(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir)) n += e.is_regular_file();
    return n;
}

// Default-count dataset over two rules, written by the CLI.
fs::path split_root;

Outcome split_sizes() {
    split_root = scratch("splits");
    const std::string cli = CVR_CLI;
    const std::string common = " --manifest " + (fs::path(CVR_SOURCE_DIR) / "rules" / "manifest.json").string() +
                               " --out " + split_root.string() + " --seed " + std::to_string(kSeed);
    if (shell(cli + common + " --rules shape,color_inside generate > " + (split_root.string() + ".log")) != 0)
        return {false, "generate failed"};
    const std::map<Split, std::size_t> expected = {
        {Split::Train, 10000}, {Split::Val, 500}, {Split::Test, 1000}, {Split::Generalization, 1000}};
    std::string d;
    bool ok = true;
    for (const char* rule : {"shape", "color_inside"})
        for (const auto& [split, n] : expected) {
            const fs::path dir = dataset::split_dir(split_root, rule, split);
            const std::size_t labels = dataset::read_labels_csv(dir / "labels.csv").size();
            const std::size_t pngs = count_files(dir) - 1 - labels;
            ok &= labels == n && pngs == 4 * n;
            if (labels != n || pngs != 4 * n) d += fmt(" %s/%s=%zu", rule, std::string(generator::to_string(split)).c_str(), labels);
        }
    const int verify = shell(cli + common + " verify --rederive 50 > " + (split_root.string() + ".verify.log"));
    ok &= verify == 0;
    return {ok, "2 rules x 10000/500/1000/1000 samples, 4 panels each; verify exit " + std::to_string(verify) + d};
}

Outcome random_floor() {
    if (split_root.empty()) return {false, "no dataset"};
    Rng rng(2024);
    std::string d;
    bool ok = true;
    for (const char* rule : {"shape", "color_inside"})
        for (Split split : {Split::Test, Split::Generalization}) {
            const auto labels = dataset::read_labels_csv(dataset::split_dir(split_root, rule, split) / "labels.csv");
            std::size_t correct = 0;
            for (int l : labels) correct += static_cast<int>(rng.uniform_int(0, 3)) == l;
            const double pct = 100.0 * static_cast<double>(correct) / static_cast<double>(labels.size());
            ok &= labels.size() == 1000 && std::abs(pct - 25.0) <= 3.0;
            d += fmt(" %s/%s %.1f%%", rule, std::string(generator::to_string(split)).c_str(), pct);
        }
    fs::remove_all(split_root);
    fs::remove(split_root.string() + ".log");
    fs::remove(split_root.string() + ".verify.log");
    return {ok, "uniform-random agent over 1000-sample splits:" + d};
}

// Generation-only samples reused by the oracle, uniformity and decoy criteria.
std::map<std::string, std::vector<generator::ProblemSample>> pool;
constexpr std::size_t kPoolSize = 4000;

void build_pool() {
    for (const auto& e : registry())
        pool[e.id] = generator::generate_split({e.id, Split::Train, kPoolSize, kSeed}, e.program, workers());
}

Outcome oracle_validity() {
    std::size_t elementary = 0, checked = 0, bad = 0;
    std::string d;
    for (const auto& e : registry()) {
        elementary += rules::is_elementary(e);
        for (std::size_t i = 0; i < 200; ++i) {
            const auto& s = pool.at(e.id)[i];
            ++checked;
            bool ok = true;
            for (int p = 0; p < 4; ++p)
                ok &= generator::satisfies_reference(s.panels[static_cast<std::size_t>(p)], e.spec) == (p != s.outlier_index);
            if (!ok) {
                ++bad;
                d += " " + e.id;
            }
        }
    }
    const bool ok = registry().size() >= 45 && elementary == 9 && bad == 0;
    return {ok, fmt("%zu rules (%zu elementary), %zu problems, %zu violations", registry().size(), elementary, checked, bad) + d};
}

double chi2_sf_df3(double x) {
    return std::erfc(std::sqrt(x / 2.0)) + std::sqrt(2.0 * x / std::numbers::pi) * std::exp(-x / 2.0);
}

Outcome outlier_uniformity() {
    double min_p = 1.0;
    std::string worst, d;
    bool ok = true;
    for (const auto& e : registry()) {
        std::array<double, 4> hist{};
        for (const auto& s : pool.at(e.id)) ++hist[static_cast<std::size_t>(s.outlier_index)];
        const double expect = static_cast<double>(kPoolSize) / 4.0;
        double x2 = 0;
        for (double h : hist) x2 += (h - expect) * (h - expect) / expect;
        const double p = chi2_sf_df3(x2);
        if (p <= 0.01) {
            ok = false;
            d += fmt(" [%s p=%.4f]", e.id.c_str(), p);
        }
        if (p < min_p) {
            min_p = p;
            worst = e.id;
        }
    }
    return {ok, fmt("%zu rules x %zu samples, min p = %.4f (%s)", registry().size(), kPoolSize, min_p, worst.c_str()) + d};
}

double circ(double a, double b, double period) {
    double d = std::abs(a - b);
    if (period > 0) {
        d = std::fmod(d, period);
        d = std::min(d, period - d);
    }
    return d;
}

// Index of the panel singled out by a 3-vs-1 pattern, or -1.
int odd_continuous(const std::array<double, 4>& v, double t, double period) {
    for (int odd = 0; odd < 4; ++odd) {
        std::vector<double> rest;
        for (int i = 0; i < 4; ++i)
            if (i != odd) rest.push_back(v[static_cast<std::size_t>(i)]);
        if (period > 0)
            for (double& r : rest) r = rest[0] + std::remainder(r - rest[0], period);
        std::sort(rest.begin(), rest.end());
        if (rest[2] - rest[0] > t) continue;
        if (circ(v[static_cast<std::size_t>(odd)], rest[1], period) > 3 * t) return odd;
    }
    return -1;
}

template <typename T>
int odd_discrete(const std::array<T, 4>& v) {
    for (int odd = 0; odd < 4; ++odd) {
        std::vector<T> rest;
        for (int i = 0; i < 4; ++i)
            if (i != odd) rest.push_back(v[static_cast<std::size_t>(i)]);
        if (rest[0] == rest[1] && rest[1] == rest[2] && v[static_cast<std::size_t>(odd)] != rest[0]) return odd;
    }
    return -1;
}

int decoy_patterns(const generator::ProblemSample& s, const rules::RegistryEntry& e) {
    const auto targets = e.spec.component_kinds();
    const auto is_target = [&](RelationKind k) { return std::find(targets.begin(), targets.end(), k) != targets.end(); };
    int found = 0;
    if (!is_target(RelationKind::Count)) {
        std::array<std::size_t, 4> n{};
        for (std::size_t p = 0; p < 4; ++p) n[p] = s.panels[p].objects.size();
        found += odd_discrete(n) >= 0;
    }
    for (const auto& [id, o0] : s.panels[0].objects) {
        if (!std::all_of(s.panels.begin(), s.panels.end(), [&](const SceneGraph& g) { return g.objects.contains(id); }))
            continue;
        auto get = [&](auto f) {
            std::array<double, 4> v{};
            for (std::size_t p = 0; p < 4; ++p) v[p] = f(s.panels[p].objects.at(id));
            return v;
        };
        for (RelationKind k : {RelationKind::Shape, RelationKind::Position, RelationKind::Size, RelationKind::Color,
                               RelationKind::Rotation, RelationKind::Flip}) {
            if (is_target(k) || e.program.free_tag(k) != rules::ParamTag::RandomPerPanel) continue;
            int odd = -1;
            if (k == RelationKind::Shape) {
                std::array<std::pair<std::uint64_t, int>, 4> v;
                for (std::size_t p = 0; p < 4; ++p) v[p] = {s.panels[p].objects.at(id).shape_seed, s.panels[p].objects.at(id).complexity};
                odd = odd_discrete(v);
            } else if (k == RelationKind::Flip) {
                std::array<bool, 4> v{};
                for (std::size_t p = 0; p < 4; ++p) v[p] = s.panels[p].objects.at(id).flip;
                odd = odd_discrete(v);
            } else if (k == RelationKind::Position) {
                odd = std::max(odd_continuous(get([](const SceneObject& o) { return o.position.x; }), relations::kPositionTolerance, 0),
                               odd_continuous(get([](const SceneObject& o) { return o.position.y; }), relations::kPositionTolerance, 0));
            } else if (k == RelationKind::Size) {
                odd = odd_continuous(get([](const SceneObject& o) { return o.size; }), relations::kSizeTolerance, 0);
            } else if (k == RelationKind::Color) {
                odd = odd_continuous(get([](const SceneObject& o) { return o.color; }), relations::kHueTolerance, 1.0);
            } else {
                odd = odd_continuous(get([](const SceneObject& o) { return o.rotation; }), relations::kRotationTolerance,
                                     2 * std::numbers::pi);
            }
            found += odd >= 0;
        }
    }
    return found;
}

Outcome decoy_freedom() {
    std::size_t scanned = 0, patterns = 0;
    std::string d;
    for (const auto& e : registry())
        for (std::size_t i = 0; i < 1000; ++i) {
            ++scanned;
            const int n = decoy_patterns(pool.at(e.id)[i], e);
            if (n > 0 && patterns == 0) d = fmt("; first at %s #%zu", e.id.c_str(), i);
            patterns += static_cast<std::size_t>(n);
        }
    return {patterns == 0, fmt("%zu quadruples over %zu rules, %zu 3-vs-1 patterns", scanned, registry().size(), patterns) + d};
}

std::string tree_hash(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), root));
    std::sort(files.begin(), files.end());
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    for (const auto& f : files) {
        const std::string name = f.generic_string() + '\0';
        const auto bytes = dataset::read_file(root / f);
        EVP_DigestUpdate(ctx, name.data(), name.size());
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    for (unsigned int i = 0; i < len; ++i) hex += fmt("%02x", md[i]);
    return hex + fmt(" (%zu files)", files.size());
}

Outcome determinism() {
    std::vector<rules::RegistryEntry> rules;
    for (const auto& e : registry())
        if (e.id == "size" || e.id == "count_contact" || e.id == "flip_inside") rules.push_back(e);
    dataset::GenerateOptions opt;
    opt.master_seed = kSeed;
    opt.counts = {{Split::Train, 200}, {Split::Val, 50}, {Split::Test, 50}, {Split::Generalization, 50}};
    std::array<std::string, 2> hashes;
    const std::array<int, 2> counts = {1, 8};
    for (std::size_t i = 0; i < 2; ++i) {
        const fs::path root = scratch("determinism_" + std::to_string(counts[i]));
        opt.workers = counts[i];
        dataset::write_dataset(root, rules, opt);
        hashes[i] = tree_hash(root);
        fs::remove_all(root);
    }
    return {hashes[0] == hashes[1], "1 worker " + hashes[0] + ", 8 workers " + hashes[1]};
}

json get_json(httplib::Client& cli, const std::string& path) {
    auto r = cli.Get(path);
    if (!r || r->status != 200) throw std::runtime_error("GET " + path + " failed");
    return json::parse(r->body);
}

struct AgentRun {
    double accuracy = 0;
    std::size_t trials = 0;
    bool export_matches = false;
};

// Drives `participants` sessions through the HTTP API; `choose` sees only the
// sample reference the agent was shown.
AgentRun drive(const fs::path& root, const std::map<dataset::SampleKey, int>& labels, int participants,
               int rules_per_session, const std::function<int(const dataset::SampleKey&)>& choose) {
    trials::TrialConfig cfg;
    cfg.dataset_root = root;
    cfg.results_log = root.string() + fmt(".%d.jsonl", rules_per_session);
    cfg.rules_per_session = rules_per_session;
    fs::remove(cfg.results_log);
    trials::TrialService svc(cfg);
    trials::TrialServer server(svc);
    const int port = server.bind("127.0.0.1", 0);
    if (port <= 0) throw std::runtime_error("bind failed");
    std::thread t([&] { server.listen(); });
    httplib::Client cli("127.0.0.1", port);
    static const std::regex url(R"(/images/([^/]+)/([^/]+)/([0-9]+)_0\.png)");

    AgentRun out;
    try {
        for (int p = 0; p < participants; ++p) {
            auto created = cli.Post("/sessions", json{{"participant_id", fmt("agent-%02d", p)}}.dump(), "application/json");
            if (!created || created->status != 201) throw std::runtime_error("session creation failed");
            const std::string id = json::parse(created->body)["session_id"];
            for (;;) {
                const json trial = get_json(cli, "/sessions/" + id + "/next");
                std::smatch m;
                const std::string first = trial["panels"][0];
                if (!std::regex_match(first, m, url)) throw std::runtime_error("unexpected panel url " + first);
                const dataset::SampleKey key{m[1].str(), *generator::parse_split(m[2].str()), std::stoull(m[3].str())};
                const json answer = {{"trial_id", trial["trial_id"]}, {"chosen_index", choose(key)}, {"rt_ms", 1000}};
                auto r = cli.Post("/sessions/" + id + "/responses", answer.dump(), "application/json");
                if (!r || r->status != 200) throw std::runtime_error("response rejected");
                if (json::parse(r->body)["session_complete"].get<bool>()) break;
            }
        }
        const json summary = get_json(cli, "/summary");
        auto csv = cli.Get("/summary?format=predictions");
        if (!csv || csv->status != 200) throw std::runtime_error("export failed");
        const auto report = eval::evaluate({dataset::parse_predictions(csv->body)}, labels);
        const auto& acc = report.regimes.at(0);
        bool match = summary["accuracy"].get<double>() == acc.percent() && summary["correct"] == acc.correct &&
                     summary["total"] == acc.total && summary["tasks_above_80"] == report.tasks_above_80;
        for (const auto& [rule, r] : acc.per_rule) match &= summary["rules"][rule]["accuracy"].get<double>() == r.percent();
        match &= summary["rules"].size() == acc.per_rule.size();
        out = {summary["accuracy"].get<double>(), summary["total"].get<std::size_t>(), match};
    } catch (...) {
        server.stop();
        t.join();
        throw;
    }
    server.stop();
    t.join();
    fs::remove(cfg.results_log);
    return out;
}

Outcome human_baseline_substitute() {
    const fs::path root = scratch("trials");
    dataset::GenerateOptions opt;
    opt.master_seed = kSeed;
    opt.workers = workers();
    opt.counts = {{Split::Val, 60}};
    dataset::write_dataset(root, registry(), opt);
    const auto labels = dataset::read_labels(root);

    const AgentRun oracle = drive(root, labels, 21, 6, [&](const dataset::SampleKey& k) { return labels.at(k); });
    Rng rng(7);
    const AgentRun random = drive(root, labels, 5, 9, [&](const dataset::SampleKey&) {
        return static_cast<int>(rng.uniform_int(0, 3));
    });
    fs::remove_all(root);
    const bool ok = oracle.accuracy == 100.0 && std::abs(random.accuracy - 25.0) <= 3.0 && oracle.export_matches &&
                    random.export_matches && random.trials == 900;
    return {ok, fmt("oracle agent %.1f%% over %zu trials; random agent %.1f%% over %zu trials; export metrics %s",
                    oracle.accuracy, oracle.trials, random.accuracy, random.trials,
                    oracle.export_matches && random.export_matches ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
    run("metric-reproduction", metric_reproduction);
    run("split-sizes", split_sizes);
    run("random-guess-floor", random_floor);
    {
        const auto t0 = std::chrono::steady_clock::now();
        build_pool();
        std::printf("      generated %zu x %zu problems for the next three criteria (%.1f s)\n", registry().size(),
                    kPoolSize, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    run("oracle-validity", oracle_validity);
    run("outlier-uniformity", outlier_uniformity);
    run("decoy-freedom", decoy_freedom);
    pool.clear();
    run("determinism", determinism);
    run("human-baseline-props", human_baseline_substitute);
    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
