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

#include "cvr/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

namespace cvr::eval {

using Code = EvalError::Code;

std::map<std::string, double> AccuracyReport::rule_percent() const {
    std::map<std::string, double> out;
    for (const auto& [rule, acc] : per_rule) out[rule] = acc.percent();
    return out;
}

AccuracyReport accuracy(const PredictionFile& preds, const std::map<SampleKey, int>& labels) {
    if (preds.rows.empty()) throw EvalError(Code::EmptyInput, "prediction file has no rows");
    AccuracyReport report;
    for (const auto& row : preds.rows) {
        auto it = labels.find(row.key);
        if (it == labels.end())
            throw EvalError(Code::MissingLabel, "no label for " + row.key.rule_id + "/" +
                                                    std::string(generator::to_string(row.key.split)) + "/" +
                                                    std::to_string(row.key.index));
        const bool hit = it->second == row.predicted_index;
        auto& rule = report.per_rule[row.key.rule_id];
        ++rule.total;
        ++report.total;
        if (hit) {
            ++rule.correct;
            ++report.correct;
        }
    }
    return report;
}

int tasks_above(const std::map<std::string, double>& per_rule, double threshold) {
    return static_cast<int>(std::count_if(per_rule.begin(), per_rule.end(),
                                          [&](const auto& kv) { return kv.second > threshold; }));
}

int tasks_above(const std::vector<double>& accuracies, double threshold) {
    return static_cast<int>(
        std::count_if(accuracies.begin(), accuracies.end(), [&](double a) { return a > threshold; }));
}

RegimeAccuracy make_regimes(const std::vector<double>& six) {
    if (six.size() != dataset::kRegimes.size())
        throw EvalError(Code::InvalidRegime, "expected " + std::to_string(dataset::kRegimes.size()) + " accuracies");
    RegimeAccuracy r;
    for (std::size_t i = 0; i < six.size(); ++i) r[dataset::kRegimes[i]] = six[i];
    validate(r);
    return r;
}

void validate(const RegimeAccuracy& r) {
    for (const auto& [n, a] : r) {
        if (n < 1) throw EvalError(Code::InvalidRegime, "training-set size must be positive");
        if (!(a >= 0.0 && a <= 100.0))
            throw EvalError(Code::InvalidRegime, "accuracy for n=" + std::to_string(n) + " is outside [0, 100]");
    }
    for (int n : dataset::kRegimes)
        if (!r.contains(n)) throw EvalError(Code::InvalidRegime, "missing regime n=" + std::to_string(n));
}

double ses_weight(int n) { return 1.0 / (1.0 + std::log(static_cast<double>(n))); }

double auc(const RegimeAccuracy& r) {
    validate(r);
    double sum = 0.0;
    for (const auto& [n, a] : r) sum += a;
    return sum / static_cast<double>(r.size());
}

double ses(const RegimeAccuracy& r) {
    validate(r);
    double num = 0.0, den = 0.0;
    for (const auto& [n, a] : r) {
        const double w = ses_weight(n);
        num += w * a;
        den += w;
    }
    return num / den;
}

MetricsReport evaluate(const std::vector<PredictionFile>& files, const std::map<SampleKey, int>& labels) {
    if (files.empty()) throw EvalError(Code::EmptyInput, "no prediction files");
    MetricsReport report;
    for (const auto& f : files) {
        if (report.model.empty()) report.model = f.model;
        const int regime = f.regime.value_or(0);
        if (report.regimes.contains(regime))
            throw EvalError(Code::InvalidRegime, "two prediction files for regime " + std::to_string(regime));
        report.regimes[regime] = accuracy(f, labels);
    }
    RegimeAccuracy r;
    for (const auto& [n, acc] : report.regimes)
        if (n > 0) r[n] = acc.percent();
    if (std::all_of(dataset::kRegimes.begin(), dataset::kRegimes.end(), [&](int n) { return r.contains(n); })) {
        report.auc = auc(r);
        report.ses = ses(r);
    }
    report.tasks_above_80 = tasks_above(report.regimes.rbegin()->second.rule_percent());
    return report;
}

namespace {

std::string regime_name(int n) { return n == 0 ? "all" : std::to_string(n); }

std::string fixed1(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", v);
    return buf;
}

}  // namespace

json report_to_json(const MetricsReport& r) {
    json regimes = json::object();
    for (const auto& [n, acc] : r.regimes) {
        json rules = json::object();
        for (const auto& [rule, ra] : acc.per_rule)
            rules[rule] = {{"accuracy", ra.percent()}, {"correct", ra.correct}, {"total", ra.total}};
        regimes[regime_name(n)] = {{"accuracy", acc.percent()},
                                   {"correct", acc.correct},
                                   {"total", acc.total},
                                   {"tasks_above_80", tasks_above(acc.rule_percent())},
                                   {"rules", std::move(rules)}};
    }
    json j = {{"model", r.model}, {"regimes", std::move(regimes)}, {"tasks_above_80", r.tasks_above_80}};
    j["auc"] = r.auc ? json(*r.auc) : json(nullptr);
    j["ses"] = r.ses ? json(*r.ses) : json(nullptr);
    return j;
}

std::string format_report(const MetricsReport& r) {
    std::set<std::string> rules;
    for (const auto& [n, acc] : r.regimes)
        for (const auto& [rule, ra] : acc.per_rule) rules.insert(rule);
    std::size_t width = 7;
    for (const auto& rule : rules) width = std::max(width, rule.size());

    std::ostringstream out;
    auto pad = [&](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
    auto cell = [&](const std::string& s) { return std::string(s.size() < 7 ? 7 - s.size() : 0, ' ') + s; };
    if (!r.model.empty()) out << "model: " << r.model << "\n";
    out << pad("rule", width);
    for (const auto& [n, acc] : r.regimes) out << ' ' << cell(regime_name(n));
    out << "\n";
    for (const auto& rule : rules) {
        out << pad(rule, width);
        for (const auto& [n, acc] : r.regimes) {
            auto it = acc.per_rule.find(rule);
            out << ' ' << cell(it == acc.per_rule.end() ? "-" : fixed1(it->second.percent()));
        }
        out << "\n";
    }
    out << pad("overall", width);
    for (const auto& [n, acc] : r.regimes) out << ' ' << cell(fixed1(acc.percent()));
    out << "\n" << pad(">80%", width);
    for (const auto& [n, acc] : r.regimes) out << ' ' << cell(std::to_string(tasks_above(acc.rule_percent())));
    out << "\n";
    if (r.ses) out << "SES " << fixed1(*r.ses) << "\n";
    if (r.auc) out << "AUC " << fixed1(*r.auc) << "\n";
    return out.str();
}

ReportDiff diff(const MetricsReport& a, const MetricsReport& b) {
    ReportDiff d;
    for (const auto& [n, acc] : a.regimes) {
        auto it = b.regimes.find(n);
        if (it == b.regimes.end()) continue;
        d.overall[n] = acc.percent() - it->second.percent();
        for (const auto& [rule, ra] : acc.per_rule) {
            auto rb = it->second.per_rule.find(rule);
            if (rb != it->second.per_rule.end()) d.per_rule[n][rule] = ra.percent() - rb->second.percent();
        }
    }
    return d;
}

json diff_to_json(const ReportDiff& d) {
    json j = json::object();
    for (const auto& [n, v] : d.overall) {
        json rules = json::object();
        if (auto it = d.per_rule.find(n); it != d.per_rule.end())
            for (const auto& [rule, x] : it->second) rules[rule] = x;
        j[regime_name(n)] = {{"accuracy", v}, {"rules", std::move(rules)}};
    }
    return j;
}

}  // namespace cvr::eval
