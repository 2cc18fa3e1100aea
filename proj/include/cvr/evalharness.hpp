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

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvr/dataset_io.hpp"

namespace cvr::eval {

using dataset::PredictionFile;
using dataset::SampleKey;
using json = nlohmann::json;

class EvalError : public std::runtime_error {
public:
    enum class Code { MissingLabel, EmptyInput, InvalidRegime };
    EvalError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

struct RuleAccuracy {
    std::size_t correct = 0;
    std::size_t total = 0;
    double percent() const { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
};

struct AccuracyReport {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::map<std::string, RuleAccuracy> per_rule;
    double percent() const { return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0; }
    std::map<std::string, double> rule_percent() const;
};

/// Percentage of rows whose prediction equals the label. Every predicted
/// sample must have a label.
AccuracyReport accuracy(const PredictionFile& preds, const std::map<SampleKey, int>& labels);

/// Number of rules scoring strictly above `threshold`.
int tasks_above(const std::map<std::string, double>& per_rule, double threshold = 80.0);
int tasks_above(const std::vector<double>& accuracies, double threshold = 80.0);

/// Training-set size n -> accuracy in percent.
using RegimeAccuracy = std::map<int, double>;

RegimeAccuracy make_regimes(const std::vector<double>& six);
void validate(const RegimeAccuracy& r);

/// Weight of regime n in the sample efficiency score, 1 / (1 + ln n).
double ses_weight(int n);

/// Mean accuracy over regimes.
double auc(const RegimeAccuracy& r);

/// Accuracy averaged with weights that favour small training sets.
double ses(const RegimeAccuracy& r);

/// Metrics over one model's prediction files, one file per regime, or a
/// single file without a regime.
struct MetricsReport {
    std::string model;
    std::map<int, AccuracyReport> regimes;  // key 0 when the file names no regime
    std::optional<double> auc;
    std::optional<double> ses;
    int tasks_above_80 = 0;  // at the largest regime present
};

MetricsReport evaluate(const std::vector<PredictionFile>& files, const std::map<SampleKey, int>& labels);

json report_to_json(const MetricsReport& r);
std::string format_report(const MetricsReport& r);

/// Per-rule and overall accuracy of `a` minus `b`, for matching regimes.
struct ReportDiff {
    std::map<int, double> overall;
    std::map<int, std::map<std::string, double>> per_rule;
};

ReportDiff diff(const MetricsReport& a, const MetricsReport& b);
json diff_to_json(const ReportDiff& d);

}  // namespace cvr::eval
