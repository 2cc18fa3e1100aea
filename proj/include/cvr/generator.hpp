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
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvr/rules.hpp"
#include "cvr/scene.hpp"

namespace cvr::generator {

enum class Split { Train, Val, Test, Generalization };

inline constexpr std::array<Split, 4> kAllSplits = {Split::Train, Split::Val, Split::Test, Split::Generalization};

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view name);
std::uint64_t split_tag(Split s);

struct ProblemSample {
    std::string rule_id;
    Split split = Split::Train;
    std::array<SceneGraph, 4> panels;
    int outlier_index = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t sample_index = 0;
    std::uint64_t sample_seed = 0;
    int difficulty = 0;
    int attempts = 1;

    friend bool operator==(const ProblemSample&, const ProblemSample&) = default;
};

struct SplitRequest {
    std::string rule_id;
    Split split = Split::Train;
    std::size_t count = 0;
    std::uint64_t master_seed = 0;
};

class GenerationFailed : public std::runtime_error {
public:
    GenerationFailed(std::string rule_id, std::map<std::string, int> diagnostics,
                     std::optional<std::uint64_t> index = std::nullopt);

    const std::string& rule_id() const { return rule_id_; }
    const std::map<std::string, int>& diagnostics() const { return diagnostics_; }
    std::optional<std::uint64_t> index() const { return index_; }

    /// Failure reason that occurred most often.
    std::string dominant() const;

    GenerationFailed with_index(std::uint64_t index) const { return {rule_id_, diagnostics_, index}; }

private:
    std::string rule_id_;
    std::map<std::string, int> diagnostics_;
    std::optional<std::uint64_t> index_;
};

inline constexpr int kMaxRetries = 64;

/// Seed of sample `index` in a split; streams of different splits never share seeds.
std::uint64_t sample_seed(std::uint64_t master_seed, std::string_view rule_id, Split split, std::uint64_t index);

ProblemSample generate_problem(const rules::GenerationProgram& program, std::uint64_t sample_seed);

/// True iff no random non-target attribute singles out one panel.
bool decoy_check(const std::array<SceneGraph, 4>& panels, const rules::GenerationProgram& program);

/// True iff the reference rule holds on every panel except `outlier`, fails on
/// `outlier`, and all panels validate.
bool oracle_ok(const std::array<SceneGraph, 4>& panels, int outlier, const rules::RuleSpec& spec);

/// True iff every reference relation holds on `g`.
bool satisfies_reference(const SceneGraph& g, const rules::RuleSpec& spec);

/// The program a split is generated from (the held-out variant for the
/// generalization split).
rules::GenerationProgram program_for(const rules::GenerationProgram& program, Split split);

/// Generates req.count samples with `workers` threads and hands them to `sink`
/// in index order. Output does not depend on the worker count.
void generate_split(const SplitRequest& req, const rules::GenerationProgram& program, int workers,
                    const std::function<void(ProblemSample&&)>& sink);

std::vector<ProblemSample> generate_split(const SplitRequest& req, const rules::GenerationProgram& program,
                                          int workers = 1);

}  // namespace cvr::generator
