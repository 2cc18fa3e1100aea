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
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cvr/generator.hpp"
#include "cvr/renderer.hpp"
#include "cvr/rules.hpp"

namespace cvr::dataset {

using generator::ProblemSample;
using generator::Split;
using json = nlohmann::json;

inline constexpr int kDatasetVersion = 1;
inline constexpr const char* kGeneratorBuild = "cvr-1.0.0";
inline constexpr std::array<int, 6> kRegimes = {20, 50, 100, 200, 500, 1000};

class DatasetError : public std::runtime_error {
public:
    enum class Code { IoError, ManifestMismatch, ParseError, DuplicateKey, IndexOutOfRange };
    DatasetError(Code code, const std::string& what, int line = 0)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), code_(code), line_(line) {}
    Code code() const { return code_; }
    int line() const { return line_; }

private:
    Code code_;
    int line_;
};

// PNG (8-bit RGB, no interlacing).
std::vector<std::uint8_t> encode_png(const renderer::Image& img);
renderer::Image decode_png(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
void write_file(const std::filesystem::path& path, const std::string& text);

// Scene and problem serialization. Contours are stored as (seed, complexity)
// and regenerated on load; explicit vertices are written only for contours
// that did not come from gen_contour.
json scene_to_json(const SceneGraph& g);
SceneGraph scene_from_json(const json& j);
json problem_to_json(const ProblemSample& s);
ProblemSample problem_from_json(const json& j);
std::string serialize_problem(const ProblemSample& s);
ProblemSample parse_problem(const std::string& text);

/// A rule as stored in a dataset manifest: canonical DSL text plus the
/// compile options, so a dataset can be re-derived without the rule registry.
struct RuleRecord {
    std::string id;
    std::string dsl;
    std::vector<RelationKind> random;
    std::optional<rules::GeneralizationVariant> generalization;
};

RuleRecord rule_record(const rules::RegistryEntry& e);
rules::GenerationProgram compile_record(const RuleRecord& r);

struct DatasetManifest {
    int version = kDatasetVersion;
    std::uint64_t master_seed = 0;
    int image_size = renderer::kDefaultSize;
    std::string generator_build = kGeneratorBuild;
    std::vector<RuleRecord> rules;
    std::map<std::string, std::map<Split, std::size_t>> counts;
};

json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const json& j);
DatasetManifest read_manifest(const std::filesystem::path& root);

/// A sample with its encoded panels and sidecar, ready to be written.
struct RenderedSample {
    ProblemSample sample;
    std::array<std::vector<std::uint8_t>, 4> pngs;
    std::string sidecar;
};

RenderedSample render_sample(ProblemSample sample, int image_size);

std::filesystem::path split_dir(const std::filesystem::path& root, const std::string& rule_id, Split split);
std::string panel_file(std::uint64_t index, int panel);
std::string sidecar_file(std::uint64_t index);

/// Writes samples under root/<rule>/<split>/ in arrival order; samples of one
/// split must arrive with consecutive indices starting at 0.
class DatasetWriter {
public:
    DatasetWriter(std::filesystem::path root, std::uint64_t master_seed, int image_size);
    ~DatasetWriter();
    DatasetWriter(const DatasetWriter&) = delete;
    DatasetWriter& operator=(const DatasetWriter&) = delete;

    void add_rule(const RuleRecord& rule);
    void begin_split(const std::string& rule_id, Split split);
    void add(const RenderedSample& s);
    void end_split();

    /// Writes manifest.json and returns it.
    DatasetManifest finish();

private:
    std::filesystem::path root_;
    DatasetManifest manifest_;
    std::optional<std::pair<std::string, Split>> current_;
    std::ofstream labels_;
    std::size_t written_ = 0;
};

struct GenerateOptions {
    std::uint64_t master_seed = 0;
    int image_size = renderer::kDefaultSize;
    int workers = 1;
    std::map<Split, std::size_t> counts;
};

struct SplitStats {
    std::string rule_id;
    Split split = Split::Train;
    std::size_t samples = 0;
    std::size_t attempts = 0;
    double seconds = 0.0;
};

/// Generates, renders and writes every (rule, split) requested.
DatasetManifest write_dataset(const std::filesystem::path& root, const std::vector<rules::RegistryEntry>& rules,
                              const GenerateOptions& options,
                              const std::function<void(const SplitStats&)>& on_split = {});

struct VerifyReport {
    std::vector<std::string> discrepancies;
    std::size_t samples = 0;
    std::size_t files = 0;
    std::size_t rederived = 0;

    bool ok() const { return discrepancies.empty(); }
};

/// Recounts files against the manifest, checks labels, and regenerates
/// `rederive` sidecars and their images byte for byte.
VerifyReport verify(const std::filesystem::path& root, std::size_t rederive = 10);

struct SampleKey {
    std::string rule_id;
    Split split = Split::Train;
    std::uint64_t index = 0;

    friend auto operator<=>(const SampleKey&, const SampleKey&) = default;
};

/// index -> outlier_index for one split directory.
std::vector<int> read_labels_csv(const std::filesystem::path& file);

/// Every label in a dataset, keyed by sample.
std::map<SampleKey, int> read_labels(const std::filesystem::path& root);

struct PredictionRow {
    SampleKey key;
    int predicted_index = 0;
};

/// Header comment lines `# model=<name>` and `# regime=<n>`, then the CSV
/// header `rule_id,split,sample_index,predicted_index`.
struct PredictionFile {
    std::string model;
    std::optional<int> regime;
    std::vector<PredictionRow> rows;
};

PredictionFile parse_predictions(const std::string& text);
PredictionFile read_predictions(const std::filesystem::path& path);
std::string format_predictions(const PredictionFile& p);
void write_predictions(const std::filesystem::path& path, const PredictionFile& p);

}  // namespace cvr::dataset
