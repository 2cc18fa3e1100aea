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

// Manifest format:
//
//   {"rules": [{"id": "size", "dsl_file": "size.cvr",
//               "component_kinds": ["size"],
//               "random": ["position", "color"],
//               "generalization_variant": {"swap": "rotation",
//                   "range": {"attribute": "size", "min": 0.2, "max": 0.3}}}]}

#include <fstream>
#include <sstream>

#include "json.hpp"

#include "cvr/rules.hpp"

namespace cvr::rules {

namespace {

using json = nlohmann::json;
using Code = RuleError::Code;

RelationKind kind_field(const json& j, const std::string& rule) {
    if (!j.is_string()) throw RuleError(Code::ManifestError, "relation kind must be a string", rule);
    auto k = parse_relation_kind(j.get<std::string>());
    if (!k) throw RuleError(Code::UnknownRelation, "unknown relation '" + j.get<std::string>() + "'", rule);
    return *k;
}

json read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw RuleError(Code::ManifestError, "cannot open manifest " + path.string());
    try {
        json j = json::parse(in);
        if (!j.contains("rules") || !j["rules"].is_array())
            throw RuleError(Code::ManifestError, "manifest has no 'rules' array");
        return j;
    } catch (const json::exception& e) {
        throw RuleError(Code::ManifestError, std::string("malformed manifest: ") + e.what());
    }
}

RegistryEntry load_entry(const json& e, const std::filesystem::path& base) {
    const std::string id = e.value("id", "");
    if (id.empty()) throw RuleError(Code::ManifestError, "entry without id");
    try {
        const std::filesystem::path dsl = base / e.at("dsl_file").get<std::string>();
        std::ifstream in(dsl);
        if (!in) throw RuleError(Code::ManifestError, "cannot open " + dsl.string(), id);
        std::stringstream text;
        text << in.rdbuf();
        RuleSpec spec = parse_rule(text.str());
        if (spec.id != id) throw RuleError(Code::ManifestError, "file declares rule '" + spec.id + "'", id);

        CompileOptions options;
        if (e.contains("random")) {
            options.random_kinds.clear();
            for (const auto& k : e["random"]) options.random_kinds.insert(kind_field(k, id));
        }
        if (e.contains("generalization_variant")) {
            const auto& v = e["generalization_variant"];
            GeneralizationVariant g;
            g.swap = kind_field(v.at("swap"), id);
            g.range_attribute = kind_field(v.at("range").at("attribute"), id);
            g.range = {v.at("range").at("min").get<double>(), v.at("range").at("max").get<double>()};
            options.generalization = g;
        }
        std::vector<RelationKind> kinds;
        for (const auto& k : e.at("component_kinds")) kinds.push_back(kind_field(k, id));
        std::sort(kinds.begin(), kinds.end());
        if (kinds != spec.component_kinds())
            throw RuleError(Code::ManifestError, "component_kinds do not match the rule's relations", id);

        GenerationProgram program = compile(spec, options);
        return RegistryEntry{id, dsl, kinds, std::move(spec), std::move(options), std::move(program)};
    } catch (const RuleError& err) {
        throw err.rule_id().empty() ? err.with_rule(id) : err;
    } catch (const json::exception& err) {
        throw RuleError(Code::ManifestError, err.what(), id);
    }
}

}  // namespace

std::vector<RegistryEntry> load_registry_lenient(const std::filesystem::path& manifest,
                                                 std::vector<RuleError>& failures) {
    const json j = read_manifest(manifest);
    std::vector<RegistryEntry> out;
    std::set<std::string> ids;
    for (const auto& e : j["rules"]) {
        try {
            RegistryEntry entry = load_entry(e, manifest.parent_path());
            if (!ids.insert(entry.id).second) throw RuleError(Code::ManifestError, "duplicate rule id", entry.id);
            out.push_back(std::move(entry));
        } catch (const RuleError& err) {
            failures.push_back(err);
        }
    }
    return out;
}

std::vector<RegistryEntry> load_registry(const std::filesystem::path& manifest) {
    std::vector<RuleError> failures;
    auto out = load_registry_lenient(manifest, failures);
    if (!failures.empty()) throw failures.front();
    return out;
}

bool is_elementary(const RegistryEntry& e) { return e.component_kinds.size() == 1; }

}  // namespace cvr::rules
