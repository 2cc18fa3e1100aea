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

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvr/relations.hpp"
#include "cvr/scene.hpp"

namespace cvr::rules {

using relations::Comparator;
using relations::ElementaryRelation;
using relations::Range;

// Node id layout shared by rules and generated scenes.
inline constexpr NodeId kFirstGroupId = 1000;
inline constexpr NodeId kFirstRelationId = 2000;
inline constexpr int kMaxObjects = 8;
inline constexpr int kMaxDistinctKinds = 4;
inline constexpr int kMaxRelationInstances = 6;

inline NodeId slot_id(int index) { return static_cast<NodeId>(index + 1); }
inline NodeId group_id(std::size_t index) { return kFirstGroupId + static_cast<NodeId>(index); }
inline NodeId relation_node_id(std::size_t index) { return kFirstRelationId + static_cast<NodeId>(index); }

class RuleError : public std::runtime_error {
public:
    enum class Code {
        SyntaxError,
        UnknownRelation,
        UnknownSlot,
        InvalidArity,
        InvalidComparator,
        InvalidOddRule,
        OverConstrained,
        CyclicStructure,
        TooComplex,
        NoVariantDeclared,
        ManifestError,
    };

    RuleError(Code code, std::string message, std::string rule_id = {})
        : std::runtime_error(format(code, message, rule_id)), code_(code), rule_id_(std::move(rule_id)),
          message_(std::move(message)) {}

    Code code() const { return code_; }
    const std::string& rule_id() const { return rule_id_; }
    const std::string& message() const { return message_; }

    RuleError with_rule(std::string id) const { return RuleError(code_, message_, std::move(id)); }

private:
    static std::string format(Code code, const std::string& message, const std::string& rule_id);

    Code code_;
    std::string rule_id_;
    std::string message_;
};

std::string_view to_string(RuleError::Code code);

struct GroupDecl {
    std::string name;
    std::vector<NodeId> members;  // object slots or other groups

    friend bool operator==(const GroupDecl&, const GroupDecl&) = default;
};

/// Parsed rule. Slots o0..o{n-1} map to node ids 1..n, groups to 1000+, the
/// relation nodes to 2000+ and `scene` to the root.
struct RuleSpec {
    std::string id;
    int object_count = 0;
    std::vector<GroupDecl> groups;
    std::vector<ElementaryRelation> reference_relations;
    std::vector<RelationKind> odd_kinds;

    friend bool operator==(const RuleSpec&, const RuleSpec&) = default;

    /// Distinct relation kinds of the reference rule, in canonical order.
    std::vector<RelationKind> component_kinds() const;

    /// Reference relations the outlier contradicts.
    std::vector<ElementaryRelation> odd_relations() const;

    std::string slot_name(NodeId id) const;
    std::vector<NodeId> expand_static(NodeId id) const;
};

RuleSpec parse_rule(std::string_view text);
std::string print_rule(const RuleSpec& spec);

enum class ParamTag { FixedAcrossPanels, RandomPerPanel, RuleRelevant };
std::string_view to_string(ParamTag tag);

struct Parameter {
    std::string name;
    ParamTag tag = ParamTag::FixedAcrossPanels;
    RelationKind attribute = RelationKind::Shape;
    std::vector<NodeId> slots;             // declared object slots it governs
    std::optional<std::size_t> relation;   // index into reference_relations

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

struct AttributeRanges {
    Range size{0.12, 0.30};
    Range hue{0.0, 1.0};
    Range rotation{0.0, 6.283185307179586};

    friend bool operator==(const AttributeRanges& a, const AttributeRanges& b) {
        auto eq = [](const Range& x, const Range& y) { return x.lo == y.lo && x.hi == y.hi; };
        return eq(a.size, b.size) && eq(a.hue, b.hue) && eq(a.rotation, b.rotation);
    }
};

/// Held-out regime for the generalization split: one free attribute swaps
/// between fixed and random, one sampling range is replaced.
struct GeneralizationVariant {
    RelationKind swap = RelationKind::Rotation;
    RelationKind range_attribute = RelationKind::Size;
    Range range;
};

struct CompileOptions {
    std::set<RelationKind> random_kinds{RelationKind::Position, RelationKind::Color};
    AttributeRanges ranges;
    std::optional<GeneralizationVariant> generalization;
};

enum class StepKind { Count, Attributes, Relation, Place };

struct PlanStep {
    StepKind kind = StepKind::Relation;
    std::size_t relation = 0;  // Count / Relation
    NodeId node = 0;           // Place
    int depth = 0;             // Attributes: nesting depth being assigned

    friend bool operator==(const PlanStep&, const PlanStep&) = default;
};

class GenerationProgram;
GenerationProgram compile(const RuleSpec& spec, const CompileOptions& options = {});

/// Compiled rule. Only compile() and the tag/range transformations below
/// construct programs, so every instance has passed validation.
class GenerationProgram {
public:
    const RuleSpec& rule() const { return rule_; }
    const std::vector<Parameter>& params() const { return params_; }
    const std::vector<PlanStep>& plan() const { return plan_; }
    const AttributeRanges& ranges() const { return ranges_; }
    const std::optional<GeneralizationVariant>& generalization() const { return generalization_; }

    const Parameter* find_param(std::string_view name) const;

    /// Tag of the free (non-relation) parameter for an attribute kind.
    ParamTag free_tag(RelationKind attribute) const;

    /// Tag governing (slot, attribute) for declared slots.
    ParamTag tag_of(NodeId slot, RelationKind attribute) const;

    /// Nesting depth of each declared slot under inside relations.
    const std::map<NodeId, int>& depth() const { return depth_; }

    /// Re-tags a free parameter between fixed and random. Rule-relevant tags
    /// cannot be assigned or removed this way.
    GenerationProgram with_tag(std::string_view param, ParamTag tag) const;
    GenerationProgram with_range(RelationKind attribute, Range range) const;
    GenerationProgram with_param_name(std::string_view from, std::string_view to) const;

private:
    GenerationProgram() = default;
    friend GenerationProgram compile(const RuleSpec&, const CompileOptions&);

    RuleSpec rule_;
    std::vector<Parameter> params_;
    std::vector<PlanStep> plan_;
    AttributeRanges ranges_;
    std::optional<GeneralizationVariant> generalization_;
    std::map<NodeId, int> depth_;
};

/// Number of random-per-panel parameters.
int difficulty(const GenerationProgram& program);

/// Program with the declared held-out regime applied; throws NoVariantDeclared.
GenerationProgram generalization_variant(const GenerationProgram& program);

struct RegistryEntry {
    std::string id;
    std::filesystem::path dsl_file;
    std::vector<RelationKind> component_kinds;
    RuleSpec spec;
    CompileOptions options;
    GenerationProgram program;
};

/// Loads a manifest (JSON) and parses and compiles every rule it lists.
/// Errors carry the failing rule id.
std::vector<RegistryEntry> load_registry(const std::filesystem::path& manifest);

/// Like load_registry but collects per-rule failures instead of throwing on
/// the first one.
std::vector<RegistryEntry> load_registry_lenient(const std::filesystem::path& manifest,
                                                 std::vector<RuleError>& failures);

bool is_elementary(const RegistryEntry& e);

}  // namespace cvr::rules
