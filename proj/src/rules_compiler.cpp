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

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "cvr/rules.hpp"

namespace cvr::rules {

namespace {

using Code = RuleError::Code;

constexpr std::array<RelationKind, 6> kFreeKinds = {RelationKind::Shape, RelationKind::Position, RelationKind::Size,
                                                    RelationKind::Color, RelationKind::Rotation, RelationKind::Flip};

bool is_free_kind(RelationKind k) { return std::find(kFreeKinds.begin(), kFreeKinds.end(), k) != kFreeKinds.end(); }

std::vector<NodeId> members_of(const RuleSpec& spec, const ElementaryRelation& r) {
    std::vector<NodeId> out;
    for (NodeId op : r.operands)
        for (NodeId m : spec.expand_static(op))
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    return out;
}

// (slot, attribute) pairs a relation owns.
std::vector<std::pair<NodeId, RelationKind>> governed(const RuleSpec& spec, const ElementaryRelation& r) {
    std::vector<std::pair<NodeId, RelationKind>> out;
    switch (r.kind) {
        case RelationKind::Count: return out;
        case RelationKind::Inside:
        case RelationKind::Contact: out.push_back({r.operands.at(1), RelationKind::Position}); return out;
        default: break;
    }
    for (NodeId m : members_of(spec, r)) {
        out.push_back({m, r.kind});
        if (r.kind == RelationKind::Flip || r.kind == RelationKind::Rotation) out.push_back({m, RelationKind::Shape});
    }
    return out;
}

struct UnionFind {
    std::map<NodeId, NodeId> parent;
    std::map<NodeId, int> parity;  // parity to parent

    std::pair<NodeId, int> find(NodeId x) {
        if (!parent.contains(x)) {
            parent[x] = x;
            parity[x] = 0;
        }
        if (parent[x] == x) return {x, 0};
        auto [root, p] = find(parent[x]);
        parent[x] = root;
        parity[x] ^= p;
        return {root, parity[x]};
    }

    // Returns false when the new constraint contradicts earlier ones.
    bool unite(NodeId a, NodeId b, int rel) {
        auto [ra, pa] = find(a);
        auto [rb, pb] = find(b);
        if (ra == rb) return (pa ^ pb) == rel;
        parent[ra] = rb;
        parity[ra] = pa ^ pb ^ rel;
        return true;
    }
};

void check_structure(const RuleSpec& spec) {
    if (spec.object_count > kMaxObjects)
        throw RuleError(Code::OverConstrained, "more than " + std::to_string(kMaxObjects) + " objects", spec.id);

    // Group nesting must be acyclic.
    std::map<NodeId, int> state;
    std::function<void(NodeId)> visit = [&](NodeId id) {
        if (id < kFirstGroupId) return;
        int& s = state[id];
        if (s == 1) throw RuleError(Code::CyclicStructure, "group '" + spec.slot_name(id) + "' contains itself", spec.id);
        if (s == 2) return;
        s = 1;
        for (NodeId m : spec.groups.at(id - kFirstGroupId).members) visit(m);
        state[id] = 2;
    };
    for (std::size_t g = 0; g < spec.groups.size(); ++g) visit(group_id(g));

    std::set<RelationKind> kinds;
    for (const auto& r : spec.reference_relations) kinds.insert(r.kind);
    if (static_cast<int>(kinds.size()) > kMaxDistinctKinds)
        throw RuleError(Code::TooComplex, "more than " + std::to_string(kMaxDistinctKinds) + " distinct relation kinds",
                        spec.id);
    if (static_cast<int>(spec.reference_relations.size()) > kMaxRelationInstances)
        throw RuleError(Code::TooComplex,
                        "more than " + std::to_string(kMaxRelationInstances) + " relation instances", spec.id);

    for (RelationKind k : spec.odd_kinds)
        if (!kinds.contains(k))
            throw RuleError(Code::InvalidOddRule,
                            "odd rule changes '" + std::string(to_string(k)) + "', which no reference relation governs",
                            spec.id);
}

void check_contradictions(const RuleSpec& spec) {
    std::map<RelationKind, UnionFind> equal;
    UnionFind flips;
    std::map<NodeId, std::size_t> placed_by;

    for (std::size_t i = 0; i < spec.reference_relations.size(); ++i) {
        const auto& r = spec.reference_relations[i];
        const std::string what = std::string(to_string(r.kind)) + " relation #" + std::to_string(i);
        for (std::size_t a = 0; a < r.operands.size(); ++a)
            for (std::size_t b = a + 1; b < r.operands.size(); ++b)
                if (r.operands[a] == r.operands[b])
                    throw RuleError(Code::OverConstrained, what + " repeats an operand", spec.id);

        if (r.kind == RelationKind::Inside || r.kind == RelationKind::Contact) {
            const NodeId b = r.operands.at(1);
            if (auto [it, fresh] = placed_by.emplace(b, i); !fresh)
                throw RuleError(Code::OverConstrained,
                                "object '" + spec.slot_name(b) + "' is positioned by two inside/contact relations",
                                spec.id);
            continue;
        }
        if (r.kind == RelationKind::Count) {
            if (r.comparator.type == Comparator::Type::Offset) {
                const double n = r.comparator.offset;
                if (n != std::round(n))
                    throw RuleError(Code::OverConstrained, what + " has a non-integer offset", spec.id);
                if (r.operands.size() == 1 && (n < 1 || n > kMaxObjects))
                    throw RuleError(Code::OverConstrained, what + " asks for an unreachable count", spec.id);
            }
            continue;
        }
        const auto members = members_of(spec, r);
        if (r.kind == RelationKind::Flip) {
            int rel = 0;
            if (r.comparator.type == Comparator::Type::Offset) rel = static_cast<int>(std::llabs(std::llround(r.comparator.offset)) & 1);
            for (std::size_t j = 0; j + 1 < members.size(); ++j)
                if (!flips.unite(members[j], members[j + 1], rel))
                    throw RuleError(Code::OverConstrained, what + " contradicts another flip relation", spec.id);
            continue;
        }
        if (r.kind == RelationKind::Shape) continue;
        const bool is_equal = r.comparator.type == Comparator::Type::Equal ||
                              (r.comparator.type == Comparator::Type::Offset && r.comparator.offset == 0.0);
        if (is_equal) {
            for (std::size_t j = 0; j + 1 < members.size(); ++j) equal[r.kind].unite(members[j], members[j + 1], 0);
        }
    }
    // Ordered and offset relations cannot link members of one equality class.
    for (std::size_t i = 0; i < spec.reference_relations.size(); ++i) {
        const auto& r = spec.reference_relations[i];
        if (!relations::is_continuous(r.kind)) continue;
        const bool is_equal = r.comparator.type == Comparator::Type::Equal ||
                              (r.comparator.type == Comparator::Type::Offset && r.comparator.offset == 0.0);
        if (is_equal) continue;
        const auto members = members_of(spec, r);
        auto& uf = equal[r.kind];
        for (std::size_t j = 0; j + 1 < members.size(); ++j)
            if (uf.find(members[j]).first == uf.find(members[j + 1]).first)
                throw RuleError(Code::OverConstrained,
                                std::string(to_string(r.kind)) + " relation #" + std::to_string(i) +
                                    " orders objects that another relation makes equal",
                                spec.id);
    }
    // Contact targets are positioned by the contact itself.
    for (const auto& r : spec.reference_relations) {
        if (r.kind != RelationKind::Position) continue;
        for (NodeId m : members_of(spec, r)) {
            auto it = placed_by.find(m);
            if (it != placed_by.end() && spec.reference_relations[it->second].kind == RelationKind::Contact)
                throw RuleError(Code::OverConstrained,
                                "object '" + spec.slot_name(m) + "' is positioned by both contact and position",
                                spec.id);
        }
    }
}

// Placement order over slots: anchors and containers before their targets.
std::vector<NodeId> placement_order(const RuleSpec& spec, std::map<NodeId, int>& depth) {
    std::map<NodeId, std::vector<NodeId>> deps;  // target -> anchors
    for (const auto& r : spec.reference_relations)
        if (r.kind == RelationKind::Inside || r.kind == RelationKind::Contact)
            deps[r.operands.at(1)].push_back(r.operands.at(0));

    std::vector<NodeId> order;
    std::map<NodeId, int> state;
    std::function<void(NodeId)> visit = [&](NodeId id) {
        int& s = state[id];
        if (s == 1)
            throw RuleError(Code::CyclicStructure,
                            "inside/contact relations form a cycle through '" + spec.slot_name(id) + "'", spec.id);
        if (s == 2) return;
        s = 1;
        for (NodeId a : deps[id]) visit(a);
        state[id] = 2;
        order.push_back(id);
    };
    for (int i = 0; i < spec.object_count; ++i) visit(slot_id(i));

    for (NodeId id : order) {
        int d = 0;
        for (const auto& r : spec.reference_relations)
            if (r.kind == RelationKind::Inside && r.operands.at(1) == id) d = std::max(d, depth.at(r.operands.at(0)) + 1);
        depth[id] = d;
    }
    return order;
}

}  // namespace

std::string_view to_string(ParamTag tag) {
    switch (tag) {
        case ParamTag::FixedAcrossPanels: return "fixed";
        case ParamTag::RandomPerPanel: return "random";
        case ParamTag::RuleRelevant: return "rule_relevant";
    }
    return "fixed";
}

GenerationProgram compile(const RuleSpec& spec, const CompileOptions& options) {
    check_structure(spec);
    check_contradictions(spec);

    GenerationProgram p;
    p.rule_ = spec;
    p.ranges_ = options.ranges;
    p.generalization_ = options.generalization;

    const auto order = placement_order(spec, p.depth_);

    std::set<std::pair<NodeId, RelationKind>> owned;
    for (std::size_t i = 0; i < spec.reference_relations.size(); ++i) {
        const auto& r = spec.reference_relations[i];
        Parameter param;
        param.name = std::string(to_string(r.kind)) + ":" + std::to_string(i);
        param.tag = ParamTag::RuleRelevant;
        param.attribute = r.kind;
        param.slots = members_of(spec, r);
        param.relation = i;
        p.params_.push_back(std::move(param));
        for (const auto& g : governed(spec, r)) owned.insert(g);
    }
    // A rule with a count relation has clones that carry every free attribute.
    const bool has_clones = std::any_of(spec.reference_relations.begin(), spec.reference_relations.end(),
                                        [](const ElementaryRelation& r) { return r.kind == RelationKind::Count; });
    for (RelationKind k : kFreeKinds) {
        Parameter param;
        param.name = std::string(to_string(k));
        param.tag = options.random_kinds.contains(k) ? ParamTag::RandomPerPanel : ParamTag::FixedAcrossPanels;
        param.attribute = k;
        for (int i = 0; i < spec.object_count; ++i)
            if (!owned.contains({slot_id(i), k})) param.slots.push_back(slot_id(i));
        if (param.slots.empty() && !has_clones) continue;
        p.params_.push_back(std::move(param));
    }

    if (options.generalization) {
        const auto& v = *options.generalization;
        if (!is_free_kind(v.swap) || !p.find_param(to_string(v.swap)))
            throw RuleError(Code::ManifestError,
                            "generalization swaps '" + std::string(to_string(v.swap)) + "', which has no free parameter",
                            spec.id);
        if (v.range_attribute != RelationKind::Size && v.range_attribute != RelationKind::Color &&
            v.range_attribute != RelationKind::Rotation)
            throw RuleError(Code::ManifestError, "generalization range must be size, color or rotation", spec.id);
        if (!(v.range.lo < v.range.hi))
            throw RuleError(Code::ManifestError, "generalization range is empty", spec.id);
        if (v.range_attribute == RelationKind::Size && (v.range.lo < kMinSize || v.range.hi > kMaxSize))
            throw RuleError(Code::ManifestError, "generalization size range leaves [0.05, 0.45]", spec.id);
    }

    // Sampler plan.
    for (std::size_t i = 0; i < spec.reference_relations.size(); ++i)
        if (spec.reference_relations[i].kind == RelationKind::Count) p.plan_.push_back({StepKind::Count, i, 0, 0});
    int max_depth = 0;
    for (const auto& [id, d] : p.depth_) max_depth = std::max(max_depth, d);
    for (int d = 0; d <= max_depth; ++d) {
        p.plan_.push_back({StepKind::Attributes, 0, 0, d});
        for (std::size_t i = 0; i < spec.reference_relations.size(); ++i) {
            const auto& r = spec.reference_relations[i];
            if (r.kind != RelationKind::Size) continue;
            int md = 0;
            for (NodeId m : members_of(spec, r)) md = std::max(md, p.depth_.count(m) ? p.depth_.at(m) : 0);
            if (md == d) p.plan_.push_back({StepKind::Relation, i, 0, d});
        }
    }
    for (RelationKind k : {RelationKind::Shape, RelationKind::Rotation, RelationKind::Flip, RelationKind::Color,
                           RelationKind::Position})
        for (std::size_t i = 0; i < spec.reference_relations.size(); ++i)
            if (spec.reference_relations[i].kind == k) p.plan_.push_back({StepKind::Relation, i, 0, 0});
    for (NodeId id : order) {
        std::optional<std::size_t> by;
        for (std::size_t i = 0; i < spec.reference_relations.size(); ++i) {
            const auto& r = spec.reference_relations[i];
            if ((r.kind == RelationKind::Inside || r.kind == RelationKind::Contact) && r.operands.at(1) == id) by = i;
        }
        if (by)
            p.plan_.push_back({StepKind::Relation, *by, id, p.depth_.at(id)});
        else
            p.plan_.push_back({StepKind::Place, 0, id, p.depth_.at(id)});
    }
    return p;
}

const Parameter* GenerationProgram::find_param(std::string_view name) const {
    for (const auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

ParamTag GenerationProgram::free_tag(RelationKind attribute) const {
    for (const auto& p : params_)
        if (!p.relation && p.attribute == attribute) return p.tag;
    return ParamTag::FixedAcrossPanels;
}

ParamTag GenerationProgram::tag_of(NodeId slot, RelationKind attribute) const {
    for (const auto& p : params_) {
        if (!p.relation) continue;
        const auto& r = rule_.reference_relations[*p.relation];
        for (const auto& g : governed(rule_, r))
            if (g.first == slot && g.second == attribute) return ParamTag::RuleRelevant;
    }
    return free_tag(attribute);
}

GenerationProgram GenerationProgram::with_tag(std::string_view param, ParamTag tag) const {
    if (tag == ParamTag::RuleRelevant) throw std::invalid_argument("rule-relevant tags are assigned by compile");
    GenerationProgram out = *this;
    for (auto& p : out.params_) {
        if (p.name != param) continue;
        if (p.tag == ParamTag::RuleRelevant)
            throw std::invalid_argument("parameter '" + p.name + "' is rule-relevant");
        p.tag = tag;
        return out;
    }
    throw std::invalid_argument("unknown parameter '" + std::string(param) + "'");
}

GenerationProgram GenerationProgram::with_range(RelationKind attribute, Range range) const {
    if (!(range.lo < range.hi)) throw std::invalid_argument("empty range");
    GenerationProgram out = *this;
    switch (attribute) {
        case RelationKind::Size:
            if (range.lo < kMinSize || range.hi > kMaxSize) throw std::invalid_argument("size range out of bounds");
            out.ranges_.size = range;
            break;
        case RelationKind::Color: out.ranges_.hue = range; break;
        case RelationKind::Rotation: out.ranges_.rotation = range; break;
        default: throw std::invalid_argument("no sampling range for " + std::string(to_string(attribute)));
    }
    return out;
}

GenerationProgram GenerationProgram::with_param_name(std::string_view from, std::string_view to) const {
    GenerationProgram out = *this;
    if (find_param(to)) throw std::invalid_argument("parameter '" + std::string(to) + "' already exists");
    for (auto& p : out.params_)
        if (p.name == from) {
            p.name = std::string(to);
            return out;
        }
    throw std::invalid_argument("unknown parameter '" + std::string(from) + "'");
}

int difficulty(const GenerationProgram& program) {
    return static_cast<int>(std::count_if(program.params().begin(), program.params().end(),
                                          [](const Parameter& p) { return p.tag == ParamTag::RandomPerPanel; }));
}

GenerationProgram generalization_variant(const GenerationProgram& program) {
    if (!program.generalization())
        throw RuleError(RuleError::Code::NoVariantDeclared, "no generalization variant declared", program.rule().id);
    const auto& v = *program.generalization();
    const std::string name(to_string(v.swap));
    const ParamTag current = program.free_tag(v.swap);
    const ParamTag swapped =
        current == ParamTag::RandomPerPanel ? ParamTag::FixedAcrossPanels : ParamTag::RandomPerPanel;
    return program.with_tag(name, swapped).with_range(v.range_attribute, v.range);
}

}  // namespace cvr::rules
