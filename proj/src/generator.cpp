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

#include "cvr/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cvr/parallel.hpp"
#include "cvr/rng.hpp"

namespace cvr::generator {

namespace {

using relations::ElementaryRelation;
using relations::Range;
using relations::SamplingContext;
using relations::SamplingExhausted;
using rules::GenerationProgram;
using rules::ParamTag;
using rules::PlanStep;
using rules::StepKind;

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Stream labels for derive_seed.
constexpr std::uint64_t kAttemptLabel = 0xA7;
constexpr std::uint64_t kOutlierLabel = 0x0D;
constexpr std::uint64_t kPanelLabel = 0x9A;
constexpr std::uint64_t kFixedLabel = 0xF1;
constexpr std::uint64_t kFlipLabel = 0xF7;

constexpr std::array<RelationKind, 5> kObjectAttributes = {RelationKind::Shape, RelationKind::Size, RelationKind::Color,
                                                           RelationKind::Rotation, RelationKind::Flip};

// Flip patterns over 4 panels with no 3-vs-1 split: all equal or two-two.
constexpr std::array<std::array<bool, 4>, 8> kFlipPatterns = {{{false, false, false, false},
                                                               {true, true, true, true},
                                                               {false, false, true, true},
                                                               {true, true, false, false},
                                                               {false, true, false, true},
                                                               {true, false, true, false},
                                                               {false, true, true, false},
                                                               {true, false, false, true}}};

bool governs(const ElementaryRelation& r, const SceneGraph& g, NodeId id, RelationKind attr) {
    switch (r.kind) {
        case RelationKind::Count: return false;
        case RelationKind::Inside:
        case RelationKind::Contact: return attr == RelationKind::Position && r.operands.at(1) == id;
        default: break;
    }
    const bool kind_match = attr == r.kind || (attr == RelationKind::Shape &&
                                               (r.kind == RelationKind::Flip || r.kind == RelationKind::Rotation));
    if (!kind_match) return false;
    const auto objs = relations::operand_objects(r, g);
    return std::find(objs.begin(), objs.end(), id) != objs.end();
}

bool is_governed(const rules::RuleSpec& spec, const SceneGraph& g, NodeId id, RelationKind attr) {
    return std::any_of(spec.reference_relations.begin(), spec.reference_relations.end(),
                       [&](const ElementaryRelation& r) { return governs(r, g, id, attr); });
}

// Whether a reference relation of kind `attr` constrains `id`.
bool is_target_of(const rules::RuleSpec& spec, const SceneGraph& g, NodeId id, RelationKind attr) {
    return std::any_of(spec.reference_relations.begin(), spec.reference_relations.end(),
                       [&](const ElementaryRelation& r) {
                           if (r.kind != attr) return false;
                           const auto objs = relations::operand_objects(r, g);
                           return std::find(objs.begin(), objs.end(), id) != objs.end();
                       });
}

double circular_distance(double a, double b, double p) {
    double d = std::abs(a - b);
    if (p > 0) {
        d = std::fmod(d, p);
        d = std::min(d, p - d);
    }
    return d;
}

bool three_vs_one(const std::array<double, 4>& v, double t, double p) {
    for (std::size_t i = 0; i < 4; ++i) {
        std::array<double, 3> o{};
        std::size_t k = 0;
        for (std::size_t j = 0; j < 4; ++j)
            if (j != i) o[k++] = v[j];
        double spread = 0.0;
        for (std::size_t a = 0; a < 3; ++a)
            for (std::size_t b = a + 1; b < 3; ++b) spread = std::max(spread, circular_distance(o[a], o[b], p));
        if (spread > t) continue;
        // Median of the three, measured relative to the first on the circle.
        std::array<double, 3> rel{};
        for (std::size_t a = 0; a < 3; ++a) {
            double d = o[a] - o[0];
            if (p > 0) {
                d = std::fmod(d, p);
                if (d > p / 2) d -= p;
                if (d < -p / 2) d += p;
            }
            rel[a] = d;
        }
        std::sort(rel.begin(), rel.end());
        const double median = o[0] + rel[1];
        if (circular_distance(v[i], median, p) > 3.0 * t) return true;
    }
    return false;
}

template <typename T>
bool three_vs_one_discrete(const std::array<T, 4>& v) {
    for (std::size_t i = 0; i < 4; ++i) {
        std::array<T, 3> o{};
        std::size_t k = 0;
        for (std::size_t j = 0; j < 4; ++j)
            if (j != i) o[k++] = v[j];
        if (o[0] == o[1] && o[1] == o[2] && !(v[i] == o[0])) return true;
    }
    return false;
}

double fixed_unit(std::uint64_t attempt_seed, NodeId id, RelationKind k, std::uint64_t component) {
    Rng rng(derive_seed(attempt_seed, {kFixedLabel, id, static_cast<std::uint64_t>(k), component}));
    return rng.uniform();
}

class ProblemBuilder {
public:
    ProblemBuilder(const GenerationProgram& program, std::uint64_t attempt_seed)
        : prog_(program), spec_(program.rule()), seed_(attempt_seed) {
        Rng rng(derive_seed(seed_, {kAttemptLabel}));
        build_skeleton(rng);
    }

    SceneGraph solve(int panel) {
        Rng rng(derive_seed(seed_, {kPanelLabel, static_cast<std::uint64_t>(panel)}));
        return solve(panel, rng);
    }

    SceneGraph solve_outlier(int panel) {
        Rng rng(derive_seed(seed_, {kPanelLabel, static_cast<std::uint64_t>(panel)}));
        SceneGraph g = solve(panel, rng);
        const auto odd = spec_.odd_relations();
        const auto& r = odd[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(odd.size()) - 1))];
        return relations::perturb_violating(r, g, rng, 200);
    }

private:
    void build_skeleton(Rng& rng) {
        for (const auto& step : prog_.plan())
            if (step.kind == StepKind::Place || (step.kind == StepKind::Relation && step.node != kRootId))
                skeleton_.add_object(step.node, SceneObject{});
        for (std::size_t j = 0; j < spec_.groups.size(); ++j)
            skeleton_.relations[rules::group_id(j)] = RelationNode{std::nullopt, spec_.groups[j].members, {}};
        for (const auto& r : spec_.reference_relations) {
            RelationNode node{r.kind, r.operands, {}};
            if (r.kind == RelationKind::Count && r.operands.size() == 1) node.attributes["count"] = count_target(r, rng);
            skeleton_.relations[r.node] = std::move(node);
        }
        for (const auto& r : spec_.reference_relations) {
            if (r.kind == RelationKind::Inside) {
                containers_.insert(r.operands[0]);
                container_of_[r.operands[1]] = r.operands[0];
            }
        }
        const bool has_color_relation =
            std::any_of(spec_.reference_relations.begin(), spec_.reference_relations.end(),
                        [](const ElementaryRelation& r) { return r.kind == RelationKind::Color; });
        skeleton_.achromatic = !has_color_relation && prog_.free_tag(RelationKind::Color) == ParamTag::FixedAcrossPanels;
    }

    // Cardinality shared by the reference panels of a unary count relation.
    double count_target(const ElementaryRelation& r, Rng& rng) const {
        if (r.comparator.type == relations::Comparator::Type::Offset) return std::round(r.comparator.offset);
        const NodeId op = r.operands[0];
        const int declared = static_cast<int>(spec_.expand_static(op).size());
        const int outside = op == kRootId ? 0 : spec_.object_count - declared;
        const int hi = std::min(declared + 2, rules::kMaxObjects - outside - 1);
        return static_cast<double>(rng.uniform_int(declared, std::max(declared, hi)));
    }

    Range size_range(const SceneGraph& g, NodeId id) const {
        if (containers_.contains(id)) return {0.32, 0.45};
        if (auto it = container_of_.find(id); it != container_of_.end()) {
            const double outer = g.objects.at(it->second).size;
            return {std::max(kMinSize, 0.25 * outer), std::max(kMinSize + 0.01, 0.4 * outer)};
        }
        Range base = prog_.ranges().size;
        const double crowd = std::sqrt(1.4 / (std::numbers::pi * static_cast<double>(g.objects.size())));
        base.hi = std::min(base.hi, crowd);
        base.lo = std::min(base.lo, 0.6 * base.hi);
        return base;
    }

    int depth_of(NodeId id) const {
        auto it = prog_.depth().find(id);
        return it == prog_.depth().end() ? 0 : it->second;
    }

    const std::array<bool, 4>& flip_pattern(NodeId id) {
        auto it = flips_.find(id);
        if (it == flips_.end()) {
            Rng rng(derive_seed(seed_, {kFlipLabel, id}));
            it = flips_.emplace(id, kFlipPatterns[static_cast<std::size_t>(rng.uniform_int(0, 7))]).first;
        }
        return it->second;
    }

    double unit(NodeId id, RelationKind k, std::uint64_t component, Rng& rng) const {
        return prog_.free_tag(k) == ParamTag::RandomPerPanel ? rng.uniform() : fixed_unit(seed_, id, k, component);
    }

    void assign_free(SceneGraph& g, NodeId id, int panel, Rng& rng, SamplingContext& ctx) {
        SceneObject& o = g.objects.at(id);
        const Range size = ctx.size_range_of(id);
        const auto& ranges = prog_.ranges();
        for (RelationKind k : kObjectAttributes) {
            if (is_governed(spec_, g, id, k)) continue;
            switch (k) {
                case RelationKind::Shape: {
                    if (prog_.free_tag(k) == ParamTag::RandomPerPanel) {
                        auto [seed, complexity] = relations::draw_shape(rng);
                        relations::set_shape(o, seed, complexity);
                    } else {
                        Rng fixed(derive_seed(seed_, {kFixedLabel, id, static_cast<std::uint64_t>(k)}));
                        auto [seed, complexity] = relations::draw_shape(fixed);
                        relations::set_shape(o, seed, complexity);
                    }
                    break;
                }
                case RelationKind::Size: o.size = size.lo + unit(id, k, 0, rng) * (size.hi - size.lo); break;
                case RelationKind::Color: {
                    double h = ranges.hue.lo + unit(id, k, 0, rng) * (ranges.hue.hi - ranges.hue.lo);
                    h = std::fmod(h, 1.0);
                    o.color = h < 0 ? h + 1.0 : h;
                    break;
                }
                case RelationKind::Rotation: {
                    double a = ranges.rotation.lo + unit(id, k, 0, rng) * (ranges.rotation.hi - ranges.rotation.lo);
                    a = std::fmod(a, kTwoPi);
                    o.rotation = a < 0 ? a + kTwoPi : a;
                    break;
                }
                case RelationKind::Flip:
                    o.flip = prog_.free_tag(k) == ParamTag::RandomPerPanel ? flip_pattern(id)[panel]
                                                                           : fixed_unit(seed_, id, k, 0) < 0.5;
                    break;
                default: break;
            }
            ctx.assigned.insert({id, k});
        }
    }

    void place_free(SceneGraph& g, NodeId id, Rng& rng, SamplingContext& ctx) {
        if (ctx.placed.contains(id)) return;
        if (is_governed(spec_, g, id, RelationKind::Position) ||
            prog_.free_tag(RelationKind::Position) == ParamTag::RandomPerPanel) {
            relations::place_object(g, id, rng, ctx);
            return;
        }
        SceneObject& o = g.objects.at(id);
        const double r = 0.5 * o.size + kCanvasMargin + 1e-9;
        o.position = {r + fixed_unit(seed_, id, RelationKind::Position, 0) * (1.0 - 2 * r),
                      r + fixed_unit(seed_, id, RelationKind::Position, 1) * (1.0 - 2 * r)};
        if (!relations::within_canvas(o)) throw SamplingExhausted("fixed position leaves the canvas");
        for (NodeId other : ctx.placed)
            if (!relations::pair_ok(g, id, other)) throw SamplingExhausted("fixed position collides");
        ctx.placed.insert(id);
        ctx.assigned.insert({id, RelationKind::Position});
    }

    SceneGraph solve(int panel, Rng& rng) {
        SceneGraph g = skeleton_;
        SamplingContext ctx;
        ctx.default_size = prog_.ranges().size;
        ctx.hue = prog_.ranges().hue;
        ctx.rotation = prog_.ranges().rotation;
        for (const PlanStep& step : prog_.plan()) {
            switch (step.kind) {
                case StepKind::Count:
                    relations::sample_satisfying(spec_.reference_relations[step.relation], g, rng, ctx);
                    break;
                case StepKind::Attributes:
                    for (auto& [id, o] : g.objects) {
                        if (depth_of(id) != step.depth) continue;
                        ctx.size_range[id] = size_range(g, id);
                        assign_free(g, id, panel, rng, ctx);
                    }
                    break;
                case StepKind::Relation:
                    relations::sample_satisfying(spec_.reference_relations[step.relation], g, rng, ctx);
                    break;
                case StepKind::Place: place_free(g, step.node, rng, ctx); break;
            }
        }
        std::vector<NodeId> rest;
        for (const auto& [id, o] : g.objects)
            if (!ctx.placed.contains(id)) rest.push_back(id);
        for (NodeId id : rest) place_free(g, id, rng, ctx);
        return g;
    }

    const GenerationProgram& prog_;
    const rules::RuleSpec& spec_;
    std::uint64_t seed_;
    SceneGraph skeleton_;
    std::set<NodeId> containers_;
    std::map<NodeId, NodeId> container_of_;
    std::map<NodeId, std::array<bool, 4>> flips_;
};

std::string failing_relation(const SceneGraph& g, const rules::RuleSpec& spec) {
    for (const auto& r : spec.reference_relations)
        if (!relations::check(r, g)) return std::string(to_string(r.kind));
    return "none";
}

}  // namespace

GenerationFailed::GenerationFailed(std::string rule_id, std::map<std::string, int> diagnostics,
                                   std::optional<std::uint64_t> index)
    : std::runtime_error([&] {
          std::string s = "generation failed for rule '" + rule_id + "'";
          if (index) s += " at sample " + std::to_string(*index);
          std::string top;
          int best = -1;
          for (const auto& [k, v] : diagnostics)
              if (v > best) {
                  best = v;
                  top = k;
              }
          if (best > 0) s += "; most frequent failure: " + top + " (" + std::to_string(best) + "x)";
          return s;
      }()),
      rule_id_(std::move(rule_id)),
      diagnostics_(std::move(diagnostics)),
      index_(index) {}

std::string GenerationFailed::dominant() const {
    std::string top;
    int best = -1;
    for (const auto& [k, v] : diagnostics_)
        if (v > best) {
            best = v;
            top = k;
        }
    return top;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Generalization: return "generalization";
    }
    return "train";
}

std::optional<Split> parse_split(std::string_view name) {
    for (Split s : kAllSplits)
        if (to_string(s) == name) return s;
    return std::nullopt;
}

std::uint64_t split_tag(Split s) { return static_cast<std::uint64_t>(s); }

std::uint64_t sample_seed(std::uint64_t master_seed, std::string_view rule_id, Split split, std::uint64_t index) {
    return derive_seed(master_seed, {fnv1a(rule_id), split_tag(split), index});
}

bool satisfies_reference(const SceneGraph& g, const rules::RuleSpec& spec) {
    for (const auto& r : spec.reference_relations)
        if (!relations::check(r, g)) return false;
    return true;
}

bool oracle_ok(const std::array<SceneGraph, 4>& panels, int outlier, const rules::RuleSpec& spec) {
    if (outlier < 0 || outlier > 3) return false;
    for (int p = 0; p < 4; ++p) {
        if (!validate(panels[p]).empty()) return false;
        if (satisfies_reference(panels[p], spec) != (p != outlier)) return false;
    }
    return true;
}

bool decoy_check(const std::array<SceneGraph, 4>& panels, const GenerationProgram& program) {
    const auto& spec = program.rule();
    std::vector<NodeId> common;
    for (const auto& [id, o] : panels[0].objects)
        if (std::all_of(panels.begin() + 1, panels.end(), [&](const SceneGraph& g) { return g.objects.contains(id); }))
            common.push_back(id);

    for (RelationKind k : {RelationKind::Shape, RelationKind::Position, RelationKind::Size, RelationKind::Color,
                           RelationKind::Rotation, RelationKind::Flip}) {
        if (program.free_tag(k) != ParamTag::RandomPerPanel) continue;
        for (NodeId id : common) {
            if (std::any_of(panels.begin(), panels.end(),
                            [&](const SceneGraph& g) { return is_target_of(spec, g, id, k); }))
                continue;
            auto values = [&](auto get) {
                std::array<double, 4> v{};
                for (std::size_t p = 0; p < 4; ++p) v[p] = get(panels[p].objects.at(id));
                return v;
            };
            bool bad = false;
            switch (k) {
                case RelationKind::Shape: {
                    std::array<std::pair<std::uint64_t, int>, 4> v;
                    for (std::size_t p = 0; p < 4; ++p) {
                        const auto& o = panels[p].objects.at(id);
                        v[p] = {o.shape_seed, o.complexity};
                    }
                    bad = three_vs_one_discrete(v);
                    break;
                }
                case RelationKind::Flip: {
                    std::array<bool, 4> v{};
                    for (std::size_t p = 0; p < 4; ++p) v[p] = panels[p].objects.at(id).flip;
                    bad = three_vs_one_discrete(v);
                    break;
                }
                case RelationKind::Position:
                    bad = three_vs_one(values([](const SceneObject& o) { return o.position.x; }),
                                       relations::kPositionTolerance, 0.0) ||
                          three_vs_one(values([](const SceneObject& o) { return o.position.y; }),
                                       relations::kPositionTolerance, 0.0);
                    break;
                case RelationKind::Size:
                    bad = three_vs_one(values([](const SceneObject& o) { return o.size; }), relations::kSizeTolerance,
                                       0.0);
                    break;
                case RelationKind::Color:
                    bad = three_vs_one(values([](const SceneObject& o) { return o.color; }), relations::kHueTolerance,
                                       1.0);
                    break;
                case RelationKind::Rotation:
                    bad = three_vs_one(values([](const SceneObject& o) { return o.rotation; }),
                                       relations::kRotationTolerance, kTwoPi);
                    break;
                default: break;
            }
            if (bad) return false;
        }
    }
    const bool counts_target =
        std::any_of(spec.reference_relations.begin(), spec.reference_relations.end(),
                    [](const ElementaryRelation& r) { return r.kind == RelationKind::Count; });
    if (!counts_target) {
        std::array<std::size_t, 4> n{};
        for (std::size_t p = 0; p < 4; ++p) n[p] = panels[p].objects.size();
        if (three_vs_one_discrete(n)) return false;
    }
    return true;
}

ProblemSample generate_problem(const GenerationProgram& program, std::uint64_t seed) {
    const auto& spec = program.rule();
    ProblemSample s;
    s.rule_id = spec.id;
    s.sample_seed = seed;
    s.difficulty = rules::difficulty(program);
    s.outlier_index = static_cast<int>(Rng(derive_seed(seed, {kOutlierLabel})).uniform_int(0, 3));

    std::map<std::string, int> diagnostics;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        const std::uint64_t attempt_seed = derive_seed(seed, {kAttemptLabel, static_cast<std::uint64_t>(attempt)});
        try {
            ProblemBuilder builder(program, attempt_seed);
            for (int p = 0; p < 4; ++p)
                s.panels[p] = p == s.outlier_index ? builder.solve_outlier(p) : builder.solve(p);
        } catch (const SamplingExhausted& e) {
            ++diagnostics[std::string("sampling: ") + e.what()];
            continue;
        }
        bool ok = true;
        for (int p = 0; p < 4 && ok; ++p) {
            if (!validate(s.panels[p]).empty()) {
                ++diagnostics["invalid scene: " + validate(s.panels[p]).front()];
                ok = false;
            } else if (!relations::layout_ok(s.panels[p])) {
                ++diagnostics["layout"];
                ok = false;
            } else if (p != s.outlier_index && !satisfies_reference(s.panels[p], spec)) {
                ++diagnostics["reference panel breaks " + failing_relation(s.panels[p], spec)];
                ok = false;
            } else if (p == s.outlier_index && satisfies_reference(s.panels[p], spec)) {
                ++diagnostics["outlier satisfies the reference rule"];
                ok = false;
            }
        }
        if (!ok) continue;
        if (!decoy_check(s.panels, program)) {
            ++diagnostics["decoy pattern"];
            continue;
        }
        s.attempts = attempt + 1;
        return s;
    }
    throw GenerationFailed(spec.id, std::move(diagnostics));
}

GenerationProgram program_for(const GenerationProgram& program, Split split) {
    return split == Split::Generalization ? rules::generalization_variant(program) : program;
}

void generate_split(const SplitRequest& req, const GenerationProgram& program, int workers,
                    const std::function<void(ProblemSample&&)>& sink) {
    if (req.count == 0) throw std::invalid_argument("split request count must be positive");
    const GenerationProgram prog = program_for(program, req.split);
    auto make = [&](std::uint64_t i) {
        try {
            ProblemSample s = generate_problem(prog, sample_seed(req.master_seed, req.rule_id, req.split, i));
            s.rule_id = req.rule_id;
            s.split = req.split;
            s.master_seed = req.master_seed;
            s.sample_index = i;
            return s;
        } catch (const GenerationFailed& e) {
            throw e.with_index(i);
        }
    };
    ordered_parallel_for(req.count, workers, make, sink);
}

std::vector<ProblemSample> generate_split(const SplitRequest& req, const GenerationProgram& program, int workers) {
    std::vector<ProblemSample> out;
    out.reserve(req.count);
    generate_split(req, program, workers, [&](ProblemSample&& s) { out.push_back(std::move(s)); });
    return out;
}

}  // namespace cvr::generator
