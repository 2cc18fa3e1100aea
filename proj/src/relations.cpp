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

#include "cvr/relations.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cvr::relations {

namespace {

using geometry::Contour;

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kClearance = 3.0 * geometry::kContactTolerance;
constexpr std::size_t kMaxObjects = 8;
constexpr NodeId kMaxObjectId = 999;

double get_value(const SceneObject& o, RelationKind k) {
    switch (k) {
        case RelationKind::Position: return o.position.x;
        case RelationKind::Size: return o.size;
        case RelationKind::Color: return o.color;
        case RelationKind::Rotation: return o.rotation;
        default: throw std::logic_error("not a continuous attribute");
    }
}

void set_value(SceneObject& o, RelationKind k, double v) {
    switch (k) {
        case RelationKind::Position: o.position.x = v; break;
        case RelationKind::Size: o.size = v; break;
        case RelationKind::Color: o.color = v; break;
        case RelationKind::Rotation: o.rotation = v; break;
        default: throw std::logic_error("not a continuous attribute");
    }
}

// Signed difference folded into (-p/2, p/2] for circular attributes.
double wrap(double d, double p) {
    if (p == 0.0) return d;
    d = std::fmod(d, p);
    if (d > p / 2) d -= p;
    if (d <= -p / 2) d += p;
    return d;
}

double normalize_periodic(double v, double p) {
    if (p == 0.0) return v;
    v = std::fmod(v, p);
    if (v < 0) v += p;
    if (v >= p) v = 0.0;
    return v;
}

bool same_shape(const SceneObject& a, const SceneObject& b) {
    return a.shape_seed == b.shape_seed && a.complexity == b.complexity;
}

double shape_deviation(const SceneGraph& g, const std::vector<NodeId>& objs) {
    for (std::size_t i = 1; i < objs.size(); ++i)
        if (!same_shape(g.objects.at(objs[0]), g.objects.at(objs[i]))) return 1.0;
    return 0.0;
}

double continuous_deviation(const ElementaryRelation& r, const std::vector<double>& v) {
    const double p = period(r.kind);
    double dev = 0.0;
    switch (r.comparator.type) {
        case Comparator::Type::Equal:
            for (std::size_t i = 0; i < v.size(); ++i)
                for (std::size_t j = i + 1; j < v.size(); ++j) dev = std::max(dev, std::abs(wrap(v[i] - v[j], p)));
            return dev;
        case Comparator::Type::Offset:
            for (std::size_t i = 0; i + 1 < v.size(); ++i)
                dev = std::max(dev, std::abs(wrap(v[i] - v[i + 1] - r.comparator.offset, p)));
            return dev;
        case Comparator::Type::Greater: {
            double min_gap = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i + 1 < v.size(); ++i) min_gap = std::min(min_gap, v[i] - v[i + 1]);
            return std::max(0.0, 2.0 * tolerance(r.kind) - min_gap);
        }
    }
    return dev;
}

int count_target(const ElementaryRelation& r, const SceneGraph& g) {
    if (auto it = g.relations.find(r.node); it != g.relations.end()) {
        if (auto a = it->second.attributes.find("count"); a != it->second.attributes.end())
            return static_cast<int>(std::lround(a->second));
    }
    if (r.comparator.type == Comparator::Type::Offset) return static_cast<int>(std::lround(r.comparator.offset));
    throw SceneError(SceneError::Code::UnknownNode, "count relation has no target node " + std::to_string(r.node));
}

double count_deviation(const ElementaryRelation& r, const SceneGraph& g) {
    std::vector<double> c;
    for (NodeId op : r.operands) c.push_back(static_cast<double>(cardinality(g, op)));
    if (c.size() == 1) return std::abs(c[0] - count_target(r, g));
    double dev = 0.0;
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
        switch (r.comparator.type) {
            case Comparator::Type::Equal: dev = std::max(dev, std::abs(c[i] - c[i + 1])); break;
            case Comparator::Type::Greater: dev = std::max(dev, std::max(0.0, 1.0 - (c[i] - c[i + 1]))); break;
            case Comparator::Type::Offset:
                dev = std::max(dev, std::abs(c[i] - c[i + 1] - r.comparator.offset));
                break;
        }
    }
    return dev;
}

bool has_pair_relation(const SceneGraph& g, RelationKind k, NodeId a, NodeId b) {
    for (const auto& [id, node] : g.relations)
        if (node.kind == k && node.members.size() == 2 && node.members[0] == a && node.members[1] == b) return true;
    return false;
}

bool apart(const Contour& a, const Contour& b) {
    return !geometry::closer_than(a, b, kClearance) && !geometry::contains(a, b) && !geometry::contains(b, a);
}

bool nested_with_clearance(const Contour& outer, const Contour& inner) {
    return geometry::contains(outer, inner) && !geometry::closer_than(outer, inner, kClearance);
}

bool object_ok(const SceneGraph& g, NodeId id) {
    if (!within_canvas(g.objects.at(id))) return false;
    for (const auto& [other, o] : g.objects)
        if (other != id && !pair_ok(g, id, other)) return false;
    return true;
}

bool placed_ok(const SceneGraph& g, NodeId id, const SamplingContext& ctx, NodeId exempt = kRootId) {
    if (!within_canvas(g.objects.at(id))) return false;
    for (NodeId other : ctx.placed)
        if (other != id && other != exempt && !pair_ok(g, id, other)) return false;
    return true;
}

Range value_range(const SceneGraph& g, NodeId id, RelationKind k, const SamplingContext& ctx) {
    switch (k) {
        case RelationKind::Size: return ctx.size_range_of(id);
        case RelationKind::Color: return ctx.hue;
        case RelationKind::Rotation: return ctx.rotation;
        case RelationKind::Position: {
            const double r = 0.5 * g.objects.at(id).size + kCanvasMargin + 1e-9;
            return {r, 1.0 - r};
        }
        default: throw std::logic_error("not a continuous attribute");
    }
}

bool is_assigned(const SamplingContext& ctx, NodeId id, RelationKind k) {
    if (k == RelationKind::Position) return ctx.fixed_x.contains(id) || ctx.placed.contains(id);
    return ctx.is_assigned(id, k);
}

void mark_assigned(SamplingContext& ctx, SceneGraph& g, NodeId id, RelationKind k) {
    if (k == RelationKind::Position) ctx.fixed_x[id] = g.objects.at(id).position.x;
    ctx.assigned.insert({id, k});
}

void sample_shared_shape(const std::vector<NodeId>& objs, SceneGraph& g, Rng& rng, SamplingContext& ctx) {
    const NodeId* source = nullptr;
    for (const NodeId& id : objs) {
        if (!ctx.is_assigned(id, RelationKind::Shape)) continue;
        if (source && !same_shape(g.objects.at(*source), g.objects.at(id)))
            throw SamplingExhausted("conflicting pre-assigned shapes");
        if (!source) source = &id;
    }
    SceneObject proto;
    if (source) {
        proto = g.objects.at(*source);
    } else {
        auto [seed, complexity] = draw_shape(rng);
        set_shape(proto, seed, complexity);
    }
    for (NodeId id : objs) {
        auto& o = g.objects.at(id);
        o.shape_seed = proto.shape_seed;
        o.complexity = proto.complexity;
        o.base_contour = proto.base_contour;
        ctx.assigned.insert({id, RelationKind::Shape});
    }
}

void sample_flip(const ElementaryRelation& r, const std::vector<NodeId>& objs, SceneGraph& g, Rng& rng,
                 SamplingContext& ctx) {
    const bool alternate =
        r.comparator.type == Comparator::Type::Offset && (std::llabs(std::llround(r.comparator.offset)) & 1) == 1;
    std::optional<bool> base;
    for (std::size_t j = 0; j < objs.size(); ++j) {
        if (!ctx.is_assigned(objs[j], RelationKind::Flip)) continue;
        const bool b = g.objects.at(objs[j]).flip ^ (alternate && (j & 1));
        if (base && *base != b) throw SamplingExhausted("conflicting pre-assigned flips");
        base = b;
    }
    if (!base) base = rng.bernoulli();
    for (std::size_t j = 0; j < objs.size(); ++j) {
        g.objects.at(objs[j]).flip = *base ^ (alternate && (j & 1));
        ctx.assigned.insert({objs[j], RelationKind::Flip});
    }
}

void sample_continuous(const ElementaryRelation& r, const std::vector<NodeId>& objs, SceneGraph& g, Rng& rng,
                       SamplingContext& ctx) {
    const RelationKind k = r.kind;
    const double p = period(k);
    const std::size_t n = objs.size();
    std::vector<Range> ranges;
    std::vector<bool> fixed(n);
    std::optional<std::size_t> anchor;
    for (std::size_t j = 0; j < n; ++j) {
        ranges.push_back(value_range(g, objs[j], k, ctx));
        fixed[j] = is_assigned(ctx, objs[j], k);
        if (fixed[j] && !anchor) anchor = j;
    }
    auto in_range = [&](double v, std::size_t j) { return p > 0 || (v >= ranges[j].lo && v <= ranges[j].hi); };

    std::vector<double> v(n);
    for (int attempt = 0; attempt < ctx.max_attempts; ++attempt) {
        bool ok = true;
        switch (r.comparator.type) {
            case Comparator::Type::Equal:
            case Comparator::Type::Offset: {
                const double d = r.comparator.type == Comparator::Type::Offset ? r.comparator.offset : 0.0;
                // value_j = base + (n - 1 - j) * d
                double base;
                if (anchor) {
                    base = get_value(g.objects.at(objs[*anchor]), k) - (n - 1 - *anchor) * d;
                } else {
                    double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
                    for (std::size_t j = 0; j < n; ++j) {
                        lo = std::max(lo, ranges[j].lo - (n - 1 - j) * d);
                        hi = std::min(hi, ranges[j].hi - (n - 1 - j) * d);
                    }
                    if (p > 0) {
                        lo = ranges[0].lo;
                        hi = ranges[0].hi;
                    }
                    if (lo > hi) throw SamplingExhausted("empty admissible range for " + std::string(to_string(k)));
                    base = rng.uniform(lo, hi);
                }
                for (std::size_t j = 0; j < n; ++j) {
                    v[j] = fixed[j] ? get_value(g.objects.at(objs[j]), k) : normalize_periodic(base + (n - 1 - j) * d, p);
                    if (!fixed[j] && !in_range(v[j], j)) ok = false;
                }
                break;
            }
            case Comparator::Type::Greater: {
                const double min_gap = 3.0 * tolerance(k);
                for (std::size_t j = 0; j < n; ++j)
                    v[j] = fixed[j] ? get_value(g.objects.at(objs[j]), k) : rng.uniform(ranges[j].lo, ranges[j].hi);
                if (std::none_of(fixed.begin(), fixed.end(), [](bool f) { return f; })) {
                    std::sort(v.begin(), v.end(), std::greater<>());
                }
                for (std::size_t j = 0; j + 1 < n; ++j)
                    if (v[j] - v[j + 1] < min_gap) ok = false;
                break;
            }
        }
        if (ok && continuous_deviation(r, v) <= tolerance(k)) {
            for (std::size_t j = 0; j < n; ++j) {
                if (fixed[j]) continue;
                set_value(g.objects.at(objs[j]), k, v[j]);
                mark_assigned(ctx, g, objs[j], k);
            }
            return;
        }
        if (anchor && r.comparator.type != Comparator::Type::Greater) break;  // deterministic given the anchor
    }
    throw SamplingExhausted("could not satisfy " + std::string(to_string(k)) + " relation");
}

NodeId next_object_id(const SceneGraph& g) {
    NodeId id = 1;
    if (!g.objects.empty()) id = g.objects.rbegin()->first + 1;
    if (id > kMaxObjectId) throw SamplingExhausted("object id space exhausted");
    return id;
}

bool referenced_elsewhere(const SceneGraph& g, NodeId obj, NodeId except) {
    for (const auto& [rid, node] : g.relations) {
        if (rid == except) continue;
        if (std::find(node.members.begin(), node.members.end(), obj) != node.members.end()) return true;
    }
    return false;
}

// Copy of a member of `group` appended as a new member; position left for the caller.
NodeId add_member_copy(SceneGraph& g, NodeId group, Rng& rng, bool fresh_shape) {
    if (g.objects.size() >= kMaxObjects) throw SamplingExhausted("object limit reached");
    auto pool = member_objects(g, group);
    if (pool.empty()) pool = member_objects(g, kRootId);
    if (pool.empty()) throw SamplingExhausted("no object to copy");
    SceneObject copy = g.objects.at(pool[static_cast<std::size_t>(rng.uniform_int(0, pool.size() - 1))]);
    if (fresh_shape) {
        auto [seed, complexity] = draw_shape(rng);
        set_shape(copy, seed, complexity);
    }
    const NodeId id = next_object_id(g);
    g.add_object(id, std::move(copy));
    if (group != kRootId) g.relations.at(group).members.push_back(id);
    return id;
}

std::vector<NodeId> removable_members(const SceneGraph& g, NodeId group) {
    std::vector<NodeId> out;
    if (group == kRootId) {
        for (const auto& [id, o] : g.objects)
            if (!referenced_elsewhere(g, id, kRootId)) out.push_back(id);
    } else {
        for (NodeId m : g.relations.at(group).members)
            if (g.objects.contains(m) && !referenced_elsewhere(g, m, group)) out.push_back(m);
    }
    return out;
}

void sample_count(const ElementaryRelation& r, SceneGraph& g, Rng& rng, SamplingContext& ctx) {
    std::vector<int> target(r.operands.size());
    auto card = [&](std::size_t i) { return static_cast<int>(cardinality(g, r.operands[i])); };
    if (r.operands.size() == 1) {
        auto it = g.relations.find(r.node);
        if (it != g.relations.end() && it->second.attributes.contains("count"))
            target[0] = count_target(r, g);
        else if (r.comparator.type == Comparator::Type::Offset)
            target[0] = static_cast<int>(std::lround(r.comparator.offset));
        else
            target[0] = card(0);
    } else {
        const std::size_t n = r.operands.size();
        target[n - 1] = card(n - 1);
        for (std::size_t i = n - 1; i-- > 0;) {
            switch (r.comparator.type) {
                case Comparator::Type::Equal: target[i] = target[i + 1]; break;
                case Comparator::Type::Greater: target[i] = std::max(card(i), target[i + 1] + 1); break;
                case Comparator::Type::Offset:
                    target[i] = target[i + 1] + static_cast<int>(std::lround(r.comparator.offset));
                    break;
            }
        }
        if (r.comparator.type == Comparator::Type::Equal) {
            int m = 0;
            for (std::size_t i = 0; i < n; ++i) m = std::max(m, card(i));
            std::fill(target.begin(), target.end(), m);
        }
    }
    for (std::size_t i = 0; i < r.operands.size(); ++i) {
        const NodeId op = r.operands[i];
        if (target[i] < 1) throw SamplingExhausted("count target below one");
        while (card(i) < target[i]) {
            const NodeId id = add_member_copy(g, op, rng, op == kRootId);
            ctx.assigned.erase({id, RelationKind::Position});
        }
        while (card(i) > target[i]) {
            auto cand = removable_members(g, op);
            if (cand.empty()) throw SamplingExhausted("no removable member for count");
            const NodeId victim = cand.back();
            g.remove_object(victim);
            ctx.placed.erase(victim);
        }
    }
    if (auto it = g.relations.find(r.node); it != g.relations.end() && r.operands.size() == 1)
        it->second.attributes["count"] = target[0];
}

void ensure_placed(SceneGraph& g, NodeId id, Rng& rng, SamplingContext& ctx) {
    if (!ctx.placed.contains(id)) place_object(g, id, rng, ctx);
}

void sample_inside(const ElementaryRelation& r, SceneGraph& g, Rng& rng, SamplingContext& ctx) {
    const NodeId a = r.operands.at(0), b = r.operands.at(1);
    ensure_placed(g, a, rng, ctx);
    const Contour outer = realized_contour(g.objects.at(a));
    const auto box = geometry::bounding_box(outer.vertices);
    auto& inner = g.objects.at(b);
    const auto fx = ctx.fixed_x.find(b);
    for (int attempt = 0; attempt < ctx.max_attempts; ++attempt) {
        inner.position = {fx != ctx.fixed_x.end() ? fx->second : rng.uniform(box.min_x, box.max_x),
                          rng.uniform(box.min_y, box.max_y)};
        if (!within_canvas(inner)) continue;
        if (!nested_with_clearance(outer, realized_contour(inner))) continue;
        if (!placed_ok(g, b, ctx, a)) continue;
        ctx.placed.insert(b);
        mark_assigned(ctx, g, b, RelationKind::Position);
        return;
    }
    throw SamplingExhausted("could not nest object " + std::to_string(b) + " inside " + std::to_string(a));
}

void sample_contact(const ElementaryRelation& r, SceneGraph& g, Rng& rng, SamplingContext& ctx) {
    const NodeId a = r.operands.at(0), b = r.operands.at(1);
    ensure_placed(g, a, rng, ctx);
    const SceneObject& anchor = g.objects.at(a);
    const Contour ca = realized_contour(anchor);
    auto& obj = g.objects.at(b);
    const double reach = 0.5 * anchor.size + 0.5 * obj.size + 0.02;
    for (int attempt = 0; attempt < ctx.max_attempts; ++attempt) {
        const double theta = rng.uniform(0.0, kTwoPi);
        const double dx = std::cos(theta), dy = std::sin(theta);
        auto at = [&](double t) {
            obj.position = {anchor.position.x + t * dx, anchor.position.y + t * dy};
            const Contour cb = realized_contour(obj);
            return geometry::boundaries_intersect(ca, cb) || geometry::contains(ca, cb) || geometry::contains(cb, ca);
        };
        double lo = 0.0, hi = reach;
        if (!at(lo) || at(hi)) continue;
        for (int it = 0; it < 40; ++it) {
            const double mid = 0.5 * (lo + hi);
            (at(mid) ? lo : hi) = mid;
        }
        at(hi);
        if (!within_canvas(obj)) continue;
        if (!geometry::in_contact(ca, realized_contour(obj))) continue;
        if (!placed_ok(g, b, ctx, a)) continue;
        ctx.placed.insert(b);
        mark_assigned(ctx, g, b, RelationKind::Position);
        return;
    }
    throw SamplingExhausted("could not bring object " + std::to_string(b) + " into contact with " + std::to_string(a));
}

// Moves object `b` to a free spot; every other object counts as placed.
bool relocate(SceneGraph& g, NodeId b, Rng& rng, int attempts) {
    SamplingContext ctx;
    ctx.max_attempts = attempts;
    for (const auto& [id, o] : g.objects)
        if (id != b) ctx.placed.insert(id);
    try {
        place_object(g, b, rng, ctx);
        return true;
    } catch (const SamplingExhausted&) {
        return false;
    }
}

}  // namespace

double tolerance(RelationKind kind) {
    switch (kind) {
        case RelationKind::Size: return kSizeTolerance;
        case RelationKind::Position: return kPositionTolerance;
        case RelationKind::Rotation: return kRotationTolerance;
        case RelationKind::Color: return kHueTolerance;
        default: return 0.0;
    }
}

double period(RelationKind kind) {
    if (kind == RelationKind::Color) return 1.0;
    if (kind == RelationKind::Rotation) return kTwoPi;
    return 0.0;
}

bool is_continuous(RelationKind kind) {
    return kind == RelationKind::Position || kind == RelationKind::Size || kind == RelationKind::Color ||
           kind == RelationKind::Rotation;
}

std::pair<std::uint64_t, int> draw_shape(Rng& rng) {
    const std::uint64_t seed = rng.next_u64();
    const int complexity = static_cast<int>(rng.uniform_int(4, 10));
    return {seed, complexity};
}

void set_shape(SceneObject& o, std::uint64_t seed, int complexity) {
    o.shape_seed = seed;
    o.complexity = complexity;
    o.base_contour = geometry::gen_contour(seed, complexity);
}

std::vector<NodeId> operand_objects(const ElementaryRelation& r, const SceneGraph& g) {
    std::vector<NodeId> out;
    for (NodeId op : r.operands) {
        if (g.objects.contains(op)) {
            if (std::find(out.begin(), out.end(), op) == out.end()) out.push_back(op);
            continue;
        }
        for (NodeId m : member_objects(g, op))
            if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    return out;
}

double deviation(const ElementaryRelation& r, const SceneGraph& g) {
    for (NodeId op : r.operands)
        if (!g.has_node(op)) throw SceneError(SceneError::Code::UnknownNode, "unknown operand " + std::to_string(op));
    switch (r.kind) {
        case RelationKind::Count: return count_deviation(r, g);
        case RelationKind::Inside: {
            const auto& a = g.objects.at(r.operands.at(0));
            const auto& b = g.objects.at(r.operands.at(1));
            return geometry::contains(realized_contour(a), realized_contour(b)) ? 0.0 : 1.0;
        }
        case RelationKind::Contact: {
            const auto& a = g.objects.at(r.operands.at(0));
            const auto& b = g.objects.at(r.operands.at(1));
            return geometry::in_contact(realized_contour(a), realized_contour(b)) ? 0.0 : 1.0;
        }
        default: break;
    }
    const auto objs = operand_objects(r, g);
    if (r.kind == RelationKind::Shape) return shape_deviation(g, objs);
    if (r.kind == RelationKind::Flip) {
        if (shape_deviation(g, objs) > 0) return 1.0;
        const bool alternate = r.comparator.type == Comparator::Type::Offset &&
                               (std::llabs(std::llround(r.comparator.offset)) & 1) == 1;
        for (std::size_t i = 0; i + 1 < objs.size(); ++i)
            if ((g.objects.at(objs[i]).flip != g.objects.at(objs[i + 1]).flip) != alternate) return 1.0;
        return 0.0;
    }
    if (r.kind == RelationKind::Rotation && shape_deviation(g, objs) > 0)
        return std::numeric_limits<double>::infinity();
    std::vector<double> v;
    for (NodeId id : objs) v.push_back(get_value(g.objects.at(id), r.kind));
    return continuous_deviation(r, v);
}

bool check(const ElementaryRelation& r, const SceneGraph& g) { return deviation(r, g) <= tolerance(r.kind); }

void sample_satisfying(const ElementaryRelation& r, SceneGraph& g, Rng& rng, SamplingContext& ctx) {
    switch (r.kind) {
        case RelationKind::Count: sample_count(r, g, rng, ctx); return;
        case RelationKind::Inside: sample_inside(r, g, rng, ctx); return;
        case RelationKind::Contact: sample_contact(r, g, rng, ctx); return;
        default: break;
    }
    const auto objs = operand_objects(r, g);
    if (objs.empty()) throw SamplingExhausted("relation has no member objects");
    switch (r.kind) {
        case RelationKind::Shape: sample_shared_shape(objs, g, rng, ctx); return;
        case RelationKind::Flip:
            sample_shared_shape(objs, g, rng, ctx);
            sample_flip(r, objs, g, rng, ctx);
            return;
        case RelationKind::Rotation:
            sample_shared_shape(objs, g, rng, ctx);
            sample_continuous(r, objs, g, rng, ctx);
            return;
        default: sample_continuous(r, objs, g, rng, ctx); return;
    }
}

SceneGraph perturb_violating(const ElementaryRelation& r, const SceneGraph& g, Rng& rng, int max_attempts) {
    if (!check(r, g)) throw std::invalid_argument("perturb_violating requires a satisfied relation");
    const double tol = tolerance(r.kind);
    const auto objs = (r.kind == RelationKind::Count) ? std::vector<NodeId>{} : operand_objects(r, g);
    auto pick = [&](const std::vector<NodeId>& v) { return v[static_cast<std::size_t>(rng.uniform_int(0, v.size() - 1))]; };

    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        SceneGraph out = g;
        std::vector<NodeId> touched;
        switch (r.kind) {
            case RelationKind::Shape: {
                const NodeId m = pick(objs);
                auto [seed, complexity] = draw_shape(rng);
                set_shape(out.objects.at(m), seed, complexity);
                touched.push_back(m);
                break;
            }
            case RelationKind::Flip: {
                const NodeId m = pick(objs);
                out.objects.at(m).flip = !out.objects.at(m).flip;
                touched.push_back(m);
                break;
            }
            case RelationKind::Position:
            case RelationKind::Size:
            case RelationKind::Color:
            case RelationKind::Rotation: {
                const double p = period(r.kind);
                const double max_shift = r.kind == RelationKind::Size       ? 0.15
                                         : r.kind == RelationKind::Position ? 0.25
                                         : r.kind == RelationKind::Color    ? 0.5
                                                                            : std::numbers::pi;
                NodeId m;
                double nv;
                if (r.comparator.type == Comparator::Type::Greater) {
                    const std::size_t link = static_cast<std::size_t>(rng.uniform_int(0, objs.size() - 2));
                    const double reversed_gap = rng.uniform(3.0 * tol, 6.0 * tol);
                    if (rng.bernoulli()) {
                        m = objs[link];
                        nv = get_value(out.objects.at(objs[link + 1]), r.kind) - reversed_gap;
                    } else {
                        m = objs[link + 1];
                        nv = get_value(out.objects.at(objs[link]), r.kind) + reversed_gap;
                    }
                } else {
                    m = pick(objs);
                    const double shift = rng.uniform(3.0 * tol, max_shift) * (rng.bernoulli() ? 1.0 : -1.0);
                    nv = normalize_periodic(get_value(out.objects.at(m), r.kind) + shift, p);
                }
                if (r.kind == RelationKind::Size && (nv < kMinSize || nv > kMaxSize)) continue;
                set_value(out.objects.at(m), r.kind, nv);
                if (r.kind != RelationKind::Color) touched.push_back(m);
                break;
            }
            case RelationKind::Count: {
                const NodeId op = r.operands[static_cast<std::size_t>(rng.uniform_int(0, r.operands.size() - 1))];
                const bool add_first = rng.bernoulli();
                bool done = false;
                for (int pass = 0; pass < 2 && !done; ++pass) {
                    const bool add = (pass == 0) == add_first;
                    if (add) {
                        if (out.objects.size() >= kMaxObjects) continue;
                        const NodeId id = add_member_copy(out, op, rng, op == kRootId);
                        if (!relocate(out, id, rng, 200)) {
                            out = g;
                            continue;
                        }
                        done = true;
                    } else {
                        if (cardinality(out, op) <= 1) continue;
                        auto cand = removable_members(out, op);
                        if (cand.empty()) continue;
                        out.remove_object(pick(cand));
                        done = true;
                    }
                }
                if (!done) continue;
                break;
            }
            case RelationKind::Inside:
            case RelationKind::Contact: {
                const NodeId b = r.operands.at(1);
                if (!relocate(out, b, rng, 200)) continue;
                break;
            }
        }
        bool ok = true;
        for (NodeId id : touched)
            if (!object_ok(out, id)) ok = false;
        if (!ok || check(r, out)) continue;
        if (is_continuous(r.kind) && deviation(r, out) < 3.0 * tol) continue;
        return out;
    }
    throw SamplingExhausted("could not violate " + std::string(to_string(r.kind)) + " relation");
}

bool within_canvas(const SceneObject& o) {
    const auto box = geometry::bounding_box(realized_contour(o).vertices);
    return box.min_x >= kCanvasMargin && box.min_y >= kCanvasMargin && box.max_x <= 1.0 - kCanvasMargin &&
           box.max_y <= 1.0 - kCanvasMargin;
}

bool pair_ok(const SceneGraph& g, NodeId a, NodeId b) {
    const Contour ca = realized_contour(g.objects.at(a));
    const Contour cb = realized_contour(g.objects.at(b));
    if (apart(ca, cb)) return true;
    if (has_pair_relation(g, RelationKind::Inside, a, b)) return nested_with_clearance(ca, cb);
    if (has_pair_relation(g, RelationKind::Inside, b, a)) return nested_with_clearance(cb, ca);
    if (has_pair_relation(g, RelationKind::Contact, a, b) || has_pair_relation(g, RelationKind::Contact, b, a))
        return geometry::in_contact(ca, cb);
    return false;
}

bool layout_ok(const SceneGraph& g) {
    for (auto it = g.objects.begin(); it != g.objects.end(); ++it) {
        if (!within_canvas(it->second)) return false;
        for (auto jt = std::next(it); jt != g.objects.end(); ++jt)
            if (!pair_ok(g, it->first, jt->first)) return false;
    }
    return true;
}

void place_object(SceneGraph& g, NodeId id, Rng& rng, SamplingContext& ctx) {
    auto& o = g.objects.at(id);
    const double r = 0.5 * o.size + kCanvasMargin + 1e-9;
    if (r > 0.5) throw SamplingExhausted("object too large for the canvas");
    const auto fx = ctx.fixed_x.find(id);
    if (fx != ctx.fixed_x.end() && (fx->second < r || fx->second > 1.0 - r))
        throw SamplingExhausted("pinned x leaves the canvas");
    for (int attempt = 0; attempt < ctx.max_attempts; ++attempt) {
        o.position = {fx != ctx.fixed_x.end() ? fx->second : rng.uniform(r, 1.0 - r), rng.uniform(r, 1.0 - r)};
        if (!placed_ok(g, id, ctx)) continue;
        ctx.placed.insert(id);
        ctx.assigned.insert({id, RelationKind::Position});
        return;
    }
    throw SamplingExhausted("could not place object " + std::to_string(id));
}

}  // namespace cvr::relations
