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
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cvr/rng.hpp"
#include "cvr/scene.hpp"

namespace cvr::relations {

struct Comparator {
    enum class Type { Equal, Greater, Offset };
    Type type = Type::Equal;
    double offset = 0.0;

    friend bool operator==(const Comparator&, const Comparator&) = default;
};

/// One constraint over scene nodes. Operands are objects or groups for the
/// attribute kinds (groups expand to their member objects), two objects for
/// inside/contact, and groups or the root for count. `node` is the relation
/// node that carries the relation's attributes in the scene (count target).
struct ElementaryRelation {
    RelationKind kind = RelationKind::Shape;
    std::vector<NodeId> operands;
    Comparator comparator;
    NodeId node = kRootId;

    friend bool operator==(const ElementaryRelation&, const ElementaryRelation&) = default;
};

// Check tolerances per attribute.
inline constexpr double kSizeTolerance = 0.02;
inline constexpr double kPositionTolerance = 0.02;
inline constexpr double kRotationTolerance = 0.1;
inline constexpr double kHueTolerance = 0.05;

/// Tolerance used by check() for a relation kind; 0 for exact kinds.
double tolerance(RelationKind kind);

/// Period for circular attributes (hue 1, rotation 2pi), 0 otherwise.
double period(RelationKind kind);

/// True for the attribute kinds compared as real numbers.
bool is_continuous(RelationKind kind);

class SamplingExhausted : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Range {
    double lo = 0.0;
    double hi = 1.0;
};

/// Per-panel sampling state. `assigned` lists (object, attribute) pairs whose
/// values are already final; samplers honour them rather than redraw.
struct SamplingContext {
    std::set<std::pair<NodeId, RelationKind>> assigned;
    std::map<NodeId, Range> size_range;
    std::map<NodeId, double> fixed_x;  // x coordinates pinned by position relations
    std::set<NodeId> placed;
    Range default_size{0.12, 0.30};
    Range hue{0.0, 1.0};
    Range rotation{0.0, 6.283185307179586};
    int max_attempts = 1000;

    bool is_assigned(NodeId id, RelationKind k) const { return assigned.contains({id, k}); }
    Range size_range_of(NodeId id) const {
        auto it = size_range.find(id);
        return it == size_range.end() ? default_size : it->second;
    }
};

/// Objects a relation constrains, in operand order (groups expanded).
std::vector<NodeId> operand_objects(const ElementaryRelation& r, const SceneGraph& g);

/// Scalar distance from the satisfied state. check() is `deviation <= tolerance`;
/// for exact kinds the deviation is 0 when satisfied and >= 1 otherwise.
double deviation(const ElementaryRelation& r, const SceneGraph& g);

bool check(const ElementaryRelation& r, const SceneGraph& g);

/// Assigns the attributes governed by `r` so that check(r, g) holds.
/// Throws SamplingExhausted after ctx.max_attempts rejections.
void sample_satisfying(const ElementaryRelation& r, SceneGraph& g, Rng& rng, SamplingContext& ctx);

/// Returns a copy of `g` in which `r` is violated by at least three times its
/// tolerance, changing only attributes governed by `r`.
SceneGraph perturb_violating(const ElementaryRelation& r, const SceneGraph& g, Rng& rng, int max_attempts = 1000);

/// Fresh (seed, complexity) pair for a random shape.
std::pair<std::uint64_t, int> draw_shape(Rng& rng);
void set_shape(SceneObject& o, std::uint64_t seed, int complexity);

/// Pairwise layout rule. Unrelated objects keep at least three contact
/// tolerances apart and never nest; inside pairs are either nested with that
/// clearance or fully apart; contact pairs either touch or are fully apart.
bool pair_ok(const SceneGraph& g, NodeId a, NodeId b);

/// Canvas bounds for one object.
bool within_canvas(const SceneObject& o);

/// Bounds plus pair_ok over every pair.
bool layout_ok(const SceneGraph& g);

/// Rejection-samples a position for `id` (x pinned when ctx.fixed_x has it)
/// that respects bounds and pair_ok against all placed objects.
void place_object(SceneGraph& g, NodeId id, Rng& rng, SamplingContext& ctx);

}  // namespace cvr::relations
