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
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvr/geometry.hpp"

namespace cvr {

using NodeId = std::uint32_t;

/// The scene root. Count on the root is the number of objects.
inline constexpr NodeId kRootId = 0;

enum class RelationKind { Shape, Position, Size, Color, Rotation, Flip, Count, Inside, Contact };

inline constexpr std::array<RelationKind, 9> kAllRelationKinds = {
    RelationKind::Shape,    RelationKind::Position, RelationKind::Size,
    RelationKind::Color,    RelationKind::Rotation, RelationKind::Flip,
    RelationKind::Count,    RelationKind::Inside,   RelationKind::Contact};

std::string_view to_string(RelationKind k);
std::optional<RelationKind> parse_relation_kind(std::string_view name);

inline constexpr double kMinSize = 0.05;
inline constexpr double kMaxSize = 0.45;
inline constexpr double kCanvasMargin = 0.01;

struct SceneObject {
    std::uint64_t shape_seed = 0;
    int complexity = 6;
    geometry::Contour base_contour;  // centred at the origin, max radius 0.5
    geometry::Point position;        // centroid on the canvas
    double size = 0.2;
    double color = 0.0;  // hue in [0, 1)
    double rotation = 0.0;
    bool flip = false;

    friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

SceneObject make_object(std::uint64_t shape_seed, int complexity);

/// A relation or group node. `kind` is empty for a plain group declared by a
/// rule structure; members may be objects, the root, or other relation nodes.
struct RelationNode {
    std::optional<RelationKind> kind;
    std::vector<NodeId> members;
    std::map<std::string, double> attributes;

    friend bool operator==(const RelationNode&, const RelationNode&) = default;
};

struct SceneGraph {
    std::map<NodeId, SceneObject> objects;
    std::map<NodeId, RelationNode> relations;
    std::vector<NodeId> z_order;  // draw order, first is bottom
    bool achromatic = false;      // render every outline black

    friend bool operator==(const SceneGraph&, const SceneGraph&) = default;

    bool has_node(NodeId id) const {
        return id == kRootId || objects.contains(id) || relations.contains(id);
    }
    void add_object(NodeId id, SceneObject o);
    void remove_object(NodeId id);
};

class SceneError : public std::runtime_error {
public:
    enum class Code { UnknownNode, UnknownAttribute };
    SceneError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

/// Scalar attribute lookup. Objects expose shape, complexity, x, y, size,
/// color, rotation and flip; the root and relation nodes expose count plus
/// any stored relation attribute. "shape" is a 53-bit identity token.
double attribute_of(const SceneGraph& g, NodeId node, std::string_view attr);

/// Number of direct members (objects for the root).
std::size_t cardinality(const SceneGraph& g, NodeId node);

/// Objects reachable from a node through group membership, in id order.
std::vector<NodeId> member_objects(const SceneGraph& g, NodeId node);

geometry::Contour realized_contour(const SceneObject& o);

/// Structural violations: bounds, ranges, id resolution, acyclicity, z-order.
std::vector<std::string> validate(const SceneGraph& g);

}  // namespace cvr
