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

#include "cvr/scene.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace cvr {

namespace {

constexpr std::array<std::string_view, 9> kKindNames = {"shape", "position", "size",   "color",  "rotation",
                                                        "flip",  "count",    "inside", "contact"};

std::string node_name(NodeId id) { return "node " + std::to_string(id); }

}  // namespace

std::string_view to_string(RelationKind k) { return kKindNames[static_cast<std::size_t>(k)]; }

std::optional<RelationKind> parse_relation_kind(std::string_view name) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i)
        if (kKindNames[i] == name) return static_cast<RelationKind>(i);
    return std::nullopt;
}

SceneObject make_object(std::uint64_t shape_seed, int complexity) {
    SceneObject o;
    o.shape_seed = shape_seed;
    o.complexity = complexity;
    o.base_contour = geometry::gen_contour(shape_seed, complexity);
    return o;
}

void SceneGraph::add_object(NodeId id, SceneObject o) {
    objects[id] = std::move(o);
    if (std::find(z_order.begin(), z_order.end(), id) == z_order.end()) z_order.push_back(id);
}

void SceneGraph::remove_object(NodeId id) {
    objects.erase(id);
    std::erase(z_order, id);
    for (auto& [rid, r] : relations) std::erase(r.members, id);
}

double attribute_of(const SceneGraph& g, NodeId node, std::string_view attr) {
    if (auto it = g.objects.find(node); it != g.objects.end()) {
        const SceneObject& o = it->second;
        if (attr == "shape")
            return static_cast<double>((o.shape_seed ^ (static_cast<std::uint64_t>(o.complexity) << 56)) &
                                       ((1ULL << 53) - 1));
        if (attr == "complexity") return o.complexity;
        if (attr == "x") return o.position.x;
        if (attr == "y") return o.position.y;
        if (attr == "size") return o.size;
        if (attr == "color") return o.color;
        if (attr == "rotation") return o.rotation;
        if (attr == "flip") return o.flip ? 1.0 : 0.0;
        throw SceneError(SceneError::Code::UnknownAttribute,
                         "attribute '" + std::string(attr) + "' not defined on object " + std::to_string(node));
    }
    if (node == kRootId) {
        if (attr == "count") return static_cast<double>(g.objects.size());
        throw SceneError(SceneError::Code::UnknownAttribute,
                         "attribute '" + std::string(attr) + "' not defined on the scene root");
    }
    auto it = g.relations.find(node);
    if (it == g.relations.end()) throw SceneError(SceneError::Code::UnknownNode, "unknown " + node_name(node));
    if (attr == "count") return static_cast<double>(it->second.members.size());
    if (auto a = it->second.attributes.find(std::string(attr)); a != it->second.attributes.end()) return a->second;
    throw SceneError(SceneError::Code::UnknownAttribute,
                     "attribute '" + std::string(attr) + "' not defined on " + node_name(node));
}

std::size_t cardinality(const SceneGraph& g, NodeId node) {
    return static_cast<std::size_t>(attribute_of(g, node, "count"));
}

std::vector<NodeId> member_objects(const SceneGraph& g, NodeId node) {
    std::set<NodeId> out;
    std::set<NodeId> seen;
    std::function<void(NodeId)> visit = [&](NodeId id) {
        if (!seen.insert(id).second) return;
        if (id == kRootId) {
            for (const auto& [oid, o] : g.objects) out.insert(oid);
        } else if (g.objects.contains(id)) {
            out.insert(id);
        } else if (auto it = g.relations.find(id); it != g.relations.end()) {
            for (NodeId m : it->second.members) visit(m);
        } else {
            throw SceneError(SceneError::Code::UnknownNode, "unknown " + node_name(id));
        }
    };
    visit(node);
    return {out.begin(), out.end()};
}

geometry::Contour realized_contour(const SceneObject& o) {
    return geometry::apply_transform(o.base_contour, {o.position, o.size, o.rotation, o.flip});
}

std::vector<std::string> validate(const SceneGraph& g) {
    std::vector<std::string> v;
    if (g.objects.contains(kRootId)) v.push_back("object uses the reserved root id 0");
    for (const auto& [id, o] : g.objects) {
        const std::string name = "object " + std::to_string(id);
        if (g.relations.contains(id)) v.push_back(name + " shares its id with a relation node");
        if (!std::isfinite(o.position.x) || !std::isfinite(o.position.y) || !std::isfinite(o.size) ||
            !std::isfinite(o.color) || !std::isfinite(o.rotation)) {
            v.push_back(name + " has a non-finite attribute");
            continue;
        }
        if (o.size < kMinSize || o.size > kMaxSize) v.push_back(name + " size out of range");
        if (o.color < 0.0 || o.color >= 1.0) v.push_back(name + " hue out of range");
        if (o.base_contour.vertices.size() < 8) v.push_back(name + " contour has fewer than 8 vertices");
        const auto box = geometry::bounding_box(realized_contour(o).vertices);
        if (box.min_x < kCanvasMargin || box.min_y < kCanvasMargin || box.max_x > 1.0 - kCanvasMargin ||
            box.max_y > 1.0 - kCanvasMargin)
            v.push_back(name + " exceeds the canvas margin");
    }
    for (const auto& [id, r] : g.relations) {
        const std::string name = "relation " + std::to_string(id);
        if (id == kRootId) v.push_back("relation uses the reserved root id 0");
        if (r.members.empty()) v.push_back(name + " has no members");
        for (NodeId m : r.members)
            if (!g.has_node(m)) v.push_back(name + " references unknown node " + std::to_string(m));
    }
    // Cycle detection over relation membership.
    std::map<NodeId, int> state;
    std::function<bool(NodeId)> cyclic = [&](NodeId id) {
        auto it = g.relations.find(id);
        if (it == g.relations.end()) return false;
        int& s = state[id];
        if (s == 1) return true;
        if (s == 2) return false;
        s = 1;
        for (NodeId m : it->second.members)
            if (cyclic(m)) return true;
        state[id] = 2;
        return false;
    };
    for (const auto& [id, r] : g.relations)
        if (cyclic(id)) {
            v.push_back("relation graph contains a cycle through " + std::to_string(id));
            break;
        }
    std::vector<NodeId> z = g.z_order;
    std::sort(z.begin(), z.end());
    std::vector<NodeId> ids;
    for (const auto& [id, o] : g.objects) ids.push_back(id);
    if (z != ids) v.push_back("z-order is not a permutation of the object ids");
    return v;
}

}  // namespace cvr
