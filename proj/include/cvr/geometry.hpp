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

#include <cstdint>
#include <span>
#include <vector>

namespace cvr::geometry {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point&, const Point&) = default;
};

struct BoundingBox {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    bool overlaps(const BoundingBox& o, double pad = 0.0) const {
        return min_x - pad <= o.max_x && o.min_x - pad <= max_x && min_y - pad <= o.max_y &&
               o.min_y - pad <= max_y;
    }
};

/// Closed polyline; the last vertex connects back to the first.
/// Shapes are kept counter-clockwise (positive shoelace area).
struct Contour {
    std::vector<Point> vertices;

    friend bool operator==(const Contour&, const Contour&) = default;
};

struct Transform {
    Point translation;
    double scale = 1.0;
    double rotation = 0.0;  // radians
    bool flip = false;      // mirror about the vertical axis through the centroid
};

inline constexpr int kContourVertices = 64;
inline constexpr int kMinComplexity = 3;
inline constexpr int kMaxComplexity = 12;
inline constexpr double kContactTolerance = 0.004;

/// Random closed shape: `complexity` control radii in [0.3, 1] at equal angles,
/// periodic cubic spline through them in polar form, resampled at 64 vertices,
/// centred on its area centroid and scaled to a maximum radius of 0.5.
/// Throws std::invalid_argument when complexity is outside [3, 12].
Contour gen_contour(std::uint64_t seed, int complexity);

/// Flip, then rotate about the centroid, then scale about the centroid, then translate.
Contour apply_transform(const Contour& c, const Transform& t);

double signed_area(std::span<const Point> poly);
Point centroid(std::span<const Point> poly);
BoundingBox bounding_box(std::span<const Point> poly);
double max_radius(std::span<const Point> poly, Point center);

double orient(Point a, Point b, Point c);
bool segments_intersect(Point a, Point b, Point c, Point d);
double point_segment_distance(Point p, Point a, Point b);
double segment_distance(Point a, Point b, Point c, Point d);

/// Ray-casting point-in-polygon.
bool point_in_polygon(Point p, std::span<const Point> poly);

/// True when no two non-adjacent edges intersect.
bool is_simple(std::span<const Point> poly);

/// True when any edge of a crosses or touches any edge of b.
bool boundaries_intersect(const Contour& a, const Contour& b);

bool contains(const Contour& outer, const Contour& inner);
double min_distance(const Contour& a, const Contour& b);
/// Same as min_distance(a, b) < d, with bounding-box pruning.
bool closer_than(const Contour& a, const Contour& b, double d);
double overlap_area(const Contour& a, const Contour& b);
bool in_contact(const Contour& a, const Contour& b, double tol = kContactTolerance);

std::vector<Point> convex_hull(std::vector<Point> pts);

}  // namespace cvr::geometry
