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

#include "cvr/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "cvr/rng.hpp"

namespace cvr::geometry {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kShapeRetries = 32;
constexpr double kMinSplineRadius = 0.05;

// Second derivatives of the periodic interpolating cubic spline through
// equally spaced samples. k <= 12, so dense elimination is fine.
std::vector<double> periodic_spline_moments(const std::vector<double>& y, double h) {
    const int k = static_cast<int>(y.size());
    std::vector<std::vector<double>> a(k, std::vector<double>(k + 1, 0.0));
    for (int j = 0; j < k; ++j) {
        a[j][j] += 4.0;
        a[j][(j + k - 1) % k] += 1.0;
        a[j][(j + 1) % k] += 1.0;
        a[j][k] = 6.0 / (h * h) * (y[(j + 1) % k] - 2.0 * y[j] + y[(j + k - 1) % k]);
    }
    for (int col = 0; col < k; ++col) {
        int pivot = col;
        for (int r = col + 1; r < k; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        std::swap(a[col], a[pivot]);
        for (int r = 0; r < k; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int c = col; c <= k; ++c) a[r][c] -= f * a[col][c];
        }
    }
    std::vector<double> m(k);
    for (int j = 0; j < k; ++j) m[j] = a[j][k] / a[j][j];
    return m;
}

std::vector<Point> radial_spline(const std::vector<double>& radii) {
    const int k = static_cast<int>(radii.size());
    const double h = kTwoPi / k;
    const auto m = periodic_spline_moments(radii, h);
    std::vector<Point> out;
    out.reserve(kContourVertices);
    for (int i = 0; i < kContourVertices; ++i) {
        const double theta = kTwoPi * i / kContourVertices;
        const int j = std::min(static_cast<int>(theta / h), k - 1);
        const int j1 = (j + 1) % k;
        const double t0 = theta - j * h;
        const double t1 = h - t0;
        const double r = m[j] * t1 * t1 * t1 / (6.0 * h) + m[j1] * t0 * t0 * t0 / (6.0 * h) +
                         (radii[j] - m[j] * h * h / 6.0) * t1 / h +
                         (radii[j1] - m[j1] * h * h / 6.0) * t0 / h;
        out.push_back({r * std::cos(theta), r * std::sin(theta)});
    }
    return out;
}

std::vector<Point> resample_closed(const std::vector<Point>& poly, int n) {
    std::vector<double> cum{0.0};
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % poly.size()];
        cum.push_back(cum.back() + std::hypot(b.x - a.x, b.y - a.y));
    }
    const double total = cum.back();
    std::vector<Point> out;
    out.reserve(n);
    std::size_t seg = 0;
    for (int i = 0; i < n; ++i) {
        const double s = total * i / n;
        while (seg + 1 < poly.size() && cum[seg + 1] <= s) ++seg;
        const auto& a = poly[seg];
        const auto& b = poly[(seg + 1) % poly.size()];
        const double len = cum[seg + 1] - cum[seg];
        const double t = len > 0 ? (s - cum[seg]) / len : 0.0;
        out.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
    }
    return out;
}

Contour normalize(std::vector<Point> pts) {
    const Point c = centroid(pts);
    for (auto& p : pts) {
        p.x -= c.x;
        p.y -= c.y;
    }
    const double r = max_radius(pts, {0.0, 0.0});
    const double s = 0.5 / r;
    for (auto& p : pts) {
        p.x *= s;
        p.y *= s;
    }
    return Contour{std::move(pts)};
}

BoundingBox segment_box(Point a, Point b) {
    return {std::min(a.x, b.x), std::min(a.y, b.y), std::max(a.x, b.x), std::max(a.y, b.y)};
}

namespace bg = boost::geometry;
using BgPoint = bg::model::d2::point_xy<double>;
using BgPolygon = bg::model::polygon<BgPoint, /*clockwise=*/false, /*closed=*/true>;

BgPolygon to_bg(const Contour& c) {
    BgPolygon poly;
    for (const auto& p : c.vertices) bg::append(poly.outer(), BgPoint(p.x, p.y));
    if (!c.vertices.empty()) bg::append(poly.outer(), BgPoint(c.vertices[0].x, c.vertices[0].y));
    bg::correct(poly);
    return poly;
}

}  // namespace

Contour gen_contour(std::uint64_t seed, int complexity) {
    if (complexity < kMinComplexity || complexity > kMaxComplexity)
        throw std::invalid_argument("gen_contour: complexity must be in [3, 12]");
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(complexity)}));
    std::vector<double> radii(complexity);
    for (int attempt = 0; attempt < kShapeRetries; ++attempt) {
        for (auto& r : radii) r = rng.uniform(0.3, 1.0);
        auto pts = radial_spline(radii);
        double rmin = std::numeric_limits<double>::infinity();
        for (const auto& p : pts) rmin = std::min(rmin, std::hypot(p.x, p.y));
        if (rmin > kMinSplineRadius && is_simple(pts) && signed_area(pts) > 0) return normalize(std::move(pts));
    }
    std::vector<Point> control;
    for (int j = 0; j < complexity; ++j) {
        const double theta = kTwoPi * j / complexity;
        control.push_back({radii[j] * std::cos(theta), radii[j] * std::sin(theta)});
    }
    return normalize(resample_closed(convex_hull(std::move(control)), kContourVertices));
}

Contour apply_transform(const Contour& c, const Transform& t) {
    std::vector<Point> v = c.vertices;
    const std::size_t n = v.size();
    if (n == 0) return c;
    const Point ctr = centroid(v);
    if (t.flip) {
        // Mirroring reverses orientation; reindex so vertex 0 stays put and the
        // winding stays counter-clockwise.
        std::vector<Point> m(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Point& p = v[(n - i) % n];
            m[i] = {2.0 * ctr.x - p.x, p.y};
        }
        v = std::move(m);
    }
    if (t.rotation != 0.0) {
        const double cs = std::cos(t.rotation);
        const double sn = std::sin(t.rotation);
        for (auto& p : v) {
            const double dx = p.x - ctr.x;
            const double dy = p.y - ctr.y;
            p = {ctr.x + cs * dx - sn * dy, ctr.y + sn * dx + cs * dy};
        }
    }
    if (t.scale != 1.0) {
        for (auto& p : v) p = {ctr.x + t.scale * (p.x - ctr.x), ctr.y + t.scale * (p.y - ctr.y)};
    }
    if (t.translation.x != 0.0 || t.translation.y != 0.0) {
        for (auto& p : v) p = {p.x + t.translation.x, p.y + t.translation.y};
    }
    return Contour{std::move(v)};
}

double signed_area(std::span<const Point> poly) {
    double s = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& a = poly[i];
        const auto& b = poly[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    return 0.5 * s;
}

Point centroid(std::span<const Point> poly) {
    double a2 = 0.0, cx = 0.0, cy = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = poly[i];
        const auto& q = poly[(i + 1) % n];
        const double cr = p.x * q.y - q.x * p.y;
        a2 += cr;
        cx += (p.x + q.x) * cr;
        cy += (p.y + q.y) * cr;
    }
    if (std::abs(a2) < 1e-300) {
        Point m;
        for (const auto& p : poly) {
            m.x += p.x;
            m.y += p.y;
        }
        if (n > 0) m = {m.x / n, m.y / n};
        return m;
    }
    return {cx / (3.0 * a2), cy / (3.0 * a2)};
}

BoundingBox bounding_box(std::span<const Point> poly) {
    BoundingBox b{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                  -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : poly) {
        b.min_x = std::min(b.min_x, p.x);
        b.min_y = std::min(b.min_y, p.y);
        b.max_x = std::max(b.max_x, p.x);
        b.max_y = std::max(b.max_y, p.y);
    }
    return b;
}

double max_radius(std::span<const Point> poly, Point center) {
    double r = 0.0;
    for (const auto& p : poly) r = std::max(r, std::hypot(p.x - center.x, p.y - center.y));
    return r;
}

double orient(Point a, Point b, Point c) { return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x); }

bool segments_intersect(Point a, Point b, Point c, Point d) {
    const double d1 = orient(c, d, a);
    const double d2 = orient(c, d, b);
    const double d3 = orient(a, b, c);
    const double d4 = orient(a, b, d);
    if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0)))
        return true;
    auto on_segment = [](Point p, Point q, Point r) {
        return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
               r.y <= std::max(p.y, q.y);
    };
    if (d1 == 0 && on_segment(c, d, a)) return true;
    if (d2 == 0 && on_segment(c, d, b)) return true;
    if (d3 == 0 && on_segment(a, b, c)) return true;
    if (d4 == 0 && on_segment(a, b, d)) return true;
    return false;
}

double point_segment_distance(Point p, Point a, Point b) {
    const double vx = b.x - a.x, vy = b.y - a.y;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0 ? ((p.x - a.x) * vx + (p.y - a.y) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

double segment_distance(Point a, Point b, Point c, Point d) {
    if (segments_intersect(a, b, c, d)) return 0.0;
    return std::min({point_segment_distance(a, c, d), point_segment_distance(b, c, d),
                     point_segment_distance(c, a, b), point_segment_distance(d, a, b)});
}

bool point_in_polygon(Point p, std::span<const Point> poly) {
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

bool is_simple(std::span<const Point> poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i) {
        const Point a = poly[i], b = poly[(i + 1) % n];
        const auto bi = segment_box(a, b);
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;  // adjacent through the closing edge
            const Point c = poly[j], d = poly[(j + 1) % n];
            if (!bi.overlaps(segment_box(c, d))) continue;
            if (segments_intersect(a, b, c, d)) return false;
        }
    }
    return true;
}

bool boundaries_intersect(const Contour& a, const Contour& b) {
    const auto& va = a.vertices;
    const auto& vb = b.vertices;
    if (!bounding_box(va).overlaps(bounding_box(vb))) return false;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const Point p = va[i], q = va[(i + 1) % va.size()];
        const auto bi = segment_box(p, q);
        for (std::size_t j = 0; j < vb.size(); ++j) {
            const Point r = vb[j], s = vb[(j + 1) % vb.size()];
            if (!bi.overlaps(segment_box(r, s))) continue;
            if (segments_intersect(p, q, r, s)) return true;
        }
    }
    return false;
}

bool contains(const Contour& outer, const Contour& inner) {
    if (outer.vertices.empty() || inner.vertices.empty()) return false;
    const auto bo = bounding_box(outer.vertices);
    const auto bi = bounding_box(inner.vertices);
    if (bi.min_x < bo.min_x || bi.max_x > bo.max_x || bi.min_y < bo.min_y || bi.max_y > bo.max_y) return false;
    for (const auto& p : inner.vertices)
        if (!point_in_polygon(p, outer.vertices)) return false;
    return !boundaries_intersect(outer, inner);
}

double min_distance(const Contour& a, const Contour& b) {
    const auto& va = a.vertices;
    const auto& vb = b.vertices;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < va.size(); ++i) {
        const Point p = va[i], q = va[(i + 1) % va.size()];
        for (std::size_t j = 0; j < vb.size(); ++j) {
            const Point r = vb[j], s = vb[(j + 1) % vb.size()];
            best = std::min(best, segment_distance(p, q, r, s));
            if (best == 0.0) return 0.0;
        }
    }
    return best;
}

bool closer_than(const Contour& a, const Contour& b, double d) {
    const auto& va = a.vertices;
    const auto& vb = b.vertices;
    if (!bounding_box(va).overlaps(bounding_box(vb), d)) return false;
    for (std::size_t i = 0; i < va.size(); ++i) {
        const Point p = va[i], q = va[(i + 1) % va.size()];
        const auto bi = segment_box(p, q);
        for (std::size_t j = 0; j < vb.size(); ++j) {
            const Point r = vb[j], s = vb[(j + 1) % vb.size()];
            if (!bi.overlaps(segment_box(r, s), d)) continue;
            if (segment_distance(p, q, r, s) < d) return true;
        }
    }
    return false;
}

double overlap_area(const Contour& a, const Contour& b) {
    std::vector<BgPolygon> out;
    bg::intersection(to_bg(a), to_bg(b), out);
    double area = 0.0;
    for (const auto& p : out) area += std::abs(bg::area(p));
    return area;
}

bool in_contact(const Contour& a, const Contour& b, double tol) {
    if (!bounding_box(a.vertices).overlaps(bounding_box(b.vertices), tol)) return false;
    if (min_distance(a, b) > tol) return false;
    if (contains(a, b) || contains(b, a)) return false;
    if (!boundaries_intersect(a, b)) return true;
    return overlap_area(a, b) < tol * tol;
}

std::vector<Point> convex_hull(std::vector<Point> pts) {
    std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point> h(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && orient(h[k - 2], h[k - 1], p) <= 0) --k;
        h[k++] = p;
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && orient(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
}

}  // namespace cvr::geometry
