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

#include "cvr/renderer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace cvr::renderer {

namespace {

constexpr int kSamples = kSupersample * kSupersample;

double segment_distance_sq(double px, double py, double ax, double ay, double bx, double by) {
    const double dx = bx - ax, dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double qx = ax + t * dx - px, qy = ay + t * dy - py;
    return qx * qx + qy * qy;
}

}  // namespace

std::array<std::uint8_t, 3> hue_to_rgb(double hue) {
    double h = std::fmod(hue, 1.0);
    if (h < 0) h += 1.0;
    const double hh = h * 6.0;
    const int sector = std::min(5, static_cast<int>(hh));
    const double f = hh - sector;
    const double v = kValue;
    const double p = v * (1.0 - kSaturation);
    const double q = v * (1.0 - kSaturation * f);
    const double t = v * (1.0 - kSaturation * (1.0 - f));
    double r, g, b;
    switch (sector) {
        case 0: r = v, g = t, b = p; break;
        case 1: r = q, g = v, b = p; break;
        case 2: r = p, g = v, b = t; break;
        case 3: r = p, g = q, b = v; break;
        case 4: r = t, g = p, b = v; break;
        default: r = v, g = p, b = q; break;
    }
    auto to8 = [](double c) { return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0)); };
    return {to8(r), to8(g), to8(b)};
}

Image rasterize(const SceneGraph& g, int width, int height) {
    Image img(width, height);
    const double half = 0.5 * kStrokeWidth * static_cast<double>(width) / kDefaultSize;
    const double half_sq = half * half;
    std::vector<std::uint16_t> mask(static_cast<std::size_t>(width) * height);

    for (NodeId id : g.z_order) {
        const SceneObject& o = g.objects.at(id);
        const auto contour = realized_contour(o).vertices;
        if (contour.empty()) continue;
        std::fill(mask.begin(), mask.end(), 0);
        int x0 = width, y0 = height, x1 = -1, y1 = -1;
        for (std::size_t i = 0; i < contour.size(); ++i) {
            const auto& a = contour[i];
            const auto& b = contour[(i + 1) % contour.size()];
            const double ax = a.x * width, ay = a.y * height, bx = b.x * width, by = b.y * height;
            const int px0 = std::max(0, static_cast<int>(std::floor(std::min(ax, bx) - half)));
            const int py0 = std::max(0, static_cast<int>(std::floor(std::min(ay, by) - half)));
            const int px1 = std::min(width - 1, static_cast<int>(std::floor(std::max(ax, bx) + half)));
            const int py1 = std::min(height - 1, static_cast<int>(std::floor(std::max(ay, by) + half)));
            for (int py = py0; py <= py1; ++py) {
                for (int px = px0; px <= px1; ++px) {
                    std::uint16_t& m = mask[static_cast<std::size_t>(py) * width + px];
                    if (m == 0xFFFF) continue;
                    for (int s = 0; s < kSamples; ++s) {
                        if (m & (1u << s)) continue;
                        const double sx = px + (s % kSupersample + 0.5) / kSupersample;
                        const double sy = py + (s / kSupersample + 0.5) / kSupersample;
                        if (segment_distance_sq(sx, sy, ax, ay, bx, by) <= half_sq) m |= static_cast<std::uint16_t>(1u << s);
                    }
                }
            }
            x0 = std::min(x0, px0), y0 = std::min(y0, py0), x1 = std::max(x1, px1), y1 = std::max(y1, py1);
        }
        const std::array<std::uint8_t, 3> col =
            g.achromatic ? std::array<std::uint8_t, 3>{0, 0, 0} : hue_to_rgb(o.color);
        for (int py = y0; py <= y1; ++py) {
            for (int px = x0; px <= x1; ++px) {
                const int c = std::popcount(mask[static_cast<std::size_t>(py) * width + px]);
                if (c == 0) continue;
                std::uint8_t* p = img.at(px, py);
                for (int ch = 0; ch < 3; ++ch) p[ch] = static_cast<std::uint8_t>((p[ch] * (kSamples - c) + col[ch] * c + kSamples / 2) / kSamples);
            }
        }
    }
    return img;
}

}  // namespace cvr::renderer
