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
#include <vector>

#include "cvr/scene.hpp"

namespace cvr::renderer {

inline constexpr int kDefaultSize = 128;
inline constexpr int kSupersample = 4;
inline constexpr double kStrokeWidth = 1.5;  // pixels at 128 px
inline constexpr double kSaturation = 0.9;
inline constexpr double kValue = 0.6;

/// Row-major 8-bit RGB.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 255)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}

    std::uint8_t* at(int x, int y) { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }
    const std::uint8_t* at(int x, int y) const { return &pixels[(static_cast<std::size_t>(y) * width + x) * 3]; }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Stroke colour for a hue at the fixed saturation and value.
std::array<std::uint8_t, 3> hue_to_rgb(double hue);

/// White canvas with every object outline stroked in z-order. Canvas x maps to
/// columns and canvas y to rows.
Image rasterize(const SceneGraph& g, int width = kDefaultSize, int height = kDefaultSize);

}  // namespace cvr::renderer
