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

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <set>

#include "cvr/dataset_io.hpp"
#include "cvr/renderer.hpp"

namespace cvr::renderer {
namespace {

namespace fs = std::filesystem;

const fs::path kGolden = fs::path(CVR_SOURCE_DIR) / "tests" / "golden";

bool is_background(const Image& img, int x, int y) {
    const auto* p = img.at(x, y);
    return p[0] == 255 && p[1] == 255 && p[2] == 255;
}

std::set<std::pair<int, int>> ink(const Image& img) {
    std::set<std::pair<int, int>> out;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            if (!is_background(img, x, y)) out.insert({x, y});
    return out;
}

SceneGraph single(SceneObject o) {
    SceneGraph g;
    g.add_object(1, std::move(o));
    return g;
}

SceneObject square_object(double size, geometry::Point at) {
    SceneObject o;
    const double h = 0.5 / std::sqrt(2.0);
    o.base_contour = {{{-h, -h}, {h, -h}, {h, h}, {-h, h}}};
    o.complexity = 0;
    o.size = size;
    o.position = at;
    o.color = 0.6;
    return o;
}

TEST(Rasterize, EmptySceneIsWhite) {
    const Image img = rasterize(SceneGraph{});
    ASSERT_EQ(img.pixels.size(), 128u * 128u * 3u);
    for (auto v : img.pixels) ASSERT_EQ(v, 255);
}

TEST(Rasterize, SquareInkStaysInBoundingBox) {
    const SceneGraph g = single(square_object(0.25, {0.5, 0.5}));
    const auto box = geometry::bounding_box(realized_contour(g.objects.at(1)).vertices);
    const Image img = rasterize(g);
    const auto pixels = ink(img);
    ASSERT_FALSE(pixels.empty());
    for (auto [x, y] : pixels) {
        EXPECT_GE(x + 1, box.min_x * 128 - 2);
        EXPECT_LE(x, box.max_x * 128 + 2);
        EXPECT_GE(y + 1, box.min_y * 128 - 2);
        EXPECT_LE(y, box.max_y * 128 + 2);
    }
    // The stroke reaches all four sides of the box.
    int min_x = 128, max_x = -1;
    for (auto [x, y] : pixels) min_x = std::min(min_x, x), max_x = std::max(max_x, x);
    EXPECT_NEAR(min_x, box.min_x * 128, 2.0);
    EXPECT_NEAR(max_x, box.max_x * 128, 2.0);
}

TEST(Rasterize, Deterministic) {
    SceneGraph g;
    for (NodeId id = 1; id <= 3; ++id) {
        SceneObject o = make_object(id * 31, 7);
        o.size = 0.2;
        o.position = {0.25 * static_cast<double>(id), 0.5};
        o.color = 0.3 * static_cast<double>(id);
        g.add_object(id, o);
    }
    EXPECT_EQ(rasterize(g), rasterize(g));
}

TEST(Rasterize, WholePixelTranslationShiftsInk) {
    for (std::uint64_t seed : {3u, 8u, 21u}) {
        SceneObject o = make_object(seed, 6);
        o.size = 0.3;
        o.rotation = 0.4;
        o.position = {0.4, 0.45};
        const auto base = ink(rasterize(single(o)));
        o.position = {0.4 + 7.0 / 128.0, 0.45 + 3.0 / 128.0};
        const auto moved = ink(rasterize(single(o)));
        std::set<std::pair<int, int>> shifted;
        for (auto [x, y] : base) shifted.insert({x + 7, y + 3});
        EXPECT_EQ(moved, shifted) << seed;
    }
}

TEST(Rasterize, NonEmptySceneHasInk) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SceneObject o = make_object(seed, 3 + static_cast<int>(seed % 10));
        o.size = 0.05;
        o.position = {0.5, 0.5};
        EXPECT_FALSE(ink(rasterize(single(o))).empty());
    }
}

TEST(Rasterize, AchromaticIsGray) {
    SceneGraph g = single(square_object(0.3, {0.5, 0.5}));
    g.achromatic = true;
    const Image img = rasterize(g);
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        ASSERT_EQ(img.pixels[i], img.pixels[i + 1]);
        ASSERT_EQ(img.pixels[i + 1], img.pixels[i + 2]);
    }
}

TEST(Rasterize, OtherSizes) {
    const SceneGraph g = single(square_object(0.3, {0.5, 0.5}));
    const Image img = rasterize(g, 64, 96);
    EXPECT_EQ(img.width, 64);
    EXPECT_EQ(img.height, 96);
    EXPECT_FALSE(ink(img).empty());
}

TEST(HueToRgb, MatchesChromaFormula) {
    for (int i = 0; i < 360; ++i) {
        const double h = i / 360.0;
        const double c = kValue * kSaturation;
        const double hp = h * 6.0;
        const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
        const double m = kValue - c;
        double r = 0, g = 0, b = 0;
        if (hp < 1) r = c, g = x;
        else if (hp < 2) r = x, g = c;
        else if (hp < 3) g = c, b = x;
        else if (hp < 4) g = x, b = c;
        else if (hp < 5) r = x, b = c;
        else r = c, b = x;
        const auto rgb = hue_to_rgb(h);
        EXPECT_NEAR(rgb[0], (r + m) * 255.0, 0.5 + 1e-9) << i;
        EXPECT_NEAR(rgb[1], (g + m) * 255.0, 0.5 + 1e-9) << i;
        EXPECT_NEAR(rgb[2], (b + m) * 255.0, 0.5 + 1e-9) << i;
    }
}

TEST(Rasterize, GoldenImages) {
    const auto registry = rules::load_registry(fs::path(CVR_SOURCE_DIR) / "rules" / "manifest.json");
    const bool update = std::getenv("CVR_UPDATE_GOLDEN") != nullptr;
    for (const char* id : {"shape", "inside", "color_count"}) {
        const auto it = std::find_if(registry.begin(), registry.end(), [&](const auto& e) { return e.id == id; });
        ASSERT_NE(it, registry.end());
        const auto s = generator::generate_problem(it->program, generator::sample_seed(2026, id, generator::Split::Test, 0));
        for (int p = 0; p < 4; ++p) {
            const auto png = dataset::encode_png(rasterize(s.panels[p]));
            const fs::path file = kGolden / (std::string(id) + "_" + std::to_string(p) + ".png");
            if (update) {
                fs::create_directories(kGolden);
                dataset::write_file(file, png);
            }
            ASSERT_TRUE(fs::exists(file)) << file;
            EXPECT_EQ(dataset::read_file(file), png) << file;
        }
    }
}

}  // namespace
}  // namespace cvr::renderer
