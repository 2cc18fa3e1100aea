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
#include <png.h>

#include <set>

#include "cvr/dataset_io.hpp"

namespace cvr::dataset {
namespace {

namespace fs = std::filesystem;

const std::vector<rules::RegistryEntry>& registry() {
    static const auto r = rules::load_registry(fs::path(CVR_SOURCE_DIR) / "rules" / "manifest.json");
    return r;
}

std::vector<rules::RegistryEntry> pick(std::initializer_list<const char*> ids) {
    std::vector<rules::RegistryEntry> out;
    for (const char* id : ids)
        for (const auto& e : registry())
            if (e.id == id) out.push_back(e);
    return out;
}

// Decodes with libpng.
renderer::Image libpng_decode(const std::vector<std::uint8_t>& bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) throw std::runtime_error(img.message);
    img.format = PNG_FORMAT_RGB;
    renderer::Image out(static_cast<int>(img.width), static_cast<int>(img.height));
    if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) throw std::runtime_error(img.message);
    return out;
}

class TempDir : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("cvr_ds_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(root_);
    }
    void TearDown() override { fs::remove_all(root_); }
    fs::path root_;
};

renderer::Image sample_image() {
    const auto s = generator::generate_problem(pick({"color_inside"})[0].program, 77);
    return renderer::rasterize(s.panels[1]);
}

TEST(Png, LibpngReadsOurEncoding) {
    const renderer::Image img = sample_image();
    const auto bytes = encode_png(img);
    EXPECT_EQ(libpng_decode(bytes), img);
}

TEST(Png, RoundTrip) {
    const renderer::Image img = sample_image();
    EXPECT_EQ(decode_png(encode_png(img)), img);
    renderer::Image odd(7, 3, 10);
    odd.at(6, 2)[1] = 200;
    EXPECT_EQ(decode_png(encode_png(odd)), odd);
}

TEST(Png, CorruptionIsDetected) {
    auto bytes = encode_png(sample_image());
    bytes[bytes.size() / 2] ^= 0x40;
    EXPECT_THROW(decode_png(bytes), DatasetError);
    EXPECT_THROW(decode_png({1, 2, 3}), DatasetError);
}

TEST(Sidecar, RoundTripsGeneratedSamples) {
    for (const auto& e : registry()) {
        auto s = generator::generate_problem(e.program, 5);
        s.rule_id = e.id;
        s.sample_index = 3;
        s.master_seed = 9;
        const std::string text = serialize_problem(s);
        EXPECT_EQ(parse_problem(text), s) << e.id;
        EXPECT_EQ(serialize_problem(parse_problem(text)), text) << e.id;
    }
}

TEST(Sidecar, ExplicitVerticesRoundTrip) {
    SceneGraph g;
    SceneObject o;
    o.base_contour = {{{-0.3, -0.3}, {0.3, -0.3}, {0.0, 0.4}}};
    o.complexity = 0;
    o.position = {0.5, 0.5};
    g.add_object(1, o);
    g.relations[1000] = RelationNode{std::nullopt, {1}, {{"count", 1.0}}};
    const json j = scene_to_json(g);
    EXPECT_TRUE(j["objects"][0].contains("vertices"));
    EXPECT_EQ(scene_from_json(j), g);
}

TEST(Sidecar, MalformedInput) { EXPECT_THROW(parse_problem("{\"rule_id\": 3}"), DatasetError); }

TEST_F(TempDir, LayoutMatchesCounts) {
    GenerateOptions opt;
    opt.master_seed = 4;
    opt.counts = {{generator::Split::Train, 10}, {generator::Split::Val, 5}};
    const auto m = write_dataset(root_, pick({"size", "contact"}), opt);
    std::size_t pngs = 0, labels = 0, sidecars = 0;
    for (const auto& f : fs::recursive_directory_iterator(root_)) {
        const auto name = f.path().filename().string();
        if (f.path().extension() == ".png") ++pngs;
        if (name == "labels.csv") ++labels;
        if (name.ends_with(".scene.json")) ++sidecars;
    }
    EXPECT_EQ(pngs, 2u * 15u * 4u);
    EXPECT_EQ(labels, 4u);
    EXPECT_EQ(sidecars, 30u);
    EXPECT_TRUE(fs::exists(root_ / "manifest.json"));
    EXPECT_EQ(m.counts.at("size").at(generator::Split::Train), 10u);

    const auto all = read_labels(root_);
    EXPECT_EQ(all.size(), 30u);
    for (const auto& [k, v] : all) EXPECT_TRUE(v >= 0 && v <= 3);

    const auto report = verify(root_);
    EXPECT_TRUE(report.ok()) << (report.discrepancies.empty() ? "" : report.discrepancies[0]);
    EXPECT_EQ(report.samples, 30u);
    EXPECT_EQ(report.rederived, 10u);
}

TEST_F(TempDir, ManifestRoundTrip) {
    GenerateOptions opt;
    opt.master_seed = 12;
    opt.image_size = 64;
    opt.counts = {{generator::Split::Generalization, 2}};
    const auto m = write_dataset(root_, pick({"shape_flip"}), opt);
    const auto back = read_manifest(root_);
    EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
    EXPECT_EQ(back.image_size, 64);
    ASSERT_EQ(back.rules.size(), 1u);
    const auto program = compile_record(back.rules[0]);
    EXPECT_EQ(program.rule(), pick({"shape_flip"})[0].spec);
    EXPECT_EQ(program.params(), pick({"shape_flip"})[0].program.params());
    EXPECT_TRUE(verify(root_).ok());
}

TEST_F(TempDir, VerifyDetectsTampering) {
    GenerateOptions opt;
    opt.master_seed = 4;
    opt.counts = {{generator::Split::Test, 10}};
    write_dataset(root_, pick({"rotation"}), opt);
    const fs::path dir = split_dir(root_, "rotation", generator::Split::Test);

    auto png = read_file(dir / panel_file(0, 2));
    png[png.size() - 20] ^= 1;
    write_file(dir / panel_file(0, 2), png);
    auto r = verify(root_);
    EXPECT_FALSE(r.ok());

    fs::remove(dir / panel_file(5, 0));
    r = verify(root_);
    bool missing = false;
    for (const auto& d : r.discrepancies) missing |= d.find("missing 5_0.png") != std::string::npos;
    EXPECT_TRUE(missing);
}

TEST_F(TempDir, VerifyDetectsCountMismatch) {
    GenerateOptions opt;
    opt.counts = {{generator::Split::Val, 3}};
    write_dataset(root_, pick({"flip"}), opt);
    auto j = json::parse(read_file(root_ / "manifest.json"));
    j["counts"]["flip"]["val"] = 4;
    write_file(root_ / "manifest.json", j.dump());
    EXPECT_FALSE(verify(root_).ok());
}

TEST_F(TempDir, IdenticalAcrossWorkerCounts) {
    GenerateOptions opt;
    opt.master_seed = 21;
    opt.counts = {{generator::Split::Train, 12}};
    opt.workers = 1;
    write_dataset(root_ / "a", pick({"count", "inside"}), opt);
    opt.workers = 4;
    write_dataset(root_ / "b", pick({"count", "inside"}), opt);
    std::set<fs::path> files;
    for (const auto& f : fs::recursive_directory_iterator(root_ / "a"))
        if (f.is_regular_file()) files.insert(fs::relative(f.path(), root_ / "a"));
    for (const auto& f : fs::recursive_directory_iterator(root_ / "b"))
        if (f.is_regular_file()) EXPECT_TRUE(files.contains(fs::relative(f.path(), root_ / "b")));
    for (const auto& rel : files) EXPECT_EQ(read_file(root_ / "a" / rel), read_file(root_ / "b" / rel)) << rel;
}

DatasetError::Code prediction_error(const std::string& text, int* line = nullptr) {
    try {
        parse_predictions(text);
    } catch (const DatasetError& e) {
        if (line) *line = e.line();
        return e.code();
    }
    ADD_FAILURE() << "accepted: " << text;
    return DatasetError::Code::IoError;
}

constexpr const char* kHeader = "rule_id,split,sample_index,predicted_index\n";

TEST(Predictions, ParseWithMetadata) {
    const auto p = parse_predictions(std::string("# model=resnet50\n# regime=200\n") + kHeader +
                                     "size,test,0,3\nsize,test,1,0\r\n");
    EXPECT_EQ(p.model, "resnet50");
    EXPECT_EQ(p.regime, 200);
    ASSERT_EQ(p.rows.size(), 2u);
    EXPECT_EQ(p.rows[0].key, (SampleKey{"size", generator::Split::Test, 0}));
    EXPECT_EQ(p.rows[0].predicted_index, 3);
    EXPECT_EQ(parse_predictions(format_predictions(p)).rows.size(), 2u);
    EXPECT_EQ(format_predictions(parse_predictions(format_predictions(p))), format_predictions(p));
}

TEST(Predictions, Errors) {
    int line = 0;
    EXPECT_EQ(prediction_error(std::string(kHeader) + "size,test,0,1\nsize,test,zero,1\n", &line),
              DatasetError::Code::ParseError);
    EXPECT_EQ(line, 3);
    EXPECT_EQ(prediction_error(std::string(kHeader) + "size,test,0,1\nsize,test,0,2\n"),
              DatasetError::Code::DuplicateKey);
    EXPECT_EQ(prediction_error(std::string(kHeader) + "size,test,0,4\n"), DatasetError::Code::IndexOutOfRange);
    EXPECT_EQ(prediction_error(std::string(kHeader) + "size,test,0,-1\n"), DatasetError::Code::IndexOutOfRange);
    EXPECT_EQ(prediction_error(std::string("# regime=30\n") + kHeader), DatasetError::Code::ParseError);
    EXPECT_EQ(prediction_error("size,test,0,1\n"), DatasetError::Code::ParseError);
    EXPECT_EQ(prediction_error(std::string(kHeader) + "size,holdout,0,1\n"), DatasetError::Code::ParseError);
}

}  // namespace
}  // namespace cvr::dataset
