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

#include "cvr/dataset_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <set>
#include <sstream>

#include "cvr/parallel.hpp"

namespace cvr::dataset {

namespace fs = std::filesystem;

namespace {

using Code = DatasetError::Code;

constexpr std::array<std::uint8_t, 8> kPngSignature = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t at) {
    return (std::uint32_t{in[at]} << 24) | (std::uint32_t{in[at + 1]} << 16) | (std::uint32_t{in[at + 2]} << 8) |
           std::uint32_t{in[at + 3]};
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[5], const std::uint8_t* data, std::size_t len) {
    put_u32(out, static_cast<std::uint32_t>(len));
    const std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    const uLong crc = crc32(0L, out.data() + start, static_cast<uInt>(len + 4));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    return pb <= pc ? b : c;
}

std::optional<std::uint64_t> parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return v;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? "" : f.substr(b, e - b + 1);
    }
    return out;
}

json kind_list(const std::vector<RelationKind>& kinds) {
    json j = json::array();
    for (RelationKind k : kinds) j.push_back(std::string(to_string(k)));
    return j;
}

RelationKind parse_kind(const json& j) {
    auto k = parse_relation_kind(j.get<std::string>());
    if (!k) throw DatasetError(Code::ManifestMismatch, "unknown relation kind '" + j.get<std::string>() + "'");
    return *k;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const renderer::Image& img) {
    const std::size_t stride = static_cast<std::size_t>(img.width) * 3;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), img.pixels.begin() + y * stride, img.pixels.begin() + (y + 1) * stride);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> z(zlen);
    if (compress2(z.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DatasetError(Code::IoError, "zlib compression failed");
    z.resize(zlen);

    std::vector<std::uint8_t> out(kPngSignature.begin(), kPngSignature.end());
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // depth 8, RGB, deflate, adaptive filters, no interlace
    put_chunk(out, "IHDR", ihdr.data(), ihdr.size());
    put_chunk(out, "IDAT", z.data(), z.size());
    put_chunk(out, "IEND", nullptr, 0);
    return out;
}

renderer::Image decode_png(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 8 || !std::equal(kPngSignature.begin(), kPngSignature.end(), bytes.begin()))
        throw DatasetError(Code::ParseError, "not a PNG file");
    std::size_t at = 8;
    int width = 0, height = 0;
    std::vector<std::uint8_t> idat;
    while (at + 12 <= bytes.size()) {
        const std::uint32_t len = get_u32(bytes, at);
        const std::string type(bytes.begin() + at + 4, bytes.begin() + at + 8);
        if (at + 12 + len > bytes.size()) throw DatasetError(Code::ParseError, "truncated PNG chunk");
        const std::uint8_t* data = bytes.data() + at + 8;
        const uLong crc = crc32(0L, bytes.data() + at + 4, len + 4);
        if (crc != get_u32(bytes, at + 8 + len)) throw DatasetError(Code::ParseError, "PNG CRC mismatch in " + type);
        if (type == "IHDR") {
            std::vector<std::uint8_t> h(data, data + len);
            width = static_cast<int>(get_u32(h, 0));
            height = static_cast<int>(get_u32(h, 4));
            if (h[8] != 8 || h[9] != 2 || h[12] != 0)
                throw DatasetError(Code::ParseError, "only 8-bit RGB non-interlaced PNG is supported");
        } else if (type == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (type == "IEND") {
            break;
        }
        at += 12 + len;
    }
    const std::size_t stride = static_cast<std::size_t>(width) * 3;
    std::vector<std::uint8_t> raw((stride + 1) * height);
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK || rawlen != raw.size())
        throw DatasetError(Code::ParseError, "corrupt PNG image data");
    renderer::Image img(width, height);
    std::vector<std::uint8_t> prev(stride, 0);
    for (int y = 0; y < height; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        std::uint8_t* row = raw.data() + y * (stride + 1) + 1;
        for (std::size_t i = 0; i < stride; ++i) {
            const int a = i >= 3 ? row[i - 3] : 0, b = prev[i], c = i >= 3 ? prev[i - 3] : 0;
            int pred = 0;
            switch (filter) {
                case 0: pred = 0; break;
                case 1: pred = a; break;
                case 2: pred = b; break;
                case 3: pred = (a + b) / 2; break;
                case 4: pred = paeth(a, b, c); break;
                default: throw DatasetError(Code::ParseError, "unknown PNG filter");
            }
            row[i] = static_cast<std::uint8_t>(row[i] + pred);
        }
        std::copy(row, row + stride, img.pixels.begin() + y * stride);
        prev.assign(row, row + stride);
    }
    return img;
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError(Code::IoError, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DatasetError(Code::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DatasetError(Code::IoError, "write failed for " + path.string());
}

void write_file(const fs::path& path, const std::string& text) {
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

json scene_to_json(const SceneGraph& g) {
    json objects = json::array();
    for (const auto& [id, o] : g.objects) {
        json jo = {{"id", id},
                   {"shape_seed", o.shape_seed},
                   {"complexity", o.complexity},
                   {"position", {o.position.x, o.position.y}},
                   {"size", o.size},
                   {"color", o.color},
                   {"rotation", o.rotation},
                   {"flip", o.flip}};
        const bool generated = o.complexity >= geometry::kMinComplexity && o.complexity <= geometry::kMaxComplexity &&
                               geometry::gen_contour(o.shape_seed, o.complexity) == o.base_contour;
        if (!generated) {
            json v = json::array();
            for (const auto& p : o.base_contour.vertices) v.push_back({p.x, p.y});
            jo["vertices"] = std::move(v);
        }
        objects.push_back(std::move(jo));
    }
    json rels = json::array();
    for (const auto& [id, r] : g.relations) {
        json jr = {{"id", id},
                   {"kind", r.kind ? json(std::string(to_string(*r.kind))) : json(nullptr)},
                   {"members", r.members}};
        if (!r.attributes.empty()) jr["attributes"] = r.attributes;
        rels.push_back(std::move(jr));
    }
    return {{"objects", std::move(objects)},
            {"relations", std::move(rels)},
            {"z_order", g.z_order},
            {"achromatic", g.achromatic}};
}

SceneGraph scene_from_json(const json& j) {
    SceneGraph g;
    for (const auto& jo : j.at("objects")) {
        SceneObject o;
        o.shape_seed = jo.at("shape_seed").get<std::uint64_t>();
        o.complexity = jo.at("complexity").get<int>();
        if (jo.contains("vertices")) {
            for (const auto& v : jo["vertices"]) o.base_contour.vertices.push_back({v.at(0).get<double>(), v.at(1).get<double>()});
        } else {
            o.base_contour = geometry::gen_contour(o.shape_seed, o.complexity);
        }
        o.position = {jo.at("position").at(0).get<double>(), jo.at("position").at(1).get<double>()};
        o.size = jo.at("size").get<double>();
        o.color = jo.at("color").get<double>();
        o.rotation = jo.at("rotation").get<double>();
        o.flip = jo.at("flip").get<bool>();
        g.objects[jo.at("id").get<NodeId>()] = std::move(o);
    }
    for (const auto& jr : j.at("relations")) {
        RelationNode r;
        if (!jr.at("kind").is_null()) {
            auto k = parse_relation_kind(jr["kind"].get<std::string>());
            if (!k) throw DatasetError(Code::ParseError, "unknown relation kind " + jr["kind"].dump());
            r.kind = *k;
        }
        r.members = jr.at("members").get<std::vector<NodeId>>();
        if (jr.contains("attributes")) r.attributes = jr["attributes"].get<std::map<std::string, double>>();
        g.relations[jr.at("id").get<NodeId>()] = std::move(r);
    }
    g.z_order = j.at("z_order").get<std::vector<NodeId>>();
    g.achromatic = j.value("achromatic", false);
    return g;
}

json problem_to_json(const ProblemSample& s) {
    json panels = json::array();
    for (const auto& p : s.panels) panels.push_back(scene_to_json(p));
    return {{"rule_id", s.rule_id},
            {"split", std::string(generator::to_string(s.split))},
            {"sample_index", s.sample_index},
            {"master_seed", s.master_seed},
            {"sample_seed", s.sample_seed},
            {"outlier_index", s.outlier_index},
            {"difficulty", s.difficulty},
            {"attempts", s.attempts},
            {"panels", std::move(panels)}};
}

ProblemSample problem_from_json(const json& j) {
    ProblemSample s;
    s.rule_id = j.at("rule_id").get<std::string>();
    auto split = generator::parse_split(j.at("split").get<std::string>());
    if (!split) throw DatasetError(Code::ParseError, "unknown split " + j["split"].dump());
    s.split = *split;
    s.sample_index = j.at("sample_index").get<std::uint64_t>();
    s.master_seed = j.at("master_seed").get<std::uint64_t>();
    s.sample_seed = j.at("sample_seed").get<std::uint64_t>();
    s.outlier_index = j.at("outlier_index").get<int>();
    s.difficulty = j.at("difficulty").get<int>();
    s.attempts = j.value("attempts", 1);
    const auto& panels = j.at("panels");
    if (panels.size() != 4) throw DatasetError(Code::ParseError, "a problem has exactly 4 panels");
    for (std::size_t p = 0; p < 4; ++p) s.panels[p] = scene_from_json(panels[p]);
    return s;
}

std::string serialize_problem(const ProblemSample& s) { return problem_to_json(s).dump() + "\n"; }

ProblemSample parse_problem(const std::string& text) {
    try {
        return problem_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw DatasetError(Code::ParseError, std::string("malformed sidecar: ") + e.what());
    }
}

RuleRecord rule_record(const rules::RegistryEntry& e) {
    RuleRecord r;
    r.id = e.id;
    r.dsl = rules::print_rule(e.spec);
    r.random.assign(e.options.random_kinds.begin(), e.options.random_kinds.end());
    r.generalization = e.options.generalization;
    return r;
}

rules::GenerationProgram compile_record(const RuleRecord& r) {
    rules::CompileOptions options;
    options.random_kinds = {r.random.begin(), r.random.end()};
    options.generalization = r.generalization;
    return rules::compile(rules::parse_rule(r.dsl), options);
}

json manifest_to_json(const DatasetManifest& m) {
    json rules = json::array();
    for (const auto& r : m.rules) {
        json jr = {{"id", r.id}, {"dsl", r.dsl}, {"random", kind_list(r.random)}};
        if (r.generalization) {
            jr["generalization_variant"] = {{"swap", std::string(to_string(r.generalization->swap))},
                                            {"range",
                                             {{"attribute", std::string(to_string(r.generalization->range_attribute))},
                                              {"min", r.generalization->range.lo},
                                              {"max", r.generalization->range.hi}}}};
        }
        rules.push_back(std::move(jr));
    }
    json counts = json::object();
    for (const auto& [rule, splits] : m.counts) {
        json js = json::object();
        for (const auto& [split, n] : splits) js[std::string(generator::to_string(split))] = n;
        counts[rule] = std::move(js);
    }
    return {{"version", m.version},       {"master_seed", m.master_seed}, {"image_size", m.image_size},
            {"generator_build", m.generator_build}, {"rules", std::move(rules)}, {"counts", std::move(counts)}};
}

DatasetManifest manifest_from_json(const json& j) {
    DatasetManifest m;
    try {
        m.version = j.at("version").get<int>();
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.image_size = j.at("image_size").get<int>();
        m.generator_build = j.at("generator_build").get<std::string>();
        for (const auto& jr : j.at("rules")) {
            RuleRecord r;
            r.id = jr.at("id").get<std::string>();
            r.dsl = jr.at("dsl").get<std::string>();
            for (const auto& k : jr.at("random")) r.random.push_back(parse_kind(k));
            if (jr.contains("generalization_variant")) {
                const auto& v = jr["generalization_variant"];
                rules::GeneralizationVariant g;
                g.swap = parse_kind(v.at("swap"));
                g.range_attribute = parse_kind(v.at("range").at("attribute"));
                g.range = {v.at("range").at("min").get<double>(), v.at("range").at("max").get<double>()};
                r.generalization = g;
            }
            m.rules.push_back(std::move(r));
        }
        for (const auto& [rule, splits] : j.at("counts").items()) {
            for (const auto& [name, n] : splits.items()) {
                auto split = generator::parse_split(name);
                if (!split) throw DatasetError(Code::ManifestMismatch, "unknown split '" + name + "'");
                m.counts[rule][*split] = n.get<std::size_t>();
            }
        }
    } catch (const json::exception& e) {
        throw DatasetError(Code::ManifestMismatch, std::string("malformed dataset manifest: ") + e.what());
    }
    return m;
}

DatasetManifest read_manifest(const fs::path& root) {
    const auto bytes = read_file(root / "manifest.json");
    try {
        return manifest_from_json(json::parse(bytes.begin(), bytes.end()));
    } catch (const json::exception& e) {
        throw DatasetError(Code::ManifestMismatch, std::string("malformed dataset manifest: ") + e.what());
    }
}

RenderedSample render_sample(ProblemSample sample, int image_size) {
    RenderedSample r;
    for (int p = 0; p < 4; ++p) r.pngs[p] = encode_png(renderer::rasterize(sample.panels[p], image_size, image_size));
    r.sidecar = serialize_problem(sample);
    r.sample = std::move(sample);
    return r;
}

fs::path split_dir(const fs::path& root, const std::string& rule_id, Split split) {
    return root / rule_id / std::string(generator::to_string(split));
}

std::string panel_file(std::uint64_t index, int panel) {
    return std::to_string(index) + "_" + std::to_string(panel) + ".png";
}

std::string sidecar_file(std::uint64_t index) { return std::to_string(index) + ".scene.json"; }

DatasetWriter::DatasetWriter(fs::path root, std::uint64_t master_seed, int image_size) : root_(std::move(root)) {
    manifest_.master_seed = master_seed;
    manifest_.image_size = image_size;
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec) throw DatasetError(Code::IoError, "cannot create " + root_.string() + ": " + ec.message());
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::add_rule(const RuleRecord& rule) {
    for (const auto& r : manifest_.rules)
        if (r.id == rule.id) return;
    manifest_.rules.push_back(rule);
}

void DatasetWriter::begin_split(const std::string& rule_id, Split split) {
    if (current_) end_split();
    const fs::path dir = split_dir(root_, rule_id, split);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw DatasetError(Code::IoError, "cannot create " + dir.string() + ": " + ec.message());
    labels_.open(dir / "labels.csv", std::ios::binary | std::ios::trunc);
    if (!labels_) throw DatasetError(Code::IoError, "cannot write " + (dir / "labels.csv").string());
    labels_ << "index,outlier_index\n";
    current_ = {rule_id, split};
    written_ = 0;
}

void DatasetWriter::add(const RenderedSample& s) {
    if (!current_) throw std::logic_error("add() outside begin_split/end_split");
    if (s.sample.sample_index != written_)
        throw std::logic_error("samples must arrive in index order");
    const fs::path dir = split_dir(root_, current_->first, current_->second);
    for (int p = 0; p < 4; ++p) write_file(dir / panel_file(s.sample.sample_index, p), s.pngs[p]);
    write_file(dir / sidecar_file(s.sample.sample_index), s.sidecar);
    labels_ << s.sample.sample_index << ',' << s.sample.outlier_index << '\n';
    ++written_;
}

void DatasetWriter::end_split() {
    if (!current_) return;
    labels_.close();
    if (!labels_) throw DatasetError(Code::IoError, "failed to finish labels.csv");
    manifest_.counts[current_->first][current_->second] = written_;
    current_.reset();
}

DatasetManifest DatasetWriter::finish() {
    end_split();
    write_file(root_ / "manifest.json", manifest_to_json(manifest_).dump(2) + "\n");
    return manifest_;
}

DatasetManifest write_dataset(const fs::path& root, const std::vector<rules::RegistryEntry>& rules,
                              const GenerateOptions& options, const std::function<void(const SplitStats&)>& on_split) {
    DatasetWriter writer(root, options.master_seed, options.image_size);
    for (const auto& e : rules) {
        writer.add_rule(rule_record(e));
        for (Split split : generator::kAllSplits) {
            auto it = options.counts.find(split);
            if (it == options.counts.end() || it->second == 0) continue;
            const auto start = std::chrono::steady_clock::now();
            const generator::SplitRequest req{e.id, split, it->second, options.master_seed};
            const rules::GenerationProgram program = generator::program_for(e.program, split);
            SplitStats stats{e.id, split, 0, 0, 0.0};
            writer.begin_split(e.id, split);
            ordered_parallel_for(
                req.count, options.workers,
                [&](std::uint64_t i) {
                    ProblemSample s;
                    try {
                        s = generator::generate_problem(
                            program, generator::sample_seed(req.master_seed, req.rule_id, split, i));
                    } catch (const generator::GenerationFailed& f) {
                        throw f.with_index(i);
                    }
                    s.rule_id = req.rule_id;
                    s.split = split;
                    s.master_seed = req.master_seed;
                    s.sample_index = i;
                    return render_sample(std::move(s), options.image_size);
                },
                [&](RenderedSample&& r) {
                    stats.attempts += static_cast<std::size_t>(r.sample.attempts);
                    ++stats.samples;
                    writer.add(r);
                });
            writer.end_split();
            stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            if (on_split) on_split(stats);
        }
    }
    return writer.finish();
}

std::vector<int> read_labels_csv(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw DatasetError(Code::IoError, "cannot read " + file.string());
    std::string line;
    int lineno = 1;
    if (!std::getline(in, line) || split_csv(line) != std::vector<std::string>{"index", "outlier_index"})
        throw DatasetError(Code::ParseError, "expected header 'index,outlier_index' in " + file.string(), lineno);
    std::vector<int> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        if (f.size() != 2) throw DatasetError(Code::ParseError, "expected 2 fields in " + file.string(), lineno);
        auto idx = parse_u64(f[0]);
        auto label = parse_u64(f[1]);
        if (!idx || !label) throw DatasetError(Code::ParseError, "malformed row in " + file.string(), lineno);
        if (*idx != out.size()) throw DatasetError(Code::ParseError, "indices must be consecutive from 0", lineno);
        if (*label > 3) throw DatasetError(Code::IndexOutOfRange, "outlier_index must be in 0..3", lineno);
        out.push_back(static_cast<int>(*label));
    }
    return out;
}

std::map<SampleKey, int> read_labels(const fs::path& root) {
    const DatasetManifest m = read_manifest(root);
    std::map<SampleKey, int> out;
    for (const auto& [rule, splits] : m.counts)
        for (const auto& [split, n] : splits) {
            const auto labels = read_labels_csv(split_dir(root, rule, split) / "labels.csv");
            for (std::size_t i = 0; i < labels.size(); ++i) out[{rule, split, i}] = labels[i];
        }
    return out;
}

VerifyReport verify(const fs::path& root, std::size_t rederive) {
    VerifyReport report;
    const DatasetManifest m = read_manifest(root);
    auto flag = [&](std::string msg) { report.discrepancies.push_back(std::move(msg)); };

    std::map<std::string, const RuleRecord*> records;
    for (const auto& r : m.rules) records[r.id] = &r;

    std::vector<SampleKey> all;
    for (const auto& [rule, splits] : m.counts) {
        if (!records.contains(rule)) flag("counts list rule '" + rule + "' that the manifest does not define");
        for (const auto& [split, n] : splits) {
            const fs::path dir = split_dir(root, rule, split);
            const std::string where = rule + "/" + std::string(generator::to_string(split));
            std::vector<int> labels;
            try {
                labels = read_labels_csv(dir / "labels.csv");
            } catch (const DatasetError& e) {
                flag(where + ": " + e.what());
                continue;
            }
            if (labels.size() != n)
                flag(where + ": labels.csv has " + std::to_string(labels.size()) + " rows, manifest says " +
                     std::to_string(n));
            std::size_t files = 0;
            std::error_code ec;
            for (auto it = fs::directory_iterator(dir, ec); !ec && it != fs::directory_iterator(); it.increment(ec))
                ++files;
            const std::size_t expected = 5 * n + 1;
            if (files != expected)
                flag(where + ": " + std::to_string(files) + " files on disk, expected " + std::to_string(expected));
            report.files += files;
            for (std::size_t i = 0; i < n; ++i) {
                for (int p = 0; p < 4; ++p)
                    if (!fs::exists(dir / panel_file(i, p))) flag(where + ": missing " + panel_file(i, p));
                if (!fs::exists(dir / sidecar_file(i))) flag(where + ": missing " + sidecar_file(i));
                all.push_back({rule, split, i});
            }
            report.samples += n;
        }
    }

    const std::size_t picks = std::min(rederive, all.size());
    std::map<std::pair<std::string, Split>, rules::GenerationProgram> programs;
    for (std::size_t k = 0; k < picks; ++k) {
        const SampleKey& key = all[k * all.size() / picks];
        const fs::path dir = split_dir(root, key.rule_id, key.split);
        const std::string where = key.rule_id + "/" + std::string(generator::to_string(key.split)) + "/" +
                                  std::to_string(key.index);
        auto rec = records.find(key.rule_id);
        if (rec == records.end()) continue;
        try {
            auto pit = programs.find({key.rule_id, key.split});
            if (pit == programs.end())
                pit = programs.emplace(std::pair{key.rule_id, key.split},
                                       generator::program_for(compile_record(*rec->second), key.split))
                          .first;
            ProblemSample s = generator::generate_problem(
                pit->second, generator::sample_seed(m.master_seed, key.rule_id, key.split, key.index));
            s.rule_id = key.rule_id;
            s.split = key.split;
            s.master_seed = m.master_seed;
            s.sample_index = key.index;
            const RenderedSample r = render_sample(std::move(s), m.image_size);
            const auto sidecar = read_file(dir / sidecar_file(key.index));
            if (std::string(sidecar.begin(), sidecar.end()) != r.sidecar) flag(where + ": sidecar differs on regeneration");
            for (int p = 0; p < 4; ++p)
                if (read_file(dir / panel_file(key.index, p)) != r.pngs[p])
                    flag(where + ": panel " + std::to_string(p) + " differs on re-render");
            const auto labels = read_labels_csv(dir / "labels.csv");
            if (key.index < labels.size() && labels[key.index] != r.sample.outlier_index)
                flag(where + ": label differs from regenerated outlier");
            ++report.rederived;
        } catch (const std::exception& e) {
            flag(where + ": regeneration failed: " + e.what());
        }
    }
    return report;
}

PredictionFile parse_predictions(const std::string& text) {
    PredictionFile out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    bool header = false;
    std::set<SampleKey> seen;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto body = line.substr(line.find_first_not_of("# "));
            const auto eq = body.find('=');
            if (eq == std::string::npos) continue;
            const std::string k = body.substr(0, eq), v = body.substr(eq + 1);
            if (k == "model") {
                out.model = v;
            } else if (k == "regime") {
                auto n = parse_u64(v);
                if (!n || std::find(kRegimes.begin(), kRegimes.end(), static_cast<int>(*n)) == kRegimes.end())
                    throw DatasetError(Code::ParseError, "regime must be one of 20, 50, 100, 200, 500, 1000", lineno);
                out.regime = static_cast<int>(*n);
            }
            continue;
        }
        const auto f = split_csv(line);
        if (!header) {
            if (f != std::vector<std::string>{"rule_id", "split", "sample_index", "predicted_index"})
                throw DatasetError(Code::ParseError, "expected header 'rule_id,split,sample_index,predicted_index'",
                                   lineno);
            header = true;
            continue;
        }
        if (f.size() != 4) throw DatasetError(Code::ParseError, "expected 4 fields", lineno);
        auto split = generator::parse_split(f[1]);
        auto idx = parse_u64(f[2]);
        std::int64_t pred = 0;
        auto [p, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), pred);
        if (f[0].empty() || !split || !idx || ec != std::errc() || p != f[3].data() + f[3].size())
            throw DatasetError(Code::ParseError, "malformed row", lineno);
        if (pred < 0 || pred > 3) throw DatasetError(Code::IndexOutOfRange, "predicted_index must be in 0..3", lineno);
        SampleKey key{f[0], *split, *idx};
        if (!seen.insert(key).second)
            throw DatasetError(Code::DuplicateKey, "duplicate prediction for " + f[0] + "/" + f[1] + "/" + f[2], lineno);
        out.rows.push_back({std::move(key), static_cast<int>(pred)});
    }
    if (!header) throw DatasetError(Code::ParseError, "missing header", std::max(lineno, 1));
    return out;
}

PredictionFile read_predictions(const fs::path& path) {
    const auto bytes = read_file(path);
    return parse_predictions(std::string(bytes.begin(), bytes.end()));
}

std::string format_predictions(const PredictionFile& p) {
    std::ostringstream out;
    if (!p.model.empty()) out << "# model=" << p.model << "\n";
    if (p.regime) out << "# regime=" << *p.regime << "\n";
    out << "rule_id,split,sample_index,predicted_index\n";
    for (const auto& r : p.rows)
        out << r.key.rule_id << ',' << generator::to_string(r.key.split) << ',' << r.key.index << ','
            << r.predicted_index << "\n";
    return out.str();
}

void write_predictions(const fs::path& path, const PredictionFile& p) { write_file(path, format_predictions(p)); }

}  // namespace cvr::dataset
