#include "aldk/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "aldk/errors.hpp"
#include "aldk/vol_io.hpp"

namespace aldk {

using nlohmann::json;

Shape Dataset::spatial() const {
  if (pairs.empty()) throw ConfigError("empty dataset");
  return pairs.front().moving.spatial();
}

json to_json(const PhantomSpec& s) {
  return {{"extent", s.extent},
          {"blob_count", s.blob_count},
          {"blob_amplitude", {s.blob_amplitude_min, s.blob_amplitude_max}},
          {"blob_width", {s.blob_width_min, s.blob_width_max}},
          {"organ_axis", {s.organ_axis_min, s.organ_axis_max}},
          {"organ_intensity", {s.organ_intensity_min, s.organ_intensity_max}}};
}

json to_json(const FieldSpec& s) {
  return {{"control_extent", s.control_extent}, {"amplitude", s.amplitude}, {"max_derivative", s.max_derivative}};
}

PhantomSpec phantom_spec_from_json(const json& j) {
  PhantomSpec s;
  s.extent = j.at("extent").get<std::int64_t>();
  s.blob_count = j.at("blob_count").get<int>();
  s.blob_amplitude_min = j.at("blob_amplitude").at(0).get<double>();
  s.blob_amplitude_max = j.at("blob_amplitude").at(1).get<double>();
  s.blob_width_min = j.at("blob_width").at(0).get<double>();
  s.blob_width_max = j.at("blob_width").at(1).get<double>();
  s.organ_axis_min = j.at("organ_axis").at(0).get<double>();
  s.organ_axis_max = j.at("organ_axis").at(1).get<double>();
  s.organ_intensity_min = j.at("organ_intensity").at(0).get<double>();
  s.organ_intensity_max = j.at("organ_intensity").at(1).get<double>();
  return s;
}

FieldSpec field_spec_from_json(const json& j) {
  FieldSpec s;
  s.control_extent = j.at("control_extent").get<int>();
  s.amplitude = j.at("amplitude").get<double>();
  s.max_derivative = j.at("max_derivative").get<double>();
  return s;
}

PairRecord generate_record(const PhantomSpec& spec, const FieldSpec& field, std::uint64_t seed, std::size_t index) {
  SplitMix64 stream(child_seed(seed, index));
  return make_pair(spec, field, stream);
}

Dataset make_dataset(const PhantomSpec& spec, const FieldSpec& field, std::size_t count, std::uint64_t seed) {
  Dataset ds;
  ds.pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) ds.pairs.push_back(generate_record(spec, field, seed, i));
  return ds;
}

DatasetManifest write_dataset(const PhantomSpec& spec, const FieldSpec& field, std::size_t count, std::uint64_t seed,
                              const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  DatasetManifest m;
  m.base_dir = out_dir;
  m.seed = seed;
  m.phantom = spec;
  m.field = field;
  for (std::size_t i = 0; i < count; ++i) {
    const PairRecord r = generate_record(spec, field, seed, i);
    char stem[32];
    std::snprintf(stem, sizeof stem, "pair_%04zu", i);
    const std::string s(stem);
    ManifestRecord rec{s + "_moving.vol",      s + "_fixed.vol", s + "_moving_mask.vol", s + "_fixed_mask.vol",
                       s + "_ground_truth.vol", s + "_ground_truth.vol"};
    write_vol(out_dir / rec.moving, r.moving);
    write_vol(out_dir / rec.fixed, r.fixed);
    write_vol(out_dir / rec.moving_mask, r.moving_mask);
    write_vol(out_dir / rec.fixed_mask, r.fixed_mask);
    write_vol(out_dir / rec.ground_truth, r.ground_truth);
    m.records.push_back(std::move(rec));
  }
  write_manifest(out_dir / "manifest.json", m);
  return m;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  json records = json::array();
  for (const auto& r : m.records)
    records.push_back({{"moving", r.moving},
                       {"fixed", r.fixed},
                       {"moving_mask", r.moving_mask},
                       {"fixed_mask", r.fixed_mask},
                       {"ground_truth", r.ground_truth},
                       {"teacher", r.teacher}});
  json j = {{"schema", 1}, {"seed", m.seed}, {"phantom", to_json(m.phantom)}, {"field", to_json(m.field)},
            {"records", records}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    if (j.at("schema").get<int>() != 1) throw FormatError(FormatError::Kind::Schema, "unsupported manifest schema");
    m.base_dir = path.parent_path();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.phantom = phantom_spec_from_json(j.at("phantom"));
    m.field = field_spec_from_json(j.at("field"));
    for (const auto& r : j.at("records")) {
      ManifestRecord rec{r.at("moving").get<std::string>(),     r.at("fixed").get<std::string>(),
                         r.at("moving_mask").get<std::string>(), r.at("fixed_mask").get<std::string>(),
                         r.at("ground_truth").get<std::string>(), r.value("teacher", std::string())};
      m.records.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw FormatError(FormatError::Kind::Schema, path.string() + ": " + e.what());
  }
  return m;
}

std::filesystem::path resolve(const DatasetManifest& m, const std::string& relative) {
  std::filesystem::path p(relative);
  return p.is_absolute() ? p : m.base_dir / p;
}

Dataset load_dataset(const DatasetManifest& m) {
  Dataset ds;
  for (const auto& r : m.records) {
    PairRecord p{read_volume(resolve(m, r.moving)), read_volume(resolve(m, r.fixed)),
                 read_mask(resolve(m, r.moving_mask)), read_mask(resolve(m, r.fixed_mask)),
                 read_field(resolve(m, r.ground_truth))};
    const Shape s = p.moving.spatial();
    if (p.fixed.spatial() != s || p.moving_mask.spatial() != s || p.fixed_mask.spatial() != s ||
        p.ground_truth.spatial() != s)
      throw ShapeError("record '" + r.moving + "': files do not share extents");
    if (!ds.pairs.empty() && s != ds.spatial()) throw ShapeError("record '" + r.moving + "': extent differs from dataset");
    ds.pairs.push_back(std::move(p));
  }
  return ds;
}

std::unique_ptr<TeacherProvider> teacher_from_ground_truth(const Dataset& dataset) {
  std::vector<DisplacementField> fields;
  for (const auto& p : dataset.pairs) fields.push_back(p.ground_truth);
  return std::make_unique<FieldListTeacher>(std::move(fields));
}

std::unique_ptr<TeacherProvider> teacher_from_ground_truth(const DatasetManifest& manifest) {
  std::vector<DisplacementField> fields;
  for (const auto& r : manifest.records) fields.push_back(read_field(resolve(manifest, r.ground_truth)));
  return std::make_unique<FieldListTeacher>(std::move(fields));
}

std::unique_ptr<TeacherProvider> teacher_from_files(const DatasetManifest& manifest) {
  std::vector<DisplacementField> fields;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    const auto& r = manifest.records[i];
    if (r.teacher.empty()) throw ConfigError("record " + std::to_string(i) + " has no teacher field");
    const auto path = resolve(manifest, r.teacher);
    if (!std::filesystem::exists(path))
      throw IoError("record " + std::to_string(i) + ": teacher field '" + path.string() + "' missing");
    DisplacementField f = read_field(path);
    const VolData moving = read_vol(resolve(manifest, r.moving));
    const Shape pair{moving.data.dim(1), moving.data.dim(2), moving.data.dim(3)};
    if (f.spatial() != pair)
      throw ShapeError("record " + std::to_string(i) + " ('" + r.teacher + "'): teacher extents " +
                       to_string(f.spatial()) + " do not match pair extents " + to_string(pair));
    fields.push_back(std::move(f));
  }
  return std::make_unique<FieldListTeacher>(std::move(fields));
}

}  // namespace aldk
