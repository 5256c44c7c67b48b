#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aldk/phantom.hpp"

namespace aldk {

struct Dataset {
  std::vector<PairRecord> pairs;
  std::size_t size() const noexcept { return pairs.size(); }
  Shape spatial() const;
};

/// Paths are relative to the manifest's directory unless absolute.
struct ManifestRecord {
  std::string moving, fixed, moving_mask, fixed_mask;
  std::string ground_truth;
  std::string teacher;  // externally distilled field; may equal ground_truth
};

struct DatasetManifest {
  std::filesystem::path base_dir;
  std::uint64_t seed = 0;
  PhantomSpec phantom;
  FieldSpec field;
  std::vector<ManifestRecord> records;
};

nlohmann::json to_json(const PhantomSpec& s);
nlohmann::json to_json(const FieldSpec& s);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
FieldSpec field_spec_from_json(const nlohmann::json& j);

/// Record i is generated from its own child seed, so any subset can be
/// regenerated independently.
PairRecord generate_record(const PhantomSpec& spec, const FieldSpec& field, std::uint64_t seed, std::size_t index);
Dataset make_dataset(const PhantomSpec& spec, const FieldSpec& field, std::size_t count, std::uint64_t seed);

/// Writes VOL1 files plus manifest.json into `out_dir`; returns the manifest.
DatasetManifest write_dataset(const PhantomSpec& spec, const FieldSpec& field, std::size_t count, std::uint64_t seed,
                              const std::filesystem::path& out_dir);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);
std::filesystem::path resolve(const DatasetManifest& m, const std::string& relative);

/// Loads images, masks and ground-truth fields of every record.
Dataset load_dataset(const DatasetManifest& manifest);

/// Source of the teacher deformation for training pair i.
class TeacherProvider {
 public:
  virtual ~TeacherProvider() = default;
  virtual std::size_t size() const = 0;
  virtual const DisplacementField& teacher(std::size_t index) const = 0;
};

class FieldListTeacher final : public TeacherProvider {
 public:
  explicit FieldListTeacher(std::vector<DisplacementField> fields) : fields_(std::move(fields)) {}
  std::size_t size() const override { return fields_.size(); }
  const DisplacementField& teacher(std::size_t index) const override { return fields_.at(index); }

 private:
  std::vector<DisplacementField> fields_;
};

std::unique_ptr<TeacherProvider> teacher_from_ground_truth(const Dataset& dataset);
std::unique_ptr<TeacherProvider> teacher_from_ground_truth(const DatasetManifest& manifest);
/// Reads each record's `teacher` field file, checking extents against the pair.
std::unique_ptr<TeacherProvider> teacher_from_files(const DatasetManifest& manifest);

}  // namespace aldk
