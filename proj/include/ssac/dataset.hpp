#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ssac/datagen.hpp"
#include "ssac/tensor.hpp"

namespace ssac {
inline namespace SSAC_ABI {

inline constexpr std::string_view kGeneratorVersion = "ssac-datagen 1";
inline constexpr std::string_view kSplits[] = {"train", "val", "test", "new"};

struct SampleRecord {
  std::string id;
  /// Relative to the manifest's directory.
  std::string path;
  /// Class index for known classes; -1 marks the new-type pool.
  int label = 0;
  std::string class_name;
  std::string split;
  std::string sha256;
  std::size_t points = 0;
  std::uint64_t seed = 0;
  /// Present for generated data; user-supplied data may omit it.
  std::optional<AnomalySpec> spec;
};

struct DatasetManifest {
  std::string generator_version{kGeneratorVersion};
  std::uint64_t master_seed = 0;
  /// Known class names, indexed by label.
  std::vector<std::string> class_names;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<SampleRecord> samples;
  /// Directory the manifest was read from; not serialized.
  std::string base_dir;

  std::vector<const SampleRecord*> split(std::string_view name) const;
  std::size_t classes() const { return class_names.size(); }
  std::string resolve(const SampleRecord& r) const;
  /// Unique ids, known split names, labels within range and consistent with
  /// class names, new-type samples only in the "new" split.
  void validate() const;
};

std::string manifest_json(const DatasetManifest& m);
void write_manifest(const DatasetManifest& m, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

/// Writes samples/<id>.<ext> and manifest.json under `out_dir`. Sample i is a
/// pure function of (config, master_seed, i); `threads` only changes speed.
DatasetManifest generate_dataset(const GeneratorConfig& cfg, std::uint64_t master_seed, const std::string& out_dir,
                                 int threads = 1);

/// Same pool, new per-class train/val/test assignment drawn from `seed`. The
/// new-type pool is untouched.
DatasetManifest resplit(const DatasetManifest& m, std::uint64_t seed, std::size_t train_per_class,
                        std::size_t val_per_class, std::size_t test_per_class);

/// Point clouds of one split held in memory, all with the same point count.
struct PointSet {
  std::vector<std::vector<Real>> clouds;  // N*3 each, row-major
  std::vector<int> labels;
  std::vector<std::string> ids;
  std::size_t points = 0;

  std::size_t size() const { return clouds.size(); }
  void add(std::string id, int label, const Points& pts);
  /// [B x N x 3] for the given sample indices.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor single(std::size_t index) const;
};

/// Loads every sample of a split; with `verify`, digests are checked.
PointSet load_split(const DatasetManifest& m, std::string_view split, bool verify = true);

}  // namespace SSAC_ABI
}  // namespace ssac
