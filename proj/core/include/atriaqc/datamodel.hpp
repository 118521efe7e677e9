#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace atriaqc {

/// The four scored targets. The first three are the image-quality attributes
/// predicted by the attribute classifiers, the last is the fibrosis
/// assessment quality that the QA head predicts.
enum class Attribute : int {
  MyocardiumNulling = 0,
  Sharpness = 1,
  AortaValveEnhancement = 2,
  FibrosisQuality = 3,
};

inline constexpr std::array<Attribute, 4> kAllAttributes = {
    Attribute::MyocardiumNulling, Attribute::Sharpness,
    Attribute::AortaValveEnhancement, Attribute::FibrosisQuality};

/// Short keys used on disk and in reports: "mn", "s", "eat", "qa".
std::string_view attribute_key(Attribute a);
Attribute attribute_from_key(std::string_view key);

struct Dims3 {
  std::int64_t depth = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;

  std::int64_t slice_size() const { return height * width; }
  std::int64_t voxel_count() const { return depth * height * width; }
  bool operator==(const Dims3&) const = default;
};

struct Spacing {
  double z_mm = 2.5;
  double y_mm = 1.25;
  double x_mm = 1.25;
  bool operator==(const Spacing&) const = default;
};

/// Observer scores on the 1..5 scale.
struct RawScores {
  int mn = 3;
  int s = 3;
  int eat = 3;
  int qa = 3;

  int get(Attribute a) const;
  void validate() const;
  bool operator==(const RawScores&) const = default;
};

/// Binarized targets [a_mn, a_s, a_eat, y_qa]; 1 = diagnostic.
struct AttributeLabels {
  std::uint8_t mn = 0;
  std::uint8_t s = 0;
  std::uint8_t eat = 0;
  std::uint8_t qa = 0;

  std::uint8_t get(Attribute a) const;
  std::array<float, 4> as_array() const { return {float(mn), float(s), float(eat), float(qa)}; }
  bool operator==(const AttributeLabels&) const = default;
};

/// Returns 1 iff raw >= 3. Throws Domain for raw outside 1..5.
int binarize_score(int raw);
AttributeLabels binarize(const RawScores& raw);

/// One 3D scan. Volume and mask are stored C row-major as (d, h, w).
struct ScanRecord {
  std::string scan_id;
  Dims3 dims;
  std::vector<float> volume;
  Spacing spacing;
  std::optional<std::vector<std::uint8_t>> blood_pool_mask;
  std::optional<RawScores> raw_scores;
  std::optional<AttributeLabels> labels;

  std::span<const float> slice(std::int64_t d) const;
  std::span<const std::uint8_t> mask_slice(std::int64_t d) const;
  bool has_mask() const { return blood_pool_mask.has_value(); }
  bool has_labels() const { return labels.has_value(); }

  /// Throws Data if any invariant (finite volume, mask shape/values,
  /// label/score consistency) is violated.
  void validate() const;

  bool operator==(const ScanRecord&) const = default;
};

struct SplitSpec {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;

  bool operator==(const SplitSpec&) const = default;
};

/// Seeded shuffle; the first test_count ids go to test, then floor(0.9 R)
/// of the remaining R to train and the rest to val.
SplitSpec make_splits(std::span<const std::string> scan_ids, std::size_t test_count,
                      std::uint64_t seed);

/// Same shuffle with an explicit validation size instead of the 90:10 rule.
SplitSpec make_splits(std::span<const std::string> scan_ids, std::size_t test_count,
                      std::size_t val_count, std::uint64_t seed);

/// Writes `<root>/<scan_id>/{meta.json,volume.raw[,mask.raw]}`.
std::filesystem::path write_scan(const std::filesystem::path& root, const ScanRecord& scan);
/// Reads a scan directory written by write_scan. Throws Format on malformed input.
ScanRecord read_scan(const std::filesystem::path& scan_dir);

enum class Split { Train, Val, Test, Unassigned };
std::string_view split_name(Split s);
Split split_from_name(std::string_view name);

struct DatasetEntry {
  std::string scan_id;
  std::string path;  // relative to the manifest's directory
  Split split = Split::Unassigned;
  bool operator==(const DatasetEntry&) const = default;
};

/// `dataset.json`: the list of scan directories with their split.
struct DatasetManifest {
  std::vector<DatasetEntry> entries;

  std::vector<std::string> ids(Split split) const;
  void apply(const SplitSpec& split);

  void write(const std::filesystem::path& file) const;
  static DatasetManifest read(const std::filesystem::path& file);
};

inline constexpr const char* kDatasetManifestName = "dataset.json";

/// Loads every scan of a split listed in `<root>/dataset.json`.
std::vector<ScanRecord> load_split(const std::filesystem::path& root, Split split);

}  // namespace atriaqc
