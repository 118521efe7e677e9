#include "atriaqc/datamodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "atriaqc/error.hpp"

namespace atriaqc {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "scan payloads are little-endian; big-endian hosts need byte swapping");

std::string_view attribute_key(Attribute a) {
  switch (a) {
    case Attribute::MyocardiumNulling: return "mn";
    case Attribute::Sharpness: return "s";
    case Attribute::AortaValveEnhancement: return "eat";
    case Attribute::FibrosisQuality: return "qa";
  }
  return "?";
}

Attribute attribute_from_key(std::string_view key) {
  for (Attribute a : kAllAttributes) {
    if (attribute_key(a) == key) return a;
  }
  fail(ErrorKind::Config, "unknown attribute key '" + std::string(key) + "'");
}

int RawScores::get(Attribute a) const {
  switch (a) {
    case Attribute::MyocardiumNulling: return mn;
    case Attribute::Sharpness: return s;
    case Attribute::AortaValveEnhancement: return eat;
    case Attribute::FibrosisQuality: return qa;
  }
  return 0;
}

void RawScores::validate() const {
  for (Attribute a : kAllAttributes) {
    const int v = get(a);
    require(v >= 1 && v <= 5, ErrorKind::Domain,
            "raw score " + std::string(attribute_key(a)) + "=" + std::to_string(v) +
                " outside 1..5");
  }
}

std::uint8_t AttributeLabels::get(Attribute a) const {
  switch (a) {
    case Attribute::MyocardiumNulling: return mn;
    case Attribute::Sharpness: return s;
    case Attribute::AortaValveEnhancement: return eat;
    case Attribute::FibrosisQuality: return qa;
  }
  return 0;
}

int binarize_score(int raw) {
  require(raw >= 1 && raw <= 5, ErrorKind::Domain,
          "score " + std::to_string(raw) + " outside 1..5");
  return raw >= 3 ? 1 : 0;
}

AttributeLabels binarize(const RawScores& raw) {
  return AttributeLabels{static_cast<std::uint8_t>(binarize_score(raw.mn)),
                         static_cast<std::uint8_t>(binarize_score(raw.s)),
                         static_cast<std::uint8_t>(binarize_score(raw.eat)),
                         static_cast<std::uint8_t>(binarize_score(raw.qa))};
}

std::span<const float> ScanRecord::slice(std::int64_t d) const {
  require(d >= 0 && d < dims.depth, ErrorKind::Domain, "slice index out of range");
  return std::span<const float>(volume).subspan(static_cast<std::size_t>(d * dims.slice_size()),
                                                static_cast<std::size_t>(dims.slice_size()));
}

std::span<const std::uint8_t> ScanRecord::mask_slice(std::int64_t d) const {
  require(blood_pool_mask.has_value(), ErrorKind::Data, "scan " + scan_id + " has no mask");
  require(d >= 0 && d < dims.depth, ErrorKind::Domain, "slice index out of range");
  return std::span<const std::uint8_t>(*blood_pool_mask)
      .subspan(static_cast<std::size_t>(d * dims.slice_size()),
               static_cast<std::size_t>(dims.slice_size()));
}

void ScanRecord::validate() const {
  require(!scan_id.empty(), ErrorKind::Data, "scan without id");
  require(dims.depth >= 1 && dims.height >= 1 && dims.width >= 1, ErrorKind::Data,
          "scan " + scan_id + " has empty dimensions");
  require(static_cast<std::int64_t>(volume.size()) == dims.voxel_count(), ErrorKind::Data,
          "scan " + scan_id + " volume size does not match dims");
  require(std::all_of(volume.begin(), volume.end(), [](float v) { return std::isfinite(v); }),
          ErrorKind::Data, "scan " + scan_id + " has non-finite voxels");
  if (blood_pool_mask) {
    require(static_cast<std::int64_t>(blood_pool_mask->size()) == dims.voxel_count(),
            ErrorKind::Data, "scan " + scan_id + " mask shape differs from volume");
    require(std::all_of(blood_pool_mask->begin(), blood_pool_mask->end(),
                        [](std::uint8_t v) { return v <= 1; }),
            ErrorKind::Data, "scan " + scan_id + " mask has values outside {0,1}");
  }
  if (raw_scores) {
    raw_scores->validate();
    require(labels.has_value() && *labels == binarize(*raw_scores), ErrorKind::Data,
            "scan " + scan_id + " labels disagree with raw scores");
  }
}

namespace {

// Fisher-Yates on raw mt19937_64 output so the permutation does not depend on
// the standard library's distribution implementation.
std::vector<std::string> seeded_shuffle(std::span<const std::string> ids, std::uint64_t seed) {
  std::vector<std::string> out(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = out.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(out[i - 1], out[j]);
  }
  return out;
}

void check_unique(std::span<const std::string> ids) {
  std::set<std::string> seen(ids.begin(), ids.end());
  require(seen.size() == ids.size(), ErrorKind::Config, "duplicate scan ids in split input");
}

}  // namespace

SplitSpec make_splits(std::span<const std::string> scan_ids, std::size_t test_count,
                      std::uint64_t seed) {
  require(scan_ids.size() > test_count, ErrorKind::Config,
          "need more scans (" + std::to_string(scan_ids.size()) + ") than test_count (" +
              std::to_string(test_count) + ")");
  const std::size_t remaining = scan_ids.size() - test_count;
  const std::size_t train = remaining * 9 / 10;
  return make_splits(scan_ids, test_count, remaining - train, seed);
}

SplitSpec make_splits(std::span<const std::string> scan_ids, std::size_t test_count,
                      std::size_t val_count, std::uint64_t seed) {
  require(scan_ids.size() > test_count + val_count, ErrorKind::Config,
          "split leaves no training scans");
  check_unique(scan_ids);
  const auto order = seeded_shuffle(scan_ids, seed);
  SplitSpec split;
  split.seed = seed;
  const auto test_end = order.begin() + static_cast<std::ptrdiff_t>(test_count);
  const auto train_end =
      order.end() - static_cast<std::ptrdiff_t>(val_count);
  split.test_ids.assign(order.begin(), test_end);
  split.train_ids.assign(test_end, train_end);
  split.val_ids.assign(train_end, order.end());
  return split;
}

// --- scan store ---------------------------------------------------------

namespace {

template <typename T>
void write_raw(const fs::path& file, const std::vector<T>& data) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot open " + file.string() + " for writing");
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(T)));
  require(out.good(), ErrorKind::Io, "short write to " + file.string());
}

template <typename T>
std::vector<T> read_raw(const fs::path& file, std::int64_t expected_count) {
  std::ifstream in(file, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorKind::Format, "cannot open " + file.string());
  const auto bytes = static_cast<std::int64_t>(in.tellg());
  const auto expected_bytes = expected_count * static_cast<std::int64_t>(sizeof(T));
  require(bytes == expected_bytes, ErrorKind::Format,
          file.filename().string() + " holds " + std::to_string(bytes) +
              " bytes but meta.json declares " + std::to_string(expected_bytes));
  std::vector<T> data(static_cast<std::size_t>(expected_count));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()), expected_bytes);
  require(in.good(), ErrorKind::Format, "short read from " + file.string());
  return data;
}

}  // namespace

fs::path write_scan(const fs::path& root, const ScanRecord& scan) {
  scan.validate();
  const fs::path dir = root / scan.scan_id;
  fs::create_directories(dir);

  json meta;
  meta["scan_id"] = scan.scan_id;
  meta["dims"] = {scan.dims.depth, scan.dims.height, scan.dims.width};
  meta["spacing_mm"] = {scan.spacing.z_mm, scan.spacing.y_mm, scan.spacing.x_mm};
  if (scan.raw_scores) {
    meta["raw_scores"] = {{"mn", scan.raw_scores->mn},
                          {"s", scan.raw_scores->s},
                          {"eat", scan.raw_scores->eat},
                          {"qa", scan.raw_scores->qa}};
  }
  {
    std::ofstream out(dir / "meta.json", std::ios::trunc);
    require(out.good(), ErrorKind::Io, "cannot write meta.json in " + dir.string());
    out << meta.dump(2) << '\n';
  }
  write_raw(dir / "volume.raw", scan.volume);
  if (scan.blood_pool_mask) {
    write_raw(dir / "mask.raw", *scan.blood_pool_mask);
  } else if (fs::exists(dir / "mask.raw")) {
    fs::remove(dir / "mask.raw");
  }
  return dir;
}

ScanRecord read_scan(const fs::path& scan_dir) {
  const fs::path meta_file = scan_dir / "meta.json";
  require(fs::exists(meta_file), ErrorKind::MissingArtifact, "missing " + meta_file.string());
  json meta;
  try {
    std::ifstream in(meta_file);
    meta = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "malformed " + meta_file.string() + ": " + e.what());
  }

  ScanRecord scan;
  try {
    scan.scan_id = meta.at("scan_id").get<std::string>();
    const auto dims = meta.at("dims").get<std::vector<std::int64_t>>();
    require(dims.size() == 3, ErrorKind::Format, "dims must have three entries");
    scan.dims = {dims[0], dims[1], dims[2]};
    const auto spacing = meta.at("spacing_mm").get<std::vector<double>>();
    require(spacing.size() == 3, ErrorKind::Format, "spacing_mm must have three entries");
    scan.spacing = {spacing[0], spacing[1], spacing[2]};
    if (meta.contains("raw_scores")) {
      const auto& rs = meta["raw_scores"];
      scan.raw_scores = RawScores{rs.at("mn").get<int>(), rs.at("s").get<int>(),
                                  rs.at("eat").get<int>(), rs.at("qa").get<int>()};
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "malformed " + meta_file.string() + ": " + e.what());
  }
  require(scan.dims.depth >= 1 && scan.dims.height >= 1 && scan.dims.width >= 1,
          ErrorKind::Format, "non-positive dims in " + meta_file.string());

  scan.volume = read_raw<float>(scan_dir / "volume.raw", scan.dims.voxel_count());
  if (fs::exists(scan_dir / "mask.raw")) {
    scan.blood_pool_mask = read_raw<std::uint8_t>(scan_dir / "mask.raw", scan.dims.voxel_count());
  }
  if (scan.raw_scores) {
    try {
      scan.labels = binarize(*scan.raw_scores);
    } catch (const Error& e) {
      fail(ErrorKind::Format, std::string(e.what()) + " in " + meta_file.string());
    }
  }
  try {
    scan.validate();
  } catch (const Error& e) {
    fail(ErrorKind::Format, e.what());
  }
  return scan;
}

// --- dataset manifest ---------------------------------------------------

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "unassigned";
}

Split split_from_name(std::string_view name) {
  for (Split s : {Split::Train, Split::Val, Split::Test, Split::Unassigned}) {
    if (split_name(s) == name) return s;
  }
  fail(ErrorKind::Format, "unknown split '" + std::string(name) + "'");
}

std::vector<std::string> DatasetManifest::ids(Split split) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.split == split) out.push_back(e.scan_id);
  }
  return out;
}

void DatasetManifest::apply(const SplitSpec& split) {
  auto assign = [&](const std::vector<std::string>& ids, Split s) {
    for (const auto& id : ids) {
      auto it = std::find_if(entries.begin(), entries.end(),
                             [&](const DatasetEntry& e) { return e.scan_id == id; });
      require(it != entries.end(), ErrorKind::Config, "split references unknown scan " + id);
      it->split = s;
    }
  };
  for (auto& e : entries) e.split = Split::Unassigned;
  assign(split.train_ids, Split::Train);
  assign(split.val_ids, Split::Val);
  assign(split.test_ids, Split::Test);
}

void DatasetManifest::write(const fs::path& file) const {
  json list = json::array();
  for (const auto& e : entries) {
    list.push_back({{"scan_id", e.scan_id}, {"path", e.path}, {"split", split_name(e.split)}});
  }
  std::ofstream out(file, std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + file.string());
  out << list.dump(2) << '\n';
}

DatasetManifest DatasetManifest::read(const fs::path& file) {
  require(fs::exists(file), ErrorKind::MissingArtifact, "missing dataset manifest " + file.string());
  DatasetManifest manifest;
  try {
    std::ifstream in(file);
    const json list = json::parse(in);
    require(list.is_array(), ErrorKind::Format, "dataset manifest must be a JSON list");
    for (const auto& item : list) {
      manifest.entries.push_back(DatasetEntry{item.at("scan_id").get<std::string>(),
                                              item.at("path").get<std::string>(),
                                              split_from_name(item.at("split").get<std::string>())});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "malformed " + file.string() + ": " + e.what());
  }
  return manifest;
}

std::vector<ScanRecord> load_split(const fs::path& root, Split split) {
  const auto manifest = DatasetManifest::read(root / kDatasetManifestName);
  std::vector<ScanRecord> scans;
  for (const auto& e : manifest.entries) {
    if (e.split == split) scans.push_back(read_scan(root / e.path));
  }
  return scans;
}

}  // namespace atriaqc
