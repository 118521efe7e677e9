#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "atriaqc/datamodel.hpp"

namespace atriaqc {

/// Synthetic LGE-like scan generator. Every voxel is a function of
/// (seed, index); raw scores are coupled to qa_raw with target Pearson
/// correlation `attribute_coupling`.
struct PhantomConfig {
  Dims3 dims{24, 128, 128};
  int n_scans = 120;
  double attribute_coupling = 0.75;
  double noise_sigma = 0.03;
  std::uint64_t seed = 0;
  double mask_fraction = 1.0;   // leading scans carry a blood-pool mask
  double label_fraction = 1.0;  // trailing scans carry raw scores

  void validate() const;
};

/// Analytic layout of one phantom; all lengths in voxels.
struct PhantomGeometry {
  double la_center_z = 0, la_center_y = 0, la_center_x = 0;
  double la_radius_z = 0, la_radius_y = 0, la_radius_x = 0;
  double wall_thickness = 0;
  double lv_center_y = 0, lv_center_x = 0, lv_radius = 0, myo_thickness = 0;
  double ao_center_y = 0, ao_center_x = 0, ao_radius = 0, ao_rim = 0;
  double body_radius_y = 0, body_radius_x = 0;

  /// Normalized ellipsoid radius; <= 1 inside the LA blood pool.
  double la_radius_at(double z, double y, double x) const;
  bool in_la(std::int64_t d, std::int64_t h, std::int64_t w) const;
  bool in_la_wall(std::int64_t d, std::int64_t h, std::int64_t w) const;
  bool in_myocardium(std::int64_t h, std::int64_t w) const;
  bool in_aorta_rim(std::int64_t h, std::int64_t w) const;
  /// First and last slice intersecting the LA ellipsoid (inclusive).
  std::pair<std::int64_t, std::int64_t> la_slice_band(std::int64_t depth) const;
};

PhantomGeometry phantom_geometry(const PhantomConfig& config, int index);

/// Raw scores drawn for scan `index` (before any override).
RawScores phantom_scores(const PhantomConfig& config, int index);

/// Noise scale of the integer perturbation added to qa_raw so that the
/// expected Pearson correlation of each attribute with qa_raw equals rho.
double coupling_noise_sigma(double rho);
/// Expected Pearson(attribute, qa) under the generator's score model.
double expected_coupling(double noise_sigma);

/// Intensity maps from raw score to rendering parameter (affine in raw).
double myocardium_intensity(int mn_raw);
double blur_sigma_px(int s_raw);  // at 128 px in-plane; scaled with width
double aorta_rim_intensity(int eat_raw);
double wall_speckle_contrast(int qa_raw);

ScanRecord generate_scan(const PhantomConfig& config, int index,
                         std::optional<RawScores> forced_scores = std::nullopt);

struct PhantomSummary {
  std::vector<std::string> scan_ids;
  std::vector<std::optional<RawScores>> scores;
  double pearson_mn = 0, pearson_s = 0, pearson_eat = 0;  // NaN when undefined
};

/// Writes n_scans scans under out_dir plus `dataset.json` (all entries
/// unassigned) and `phantom_summary.json`.
PhantomSummary generate_dataset(const PhantomConfig& config, const std::filesystem::path& out_dir);

}  // namespace atriaqc
