#include "atriaqc/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "atriaqc/error.hpp"
#include "atriaqc/eval_metrics.hpp"

namespace atriaqc {

namespace fs = std::filesystem;

namespace {

// qa_raw prior: most scans sit in the 2..4 range.
constexpr std::array<double, 5> kQaPrior = {0.10, 0.25, 0.30, 0.25, 0.10};

constexpr double kBodyIntensity = 0.2;
constexpr double kBloodIntensity = 0.85;
constexpr double kLaBloodIntensity = 0.9;
constexpr double kWallIntensity = 0.3;
constexpr double kSpeckleDensity = 0.4;
constexpr double kMaxNoiseSigma = 50.0;

enum Stream : std::uint64_t { kScores = 0, kGeometry = 1, kTexture = 2 };

std::mt19937_64 stream_rng(std::uint64_t seed, int index, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

int draw_prior(std::mt19937_64& rng) {
  double u = unit(rng);
  for (int k = 0; k < 5; ++k) {
    if (u < kQaPrior[k]) return k + 1;
    u -= kQaPrior[k];
  }
  return 5;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(round(N(0, sigma)) = k)
double rounded_normal_pmf(int k, double sigma) {
  if (sigma <= 0) return k == 0 ? 1.0 : 0.0;
  return normal_cdf((k + 0.5) / sigma) - normal_cdf((k - 0.5) / sigma);
}

// Separable Gaussian blur with replicated borders, in place.
void gaussian_blur(std::vector<double>& img, std::int64_t h, std::int64_t w, double sigma) {
  if (sigma <= 0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (double& k : kernel) k /= total;

  std::vector<double> tmp(img.size());
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const std::int64_t xx = std::clamp<std::int64_t>(x + i, 0, w - 1);
        acc += kernel[i + radius] * img[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        const std::int64_t yy = std::clamp<std::int64_t>(y + i, 0, h - 1);
        acc += kernel[i + radius] * tmp[yy * w + x];
      }
      img[y * w + x] = acc;
    }
  }
}

double radial(double y, double x, double cy, double cx) { return std::hypot(y - cy, x - cx); }

}  // namespace

void PhantomConfig::validate() const {
  require(dims.depth >= 4, ErrorKind::Config, "phantom depth must be >= 4");
  require(dims.height >= 32 && dims.width >= 32, ErrorKind::Config,
          "phantom in-plane size must be >= 32 to contain the ellipsoid");
  require(n_scans >= 0, ErrorKind::Config, "n_scans must be >= 0");
  require(attribute_coupling >= 0 && attribute_coupling <= 1, ErrorKind::Config,
          "attribute_coupling must lie in [0,1]");
  require(noise_sigma >= 0, ErrorKind::Config, "noise_sigma must be >= 0");
  require(mask_fraction >= 0 && mask_fraction <= 1, ErrorKind::Config,
          "mask_fraction must lie in [0,1]");
  require(label_fraction >= 0 && label_fraction <= 1, ErrorKind::Config,
          "label_fraction must lie in [0,1]");
}

// --- score model --------------------------------------------------------

double expected_coupling(double noise_sigma) {
  const int k_max = static_cast<int>(std::ceil(8 * noise_sigma)) + 5;
  double ea = 0, eq = 0, eaq = 0, ea2 = 0, eq2 = 0;
  for (int q = 1; q <= 5; ++q) {
    const double pq = kQaPrior[q - 1];
    eq += pq * q;
    eq2 += pq * q * q;
    for (int k = -k_max; k <= k_max; ++k) {
      const double p = pq * rounded_normal_pmf(k, noise_sigma);
      const int a = std::clamp(q + k, 1, 5);
      ea += p * a;
      ea2 += p * a * a;
      eaq += p * a * q;
    }
  }
  const double cov = eaq - ea * eq;
  const double var = (ea2 - ea * ea) * (eq2 - eq * eq);
  return var > 0 ? cov / std::sqrt(var) : 0.0;
}

double coupling_noise_sigma(double rho) {
  require(rho >= 0 && rho <= 1, ErrorKind::Config, "coupling must lie in [0,1]");
  if (rho >= 1.0) return 0.0;
  if (rho <= expected_coupling(kMaxNoiseSigma)) return std::numeric_limits<double>::infinity();
  double lo = 0.0, hi = kMaxNoiseSigma;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (expected_coupling(mid) > rho) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

RawScores phantom_scores(const PhantomConfig& config, int index) {
  auto rng = stream_rng(config.seed, index, kScores);
  const double sigma = coupling_noise_sigma(config.attribute_coupling);
  RawScores raw;
  raw.qa = draw_prior(rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  auto coupled = [&]() {
    if (std::isinf(sigma)) return draw_prior(rng);
    const long step = std::lround(sigma * noise(rng));
    return static_cast<int>(std::clamp<long>(raw.qa + step, 1, 5));
  };
  raw.mn = coupled();
  raw.s = coupled();
  raw.eat = coupled();
  return raw;
}

double myocardium_intensity(int mn_raw) { return 1.05 - 0.225 * (mn_raw - 1); }
double blur_sigma_px(int s_raw) { return 2.5 - 0.5625 * (s_raw - 1); }
double aorta_rim_intensity(int eat_raw) { return 0.15 + 0.2 * (eat_raw - 1); }
double wall_speckle_contrast(int qa_raw) { return 0.1 + 0.2 * (qa_raw - 1); }

// --- geometry -----------------------------------------------------------

double PhantomGeometry::la_radius_at(double z, double y, double x) const {
  const double dz = (z - la_center_z) / la_radius_z;
  const double dy = (y - la_center_y) / la_radius_y;
  const double dx = (x - la_center_x) / la_radius_x;
  return std::sqrt(dz * dz + dy * dy + dx * dx);
}

bool PhantomGeometry::in_la(std::int64_t d, std::int64_t h, std::int64_t w) const {
  return la_radius_at(double(d), double(h), double(w)) <= 1.0;
}

bool PhantomGeometry::in_la_wall(std::int64_t d, std::int64_t h, std::int64_t w) const {
  if (in_la(d, h, w)) return false;
  const double dz = (double(d) - la_center_z) / la_radius_z;
  const double dy = (double(h) - la_center_y) / (la_radius_y + wall_thickness);
  const double dx = (double(w) - la_center_x) / (la_radius_x + wall_thickness);
  return dz * dz + dy * dy + dx * dx <= 1.0;
}

bool PhantomGeometry::in_myocardium(std::int64_t h, std::int64_t w) const {
  const double r = radial(double(h), double(w), lv_center_y, lv_center_x);
  return r > lv_radius && r <= lv_radius + myo_thickness;
}

bool PhantomGeometry::in_aorta_rim(std::int64_t h, std::int64_t w) const {
  const double r = radial(double(h), double(w), ao_center_y, ao_center_x);
  return r > ao_radius && r <= ao_radius + ao_rim;
}

std::pair<std::int64_t, std::int64_t> PhantomGeometry::la_slice_band(std::int64_t depth) const {
  const auto first = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(la_center_z - la_radius_z)));
  const auto last =
      std::min<std::int64_t>(depth - 1, static_cast<std::int64_t>(std::floor(la_center_z + la_radius_z)));
  return {first, last};
}

PhantomGeometry phantom_geometry(const PhantomConfig& config, int index) {
  config.validate();
  auto rng = stream_rng(config.seed, index, kGeometry);
  const double d = double(config.dims.depth);
  const double h = double(config.dims.height);
  const double w = double(config.dims.width);
  const double side = std::min(h, w);

  PhantomGeometry g;
  // The half-voxel on the z radius keeps the outermost band slices from
  // degenerating to a handful of voxels.
  const auto band_half = std::max<std::int64_t>(1, std::llround(0.2 * d));
  const int jitter = config.dims.depth >= 8 ? static_cast<int>(rng() % 3) - 1 : 0;
  g.la_center_z = std::floor(d / 2.0) + jitter;
  g.la_radius_z = double(band_half) + 0.5;
  require(g.la_center_z - double(band_half) >= 0 && g.la_center_z + double(band_half) <= d - 1,
          ErrorKind::Config, "phantom depth too small to contain the LA ellipsoid");

  g.la_center_y = h * (0.38 + uniform(rng, -0.03, 0.03));
  g.la_center_x = w * (0.50 + uniform(rng, -0.04, 0.04));
  g.la_radius_y = 0.13 * h * uniform(rng, 0.9, 1.1);
  g.la_radius_x = 0.17 * w * uniform(rng, 0.9, 1.1);
  g.wall_thickness = std::max(1.5, 0.02 * side);

  g.lv_center_y = 0.72 * h;
  g.lv_center_x = 0.33 * w;
  g.lv_radius = 0.10 * side;
  g.myo_thickness = std::max(2.0, 0.045 * side);

  g.ao_center_y = 0.20 * h;
  g.ao_center_x = 0.83 * w;
  g.ao_radius = 0.06 * side;
  g.ao_rim = std::max(1.5, 0.025 * side);

  g.body_radius_y = 0.47 * h;
  g.body_radius_x = 0.47 * w;
  return g;
}

// --- rendering ----------------------------------------------------------

ScanRecord generate_scan(const PhantomConfig& config, int index,
                         std::optional<RawScores> forced_scores) {
  config.validate();
  require(index >= 0 && (index < config.n_scans || forced_scores.has_value()), ErrorKind::Domain,
          "phantom index " + std::to_string(index) + " outside [0, n_scans)");

  const RawScores scores = forced_scores.value_or(phantom_scores(config, index));
  scores.validate();
  const PhantomGeometry g = phantom_geometry(config, index);
  auto texture = stream_rng(config.seed, index, kTexture);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const auto [depth, height, width] = config.dims;
  const double myo = myocardium_intensity(scores.mn);
  const double rim = aorta_rim_intensity(scores.eat);
  const double speckle = wall_speckle_contrast(scores.qa);
  const double blur = blur_sigma_px(scores.s) * double(width) / 128.0;

  ScanRecord scan;
  char id[32];
  std::snprintf(id, sizeof(id), "phantom_%05d", index);
  scan.scan_id = id;
  scan.dims = config.dims;
  scan.spacing = Spacing{2.5, 1.25, 1.25};
  scan.volume.resize(static_cast<std::size_t>(config.dims.voxel_count()));
  std::vector<std::uint8_t> mask(scan.volume.size(), 0);

  std::vector<double> img(static_cast<std::size_t>(height * width));
  for (std::int64_t d = 0; d < depth; ++d) {
    for (std::int64_t y = 0; y < height; ++y) {
      for (std::int64_t x = 0; x < width; ++x) {
        const double yy = double(y), xx = double(x);
        const double by = (yy - 0.5 * double(height)) / g.body_radius_y;
        const double bx = (xx - 0.5 * double(width)) / g.body_radius_x;
        double v = (by * by + bx * bx <= 1.0) ? kBodyIntensity : 0.0;

        const double r_lv = radial(yy, xx, g.lv_center_y, g.lv_center_x);
        if (r_lv <= g.lv_radius) {
          v = kBloodIntensity;
        } else if (r_lv <= g.lv_radius + g.myo_thickness) {
          v = myo;
        }
        const double r_ao = radial(yy, xx, g.ao_center_y, g.ao_center_x);
        if (r_ao <= g.ao_radius) {
          v = kBloodIntensity;
        } else if (r_ao <= g.ao_radius + g.ao_rim) {
          v = rim;
        }
        const std::size_t voxel = static_cast<std::size_t>((d * height + y) * width + x);
        if (g.in_la(d, y, x)) {
          v = kLaBloodIntensity;
          mask[voxel] = 1;
        } else if (g.in_la_wall(d, y, x)) {
          v = kWallIntensity;
          if (unit(texture) < kSpeckleDensity) v += speckle;
        }
        img[static_cast<std::size_t>(y * width + x)] = v;
      }
    }
    gaussian_blur(img, height, width, blur);
    for (std::int64_t i = 0; i < height * width; ++i) {
      double v = img[static_cast<std::size_t>(i)];
      if (config.noise_sigma > 0) v += config.noise_sigma * gauss(texture);
      scan.volume[static_cast<std::size_t>(d * height * width + i)] = static_cast<float>(v);
    }
  }

  const auto mask_count = static_cast<int>(std::llround(config.mask_fraction * config.n_scans));
  const auto label_count = static_cast<int>(std::llround(config.label_fraction * config.n_scans));
  if (forced_scores || index < mask_count) scan.blood_pool_mask = std::move(mask);
  if (forced_scores || index >= config.n_scans - label_count) {
    scan.raw_scores = scores;
    scan.labels = binarize(scores);
  }
  return scan;
}

PhantomSummary generate_dataset(const PhantomConfig& config, const fs::path& out_dir) {
  config.validate();
  fs::create_directories(out_dir);
  PhantomSummary summary;
  DatasetManifest manifest;
  for (int i = 0; i < config.n_scans; ++i) {
    const ScanRecord scan = generate_scan(config, i);
    write_scan(out_dir, scan);
    manifest.entries.push_back(DatasetEntry{scan.scan_id, scan.scan_id, Split::Unassigned});
    summary.scan_ids.push_back(scan.scan_id);
    summary.scores.push_back(scan.raw_scores);
  }
  manifest.write(out_dir / kDatasetManifestName);

  std::vector<double> mn, s, eat, qa;
  for (const auto& sc : summary.scores) {
    if (!sc) continue;
    mn.push_back(sc->mn);
    s.push_back(sc->s);
    eat.push_back(sc->eat);
    qa.push_back(sc->qa);
  }
  auto safe_pearson = [&](const std::vector<double>& a) {
    try {
      return pearson(a, qa);
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  summary.pearson_mn = safe_pearson(mn);
  summary.pearson_s = safe_pearson(s);
  summary.pearson_eat = safe_pearson(eat);

  nlohmann::json j;
  j["n_scans"] = config.n_scans;
  j["attribute_coupling"] = config.attribute_coupling;
  j["seed"] = config.seed;
  auto num_or_null = [](double v) { return std::isnan(v) ? nlohmann::json() : nlohmann::json(v); };
  j["achieved_pearson"] = {{"mn", num_or_null(summary.pearson_mn)},
                           {"s", num_or_null(summary.pearson_s)},
                           {"eat", num_or_null(summary.pearson_eat)}};
  nlohmann::json scans = nlohmann::json::array();
  for (std::size_t i = 0; i < summary.scan_ids.size(); ++i) {
    nlohmann::json row{{"scan_id", summary.scan_ids[i]}};
    if (const auto& sc = summary.scores[i]) {
      row["raw_scores"] = {{"mn", sc->mn}, {"s", sc->s}, {"eat", sc->eat}, {"qa", sc->qa}};
    } else {
      row["raw_scores"] = nullptr;
    }
    scans.push_back(row);
  }
  j["scans"] = scans;
  std::ofstream out(out_dir / "phantom_summary.json", std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write phantom_summary.json");
  out << j.dump(2) << '\n';
  return summary;
}

}  // namespace atriaqc
