#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "atriaqc/augment.hpp"
#include "atriaqc/detector.hpp"
#include "atriaqc/phantom.hpp"
#include "atriaqc/qa_models.hpp"

namespace atriaqc::cli {

enum class Profile { Paper, Desk };
std::string_view profile_name(Profile p);
Profile profile_from_name(std::string_view name);

struct SplitConfig {
  int test_count = 40;
  int val_count = -1;  // -1: 90:10 rule on the remainder
};

struct ExplainConfig {
  std::string target = "qa";
  int layer = 4;
  std::string embedding_layer = "encoder";
  std::string split = "test";
  int max_cam_slices = 0;  // per scan; 0 = every selected slice
};

/// Every tunable of the pipeline, one section per module. Commands read the
/// sections they need.
struct PipelineConfig {
  Profile profile = Profile::Paper;
  PhantomConfig phantom;
  SplitConfig split;
  DetectorConfig detector;
  AugmentConfig augment;
  QANetConfig qa;
  ExplainConfig explain;
  int threads = 1;

  void validate() const;
};

PipelineConfig profile_defaults(Profile profile);

/// Overlays a config file's JSON object; unknown keys are Config errors.
void merge(PipelineConfig& config, const nlohmann::json& j);
nlohmann::json to_json(const PipelineConfig& config);

/// Sets every seed field (phantom, detector, qa) to `seed`.
void apply_seed(PipelineConfig& config, std::uint64_t seed);

/// Profile defaults, then the optional config file. A missing or unparsable
/// file is a Config error.
PipelineConfig load_pipeline_config(Profile profile, const std::optional<std::filesystem::path>& file);

}  // namespace atriaqc::cli
