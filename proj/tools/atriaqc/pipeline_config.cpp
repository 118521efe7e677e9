#include "pipeline_config.hpp"

#include <fstream>

#include "atriaqc/config_json.hpp"
#include "atriaqc/error.hpp"

namespace atriaqc::cli {

using nlohmann::json;

std::string_view profile_name(Profile p) { return p == Profile::Desk ? "desk" : "paper"; }

Profile profile_from_name(std::string_view name) {
  if (name == "paper") return Profile::Paper;
  if (name == "desk") return Profile::Desk;
  fail(ErrorKind::Config, "unknown profile '" + std::string(name) + "' (expected paper or desk)");
}

void PipelineConfig::validate() const {
  phantom.validate();
  detector.validate();
  augment.validate();
  qa.validate();
  require(split.test_count >= 0, ErrorKind::Config, "split.test_count must be >= 0");
  require(split.val_count >= -1, ErrorKind::Config, "split.val_count must be >= 0 or -1");
  require(explain.layer >= 0 && explain.layer <= 4, ErrorKind::Config, "explain.layer must lie in 0..4");
  require(explain.max_cam_slices >= 0, ErrorKind::Config, "explain.max_cam_slices must be >= 0");
  require(threads >= 1, ErrorKind::Config, "threads must be >= 1");
  require(augment.image_size == qa.image_size, ErrorKind::Config, "augment.image_size must equal qa.image_size");
}

PipelineConfig profile_defaults(Profile profile) {
  PipelineConfig c;
  c.profile = profile;
  c.phantom.n_scans = 196;
  c.detector.epochs = 20;
  if (profile == Profile::Desk) {
    c.phantom.n_scans = 140;
    c.split.test_count = 20;
    c.split.val_count = 20;

    c.detector.image_size = 64;
    c.detector.base_width = 8;
    c.detector.batch_size = 32;
    c.detector.epochs = 20;
    c.detector.learning_rate = 3e-3;

    c.augment.image_size = 64;

    c.qa.image_size = 64;
    c.qa.encoder_width = 8;
    c.qa.attr_hidden = 32;
    c.qa.qa_hidden = 16;
    c.qa.proj_dim = 32;
    c.qa.decoder_width = 8;
    c.qa.batch_size = 32;
    c.qa.epochs = 15;
    c.qa.contrastive.epochs = 40;
    c.qa.contrastive.batch_size = 64;
    c.qa.contrastive.lars.trust_coefficient = 0.02;
  }
  return c;
}

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view section) {
  require(j.is_object(), ErrorKind::Config, std::string(section) + " config must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == item.key();
    require(known, ErrorKind::Config, "unknown key '" + item.key() + "' in " + std::string(section) + " config");
  }
}

template <typename T>
void take(const json& j, const char* key, T& field) {
  if (!j.contains(key)) return;
  try {
    field = j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

void merge(PipelineConfig& c, const json& j) {
  // "profile" is informational: defaults come from --profile.
  check_keys(j, {"profile", "phantom", "split", "detector", "augment", "qa", "explain", "threads"}, "top-level");
  if (j.contains("phantom")) merge(c.phantom, j.at("phantom"));
  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, {"test_count", "val_count"}, "split");
    take(s, "test_count", c.split.test_count);
    take(s, "val_count", c.split.val_count);
  }
  if (j.contains("detector")) merge(c.detector, j.at("detector"));
  if (j.contains("augment")) merge(c.augment, j.at("augment"));
  if (j.contains("qa")) merge(c.qa, j.at("qa"));
  if (j.contains("explain")) {
    const auto& e = j.at("explain");
    check_keys(e, {"target", "layer", "embedding_layer", "split", "max_cam_slices"}, "explain");
    take(e, "target", c.explain.target);
    take(e, "layer", c.explain.layer);
    take(e, "embedding_layer", c.explain.embedding_layer);
    take(e, "split", c.explain.split);
    take(e, "max_cam_slices", c.explain.max_cam_slices);
  }
  take(j, "threads", c.threads);
  c.validate();
}

json to_json(const PipelineConfig& c) {
  return {{"profile", profile_name(c.profile)},
          {"phantom", to_json(c.phantom)},
          {"split", {{"test_count", c.split.test_count}, {"val_count", c.split.val_count}}},
          {"detector", to_json(c.detector)},
          {"augment", to_json(c.augment)},
          {"qa", to_json(c.qa)},
          {"explain",
           {{"target", c.explain.target},
            {"layer", c.explain.layer},
            {"embedding_layer", c.explain.embedding_layer},
            {"split", c.explain.split},
            {"max_cam_slices", c.explain.max_cam_slices}}},
          {"threads", c.threads}};
}

void apply_seed(PipelineConfig& c, std::uint64_t seed) {
  c.phantom.seed = seed;
  c.detector.seed = seed;
  c.qa.seed = seed;
}

PipelineConfig load_pipeline_config(Profile profile, const std::optional<std::filesystem::path>& file) {
  auto config = profile_defaults(profile);
  if (!file) return config;
  require(std::filesystem::is_regular_file(*file), ErrorKind::Config, "config file not found: " + file->string());
  json j;
  try {
    std::ifstream in(*file);
    j = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "cannot parse config " + file->string() + ": " + e.what());
  }
  merge(config, j);
  return config;
}

}  // namespace atriaqc::cli
