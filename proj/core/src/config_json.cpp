#include "atriaqc/config_json.hpp"

#include <algorithm>
#include <initializer_list>

#include "atriaqc/error.hpp"

namespace atriaqc {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view section) {
  require(j.is_object(), ErrorKind::Config, std::string(section) + " config must be a JSON object");
  for (const auto& item : j.items()) {
    const bool known = std::find(allowed.begin(), allowed.end(), item.key()) != allowed.end();
    require(known, ErrorKind::Config,
            "unknown key '" + item.key() + "' in " + std::string(section) + " config");
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

std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Baseline: return "baseline";
    case Strategy::MultiTask: return "multitask";
    case Strategy::Contrastive: return "contrastive";
  }
  return "?";
}

Strategy strategy_from_name(std::string_view name) {
  for (Strategy s : {Strategy::Baseline, Strategy::MultiTask, Strategy::Contrastive}) {
    if (strategy_name(s) == name) return s;
  }
  fail(ErrorKind::Config, "unknown strategy '" + std::string(name) +
                              "' (expected baseline, multitask or contrastive)");
}

json to_json(const PhantomConfig& c) {
  return {{"dims", {c.dims.depth, c.dims.height, c.dims.width}},
          {"n_scans", c.n_scans},
          {"attribute_coupling", c.attribute_coupling},
          {"noise_sigma", c.noise_sigma},
          {"seed", c.seed},
          {"mask_fraction", c.mask_fraction},
          {"label_fraction", c.label_fraction}};
}

void merge(PhantomConfig& c, const json& j) {
  check_keys(j, {"dims", "n_scans", "attribute_coupling", "noise_sigma", "seed", "mask_fraction", "label_fraction"},
             "phantom");
  if (j.contains("dims")) {
    std::vector<std::int64_t> d;
    take(j, "dims", d);
    require(d.size() == 3, ErrorKind::Config, "phantom dims must be [D,H,W]");
    c.dims = {d[0], d[1], d[2]};
  }
  take(j, "n_scans", c.n_scans);
  take(j, "attribute_coupling", c.attribute_coupling);
  take(j, "noise_sigma", c.noise_sigma);
  take(j, "seed", c.seed);
  take(j, "mask_fraction", c.mask_fraction);
  take(j, "label_fraction", c.label_fraction);
  c.validate();
}

json to_json(const DetectorConfig& c) {
  return {{"threshold", c.threshold},   {"min_pixels", c.min_pixels}, {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size}, {"epochs", c.epochs},         {"seed", c.seed},
          {"image_size", c.image_size}, {"depth", c.depth},           {"base_width", c.base_width}};
}

void merge(DetectorConfig& c, const json& j) {
  check_keys(j, {"threshold", "min_pixels", "learning_rate", "batch_size", "epochs", "seed", "image_size", "depth",
                 "base_width"},
             "detector");
  take(j, "threshold", c.threshold);
  take(j, "min_pixels", c.min_pixels);
  take(j, "learning_rate", c.learning_rate);
  take(j, "batch_size", c.batch_size);
  take(j, "epochs", c.epochs);
  take(j, "seed", c.seed);
  take(j, "image_size", c.image_size);
  take(j, "depth", c.depth);
  take(j, "base_width", c.base_width);
  c.validate();
}

json to_json(const AugmentConfig& c) {
  json transforms = json::array();
  for (Transform t : c.transforms) transforms.push_back(transform_name(t));
  return {{"p", c.p},
          {"transforms", transforms},
          {"shift_limit", c.shift_limit},
          {"scale_limit", c.scale_limit},
          {"rotate_limit_deg", c.rotate_limit_deg},
          {"perspective_limit", c.perspective_limit},
          {"image_size", c.image_size},
          {"normalization", c.normalization == Normalization::PerSlice ? "per_slice" : "fixed"},
          {"fixed_mean", c.fixed_mean},
          {"fixed_std", c.fixed_std}};
}

void merge(AugmentConfig& c, const json& j) {
  check_keys(j, {"p", "transforms", "shift_limit", "scale_limit", "rotate_limit_deg", "perspective_limit",
                 "image_size", "normalization", "fixed_mean", "fixed_std"},
             "augment");
  take(j, "p", c.p);
  if (j.contains("transforms")) {
    std::vector<std::string> names;
    take(j, "transforms", names);
    c.transforms.clear();
    for (const auto& n : names) c.transforms.push_back(transform_from_name(n));
  }
  take(j, "shift_limit", c.shift_limit);
  take(j, "scale_limit", c.scale_limit);
  take(j, "rotate_limit_deg", c.rotate_limit_deg);
  take(j, "perspective_limit", c.perspective_limit);
  take(j, "image_size", c.image_size);
  if (j.contains("normalization")) {
    std::string mode;
    take(j, "normalization", mode);
    require(mode == "per_slice" || mode == "fixed", ErrorKind::Config,
            "normalization must be per_slice or fixed");
    c.normalization = mode == "per_slice" ? Normalization::PerSlice : Normalization::Fixed;
  }
  take(j, "fixed_mean", c.fixed_mean);
  take(j, "fixed_std", c.fixed_std);
  c.validate();
}

json to_json(const LarsConfig& c) {
  return {{"base_lr", c.base_lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"trust_coefficient", c.trust_coefficient},
          {"eps", c.eps}};
}

void merge(LarsConfig& c, const json& j) {
  check_keys(j, {"base_lr", "momentum", "weight_decay", "trust_coefficient", "eps"}, "lars");
  take(j, "base_lr", c.base_lr);
  take(j, "momentum", c.momentum);
  take(j, "weight_decay", c.weight_decay);
  take(j, "trust_coefficient", c.trust_coefficient);
  take(j, "eps", c.eps);
  c.validate();
}

json to_json(const ContrastiveConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"temperature", c.temperature},
          {"reduction", c.reduction == AnchorReduction::Sum ? "sum" : "mean"},
          {"lars", to_json(c.lars)}};
}

void merge(ContrastiveConfig& c, const json& j) {
  check_keys(j, {"epochs", "batch_size", "temperature", "reduction", "lars"}, "contrastive");
  take(j, "epochs", c.epochs);
  take(j, "batch_size", c.batch_size);
  take(j, "temperature", c.temperature);
  if (j.contains("reduction")) {
    std::string r;
    take(j, "reduction", r);
    require(r == "sum" || r == "mean", ErrorKind::Config, "reduction must be sum or mean");
    c.reduction = r == "sum" ? AnchorReduction::Sum : AnchorReduction::Mean;
  }
  if (j.contains("lars")) merge(c.lars, j.at("lars"));
}

json to_json(const QANetConfig& c) {
  return {{"strategy", strategy_name(c.strategy)},
          {"encoder_blocks", c.encoder_blocks},
          {"encoder_width", c.encoder_width},
          {"in_channels", c.in_channels},
          {"pretrained_weights", c.pretrained_weights},
          {"attr_hidden", c.attr_hidden},
          {"qa_hidden", c.qa_hidden},
          {"proj_dim", c.proj_dim},
          {"decoder_width", c.decoder_width},
          {"image_size", c.image_size},
          {"learning_rate", c.learning_rate},
          {"lr_min", c.lr_min},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"patience", c.patience},
          {"min_delta", c.min_delta},
          {"contrastive", to_json(c.contrastive)},
          {"seed", c.seed}};
}

void merge(QANetConfig& c, const json& j) {
  check_keys(j, {"strategy", "encoder_blocks", "encoder_width", "in_channels", "pretrained_weights", "attr_hidden",
                 "qa_hidden", "proj_dim", "decoder_width", "image_size", "learning_rate", "lr_min", "batch_size",
                 "epochs", "patience", "min_delta", "contrastive", "seed"},
             "qa");
  if (j.contains("strategy")) {
    std::string s;
    take(j, "strategy", s);
    c.strategy = strategy_from_name(s);
  }
  take(j, "encoder_blocks", c.encoder_blocks);
  take(j, "encoder_width", c.encoder_width);
  take(j, "in_channels", c.in_channels);
  take(j, "pretrained_weights", c.pretrained_weights);
  take(j, "attr_hidden", c.attr_hidden);
  take(j, "qa_hidden", c.qa_hidden);
  take(j, "proj_dim", c.proj_dim);
  take(j, "decoder_width", c.decoder_width);
  take(j, "image_size", c.image_size);
  take(j, "learning_rate", c.learning_rate);
  take(j, "lr_min", c.lr_min);
  take(j, "batch_size", c.batch_size);
  take(j, "epochs", c.epochs);
  take(j, "patience", c.patience);
  take(j, "min_delta", c.min_delta);
  if (j.contains("contrastive")) merge(c.contrastive, j.at("contrastive"));
  take(j, "seed", c.seed);
  c.validate();
}

}  // namespace atriaqc
