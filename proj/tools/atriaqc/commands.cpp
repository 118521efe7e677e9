#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <torch/torch.h>

#include "atriaqc/augment.hpp"
#include "atriaqc/config_json.hpp"
#include "atriaqc/datamodel.hpp"
#include "atriaqc/detector.hpp"
#include "atriaqc/error.hpp"
#include "atriaqc/evaluation.hpp"
#include "atriaqc/explain.hpp"
#include "atriaqc/hashing.hpp"
#include "atriaqc/json_io.hpp"
#include "atriaqc/log.hpp"
#include "atriaqc/phantom.hpp"
#include "atriaqc/scan_tensors.hpp"
#include "manifest.hpp"
#include "pipeline_config.hpp"

namespace atriaqc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSelectionsFormatVersion = 1;

struct CommonOptions {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string profile = "paper";
  int threads = 0;
  std::string log_level = "info";
  CLI::Option* seed_opt = nullptr;
  CLI::Option* threads_opt = nullptr;
};

struct Options {
  CommonOptions common;
  std::string data;
  std::string detector;
  std::string selections;
  std::string qa;
  std::string strategy;
  int seeds = 0;
  int epochs = 0;
  double t = 0;
  int min_pixels = 0;
  std::string pretrained;
  std::string target;
  int layer = -1;
  std::string embedding_layer;
  std::string split;
  std::string manifest;
  CLI::Option* t_opt = nullptr;
  CLI::Option* min_pixels_opt = nullptr;
  CLI::Option* seeds_opt = nullptr;
  CLI::Option* epochs_opt = nullptr;
};

struct Context {
  std::string command;
  std::vector<std::string> argv;
  PipelineConfig config;
  fs::path out;
  RunManifest manifest;
};

PipelineConfig resolve_config(const CommonOptions& c) {
  const auto file = c.config.empty() ? std::nullopt : std::optional<fs::path>(c.config);
  auto config = load_pipeline_config(profile_from_name(c.profile), file);
  if (c.seed_opt && c.seed_opt->count() > 0) apply_seed(config, c.seed);
  if (c.threads_opt && c.threads_opt->count() > 0) config.threads = c.threads;
  config.validate();
  return config;
}

fs::path data_root(const Options& o) {
  if (!o.data.empty()) return o.data;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  fail(ErrorKind::Config, std::string("no data directory: pass --data or set ") + kDataDirEnv);
}

void require_dataset(const fs::path& root) {
  require(fs::exists(root / kDatasetManifestName), ErrorKind::MissingArtifact,
          "no dataset at " + root.string() + " (run gen-phantom first)");
}

std::vector<ScanRecord> load_scans(const fs::path& root, std::initializer_list<Split> splits) {
  std::vector<ScanRecord> out;
  for (Split s : splits) {
    auto part = load_split(root, s);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

template <typename Pred>
std::vector<ScanRecord> keep_if(std::vector<ScanRecord> scans, Pred pred, std::string_view what) {
  const auto before = scans.size();
  std::erase_if(scans, [&](const ScanRecord& s) { return !pred(s); });
  if (scans.size() != before) logging::info("{} of {} scans lack {} and are skipped", before - scans.size(), before, what);
  return scans;
}

void finish(Context& ctx, std::chrono::steady_clock::time_point start) {
  ctx.manifest.command = ctx.command;
  ctx.manifest.argv = ctx.argv;
  ctx.manifest.cwd = fs::current_path().string();
  ctx.manifest.config = to_json(ctx.config);
  ctx.manifest.outputs = hash_outputs(ctx.out);
  ctx.manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json_file(manifest_path(ctx.out, ctx.command), ctx.manifest.to_json());
  logging::info("{} done in {:.1f}s; manifest {}", ctx.command, ctx.manifest.wall_clock_seconds,
                manifest_path(ctx.out, ctx.command).string());
}

void write_text(const fs::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::Io, "cannot write " + file.string());
  out << text;
}

// --- gen-phantom --------------------------------------------------------

void cmd_gen_phantom(Context& ctx) {
  const auto& cfg = ctx.config;
  const auto summary = generate_dataset(cfg.phantom, ctx.out);
  const auto manifest_file = ctx.out / kDatasetManifestName;
  auto dataset = DatasetManifest::read(manifest_file);
  const auto ids = dataset.ids(Split::Unassigned);
  const auto test = static_cast<std::size_t>(cfg.split.test_count);
  const auto split = cfg.split.val_count < 0
                         ? make_splits(ids, test, cfg.phantom.seed)
                         : make_splits(ids, test, static_cast<std::size_t>(cfg.split.val_count), cfg.phantom.seed);
  dataset.apply(split);
  dataset.write(manifest_file);
  ctx.manifest.seeds = {cfg.phantom.seed};
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  ctx.manifest.metrics = {{"n_scans", cfg.phantom.n_scans},
                          {"train", split.train_ids.size()},
                          {"val", split.val_ids.size()},
                          {"test", split.test_ids.size()},
                          {"achieved_pearson",
                           {{"mn", num(summary.pearson_mn)}, {"s", num(summary.pearson_s)}, {"eat", num(summary.pearson_eat)}}}};
}

// --- train-detector -----------------------------------------------------

void cmd_train_detector(Context& ctx, const Options& o) {
  const auto root = data_root(o);
  require_dataset(root);
  auto& cfg = ctx.config;
  if (o.epochs_opt->count() > 0) cfg.detector.epochs = o.epochs;
  cfg.detector.validate();
  const auto train = keep_if(load_split(root, Split::Train), [](const ScanRecord& s) { return s.has_mask(); }, "masks");
  const auto val = keep_if(load_split(root, Split::Val), [](const ScanRecord& s) { return s.has_mask(); }, "masks");
  const auto model = train_detector(train, val, cfg.detector);
  save_detector(model, ctx.out);
  ctx.manifest.inputs = {{"data", dataset_hash(root)}};
  ctx.manifest.seeds = {cfg.detector.seed};
  ctx.manifest.metrics = {{"best_val_dice", std::isfinite(model.best_val_dice) ? json(model.best_val_dice) : json()},
                          {"best_epoch", model.best_epoch},
                          {"train_scans", train.size()},
                          {"val_scans", val.size()}};
}

// --- select-slices ------------------------------------------------------

void cmd_select_slices(Context& ctx, const Options& o) {
  const auto root = data_root(o);
  require_dataset(root);
  require(!o.detector.empty(), ErrorKind::Config, "select-slices needs --detector");
  auto& cfg = ctx.config;
  if (o.t_opt->count() > 0) cfg.detector.threshold = o.t;
  if (o.min_pixels_opt->count() > 0) cfg.detector.min_pixels = o.min_pixels;
  cfg.detector.validate();
  const auto detector = load_detector(o.detector);
  const auto scans = load_scans(root, {Split::Train, Split::Val, Split::Test, Split::Unassigned});
  json selections = json::object();
  std::int64_t empty = 0, total = 0;
  for (const auto& scan : scans) {
    const auto selected = select_slices(predict_mask(detector, scan), cfg.detector.threshold, cfg.detector.min_pixels);
    empty += selected.empty();
    total += static_cast<std::int64_t>(selected.size());
    selections[scan.scan_id] = selected;
  }
  fs::create_directories(ctx.out);
  write_json_file(ctx.out / "selections.json", {{"format_version", kSelectionsFormatVersion},
                                                {"threshold", cfg.detector.threshold},
                                                {"min_pixels", cfg.detector.min_pixels},
                                                {"detector_sha256", directory_hash(o.detector)},
                                                {"selections", selections}});
  ctx.manifest.inputs = {{"data", dataset_hash(root)}, {"detector", directory_hash(o.detector)}};
  ctx.manifest.metrics = {{"n_scans", scans.size()},
                          {"scans_without_selection", empty},
                          {"mean_selected_slices", scans.empty() ? 0.0 : double(total) / double(scans.size())}};
}

// --- train-qa -----------------------------------------------------------

void cmd_train_qa(Context& ctx, const Options& o) {
  const auto root = data_root(o);
  require_dataset(root);
  require(!o.selections.empty(), ErrorKind::Config, "train-qa needs --selections");
  auto& cfg = ctx.config;
  if (!o.strategy.empty()) cfg.qa.strategy = strategy_from_name(o.strategy);
  if (o.epochs_opt->count() > 0) cfg.qa.epochs = o.epochs;
  if (!o.pretrained.empty()) cfg.qa.pretrained_weights = o.pretrained;
  const int n_seeds = o.seeds_opt->count() > 0 ? o.seeds : 1;
  require(n_seeds >= 1, ErrorKind::Config, "--seeds must be >= 1");
  cfg.validate();

  const auto selections = read_selections(o.selections);
  auto labeled = [](const ScanRecord& s) { return s.has_labels(); };
  const auto train = keep_if(load_split(root, Split::Train), labeled, "labels");
  const auto val = keep_if(load_split(root, Split::Val), labeled, "labels");

  json per_seed = json::array();
  const auto base = cfg.qa.seed;
  for (int i = 0; i < n_seeds; ++i) {
    auto qa = cfg.qa;
    qa.seed = base + static_cast<std::uint64_t>(i);
    logging::info("train-qa: strategy {}, seed {}", strategy_name(qa.strategy), qa.seed);
    const auto model = train_qa(train, val, selections, qa, cfg.augment);
    save_qa_model(model, ctx.out / ("seed_" + std::to_string(qa.seed)));
    ctx.manifest.seeds.push_back(qa.seed);
    json entry = {{"seed", qa.seed},
                  {"best_val_mse", std::isfinite(model.best_val_mse) ? json(model.best_val_mse) : json()},
                  {"best_epoch", model.best_epoch},
                  {"epochs_run", model.history.size()}};
    if (model.encoder_frozen) {
      entry["encoder_unchanged_downstream"] =
          model.encoder_hash_before_downstream == model.encoder_hash_after_downstream;
      entry["final_contrastive_loss"] = model.contrastive_losses.empty() ? json() : json(model.contrastive_losses.back());
    }
    per_seed.push_back(entry);
  }
  ctx.manifest.inputs = {{"data", dataset_hash(root)}, {"selections", sha256_file(fs::is_directory(o.selections) ? fs::path(o.selections) / "selections.json" : fs::path(o.selections))}};
  if (!cfg.qa.pretrained_weights.empty()) ctx.manifest.inputs["pretrained_weights"] = sha256_file(cfg.qa.pretrained_weights);
  ctx.manifest.metrics = {{"strategy", strategy_name(cfg.qa.strategy)}, {"runs", per_seed}};
}

// --- evaluate -----------------------------------------------------------

std::vector<std::uint64_t> seed_dirs(const fs::path& qa_dir) {
  std::vector<std::uint64_t> seeds;
  if (!fs::is_directory(qa_dir)) return seeds;
  for (const auto& e : fs::directory_iterator(qa_dir)) {
    const auto name = e.path().filename().string();
    if (!e.is_directory() || name.rfind("seed_", 0) != 0) continue;
    try {
      seeds.push_back(std::stoull(name.substr(5)));
    } catch (const std::exception&) {
    }
  }
  std::sort(seeds.begin(), seeds.end());
  return seeds;
}

void cmd_evaluate(Context& ctx, const Options& o) {
  const auto root = data_root(o);
  require_dataset(root);
  require(!o.detector.empty() && !o.qa.empty(), ErrorKind::Config, "evaluate needs --detector and --qa");
  auto& cfg = ctx.config;
  std::vector<std::uint64_t> seeds;
  if (o.seeds_opt->count() > 0) {
    require(o.seeds >= 1, ErrorKind::Config, "--seeds must be >= 1");
    for (int i = 0; i < o.seeds; ++i) seeds.push_back(cfg.qa.seed + static_cast<std::uint64_t>(i));
  } else {
    seeds = seed_dirs(o.qa);
  }
  require(!seeds.empty(), ErrorKind::MissingArtifact, "no QA checkpoints (seed_<s>/) under " + o.qa);

  const auto detector = load_detector(o.detector);
  const auto test = keep_if(load_split(root, Split::Test), [](const ScanRecord& s) { return s.has_labels(); }, "labels");
  std::vector<std::vector<std::int64_t>> selected;
  for (const auto& scan : test) {
    selected.push_back(select_slices(predict_mask(detector, scan), detector.config.threshold, detector.config.min_pixels));
  }

  std::vector<RunReport> reports;
  ctx.manifest.inputs = {{"data", dataset_hash(root)}, {"detector", directory_hash(o.detector)}};
  for (auto seed : seeds) {
    const auto dir = fs::path(o.qa) / ("seed_" + std::to_string(seed));
    const auto model = load_qa_model(dir);
    std::vector<ScanPrediction> predictions;
    for (std::size_t i = 0; i < test.size(); ++i) {
      predictions.push_back(predict_slices(model, test[i], selected[i], cfg.augment));
    }
    reports.push_back(evaluate_predictions(test, predictions, std::string(strategy_name(model.config.strategy)), seed));
    ctx.manifest.inputs["qa/seed_" + std::to_string(seed)] = directory_hash(dir);
    ctx.manifest.seeds.push_back(seed);
  }

  fs::create_directories(ctx.out);
  const auto metrics = metrics_json(reports);
  write_json_file(ctx.out / "metrics.json", metrics);
  write_text(ctx.out / "metrics.csv", metrics_csv(reports));
  const auto everything = keep_if(load_scans(root, {Split::Train, Split::Val, Split::Test, Split::Unassigned}),
                                  [](const ScanRecord& s) { return s.raw_scores.has_value(); }, "scores");
  write_json_file(ctx.out / "pearson.json", to_json(pearson_table(everything)));
  ctx.manifest.metrics = metrics.at("aggregate");
}

// --- explain ------------------------------------------------------------

void cmd_explain(Context& ctx, const Options& o) {
  const auto root = data_root(o);
  require_dataset(root);
  require(!o.qa.empty() && !o.selections.empty(), ErrorKind::Config, "explain needs --qa and --selections");
  auto& cfg = ctx.config;
  if (!o.target.empty()) cfg.explain.target = o.target;
  if (o.layer >= 0) cfg.explain.layer = o.layer;
  if (!o.embedding_layer.empty()) cfg.explain.embedding_layer = o.embedding_layer;
  if (!o.split.empty()) cfg.explain.split = o.split;
  cfg.validate();
  const auto target = cam_target_from_name(cfg.explain.target);
  const auto layer = embedding_layer_from_name(cfg.explain.embedding_layer);

  fs::path model_dir = o.qa;
  if (!fs::exists(model_dir / "qa_model.json")) {
    const auto seeds = seed_dirs(o.qa);
    const auto wanted = cfg.qa.seed;
    const bool has = std::find(seeds.begin(), seeds.end(), wanted) != seeds.end();
    require(has || !seeds.empty(), ErrorKind::MissingArtifact, "no QA checkpoint under " + o.qa);
    model_dir /= "seed_" + std::to_string(has ? wanted : seeds.front());
  }
  auto model = load_qa_model(model_dir);
  const auto selections = read_selections(o.selections);
  const auto scans = keep_if(load_split(root, split_from_name(cfg.explain.split)),
                             [](const ScanRecord& s) { return s.has_labels(); }, "labels");
  const int size = model.config.image_size;

  fs::create_directories(ctx.out / "cam");
  json entries = json::array();
  std::vector<double> masses;
  for (const auto& scan : scans) {
    const auto it = selections.find(scan.scan_id);
    if (it == selections.end()) continue;
    std::size_t done = 0;
    for (std::int64_t d : it->second) {
      if (cfg.explain.max_cam_slices > 0 && done >= static_cast<std::size_t>(cfg.explain.max_cam_slices)) break;
      ++done;
      const auto x = normalize_slice(resize_slice(slice_tensor(scan, d), size), cfg.augment);
      const auto map = hirescam(model.net, x, target, cfg.explain.layer);
      const auto name = scan.scan_id + "_" + std::to_string(d) + ".png";
      write_png_gray(ctx.out / "cam" / name, map.upsampled_view);
      json entry = {{"scan_id", scan.scan_id},
                    {"slice", d},
                    {"png", "cam/" + name},
                    {"logit", map.logit},
                    {"min", map.values.min().item<double>()},
                    {"max", map.values.max().item<double>()}};
      if (scan.has_mask()) {
        const auto mask = resize_mask(mask_tensor(scan, d), size);
        try {
          const double mass = attribution_mass_inside_mask(map.upsampled_view, mask);
          entry["mass_inside_mask"] = mass;
          masses.push_back(mass);
        } catch (const Error&) {
          entry["mass_inside_mask"] = nullptr;
        }
      }
      entries.push_back(entry);
    }
  }
  std::optional<double> median_mass;
  if (!masses.empty()) {
    std::sort(masses.begin(), masses.end());
    const auto n = masses.size();
    median_mass = n % 2 ? masses[n / 2] : 0.5 * (masses[n / 2 - 1] + masses[n / 2]);
  }
  write_json_file(ctx.out / "cam_summary.json",
                  {{"target", cfg.explain.target},
                   {"layer", cfg.explain.layer},
                   {"split", cfg.explain.split},
                   {"model_sha256", directory_hash(model_dir)},
                   {"median_mass_inside_mask", median_mass ? json(*median_mass) : json()},
                   {"maps", entries}});

  const auto samples = build_slice_set(scans, selections, size, false);
  const auto rows = export_embeddings(model.net, samples, layer, cfg.augment, ctx.out / "embeddings.csv");
  json separation;
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(static_cast<int>(s.labels[3]));
  try {
    const auto cs = cosine_separation(compute_embeddings(model.net, samples, layer, cfg.augment), labels);
    separation = {{"intra", cs.intra}, {"inter", cs.inter}};
  } catch (const Error&) {
  }
  ctx.manifest.inputs = {{"data", dataset_hash(root)}, {"qa_model", directory_hash(model_dir)}};
  ctx.manifest.seeds = {model.config.seed};
  ctx.manifest.metrics = {{"maps", entries.size()},
                          {"median_mass_inside_mask", median_mass ? json(*median_mass) : json()},
                          {"embedding_rows", rows},
                          {"cosine_separation", separation}};
}

// --- reproduce ----------------------------------------------------------

int cmd_reproduce(const Options& o, const std::string& out_override) {
  const auto recorded = RunManifest::from_json(read_json_file(o.manifest));
  require(recorded.command != "reproduce", ErrorKind::Config, "cannot reproduce a reproduce run");
  auto args = recorded.argv;
  if (!out_override.empty()) {
    bool replaced = false;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--out" && i + 1 < args.size()) {
        args[i + 1] = out_override;
        replaced = true;
      } else if (args[i].rfind("--out=", 0) == 0) {
        args[i] = "--out=" + out_override;
        replaced = true;
      }
    }
    require(replaced, ErrorKind::Format, "manifest argv has no --out to override");
  }

  // Replay the resolved configuration rather than whatever the config file holds now.
  std::optional<fs::path> replay_config;
  if (recorded.config.is_object() && !recorded.config.empty()) {
    replay_config = fs::temp_directory_path() /
                    ("atriaqc_replay_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()) +
                     ".json");
    write_json_file(*replay_config, recorded.config);
    std::vector<std::string> kept;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        ++i;
        continue;
      }
      if (args[i].rfind("--config=", 0) == 0) continue;
      kept.push_back(args[i]);
    }
    kept.push_back("--config");
    kept.push_back(replay_config->string());
    args = std::move(kept);
  }
  struct RemoveReplay {
    const std::optional<fs::path>& file;
    ~RemoveReplay() {
      std::error_code ec;
      if (file) fs::remove(*file, ec);
    }
  } remove_replay{replay_config};

  const auto previous = fs::current_path();
  if (!recorded.cwd.empty()) {
    require(fs::is_directory(recorded.cwd), ErrorKind::MissingArtifact, "recorded cwd is gone: " + recorded.cwd);
    fs::current_path(recorded.cwd);
  }
  int code = 1;
  try {
    code = run(args);
  } catch (...) {
    fs::current_path(previous);
    throw;
  }
  fs::path out_dir;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out" && i + 1 < args.size()) out_dir = args[i + 1];
    if (args[i].rfind("--out=", 0) == 0) out_dir = args[i].substr(6);
  }
  if (code != 0) {
    fs::current_path(previous);
    return code;
  }
  const auto rerun = RunManifest::from_json(read_json_file(manifest_path(out_dir, recorded.command)));
  fs::current_path(previous);

  bool identical = true;
  for (const auto& [name, sha] : recorded.inputs) {
    const auto it = rerun.inputs.find(name);
    if (it == rerun.inputs.end() || it->second != sha) {
      logging::warn("input {} differs from the recorded run", name);
    }
  }
  for (const auto& [file, sha] : recorded.outputs) {
    const auto it = rerun.outputs.find(file);
    if (it == rerun.outputs.end()) {
      logging::error("output {} was not re-created", file);
      identical = false;
    } else if (it->second != sha) {
      logging::error("output {} differs", file);
      identical = false;
    }
  }
  for (const auto& [file, sha] : rerun.outputs) {
    if (!recorded.outputs.count(file)) logging::warn("re-run produced extra output {}", file);
  }
  std::cout << (identical ? "reproduced: all outputs byte-identical" : "NOT reproduced: outputs differ") << '\n';
  return identical ? 0 : 1;
}

void add_common(CLI::App* sub, CommonOptions& c, bool needs_out = true) {
  sub->add_option("--config", c.config, "JSON config file (flags win over it)");
  auto* out = sub->add_option("--out", c.out, "output directory");
  if (needs_out) out->required();
  c.seed_opt = sub->add_option("--seed", c.seed, "seed applied to every stage");
  sub->add_option("--profile", c.profile, "defaults profile")->check(CLI::IsMember({"paper", "desk"}));
  c.threads_opt = sub->add_option("--threads", c.threads, "torch intra-op threads (default 1 for determinism)");
  sub->add_option("--log-level", c.log_level, "debug, info, warn, error or off");
}

}  // namespace

SliceSelections read_selections(const fs::path& path) {
  const auto file = fs::is_directory(path) ? path / "selections.json" : path;
  require(fs::exists(file), ErrorKind::MissingArtifact, "slice selections not found: " + file.string());
  const auto j = read_json_file(file);
  SliceSelections out;
  try {
    const int version = j.at("format_version").get<int>();
    require(version == kSelectionsFormatVersion, ErrorKind::Format,
            "selections format_version " + std::to_string(version) + " unsupported");
    for (const auto& [id, slices] : j.at("selections").items()) out[id] = slices.get<std::vector<std::int64_t>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, "malformed selections file " + file.string() + ": " + e.what());
  }
  return out;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"Two-stage LGE-MRI image quality assessment: phantoms, detector, QA models, evaluation", "atriaqc"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");
  Options o;
  std::string reproduce_out;

  auto* gen = app.add_subcommand("gen-phantom", "generate a phantom dataset with splits");
  add_common(gen, o.common);

  auto* det = app.add_subcommand("train-detector", "train the LA blood-pool detector");
  add_common(det, o.common);
  det->add_option("--data", o.data, "dataset root (default $ATRIAQC_DATA_DIR)");
  o.epochs_opt = det->add_option("--epochs", o.epochs, "override detector epochs");

  auto* sel = app.add_subcommand("select-slices", "select LA slices with a trained detector");
  add_common(sel, o.common);
  sel->add_option("--data", o.data, "dataset root (default $ATRIAQC_DATA_DIR)");
  sel->add_option("--detector", o.detector, "detector checkpoint directory")->required();
  o.t_opt = sel->add_option("--t", o.t, "probability threshold");
  o.min_pixels_opt = sel->add_option("--min-pixels", o.min_pixels, "pixels above t needed to keep a slice");

  auto* tqa = app.add_subcommand("train-qa", "train a QA model for one strategy");
  add_common(tqa, o.common);
  tqa->add_option("--data", o.data, "dataset root (default $ATRIAQC_DATA_DIR)");
  tqa->add_option("--selections", o.selections, "selections.json or its directory")->required();
  tqa->add_option("--strategy", o.strategy, "baseline, multitask or contrastive")
      ->check(CLI::IsMember({"baseline", "multitask", "contrastive"}));
  auto* tqa_seeds = tqa->add_option("--seeds", o.seeds, "train seeds seed..seed+K-1");
  auto* tqa_epochs = tqa->add_option("--epochs", o.epochs, "override QA epochs");
  tqa->add_option("--pretrained-weights", o.pretrained, "encoder checkpoint to initialise from");

  auto* ev = app.add_subcommand("evaluate", "score QA checkpoints on the test split");
  add_common(ev, o.common);
  ev->add_option("--data", o.data, "dataset root (default $ATRIAQC_DATA_DIR)");
  ev->add_option("--detector", o.detector, "detector checkpoint directory")->required();
  ev->add_option("--qa", o.qa, "train-qa output directory")->required();
  auto* ev_seeds = ev->add_option("--seeds", o.seeds, "evaluate seeds seed..seed+K-1 (default: all present)");

  auto* ex = app.add_subcommand("explain", "HiResCAM maps and embedding export");
  add_common(ex, o.common);
  ex->add_option("--data", o.data, "dataset root (default $ATRIAQC_DATA_DIR)");
  ex->add_option("--qa", o.qa, "QA checkpoint directory or train-qa output directory")->required();
  ex->add_option("--selections", o.selections, "selections.json or its directory")->required();
  ex->add_option("--target", o.target, "output head: mn, s, eat or qa");
  ex->add_option("--layer", o.layer, "attribution layer: 0 stem, 1..4 residual stages");
  ex->add_option("--embedding-layer", o.embedding_layer, "encoder or projection");
  ex->add_option("--split", o.split, "train, val, test or unassigned");

  auto* rep = app.add_subcommand("reproduce", "re-run a manifest and compare outputs byte for byte");
  rep->add_option("manifest", o.manifest, "run manifest JSON")->required();
  rep->add_option("--out", reproduce_out, "write to this directory instead of the recorded one");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  // Per-command option pointers share storage; route the live ones.
  if (tqa->parsed()) {
    o.seeds_opt = tqa_seeds;
    o.epochs_opt = tqa_epochs;
  } else if (ev->parsed()) {
    o.seeds_opt = ev_seeds;
  }

  try {
    if (rep->parsed()) return cmd_reproduce(o, reproduce_out);

    logging::set_level(logging::level_from_name(o.common.log_level));
    Context ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.argv = args;
    ctx.config = resolve_config(o.common);
    ctx.out = o.common.out;
    torch::set_num_threads(ctx.config.threads);
    const auto start = std::chrono::steady_clock::now();
    fs::create_directories(ctx.out);

    if (gen->parsed()) cmd_gen_phantom(ctx);
    if (det->parsed()) cmd_train_detector(ctx, o);
    if (sel->parsed()) cmd_select_slices(ctx, o);
    if (tqa->parsed()) cmd_train_qa(ctx, o);
    if (ev->parsed()) cmd_evaluate(ctx, o);
    if (ex->parsed()) cmd_explain(ctx, o);
    finish(ctx, start);
    return 0;
  } catch (const Error& e) {
    std::cerr << "atriaqc: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::invalid_argument& e) {
    std::cerr << "atriaqc: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const c10::Error& e) {
    std::cerr << "atriaqc: torch error: " << e.what_without_backtrace() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "atriaqc: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace atriaqc::cli
