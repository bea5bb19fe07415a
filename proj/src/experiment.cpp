#include "glomseg/experiment.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "glomseg/checkpoint.hpp"
#include "glomseg/config.hpp"
#include "glomseg/data_catalog.hpp"
#include "glomseg/evaluation.hpp"
#include "glomseg/fixture.hpp"
#include "glomseg/training.hpp"

namespace glomseg::cli {

namespace fs = std::filesystem;

namespace {

/// An error already classified for reporting.
struct CliError : std::runtime_error {
  CliError(std::string kind_, const std::string& msg, int code_)
      : std::runtime_error(msg), kind(std::move(kind_)), code(code_) {}
  std::string kind;
  int code;
};

[[noreturn]] void usage_error(const std::string& msg) { throw CliError("usage", msg, kExitUsage); }

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> run_id;
  std::vector<std::string> sets;
};

RunConfig load_config(const Globals& g, const ConfigValues& command_values = {}) {
  std::vector<ConfigValues> layers;
  if (!g.config_path.empty()) layers.push_back(read_config_file(g.config_path));
  layers.push_back(env_overrides());
  ConfigValues flags = command_values;
  if (g.seed) flags["seed"] = std::to_string(*g.seed);
  if (g.out) flags["output_dir"] = *g.out;
  if (g.run_id) flags["run_id"] = *g.run_id;
  for (const auto& [k, v] : parse_assignments(g.sets)) flags[k] = v;
  layers.push_back(flags);
  return resolve_config(layers);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw CliError("io", "cannot write " + path.string(), kExitRuntime);
  out << text;
}

DatasetManifest load_manifest(const std::string& path, ManifestRole role, const char* key) {
  if (path.empty()) throw CliError("config", std::string(key) + " is not set", kExitUsage);
  if (!fs::exists(path)) throw CliError("config", std::string(key) + ": manifest " + path + " does not exist", kExitUsage);
  return read_manifest(path, role);
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

void print_reports(std::ostream& out, const std::vector<MetricsReport>& reports) {
  out << std::left << std::setw(18) << "dataset" << std::setw(22) << "method" << std::setw(11) << "precision"
      << std::setw(9) << "recall" << "dice\n";
  for (const auto& r : reports)
    out << std::left << std::setw(18) << r.dataset << std::setw(22) << r.method << std::setw(11) << fmt(r.precision, 2)
        << std::setw(9) << fmt(r.recall, 2) << fmt(r.dice, 2) << "\n";
}

void prepare_run_dir(const RunConfig& cfg, bool overwrite) {
  const fs::path dir = cfg.run_dir();
  if (fs::exists(dir / "config.txt") && !overwrite)
    throw CliError("config", "run directory " + dir.string() + " already holds a run; pick another run_id or pass --overwrite",
                   kExitUsage);
  fs::create_directories(dir);
  write_text(dir / "config.txt", config_snapshot(cfg));
}

// --- prepare -----------------------------------------------------------------

int cmd_prepare(const Globals& g, const ConfigValues& values, const std::string& manifest_out, std::ostream& out,
                std::ostream& err) {
  const RunConfig cfg = load_config(g, values);
  if (cfg.prepare.root.empty()) usage_error("prepare needs --root (or prepare.root)");
  DatasetId dataset;
  ManifestRole role;
  try {
    dataset = parse_dataset_id(cfg.prepare.dataset);
    role = parse_manifest_role(cfg.prepare.role);
  } catch (const std::invalid_argument& e) {
    throw CliError("config", e.what(), kExitUsage);
  }
  const LayoutSpec layout = LayoutSpec::parse(cfg.prepare.layout);
  DatasetManifest m = build_manifest(cfg.prepare.root, dataset, layout);
  m.role = role;
  if (m.size() == 0) err << "glomseg: warning: no images found under " << cfg.prepare.root << "\n";
  if (cfg.prepare.folds > 0 && m.size() > 0) m = split_folds(m, cfg.prepare.folds, cfg.seed);
  m.validate();
  const fs::path path = manifest_out.empty() ? cfg.run_dir() / "manifest.jsonl" : fs::path(manifest_out);
  write_manifest(path, m);
  const ManifestSummary s = summarize(m);
  out << std::left << std::setw(16) << "dataset" << std::setw(8) << "WSIs" << std::setw(8) << "tiles" << "labeled\n"
      << std::setw(16) << to_string(dataset) << std::setw(8) << s.wsis << std::setw(8) << s.tiles << s.labeled << "\n"
      << "manifest: " << path.string() << "\n";
  return kExitOk;
}

// --- train -------------------------------------------------------------------

struct TrainInputs {
  DatasetManifest labeled;
  std::optional<DatasetManifest> unlabeled;
  std::optional<DatasetManifest> validation;
};

TrainInputs load_train_inputs(const RunConfig& cfg) {
  TrainInputs in;
  in.labeled = load_manifest(cfg.labeled_manifest, ManifestRole::kLabeledTrain, "data.labeled");
  if (cfg.train.method != Method::kSupervised) {
    if (cfg.unlabeled_manifest.empty())
      throw CliError("config", std::string(to_string(cfg.train.method)) + " needs an unlabeled manifest (data.unlabeled)",
                     kExitUsage);
    in.unlabeled = load_manifest(cfg.unlabeled_manifest, ManifestRole::kUnlabeledTrain, "data.unlabeled");
  }
  if (!cfg.validation_manifest.empty())
    in.validation = load_manifest(cfg.validation_manifest, ManifestRole::kExternalValidation, "data.validation");
  return in;
}

std::unique_ptr<SegmentationModel> build_initialized(const ModelConfig& mc, const std::string& init_weights) {
  auto model = build_model(mc);
  if (!init_weights.empty()) {
    try {
      load_weights(init_weights, *model);
    } catch (const CheckpointError& e) {
      throw CliError("checkpoint", "model.init_weights: " + std::string(e.what()), kExitRuntime);
    }
  }
  return model;
}

TrainResult run_training(const RunConfig& cfg, const fs::path& dir, const DatasetManifest& labeled,
                         const DatasetManifest* unlabeled, const DatasetManifest* validation, std::ostream& out) {
  auto model = build_initialized(cfg.model, cfg.init_weights);
  out << "model " << to_string(cfg.model.arch) << "/" << cfg.model.variant << " params " << count_parameters(*model)
      << "\n";
  TrainOptions opts;
  opts.run_dir = dir;
  opts.keep_epoch_checkpoints = cfg.keep_epoch_checkpoints;
  opts.checkpoint_meta = {{"run_id", cfg.run_id}, {"seed", std::to_string(cfg.seed)}};
  opts.on_epoch = [&out](const EpochStats& e) {
    out << "epoch " << e.epoch << " sup_loss " << fmt(e.sup_loss) << " unsup_loss " << fmt(e.unsup_loss)
        << " retention " << fmt(e.retention) << " lr " << e.lr;
    if (e.val_dice >= 0) out << " val_dice " << fmt(e.val_dice);
    out << "\n" << std::flush;
  };
  TrainResult r = train(*model, labeled, unlabeled, validation, cfg.train, cfg.augment, opts);
  write_history_csv(dir / "history.csv", r.history);
  return r;
}

int cmd_train(const Globals& g, const ConfigValues& values, bool overwrite, std::ostream& out) {
  const RunConfig cfg = load_config(g, values);
  const TrainInputs in = load_train_inputs(cfg);
  prepare_run_dir(cfg, overwrite);
  const TrainResult r = run_training(cfg, cfg.run_dir(), in.labeled, in.unlabeled ? &*in.unlabeled : nullptr,
                                     in.validation ? &*in.validation : nullptr, out);
  out << "best checkpoint: " << r.best_checkpoint.string() << "\n";
  return kExitOk;
}

// --- evaluate ----------------------------------------------------------------

std::string dataset_label(const DatasetManifest& m, const std::string& fallback) {
  return m.records.empty() ? fallback : std::string(to_string(m.records.front().dataset_id));
}

int cmd_evaluate(const Globals& g, const ConfigValues& values, const std::string& checkpoint,
                 std::vector<std::string> manifests, std::string label, std::ostream& out) {
  const RunConfig cfg = load_config(g, values);
  if (checkpoint.empty()) usage_error("evaluate needs --checkpoint");
  if (manifests.empty()) manifests = cfg.eval_manifests;
  if (manifests.empty()) usage_error("evaluate needs --manifest (or eval.manifests)");
  LoadedCheckpoint ck;
  try {
    ck = load_checkpoint(checkpoint);
  } catch (const CheckpointError& e) {
    throw CliError("checkpoint", e.what(), kExitRuntime);
  }
  if (label.empty()) label = ck.meta.count("method") ? ck.meta.at("method") : "model";
  std::vector<MetricsReport> reports;
  for (const auto& path : manifests) {
    const DatasetManifest m = load_manifest(path, ManifestRole::kExternalValidation, "--manifest");
    reports.push_back(evaluate(*ck.model, m, cfg.aggregation, dataset_label(m, cfg.dataset), label));
  }
  fs::create_directories(cfg.run_dir());
  write_metrics_csv(cfg.run_dir() / "metrics.csv", reports);
  print_reports(out, reports);
  return kExitOk;
}

// --- ablate ------------------------------------------------------------------

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), '/', '-');
  return s;
}

int cmd_ablate(const Globals& g, const ConfigValues& values, const std::string& axis, bool overwrite, std::ostream& out) {
  RunConfig cfg = load_config(g, values);
  if (axis != "fraction" && axis != "centers" && axis != "backbone")
    usage_error("--axis must be fraction, centers or backbone, got '" + axis + "'");
  const TrainInputs in = load_train_inputs(cfg);
  std::vector<std::string> eval_paths = cfg.eval_manifests;
  if (eval_paths.empty() && !cfg.validation_manifest.empty()) eval_paths.push_back(cfg.validation_manifest);
  if (eval_paths.empty()) throw CliError("config", "ablation needs eval.manifests or data.validation", kExitUsage);
  std::vector<DatasetManifest> eval_sets;
  for (const auto& p : eval_paths) eval_sets.push_back(load_manifest(p, ManifestRole::kExternalValidation, "eval.manifests"));

  std::vector<std::string> settings;
  if (axis == "fraction") settings = cfg.ablation.fractions;
  else if (axis == "centers")
    for (int c : cfg.ablation.centers) settings.push_back(std::to_string(c));
  else settings = cfg.ablation.backbones;
  if (settings.empty()) throw CliError("config", "no settings for the " + axis + " axis", kExitUsage);
  for (std::size_t i = 0; i < settings.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (settings[i] == settings[j]) throw CliError("config", "duplicate ablation setting " + settings[i], kExitUsage);
  if (axis == "centers" && !in.unlabeled)
    throw CliError("config", "the centers axis needs a semi-supervised method and data.unlabeled", kExitUsage);

  prepare_run_dir(cfg, overwrite);
  const fs::path csv_path = cfg.run_dir() / ("ablation_" + axis + ".csv");
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw CliError("io", "cannot write " + csv_path.string(), kExitRuntime);
  csv << "axis,setting," << kMetricsCsvHeader << ",n_labeled,n_unlabeled,params\n" << std::flush;

  for (const auto& setting : settings) {
    RunConfig run = cfg;
    DatasetManifest labeled = in.labeled;
    std::optional<DatasetManifest> unlabeled = in.unlabeled;
    try {
      if (axis == "fraction") {
        labeled = sample_label_fraction(in.labeled, Fraction::parse(setting), cfg.seed);
      } else if (axis == "centers") {
        unlabeled = sample_centers(*in.unlabeled, std::stoi(setting), cfg.ablation.per_center, cfg.seed);
      } else {
        run.model = model_config(cfg.model.arch, setting);
        run.model.num_classes = cfg.model.num_classes;
        run.model.drop_rate_fp = cfg.model.drop_rate_fp;
        run.model.init_seed = cfg.seed;
      }
    } catch (const std::invalid_argument& e) {
      throw CliError("config", "ablation setting " + setting + ": " + e.what(), kExitUsage);
    }
    if (labeled.size() == 0) throw CliError("config", "setting " + setting + " leaves no labeled patches", kExitUsage);
    out << "== " << axis << " " << setting << ": " << labeled.size() << " labeled, "
        << (unlabeled ? unlabeled->size() : 0) << " unlabeled\n";
    const fs::path dir = cfg.run_dir() / (axis + "_" + sanitize(setting));
    run.train.batch_size_labeled = std::min<std::int64_t>(run.train.batch_size_labeled, static_cast<std::int64_t>(labeled.size()));
    if (unlabeled)
      run.train.batch_size_unlabeled =
          std::min<std::int64_t>(run.train.unlabeled_batch(), static_cast<std::int64_t>(unlabeled->size()));
    // Initial weights only fit settings that keep the configured architecture.
    const bool same_arch = run.model.arch == cfg.model.arch && run.model.variant == cfg.model.variant;
    auto model = build_initialized(run.model, same_arch ? cfg.init_weights : std::string());
    const auto params = count_parameters(*model);
    TrainOptions opts;
    opts.run_dir = dir;
    opts.keep_epoch_checkpoints = false;
    train(*model, labeled, unlabeled ? &*unlabeled : nullptr, nullptr, run.train, run.augment, opts);
    for (const auto& es : eval_sets) {
      const MetricsReport r = evaluate(*model, es, cfg.aggregation, dataset_label(es, cfg.dataset),
                                       std::string(to_string(cfg.train.method)));
      csv << axis << "," << setting << "," << metrics_csv_row(r) << "," << labeled.size() << ","
          << (unlabeled ? unlabeled->size() : 0) << "," << params << "\n"
          << std::flush;
      out << "   " << r.dataset << " dice " << fmt(r.dice) << "\n";
    }
  }
  out << "results: " << csv_path.string() << "\n";
  return kExitOk;
}

// --- cross-validate ----------------------------------------------------------

int cmd_cross_validate(const Globals& g, const ConfigValues& values, bool overwrite, std::ostream& out) {
  const RunConfig cfg = load_config(g, values);
  DatasetManifest m = load_manifest(cfg.labeled_manifest, ManifestRole::kLabeledTrain, "data.labeled");
  if (m.fold_assignment.empty()) m = split_folds(m, cfg.cv_folds, cfg.seed);
  prepare_run_dir(cfg, overwrite);
  CrossValidationOptions opts;
  opts.run_dir = cfg.run_dir();
  opts.dataset = dataset_label(m, cfg.dataset);
  opts.aggregation = cfg.aggregation;
  opts.on_fold = [&out](int fold, const MetricsReport& r) {
    out << "fold " << fold << " dice " << fmt(r.dice) << "\n" << std::flush;
  };
  const auto res = cross_validate(m, cfg.cv_folds, cfg.model, cfg.train, cfg.augment, opts);
  write_metrics_csv(cfg.run_dir() / "metrics.csv", res.folds);
  write_text(cfg.run_dir() / "cv_summary.csv",
             "dataset,method,k,dice_mean,dice_sample_std\n" + opts.dataset + "," +
                 std::string(to_string(cfg.train.method)) + "," + std::to_string(cfg.cv_folds) + "," +
                 fmt(res.mean_dice, 6) + "," + fmt(res.std_dice, 6) + "\n");
  out << "dice " << fmt(res.mean_dice, 2) << " ± " << fmt(res.std_dice, 2) << " (sample std over " << cfg.cv_folds
      << " folds)\n";
  return kExitOk;
}

// --- make-fixture ------------------------------------------------------------

struct FixtureArgs {
  std::string dir;
  std::int64_t size = 64;
  int labeled = 8;
  int unlabeled = 64;
  int validation = 16;
  int patches_per_slide = 4;
  int centers = 0;
};

int cmd_make_fixture(const Globals& g, const FixtureArgs& a, std::ostream& out) {
  const RunConfig cfg = load_config(g);
  if (a.size < 16 || a.size % 16 != 0) usage_error("--size must be a positive multiple of 16");
  if (a.labeled < 1 || a.unlabeled < 0 || a.validation < 0 || a.patches_per_slide < 1)
    usage_error("fixture counts must be non-negative (at least one labeled patch)");
  const fs::path root = fs::absolute(a.dir.empty() ? cfg.run_dir() : fs::path(a.dir));
  struct Split {
    const char* name;
    int count;
    bool masks;
    double stain_lo, stain_hi;
    ManifestRole role;
    const char* prefix;
  };
  // Labeled patches share the reference stain; the rest span the full range.
  const Split splits[] = {{"labeled", a.labeled, true, 0.0, 0.25, ManifestRole::kLabeledTrain, "l"},
                          {"unlabeled", a.unlabeled, false, 0.0, 1.0, ManifestRole::kUnlabeledTrain, "u"},
                          {"validation", a.validation, true, 0.0, 1.0, ManifestRole::kExternalValidation, "v"}};
  std::string cfg_text = "# synthetic fixture\n";
  for (std::size_t i = 0; i < std::size(splits); ++i) {
    const Split& s = splits[i];
    if (s.count == 0) continue;
    FixtureSpec spec;
    spec.image_size = a.size;
    spec.patches_per_slide = std::min(a.patches_per_slide, s.count);
    spec.n_slides = (s.count + spec.patches_per_slide - 1) / spec.patches_per_slide;
    spec.n_centers = a.centers;
    spec.with_masks = s.masks;
    spec.stain_lo = s.stain_lo;
    spec.stain_hi = s.stain_hi;
    spec.slide_prefix = s.prefix;
    spec.seed = derive_seed(cfg.seed, {0xF1, i});
    const fs::path dir = root / s.name;
    write_fixture(dir, spec);
    DatasetManifest m = build_manifest(dir, DatasetId::kHubmapKidney, LayoutSpec::parse(fixture_layout(spec)));
    m.role = s.role;
    // Trim the last slide when the count is not a multiple of patches_per_slide.
    while (static_cast<int>(m.size()) > s.count) {
      fs::remove(m.records.back().image_path);
      if (m.records.back().mask_path) fs::remove(*m.records.back().mask_path);
      m.records.pop_back();
    }
    const fs::path manifest = root / (std::string(s.name) + ".jsonl");
    write_manifest(manifest, m);
    const char* key = i == 0 ? "data.labeled" : i == 1 ? "data.unlabeled" : "data.validation";
    cfg_text += std::string(key) + " = " + manifest.string() + "\n";
    out << s.name << ": " << m.size() << " patches, " << m.wsi_ids().size() << " slides -> " << manifest.string() << "\n";
  }
  cfg_text +=
      "data.dataset = hubmap_kidney\nmodel.arch = segformer\nmodel.variant = tiny\n"
      "train.batch_size_labeled = 4\ntrain.lr = 0.01\ntrain.epochs = 30\n";
  write_text(root / "fixture.cfg", cfg_text);
  out << "config: " << (root / "fixture.cfg").string() << "\n";
  return kExitOk;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semi-supervised glomeruli segmentation toolkit", "glomseg"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "flat key = value config file");
  app.add_option("--seed", g.seed, "global seed");
  app.add_option("--out", g.out, "output root (output_dir)");
  app.add_option("--run-id", g.run_id, "run directory name (run_id)");
  app.add_option("--set", g.sets, "override a config key: key=value (repeatable)");

  ConfigValues values;
  bool overwrite = false;

  auto* prep = app.add_subcommand("prepare", "index a dataset directory into a JSON-Lines manifest");
  std::string root, dataset, layout, role, manifest_out;
  int folds = -1;
  prep->add_option("--root", root, "dataset directory");
  prep->add_option("--dataset", dataset, "dataset id");
  prep->add_option("--layout", layout, "layout spec key=value;...");
  prep->add_option("--role", role, "manifest role");
  prep->add_option("--folds", folds, "assign WSI-disjoint folds");
  prep->add_option("--manifest", manifest_out, "output manifest path");

  auto* tr = app.add_subcommand("train", "train one model");
  std::string method, labeled, unlabeled, validation;
  tr->add_option("--method", method, "supervised | fixmatch | unimatch");
  tr->add_option("--labeled", labeled, "labeled manifest");
  tr->add_option("--unlabeled", unlabeled, "unlabeled manifest");
  tr->add_option("--validation", validation, "validation manifest");
  tr->add_flag("--overwrite", overwrite, "reuse an existing run directory");

  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on labeled manifests");
  std::string checkpoint, label;
  std::vector<std::string> manifests;
  ev->add_option("--checkpoint", checkpoint, "checkpoint file");
  ev->add_option("--manifest", manifests, "manifest to score (repeatable)");
  ev->add_option("--label", label, "method label in the report");
  std::string aggregation;
  ev->add_option("--aggregation", aggregation, "micro | macro");

  auto* ab = app.add_subcommand("ablate", "retrain and score per ablation setting");
  std::string axis;
  ab->add_option("--axis", axis, "fraction | centers | backbone")->required();
  ab->add_option("--method", method, "supervised | fixmatch | unimatch");
  ab->add_flag("--overwrite", overwrite, "reuse an existing run directory");

  auto* cv = app.add_subcommand("cross-validate", "k-fold cross-validation on the labeled manifest");
  int k = 0;
  cv->add_option("--folds", k, "number of folds");
  cv->add_flag("--overwrite", overwrite, "reuse an existing run directory");

  auto* fx = app.add_subcommand("make-fixture", "write a synthetic labeled/unlabeled/validation fixture");
  FixtureArgs fa;
  fx->add_option("--dir", fa.dir, "target directory (default {out}/{run_id})");
  fx->add_option("--size", fa.size, "patch side in pixels");
  fx->add_option("--labeled", fa.labeled, "labeled patches");
  fx->add_option("--unlabeled", fa.unlabeled, "unlabeled patches");
  fx->add_option("--validation", fa.validation, "validation patches");
  fx->add_option("--patches-per-slide", fa.patches_per_slide, "patches per synthetic slide");
  fx->add_option("--centers", fa.centers, "number of centers (0 = none)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "glomseg: error[usage]: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    auto put = [&](const char* key, const std::string& v) {
      if (!v.empty()) values[key] = v;
    };
    if (*prep) {
      put("prepare.root", root);
      put("prepare.dataset", dataset);
      put("prepare.layout", layout);
      put("prepare.role", role);
      if (folds >= 0) values["prepare.folds"] = std::to_string(folds);
      return cmd_prepare(g, values, manifest_out, out, err);
    }
    if (*tr) {
      put("train.method", method);
      put("data.labeled", labeled);
      put("data.unlabeled", unlabeled);
      put("data.validation", validation);
      return cmd_train(g, values, overwrite, out);
    }
    if (*ev) {
      put("eval.aggregation", aggregation);
      return cmd_evaluate(g, values, checkpoint, manifests, label, out);
    }
    if (*ab) {
      put("train.method", method);
      return cmd_ablate(g, values, axis, overwrite, out);
    }
    if (*cv) {
      if (k > 0) values["cv.folds"] = std::to_string(k);
      return cmd_cross_validate(g, values, overwrite, out);
    }
    if (*fx) return cmd_make_fixture(g, fa, out);
    usage_error("no command given");
  } catch (const CliError& e) {
    err << "glomseg: error[" << e.kind << "]: " << one_line(e.what()) << "\n";
    return e.code;
  } catch (const ConfigError& e) {
    err << "glomseg: error[config]: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const LayoutError& e) {
    err << "glomseg: error[layout]: " << one_line(e.what()) << "\n";
    return kExitUsage;
  } catch (const CatalogError& e) {
    err << "glomseg: error[catalog]: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  } catch (const CheckpointError& e) {
    err << "glomseg: error[checkpoint]: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  } catch (const TrainingAborted& e) {
    err << "glomseg: error[training]: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  } catch (const ImageError& e) {
    err << "glomseg: error[io]: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "glomseg: error[runtime]: " << one_line(e.what()) << "\n";
    return kExitRuntime;
  }
}

}  // namespace glomseg::cli
