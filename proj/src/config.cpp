#include "glomseg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

extern char** environ;

namespace glomseg {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& want) {
  throw ConfigError("config key " + key + ": expected " + want + ", got '" + value + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) bad_value(key, v, "a number");
    return d;
  } catch (const std::logic_error&) {
    bad_value(key, v, "a number");
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a non-negative integer");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad_value(key, v, "true or false");
}

const std::map<std::string, ConfigValues>& preset_table() {
  static const std::map<std::string, ConfigValues> table = [] {
    const ConfigValues common = {
        {"augment.weak.crop_size", "0"},           {"augment.weak.rotations", "0,90,180,270"},
        {"augment.weak.hflip_prob", "0.5"},        {"augment.weak.vflip_prob", "0.5"},
        {"augment.strong.jitter_brightness", "0.5"}, {"augment.strong.jitter_contrast", "0.5"},
        {"augment.strong.jitter_saturation", "0.5"}, {"augment.strong.jitter_hue", "0.25"},
        {"augment.strong.jitter_prob", "0.8"},       {"augment.strong.grayscale_prob", "0.2"},
        {"augment.strong.blur_prob", "0.5"},         {"augment.strong.blur_sigma_lo", "0.1"},
        {"augment.strong.blur_sigma_hi", "2.0"},     {"augment.strong.cutmix_prob", "0.5"},
        {"augment.strong.cutmix_area_lo", "0.02"},   {"augment.strong.cutmix_area_hi", "0.4"},
    };
    ConfigValues faithful = common;
    faithful["augment.strong.cutmix_prob"] = "0";
    return std::map<std::string, ConfigValues>{{"unimatch-default", common}, {"paper-faithful", faithful}};
  }();
  return table;
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k = {
        {"run_id", "run", "run directory name under output_dir"},
        {"output_dir", "runs", "root for all run outputs"},
        {"seed", "0", "seed for initialization, shuffling and augmentation"},
        {"data.dataset", "hubmap_kidney", "dataset label used in reports"},
        {"data.labeled", "", "labeled training manifest (JSON-Lines)"},
        {"data.unlabeled", "", "unlabeled training manifest"},
        {"data.validation", "", "validation manifest used to pick best.ckpt"},
        {"model.arch", "segformer", "segformer | att_unet"},
        {"model.variant", "b1", "b0..b5, tiny, small for segformer; tiny, small, full for att_unet"},
        {"model.num_classes", "2", "output classes"},
        {"model.drop_rate_fp", "0.5", "channel dropout rate of the feature-perturbation stream"},
        {"model.init_weights", "", "optional checkpoint to initialize weights from (same architecture)"},
        {"train.method", "supervised", "supervised | fixmatch | unimatch"},
        {"train.lr", "0.0001", "initial learning rate"},
        {"train.momentum", "0.9", "SGD momentum"},
        {"train.batch_size_labeled", "10", "labeled images per step"},
        {"train.batch_size_unlabeled", "0", "unlabeled images per step (0 = labeled batch size)"},
        {"train.epochs", "30", "passes over the labeled set"},
        {"train.tau", "0.95", "pseudo-label confidence threshold"},
        {"train.lambda_u", "1.0", "unsupervised loss weight"},
        {"train.w_fp", "0.5", "feature-perturbation stream weight"},
        {"train.fp_mode", "feature_dropout", "feature_dropout | off (UniMatch feature-perturbation stream)"},
        {"train.lr_schedule", "constant", "constant | poly"},
        {"train.poly_power", "0.9", "exponent of the poly schedule"},
        {"train.dice_loss_weight", "0", "weight of an extra soft-Dice term on labeled data"},
        {"train.keep_epoch_checkpoints", "true", "write epoch_<n>.ckpt every epoch"},
        {"augment.preset", "unimatch-default", "unimatch-default | paper-faithful"},
        {"augment.weak.crop_size", "", "square crop side, 0 = full patch (default from augment.preset)"},
        {"augment.weak.rotations", "", "allowed rotations in degrees, multiples of 90 (default from augment.preset)"},
        {"augment.weak.hflip_prob", "", "horizontal flip probability (default from augment.preset)"},
        {"augment.weak.vflip_prob", "", "vertical flip probability (default from augment.preset)"},
        {"augment.strong.jitter_brightness", "", "max brightness factor deviation (default from augment.preset)"},
        {"augment.strong.jitter_contrast", "", "max contrast factor deviation (default from augment.preset)"},
        {"augment.strong.jitter_saturation", "", "max saturation factor deviation (default from augment.preset)"},
        {"augment.strong.jitter_hue", "", "max hue shift in turns, <= 0.5 (default from augment.preset)"},
        {"augment.strong.jitter_prob", "", "probability of applying color jitter (default from augment.preset)"},
        {"augment.strong.grayscale_prob", "", "probability of grayscale conversion (default from augment.preset)"},
        {"augment.strong.blur_prob", "", "probability of Gaussian blur (default from augment.preset)"},
        {"augment.strong.blur_sigma_lo", "", "smallest blur sigma in pixels (default from augment.preset)"},
        {"augment.strong.blur_sigma_hi", "", "largest blur sigma in pixels (default from augment.preset)"},
        {"augment.strong.cutmix_prob", "", "probability of pasting a CutMix box from a partner image (default from augment.preset)"},
        {"augment.strong.cutmix_area_lo", "", "smallest CutMix box area as a fraction of the patch (default from augment.preset)"},
        {"augment.strong.cutmix_area_hi", "", "largest CutMix box area as a fraction of the patch (default from augment.preset)"},
        {"eval.manifests", "", "comma-separated manifests to evaluate"},
        {"eval.aggregation", "micro", "micro | macro"},
        {"cv.folds", "5", "folds for cross-validation"},
        {"ablate.fractions", "1/8,1/4,1/2,1", "labeled fractions for the fraction axis"},
        {"ablate.centers", "1,2,3", "center counts for the centers axis"},
        {"ablate.per_center", "100", "unlabeled patches drawn per center"},
        {"ablate.backbones", "b0,b1,b2,b3,b4,b5", "variants for the backbone axis"},
        {"prepare.root", "", "dataset directory holding images/ and masks/"},
        {"prepare.dataset", "hubmap_kidney", "hubmap_kidney | hubmap_vasc | kpmp | nurture"},
        {"prepare.layout", "", "layout spec, key=value;key=value"},
        {"prepare.role", "labeled_train", "labeled_train | unlabeled_train | external_validation"},
        {"prepare.folds", "0", "assign WSI-disjoint folds when > 0"},
    };
    return k;
  }();
  return keys;
}

std::string valid_keys_list() {
  std::string s;
  for (const auto& k : config_keys()) s += (s.empty() ? "" : ",") + k.name;
  return s;
}

bool is_config_key(const std::string& key) {
  const auto& keys = config_keys();
  return std::any_of(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.name == key; });
}

std::string env_var_for_key(const std::string& key) {
  std::string out = kEnvPrefix;
  for (char c : key) {
    if (c == '.') out += "__";
    else out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

static void check_key(const std::string& key, const std::string& origin) {
  if (!is_config_key(key))
    throw ConfigError("unknown config key '" + key + "' in " + origin + "; valid keys: " + valid_keys_list());
}

ConfigValues parse_config_text(const std::string& text, const std::string& origin) {
  ConfigValues out;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    check_key(key, origin + ":" + std::to_string(lineno));
    out[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return out;
}

ConfigValues read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

ConfigValues env_overrides() {
  ConfigValues out;
  const std::string prefix = kEnvPrefix;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    std::string key;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (name.compare(i, 2, "__") == 0) {
        key += '.';
        ++i;
      } else {
        key += static_cast<char>(std::tolower(static_cast<unsigned char>(name[i])));
      }
    }
    check_key(key, "environment variable " + entry.substr(0, eq));
    out[key] = eq == std::string::npos ? "" : entry.substr(eq + 1);
  }
  return out;
}

ConfigValues parse_assignments(const std::vector<std::string>& assignments) {
  ConfigValues out;
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + a + "'");
    const std::string key = trim(std::string_view(a).substr(0, eq));
    check_key(key, "command line");
    out[key] = trim(std::string_view(a).substr(eq + 1));
  }
  return out;
}

std::vector<std::string> augment_presets() {
  std::vector<std::string> names;
  for (const auto& [name, _] : preset_table()) names.push_back(name);
  return names;
}

RunConfig resolve_config(const std::vector<ConfigValues>& layers) {
  ConfigValues v;
  for (const auto& k : config_keys()) v[k.name] = k.default_value;
  std::set<std::string> explicit_keys;
  for (const auto& layer : layers)
    for (const auto& [key, value] : layer) {
      check_key(key, "config");
      v[key] = value;
      explicit_keys.insert(key);
    }

  const auto preset_it = preset_table().find(v["augment.preset"]);
  if (preset_it == preset_table().end())
    bad_value("augment.preset", v["augment.preset"], "one of unimatch-default, paper-faithful");
  for (const auto& [key, value] : preset_it->second)
    if (!explicit_keys.count(key)) v[key] = value;

  RunConfig c;
  c.values = v;
  auto get = [&](const char* key) -> const std::string& { return v.at(key); };
  auto dbl = [&](const char* key) { return to_double(key, get(key)); };
  auto i64 = [&](const char* key) { return to_int(key, get(key)); };

  c.run_id = get("run_id");
  if (c.run_id.empty() || c.run_id.find('/') != std::string::npos)
    bad_value("run_id", c.run_id, "a non-empty name without '/'");
  c.output_dir = get("output_dir");
  c.seed = to_uint("seed", get("seed"));
  c.dataset = get("data.dataset");
  c.labeled_manifest = get("data.labeled");
  c.unlabeled_manifest = get("data.unlabeled");
  c.validation_manifest = get("data.validation");
  c.eval_manifests = split_list(get("eval.manifests"));

  try {
    c.aggregation = parse_aggregation(get("eval.aggregation"));
    c.model = model_config(parse_architecture(get("model.arch")), get("model.variant"));
    c.train.method = parse_method(get("train.method"));
    c.train.lr_schedule = parse_lr_schedule(get("train.lr_schedule"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.model.num_classes = i64("model.num_classes");
  c.model.drop_rate_fp = dbl("model.drop_rate_fp");
  c.model.init_seed = c.seed;
  c.init_weights = get("model.init_weights");

  c.train.lr = dbl("train.lr");
  c.train.momentum = dbl("train.momentum");
  c.train.batch_size_labeled = i64("train.batch_size_labeled");
  c.train.batch_size_unlabeled = i64("train.batch_size_unlabeled");
  c.train.epochs = i64("train.epochs");
  c.train.tau = dbl("train.tau");
  c.train.lambda_u = dbl("train.lambda_u");
  c.train.w_fp = dbl("train.w_fp");
  const std::string fp_mode = get("train.fp_mode");
  if (fp_mode != "feature_dropout" && fp_mode != "off") bad_value("train.fp_mode", fp_mode, "feature_dropout or off");
  c.train.feature_perturbation = fp_mode == "feature_dropout";
  c.train.poly_power = dbl("train.poly_power");
  c.train.dice_loss_weight = dbl("train.dice_loss_weight");
  c.train.seed = c.seed;
  c.keep_epoch_checkpoints = to_bool("train.keep_epoch_checkpoints", get("train.keep_epoch_checkpoints"));

  WeakAugSpec& w = c.augment.weak;
  w.crop_size = i64("augment.weak.crop_size");
  w.rotation_choices.clear();
  for (const auto& r : split_list(get("augment.weak.rotations")))
    w.rotation_choices.push_back(static_cast<int>(to_int("augment.weak.rotations", r)));
  w.hflip_prob = dbl("augment.weak.hflip_prob");
  w.vflip_prob = dbl("augment.weak.vflip_prob");
  StrongAugSpec& s = c.augment.strong;
  s.jitter_brightness = dbl("augment.strong.jitter_brightness");
  s.jitter_contrast = dbl("augment.strong.jitter_contrast");
  s.jitter_saturation = dbl("augment.strong.jitter_saturation");
  s.jitter_hue = dbl("augment.strong.jitter_hue");
  s.jitter_prob = dbl("augment.strong.jitter_prob");
  s.grayscale_prob = dbl("augment.strong.grayscale_prob");
  s.blur_prob = dbl("augment.strong.blur_prob");
  s.blur_sigma_lo = dbl("augment.strong.blur_sigma_lo");
  s.blur_sigma_hi = dbl("augment.strong.blur_sigma_hi");
  s.cutmix_prob = dbl("augment.strong.cutmix_prob");
  s.cutmix_area_lo = dbl("augment.strong.cutmix_area_lo");
  s.cutmix_area_hi = dbl("augment.strong.cutmix_area_hi");

  c.cv_folds = static_cast<int>(i64("cv.folds"));
  c.ablation.fractions = split_list(get("ablate.fractions"));
  for (const auto& n : split_list(get("ablate.centers")))
    c.ablation.centers.push_back(static_cast<int>(to_int("ablate.centers", n)));
  c.ablation.per_center = static_cast<int>(i64("ablate.per_center"));
  c.ablation.backbones = split_list(get("ablate.backbones"));

  c.prepare.root = get("prepare.root");
  c.prepare.dataset = get("prepare.dataset");
  c.prepare.layout = get("prepare.layout");
  c.prepare.role = get("prepare.role");
  c.prepare.folds = static_cast<int>(i64("prepare.folds"));

  try {
    c.model.validate();
    c.train.validate();
    c.augment.weak.validate();
    c.augment.strong.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (c.cv_folds < 2) bad_value("cv.folds", get("cv.folds"), "an integer >= 2");
  return c;
}

std::string config_snapshot(const RunConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + config.values.at(k.name) + "\n";
  return out;
}

}  // namespace glomseg
