#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "glomseg/data_catalog.hpp"
#include "glomseg/evaluation.hpp"
#include "glomseg/models.hpp"
#include "glomseg/training.hpp"

namespace glomseg {

/// Bad key, bad value or unreadable config file.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string doc;
};

/// Every recognised key, in snapshot order.
const std::vector<ConfigKey>& config_keys();
/// Comma-separated key names, for error messages.
std::string valid_keys_list();
bool is_config_key(const std::string& key);

inline constexpr const char* kEnvPrefix = "GLOMSEG_";
/// "train.lr" <-> "GLOMSEG_TRAIN__LR".
std::string env_var_for_key(const std::string& key);

using ConfigValues = std::map<std::string, std::string>;

/// Flat `key = value` text; `#` starts a comment. Unknown keys throw
/// ConfigError listing the valid ones.
ConfigValues parse_config_text(const std::string& text, const std::string& origin = "<text>");
ConfigValues read_config_file(const std::filesystem::path& path);
/// Collects GLOMSEG_* variables from `environ`.
ConfigValues env_overrides();
/// Parses "key=value" assignments given on the command line.
ConfigValues parse_assignments(const std::vector<std::string>& assignments);

/// Named augmentation presets: "unimatch-default" (CutMix on) and
/// "paper-faithful" (CutMix off).
std::vector<std::string> augment_presets();

struct AblationSettings {
  std::vector<std::string> fractions;
  std::vector<int> centers;
  int per_center = 100;
  std::vector<std::string> backbones;
};

struct PrepareSettings {
  std::string root;
  std::string dataset;
  std::string layout;
  std::string role;
  int folds = 0;
};

struct RunConfig {
  std::string run_id;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::string dataset;  // label for reports
  std::string labeled_manifest;
  std::string unlabeled_manifest;
  std::string validation_manifest;
  std::vector<std::string> eval_manifests;
  Aggregation aggregation = Aggregation::kMicro;
  ModelConfig model;
  /// Checkpoint whose weights seed the model before training (may be empty).
  std::string init_weights;
  TrainConfig train;
  AugmentConfig augment;
  bool keep_epoch_checkpoints = true;
  int cv_folds = 5;
  AblationSettings ablation;
  PrepareSettings prepare;

  /// Resolved value of every key.
  ConfigValues values;

  std::filesystem::path run_dir() const { return output_dir / run_id; }
};

/// Merges the layers (later wins) over the defaults and converts every value.
/// Augmentation keys not set explicitly take their value from augment.preset.
RunConfig resolve_config(const std::vector<ConfigValues>& layers);

/// `key = value` for every key, in config_keys() order; feeding it back
/// through parse_config_text/resolve_config reproduces it exactly.
std::string config_snapshot(const RunConfig& config);

}  // namespace glomseg
