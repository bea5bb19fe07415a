#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>

#include "glomseg/models.hpp"

namespace glomseg {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `key = value` lines describing every ModelConfig field.
std::string serialize_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

/// Writes the architecture config, version tag, free-form metadata, and all
/// parameters and buffers. The file is written to a temporary and renamed.
void save_checkpoint(const std::filesystem::path& path, SegmentationModel& model,
                     const std::map<std::string, std::string>& meta = {});

struct LoadedCheckpoint {
  std::unique_ptr<SegmentationModel> model;
  std::map<std::string, std::string> meta;
};

/// Rebuilds the model from the embedded config and restores its state.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Restores state into an existing model; throws CheckpointError if the
/// architecture or any tensor name/shape differs.
std::map<std::string, std::string> load_weights(const std::filesystem::path& path,
                                                SegmentationModel& model);

}  // namespace glomseg
