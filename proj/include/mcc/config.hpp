#pragma once

#include "mcc/train.hpp"

namespace mcc::config {

struct ParsedConfig {
  model::ModelConfig model;
  train::TrainConfig train;
};

// Flat "key = value" file with '#' comments. Keys mirror the model and
// training configuration fields; unknown keys are errors, and total_steps
// is required.
ParsedConfig load_config_file(const std::string& path);

}  // namespace mcc::config
