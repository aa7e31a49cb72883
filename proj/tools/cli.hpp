#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "forge/hypernet.hpp"

namespace forge::cli {

/// Training experiment read from a key=value file. Relative paths resolve
/// against the directory that holds the file.
struct ExperimentConfig {
  std::filesystem::path data_dir;
  std::vector<std::string> train_materials;
  std::vector<std::string> test_materials;
  std::size_t test_samples = 4000;
  std::filesystem::path checkpoint = "model.bhn";
  std::filesystem::path log = "train.log";
  bool allow_reduced = false;
  std::size_t threads = 0;
  ModelConfig model;
  TrainConfig train;
};

/// Throws ParseError naming the offending line or key.
ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Entry point shared by the executable and the tests. Returns 0 or 1.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace forge::cli
