#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "bridgekd/datagen.hpp"
#include "bridgekd/distill.hpp"

namespace bridgekd {

// Run configuration, read from `section.key = value` files. Every key is
// registered with a description and a default; unknown keys, duplicates and
// malformed values are rejected with the offending line. '#' starts a
// comment anywhere on a line.

struct RunConfig {
  uint64_t seed = 1;
  std::string out_dir = "out/run";

  std::string dataset_dir = "out/dataset";
  int dataset_identities = 60;
  int dataset_samples_per_identity = 40;
  int dataset_hr_size = 64;
  std::vector<int> dataset_resolutions = {32, 16};
  int dataset_variants = 4;
  double dataset_jitter_px = 3.0;

  int teacher_feature_dim = 256;
  double teacher_arch_scale = 1.0;
  int teacher_resolution = 64;
  int teacher_epochs = 10;
  double teacher_lr = 0.01;
  int teacher_batch_size = 32;

  double adapter_lambda = 1.0;
  double adapter_temperature = 4.0;
  bool adapter_literal_temperature = false;
  int adapter_hidden_dim = 512;
  int adapter_out_dim = 128;
  int adapter_epochs = 10;
  double adapter_lr = 0.01;
  int adapter_batch_size = 32;

  std::string distill_mode = "sc";
  std::string distill_teacher = "V";
  std::string distill_teacher_run = "self";
  int distill_resolution = 16;
  int distill_epochs_pretrain = 3;
  int distill_epochs_main = 12;
  double distill_lr = 0.001;
  int distill_batch_size = 32;

  int eval_pairs_pos = 100;
  int eval_pairs_neg = 100;
  int eval_head_epochs = 30;
  double eval_head_lr = 0.1;
  int eval_batch_size = 32;

  double bench_duration_s = 2.0;
  int bench_threads = 1;
  int bench_batch = 32;
  int bench_teacher_batch = 4;

  std::vector<int> grid_resolutions = {16};
  std::vector<std::string> grid_modes = {"c", "dc", "sc"};
  std::vector<std::string> grid_teachers = {"V"};
  std::vector<int> grid_seeds = {1, 2, 3, 4, 5};

  // Views over the shared sections, ready for the stage entry points.
  DatasetConfig dataset() const;
  DistillConfig distill() const;
};

struct ConfigKey {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_registry();

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Applies one `key = value` assignment, e.g. a command line override.
void apply_override(RunConfig& config, const std::string& key, const std::string& value);

// Every key with its default and description, for --help.
std::string config_help();

// Serializes all keys; parsing it back reproduces the config.
std::string config_text(const RunConfig& config);

}  // namespace bridgekd
