#pragma once

#include <string>

#include "planeforge/formalize.hpp"
#include "planeforge/loss.hpp"
#include "planeforge/net.hpp"
#include "planeforge/train.hpp"

namespace pf::config {

// Complete serializable description of one experiment. A minimal config is
// {"variant": "unit", "colors": 7}; everything else has defaults.
struct RunConfig {
  loss::LossSpec loss_spec;
  std::vector<int> hidden_widths{128, 128};
  double omega0 = 30.0;
  std::int64_t steps = 16384;
  double lr_initial = 1e-3;
  std::int64_t eval_every = 1024;
  std::int64_t checkpoint_every = 0;
  std::size_t eval_pairs = 100000;
  formalize::FormalizeParams formalize_params;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int workers = 1;

  net::NetworkArchitecture architecture() const;
  train::TrainingConfig training_config() const;
};

// Parses and validates; throws ConfigError with a field-path message.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string dump_run_config(const RunConfig& config);

}  // namespace pf::config
