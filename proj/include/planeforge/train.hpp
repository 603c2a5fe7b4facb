#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "planeforge/loss.hpp"
#include "planeforge/net.hpp"

namespace pf::train {

struct TrainingConfig {
  std::int64_t steps = 16384;
  double lr_initial = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  loss::LossSpec loss_spec;
  std::int64_t checkpoint_every = 0;  // 0 = no periodic checkpoints
  std::int64_t eval_every = 1024;
  std::size_t eval_pairs = 100000;  // conflict-rate samples per history record
  int workers = 1;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

AdamState make_adam_state(std::size_t parameter_count);

struct HistoryRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double conflict_rate = 0.0;
};

struct TrainingHistory {
  std::vector<HistoryRecord> records;
};

// Linearly decaying schedule: lr(0) = lr_initial, affine to 0 at step = steps.
double lr_at(std::int64_t step, const TrainingConfig& config);

// Standard bias-corrected Adam. Aborts with NumericError on non-finite
// gradient components.
void adam_update(AdamState& state, std::vector<double>& params,
                 const std::vector<double>& grads, double lr,
                 const TrainingConfig& config);

// Optional per-run hooks (periodic checkpoints, progress lines).
struct TrainCallbacks {
  std::function<void(std::int64_t step, const net::Network&)> on_checkpoint;
  std::function<void(const HistoryRecord&)> on_eval;
};

// Runs `steps` iterations of estimate-then-update. Fully deterministic given
// (network, config, rng). Throws NumericError on a non-finite loss.
std::pair<net::Network, TrainingHistory> train(const net::Network& network,
                                               const TrainingConfig& config,
                                               RngStream rng,
                                               const TrainCallbacks* callbacks = nullptr);

void write_history_csv(const TrainingHistory& history, const std::string& path);

}  // namespace pf::train
