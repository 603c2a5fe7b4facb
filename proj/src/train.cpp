#include "planeforge/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "planeforge/errors.hpp"
#include "planeforge/evaluate.hpp"

namespace pf::train {

namespace {
// Top-level substream labels under the run seed.
constexpr std::uint64_t kStreamSteps = 0;
constexpr std::uint64_t kStreamEval = 1;
}  // namespace

AdamState make_adam_state(std::size_t parameter_count) {
  AdamState s;
  s.m.assign(parameter_count, 0.0);
  s.v.assign(parameter_count, 0.0);
  return s;
}

double lr_at(std::int64_t step, const TrainingConfig& config) {
  if (step < 0 || step >= config.steps)
    throw std::invalid_argument("lr_at: step outside [0, steps)");
  double frac = static_cast<double>(step) / static_cast<double>(config.steps);
  return config.lr_initial * (1.0 - frac);
}

void adam_update(AdamState& state, std::vector<double>& params,
                 const std::vector<double>& grads, double lr,
                 const TrainingConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw std::invalid_argument("adam_update: shape mismatch");
  if (lr < 0.0) throw std::invalid_argument("adam_update: negative learning rate");
  for (double g : grads)
    if (!std::isfinite(g))
      throw NumericError("adam_update: non-finite gradient component");
  state.step += 1;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    double g = grads[i];
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + config.adam_epsilon);
  }
}

std::pair<net::Network, TrainingHistory> train(const net::Network& network,
                                               const TrainingConfig& config,
                                               RngStream rng,
                                               const TrainCallbacks* callbacks) {
  if (config.steps < 1) throw ConfigError("training.steps: must be >= 1");
  if (!(config.lr_initial > 0.0)) throw ConfigError("training.lr_initial: must be positive");
  config.loss_spec.validate();

  net::Network net = network;
  net::NetworkColoring coloring(net);
  {
    // Surface arity/dimension mismatches before the first step.
    const loss::LossSpec& ls = config.loss_spec;
    int want_out = ls.num_colors + (ls.variant == loss::Variant::Lagrangian ? 1 : 0);
    if (net.architecture.num_colors != want_out)
      throw ConfigError("network.num_colors: expected " + std::to_string(want_out) +
                        " outputs for this loss spec");
    if (net.architecture.input_dim != ls.expected_input_dim())
      throw ConfigError("network.input_dim: expected " +
                        std::to_string(ls.expected_input_dim()) + " for this loss spec");
  }

  AdamState adam = make_adam_state(net.parameters.size());
  TrainingHistory history;
  RngStream step_rng = rng.substream(kStreamSteps);
  RngStream eval_rng = rng.substream(kStreamEval);

  for (std::int64_t step = 0; step < config.steps; ++step) {
    double lr = lr_at(step, config);
    loss::LossEstimate est = loss::estimate_loss(
        coloring, config.loss_spec, step_rng.substream(static_cast<std::uint64_t>(step)),
        config.workers);
    if (!std::isfinite(est.value))
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    adam_update(adam, net.parameters, est.parameter_gradient, lr, config);

    bool last = step + 1 == config.steps;
    if ((step + 1) % config.eval_every == 0 || last) {
      HistoryRecord rec;
      rec.step = step;
      rec.lr = lr;
      rec.loss = est.value;
      rec.conflict_rate = eval::argmax_conflict_rate(
          coloring, config.loss_spec, config.eval_pairs,
          eval_rng.substream(static_cast<std::uint64_t>(step)), config.workers);
      history.records.push_back(rec);
      if (callbacks && callbacks->on_eval) callbacks->on_eval(rec);
    }
    if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        callbacks && callbacks->on_checkpoint)
      callbacks->on_checkpoint(step, net);
  }
  return {std::move(net), std::move(history)};
}

void write_history_csv(const TrainingHistory& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("history: cannot open '" + path + "' for writing");
  out << "step,lr,loss,conflict_rate\n";
  char buf[160];
  for (const auto& r : history.records) {
    std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.step), r.lr, r.loss, r.conflict_rate);
    out << buf;
  }
}

}  // namespace pf::train
