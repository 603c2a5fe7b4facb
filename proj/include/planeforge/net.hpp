#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "planeforge/geometry.hpp"
#include "planeforge/rng.hpp"

namespace pf::net {

// Shape of the coordinate network p_theta: sine-activated hidden layers and a
// softmax head producing a distribution over colors. input_dim counts spatial
// coordinates plus any appended (rescaled) distance parameters. When
// periodic_wrap is set, spatial coordinates are mapped to fractional
// coordinates of the fundamental domain before any layer arithmetic, making
// the output exactly lattice-periodic.
struct NetworkArchitecture {
  int input_dim = 2;
  int spatial_dim = 2;
  std::vector<int> hidden_widths;
  int num_colors = 1;
  double omega0 = 30.0;
  std::optional<geom::Lattice> periodic_wrap;
};

std::size_t parameter_count(const NetworkArchitecture& arch);

struct Network {
  NetworkArchitecture architecture;
  std::vector<double> parameters;  // per layer: W row-major (out x in), then b
  std::uint64_t rng_seed = 0;
};

// Per-layer records retained for the backward pass.
struct EvaluationTape {
  std::size_t count = 0;
  std::vector<double> input;                 // post-wrap, count x input_dim
  std::vector<std::vector<double>> preacts;  // hidden layers, count x width
  std::vector<std::vector<double>> acts;     // sin(omega * preact)
  std::vector<std::vector<double>> dacts;    // omega * cos(omega * preact)
  std::vector<double> probs;                 // count x num_colors
  const Network* source = nullptr;

  std::size_t layer_count() const { return preacts.size() + 1; }
};

// Deterministic initialization given (arch, seed): first layer weights
// uniform in +-1/fan_in, deeper layers uniform in +-sqrt(6/fan_in)/omega0;
// biases drawn from the same range as their layer's weights.
Network init_network(const NetworkArchitecture& arch, std::uint64_t seed);

// Fractional coordinates of a point in the fundamental domain:
// x -> M^-1 x (mod 1), componentwise in [0, 1).
geom::Vec wrap_periodic(const geom::Vec& point, const geom::Lattice& lattice);

// Batched evaluation; inputs are count x input_dim row-major, outputs are
// count x num_colors probability vectors.
void evaluate(const Network& net, std::span<const double> inputs,
              std::size_t count, double* probs_out);

EvaluationTape evaluate_with_tape(const Network& net,
                                  std::span<const double> inputs,
                                  std::size_t count, double* probs_out);

// Accumulates d(sum <cotangent_i, p_i>)/d(theta) into param_grad (caller
// zeroes it) and, when input_grad is non-null, writes the gradient with
// respect to the raw inputs (chained through the periodic wrap and including
// appended parameter channels).
void backward(const Network& net, const EvaluationTape& tape,
              std::span<const double> output_cotangents, double* param_grad,
              double* input_grad = nullptr);

// Checkpoint file round-trip (JSON, format_version 1).
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

// Affine rescale of a parameter from [lo, hi] to [-1, 1] before it enters
// the network, keeping magnitudes commensurate with spatial inputs.
inline double rescale_param(double v, double lo, double hi) {
  return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

// A point (plus optional distance parameters) -> probability vector mapping,
// realized by a Network or by an analytic reference coloring.
class ColoringFunction {
 public:
  virtual ~ColoringFunction() = default;
  virtual int num_colors() const = 0;
  virtual int input_dim() const = 0;
  virtual int spatial_dim() const = 0;
  virtual void evaluate(std::span<const double> inputs, std::size_t count,
                        double* probs_out) const = 0;
  // Non-null when the coloring is backed by a trainable network.
  virtual const Network* network() const { return nullptr; }
};

class NetworkColoring final : public ColoringFunction {
 public:
  explicit NetworkColoring(const Network& net) : net_(&net) {}
  int num_colors() const override { return net_->architecture.num_colors; }
  int input_dim() const override { return net_->architecture.input_dim; }
  int spatial_dim() const override { return net_->architecture.spatial_dim; }
  void evaluate(std::span<const double> inputs, std::size_t count,
                double* probs_out) const override {
    net::evaluate(*net_, inputs, count, probs_out);
  }
  const Network* network() const override { return net_; }

 private:
  const Network* net_;
};

}  // namespace pf::net
