#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planeforge/net.hpp"
#include "planeforge/rng.hpp"

namespace pf::loss {

enum class Variant { Unit, OffDiagonal, Lagrangian, Triangle };

std::string variant_name(Variant v);

// A fixed avoided distance, or a range sampled per center point and appended
// (rescaled) to the network input.
struct DistanceSpec {
  double lo = 1.0;
  double hi = 1.0;
  bool ranged() const { return lo != hi; }
  static DistanceSpec fixed(double d) { return {d, d}; }
  static DistanceSpec range(double lo, double hi) { return {lo, hi}; }
};

struct LossSpec {
  Variant variant = Variant::Unit;
  int num_colors = 1;     // c; Lagrangian colorings output c+1 components
  int dimension = 2;      // spatial dimension n
  double box_radius = 3.0;
  double p_norm = 2.0;
  std::vector<DistanceSpec> distances;  // per color (OffDiagonal); else {1}
  double lagrange_lambda = 0.0;
  DistanceSpec triangle_a = DistanceSpec::fixed(1.0);
  DistanceSpec triangle_b = DistanceSpec::fixed(1.0);
  std::size_t batch_centers = 2048;      // n
  std::size_t batch_peripherals = 8;     // m

  // Indices of ranged distance parameters in color order (Triangle: a then
  // b). These are the channels appended to the network input.
  std::vector<int> ranged_indices() const;
  // Expected network input dim: dimension + number of ranged parameters.
  int expected_input_dim() const;
  void validate() const;  // throws ConfigError on inconsistency
};

struct LossEstimate {
  double value = 0.0;
  std::vector<double> parameter_gradient;  // empty for analytic colorings
  std::uint64_t samples_used = 0;
};

// Monte Carlo estimate of the unit-distance conflict loss
// (1/nm) sum_i sum_j p(x_i)^T p(y_ij), x ~ Unif box, y ~ Unif sphere of
// radius 1 (or the p_norm sphere) around x. Gradient flows through both
// evaluations when the coloring is network-backed.
LossEstimate estimate_unit_loss(const net::ColoringFunction& coloring,
                                const LossSpec& spec, RngStream rng,
                                int workers = 1);

// Per-color avoided distances d_k; ranged distances are drawn per center,
// appended (rescaled) to the inputs of both evaluations, and scale the shared
// peripheral direction, so all-fixed-unit distances reduce to the unit loss
// draw-for-draw.
LossEstimate estimate_offdiag_loss(const net::ColoringFunction& coloring,
                                   const LossSpec& spec, RngStream rng,
                                   int workers = 1);

// Unit loss over the first c components plus lambda times the mean bonus
// mass over the box samples.
LossEstimate estimate_lagrangian_loss(const net::ColoringFunction& coloring,
                                      const LossSpec& spec, RngStream rng,
                                      int workers = 1);

// Monochromatic-triangle loss with third points from the circle
// intersections; z_1 and z_2 enter averaged with weight 1/2.
LossEstimate estimate_triangle_loss(const net::ColoringFunction& coloring,
                                    const LossSpec& spec, RngStream rng,
                                    int workers = 1);

// Dispatch on spec.variant.
LossEstimate estimate_loss(const net::ColoringFunction& coloring,
                           const LossSpec& spec, RngStream rng,
                           int workers = 1);

// OffDiagonal estimate at pinned distance values (all colors evaluated at
// the given d, ranged channels fed the rescaled values). Also returns
// d(value)/d(d_k), including the geometric dependence of the peripheral
// points on d_k. Used by post-training distance optimization.
struct PinnedEstimate {
  double value = 0.0;
  std::vector<double> distance_gradient;
  std::uint64_t samples_used = 0;
};
PinnedEstimate estimate_offdiag_at(const net::ColoringFunction& coloring,
                                   const LossSpec& spec,
                                   const std::vector<double>& distance_values,
                                   RngStream rng, int workers = 1);

}  // namespace pf::loss
