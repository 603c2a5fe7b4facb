#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "planeforge/loss.hpp"
#include "planeforge/net.hpp"
#include "planeforge/rng.hpp"

namespace pf::eval {

// Analytic reference colorings, used as oracles and baselines.
// - constant: one-hot color 1 everywhere
// - uniform: (1/c, ..., 1/c) everywhere
// - stripes: half-open parallel stripes of the given width cycling through
//   the colors (lower boundary included)
// - hexagonal7: the classical 7-coloring by congruent regular hexagons of
//   the given side length
// - disks1: open disks of the given radius on a hexagonal lattice of the
//   given spacing, color 1 inside and the bonus color outside
struct ReferenceColoringId {
  std::string name;
  int colors = 1;
  double stripe_width = 0.0;
  double hexagon_side = 0.0;
  double disk_radius = 0.0;
  double disk_spacing = 0.0;
};

std::unique_ptr<net::ColoringFunction> reference_coloring(const ReferenceColoringId& id);

// Argmax of a probability vector with ties broken toward the lowest index.
int argmax_color(const double* probs, int count);

// Fraction of sampled constraint tuples (pairs, or triangles under the
// Triangle variant) whose argmax colors collide. Bonus-colored points never
// collide under the Lagrangian variant.
double argmax_conflict_rate(const net::ColoringFunction& coloring,
                            const loss::LossSpec& spec, std::size_t pair_count,
                            RngStream rng, int workers = 1);

// Same, with ranged distance parameters pinned to the given values (fed to
// the network rescaled). `pinned` must cover every color (OffDiagonal) or
// both sides (Triangle; order a, b).
double argmax_conflict_rate_at(const net::ColoringFunction& coloring,
                               const loss::LossSpec& spec,
                               const std::vector<double>& pinned,
                               std::size_t pair_count, RngStream rng,
                               int workers = 1);

struct SweepResult {
  std::vector<double> axis1;  // strictly increasing
  std::vector<double> axis2;  // empty for 1D sweeps
  std::vector<double> rates;  // axis1-major row order for 2D
  std::size_t samples_per_point = 0;

  std::size_t point_count() const {
    return axis1.size() * std::max<std::size_t>(1, axis2.size());
  }
};

// Conflict rate of the argmax coloring per grid point, the grid values fed
// to the network's ranged distance channels. 1D grids sweep the single
// ranged color; 2D grids sweep the two ranged colors in index order.
// Grid values outside the trained ranges are rejected.
SweepResult distance_sweep(const net::ColoringFunction& coloring,
                           const loss::LossSpec& spec,
                           const std::vector<double>& axis1,
                           const std::vector<double>& axis2,
                           std::size_t pair_count, RngStream rng,
                           int workers = 1);

// Pointwise minimum across runs (commutative, associative, idempotent).
SweepResult sweep_min(const SweepResult& a, const SweepResult& b);

void write_sweep_csv(const SweepResult& sweep, const std::string& path);

// Wraps a coloring whose input carries parameter channels, pinning those
// channels to fixed (already rescaled) values so the result is purely
// spatial. Used to render or probe ranged networks at chosen distances.
class PinnedColoring final : public net::ColoringFunction {
 public:
  PinnedColoring(const net::ColoringFunction& base, std::vector<double> channels);
  int num_colors() const override { return base_->num_colors(); }
  int input_dim() const override { return base_->spatial_dim(); }
  int spatial_dim() const override { return base_->spatial_dim(); }
  void evaluate(std::span<const double> inputs, std::size_t count,
                double* probs_out) const override;

 private:
  const net::ColoringFunction* base_;
  std::vector<double> channels_;
};

struct DistanceOptimizationResult {
  std::vector<double> distances;
  double loss = 0.0;        // smooth loss at the returned distances
  int iterations_used = 0;
};

// Post-training polychromatic search: descends the smooth loss with respect
// to the distance inputs via input gradients, with backtracking line search
// (never increases the loss) and distances clamped to the trained ranges.
// When use_curvature is set, steps are preconditioned by a finite-difference
// diagonal curvature estimate.
DistanceOptimizationResult optimize_distances(
    const net::ColoringFunction& coloring, const loss::LossSpec& spec,
    std::vector<double> initial_distances, int iterations, RngStream rng,
    bool use_curvature = false, int workers = 1);

}  // namespace pf::eval
