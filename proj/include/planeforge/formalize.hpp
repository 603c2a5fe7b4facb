#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "planeforge/geometry.hpp"
#include "planeforge/net.hpp"
#include "planeforge/train.hpp"

namespace pf::formalize {

// Piecewise-constant coloring of the fundamental domain on a k x l (x m)
// grid. Colors are 1-based; c + 1 is the bonus color. avoided_distances has
// one entry per regular color.
struct CellColoring {
  geom::Lattice lattice;
  std::array<int, 3> resolution{1, 1, 1};
  std::vector<std::uint8_t> colors;  // row-major, i-major
  std::vector<double> avoided_distances;

  int num_regular_colors() const { return static_cast<int>(avoided_distances.size()); }
  int bonus_color() const { return num_regular_colors() + 1; }
  std::size_t cell_count() const;
  std::size_t linear_index(int i, int j, int k = 0) const;
  std::array<int, 3> cell_of_linear(std::size_t lin) const;
  geom::Cell cell(int i, int j, int k = 0) const;
  int color_at_cell(int i, int j, int k = 0) const;
  // Color of a world point under the periodic extension (half-open cells).
  int color_at(const geom::Vec& point) const;
  double max_cell_diameter() const;
  double max_avoided_distance() const;
};

struct ConflictEdge {
  std::size_t a = 0;  // linear cell indices
  std::size_t b = 0;
  std::array<int, 3> translate{0, 0, 0};
  int color = 0;
};

struct ConflictGraph {
  std::vector<ConflictEdge> edges;
};

struct Violation {
  std::size_t cell_a = 0;
  std::size_t cell_b = 0;
  std::array<int, 3> translate{0, 0, 0};
  int color = 0;
  geom::DistanceInterval interval;
};

struct VerificationReport {
  std::vector<Violation> violations;
  double bonus_fraction = 0.0;
  bool certified = false;
};

struct PeriodicityParams {
  int num_directions = 720;
  double max_offset = 4.0;
  double offset_step = 0.01;
  double similarity_threshold = 0.05;
  int line_samples = 512;
  double line_radius = 3.0;  // radial lines span [-line_radius, line_radius]
  // TV level that must be crossed before a dip counts as a period (skips the
  // trivial similarity near offset zero).
  double rise_level = 0.15;
};

// Detects directions of periodicity by comparing the coloring with its own
// translate along radial lines; returns the two (2D) or three (3D) minimal
// periods that are sufficiently separated in angle. Throws NoPeriodicityFound.
geom::Lattice extract_periodicity(const net::ColoringFunction& coloring,
                                  const PeriodicityParams& params);

// Algorithm step 3: fresh network with the periodic input wrap, trained on
// the same loss spec.
std::pair<net::Network, train::TrainingHistory> retrain_periodic(
    const net::Network& network, const geom::Lattice& lattice,
    const train::TrainingConfig& config, RngStream rng);

// Algorithm step 4: argmax color of the network at each cell center (ties
// toward the lowest index).
CellColoring discretize(const net::Network& network, const geom::Lattice& lattice,
                        const std::array<int, 3>& resolution,
                        const std::vector<double>& avoided_distances);

// All unordered cell pairs (with translate tag) that share a non-bonus color
// and whose conservative distance interval contains that color's avoided
// distance. Stencil-based; complete and sound.
ConflictGraph conflict_edges(const CellColoring& coloring);

// Greedy conflict elimination: `rounds` passes of recoloring conflicting
// cells to regular colors that zero their incident conflicts, then a hitting
// set of the remaining edges recolored to the bonus color. The result has an
// empty conflict graph.
CellColoring repair(const CellColoring& coloring, int rounds);

// Independent certification: re-enumerates all constraints by direct pair
// scanning (separate code path from conflict_edges, no shared incremental
// state) and reports every violating pair plus the exact bonus fraction.
VerificationReport verify(const CellColoring& coloring);

// Hitting set of edges used by repair: min of greedy-by-degree and a
// maximal-matching cover, so the result is at most twice the optimum.
std::vector<std::size_t> hitting_set(const std::vector<std::pair<std::size_t, std::size_t>>& edges);

struct FormalizeParams {
  std::array<int, 3> resolution{200, 200, 1};
  int repair_rounds = 3;
  PeriodicityParams periodicity;
  std::optional<geom::Lattice> manual_lattice;  // skips extraction when set
};

struct PipelineResult {
  CellColoring coloring;
  VerificationReport report;
  geom::Lattice lattice;
  net::Network periodic_network;
};

// Steps 2-5 for an already trained network: extract periodicity (unless a
// lattice is supplied), retrain with the exact wrap, discretize, repair, then
// certify.
PipelineResult formalize_pipeline(const net::Network& trained,
                                  const train::TrainingConfig& retrain_config,
                                  const FormalizeParams& params, RngStream rng);

// JSON round-trip (format_version 1).
void save_cell_coloring(const CellColoring& coloring, const std::string& path);
CellColoring load_cell_coloring(const std::string& path);
void save_report(const VerificationReport& report, const std::string& path);

}  // namespace pf::formalize
