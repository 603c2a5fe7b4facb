#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "planeforge/rng.hpp"

namespace pf::geom {

// Fixed-capacity point/vector for 2 or 3 dimensions.
struct Vec {
  std::array<double, 3> c{0.0, 0.0, 0.0};
  int dim = 2;

  Vec() = default;
  Vec(double x, double y) : c{x, y, 0.0}, dim(2) {}
  Vec(double x, double y, double z) : c{x, y, z}, dim(3) {}
  static Vec zero(int d) {
    Vec v;
    v.dim = d;
    return v;
  }
  double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }
};

Vec operator+(const Vec& a, const Vec& b);
Vec operator-(const Vec& a, const Vec& b);
Vec operator*(double s, const Vec& a);
double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);
double distance(const Vec& a, const Vec& b);
double lp_norm(const Vec& a, double p);  // p may be +infinity

// Row-major square matrix of dimension 2 or 3.
struct Mat {
  std::array<double, 9> a{};
  int dim = 2;

  double& at(int i, int j) { return a[static_cast<std::size_t>(i * dim + j)]; }
  double at(int i, int j) const { return a[static_cast<std::size_t>(i * dim + j)]; }
  double det() const;
  Mat inverse() const;  // throws ConfigError when |det| <= 1e-12
  Vec apply(const Vec& v) const;
  Vec apply_transpose(const Vec& v) const;
};

// Periodicity data: n linearly independent vectors v_1..v_n, the
// change-of-basis matrix M = [v_1 ... v_n] (columns), its cached inverse and
// the fundamental parallelogram/parallelepiped P they span. In 2D the angle
// between v_1 and v_2 must lie in [pi/6, 5pi/6].
class Lattice {
 public:
  Lattice(const Vec& v1, const Vec& v2);
  Lattice(const Vec& v1, const Vec& v2, const Vec& v3);
  static Lattice from_vectors(const std::vector<Vec>& vs);

  int dim() const { return dim_; }
  const Vec& vector(int i) const { return vectors_[static_cast<std::size_t>(i)]; }
  const Mat& basis() const { return basis_; }
  const Mat& inverse_basis() const { return inv_; }
  double det_abs() const { return det_abs_; }

  // World point of fractional (lattice) coordinates.
  Vec to_world(const Vec& frac) const { return basis_.apply(frac); }
  // Fractional coordinates of a world point.
  Vec to_frac(const Vec& world) const { return inv_.apply(world); }

  // Diameter of the fundamental domain P.
  double cell_diameter() const;

 private:
  int dim_;
  std::array<Vec, 3> vectors_;
  Mat basis_;
  Mat inv_;
  double det_abs_;
};

// One sub-parallelogram of the fundamental domain discretized at
// `resolution` cells per axis. Index i satisfies 0 <= index[i] < resolution[i]
// for cells inside the fundamental domain; indices outside that range denote
// periodic copies (used when describing translated neighbors).
struct Cell {
  const Lattice* lattice = nullptr;
  std::array<int, 3> index{0, 0, 0};
  std::array<int, 3> resolution{1, 1, 1};

  // Center in fractional (lattice) coordinates.
  Vec center_frac() const;
  // All 2^n vertices in world coordinates.
  std::vector<Vec> vertices() const;
  Vec center_world() const;
};

// Conservative bounds on {|p - q| : p in A, q in B}.
struct DistanceInterval {
  double lower = 0.0;
  double upper = 0.0;
  bool contains(double d) const { return lower <= d && d <= upper; }
};

// Outward padding applied to every distance interval; dominates accumulated
// 64-bit rounding at desk scales.
inline constexpr double kIntervalPadding = 1e-9;

// i.i.d. uniform points on [-R, R]^dim, flattened row-major. Deterministic
// given the rng state.
std::vector<double> sample_box(double radius, int dim, std::size_t count,
                               RngStream& rng);

// Uniform points on the Euclidean sphere of given radius around `center`.
// 2D uses an exact angle parameterization, nD a normalized Gaussian.
std::vector<double> sample_sphere(const Vec& center, double radius, int dim,
                                  std::size_t count, RngStream& rng);

// Uniform (cone measure) points on the Lp sphere via normalized generalized
// Gaussians; p = infinity uses a face-uniform sampler.
std::vector<double> sample_lp_sphere(const Vec& center, double radius,
                                     double p, int dim, std::size_t count,
                                     RngStream& rng);

// Single direction on the unit sphere (Euclidean for p = 2, else the Lp
// construction). Used by the loss estimators; one call consumes a fixed
// number of draws for p = 2 so coupled estimators stay aligned.
Vec sample_unit_direction(int dim, double p, RngStream& rng);

// The two intersection points of circles of radius a around x and b around y,
// for |x - y| = 1 (enforced to 1e-9). Requires a + b > 1 and |a - b| < 1.
std::pair<Vec, Vec> triangle_third_points(const Vec& x, const Vec& y, double a,
                                          double b);

// Conservative distance interval between cellA and cellB translated by the
// integer lattice combination `translate`. Upper bound from vertex pairs,
// lower bound from exact convex polytope distance, both padded outward.
DistanceInterval cell_distance_interval(const Cell& a, const Cell& b,
                                        const std::array<int, 3>& translate);

// Distance interval between two congruent grid cells whose centers differ by
// `frac_offset` in fractional coordinates (the translation-invariant kernel
// behind cell_distance_interval).
DistanceInterval cell_interval_for_offset(const Lattice& lattice,
                                          const std::array<int, 3>& resolution,
                                          const Vec& frac_offset);

// Exact minimum/maximum distance between two parallelepipeds given as
// (origin, edge vectors). Used by the interval computation and by tests.
double polytope_min_distance(const Vec& origin_a,
                             const std::vector<Vec>& edges_a,
                             const Vec& origin_b,
                             const std::vector<Vec>& edges_b);

// Every integer combination t = n_1 v_1 + ... with dist(P, P + t) <= reach,
// as integer coefficient tuples. Includes the zero vector; complete via a
// covering bound on the coefficients.
std::vector<std::array<int, 3>> lattice_translates(const Lattice& lattice,
                                                   double reach);

}  // namespace pf::geom
