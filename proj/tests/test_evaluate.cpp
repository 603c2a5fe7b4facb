#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "planeforge/errors.hpp"
#include "planeforge/evaluate.hpp"
#include "planeforge/loss.hpp"

namespace eval = pf::eval;
namespace loss = pf::loss;
namespace net = pf::net;
namespace gm = pf::geom;
using pf::RngStream;

namespace {

loss::LossSpec unit_spec(int c) {
  loss::LossSpec s;
  s.variant = loss::Variant::Unit;
  s.num_colors = c;
  s.box_radius = 3.0;
  return s;
}

int color_of(const net::ColoringFunction& f, double x, double y) {
  double in[2] = {x, y};
  std::vector<double> p(static_cast<std::size_t>(f.num_colors()));
  f.evaluate(std::span<const double>(in, 2), 1, p.data());
  return eval::argmax_color(p.data(), f.num_colors());
}

}  // namespace

TEST_CASE("argmax ties break toward the lowest index") {
  double p[4] = {0.25, 0.25, 0.25, 0.25};
  CHECK(eval::argmax_color(p, 4) == 0);
  double q[3] = {0.2, 0.4, 0.4};
  CHECK(eval::argmax_color(q, 3) == 1);
}

TEST_CASE("reference colorings: constant, uniform, stripes") {
  eval::ReferenceColoringId cid;
  cid.name = "constant";
  cid.colors = 5;
  auto constant = eval::reference_coloring(cid);
  CHECK(color_of(*constant, 0.1, 0.2) == 0);
  CHECK(color_of(*constant, -3.0, 7.0) == 0);

  eval::ReferenceColoringId sid;
  sid.name = "stripes";
  sid.colors = 2;
  sid.stripe_width = std::sqrt(3.0) / 2.0;
  auto stripes = eval::reference_coloring(sid);
  // The three vertices of a unit equilateral triangle never share a color.
  int c0 = color_of(*stripes, 0.0, 0.0);
  int c1 = color_of(*stripes, 1.0, 0.0);
  int c2 = color_of(*stripes, 0.5, std::sqrt(3.0) / 2.0);
  CHECK(!(c0 == c1 && c1 == c2));

  CHECK_THROWS_AS(
      ([&] {
        eval::ReferenceColoringId bad;
        bad.name = "hexagonal7";
        bad.hexagon_side = 0.55;  // diameter >= 1.1 breaks validity
        eval::reference_coloring(bad);
      }()),
      std::invalid_argument);
}

TEST_CASE("hexagonal 7-coloring: same-color pairs avoid the unit shell") {
  eval::ReferenceColoringId id;
  id.name = "hexagonal7";
  id.hexagon_side = 0.4;
  auto hex = eval::reference_coloring(id);
  RngStream rng(101);
  std::size_t same = 0;
  std::size_t in_shell = 0;
  while (same < 1000000) {
    double x0 = rng.uniform(-3, 3), y0 = rng.uniform(-3, 3);
    double x1 = rng.uniform(-3, 3), y1 = rng.uniform(-3, 3);
    if (color_of(*hex, x0, y0) != color_of(*hex, x1, y1)) continue;
    ++same;
    double d = std::hypot(x1 - x0, y1 - y0);
    if (d >= 0.99 && d <= 1.01) ++in_shell;
  }
  CHECK(in_shell == 0);
}

TEST_CASE("conflict rates of analytic colorings") {
  eval::ReferenceColoringId cid;
  cid.name = "constant";
  cid.colors = 4;
  auto constant = eval::reference_coloring(cid);
  CHECK(eval::argmax_conflict_rate(*constant, unit_spec(4), 20000, RngStream(1)) == 1.0);

  eval::ReferenceColoringId hid;
  hid.name = "hexagonal7";
  hid.hexagon_side = 0.4;
  auto hex = eval::reference_coloring(hid);
  CHECK(eval::argmax_conflict_rate(*hex, unit_spec(7), 1000000, RngStream(2)) == 0.0);

  eval::ReferenceColoringId sid;
  sid.name = "stripes";
  sid.colors = 2;
  sid.stripe_width = std::sqrt(3.0) / 2.0;
  auto stripes = eval::reference_coloring(sid);
  loss::LossSpec tri;
  tri.variant = loss::Variant::Triangle;
  tri.num_colors = 2;
  tri.box_radius = 3.0;
  tri.triangle_a = loss::DistanceSpec::fixed(1.0);
  tri.triangle_b = loss::DistanceSpec::fixed(1.0);
  CHECK(eval::argmax_conflict_rate(*stripes, tri, 1000000, RngStream(3)) == 0.0);
}

TEST_CASE("disks1 avoids unit distance in color 1 and validates parameters") {
  eval::ReferenceColoringId id;
  id.name = "disks1";
  id.disk_radius = 0.49;
  id.disk_spacing = 2.0;
  auto disks = eval::reference_coloring(id);
  RngStream rng(7);
  std::size_t checked = 0;
  while (checked < 200000) {
    double x = rng.uniform(-4, 4), y = rng.uniform(-4, 4);
    double a = rng.uniform(0, 6.283185307179586);
    double qx = x + std::cos(a), qy = y + std::sin(a);
    if (color_of(*disks, x, y) == 0 && color_of(*disks, qx, qy) == 0) FAIL("unit conflict in color 1");
    ++checked;
  }
  eval::ReferenceColoringId bad = id;
  bad.disk_spacing = 1.9;  // gap below 1
  CHECK_THROWS_AS(eval::reference_coloring(bad), std::invalid_argument);
}

TEST_CASE("sweep equals pointwise conflict rate and validates the grid") {
  net::NetworkArchitecture a;
  a.input_dim = 3;
  a.spatial_dim = 2;
  a.hidden_widths = {16};
  a.num_colors = 3;
  auto netw = net::init_network(a, 21);
  net::NetworkColoring coloring(netw);

  loss::LossSpec s;
  s.variant = loss::Variant::OffDiagonal;
  s.num_colors = 3;
  s.box_radius = 2.0;
  s.distances = {loss::DistanceSpec::fixed(1.0), loss::DistanceSpec::fixed(1.0),
                 loss::DistanceSpec::range(0.2, 2.2)};

  std::vector<double> axis{0.4, 0.9, 1.4};
  auto sweep = eval::distance_sweep(coloring, s, axis, {}, 4000, RngStream(55));
  CHECK(sweep.axis1 == axis);
  CHECK(sweep.rates.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    double direct = eval::argmax_conflict_rate_at(coloring, s, {1.0, 1.0, axis[i]}, 4000,
                                                  RngStream(55).substream(i));
    CHECK(sweep.rates[i] == direct);
  }

  // Aggregating a sweep with itself is the identity.
  auto twice = eval::sweep_min(sweep, sweep);
  CHECK(twice.rates == sweep.rates);

  CHECK_THROWS_AS(eval::distance_sweep(coloring, s, {0.1, 0.9}, {}, 100, RngStream(1)),
                  pf::ConfigError);
  CHECK_THROWS_AS(eval::distance_sweep(coloring, s, {}, {}, 100, RngStream(1)),
                  pf::ConfigError);
}

TEST_CASE("sweep min aggregation is commutative and monotone") {
  eval::SweepResult a, b;
  a.axis1 = b.axis1 = {0.5, 1.0};
  a.rates = {0.2, 0.6};
  b.rates = {0.3, 0.1};
  auto ab = eval::sweep_min(a, b);
  auto ba = eval::sweep_min(b, a);
  CHECK(ab.rates == std::vector<double>{0.2, 0.1});
  CHECK(ab.rates == ba.rates);
}

TEST_CASE("optimize_distances: critical point stays, loss never increases") {
  loss::LossSpec s;
  s.variant = loss::Variant::OffDiagonal;
  s.num_colors = 2;
  s.box_radius = 2.0;
  s.distances = {loss::DistanceSpec::range(0.4, 1.6), loss::DistanceSpec::range(0.4, 1.6)};
  s.batch_centers = 64;
  s.batch_peripherals = 2;

  net::NetworkArchitecture a;
  a.input_dim = 4;
  a.spatial_dim = 2;
  a.hidden_widths = {12};
  a.num_colors = 2;

  // All-zero parameters: the uniform coloring, a critical point in d.
  auto flat = net::init_network(a, 3);
  std::fill(flat.parameters.begin(), flat.parameters.end(), 0.0);
  net::NetworkColoring flat_coloring(flat);
  auto r0 = eval::optimize_distances(flat_coloring, s, {1.0, 1.2}, 5, RngStream(9));
  CHECK(r0.distances == std::vector<double>{1.0, 1.2});

  auto netw = net::init_network(a, 4);
  net::NetworkColoring coloring(netw);
  auto base = loss::estimate_offdiag_at(coloring, s, {1.0, 1.0}, RngStream(10).substream(0));
  auto res = eval::optimize_distances(coloring, s, {1.0, 1.0}, 12, RngStream(10));
  CHECK(res.loss <= base.value);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(res.distances[k] >= 0.4);
    CHECK(res.distances[k] <= 1.6);
  }
  auto res_curv = eval::optimize_distances(coloring, s, {1.0, 1.0}, 12, RngStream(10), true);
  CHECK(res_curv.loss <= base.value);
}

TEST_CASE("pinned coloring matches manual channel widening") {
  net::NetworkArchitecture a;
  a.input_dim = 3;
  a.spatial_dim = 2;
  a.hidden_widths = {10};
  a.num_colors = 3;
  auto netw = net::init_network(a, 31);
  net::NetworkColoring coloring(netw);
  eval::PinnedColoring pinned(coloring, {0.35});
  double in[2] = {0.4, -0.7};
  double full[3] = {0.4, -0.7, 0.35};
  std::vector<double> p1(3), p2(3);
  pinned.evaluate(std::span<const double>(in, 2), 1, p1.data());
  net::evaluate(netw, std::span<const double>(full, 3), 1, p2.data());
  CHECK(p1 == p2);
}
