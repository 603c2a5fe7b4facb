#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <tuple>
#include <vector>

#include "planeforge/errors.hpp"
#include "planeforge/evaluate.hpp"
#include "planeforge/formalize.hpp"

namespace fz = pf::formalize;
namespace gm = pf::geom;
namespace net = pf::net;
namespace eval = pf::eval;
namespace loss = pf::loss;
namespace train = pf::train;
using pf::RngStream;

namespace {

using EdgeKey = std::tuple<std::size_t, std::size_t, int, int, int>;

EdgeKey normalize_edge(std::size_t a, std::size_t b, std::array<int, 3> t) {
  auto lex_pos = [](const std::array<int, 3>& v) {
    if (v[0] != 0) return v[0] > 0;
    if (v[1] != 0) return v[1] > 0;
    return v[2] > 0;
  };
  if (a > b || (a == b && !lex_pos(t))) {
    std::swap(a, b);
    t = {-t[0], -t[1], -t[2]};
  }
  return {a, b, t[0], t[1], t[2]};
}

std::set<EdgeKey> edge_set(const fz::ConflictGraph& g) {
  std::set<EdgeKey> s;
  for (const auto& e : g.edges) s.insert(normalize_edge(e.a, e.b, e.translate));
  return s;
}

std::set<EdgeKey> violation_set(const fz::VerificationReport& r) {
  std::set<EdgeKey> s;
  for (const auto& v : r.violations) s.insert(normalize_edge(v.cell_a, v.cell_b, v.translate));
  return s;
}

// Independent brute force: all cell pairs, all translates with |n_i| <= 3.
std::set<EdgeKey> brute_force_edges(const fz::CellColoring& cc) {
  std::set<EdgeKey> out;
  const std::size_t total = cc.cell_count();
  for (std::size_t a = 0; a < total; ++a) {
    int ca = cc.colors[a];
    if (ca > cc.num_regular_colors()) continue;
    double da = cc.avoided_distances[static_cast<std::size_t>(ca - 1)];
    auto ia = cc.cell_of_linear(a);
    for (std::size_t b = a; b < total; ++b) {
      if (cc.colors[b] != ca) continue;
      auto ib = cc.cell_of_linear(b);
      for (int n1 = -3; n1 <= 3; ++n1)
        for (int n2 = -3; n2 <= 3; ++n2) {
          if (a == b && n1 == 0 && n2 == 0) continue;
          gm::Cell cellA = cc.cell(ia[0], ia[1]);
          gm::Cell cellB = cc.cell(ib[0], ib[1]);
          if (gm::cell_distance_interval(cellA, cellB, {n1, n2, 0}).contains(da))
            out.insert(normalize_edge(a, b, {n1, n2, 0}));
        }
    }
  }
  return out;
}

fz::CellColoring random_coloring(RngStream& rng, int max_res = 10) {
  double a1 = rng.uniform(0, 6.283185307179586);
  double n1 = rng.uniform(1.0, 1.5);
  double rel = rng.uniform(0.8, 2.2);
  double n2 = rng.uniform(1.0, 1.5);
  gm::Lattice lat(gm::Vec(n1 * std::cos(a1), n1 * std::sin(a1)),
                  gm::Vec(n2 * std::cos(a1 + rel), n2 * std::sin(a1 + rel)));
  int k = 6 + static_cast<int>(rng.uniform() * (max_res - 5));
  int l = 6 + static_cast<int>(rng.uniform() * (max_res - 5));
  int c = 1 + static_cast<int>(rng.uniform() * 3);
  fz::CellColoring cc{lat, {k, l, 1}, {}, {}};
  for (int q = 0; q < c; ++q) cc.avoided_distances.push_back(rng.uniform(0.9, 1.4));
  cc.colors.resize(cc.cell_count());
  for (auto& col : cc.colors) {
    double u = rng.uniform();
    // Mostly regular colors, occasionally bonus.
    col = static_cast<std::uint8_t>(u < 0.9 ? 1 + static_cast<int>(rng.uniform() * c) : c + 1);
  }
  return cc;
}

net::Network tiny_trained_like(int colors, std::uint64_t seed) {
  net::NetworkArchitecture a;
  a.input_dim = 2;
  a.spatial_dim = 2;
  a.hidden_widths = {16, 16};
  a.num_colors = colors;
  return net::init_network(a, seed);
}

// Smooth analytic coloring with period lattice exactly Lambda, for the
// periodicity-extraction oracle.
class SyntheticPeriodic final : public net::ColoringFunction {
 public:
  SyntheticPeriodic(const gm::Lattice& lat, double sharpness)
      : lat_(lat), sharp_(sharpness) {}
  int num_colors() const override { return 3; }
  int input_dim() const override { return 2; }
  int spatial_dim() const override { return 2; }
  void evaluate(std::span<const double> in, std::size_t count, double* out) const override {
    constexpr double tau = 6.283185307179586476925;
    for (std::size_t r = 0; r < count; ++r) {
      gm::Vec x(in[2 * r], in[2 * r + 1]);
      gm::Vec f = lat_.to_frac(x);
      double s1 = std::cos(tau * f[0]) + std::cos(tau * f[1]);
      double s2 = std::sin(tau * f[0]);
      double s3 = std::sin(tau * f[1]);
      double l1 = sharp_ * s1, l2 = sharp_ * s2, l3 = sharp_ * s3;
      double m = std::max(l1, std::max(l2, l3));
      double e1 = std::exp(l1 - m), e2 = std::exp(l2 - m), e3 = std::exp(l3 - m);
      double inv = 1.0 / (e1 + e2 + e3);
      out[3 * r] = e1 * inv;
      out[3 * r + 1] = e2 * inv;
      out[3 * r + 2] = e3 * inv;
    }
  }

 private:
  gm::Lattice lat_;
  double sharp_;
};

}  // namespace

TEST_CASE("discretize: constant output, single cell, center echo") {
  gm::Lattice lat(gm::Vec(1.5, 0), gm::Vec(0.5, 1.25));
  auto netw = tiny_trained_like(4, 3);
  net::NetworkArchitecture arch = netw.architecture;
  arch.periodic_wrap = lat;
  netw = net::init_network(arch, 3);

  // Constant network: zero parameters give the uniform output, argmax 1.
  net::Network flat = netw;
  std::fill(flat.parameters.begin(), flat.parameters.end(), 0.0);
  auto cc = fz::discretize(flat, lat, {8, 8, 1}, {1.0, 1.0, 1.0, 1.0});
  for (auto col : cc.colors) CHECK(col == 1);

  auto single = fz::discretize(netw, lat, {1, 1, 1}, {1.0, 1.0, 1.0, 1.0});
  CHECK(single.cell_count() == 1);

  auto cc2 = fz::discretize(netw, lat, {6, 7, 1}, {1.0, 1.0, 1.0, 1.0});
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 7; ++j) {
      gm::Vec center = lat.to_world(gm::Vec((i + 0.5) / 6.0, (j + 0.5) / 7.0));
      double in[2] = {center[0], center[1]};
      double p[4];
      net::evaluate(netw, std::span<const double>(in, 2), 1, p);
      CHECK(cc2.color_at_cell(i, j) == eval::argmax_color(p, 4) + 1);
      // The periodic piecewise-constant lookup agrees at centers.
      CHECK(cc2.color_at(center) == cc2.color_at_cell(i, j));
    }
}

TEST_CASE("conflict_edges matches brute force on small grids") {
  RngStream rng(61);
  for (int inst = 0; inst < 12; ++inst) {
    fz::CellColoring cc = random_coloring(rng);
    auto got = edge_set(fz::conflict_edges(cc));
    auto want = brute_force_edges(cc);
    CHECK(got == want);
  }
}

TEST_CASE("conflict_edges: no-edge cases") {
  gm::Lattice lat(gm::Vec(1.2, 0), gm::Vec(0, 1.2));
  fz::CellColoring cc{lat, {6, 6, 1}, {}, {1.0}};
  cc.colors.assign(36, 2);  // all bonus
  CHECK(fz::conflict_edges(cc).edges.empty());

  // A pair whose interval sits above the avoided distance: same color at
  // opposite corners of a small domain, distance well over 1 only if the
  // geometry says so; here the domain is small, so conflicts exist for
  // same-colored far cells only through translates. Just exercise coarse
  // resolution rejection instead.
  fz::CellColoring coarse{lat, {1, 1, 1}, {}, {1.0}};
  coarse.colors.assign(1, 1);
  CHECK_THROWS_AS(fz::conflict_edges(coarse), std::invalid_argument);
}

TEST_CASE("hitting set covers all edges within twice the optimum") {
  RngStream rng(62);
  for (int inst = 0; inst < 50; ++inst) {
    int nodes = 4 + static_cast<int>(rng.uniform() * 9);  // up to 12
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    int want_edges = 3 + static_cast<int>(rng.uniform() * 14);
    for (int e = 0; e < want_edges; ++e) {
      auto u = static_cast<std::size_t>(rng.uniform() * nodes);
      auto v = static_cast<std::size_t>(rng.uniform() * nodes);
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (seen.insert({u, v}).second) edges.push_back({u, v});
    }
    if (edges.empty()) continue;
    auto hs = fz::hitting_set(edges);
    std::set<std::size_t> hset(hs.begin(), hs.end());
    for (const auto& [u, v] : edges) CHECK((hset.count(u) || hset.count(v)));

    // Exhaustive minimum vertex cover.
    std::size_t best = edges.size() + 1;
    for (int mask = 0; mask < (1 << nodes); ++mask) {
      bool covers = true;
      for (const auto& [u, v] : edges)
        if (!((mask >> u) & 1) && !((mask >> v) & 1)) {
          covers = false;
          break;
        }
      if (covers) best = std::min<std::size_t>(best, static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask))));
    }
    CHECK(hs.size() <= 2 * best);
  }
}

TEST_CASE("repair: identity on conflict-free input, soundness on random input") {
  RngStream rng(63);

  // Conflict-free: everything bonus.
  gm::Lattice lat(gm::Vec(1.3, 0), gm::Vec(0.1, 1.3));
  fz::CellColoring free{lat, {8, 8, 1}, {}, {1.0}};
  free.colors.assign(64, 2);
  auto unchanged = fz::repair(free, 3);
  CHECK(unchanged.colors == free.colors);

  int checked = 0;
  for (int inst = 0; inst < 30; ++inst) {
    fz::CellColoring cc = random_coloring(rng);
    fz::CellColoring fixed = fz::repair(cc, 3);
    // Only previously conflicting cells changed.
    auto before = edge_set(fz::conflict_edges(cc));
    std::set<std::size_t> conflicted;
    for (const auto& e : before) {
      conflicted.insert(std::get<0>(e));
      conflicted.insert(std::get<1>(e));
    }
    for (std::size_t i = 0; i < cc.colors.size(); ++i)
      if (!conflicted.count(i)) CHECK(fixed.colors[i] == cc.colors[i]);
    CHECK(fz::conflict_edges(fixed).edges.empty());
    auto report = fz::verify(fixed);
    CHECK(report.certified);
    ++checked;
  }
  CHECK(checked == 30);
}

TEST_CASE("repair resolves a single conflict edge") {
  gm::Lattice lat(gm::Vec(1.2, 0), gm::Vec(0, 1.2));
  fz::CellColoring cc{lat, {12, 12, 1}, {}, {1.0, 1.0}};
  cc.colors.assign(144, 0);
  // Two cells exactly unit distance apart horizontally: 10 cells of 0.1.
  for (auto& c : cc.colors) c = 2;
  // Fill color 2 everywhere, then mark two cells color 1 at distance 1.
  cc.colors[cc.linear_index(0, 0)] = 1;
  cc.colors[cc.linear_index(10, 0)] = 1;
  auto before = fz::conflict_edges(cc);
  // Color 2 blankets the grid, so it conflicts with itself broadly; restrict
  // the check to the injected pair by using bonus as the background instead.
  for (auto& c : cc.colors) c = 3;
  cc.colors[cc.linear_index(0, 0)] = 1;
  cc.colors[cc.linear_index(10, 0)] = 1;
  before = fz::conflict_edges(cc);
  REQUIRE(before.edges.size() == 1);
  CHECK(before.edges[0].color == 1);
  auto fixed = fz::repair(cc, 3);
  CHECK(fz::conflict_edges(fixed).edges.empty());
  // The pair is fixable by a regular recolor, so no bonus is needed.
  int changed = 0;
  for (std::size_t i = 0; i < cc.colors.size(); ++i)
    if (fixed.colors[i] != cc.colors[i]) {
      ++changed;
      CHECK(fixed.colors[i] == 2);
    }
  CHECK(changed == 1);
  CHECK(fz::verify(fixed).certified);
}

TEST_CASE("verify lists a constructed violation and matches conflict_edges") {
  gm::Lattice lat(gm::Vec(1.2, 0), gm::Vec(0, 1.2));
  fz::CellColoring cc{lat, {12, 12, 1}, {}, {1.0}};
  cc.colors.assign(144, 2);
  cc.colors[cc.linear_index(1, 2)] = 1;
  cc.colors[cc.linear_index(11, 2)] = 1;  // exactly 10 cells = distance 1.0
  auto report = fz::verify(cc);
  CHECK(!report.certified);
  REQUIRE(report.violations.size() == 1);
  auto key = normalize_edge(report.violations[0].cell_a, report.violations[0].cell_b,
                            report.violations[0].translate);
  CHECK(std::get<0>(key) == cc.linear_index(1, 2));
  CHECK(std::get<1>(key) == cc.linear_index(11, 2));
  CHECK(report.violations[0].color == 1);
  CHECK(report.bonus_fraction == doctest::Approx(142.0 / 144.0));

  RngStream rng(64);
  for (int inst = 0; inst < 20; ++inst) {
    fz::CellColoring rc = random_coloring(rng);
    CHECK(violation_set(fz::verify(rc)) == edge_set(fz::conflict_edges(rc)));
  }
}

TEST_CASE("certified colorings stay certified under grid refinement") {
  RngStream rng(65);
  for (int inst = 0; inst < 6; ++inst) {
    fz::CellColoring cc = fz::repair(random_coloring(rng), 2);
    REQUIRE(fz::verify(cc).certified);
    fz::CellColoring fine{cc.lattice,
                          {cc.resolution[0] * 2, cc.resolution[1] * 2, 1},
                          {},
                          cc.avoided_distances};
    fine.colors.resize(fine.cell_count());
    for (int i = 0; i < fine.resolution[0]; ++i)
      for (int j = 0; j < fine.resolution[1]; ++j)
        fine.colors[fine.linear_index(i, j)] =
            static_cast<std::uint8_t>(cc.color_at_cell(i / 2, j / 2));
    fz::CellColoring fine_repaired = fz::repair(fine, 2);
    // Refinement introduces no conflicts, so repair is the identity.
    CHECK(fine_repaired.colors == fine.colors);
    CHECK(fz::verify(fine).certified);
  }
}

TEST_CASE("periodic extension of a certified coloring has no conflicts") {
  RngStream rng(66);
  fz::CellColoring cc = fz::repair(random_coloring(rng), 3);
  REQUIRE(fz::verify(cc).certified);
  const int c = cc.num_regular_colors();
  std::size_t hits = 0;
  for (std::size_t it = 0; it < 1000000; ++it) {
    gm::Vec p(rng.uniform(-4, 4), rng.uniform(-4, 4));
    int k = 1 + static_cast<int>(rng.uniform() * c);
    double d = cc.avoided_distances[static_cast<std::size_t>(k - 1)];
    double ang = rng.uniform(0, 6.283185307179586);
    gm::Vec q = p + gm::Vec(d * std::cos(ang), d * std::sin(ang));
    if (cc.color_at(p) == k && cc.color_at(q) == k) ++hits;
  }
  CHECK(hits == 0);
}

TEST_CASE("discretized disk coloring certifies with bonus fraction below 0.79") {
  eval::ReferenceColoringId id;
  id.name = "disks1";
  id.disk_radius = 0.49;
  id.disk_spacing = 2.0;
  auto disks = eval::reference_coloring(id);

  gm::Lattice lat(gm::Vec(2.0, 0.0), gm::Vec(1.0, std::sqrt(3.0)));
  fz::CellColoring cc{lat, {200, 200, 1}, {}, {1.0}};
  cc.colors.resize(cc.cell_count());
  std::vector<double> in(2), pr(2);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 200; ++j) {
      gm::Vec center = lat.to_world(gm::Vec((i + 0.5) / 200.0, (j + 0.5) / 200.0));
      in[0] = center[0];
      in[1] = center[1];
      disks->evaluate(in, 1, pr.data());
      cc.colors[cc.linear_index(i, j)] =
          static_cast<std::uint8_t>(eval::argmax_color(pr.data(), 2) + 1);
    }
  auto report = fz::verify(cc);
  CHECK(report.certified);
  CHECK(report.bonus_fraction <= 0.79);
  CHECK(report.bonus_fraction >= 0.70);
}

TEST_CASE("periodicity extraction recovers synthetic lattices") {
  fz::PeriodicityParams params;
  params.line_radius = 3.0;

  // Unit square lattice.
  gm::Lattice unit(gm::Vec(1, 0), gm::Vec(0, 1));
  SyntheticPeriodic sq(unit, 4.0);
  gm::Lattice rec = fz::extract_periodicity(sq, params);
  // Unimodular equivalence: change of basis has integer entries, |det| = 1.
  gm::Mat cmat;
  cmat.dim = 2;
  for (int i = 0; i < 2; ++i) {
    gm::Vec coef = unit.to_frac(rec.vector(i));
    for (int kq = 0; kq < 2; ++kq) {
      cmat.at(kq, i) = coef[kq];
      CHECK(std::fabs(coef[kq] - std::round(coef[kq])) < 1e-2);
    }
    CHECK(std::fabs(gm::norm(rec.vector(i)) - 1.0) < 1e-2);
  }
  CHECK(std::fabs(std::fabs(cmat.det()) - 1.0) < 3e-2);

  // Hexagonal lattice with |v| = 1.4 and 60 degrees.
  gm::Lattice hex(gm::Vec(1.4, 0), gm::Vec(1.4 * 0.5, 1.4 * std::sqrt(3.0) / 2.0));
  SyntheticPeriodic hx(hex, 4.0);
  gm::Lattice rec2 = fz::extract_periodicity(hx, params);
  CHECK(std::fabs(gm::norm(rec2.vector(0)) - 1.4) < 1e-2);
  CHECK(std::fabs(gm::norm(rec2.vector(1)) - 1.4) < 1e-2);
  double cosang = gm::dot(rec2.vector(0), rec2.vector(1)) /
                  (gm::norm(rec2.vector(0)) * gm::norm(rec2.vector(1)));
  double ang = std::acos(std::clamp(cosang, -1.0, 1.0)) * 180.0 / 3.14159265358979;
  CHECK((std::fabs(ang - 60.0) < 1.0 || std::fabs(ang - 120.0) < 1.0));

  // White-noise network: no periodicity.
  auto noise = tiny_trained_like(5, 77);
  net::NetworkColoring nc(noise);
  CHECK_THROWS_AS(fz::extract_periodicity(nc, params), pf::NoPeriodicityFound);
}

TEST_CASE("retrain_periodic produces an exactly periodic network") {
  gm::Lattice lat(gm::Vec(1.25, 0), gm::Vec(0.5, 1.25));
  auto base = tiny_trained_like(3, 5);
  train::TrainingConfig tc;
  tc.steps = 32;
  tc.seed = 5;
  tc.loss_spec.variant = loss::Variant::Unit;
  tc.loss_spec.num_colors = 3;
  tc.loss_spec.box_radius = 2.0;
  tc.loss_spec.batch_centers = 64;
  tc.loss_spec.batch_peripherals = 2;
  tc.eval_every = 32;
  tc.eval_pairs = 500;
  auto [pnet, hist] = fz::retrain_periodic(base, lat, tc, RngStream(5));
  REQUIRE(pnet.architecture.periodic_wrap.has_value());
  RngStream rng(91);
  for (int it = 0; it < 10000; ++it) {
    gm::Vec x(rng.uniform(-3, 3), rng.uniform(-3, 3));
    gm::Vec y = x + lat.vector(0);
    double in1[2] = {x[0], x[1]}, in2[2] = {y[0], y[1]};
    double p1[3], p2[3];
    net::evaluate(pnet, std::span<const double>(in1, 2), 1, p1);
    net::evaluate(pnet, std::span<const double>(in2, 2), 1, p2);
    for (int k = 0; k < 3; ++k) REQUIRE(p1[k] == doctest::Approx(p2[k]).epsilon(1e-9));
  }
}

TEST_CASE("retraining with the detected lattice does not hurt the loss much") {
  // Lagrangian 1-color runs; pass when 3 of 5 seeds keep the retrained loss
  // within 10% of the unconstrained loss.
  int successes = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    train::TrainingConfig tc;
    tc.steps = 1024;
    tc.lr_initial = 1e-3;
    tc.seed = seed;
    tc.loss_spec.variant = loss::Variant::Lagrangian;
    tc.loss_spec.num_colors = 1;
    tc.loss_spec.lagrange_lambda = 0.1;
    tc.loss_spec.box_radius = 3.0;
    tc.loss_spec.batch_centers = 256;
    tc.loss_spec.batch_peripherals = 4;
    tc.eval_every = 1024;
    tc.eval_pairs = 500;

    net::NetworkArchitecture a;
    a.input_dim = 2;
    a.spatial_dim = 2;
    a.hidden_widths = {24, 24};
    a.num_colors = 2;
    auto init = net::init_network(a, seed);
    auto [basenet, h0] = train::train(init, tc, RngStream(seed));
    net::NetworkColoring base_coloring(basenet);
    double pre = loss::estimate_loss(base_coloring, tc.loss_spec, RngStream(1000 + seed)).value;

    gm::Lattice lattice(gm::Vec(2.0, 0.0), gm::Vec(1.0, std::sqrt(3.0)));
    try {
      fz::PeriodicityParams pp;
      pp.line_radius = tc.loss_spec.box_radius;
      lattice = fz::extract_periodicity(base_coloring, pp);
    } catch (const pf::NoPeriodicityFound&) {
      // Fall back to the hexagonal disk lattice.
    }
    train::TrainingConfig rc = tc;
    rc.seed = seed + 100;
    auto [pnet, h1] = fz::retrain_periodic(basenet, lattice, rc, RngStream(seed + 100));
    net::NetworkColoring pcol(pnet);
    double post = loss::estimate_loss(pcol, tc.loss_spec, RngStream(1000 + seed)).value;
    if (post <= 1.1 * pre + 1e-6) ++successes;
  }
  CHECK(successes >= 3);
}

TEST_CASE("cell coloring json round trip and error paths") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "pf_formalize_test";
  fs::create_directories(dir);
  RngStream rng(67);
  fz::CellColoring cc = fz::repair(random_coloring(rng), 2);
  std::string path = (dir / "cells.json").string();
  fz::save_cell_coloring(cc, path);
  fz::CellColoring loaded = fz::load_cell_coloring(path);
  CHECK(loaded.colors == cc.colors);
  CHECK(loaded.avoided_distances == cc.avoided_distances);
  CHECK(loaded.resolution == cc.resolution);
  for (int i = 0; i < 2; ++i)
    for (int q = 0; q < 2; ++q)
      CHECK(loaded.lattice.vector(i)[q] == cc.lattice.vector(i)[q]);

  std::string trunc = (dir / "trunc.json").string();
  {
    std::ifstream src(path);
    std::string text((std::istreambuf_iterator<char>(src)), std::istreambuf_iterator<char>());
    std::ofstream dst(trunc);
    dst << text.substr(0, text.size() / 3);
  }
  CHECK_THROWS_AS(fz::load_cell_coloring(trunc), pf::ConfigError);
  fs::remove_all(dir);
}
