#include "planeforge/formalize.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "planeforge/errors.hpp"
#include "planeforge/evaluate.hpp"
#include "planeforge/kernels.hpp"

namespace pf::formalize {

namespace gm = pf::geom;

std::size_t CellColoring::cell_count() const {
  std::size_t n = 1;
  for (int i = 0; i < lattice.dim(); ++i)
    n *= static_cast<std::size_t>(resolution[static_cast<std::size_t>(i)]);
  return n;
}

std::size_t CellColoring::linear_index(int i, int j, int k) const {
  if (lattice.dim() == 2)
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(resolution[1]) +
           static_cast<std::size_t>(j);
  return (static_cast<std::size_t>(i) * static_cast<std::size_t>(resolution[1]) +
          static_cast<std::size_t>(j)) *
             static_cast<std::size_t>(resolution[2]) +
         static_cast<std::size_t>(k);
}

std::array<int, 3> CellColoring::cell_of_linear(std::size_t lin) const {
  std::array<int, 3> idx{0, 0, 0};
  if (lattice.dim() == 2) {
    idx[0] = static_cast<int>(lin / static_cast<std::size_t>(resolution[1]));
    idx[1] = static_cast<int>(lin % static_cast<std::size_t>(resolution[1]));
  } else {
    idx[2] = static_cast<int>(lin % static_cast<std::size_t>(resolution[2]));
    std::size_t rest = lin / static_cast<std::size_t>(resolution[2]);
    idx[1] = static_cast<int>(rest % static_cast<std::size_t>(resolution[1]));
    idx[0] = static_cast<int>(rest / static_cast<std::size_t>(resolution[1]));
  }
  return idx;
}

gm::Cell CellColoring::cell(int i, int j, int k) const {
  gm::Cell c;
  c.lattice = &lattice;
  c.index = {i, j, k};
  c.resolution = resolution;
  return c;
}

int CellColoring::color_at_cell(int i, int j, int k) const {
  return colors[linear_index(i, j, k)];
}

int CellColoring::color_at(const gm::Vec& point) const {
  gm::Vec f = net::wrap_periodic(point, lattice);
  std::array<int, 3> idx{0, 0, 0};
  for (int d = 0; d < lattice.dim(); ++d) {
    int r = resolution[static_cast<std::size_t>(d)];
    int i = static_cast<int>(std::floor(f[d] * r));
    idx[static_cast<std::size_t>(d)] = std::clamp(i, 0, r - 1);
  }
  return colors[linear_index(idx[0], idx[1], idx[2])];
}

double CellColoring::max_cell_diameter() const {
  gm::Vec d = gm::Vec::zero(lattice.dim());
  // All cells are congruent; the diameter maximizes |sum s_i v_i / res_i|.
  double best = 0.0;
  int combos = 1;
  for (int i = 0; i < lattice.dim(); ++i) combos *= 3;
  for (int s = 0; s < combos; ++s) {
    int rem = s;
    d = gm::Vec::zero(lattice.dim());
    for (int i = 0; i < lattice.dim(); ++i) {
      int sign = rem % 3 - 1;
      rem /= 3;
      if (sign != 0)
        d = d + (static_cast<double>(sign) / resolution[static_cast<std::size_t>(i)]) *
                    lattice.vector(i);
    }
    best = std::max(best, gm::norm(d));
  }
  return best;
}

double CellColoring::max_avoided_distance() const {
  double m = 0.0;
  for (double d : avoided_distances) m = std::max(m, d);
  return m;
}

namespace {

void check_cell_coloring(const CellColoring& cc) {
  int n = cc.lattice.dim();
  for (int i = 0; i < n; ++i)
    if (cc.resolution[static_cast<std::size_t>(i)] < 1)
      throw std::invalid_argument("cell coloring: resolution must be >= 1 per axis");
  if (cc.colors.size() != cc.cell_count())
    throw std::invalid_argument("cell coloring: grid not fully assigned");
  int bonus = cc.bonus_color();
  for (std::uint8_t c : cc.colors)
    if (c < 1 || c > bonus)
      throw std::invalid_argument("cell coloring: color out of range");
  if (cc.avoided_distances.empty())
    throw std::invalid_argument("cell coloring: no avoided distances");
  for (double d : cc.avoided_distances)
    if (!(d > 0.0))
      throw std::invalid_argument("cell coloring: avoided distances must be positive");
}

// Conflict detection assumes cells are small against the avoided distances;
// otherwise a cell would conflict with itself under the zero translate.
void check_conflict_preconditions(const CellColoring& cc) {
  double diam = cc.max_cell_diameter();
  double min_d = *std::min_element(cc.avoided_distances.begin(), cc.avoided_distances.end());
  if (!(diam + 2.0 * gm::kIntervalPadding < min_d))
    throw std::invalid_argument(
        "cell coloring: resolution too coarse (cell diameter must stay below "
        "the smallest avoided distance)");
}

bool translate_lex_positive(const std::array<int, 3>& t) {
  if (t[0] != 0) return t[0] > 0;
  if (t[1] != 0) return t[1] > 0;
  return t[2] > 0;
}

// Geometric cell-index offsets (excluding zero) whose congruent-cell distance
// interval contains d. Shared by conflict_edges and repair.
std::vector<std::array<int, 3>> build_stencil(const CellColoring& cc, double d) {
  const gm::Lattice& lat = cc.lattice;
  int n = lat.dim();
  double diam = cc.max_cell_diameter();
  double reach_len = d + diam + 4.0 * gm::kIntervalPadding;

  std::array<int, 3> bound{0, 0, 0};
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j)
      row += lat.inverse_basis().at(i, j) * lat.inverse_basis().at(i, j);
    row = std::sqrt(row);
    bound[static_cast<std::size_t>(i)] = static_cast<int>(
        std::ceil(cc.resolution[static_cast<std::size_t>(i)] * row * reach_len)) + 1;
  }

  std::vector<std::array<int, 3>> out;
  int lo2 = (n == 3) ? -bound[2] : 0;
  int hi2 = (n == 3) ? bound[2] : 0;
  for (int di = -bound[0]; di <= bound[0]; ++di)
    for (int dj = -bound[1]; dj <= bound[1]; ++dj)
      for (int dk = lo2; dk <= hi2; ++dk) {
        if (di == 0 && dj == 0 && dk == 0) continue;
        gm::Vec frac = gm::Vec::zero(n);
        frac[0] = static_cast<double>(di) / cc.resolution[0];
        frac[1] = static_cast<double>(dj) / cc.resolution[1];
        if (n == 3) frac[2] = static_cast<double>(dk) / cc.resolution[2];
        if (gm::cell_interval_for_offset(lat, cc.resolution, frac).contains(d))
          out.push_back({di, dj, dk});
      }
  return out;
}

using StencilMap = std::map<double, std::vector<std::array<int, 3>>>;

StencilMap build_stencils(const CellColoring& cc) {
  StencilMap m;
  for (double d : cc.avoided_distances)
    if (!m.count(d)) m[d] = build_stencil(cc, d);
  return m;
}

int floor_div(int a, int b) {
  int q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

struct Neighbor {
  std::size_t lin;
  std::array<int, 3> translate;
};

Neighbor wrap_offset(const CellColoring& cc, const std::array<int, 3>& idx,
                     const std::array<int, 3>& off) {
  Neighbor nb;
  std::array<int, 3> w{0, 0, 0};
  nb.translate = {0, 0, 0};
  int n = cc.lattice.dim();
  for (int i = 0; i < n; ++i) {
    auto ii = static_cast<std::size_t>(i);
    int g = idx[ii] + off[ii];
    int res = cc.resolution[ii];
    int q = floor_div(g, res);
    w[ii] = g - q * res;
    nb.translate[ii] = q;
  }
  nb.lin = cc.linear_index(w[0], w[1], w[2]);
  return nb;
}

}  // namespace

ConflictGraph conflict_edges(const CellColoring& cc) {
  check_cell_coloring(cc);
  check_conflict_preconditions(cc);
  StencilMap stencils = build_stencils(cc);
  ConflictGraph g;
  const std::size_t total = cc.cell_count();
  for (std::size_t a = 0; a < total; ++a) {
    int ca = cc.colors[a];
    if (ca > cc.num_regular_colors()) continue;  // bonus never conflicts
    const auto& stencil = stencils.at(cc.avoided_distances[static_cast<std::size_t>(ca - 1)]);
    std::array<int, 3> idx = cc.cell_of_linear(a);
    for (const auto& off : stencil) {
      Neighbor nb = wrap_offset(cc, idx, off);
      if (cc.colors[nb.lin] != ca) continue;
      // Each unordered pair appears once: from the lower linear index, or for
      // equal indices from the lexicographically positive translate.
      if (a < nb.lin || (a == nb.lin && translate_lex_positive(nb.translate))) {
        ConflictEdge e;
        e.a = a;
        e.b = nb.lin;
        e.translate = nb.translate;
        e.color = ca;
        g.edges.push_back(e);
      }
    }
  }
  return g;
}

std::vector<std::size_t> hitting_set(
    const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  if (edges.empty()) return {};
  // Greedy by descending degree.
  std::map<std::size_t, std::vector<std::size_t>> incident;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    incident[edges[e].first].push_back(e);
    if (edges[e].second != edges[e].first) incident[edges[e].second].push_back(e);
  }
  std::vector<bool> covered(edges.size(), false);
  std::size_t remaining = edges.size();
  std::vector<std::size_t> greedy;
  while (remaining > 0) {
    std::size_t best_node = 0, best_deg = 0;
    bool found = false;
    for (const auto& [node, inc] : incident) {
      std::size_t deg = 0;
      for (std::size_t e : inc)
        if (!covered[e]) ++deg;
      if (deg > best_deg) {
        best_deg = deg;
        best_node = node;
        found = true;
      }
    }
    if (!found) break;
    greedy.push_back(best_node);
    for (std::size_t e : incident[best_node])
      if (!covered[e]) {
        covered[e] = true;
        --remaining;
      }
  }

  // Maximal-matching cover: both endpoints of each matched edge, which is at
  // most twice any hitting set.
  std::vector<std::size_t> matching;
  {
    std::map<std::size_t, bool> used;
    for (const auto& [u, v] : edges) {
      if (used[u] || used[v]) continue;
      used[u] = true;
      matching.push_back(u);
      if (v != u && !used[v]) {
        used[v] = true;
        matching.push_back(v);
      }
    }
  }
  const std::vector<std::size_t>& pick = matching.size() < greedy.size() ? matching : greedy;
  std::vector<std::size_t> out = pick;
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Conflicts the cell would have if recolored to `color`, against the current
// grid (scanning that color's stencil).
bool has_conflict_as(const CellColoring& cc, const StencilMap& stencils,
                     std::size_t lin, int color) {
  const auto& stencil = stencils.at(cc.avoided_distances[static_cast<std::size_t>(color - 1)]);
  std::array<int, 3> idx = cc.cell_of_linear(lin);
  for (const auto& off : stencil) {
    Neighbor nb = wrap_offset(cc, idx, off);
    if (nb.lin == lin) return true;  // periodic self-image at the avoided distance
    if (cc.colors[nb.lin] == color) return true;
  }
  return false;
}

}  // namespace

CellColoring repair(const CellColoring& coloring, int rounds) {
  check_cell_coloring(coloring);
  check_conflict_preconditions(coloring);
  if (rounds < 0) throw std::invalid_argument("repair: rounds must be >= 0");
  CellColoring work = coloring;
  StencilMap stencils = build_stencils(work);
  const int c = work.num_regular_colors();

  for (int round = 0; round < rounds; ++round) {
    ConflictGraph g = conflict_edges(work);
    if (g.edges.empty()) return work;
    // Descending conflict degree, ties toward the lower cell index.
    std::map<std::size_t, std::size_t> degree;
    for (const auto& e : g.edges) {
      degree[e.a]++;
      if (e.b != e.a) degree[e.b]++;
    }
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (degree, cell)
    for (const auto& [cell, deg] : degree) order.push_back({deg, cell});
    std::sort(order.begin(), order.end(), [](const auto& x, const auto& y) {
      if (x.first != y.first) return x.first > y.first;
      return x.second < y.second;
    });
    for (const auto& [deg, cell] : order) {
      int cur = work.colors[cell];
      if (cur > c) continue;
      if (!has_conflict_as(work, stencils, cell, cur)) continue;
      for (int r = 1; r <= c; ++r) {
        if (r == cur) continue;
        if (!has_conflict_as(work, stencils, cell, r)) {
          work.colors[cell] = static_cast<std::uint8_t>(r);
          break;
        }
      }
    }
  }

  // Remaining conflicts: recolor a hitting set of the edges to the bonus
  // color, which removes a non-bonus endpoint from every edge.
  ConflictGraph g = conflict_edges(work);
  if (!g.edges.empty()) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    pairs.reserve(g.edges.size());
    for (const auto& e : g.edges) pairs.push_back({e.a, e.b});
    for (std::size_t cell : hitting_set(pairs))
      work.colors[cell] = static_cast<std::uint8_t>(work.bonus_color());
  }
  return work;
}

namespace {

// Orthogonal component of v against a set of (orthogonalized) basis vectors.
gm::Vec perp_against(const gm::Vec& v, const std::vector<gm::Vec>& basis) {
  gm::Vec r = v;
  for (const auto& b : basis) {
    double bb = gm::dot(b, b);
    if (bb > 0.0) r = r - (gm::dot(r, b) / bb) * b;
  }
  return r;
}

// Integer ranges [lo, hi] such that |p + t * u| can lie within `radius`:
// solves the quadratic and widens by one index on each side.
bool quad_range(const gm::Vec& p, const gm::Vec& u, double radius, int& lo, int& hi) {
  double uu = gm::dot(u, u);
  if (uu <= 0.0) return false;
  double tc = -gm::dot(p, u) / uu;
  double perp2 = gm::dot(p, p) - gm::dot(p, u) * gm::dot(p, u) / uu;
  double h2 = radius * radius - perp2;
  if (h2 < 0.0) return false;
  double h = std::sqrt(h2 / uu);
  lo = static_cast<int>(std::floor(tc - h)) - 1;
  hi = static_cast<int>(std::ceil(tc + h)) + 1;
  return true;
}

}  // namespace

VerificationReport verify(const CellColoring& cc) {
  check_cell_coloring(cc);
  check_conflict_preconditions(cc);
  const gm::Lattice& lat = cc.lattice;
  const int n = lat.dim();
  const int c = cc.num_regular_colors();
  const double diam = cc.max_cell_diameter();
  const double rc = diam / 2.0;
  const double pad = gm::kIntervalPadding;

  std::array<int, 3> res = cc.resolution;
  std::array<gm::Vec, 3> unit{gm::Vec::zero(n), gm::Vec::zero(n), gm::Vec::zero(n)};
  for (int i = 0; i < n; ++i) unit[static_cast<std::size_t>(i)] = (1.0 / res[static_cast<std::size_t>(i)]) * lat.vector(i);

  const std::size_t total = cc.cell_count();
  VerificationReport report;

  std::size_t bonus_cells = 0;
  for (std::uint8_t col : cc.colors)
    if (col == cc.bonus_color()) ++bonus_cells;
  report.bonus_fraction = static_cast<double>(bonus_cells) / static_cast<double>(total);

  // Geometric index offsets parameterize every (cell copy, lattice translate)
  // pair exactly once: off_i = (i_b - i_a) + T_i * res_i. Scanning only
  // lexicographically positive offsets visits each unordered pair once.
  for (std::size_t a = 0; a < total; ++a) {
    int ca = cc.colors[a];
    if (ca > c) continue;
    const double da = cc.avoided_distances[static_cast<std::size_t>(ca - 1)];
    const double band_hi = da + 2.0 * rc + 2.0 * pad;
    const double band_lo = da - 2.0 * rc - 2.0 * pad;
    std::array<int, 3> ia = cc.cell_of_linear(a);

    // Index bounds per axis: project out earlier axes and solve for the band
    // radius, widening to stay conservative.
    int klo = 0, khi = 0;
    if (n == 3) {
      gm::Vec u3 = perp_against(unit[2], {unit[0], unit[1]});
      if (!quad_range(gm::Vec::zero(n), u3, band_hi, klo, khi)) continue;
    }
    for (int dk = klo; dk <= khi; ++dk) {
      gm::Vec base_k = gm::Vec::zero(n);
      if (n == 3) base_k = static_cast<double>(dk) * unit[2];
      gm::Vec p2 = perp_against(base_k, {unit[0]});
      gm::Vec u2 = perp_against(unit[1], {unit[0]});
      int jlo = 0, jhi = 0;
      if (!quad_range(p2, u2, band_hi, jlo, jhi)) continue;
      for (int dj = jlo; dj <= jhi; ++dj) {
        gm::Vec base_j = base_k + static_cast<double>(dj) * unit[1];
        int ilo = 0, ihi = 0;
        if (!quad_range(base_j, unit[0], band_hi, ilo, ihi)) continue;
        for (int di = ilo; di <= ihi; ++di) {
          bool lex_pos = di > 0 || (di == 0 && (dj > 0 || (dj == 0 && dk > 0)));
          if (!lex_pos) continue;
          std::array<int, 3> off{di, dj, dk};
          Neighbor nb = wrap_offset(cc, ia, off);
          if (cc.colors[nb.lin] != ca) continue;
          gm::Vec center_off = base_j + static_cast<double>(di) * unit[0];
          double d_centers = gm::norm(center_off);
          if (d_centers > band_hi || d_centers < band_lo) continue;
          gm::Vec frac = gm::Vec::zero(n);
          for (int q = 0; q < n; ++q)
            frac[q] = static_cast<double>(off[static_cast<std::size_t>(q)]) /
                      res[static_cast<std::size_t>(q)];
          gm::DistanceInterval iv = gm::cell_interval_for_offset(lat, res, frac);
          if (iv.contains(da)) {
            Violation v;
            v.cell_a = a;
            v.cell_b = nb.lin;
            v.translate = nb.translate;
            v.color = ca;
            v.interval = iv;
            report.violations.push_back(v);
          }
        }
      }
    }
  }
  report.certified = report.violations.empty();
  return report;
}

namespace {

struct PeriodCandidate {
  gm::Vec u;          // unit direction
  double period = 0.0;
  double tv = 0.0;    // dip depth
};

// Scans one radial line: mean total-variation distance between the coloring
// and its translate per offset, then the first dip below the threshold after
// the similarity has risen once (skipping the trivial match near offset 0).
std::optional<PeriodCandidate> scan_direction(const net::ColoringFunction& coloring,
                                              const gm::Vec& u,
                                              const PeriodicityParams& params) {
  const int dim = u.dim;
  const int c = coloring.num_colors();
  const double h = params.offset_step;
  const int noff = static_cast<int>(std::round(params.max_offset / h));
  const int grid_n = static_cast<int>(std::floor(2.0 * params.line_radius / h)) + 1;

  std::vector<double> inputs(static_cast<std::size_t>(grid_n) * static_cast<std::size_t>(dim));
  for (int j = 0; j < grid_n; ++j) {
    double s = -params.line_radius + j * h;
    for (int q = 0; q < dim; ++q)
      inputs[static_cast<std::size_t>(j * dim + q)] = s * u[q];
  }
  std::vector<double> probs(static_cast<std::size_t>(grid_n) * static_cast<std::size_t>(c));
  coloring.evaluate(inputs, static_cast<std::size_t>(grid_n), probs.data());

  std::vector<double> tv(static_cast<std::size_t>(noff) + 1, 2.0);
  for (int i = 1; i <= noff; ++i) {
    int avail = grid_n - i;
    if (avail < 8) continue;
    int samples = std::min(avail, params.line_samples);
    double acc = 0.0;
    for (int q = 0; q < samples; ++q) {
      int j = static_cast<int>((static_cast<long long>(q) * avail) / samples);
      const double* p0 = probs.data() + static_cast<std::size_t>(j) * static_cast<std::size_t>(c);
      const double* p1 = probs.data() + static_cast<std::size_t>(j + i) * static_cast<std::size_t>(c);
      double l1 = 0.0;
      for (int k = 0; k < c; ++k) l1 += std::fabs(p0[k] - p1[k]);
      acc += 0.5 * l1;
    }
    tv[static_cast<std::size_t>(i)] = acc / samples;
  }

  bool risen = false, in_dip = false;
  int best_i = -1;
  double best_tv = 2.0;
  for (int i = 1; i <= noff; ++i) {
    double v = tv[static_cast<std::size_t>(i)];
    if (!risen) {
      if (v >= params.rise_level) risen = true;
      continue;
    }
    if (v <= params.similarity_threshold) {
      in_dip = true;
      if (v < best_tv) {
        best_tv = v;
        best_i = i;
      }
    } else if (in_dip) {
      break;
    }
  }
  if (best_i < 0) return std::nullopt;
  double period = best_i * h;
  if (best_i > 1 && best_i < noff) {
    double y0 = tv[static_cast<std::size_t>(best_i - 1)];
    double y1 = tv[static_cast<std::size_t>(best_i)];
    double y2 = tv[static_cast<std::size_t>(best_i + 1)];
    double denom = y0 - 2.0 * y1 + y2;
    if (denom > 1e-12) {
      double delta = std::clamp(0.5 * (y0 - y2) / denom, -0.5, 0.5);
      period = (best_i + delta) * h;
    }
  }
  return PeriodCandidate{u, period, best_tv};
}

// Directions slightly off a true period axis can still dip under the
// threshold, with a systematically shorter dip offset (|v| cos delta), so a
// pure minimal-norm pick drifts off-axis. Within an angular neighborhood the
// dip is deepest on the axis: keep per-neighborhood TV minimizers, then
// re-scan finely around each survivor.
std::vector<PeriodCandidate> suppress_and_refine(
    const net::ColoringFunction& coloring, std::vector<PeriodCandidate> hits,
    const PeriodicityParams& params, int dim) {
  std::stable_sort(hits.begin(), hits.end(),
                   [](const PeriodCandidate& a, const PeriodCandidate& b) { return a.tv < b.tv; });
  constexpr double kPi = 3.14159265358979323846;
  const double cone = 3.0 * kPi / 180.0;
  std::vector<PeriodCandidate> reps;
  for (const auto& hit : hits) {
    bool close = false;
    for (const auto& rep : reps) {
      double cosang = std::clamp(std::fabs(gm::dot(hit.u, rep.u)), 0.0, 1.0);
      if (std::acos(cosang) < cone) {
        close = true;
        break;
      }
    }
    if (!close) reps.push_back(hit);
  }

  if (dim == 2) {
    const double coarse = kPi / params.num_directions;
    for (auto& rep : reps) {
      double theta0 = std::atan2(rep.u[1], rep.u[0]);
      for (int fn = -10; fn <= 10; ++fn) {
        double theta = theta0 + fn * coarse / 8.0;
        gm::Vec u(std::cos(theta), std::sin(theta));
        auto cand = scan_direction(coloring, u, params);
        if (cand && cand->tv < rep.tv) rep = *cand;
      }
    }
  }
  std::stable_sort(reps.begin(), reps.end(),
                   [](const PeriodCandidate& a, const PeriodCandidate& b) {
                     return a.period < b.period;
                   });
  return reps;
}

}  // namespace

geom::Lattice extract_periodicity(const net::ColoringFunction& coloring,
                                  const PeriodicityParams& params) {
  const int dim = coloring.spatial_dim();
  if (coloring.input_dim() != dim)
    throw std::invalid_argument("extract_periodicity: coloring must take spatial inputs only");
  const double h = params.offset_step;
  if (!(h > 0.0) || !(params.max_offset > h) || params.num_directions < 2)
    throw std::invalid_argument("extract_periodicity: invalid parameters");

  std::vector<PeriodCandidate> hits;
  for (int di = 0; di < params.num_directions; ++di) {
    gm::Vec u = gm::Vec::zero(dim);
    if (dim == 2) {
      double theta = 3.14159265358979323846 * di / params.num_directions;
      u = gm::Vec(std::cos(theta), std::sin(theta));
    } else {
      // Fibonacci hemisphere.
      double z = (di + 0.5) / params.num_directions;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double phi = 2.39996322972865332 * di;
      u = gm::Vec(r * std::cos(phi), r * std::sin(phi), z);
    }
    auto cand = scan_direction(coloring, u, params);
    if (cand) hits.push_back(*cand);
  }
  if (hits.empty())
    throw NoPeriodicityFound("no direction cleared the similarity threshold");

  std::vector<PeriodCandidate> candidates =
      suppress_and_refine(coloring, std::move(hits), params, dim);

  constexpr double kPi = 3.14159265358979323846;
  const PeriodCandidate& v1 = candidates.front();
  const PeriodCandidate* v2 = nullptr;
  for (const auto& cand : candidates) {
    double cosang = std::clamp(gm::dot(v1.u, cand.u), -1.0, 1.0);
    double ang = std::acos(cosang);
    if (ang >= kPi / 6.0 && ang <= 5.0 * kPi / 6.0) {
      v2 = &cand;
      break;
    }
  }
  if (!v2)
    throw NoPeriodicityFound("no second period direction sufficiently separated in angle");
  gm::Vec w1 = v1.period * v1.u;
  gm::Vec w2 = v2->period * v2->u;
  if (dim == 2) return gm::Lattice(w1, w2);

  // 3D: a third vector sufficiently independent of the first two.
  gm::Vec nrm(w1[1] * w2[2] - w1[2] * w2[1], w1[2] * w2[0] - w1[0] * w2[2],
              w1[0] * w2[1] - w1[1] * w2[0]);
  double nn = gm::norm(nrm);
  for (const auto& cand : candidates) {
    double s = std::fabs(gm::dot(nrm, cand.u)) / nn;
    if (s >= 0.5) return gm::Lattice(w1, w2, cand.period * cand.u);
  }
  throw NoPeriodicityFound("no third period direction out of the plane of the first two");
}

std::pair<net::Network, train::TrainingHistory> retrain_periodic(
    const net::Network& network, const geom::Lattice& lattice,
    const train::TrainingConfig& config, RngStream rng) {
  net::NetworkArchitecture arch = network.architecture;
  arch.periodic_wrap = lattice;
  arch.spatial_dim = lattice.dim();
  net::Network fresh = net::init_network(arch, config.seed);
  return train::train(fresh, config, rng);
}

CellColoring discretize(const net::Network& network, const geom::Lattice& lattice,
                        const std::array<int, 3>& resolution,
                        const std::vector<double>& avoided_distances) {
  const int n = lattice.dim();
  if (network.architecture.input_dim != n)
    throw std::invalid_argument("discretize: network input must be the spatial coordinates");
  CellColoring cc{lattice, resolution, {}, avoided_distances};
  for (int i = 0; i < n; ++i)
    if (resolution[static_cast<std::size_t>(i)] < 1)
      throw std::invalid_argument("discretize: resolution must be >= 1 per axis");
  const std::size_t total = cc.cell_count();
  const int c = network.architecture.num_colors;

  std::vector<double> inputs(total * static_cast<std::size_t>(n));
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::array<int, 3> idx = cc.cell_of_linear(lin);
    gm::Vec f = gm::Vec::zero(n);
    for (int q = 0; q < n; ++q)
      f[q] = (idx[static_cast<std::size_t>(q)] + 0.5) / resolution[static_cast<std::size_t>(q)];
    gm::Vec world = lattice.to_world(f);
    for (int q = 0; q < n; ++q) inputs[lin * static_cast<std::size_t>(n) + static_cast<std::size_t>(q)] = world[q];
  }
  std::vector<double> probs(total * static_cast<std::size_t>(c));
  net::evaluate(network, inputs, total, probs.data());
  cc.colors.resize(total);
  for (std::size_t lin = 0; lin < total; ++lin)
    cc.colors[lin] = static_cast<std::uint8_t>(
        eval::argmax_color(probs.data() + lin * static_cast<std::size_t>(c), c) + 1);
  return cc;
}

PipelineResult formalize_pipeline(const net::Network& trained,
                                  const train::TrainingConfig& retrain_config,
                                  const FormalizeParams& params, RngStream rng) {
  geom::Lattice lattice =
      params.manual_lattice
          ? *params.manual_lattice
          : extract_periodicity(net::NetworkColoring(trained), params.periodicity);

  auto [pnet, history] = retrain_periodic(trained, lattice, retrain_config, rng);

  const loss::LossSpec& ls = retrain_config.loss_spec;
  std::vector<double> avoided;
  if (ls.variant == loss::Variant::OffDiagonal) {
    for (const auto& d : ls.distances) {
      if (d.ranged())
        throw std::invalid_argument("formalize: ranged distances cannot be formalized");
      avoided.push_back(d.lo);
    }
  } else {
    avoided.assign(static_cast<std::size_t>(ls.num_colors), 1.0);
  }

  PipelineResult out{discretize(pnet, lattice, params.resolution, avoided),
                     VerificationReport{}, lattice, pnet};
  out.coloring = repair(out.coloring, params.repair_rounds);
  out.report = verify(out.coloring);
  return out;
}

void save_cell_coloring(const CellColoring& cc, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  std::vector<double> flat;
  for (int i = 0; i < cc.lattice.dim(); ++i)
    for (int k = 0; k < cc.lattice.dim(); ++k) flat.push_back(cc.lattice.vector(i)[k]);
  j["lattice"] = {{"vectors", flat}};
  std::vector<int> res;
  for (int i = 0; i < cc.lattice.dim(); ++i) res.push_back(cc.resolution[static_cast<std::size_t>(i)]);
  j["resolution"] = res;
  j["avoided_distances"] = cc.avoided_distances;
  j["colors"] = std::vector<int>(cc.colors.begin(), cc.colors.end());
  std::ofstream out(path);
  if (!out) throw ConfigError("cell coloring: cannot open '" + path + "' for writing");
  out << j.dump() << "\n";
}

CellColoring load_cell_coloring(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cell coloring: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cell coloring: corrupt file: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1)
      throw ConfigError("cell coloring: unsupported format_version");
    auto flat = j.at("lattice").at("vectors").get<std::vector<double>>();
    int dim = flat.size() == 4 ? 2 : (flat.size() == 9 ? 3 : 0);
    if (dim == 0) throw ConfigError("cell coloring: lattice vectors must have 4 or 9 entries");
    std::vector<gm::Vec> vs;
    for (int i = 0; i < dim; ++i) {
      gm::Vec v = gm::Vec::zero(dim);
      for (int k = 0; k < dim; ++k) v[k] = flat[static_cast<std::size_t>(i * dim + k)];
      vs.push_back(v);
    }
    auto res = j.at("resolution").get<std::vector<int>>();
    if (static_cast<int>(res.size()) != dim)
      throw ConfigError("cell coloring: resolution arity mismatch");
    CellColoring cc{gm::Lattice::from_vectors(vs),
                    {res[0], res[1], dim == 3 ? res[2] : 1},
                    {},
                    j.at("avoided_distances").get<std::vector<double>>()};
    auto colors = j.at("colors").get<std::vector<int>>();
    cc.colors.reserve(colors.size());
    for (int v : colors) {
      if (v < 1 || v > cc.bonus_color())
        throw ConfigError("cell coloring: color out of range");
      cc.colors.push_back(static_cast<std::uint8_t>(v));
    }
    check_cell_coloring(cc);
    return cc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cell coloring: invalid contents: ") + e.what());
  }
}

void save_report(const VerificationReport& report, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["certified"] = report.certified;
  j["bonus_fraction"] = report.bonus_fraction;
  nlohmann::json viol = nlohmann::json::array();
  for (const auto& v : report.violations) {
    viol.push_back({{"cell_a", v.cell_a},
                    {"cell_b", v.cell_b},
                    {"translate", v.translate},
                    {"color", v.color},
                    {"interval", {v.interval.lower, v.interval.upper}}});
  }
  j["violations"] = viol;
  std::ofstream out(path);
  if (!out) throw ConfigError("report: cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
}

}  // namespace pf::formalize
