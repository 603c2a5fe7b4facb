#include "planeforge/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "planeforge/errors.hpp"
#include "planeforge/geometry.hpp"
#include "planeforge/kernels.hpp"

namespace pf::eval {

namespace gm = pf::geom;

int argmax_color(const double* probs, int count) {
  int best = 0;
  for (int i = 1; i < count; ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

namespace {

class ConstantColoring final : public net::ColoringFunction {
 public:
  explicit ConstantColoring(int colors) : colors_(colors) {}
  int num_colors() const override { return colors_; }
  int input_dim() const override { return 2; }
  int spatial_dim() const override { return 2; }
  void evaluate(std::span<const double>, std::size_t count, double* out) const override {
    std::fill(out, out + count * static_cast<std::size_t>(colors_), 0.0);
    for (std::size_t r = 0; r < count; ++r) out[r * static_cast<std::size_t>(colors_)] = 1.0;
  }

 private:
  int colors_;
};

class UniformColoring final : public net::ColoringFunction {
 public:
  explicit UniformColoring(int colors) : colors_(colors) {}
  int num_colors() const override { return colors_; }
  int input_dim() const override { return 2; }
  int spatial_dim() const override { return 2; }
  void evaluate(std::span<const double>, std::size_t count, double* out) const override {
    std::fill(out, out + count * static_cast<std::size_t>(colors_), 1.0 / colors_);
  }

 private:
  int colors_;
};

class StripeColoring final : public net::ColoringFunction {
 public:
  StripeColoring(int colors, double width) : colors_(colors), width_(width) {
    if (colors < 2) throw std::invalid_argument("stripes: need at least 2 colors");
    if (!(width > 0.0)) throw std::invalid_argument("stripes: width must be positive");
  }
  int num_colors() const override { return colors_; }
  int input_dim() const override { return 2; }
  int spatial_dim() const override { return 2; }
  void evaluate(std::span<const double> in, std::size_t count, double* out) const override {
    std::fill(out, out + count * static_cast<std::size_t>(colors_), 0.0);
    for (std::size_t r = 0; r < count; ++r) {
      double y = in[r * 2 + 1];
      long long band = static_cast<long long>(std::floor(y / width_));
      int color = static_cast<int>(((band % colors_) + colors_) % colors_);
      out[r * static_cast<std::size_t>(colors_) + static_cast<std::size_t>(color)] = 1.0;
    }
  }

 private:
  int colors_;
  double width_;
};

// Classical 7-coloring by congruent regular hexagons of side s (flat-top,
// axial coordinates); color classes repeat on the index-7 sublattice, so two
// same-colored hexagons have centers at least sqrt(21) s apart. Valid for
// unit distance when 2s < 1 < (sqrt(21) - 2) s.
class Hex7Coloring final : public net::ColoringFunction {
 public:
  explicit Hex7Coloring(double side) : side_(side) {
    double lo = 1.0 / (std::sqrt(21.0) - 2.0);
    if (!(side > lo && side < 0.5))
      throw std::invalid_argument("hexagonal7: side must lie in (" + std::to_string(lo) +
                                  ", 0.5) for unit-distance validity");
  }
  int num_colors() const override { return 7; }
  int input_dim() const override { return 2; }
  int spatial_dim() const override { return 2; }

  int hex_color(double x, double y) const {
    double q = (2.0 / 3.0) * x / side_;
    double r = (-1.0 / 3.0) * x / side_ + y / (std::sqrt(3.0) * side_);
    // Cube rounding.
    double cx = q, cz = r, cy = -cx - cz;
    double rx = std::round(cx), ry = std::round(cy), rz = std::round(cz);
    double dx = std::fabs(rx - cx), dy = std::fabs(ry - cy), dz = std::fabs(rz - cz);
    if (dx > dy && dx > dz)
      rx = -ry - rz;
    else if (dy > dz)
      ry = -rx - rz;
    else
      rz = -rx - ry;
    long long qi = static_cast<long long>(rx), ri = static_cast<long long>(rz);
    return static_cast<int>(((5 * qi + ri) % 7 + 7) % 7);
  }

  void evaluate(std::span<const double> in, std::size_t count, double* out) const override {
    std::fill(out, out + count * 7, 0.0);
    for (std::size_t r = 0; r < count; ++r)
      out[r * 7 + static_cast<std::size_t>(hex_color(in[r * 2], in[r * 2 + 1]))] = 1.0;
  }

 private:
  double side_;
};

// Open disks of radius r centered on the hexagonal lattice with spacing a:
// color 1 inside any disk, bonus color 2 outside. Avoids unit distance in
// color 1 when 2r <= 1 and a - 2r >= 1.
class DiskColoring final : public net::ColoringFunction {
 public:
  DiskColoring(double radius, double spacing) : radius_(radius), spacing_(spacing) {
    if (!(radius > 0.0 && radius <= 0.5))
      throw std::invalid_argument("disks1: radius must lie in (0, 0.5]");
    if (!(spacing - 2.0 * radius >= 1.0))
      throw std::invalid_argument("disks1: spacing - 2 radius must be >= 1");
    lattice_.emplace(gm::Vec(spacing, 0.0),
                     gm::Vec(spacing / 2.0, spacing * std::sqrt(3.0) / 2.0));
  }
  int num_colors() const override { return 2; }
  int input_dim() const override { return 2; }
  int spatial_dim() const override { return 2; }
  void evaluate(std::span<const double> in, std::size_t count, double* out) const override {
    std::fill(out, out + count * 2, 0.0);
    for (std::size_t r = 0; r < count; ++r) {
      gm::Vec p(in[r * 2], in[r * 2 + 1]);
      gm::Vec f = lattice_->to_frac(p);
      double best = 1e300;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          gm::Vec center = lattice_->to_world(
              gm::Vec(std::floor(f[0]) + di, std::floor(f[1]) + dj));
          best = std::min(best, gm::distance(p, center));
        }
      out[r * 2 + (best < radius_ ? 0u : 1u)] = 1.0;
    }
  }

 private:
  double radius_, spacing_;
  std::optional<gm::Lattice> lattice_;
};

}  // namespace

std::unique_ptr<net::ColoringFunction> reference_coloring(const ReferenceColoringId& id) {
  if (id.name == "constant") return std::make_unique<ConstantColoring>(std::max(id.colors, 1));
  if (id.name == "uniform") return std::make_unique<UniformColoring>(std::max(id.colors, 1));
  if (id.name == "stripes") return std::make_unique<StripeColoring>(id.colors, id.stripe_width);
  if (id.name == "hexagonal7") return std::make_unique<Hex7Coloring>(id.hexagon_side);
  if (id.name == "disks1") return std::make_unique<DiskColoring>(id.disk_radius, id.disk_spacing);
  throw std::invalid_argument("reference_coloring: unknown id '" + id.name + "'");
}

namespace {

constexpr std::size_t kTupleChunk = 8192;

struct ConflictSetup {
  const loss::LossSpec* spec;
  const std::vector<double>* pinned;  // null = draw ranged values per tuple
};

// Counts colliding tuples in [lo, hi) using the chunk's substream.
std::size_t conflict_count_chunk(const net::ColoringFunction& coloring,
                                 const ConflictSetup& su, std::size_t lo,
                                 std::size_t hi, RngStream s) {
  const loss::LossSpec& spec = *su.spec;
  const int dim = spec.dimension;
  const int c = spec.num_colors;
  const int out = coloring.num_colors();
  const int in_dim = coloring.input_dim();
  const auto ranged = spec.ranged_indices();
  const std::size_t n = hi - lo;
  const bool triangle = spec.variant == loss::Variant::Triangle;
  const std::size_t rows_per = triangle ? 3 : 2;

  std::vector<double> batch(n * rows_per * static_cast<std::size_t>(in_dim), 0.0);
  std::vector<int> kchoice(n, 0);
  for (std::size_t t = 0; t < n; ++t) {
    gm::Vec x = gm::Vec::zero(dim);
    for (int i = 0; i < dim; ++i) x[i] = s.uniform(-spec.box_radius, spec.box_radius);

    std::vector<double> channels;
    double da = 1.0, db = 1.0, dk = 1.0;
    if (spec.variant == loss::Variant::OffDiagonal) {
      std::vector<double> dvals(static_cast<std::size_t>(c));
      for (int k = 0; k < c; ++k) {
        const auto& ds = spec.distances[static_cast<std::size_t>(k)];
        if (su.pinned)
          dvals[static_cast<std::size_t>(k)] = (*su.pinned)[static_cast<std::size_t>(k)];
        else
          dvals[static_cast<std::size_t>(k)] = ds.ranged() ? s.uniform(ds.lo, ds.hi) : ds.lo;
        if (ds.ranged())
          channels.push_back(net::rescale_param(dvals[static_cast<std::size_t>(k)], ds.lo, ds.hi));
      }
      int k = std::min(c - 1, static_cast<int>(s.uniform() * c));
      kchoice[t] = k;
      dk = dvals[static_cast<std::size_t>(k)];
    } else if (triangle) {
      if (su.pinned) {
        da = (*su.pinned)[0];
        db = (*su.pinned)[1];
      } else {
        da = spec.triangle_a.ranged() ? s.uniform(spec.triangle_a.lo, spec.triangle_a.hi)
                                      : spec.triangle_a.lo;
        db = spec.triangle_b.ranged() ? s.uniform(spec.triangle_b.lo, spec.triangle_b.hi)
                                      : spec.triangle_b.lo;
      }
      if (spec.triangle_a.ranged())
        channels.push_back(net::rescale_param(da, spec.triangle_a.lo, spec.triangle_a.hi));
      if (spec.triangle_b.ranged())
        channels.push_back(net::rescale_param(db, spec.triangle_b.lo, spec.triangle_b.hi));
    }

    gm::Vec dir = gm::sample_unit_direction(dim, spec.p_norm, s);
    double* row0 = batch.data() + t * rows_per * static_cast<std::size_t>(in_dim);
    for (int i = 0; i < dim; ++i) row0[i] = x[i];
    for (std::size_t q = 0; q < channels.size(); ++q) row0[dim + static_cast<int>(q)] = channels[q];
    double radius = spec.variant == loss::Variant::OffDiagonal ? dk : 1.0;
    gm::Vec y = x + radius * dir;
    double* row1 = row0 + in_dim;
    for (int i = 0; i < dim; ++i) row1[i] = y[i];
    for (std::size_t q = 0; q < channels.size(); ++q) row1[dim + static_cast<int>(q)] = channels[q];
    if (triangle) {
      auto [z1, z2] = gm::triangle_third_points(x, y, da, db);
      gm::Vec z = s.uniform() < 0.5 ? z1 : z2;
      double* row2 = row1 + in_dim;
      for (int i = 0; i < dim; ++i) row2[i] = z[i];
      for (std::size_t q = 0; q < channels.size(); ++q) row2[dim + static_cast<int>(q)] = channels[q];
    }
  }

  std::vector<double> probs(n * rows_per * static_cast<std::size_t>(out));
  coloring.evaluate(batch, n * rows_per, probs.data());

  std::size_t conflicts = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double* p0 = probs.data() + t * rows_per * static_cast<std::size_t>(out);
    int a0 = argmax_color(p0, out);
    int a1 = argmax_color(p0 + out, out);
    if (triangle) {
      int a2 = argmax_color(p0 + 2 * out, out);
      if (a0 == a1 && a1 == a2) ++conflicts;
    } else if (spec.variant == loss::Variant::OffDiagonal) {
      if (a0 == kchoice[t] && a1 == kchoice[t]) ++conflicts;
    } else if (spec.variant == loss::Variant::Lagrangian) {
      if (a0 == a1 && a0 < c) ++conflicts;
    } else {
      if (a0 == a1) ++conflicts;
    }
  }
  return conflicts;
}

double conflict_rate_impl(const net::ColoringFunction& coloring,
                          const loss::LossSpec& spec,
                          const std::vector<double>* pinned,
                          std::size_t pair_count, RngStream rng, int workers) {
  if (pair_count < 1)
    throw std::invalid_argument("argmax_conflict_rate: pair_count must be >= 1");
  spec.validate();
  int want_out = spec.num_colors + (spec.variant == loss::Variant::Lagrangian ? 1 : 0);
  if (coloring.num_colors() != want_out)
    throw std::invalid_argument("argmax_conflict_rate: coloring arity does not match spec");
  ConflictSetup su{&spec, pinned};
  std::size_t num_chunks = (pair_count + kTupleChunk - 1) / kTupleChunk;
  std::vector<std::size_t> counts(num_chunks, 0);
  kern::parallel_chunks(num_chunks, workers, [&](std::size_t ci) {
    std::size_t lo = ci * kTupleChunk;
    std::size_t hi = std::min(pair_count, lo + kTupleChunk);
    counts[ci] = conflict_count_chunk(coloring, su, lo, hi, rng.substream(ci));
  });
  std::size_t total = 0;
  for (std::size_t c : counts) total += c;
  return static_cast<double>(total) / static_cast<double>(pair_count);
}

}  // namespace

double argmax_conflict_rate(const net::ColoringFunction& coloring,
                            const loss::LossSpec& spec, std::size_t pair_count,
                            RngStream rng, int workers) {
  return conflict_rate_impl(coloring, spec, nullptr, pair_count, rng, workers);
}

double argmax_conflict_rate_at(const net::ColoringFunction& coloring,
                               const loss::LossSpec& spec,
                               const std::vector<double>& pinned,
                               std::size_t pair_count, RngStream rng,
                               int workers) {
  std::size_t want = spec.variant == loss::Variant::Triangle
                         ? 2
                         : static_cast<std::size_t>(spec.num_colors);
  if (pinned.size() != want)
    throw std::invalid_argument("argmax_conflict_rate_at: wrong pinned value count");
  return conflict_rate_impl(coloring, spec, &pinned, pair_count, rng, workers);
}

SweepResult distance_sweep(const net::ColoringFunction& coloring,
                           const loss::LossSpec& spec,
                           const std::vector<double>& axis1,
                           const std::vector<double>& axis2,
                           std::size_t pair_count, RngStream rng, int workers) {
  spec.validate();
  auto ranged = spec.ranged_indices();
  std::size_t grid_dims = axis2.empty() ? 1 : 2;
  if (axis1.empty()) throw ConfigError("sweep: empty grid");
  if (ranged.size() != grid_dims)
    throw ConfigError("sweep: grid dimensionality (" + std::to_string(grid_dims) +
                      ") must match the number of ranged parameters (" +
                      std::to_string(ranged.size()) + ")");
  auto range_of = [&](int idx) {
    if (spec.variant == loss::Variant::Triangle)
      return idx == 0 ? spec.triangle_a : spec.triangle_b;
    return spec.distances[static_cast<std::size_t>(idx)];
  };
  auto check_axis = [&](const std::vector<double>& ax, int ranged_idx) {
    const auto r = range_of(ranged_idx);
    for (std::size_t i = 0; i < ax.size(); ++i) {
      if (i > 0 && !(ax[i] > ax[i - 1]))
        throw ConfigError("sweep: grid axis must be strictly increasing");
      if (ax[i] < r.lo || ax[i] > r.hi)
        throw ConfigError("sweep: grid value " + std::to_string(ax[i]) +
                          " outside the trained range [" + std::to_string(r.lo) + ", " +
                          std::to_string(r.hi) + "]");
    }
  };
  check_axis(axis1, ranged[0]);
  if (grid_dims == 2) check_axis(axis2, ranged[1]);

  SweepResult out;
  out.axis1 = axis1;
  out.axis2 = axis2;
  out.samples_per_point = pair_count;
  std::size_t n2 = std::max<std::size_t>(1, axis2.size());
  out.rates.resize(axis1.size() * n2);
  for (std::size_t i = 0; i < axis1.size(); ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      std::vector<double> pinned;
      if (spec.variant == loss::Variant::Triangle) {
        pinned = {spec.triangle_a.lo, spec.triangle_b.lo};
        pinned[static_cast<std::size_t>(ranged[0] == 0 ? 0 : 1)] = axis1[i];
        if (grid_dims == 2) pinned[static_cast<std::size_t>(ranged[1])] = axis2[j];
      } else {
        pinned.resize(static_cast<std::size_t>(spec.num_colors));
        for (int k = 0; k < spec.num_colors; ++k)
          pinned[static_cast<std::size_t>(k)] = spec.distances[static_cast<std::size_t>(k)].lo;
        pinned[static_cast<std::size_t>(ranged[0])] = axis1[i];
        if (grid_dims == 2) pinned[static_cast<std::size_t>(ranged[1])] = axis2[j];
      }
      std::size_t linear = i * n2 + j;
      out.rates[linear] = argmax_conflict_rate_at(coloring, spec, pinned, pair_count,
                                                  rng.substream(linear), workers);
    }
  }
  return out;
}

SweepResult sweep_min(const SweepResult& a, const SweepResult& b) {
  if (a.axis1 != b.axis1 || a.axis2 != b.axis2)
    throw std::invalid_argument("sweep_min: mismatched grids");
  SweepResult out = a;
  for (std::size_t i = 0; i < out.rates.size(); ++i)
    out.rates[i] = std::min(out.rates[i], b.rates[i]);
  return out;
}

void write_sweep_csv(const SweepResult& sweep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("sweep: cannot open '" + path + "' for writing");
  char buf[96];
  if (sweep.axis2.empty()) {
    // Header row of axis values, then the rate row.
    for (std::size_t i = 0; i < sweep.axis1.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", sweep.axis1[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
    for (std::size_t i = 0; i < sweep.rates.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", sweep.rates[i]);
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  } else {
    out << "d1,d2,rate\n";
    for (std::size_t i = 0; i < sweep.axis1.size(); ++i)
      for (std::size_t j = 0; j < sweep.axis2.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", sweep.axis1[i],
                      sweep.axis2[j], sweep.rates[i * sweep.axis2.size() + j]);
        out << buf << "\n";
      }
  }
}

PinnedColoring::PinnedColoring(const net::ColoringFunction& base,
                               std::vector<double> channels)
    : base_(&base), channels_(std::move(channels)) {
  if (base.input_dim() != base.spatial_dim() + static_cast<int>(channels_.size()))
    throw std::invalid_argument("PinnedColoring: channel count does not match the base coloring");
}

void PinnedColoring::evaluate(std::span<const double> inputs, std::size_t count,
                              double* probs_out) const {
  const int sdim = base_->spatial_dim();
  const int full = base_->input_dim();
  std::vector<double> widened(count * static_cast<std::size_t>(full));
  for (std::size_t r = 0; r < count; ++r) {
    for (int q = 0; q < sdim; ++q)
      widened[r * static_cast<std::size_t>(full) + static_cast<std::size_t>(q)] =
          inputs[r * static_cast<std::size_t>(sdim) + static_cast<std::size_t>(q)];
    for (std::size_t ch = 0; ch < channels_.size(); ++ch)
      widened[r * static_cast<std::size_t>(full) + static_cast<std::size_t>(sdim) + ch] =
          channels_[ch];
  }
  base_->evaluate(widened, count, probs_out);
}

DistanceOptimizationResult optimize_distances(
    const net::ColoringFunction& coloring, const loss::LossSpec& spec,
    std::vector<double> initial_distances, int iterations, RngStream rng,
    bool use_curvature, int workers) {
  spec.validate();
  if (spec.variant != loss::Variant::OffDiagonal)
    throw std::invalid_argument("optimize_distances: OffDiagonal spec required");
  auto ranged = spec.ranged_indices();
  if (ranged.empty())
    throw std::invalid_argument("optimize_distances: no ranged distances to optimize");

  auto clamp_all = [&](std::vector<double>& d) {
    for (int k = 0; k < spec.num_colors; ++k) {
      const auto& ds = spec.distances[static_cast<std::size_t>(k)];
      d[static_cast<std::size_t>(k)] = std::clamp(d[static_cast<std::size_t>(k)], ds.lo, ds.hi);
    }
  };
  clamp_all(initial_distances);

  // The same substream for every evaluation: a fixed sample set makes the
  // objective a smooth deterministic function of the distances.
  RngStream fixed = rng.substream(0);
  auto eval_at = [&](const std::vector<double>& d) {
    return loss::estimate_offdiag_at(coloring, spec, d, fixed, workers);
  };

  std::vector<double> d = initial_distances;
  loss::PinnedEstimate cur = eval_at(d);
  DistanceOptimizationResult res;
  double step0 = 0.0;
  for (int k : ranged) {
    const auto& ds = spec.distances[static_cast<std::size_t>(k)];
    step0 = std::max(step0, 0.1 * (ds.hi - ds.lo));
  }
  double step = step0;

  for (int it = 0; it < iterations; ++it) {
    std::vector<double> dir(static_cast<std::size_t>(spec.num_colors), 0.0);
    double gnorm = 0.0;
    if (use_curvature) {
      // Diagonal curvature from finite differences of the input gradient.
      for (int k : ranged) {
        const auto& ds = spec.distances[static_cast<std::size_t>(k)];
        double h = 1e-3 * (ds.hi - ds.lo);
        std::vector<double> dh = d;
        dh[static_cast<std::size_t>(k)] =
            std::min(ds.hi, dh[static_cast<std::size_t>(k)] + h);
        double hh = dh[static_cast<std::size_t>(k)] - d[static_cast<std::size_t>(k)];
        double curv = 0.0;
        if (hh > 0.0) {
          loss::PinnedEstimate shifted = eval_at(dh);
          curv = (shifted.distance_gradient[static_cast<std::size_t>(k)] -
                  cur.distance_gradient[static_cast<std::size_t>(k)]) / hh;
        }
        double denom = std::max(std::fabs(curv), 1e-6);
        dir[static_cast<std::size_t>(k)] =
            -cur.distance_gradient[static_cast<std::size_t>(k)] / denom;
      }
    } else {
      for (int k : ranged)
        dir[static_cast<std::size_t>(k)] = -cur.distance_gradient[static_cast<std::size_t>(k)];
    }
    for (int k : ranged) gnorm = std::max(gnorm, std::fabs(dir[static_cast<std::size_t>(k)]));
    if (gnorm == 0.0) break;  // critical point: distances stay unchanged

    double scale = step / gnorm;
    bool improved = false;
    for (int bt = 0; bt < 24; ++bt) {
      std::vector<double> trial = d;
      for (int k : ranged)
        trial[static_cast<std::size_t>(k)] += scale * dir[static_cast<std::size_t>(k)];
      clamp_all(trial);
      if (trial == d) break;
      loss::PinnedEstimate te = eval_at(trial);
      if (te.value < cur.value) {
        d = trial;
        cur = te;
        improved = true;
        step = std::min(step0, scale * gnorm * 1.5);
        break;
      }
      scale *= 0.5;
    }
    res.iterations_used = it + 1;
    if (!improved) break;
  }
  res.distances = d;
  res.loss = cur.value;
  return res;
}

}  // namespace pf::eval
