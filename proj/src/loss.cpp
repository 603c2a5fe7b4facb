#include "planeforge/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "planeforge/errors.hpp"
#include "planeforge/geometry.hpp"
#include "planeforge/kernels.hpp"

namespace pf::loss {

namespace {
constexpr std::size_t kChunkCenters = 256;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Unit: return "unit";
    case Variant::OffDiagonal: return "offdiagonal";
    case Variant::Lagrangian: return "lagrangian";
    case Variant::Triangle: return "triangle";
  }
  return "?";
}

std::vector<int> LossSpec::ranged_indices() const {
  std::vector<int> out;
  if (variant == Variant::OffDiagonal) {
    for (int k = 0; k < static_cast<int>(distances.size()); ++k)
      if (distances[static_cast<std::size_t>(k)].ranged()) out.push_back(k);
  } else if (variant == Variant::Triangle) {
    if (triangle_a.ranged()) out.push_back(0);
    if (triangle_b.ranged()) out.push_back(1);
  }
  return out;
}

int LossSpec::expected_input_dim() const {
  return dimension + static_cast<int>(ranged_indices().size());
}

void LossSpec::validate() const {
  if (num_colors < 1) throw ConfigError("loss_spec.colors: must be >= 1");
  if (dimension != 2 && dimension != 3)
    throw ConfigError("loss_spec.dimension: must be 2 or 3");
  if (!(box_radius > 0.0)) throw ConfigError("loss_spec.box_radius: must be positive");
  if (!(p_norm >= 1.0)) throw ConfigError("loss_spec.p_norm: must be >= 1");
  if (batch_centers < 1 || batch_centers > (1u << 20))
    throw ConfigError("loss_spec.batch_centers: must be in [1, 2^20]");
  if (batch_peripherals < 1 || batch_peripherals > (1u << 20))
    throw ConfigError("loss_spec.batch_peripherals: must be in [1, 2^20]");
  if (variant == Variant::OffDiagonal) {
    if (distances.size() != static_cast<std::size_t>(num_colors))
      throw ConfigError("loss_spec.distances: need one distance per color");
    for (std::size_t k = 0; k < distances.size(); ++k) {
      const auto& d = distances[k];
      if (!(d.lo > 0.0))
        throw ConfigError("loss_spec.distances[" + std::to_string(k) + "]: must be positive");
      if (d.lo > d.hi)
        throw ConfigError("loss_spec.distances[" + std::to_string(k) + "]: min exceeds max");
    }
  }
  if (variant == Variant::Lagrangian && lagrange_lambda < 0.0)
    throw ConfigError("loss_spec.lambda: must be >= 0");
  if (variant == Variant::Triangle) {
    if (dimension != 2) throw ConfigError("loss_spec.dimension: triangle variant is planar");
    if (!(triangle_a.lo > 0.0) || !(triangle_b.lo > 0.0))
      throw ConfigError("loss_spec.triangle_sides: sides must be positive");
    if (triangle_a.lo > triangle_a.hi || triangle_b.lo > triangle_b.hi)
      throw ConfigError("loss_spec.triangle_sides: min exceeds max");
    if (!(triangle_a.lo + triangle_b.lo > 1.0))
      throw ConfigError("loss_spec.triangle_sides: a + b must exceed 1 over the declared range");
    if (triangle_a.hi - triangle_b.lo >= 1.0 || triangle_b.hi - triangle_a.lo >= 1.0)
      throw ConfigError("loss_spec.triangle_sides: |a - b| must stay below 1 over the declared range");
  }
}

namespace {

struct ChunkOut {
  double pair_sum = 0.0;
  double bonus_sum = 0.0;
  std::vector<double> grad;
  std::vector<double> dist_grad;
};

struct Draws {
  geom::Vec x;
  std::vector<double> params;      // ranged parameter values, in channel order
  std::vector<geom::Vec> dirs;     // m unit directions
  double a = 1.0, b = 1.0;         // triangle sides
};

// Fixed draw order per center: spatial coordinates, then ranged parameters,
// then the m peripheral directions. Coupled across variants so that the
// reduction identities hold draw-for-draw.
Draws draw_center(const LossSpec& spec, RngStream& s) {
  Draws d;
  d.x = geom::Vec::zero(spec.dimension);
  for (int i = 0; i < spec.dimension; ++i)
    d.x[i] = s.uniform(-spec.box_radius, spec.box_radius);
  if (spec.variant == Variant::OffDiagonal) {
    for (int k = 0; k < spec.num_colors; ++k) {
      const auto& ds = spec.distances[static_cast<std::size_t>(k)];
      if (ds.ranged()) d.params.push_back(s.uniform(ds.lo, ds.hi));
    }
  } else if (spec.variant == Variant::Triangle) {
    d.a = spec.triangle_a.ranged() ? s.uniform(spec.triangle_a.lo, spec.triangle_a.hi)
                                   : spec.triangle_a.lo;
    d.b = spec.triangle_b.ranged() ? s.uniform(spec.triangle_b.lo, spec.triangle_b.hi)
                                   : spec.triangle_b.lo;
    if (spec.triangle_a.ranged()) d.params.push_back(d.a);
    if (spec.triangle_b.ranged()) d.params.push_back(d.b);
  }
  d.dirs.reserve(spec.batch_peripherals);
  for (std::size_t j = 0; j < spec.batch_peripherals; ++j)
    d.dirs.push_back(geom::sample_unit_direction(spec.dimension, spec.p_norm, s));
  return d;
}

// Rescaled network channel values for the ranged parameters.
std::vector<double> rescaled_channels(const LossSpec& spec, const Draws& d) {
  std::vector<double> out;
  std::size_t pi = 0;
  if (spec.variant == Variant::OffDiagonal) {
    for (int k = 0; k < spec.num_colors; ++k) {
      const auto& ds = spec.distances[static_cast<std::size_t>(k)];
      if (ds.ranged()) out.push_back(net::rescale_param(d.params[pi++], ds.lo, ds.hi));
    }
  } else if (spec.variant == Variant::Triangle) {
    if (spec.triangle_a.ranged())
      out.push_back(net::rescale_param(d.params[pi++], spec.triangle_a.lo, spec.triangle_a.hi));
    if (spec.triangle_b.ranged())
      out.push_back(net::rescale_param(d.params[pi++], spec.triangle_b.lo, spec.triangle_b.hi));
  }
  return out;
}

void write_row(std::vector<double>& batch, std::size_t row, int in_dim,
               const geom::Vec& p, const std::vector<double>& channels) {
  double* dst = batch.data() + row * static_cast<std::size_t>(in_dim);
  for (int i = 0; i < p.dim; ++i) dst[i] = p[i];
  for (std::size_t i = 0; i < channels.size(); ++i)
    dst[p.dim + static_cast<int>(i)] = channels[i];
}

struct EstimatorPlan {
  const net::ColoringFunction* coloring = nullptr;
  const LossSpec* spec = nullptr;
  bool with_gradient = false;
  int in_dim = 0;
  int out_dim = 0;
  std::size_t rows_per_center = 0;
};

void check_coloring(const net::ColoringFunction& coloring, const LossSpec& spec,
                    Variant expected) {
  if (spec.variant != expected)
    throw std::invalid_argument("loss: spec variant is " + variant_name(spec.variant) +
                                ", estimator expects " + variant_name(expected));
  spec.validate();
  int want_out = spec.num_colors + (spec.variant == Variant::Lagrangian ? 1 : 0);
  if (coloring.num_colors() != want_out)
    throw std::invalid_argument("loss: coloring outputs " + std::to_string(coloring.num_colors()) +
                                " components, spec needs " + std::to_string(want_out));
  if (coloring.input_dim() != spec.expected_input_dim())
    throw std::invalid_argument("loss: coloring input_dim " + std::to_string(coloring.input_dim()) +
                                " does not match spec (" + std::to_string(spec.expected_input_dim()) + ")");
}

// Shared chunked driver. fill(center_in_chunk, draws, batch, base_row) lays
// out rows; accumulate(...) consumes probabilities and fills cotangents.
template <typename Fill, typename Accumulate>
LossEstimate run_chunks(const net::ColoringFunction& coloring, const LossSpec& spec,
                        RngStream rng, int workers, std::size_t rows_per_center,
                        Fill fill, Accumulate accumulate) {
  const std::size_t n = spec.batch_centers;
  const int in_dim = coloring.input_dim();
  const int out = coloring.num_colors();
  const net::Network* network = coloring.network();
  const bool grad = network != nullptr;
  const std::size_t num_chunks = (n + kChunkCenters - 1) / kChunkCenters;

  std::vector<ChunkOut> outs(num_chunks);
  kern::parallel_chunks(num_chunks, workers, [&](std::size_t ci) {
    std::size_t lo = ci * kChunkCenters;
    std::size_t hi = std::min(n, lo + kChunkCenters);
    std::size_t nc = hi - lo;
    std::size_t rows = nc * rows_per_center;
    std::vector<double> batch(rows * static_cast<std::size_t>(in_dim), 0.0);
    std::vector<Draws> draws(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      RngStream s = rng.substream(lo + i);
      draws[i] = draw_center(spec, s);
      fill(i, draws[i], batch, nc);
    }
    std::vector<double> probs(rows * static_cast<std::size_t>(out));
    ChunkOut& co = outs[ci];
    if (grad) {
      net::EvaluationTape tape =
          net::evaluate_with_tape(*network, batch, rows, probs.data());
      std::vector<double> cot(rows * static_cast<std::size_t>(out), 0.0);
      for (std::size_t i = 0; i < nc; ++i)
        accumulate(i, draws[i], probs, nc, co, cot.data());
      co.grad.assign(network->parameters.size(), 0.0);
      net::backward(*network, tape, cot, co.grad.data());
    } else {
      coloring.evaluate(batch, rows, probs.data());
      for (std::size_t i = 0; i < nc; ++i)
        accumulate(i, draws[i], probs, nc, co, nullptr);
    }
  });

  LossEstimate est;
  double pair_sum = 0.0, bonus_sum = 0.0;
  for (const auto& co : outs) {
    pair_sum += co.pair_sum;
    bonus_sum += co.bonus_sum;
  }
  const double nm = static_cast<double>(n) * static_cast<double>(spec.batch_peripherals);
  est.value = pair_sum / nm;
  if (spec.variant == Variant::Lagrangian)
    est.value += spec.lagrange_lambda * (bonus_sum / static_cast<double>(n));
  if (grad) {
    est.parameter_gradient.assign(network->parameters.size(), 0.0);
    for (const auto& co : outs)
      for (std::size_t i = 0; i < est.parameter_gradient.size(); ++i)
        est.parameter_gradient[i] += co.grad[i];
  }
  est.samples_used = n * spec.batch_peripherals *
                     (spec.variant == Variant::OffDiagonal
                          ? static_cast<std::size_t>(spec.num_colors)
                          : 1);
  return est;
}

}  // namespace

LossEstimate estimate_unit_loss(const net::ColoringFunction& coloring,
                                const LossSpec& spec, RngStream rng,
                                int workers) {
  check_coloring(coloring, spec, Variant::Unit);
  const int c = spec.num_colors;
  const int in_dim = coloring.input_dim();
  const std::size_t m = spec.batch_peripherals;
  const double inv_nm =
      1.0 / (static_cast<double>(spec.batch_centers) * static_cast<double>(m));
  const std::size_t rpc = 1 + m;

  auto fill = [&](std::size_t i, const Draws& d, std::vector<double>& batch, std::size_t nc) {
    write_row(batch, i, in_dim, d.x, {});
    for (std::size_t j = 0; j < m; ++j)
      write_row(batch, nc + i * m + j, in_dim, d.x + d.dirs[j], {});
  };
  auto acc = [&](std::size_t i, const Draws&, const std::vector<double>& probs,
                 std::size_t nc, ChunkOut& co, double* cot) {
    const double* px = probs.data() + i * static_cast<std::size_t>(c);
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t yrow = nc + i * m + j;
      const double* py = probs.data() + yrow * static_cast<std::size_t>(c);
      for (int k = 0; k < c; ++k) co.pair_sum += px[k] * py[k];
      if (cot) {
        double* cx = cot + i * static_cast<std::size_t>(c);
        double* cy = cot + yrow * static_cast<std::size_t>(c);
        for (int k = 0; k < c; ++k) {
          cx[k] += inv_nm * py[k];
          cy[k] += inv_nm * px[k];
        }
      }
    }
  };
  return run_chunks(coloring, spec, rng, workers, rpc, fill, acc);
}

LossEstimate estimate_offdiag_loss(const net::ColoringFunction& coloring,
                                   const LossSpec& spec, RngStream rng,
                                   int workers) {
  check_coloring(coloring, spec, Variant::OffDiagonal);
  const int c = spec.num_colors;
  const int in_dim = coloring.input_dim();
  const std::size_t m = spec.batch_peripherals;
  const double inv_nm =
      1.0 / (static_cast<double>(spec.batch_centers) * static_cast<double>(m));
  const std::size_t rpc = 1 + static_cast<std::size_t>(c) * m;

  // Distance of color k given this center's parameter draws.
  auto dist_of = [&](const Draws& d, int k) {
    const auto& ds = spec.distances[static_cast<std::size_t>(k)];
    if (!ds.ranged()) return ds.lo;
    std::size_t pi = 0;
    for (int q = 0; q < k; ++q)
      if (spec.distances[static_cast<std::size_t>(q)].ranged()) ++pi;
    return d.params[pi];
  };

  auto fill = [&](std::size_t i, const Draws& d, std::vector<double>& batch, std::size_t nc) {
    auto channels = rescaled_channels(spec, d);
    write_row(batch, i, in_dim, d.x, channels);
    for (int k = 0; k < c; ++k) {
      double dk = dist_of(d, k);
      for (std::size_t j = 0; j < m; ++j) {
        std::size_t row = nc + i * static_cast<std::size_t>(c) * m +
                          static_cast<std::size_t>(k) * m + j;
        write_row(batch, row, in_dim, d.x + dk * d.dirs[j], channels);
      }
    }
  };
  auto acc = [&](std::size_t i, const Draws&, const std::vector<double>& probs,
                 std::size_t nc, ChunkOut& co, double* cot) {
    const double* px = probs.data() + i * static_cast<std::size_t>(c);
    // j outer, k inner: matches the unit-loss accumulation order so the
    // all-unit-distances reduction is bit-exact.
    for (std::size_t j = 0; j < m; ++j) {
      for (int k = 0; k < c; ++k) {
        std::size_t yrow = nc + i * static_cast<std::size_t>(c) * m +
                           static_cast<std::size_t>(k) * m + j;
        const double* py = probs.data() + yrow * static_cast<std::size_t>(c);
        co.pair_sum += px[k] * py[k];
        if (cot) {
          cot[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] +=
              inv_nm * py[k];
          cot[yrow * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] +=
              inv_nm * px[k];
        }
      }
    }
  };
  return run_chunks(coloring, spec, rng, workers, rpc, fill, acc);
}

LossEstimate estimate_lagrangian_loss(const net::ColoringFunction& coloring,
                                      const LossSpec& spec, RngStream rng,
                                      int workers) {
  check_coloring(coloring, spec, Variant::Lagrangian);
  const int c = spec.num_colors;
  const int out = c + 1;
  const int in_dim = coloring.input_dim();
  const std::size_t m = spec.batch_peripherals;
  const double inv_nm =
      1.0 / (static_cast<double>(spec.batch_centers) * static_cast<double>(m));
  const double lam_n = spec.lagrange_lambda / static_cast<double>(spec.batch_centers);
  const std::size_t rpc = 1 + m;

  auto fill = [&](std::size_t i, const Draws& d, std::vector<double>& batch, std::size_t nc) {
    write_row(batch, i, in_dim, d.x, {});
    for (std::size_t j = 0; j < m; ++j)
      write_row(batch, nc + i * m + j, in_dim, d.x + d.dirs[j], {});
  };
  auto acc = [&](std::size_t i, const Draws&, const std::vector<double>& probs,
                 std::size_t nc, ChunkOut& co, double* cot) {
    const double* px = probs.data() + i * static_cast<std::size_t>(out);
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t yrow = nc + i * m + j;
      const double* py = probs.data() + yrow * static_cast<std::size_t>(out);
      for (int k = 0; k < c; ++k) co.pair_sum += px[k] * py[k];
      if (cot) {
        double* cx = cot + i * static_cast<std::size_t>(out);
        double* cy = cot + yrow * static_cast<std::size_t>(out);
        for (int k = 0; k < c; ++k) {
          cx[k] += inv_nm * py[k];
          cy[k] += inv_nm * px[k];
        }
      }
    }
    co.bonus_sum += px[c];
    if (cot) cot[i * static_cast<std::size_t>(out) + static_cast<std::size_t>(c)] += lam_n;
  };
  return run_chunks(coloring, spec, rng, workers, rpc, fill, acc);
}

LossEstimate estimate_triangle_loss(const net::ColoringFunction& coloring,
                                    const LossSpec& spec, RngStream rng,
                                    int workers) {
  check_coloring(coloring, spec, Variant::Triangle);
  const int c = spec.num_colors;
  const int in_dim = coloring.input_dim();
  const std::size_t m = spec.batch_peripherals;
  const double inv_nm =
      1.0 / (static_cast<double>(spec.batch_centers) * static_cast<double>(m));
  const std::size_t rpc = 1 + 3 * m;

  auto fill = [&](std::size_t i, const Draws& d, std::vector<double>& batch, std::size_t nc) {
    auto channels = rescaled_channels(spec, d);
    write_row(batch, i, in_dim, d.x, channels);
    for (std::size_t j = 0; j < m; ++j) {
      geom::Vec y = d.x + d.dirs[j];
      auto [z1, z2] = geom::triangle_third_points(d.x, y, d.a, d.b);
      std::size_t base = nc + i * 3 * m + 3 * j;
      write_row(batch, base, in_dim, y, channels);
      write_row(batch, base + 1, in_dim, z1, channels);
      write_row(batch, base + 2, in_dim, z2, channels);
    }
  };
  auto acc = [&](std::size_t i, const Draws&, const std::vector<double>& probs,
                 std::size_t nc, ChunkOut& co, double* cot) {
    const double* px = probs.data() + i * static_cast<std::size_t>(c);
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t base = nc + i * 3 * m + 3 * j;
      const double* py = probs.data() + base * static_cast<std::size_t>(c);
      const double* pz1 = probs.data() + (base + 1) * static_cast<std::size_t>(c);
      const double* pz2 = probs.data() + (base + 2) * static_cast<std::size_t>(c);
      for (int k = 0; k < c; ++k)
        co.pair_sum += px[k] * py[k] * (pz1[k] + pz2[k]) * 0.5;
      if (cot) {
        double* cx = cot + i * static_cast<std::size_t>(c);
        double* cy = cot + base * static_cast<std::size_t>(c);
        double* cz1 = cot + (base + 1) * static_cast<std::size_t>(c);
        double* cz2 = cot + (base + 2) * static_cast<std::size_t>(c);
        for (int k = 0; k < c; ++k) {
          double zsum = 0.5 * (pz1[k] + pz2[k]);
          cx[k] += inv_nm * py[k] * zsum;
          cy[k] += inv_nm * px[k] * zsum;
          cz1[k] += inv_nm * 0.5 * px[k] * py[k];
          cz2[k] += inv_nm * 0.5 * px[k] * py[k];
        }
      }
    }
  };
  return run_chunks(coloring, spec, rng, workers, rpc, fill, acc);
}

LossEstimate estimate_loss(const net::ColoringFunction& coloring,
                           const LossSpec& spec, RngStream rng, int workers) {
  switch (spec.variant) {
    case Variant::Unit: return estimate_unit_loss(coloring, spec, rng, workers);
    case Variant::OffDiagonal: return estimate_offdiag_loss(coloring, spec, rng, workers);
    case Variant::Lagrangian: return estimate_lagrangian_loss(coloring, spec, rng, workers);
    case Variant::Triangle: return estimate_triangle_loss(coloring, spec, rng, workers);
  }
  throw std::logic_error("estimate_loss: unknown variant");
}

PinnedEstimate estimate_offdiag_at(const net::ColoringFunction& coloring,
                                   const LossSpec& spec,
                                   const std::vector<double>& distance_values,
                                   RngStream rng, int workers) {
  check_coloring(coloring, spec, Variant::OffDiagonal);
  const net::Network* network = coloring.network();
  if (!network)
    throw std::invalid_argument("estimate_offdiag_at: network-backed coloring required");
  if (distance_values.size() != static_cast<std::size_t>(spec.num_colors))
    throw std::invalid_argument("estimate_offdiag_at: one distance value per color required");

  const int c = spec.num_colors;
  const int in_dim = coloring.input_dim();
  const int dim = spec.dimension;
  const std::size_t m = spec.batch_peripherals;
  const std::size_t n = spec.batch_centers;
  const double inv_nm = 1.0 / (static_cast<double>(n) * static_cast<double>(m));
  const std::size_t rpc = 1 + static_cast<std::size_t>(c) * m;
  const auto ranged = spec.ranged_indices();

  // Rescaled channel values for the pinned distances.
  std::vector<double> channels;
  for (int k : ranged) {
    const auto& ds = spec.distances[static_cast<std::size_t>(k)];
    channels.push_back(net::rescale_param(distance_values[static_cast<std::size_t>(k)], ds.lo, ds.hi));
  }

  const std::size_t num_chunks = (n + kChunkCenters - 1) / kChunkCenters;
  struct PinnedChunk {
    double sum = 0.0;
    std::vector<double> dgrad;
  };
  std::vector<PinnedChunk> outs(num_chunks);

  kern::parallel_chunks(num_chunks, workers, [&](std::size_t ci) {
    std::size_t lo = ci * kChunkCenters;
    std::size_t hi = std::min(n, lo + kChunkCenters);
    std::size_t nc = hi - lo;
    std::size_t rows = nc * rpc;
    std::vector<double> batch(rows * static_cast<std::size_t>(in_dim), 0.0);
    std::vector<Draws> draws(nc);
    for (std::size_t i = 0; i < nc; ++i) {
      RngStream s = rng.substream(lo + i);
      // Spatial draws and directions only; distances are pinned.
      draws[i].x = geom::Vec::zero(dim);
      for (int q = 0; q < dim; ++q)
        draws[i].x[q] = s.uniform(-spec.box_radius, spec.box_radius);
      for (std::size_t j = 0; j < m; ++j)
        draws[i].dirs.push_back(geom::sample_unit_direction(dim, spec.p_norm, s));
      write_row(batch, i, in_dim, draws[i].x, channels);
      for (int k = 0; k < c; ++k)
        for (std::size_t j = 0; j < m; ++j) {
          std::size_t row = nc + i * static_cast<std::size_t>(c) * m +
                            static_cast<std::size_t>(k) * m + j;
          write_row(batch, row, in_dim,
                    draws[i].x + distance_values[static_cast<std::size_t>(k)] * draws[i].dirs[j],
                    channels);
        }
    }
    std::vector<double> probs(rows * static_cast<std::size_t>(c));
    net::EvaluationTape tape = net::evaluate_with_tape(*network, batch, rows, probs.data());
    std::vector<double> cot(rows * static_cast<std::size_t>(c), 0.0);
    PinnedChunk& co = outs[ci];
    for (std::size_t i = 0; i < nc; ++i) {
      const double* px = probs.data() + i * static_cast<std::size_t>(c);
      for (std::size_t j = 0; j < m; ++j)
        for (int k = 0; k < c; ++k) {
          std::size_t yrow = nc + i * static_cast<std::size_t>(c) * m +
                             static_cast<std::size_t>(k) * m + j;
          const double* py = probs.data() + yrow * static_cast<std::size_t>(c);
          co.sum += px[k] * py[k];
          cot[i * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] += inv_nm * py[k];
          cot[yrow * static_cast<std::size_t>(c) + static_cast<std::size_t>(k)] += inv_nm * px[k];
        }
    }
    std::vector<double> pgrad(network->parameters.size(), 0.0);
    std::vector<double> igrad(rows * static_cast<std::size_t>(in_dim), 0.0);
    net::backward(*network, tape, cot, pgrad.data(), igrad.data());

    // d(value)/d(d_k): channel contributions from every row that carries the
    // rescaled value, plus the geometric shift of color-k peripheral points.
    co.dgrad.assign(static_cast<std::size_t>(c), 0.0);
    for (std::size_t row = 0; row < rows; ++row) {
      const double* gi = igrad.data() + row * static_cast<std::size_t>(in_dim);
      for (std::size_t ch = 0; ch < ranged.size(); ++ch) {
        const auto& ds = spec.distances[static_cast<std::size_t>(ranged[ch])];
        co.dgrad[static_cast<std::size_t>(ranged[ch])] +=
            gi[dim + static_cast<int>(ch)] * 2.0 / (ds.hi - ds.lo);
      }
    }
    for (std::size_t i = 0; i < nc; ++i)
      for (int k = 0; k < c; ++k)
        for (std::size_t j = 0; j < m; ++j) {
          std::size_t yrow = nc + i * static_cast<std::size_t>(c) * m +
                             static_cast<std::size_t>(k) * m + j;
          const double* gi = igrad.data() + yrow * static_cast<std::size_t>(in_dim);
          double acc = 0.0;
          for (int q = 0; q < dim; ++q) acc += gi[q] * draws[i].dirs[j][q];
          co.dgrad[static_cast<std::size_t>(k)] += acc;
        }
  });

  PinnedEstimate est;
  est.distance_gradient.assign(static_cast<std::size_t>(c), 0.0);
  for (const auto& co : outs) {
    est.value += co.sum;
    for (int k = 0; k < c; ++k)
      est.distance_gradient[static_cast<std::size_t>(k)] += co.dgrad[static_cast<std::size_t>(k)];
  }
  est.value *= inv_nm;
  est.samples_used = n * m * static_cast<std::size_t>(c);
  return est;
}

}  // namespace pf::loss
