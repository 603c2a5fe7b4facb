#include "planeforge/net.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "planeforge/errors.hpp"
#include "planeforge/kernels.hpp"

namespace pf::net {

namespace {

std::vector<int> layer_dims(const NetworkArchitecture& arch) {
  std::vector<int> dims;
  dims.push_back(arch.input_dim);
  for (int w : arch.hidden_widths) dims.push_back(w);
  dims.push_back(arch.num_colors);
  return dims;
}

void validate_architecture(const NetworkArchitecture& arch) {
  if (arch.input_dim < 1)
    throw std::invalid_argument("architecture: input_dim must be >= 1");
  if (arch.hidden_widths.empty())
    throw std::invalid_argument("architecture: hidden_widths must be non-empty");
  for (int w : arch.hidden_widths)
    if (w < 1) throw std::invalid_argument("architecture: hidden widths must be positive");
  if (arch.num_colors < 1)
    throw std::invalid_argument("architecture: num_colors must be >= 1");
  if (!(arch.omega0 > 0.0))
    throw std::invalid_argument("architecture: omega0 must be positive");
}

}  // namespace

std::size_t parameter_count(const NetworkArchitecture& arch) {
  validate_architecture(arch);
  auto dims = layer_dims(arch);
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    total += static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
             static_cast<std::size_t>(dims[l + 1]);
  return total;
}

Network init_network(const NetworkArchitecture& arch, std::uint64_t seed) {
  validate_architecture(arch);
  Network net;
  net.architecture = arch;
  net.rng_seed = seed;
  net.parameters.resize(parameter_count(arch));
  auto dims = layer_dims(arch);
  RngStream rng(seed);
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    double fan_in = dims[l];
    double bound = (l == 0) ? 1.0 / fan_in
                            : std::sqrt(6.0 / fan_in) / arch.omega0;
    std::size_t n = static_cast<std::size_t>(dims[l]) * static_cast<std::size_t>(dims[l + 1]) +
                    static_cast<std::size_t>(dims[l + 1]);
    for (std::size_t i = 0; i < n; ++i)
      net.parameters[pos++] = rng.uniform(-bound, bound);
  }
  return net;
}

geom::Vec wrap_periodic(const geom::Vec& point, const geom::Lattice& lattice) {
  geom::Vec f = lattice.to_frac(point);
  for (int i = 0; i < f.dim; ++i) {
    double r = f[i] - std::floor(f[i]);
    if (r >= 1.0) r = 0.0;  // tiny negative inputs round up to 1.0
    f[i] = r;
  }
  return f;
}

namespace {

struct LayerView {
  const double* w = nullptr;  // out x in, row-major
  const double* b = nullptr;  // out
  int in = 0;
  int out = 0;
};

std::vector<LayerView> layer_views(const Network& net) {
  auto dims = layer_dims(net.architecture);
  std::vector<LayerView> views;
  std::size_t pos = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    LayerView v;
    v.in = dims[l];
    v.out = dims[l + 1];
    v.w = net.parameters.data() + pos;
    pos += static_cast<std::size_t>(v.in) * static_cast<std::size_t>(v.out);
    v.b = net.parameters.data() + pos;
    pos += static_cast<std::size_t>(v.out);
    views.push_back(v);
  }
  return views;
}

void prepare_input(const Network& net, std::span<const double> inputs,
                   std::size_t count, std::vector<double>& prepared) {
  const int in_dim = net.architecture.input_dim;
  if (inputs.size() != count * static_cast<std::size_t>(in_dim))
    throw std::invalid_argument("evaluate: input size does not match count x input_dim");
  prepared.assign(inputs.begin(), inputs.end());
  if (net.architecture.periodic_wrap) {
    const geom::Lattice& lat = *net.architecture.periodic_wrap;
    const int sdim = lat.dim();
    if (sdim > in_dim)
      throw std::invalid_argument("evaluate: lattice dimension exceeds input_dim");
    for (std::size_t r = 0; r < count; ++r) {
      geom::Vec p = geom::Vec::zero(sdim);
      for (int i = 0; i < sdim; ++i)
        p[i] = prepared[r * static_cast<std::size_t>(in_dim) + static_cast<std::size_t>(i)];
      geom::Vec f = wrap_periodic(p, lat);
      for (int i = 0; i < sdim; ++i)
        prepared[r * static_cast<std::size_t>(in_dim) + static_cast<std::size_t>(i)] = f[i];
    }
  }
}

void softmax_rows(const double* logits, double* probs, std::size_t count, int c) {
  for (std::size_t r = 0; r < count; ++r) {
    const double* l = logits + r * static_cast<std::size_t>(c);
    double* p = probs + r * static_cast<std::size_t>(c);
    double m = l[0];
    for (int i = 1; i < c; ++i) m = std::max(m, l[i]);
    double sum = 0.0;
    for (int i = 0; i < c; ++i) {
      p[i] = std::exp(l[i] - m);
      sum += p[i];
    }
    double inv = 1.0 / sum;
    for (int i = 0; i < c; ++i) p[i] *= inv;
  }
}

// Grow-only scratch reused across calls; one instance per thread so chunk
// workers never share state.
struct NetWorkspace {
  std::vector<double> wt;
  std::vector<double> ping;
  std::vector<double> pong;
  std::vector<double> delta;
  std::vector<double> prev_delta;
};

NetWorkspace& workspace() {
  thread_local NetWorkspace ws;
  return ws;
}

void forward_impl(const Network& net, std::span<const double> inputs,
                  std::size_t count, double* probs_out, EvaluationTape* tape) {
  auto views = layer_views(net);
  const double omega = net.architecture.omega0;
  NetWorkspace& ws = workspace();

  if (tape) {
    tape->count = count;
    tape->source = &net;
    tape->preacts.clear();
    tape->acts.clear();
    tape->dacts.clear();
    prepare_input(net, inputs, count, tape->input);
  } else {
    prepare_input(net, inputs, count, ws.ping);
  }

  auto ensure = [](std::vector<double>& v, std::size_t n) {
    if (v.size() < n) v.resize(n);
    return v.data();
  };

  // ws.ping holds the current activations, ws.pong the preactivations; the
  // sine always runs out of place so the kernels stay vectorized.
  const double* cur = tape ? tape->input.data() : ws.ping.data();
  for (std::size_t l = 0; l < views.size(); ++l) {
    const LayerView& v = views[l];
    const std::size_t zsize = count * static_cast<std::size_t>(v.out);
    ensure(ws.wt, static_cast<std::size_t>(v.in) * static_cast<std::size_t>(v.out));
    kern::transpose(v.w, ws.wt.data(), v.out, v.in);

    if (l + 1 < views.size()) {
      double* z;
      double* act;
      double* dact = nullptr;
      if (tape) {
        tape->preacts.emplace_back(zsize);
        tape->acts.emplace_back(zsize);
        tape->dacts.emplace_back(zsize);
        z = tape->preacts.back().data();
        act = tape->acts.back().data();
        dact = tape->dacts.back().data();
      } else {
        z = ensure(ws.pong, zsize);
        // The input lives at the front of ping; resizing preserves it.
        ensure(ws.ping, zsize);
        cur = ws.ping.data();
        act = ws.ping.data();
      }
      kern::linear_rows(cur, ws.wt.data(), v.b, z, count, v.in, v.out);
      if (tape) {
        kern::vsincos(z, act, dact, zsize, omega);
      } else {
        kern::vsin(z, act, zsize, omega);
      }
      cur = act;
    } else {
      double* z = ensure(ws.pong, zsize);
      kern::linear_rows(cur, ws.wt.data(), v.b, z, count, v.in, v.out);
      softmax_rows(z, probs_out, count, v.out);
      if (tape)
        tape->probs.assign(probs_out, probs_out + zsize);
    }
  }
}

}  // namespace

void evaluate(const Network& net, std::span<const double> inputs,
              std::size_t count, double* probs_out) {
  forward_impl(net, inputs, count, probs_out, nullptr);
}

EvaluationTape evaluate_with_tape(const Network& net,
                                  std::span<const double> inputs,
                                  std::size_t count, double* probs_out) {
  EvaluationTape tape;
  forward_impl(net, inputs, count, probs_out, &tape);
  return tape;
}

void backward(const Network& net, const EvaluationTape& tape,
              std::span<const double> output_cotangents, double* param_grad,
              double* input_grad) {
  if (tape.source != &net)
    throw std::invalid_argument("backward: tape was not produced by this network");
  auto views = layer_views(net);
  const std::size_t count = tape.count;
  const int c = net.architecture.num_colors;
  if (output_cotangents.size() != count * static_cast<std::size_t>(c))
    throw std::invalid_argument("backward: cotangent size mismatch");
  NetWorkspace& ws = workspace();

  // Softmax backward: dz = p * (g - <p, g>) per row.
  std::vector<double>& delta = ws.delta;
  delta.resize(count * static_cast<std::size_t>(c));
  for (std::size_t r = 0; r < count; ++r) {
    const double* p = tape.probs.data() + r * static_cast<std::size_t>(c);
    const double* g = output_cotangents.data() + r * static_cast<std::size_t>(c);
    double pg = 0.0;
    for (int i = 0; i < c; ++i) pg += p[i] * g[i];
    double* d = delta.data() + r * static_cast<std::size_t>(c);
    for (int i = 0; i < c; ++i) d[i] = p[i] * (g[i] - pg);
  }

  // Parameter offsets per layer in the flat vector.
  std::vector<std::size_t> offsets;
  {
    std::size_t pos = 0;
    for (const auto& v : views) {
      offsets.push_back(pos);
      pos += static_cast<std::size_t>(v.in) * static_cast<std::size_t>(v.out) +
             static_cast<std::size_t>(v.out);
    }
  }

  std::vector<double>& prev_delta = ws.prev_delta;
  for (std::size_t li = views.size(); li-- > 0;) {
    const LayerView& v = views[li];
    const double* layer_input =
        (li == 0) ? tape.input.data() : tape.acts[li - 1].data();

    // dW (out x in) += delta^T . input, db += column sums of delta.
    double* dw = param_grad + offsets[li];
    double* db = dw + static_cast<std::size_t>(v.in) * static_cast<std::size_t>(v.out);
    kern::accumulate_outer(delta.data(), layer_input, dw, count, v.out, v.in);
    for (std::size_t r = 0; r < count; ++r) {
      const double* d = delta.data() + r * static_cast<std::size_t>(v.out);
      for (int o = 0; o < v.out; ++o) db[o] += d[o];
    }

    // d(input of this layer) = delta . W (count x in).
    prev_delta.resize(count * static_cast<std::size_t>(v.in));
    kern::linear_rows(delta.data(), v.w, nullptr, prev_delta.data(), count, v.out, v.in);

    if (li == 0) {
      if (input_grad) {
        std::copy(prev_delta.begin(), prev_delta.end(), input_grad);
        if (net.architecture.periodic_wrap) {
          // Chain through x -> M^-1 x (mod 1): gradient maps by M^-T a.e.
          const geom::Lattice& lat = *net.architecture.periodic_wrap;
          const int sdim = lat.dim();
          const int in_dim = net.architecture.input_dim;
          for (std::size_t r = 0; r < count; ++r) {
            geom::Vec g = geom::Vec::zero(sdim);
            for (int i = 0; i < sdim; ++i)
              g[i] = input_grad[r * static_cast<std::size_t>(in_dim) + static_cast<std::size_t>(i)];
            geom::Vec mapped = lat.inverse_basis().apply_transpose(g);
            for (int i = 0; i < sdim; ++i)
              input_grad[r * static_cast<std::size_t>(in_dim) + static_cast<std::size_t>(i)] =
                  mapped[i];
          }
        }
      }
      break;
    }

    // Through the sine: dz = d(act) * omega cos(omega z), recorded forward.
    const std::vector<double>& dact = tape.dacts[li - 1];
    delta.resize(prev_delta.size());
#pragma omp simd
    for (std::size_t i = 0; i < prev_delta.size(); ++i)
      delta[i] = prev_delta[i] * dact[i];
  }
}

void save_checkpoint(const Network& net, const std::string& path) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["architecture"] = {
      {"input_dim", net.architecture.input_dim},
      {"hidden_widths", net.architecture.hidden_widths},
      {"num_colors", net.architecture.num_colors},
      {"omega0", net.architecture.omega0},
  };
  if (net.architecture.periodic_wrap) {
    const geom::Lattice& lat = *net.architecture.periodic_wrap;
    std::vector<double> flat;
    for (int i = 0; i < lat.dim(); ++i)
      for (int k = 0; k < lat.dim(); ++k) flat.push_back(lat.vector(i)[k]);
    j["lattice"] = {{"vectors", flat}};
  }
  j["parameters"] = net.parameters;
  std::ofstream out(path);
  if (!out) throw ConfigError("checkpoint: cannot open '" + path + "' for writing");
  out << j.dump(1) << "\n";
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: corrupt file: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != 1)
      throw ConfigError("checkpoint: unsupported format_version");
    Network net;
    const auto& a = j.at("architecture");
    net.architecture.input_dim = a.at("input_dim").get<int>();
    net.architecture.hidden_widths = a.at("hidden_widths").get<std::vector<int>>();
    net.architecture.num_colors = a.at("num_colors").get<int>();
    net.architecture.omega0 = a.at("omega0").get<double>();
    if (j.contains("lattice")) {
      auto flat = j.at("lattice").at("vectors").get<std::vector<double>>();
      int dim = flat.size() == 4 ? 2 : (flat.size() == 9 ? 3 : 0);
      if (dim == 0) throw ConfigError("checkpoint: lattice vectors must have 4 or 9 entries");
      std::vector<geom::Vec> vs;
      for (int i = 0; i < dim; ++i) {
        geom::Vec v = geom::Vec::zero(dim);
        for (int k = 0; k < dim; ++k)
          v[k] = flat[static_cast<std::size_t>(i * dim + k)];
        vs.push_back(v);
      }
      net.architecture.periodic_wrap = geom::Lattice::from_vectors(vs);
      net.architecture.spatial_dim = dim;
    } else {
      net.architecture.spatial_dim = std::min(net.architecture.input_dim, 2);
    }
    net.parameters = j.at("parameters").get<std::vector<double>>();
    if (net.parameters.size() != parameter_count(net.architecture))
      throw ConfigError("checkpoint: parameter count does not match architecture");
    for (double p : net.parameters)
      if (!std::isfinite(p)) throw ConfigError("checkpoint: non-finite parameter");
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: invalid contents: ") + e.what());
  }
}

}  // namespace pf::net
