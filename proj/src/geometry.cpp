#include "planeforge/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "planeforge/errors.hpp"

namespace pf::geom {

Vec operator+(const Vec& a, const Vec& b) {
  Vec r = a;
  for (int i = 0; i < a.dim; ++i) r[i] += b[i];
  return r;
}

Vec operator-(const Vec& a, const Vec& b) {
  Vec r = a;
  for (int i = 0; i < a.dim; ++i) r[i] -= b[i];
  return r;
}

Vec operator*(double s, const Vec& a) {
  Vec r = a;
  for (int i = 0; i < a.dim; ++i) r[i] *= s;
  return r;
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (int i = 0; i < a.dim; ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

double distance(const Vec& a, const Vec& b) { return norm(a - b); }

double lp_norm(const Vec& a, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (int i = 0; i < a.dim; ++i) m = std::max(m, std::fabs(a[i]));
    return m;
  }
  double s = 0.0;
  for (int i = 0; i < a.dim; ++i) s += std::pow(std::fabs(a[i]), p);
  return std::pow(s, 1.0 / p);
}

double Mat::det() const {
  if (dim == 2) return at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0);
  return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
         at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
         at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
}

Mat Mat::inverse() const {
  double d = det();
  if (std::fabs(d) <= 1e-12)
    throw ConfigError("lattice: singular basis matrix (|det| <= 1e-12)");
  Mat r;
  r.dim = dim;
  if (dim == 2) {
    r.at(0, 0) = at(1, 1) / d;
    r.at(0, 1) = -at(0, 1) / d;
    r.at(1, 0) = -at(1, 0) / d;
    r.at(1, 1) = at(0, 0) / d;
  } else {
    r.at(0, 0) = (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) / d;
    r.at(0, 1) = (at(0, 2) * at(2, 1) - at(0, 1) * at(2, 2)) / d;
    r.at(0, 2) = (at(0, 1) * at(1, 2) - at(0, 2) * at(1, 1)) / d;
    r.at(1, 0) = (at(1, 2) * at(2, 0) - at(1, 0) * at(2, 2)) / d;
    r.at(1, 1) = (at(0, 0) * at(2, 2) - at(0, 2) * at(2, 0)) / d;
    r.at(1, 2) = (at(0, 2) * at(1, 0) - at(0, 0) * at(1, 2)) / d;
    r.at(2, 0) = (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0)) / d;
    r.at(2, 1) = (at(0, 1) * at(2, 0) - at(0, 0) * at(2, 1)) / d;
    r.at(2, 2) = (at(0, 0) * at(1, 1) - at(0, 1) * at(1, 0)) / d;
  }
  return r;
}

Vec Mat::apply(const Vec& v) const {
  Vec r = Vec::zero(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) r[i] += at(i, j) * v[j];
  return r;
}

Vec Mat::apply_transpose(const Vec& v) const {
  Vec r = Vec::zero(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) r[i] += at(j, i) * v[j];
  return r;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

Mat basis_from_vectors(const Vec* vs, int dim) {
  Mat m;
  m.dim = dim;
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) m.at(i, j) = vs[j][i];
  return m;
}

void check_angle_window(const Vec& v1, const Vec& v2) {
  double n1 = norm(v1), n2 = norm(v2);
  if (n1 <= 0.0 || n2 <= 0.0)
    throw ConfigError("lattice: zero basis vector");
  double c = std::clamp(dot(v1, v2) / (n1 * n2), -1.0, 1.0);
  double angle = std::acos(c);
  if (angle < kPi / 6.0 - 1e-12 || angle > 5.0 * kPi / 6.0 + 1e-12)
    throw ConfigError("lattice: angle between v1 and v2 outside [pi/6, 5pi/6]");
}

}  // namespace

Lattice::Lattice(const Vec& v1, const Vec& v2) : dim_(2), vectors_{v1, v2, Vec()} {
  check_angle_window(v1, v2);
  basis_ = basis_from_vectors(vectors_.data(), 2);
  inv_ = basis_.inverse();
  det_abs_ = std::fabs(basis_.det());
}

Lattice::Lattice(const Vec& v1, const Vec& v2, const Vec& v3)
    : dim_(3), vectors_{v1, v2, v3} {
  basis_ = basis_from_vectors(vectors_.data(), 3);
  inv_ = basis_.inverse();
  det_abs_ = std::fabs(basis_.det());
}

Lattice Lattice::from_vectors(const std::vector<Vec>& vs) {
  if (vs.size() == 2) return Lattice(vs[0], vs[1]);
  if (vs.size() == 3) return Lattice(vs[0], vs[1], vs[2]);
  throw ConfigError("lattice: expected 2 or 3 basis vectors");
}

double Lattice::cell_diameter() const {
  double best = 0.0;
  int n = dim_;
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  for (int s = 0; s < combos; ++s) {
    int rem = s;
    Vec d = Vec::zero(n);
    for (int i = 0; i < n; ++i) {
      int sign = rem % 3 - 1;
      rem /= 3;
      if (sign != 0) d = d + static_cast<double>(sign) * vectors_[static_cast<std::size_t>(i)];
    }
    best = std::max(best, norm(d));
  }
  return best;
}

Vec Cell::center_frac() const {
  Vec f = Vec::zero(lattice->dim());
  for (int i = 0; i < lattice->dim(); ++i)
    f[i] = (index[static_cast<std::size_t>(i)] + 0.5) / resolution[static_cast<std::size_t>(i)];
  return f;
}

Vec Cell::center_world() const { return lattice->to_world(center_frac()); }

std::vector<Vec> Cell::vertices() const {
  int n = lattice->dim();
  Vec origin = Vec::zero(n);
  for (int i = 0; i < n; ++i)
    origin[i] = static_cast<double>(index[static_cast<std::size_t>(i)]) /
                resolution[static_cast<std::size_t>(i)];
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(1) << n);
  for (int s = 0; s < (1 << n); ++s) {
    Vec f = origin;
    for (int i = 0; i < n; ++i)
      if (s & (1 << i)) f[i] += 1.0 / resolution[static_cast<std::size_t>(i)];
    out.push_back(lattice->to_world(f));
  }
  return out;
}

std::vector<double> sample_box(double radius, int dim, std::size_t count,
                               RngStream& rng) {
  if (!(radius > 0.0)) throw std::invalid_argument("sample_box: radius must be positive");
  if (count < 1) throw std::invalid_argument("sample_box: count must be >= 1");
  std::vector<double> out(count * static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = rng.uniform(-radius, radius);
  return out;
}

namespace {

Vec euclidean_direction(int dim, RngStream& rng) {
  if (dim == 2) {
    double a = 2.0 * kPi * rng.uniform();
    return Vec(std::cos(a), std::sin(a));
  }
  for (;;) {
    Vec g = Vec::zero(dim);
    for (int i = 0; i < dim; ++i) g[i] = rng.normal();
    double n = norm(g);
    if (n > 1e-12) return (1.0 / n) * g;
  }
}

Vec lp_direction(double p, int dim, RngStream& rng) {
  if (std::isinf(p)) {
    // Face-uniform on the unit cube surface.
    int axis = std::min(dim - 1, static_cast<int>(rng.uniform() * dim));
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Vec x = Vec::zero(dim);
    for (int i = 0; i < dim; ++i) x[i] = rng.uniform(-1.0, 1.0);
    x[axis] = sign;
    return x;
  }
  for (;;) {
    Vec g = Vec::zero(dim);
    for (int i = 0; i < dim; ++i) {
      double mag = std::pow(rng.gamma(1.0 / p), 1.0 / p);
      double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      g[i] = sign * mag;
    }
    double n = lp_norm(g, p);
    if (n > 1e-12) return (1.0 / n) * g;
  }
}

}  // namespace

Vec sample_unit_direction(int dim, double p, RngStream& rng) {
  if (p == 2.0) return euclidean_direction(dim, rng);
  return lp_direction(p, dim, rng);
}

std::vector<double> sample_sphere(const Vec& center, double radius, int dim,
                                  std::size_t count, RngStream& rng) {
  if (!(radius > 0.0))
    throw std::invalid_argument("sample_sphere: radius must be positive");
  std::vector<double> out(count * static_cast<std::size_t>(dim));
  for (std::size_t s = 0; s < count; ++s) {
    Vec d = euclidean_direction(dim, rng);
    for (int i = 0; i < dim; ++i)
      out[s * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] =
          center[i] + radius * d[i];
  }
  return out;
}

std::vector<double> sample_lp_sphere(const Vec& center, double radius,
                                     double p, int dim, std::size_t count,
                                     RngStream& rng) {
  if (!(p >= 1.0)) throw std::invalid_argument("sample_lp_sphere: p must be >= 1");
  if (!(radius > 0.0))
    throw std::invalid_argument("sample_lp_sphere: radius must be positive");
  std::vector<double> out(count * static_cast<std::size_t>(dim));
  for (std::size_t s = 0; s < count; ++s) {
    Vec d = lp_direction(p, dim, rng);
    for (int i = 0; i < dim; ++i)
      out[s * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)] =
          center[i] + radius * d[i];
  }
  return out;
}

std::pair<Vec, Vec> triangle_third_points(const Vec& x, const Vec& y, double a,
                                          double b) {
  if (x.dim != 2 || y.dim != 2)
    throw std::invalid_argument("triangle_third_points: 2D points required");
  Vec d = y - x;
  double c = norm(d);
  if (std::fabs(c - 1.0) > 1e-9)
    throw std::invalid_argument("triangle_third_points: |x - y| must equal 1");
  if (!(a + b > 1.0))
    throw std::invalid_argument("triangle_third_points: a + b must exceed 1");
  if (!(std::fabs(a - b) < 1.0))
    throw std::invalid_argument("triangle_third_points: |a - b| must be below 1");
  double alpha = (a * a - b * b + c * c) / (2.0 * c);
  double h2 = a * a - alpha * alpha;
  double h = std::sqrt(std::max(h2, 0.0));
  Vec u = (1.0 / c) * d;
  Vec n(-u[1], u[0]);
  Vec base = x + alpha * u;
  return {base + h * n, base - h * n};
}

namespace {

double point_segment_distance(const Vec& p, const Vec& s0, const Vec& s1) {
  Vec d = s1 - s0;
  double dd = dot(d, d);
  double t = dd > 0.0 ? std::clamp(dot(p - s0, d) / dd, 0.0, 1.0) : 0.0;
  return distance(p, s0 + t * d);
}

double segment_segment_distance(const Vec& p0, const Vec& p1, const Vec& q0,
                                const Vec& q1) {
  Vec u = p1 - p0, v = q1 - q0, w = p0 - q0;
  double a = dot(u, u), b = dot(u, v), c = dot(v, v), d = dot(u, w),
         e = dot(v, w);
  double denom = a * c - b * b;
  double s, t;
  if (denom > 1e-14 * a * c + 1e-300) {
    s = std::clamp((b * e - c * d) / denom, 0.0, 1.0);
  } else {
    s = 0.0;
  }
  t = (b * s + e);
  if (c > 0.0) {
    t = std::clamp(t / c, 0.0, 1.0);
  } else {
    t = 0.0;
  }
  // Re-clamp s for the chosen t.
  if (a > 0.0) s = std::clamp((b * t - d) / a, 0.0, 1.0);
  return distance(p0 + s * u, q0 + t * v);
}

double point_parallelogram_distance(const Vec& p, const Vec& f0, const Vec& u,
                                    const Vec& v) {
  double a = dot(u, u), b = dot(u, v), c = dot(v, v);
  Vec w = p - f0;
  double d = dot(w, u), e = dot(w, v);
  double denom = a * c - b * b;
  if (denom > 1e-300) {
    double s = (c * d - b * e) / denom;
    double t = (a * e - b * d) / denom;
    if (s >= 0.0 && s <= 1.0 && t >= 0.0 && t <= 1.0)
      return distance(p, f0 + s * u + t * v);
  }
  double best = point_segment_distance(p, f0, f0 + u);
  best = std::min(best, point_segment_distance(p, f0, f0 + v));
  best = std::min(best, point_segment_distance(p, f0 + u, f0 + u + v));
  best = std::min(best, point_segment_distance(p, f0 + v, f0 + u + v));
  return best;
}

std::vector<Vec> polytope_vertices(const Vec& origin,
                                   const std::vector<Vec>& edges) {
  std::vector<Vec> out;
  int n = static_cast<int>(edges.size());
  out.reserve(static_cast<std::size_t>(1) << n);
  for (int s = 0; s < (1 << n); ++s) {
    Vec v = origin;
    for (int i = 0; i < n; ++i)
      if (s & (1 << i)) v = v + edges[static_cast<std::size_t>(i)];
    out.push_back(v);
  }
  return out;
}

bool separated_on_axis(const std::vector<Vec>& va, const std::vector<Vec>& vb,
                       const Vec& axis) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (const Vec& v : va) {
    double d = dot(v, axis);
    amin = std::min(amin, d);
    amax = std::max(amax, d);
  }
  for (const Vec& v : vb) {
    double d = dot(v, axis);
    bmin = std::min(bmin, d);
    bmax = std::max(bmax, d);
  }
  return amax < bmin || bmax < amin;
}

Vec cross(const Vec& a, const Vec& b) {
  return Vec(a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
             a[0] * b[1] - a[1] * b[0]);
}

bool polytopes_intersect(const std::vector<Vec>& va,
                         const std::vector<Vec>& vb,
                         const std::vector<Vec>& ea,
                         const std::vector<Vec>& eb, int dim) {
  std::vector<Vec> axes;
  if (dim == 2) {
    for (const auto& e : ea) axes.push_back(Vec(-e[1], e[0]));
    for (const auto& e : eb) axes.push_back(Vec(-e[1], e[0]));
  } else {
    axes.push_back(cross(ea[0], ea[1]));
    axes.push_back(cross(ea[0], ea[2]));
    axes.push_back(cross(ea[1], ea[2]));
    axes.push_back(cross(eb[0], eb[1]));
    axes.push_back(cross(eb[0], eb[2]));
    axes.push_back(cross(eb[1], eb[2]));
    for (const auto& x : ea)
      for (const auto& y : eb) axes.push_back(cross(x, y));
  }
  for (const Vec& axis : axes) {
    if (norm(axis) < 1e-14) continue;
    if (separated_on_axis(va, vb, axis)) return false;
  }
  return true;
}

struct Face {
  Vec origin;
  Vec u;
  Vec v;
};

std::vector<Face> parallelepiped_faces(const Vec& origin,
                                       const std::vector<Vec>& e) {
  std::vector<Face> faces;
  for (int skip = 0; skip < 3; ++skip) {
    int i = (skip + 1) % 3, j = (skip + 2) % 3;
    faces.push_back({origin, e[static_cast<std::size_t>(i)], e[static_cast<std::size_t>(j)]});
    faces.push_back({origin + e[static_cast<std::size_t>(skip)],
                     e[static_cast<std::size_t>(i)], e[static_cast<std::size_t>(j)]});
  }
  return faces;
}

struct Edge {
  Vec p0;
  Vec p1;
};

std::vector<Edge> polytope_edges(const Vec& origin, const std::vector<Vec>& e,
                                 int dim) {
  std::vector<Edge> edges;
  if (dim == 2) {
    Vec o = origin;
    edges.push_back({o, o + e[0]});
    edges.push_back({o, o + e[1]});
    edges.push_back({o + e[0], o + e[0] + e[1]});
    edges.push_back({o + e[1], o + e[0] + e[1]});
  } else {
    for (int axis = 0; axis < 3; ++axis) {
      int i = (axis + 1) % 3, j = (axis + 2) % 3;
      for (int s = 0; s < 4; ++s) {
        Vec o = origin;
        if (s & 1) o = o + e[static_cast<std::size_t>(i)];
        if (s & 2) o = o + e[static_cast<std::size_t>(j)];
        edges.push_back({o, o + e[static_cast<std::size_t>(axis)]});
      }
    }
  }
  return edges;
}

}  // namespace

double polytope_min_distance(const Vec& origin_a,
                             const std::vector<Vec>& edges_a,
                             const Vec& origin_b,
                             const std::vector<Vec>& edges_b) {
  int dim = origin_a.dim;
  auto va = polytope_vertices(origin_a, edges_a);
  auto vb = polytope_vertices(origin_b, edges_b);
  if (polytopes_intersect(va, vb, edges_a, edges_b, dim)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  if (dim == 2) {
    auto edge_list_a = polytope_edges(origin_a, edges_a, 2);
    auto edge_list_b = polytope_edges(origin_b, edges_b, 2);
    for (const Vec& p : va)
      for (const auto& ed : edge_list_b)
        best = std::min(best, point_segment_distance(p, ed.p0, ed.p1));
    for (const Vec& p : vb)
      for (const auto& ed : edge_list_a)
        best = std::min(best, point_segment_distance(p, ed.p0, ed.p1));
    return best;
  }
  auto faces_a = parallelepiped_faces(origin_a, edges_a);
  auto faces_b = parallelepiped_faces(origin_b, edges_b);
  for (const Vec& p : va)
    for (const auto& f : faces_b)
      best = std::min(best, point_parallelogram_distance(p, f.origin, f.u, f.v));
  for (const Vec& p : vb)
    for (const auto& f : faces_a)
      best = std::min(best, point_parallelogram_distance(p, f.origin, f.u, f.v));
  auto ea = polytope_edges(origin_a, edges_a, 3);
  auto eb = polytope_edges(origin_b, edges_b, 3);
  for (const auto& x : ea)
    for (const auto& y : eb)
      best = std::min(best, segment_segment_distance(x.p0, x.p1, y.p0, y.p1));
  return best;
}

DistanceInterval cell_interval_for_offset(const Lattice& lattice,
                                          const std::array<int, 3>& resolution,
                                          const Vec& frac_offset) {
  int n = lattice.dim();
  std::vector<Vec> edges;
  edges.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    edges.push_back((1.0 / resolution[static_cast<std::size_t>(i)]) * lattice.vector(i));
  Vec off = lattice.to_world(frac_offset);

  // Maximum distance between the convex cells is attained at a vertex pair;
  // vertex differences enumerate sign combinations of the edge vectors.
  double upper = 0.0;
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  for (int s = 0; s < combos; ++s) {
    int rem = s;
    Vec d = off;
    for (int i = 0; i < n; ++i) {
      int sign = rem % 3 - 1;
      rem /= 3;
      if (sign != 0) d = d + static_cast<double>(sign) * edges[static_cast<std::size_t>(i)];
    }
    upper = std::max(upper, norm(d));
  }

  double lower = polytope_min_distance(Vec::zero(n), edges, off, edges);

  DistanceInterval out;
  out.lower = std::max(0.0, lower - kIntervalPadding);
  out.upper = upper + kIntervalPadding;
  return out;
}

DistanceInterval cell_distance_interval(const Cell& a, const Cell& b,
                                        const std::array<int, 3>& translate) {
  if (a.lattice != b.lattice || a.resolution != b.resolution)
    throw std::invalid_argument("cell_distance_interval: cells on different grids");
  int n = a.lattice->dim();
  Vec frac = Vec::zero(n);
  for (int i = 0; i < n; ++i) {
    auto ix = static_cast<std::size_t>(i);
    frac[i] = static_cast<double>(b.index[ix] - a.index[ix]) / a.resolution[ix] +
              translate[ix];
  }
  return cell_interval_for_offset(*a.lattice, a.resolution, frac);
}

namespace {

// Distance from a world point to the centered difference body
// {sum gamma_i v_i : gamma in [-1, 1]^n} = P - P.
double point_to_difference_body(const Lattice& lattice, const Vec& t) {
  int n = lattice.dim();
  Vec f = lattice.to_frac(t);
  bool inside = true;
  for (int i = 0; i < n; ++i)
    if (f[i] < -1.0 || f[i] > 1.0) inside = false;
  if (inside) return 0.0;
  Vec origin = Vec::zero(n);
  std::vector<Vec> edges;
  for (int i = 0; i < n; ++i) {
    origin = origin - lattice.vector(i);
    edges.push_back(2.0 * lattice.vector(i));
  }
  if (n == 2) {
    auto edge_list = polytope_edges(origin, edges, 2);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& ed : edge_list)
      best = std::min(best, point_segment_distance(t, ed.p0, ed.p1));
    return best;
  }
  auto faces = parallelepiped_faces(origin, edges);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& fc : faces)
    best = std::min(best, point_parallelogram_distance(t, fc.origin, fc.u, fc.v));
  return best;
}

}  // namespace

std::vector<std::array<int, 3>> lattice_translates(const Lattice& lattice,
                                                   double reach) {
  if (!(reach > 0.0))
    throw std::invalid_argument("lattice_translates: reach must be positive");
  int n = lattice.dim();
  // Safe coefficient bound: |n_i| <= (reach + diam P) / sigma_min(M), with
  // sigma_min bounded below by |det| / ||M||_F^(n-1).
  double fro = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) fro += lattice.basis().at(i, j) * lattice.basis().at(i, j);
  fro = std::sqrt(fro);
  double sigma_lb = lattice.det_abs() / std::pow(fro, n - 1);
  int bound = static_cast<int>(std::ceil((reach + lattice.cell_diameter()) / sigma_lb)) + 1;

  std::vector<std::array<int, 3>> out;
  int lo2 = (n == 3) ? -bound : 0;
  int hi2 = (n == 3) ? bound : 0;
  for (int n1 = -bound; n1 <= bound; ++n1) {
    for (int n2 = -bound; n2 <= bound; ++n2) {
      for (int n3 = lo2; n3 <= hi2; ++n3) {
        Vec t = static_cast<double>(n1) * lattice.vector(0) +
                static_cast<double>(n2) * lattice.vector(1);
        if (n == 3) t = t + static_cast<double>(n3) * lattice.vector(2);
        if (point_to_difference_body(lattice, t) <= reach + kIntervalPadding)
          out.push_back({n1, n2, n3});
      }
    }
  }
  return out;
}

}  // namespace pf::geom
