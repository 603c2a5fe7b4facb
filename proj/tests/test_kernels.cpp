#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "planeforge/kernels.hpp"
#include "planeforge/rng.hpp"

namespace kern = pf::kern;

TEST_CASE("vsin matches libm sine") {
  pf::RngStream rng(11);
  std::vector<double> x(20000), s(20000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-40.0, 40.0);
  x[0] = 0.0;
  x[1] = 1e4;
  x[2] = -1e4;
  for (double omega : {1.0, 30.0}) {
    kern::vsin(x.data(), s.data(), x.size(), omega);
    for (std::size_t i = 0; i < x.size(); ++i)
      CHECK(std::fabs(s[i] - std::sin(omega * x[i])) < 1e-12);
  }
}

TEST_CASE("vsincos derivative factor") {
  pf::RngStream rng(12);
  std::vector<double> x(5000), s(5000), c(5000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(-60.0, 60.0);
  kern::vsincos(x.data(), s.data(), c.data(), x.size(), 30.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::fabs(s[i] - std::sin(30.0 * x[i])) < 1e-12);
    CHECK(std::fabs(c[i] - 30.0 * std::cos(30.0 * x[i])) < 3e-11);
  }
}

TEST_CASE("linear_rows is batch-split invariant") {
  pf::RngStream rng(13);
  const int k = 37, n = 29;
  const std::size_t rows = 23;
  std::vector<double> x(rows * k), m(static_cast<std::size_t>(k) * n), bias(n);
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : m) v = rng.uniform(-1, 1);
  for (auto& v : bias) v = rng.uniform(-1, 1);

  std::vector<double> full(rows * n);
  kern::linear_rows(x.data(), m.data(), bias.data(), full.data(), rows, k, n);

  // One row at a time must agree bitwise.
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> one(n);
    kern::linear_rows(x.data() + r * k, m.data(), bias.data(), one.data(), 1, k, n);
    for (int j = 0; j < n; ++j) CHECK(one[static_cast<std::size_t>(j)] == full[r * n + static_cast<std::size_t>(j)]);
  }

  // Against a plain reference.
  for (std::size_t r = 0; r < rows; ++r)
    for (int j = 0; j < n; ++j) {
      double acc = bias[static_cast<std::size_t>(j)];
      for (int q = 0; q < k; ++q) acc += x[r * k + static_cast<std::size_t>(q)] * m[static_cast<std::size_t>(q) * n + static_cast<std::size_t>(j)];
      CHECK(full[r * n + static_cast<std::size_t>(j)] == doctest::Approx(acc).epsilon(1e-13));
    }
}

TEST_CASE("accumulate_outer matches the reference outer-product sum") {
  pf::RngStream rng(14);
  const int m = 17, n = 11;
  const std::size_t rows = 29;
  std::vector<double> a(rows * m), b(rows * n), c(static_cast<std::size_t>(m) * n, 0.5);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  kern::accumulate_outer(a.data(), b.data(), c.data(), rows, m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.5;
      for (std::size_t r = 0; r < rows; ++r)
        acc += a[r * m + static_cast<std::size_t>(i)] * b[r * n + static_cast<std::size_t>(j)];
      CHECK(c[static_cast<std::size_t>(i * n + j)] == doctest::Approx(acc).epsilon(1e-12));
    }
}

TEST_CASE("parallel_chunks covers every chunk once") {
  std::vector<int> hits(57, 0);
  kern::parallel_chunks(57, 4, [&](std::size_t i) { hits[i]++; });
  for (int h : hits) CHECK(h == 1);
}
