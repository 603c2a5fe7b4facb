#include "planeforge/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

namespace pf::kern {

void accumulate_outer(const double* a, const double* b, double* c,
                      std::size_t rows, int m, int n) {
  const std::size_t kM = static_cast<std::size_t>(m);
  const std::size_t kN = static_cast<std::size_t>(n);
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) {
    const double* a0 = a + r * kM;
    const double* a1 = a0 + kM;
    const double* b0 = b + r * kN;
    const double* b1 = b0 + kN;
    for (std::size_t i = 0; i < kM; ++i) {
      double v0 = a0[i], v1 = a1[i];
      double* ci = c + i * kN;
#pragma omp simd
      for (std::size_t j = 0; j < kN; ++j) ci[j] += v0 * b0[j] + v1 * b1[j];
    }
  }
  for (; r < rows; ++r) {
    const double* ar = a + r * kM;
    const double* br = b + r * kN;
    for (std::size_t i = 0; i < kM; ++i) {
      double v = ar[i];
      double* ci = c + i * kN;
#pragma omp simd
      for (std::size_t j = 0; j < kN; ++j) ci[j] += v * br[j];
    }
  }
}

void linear_rows(const double* x, const double* m, const double* bias,
                 double* out, std::size_t rows, int k_dim, int n_dim) {
  const std::size_t kN = static_cast<std::size_t>(n_dim);
  const std::size_t kK = static_cast<std::size_t>(k_dim);
  std::size_t r = 0;
  // Four rows per sweep so each m-row load serves four accumulator rows.
  for (; r + 4 <= rows; r += 4) {
    double* o0 = out + r * kN;
    double* o1 = o0 + kN;
    double* o2 = o1 + kN;
    double* o3 = o2 + kN;
    for (std::size_t n = 0; n < kN; ++n) {
      double b = bias ? bias[n] : 0.0;
      o0[n] = b;
      o1[n] = b;
      o2[n] = b;
      o3[n] = b;
    }
    const double* x0 = x + r * kK;
    const double* x1 = x0 + kK;
    const double* x2 = x1 + kK;
    const double* x3 = x2 + kK;
    for (std::size_t k = 0; k < kK; ++k) {
      double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
      const double* mr = m + k * kN;
#pragma omp simd
      for (std::size_t n = 0; n < kN; ++n) {
        double w = mr[n];
        o0[n] += a0 * w;
        o1[n] += a1 * w;
        o2[n] += a2 * w;
        o3[n] += a3 * w;
      }
    }
  }
  for (; r < rows; ++r) {
    double* o = out + r * kN;
    for (std::size_t n = 0; n < kN; ++n) o[n] = bias ? bias[n] : 0.0;
    const double* xr = x + r * kK;
    for (std::size_t k = 0; k < kK; ++k) {
      double a = xr[k];
      const double* mr = m + k * kN;
#pragma omp simd
      for (std::size_t n = 0; n < kN; ++n) o[n] += a * mr[n];
    }
  }
}

void transpose(const double* src, double* dst, int m, int n) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      dst[static_cast<std::size_t>(j) * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)] =
          src[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
}

namespace {

// fdlibm-style sin/cos kernels on |r| <= pi/4 with Cody-Waite reduction.
constexpr double kTwoOverPi = 6.36619772367581382433e-01;
constexpr double kPiO2Hi = 1.57079632673412561417e+00;
constexpr double kPiO2Mid = 6.07710050650619224932e-11;
constexpr double kPiO2Lo = 2.02226624879595063154e-21;

constexpr double S1 = -1.66666666666666324348e-01;
constexpr double S2 = 8.33333333332248946124e-03;
constexpr double S3 = -1.98412698298579493134e-04;
constexpr double S4 = 2.75573137070700676789e-06;
constexpr double S5 = -2.50507602534068634195e-08;
constexpr double S6 = 1.58969099521155010221e-10;

constexpr double C1 = 4.16666666666666019037e-02;
constexpr double C2 = -1.38888888888741095749e-03;
constexpr double C3 = 2.48015872894767294178e-05;
constexpr double C4 = -2.75573143513906633035e-07;
constexpr double C5 = 2.08757232129817482790e-09;
constexpr double C6 = -1.13596475577881948265e-11;

inline double sin_kernel(double r) {
  double z = r * r;
  return r + r * z * (S1 + z * (S2 + z * (S3 + z * (S4 + z * (S5 + z * S6)))));
}

inline double cos_kernel(double r) {
  double z = r * r;
  return 1.0 - 0.5 * z +
         z * z * (C1 + z * (C2 + z * (C3 + z * (C4 + z * (C5 + z * C6)))));
}

}  // namespace

void vsin(const double* x, double* s, std::size_t n, double omega) {
  const double* __restrict xp = x;
  double* __restrict sp = s;
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    double t = omega * xp[i];
    double kd = std::floor(t * kTwoOverPi + 0.5);
    double r = t - kd * kPiO2Hi;
    r -= kd * kPiO2Mid;
    r -= kd * kPiO2Lo;
    // Branch-free quadrant selection: sel1 = k mod 2, sel2 = (k mod 4) >= 2.
    double h = 0.5 * kd;
    double sel1 = 2.0 * (h - std::floor(h));
    double qt = 0.25 * kd;
    double sel2 = std::floor(2.0 * (qt - std::floor(qt)));
    double sign = 1.0 - 2.0 * sel2;
    double sr = sin_kernel(r);
    double cr = cos_kernel(r);
    sp[i] = sign * (sr + sel1 * (cr - sr));
  }
}

void vsincos(const double* x, double* s, double* c, std::size_t n,
             double omega) {
  const double* __restrict xp = x;
  double* __restrict sp = s;
  double* __restrict cp = c;
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) {
    double t = omega * xp[i];
    double kd = std::floor(t * kTwoOverPi + 0.5);
    double r = t - kd * kPiO2Hi;
    r -= kd * kPiO2Mid;
    r -= kd * kPiO2Lo;
    double h = 0.5 * kd;
    double sel1 = 2.0 * (h - std::floor(h));
    double qt = 0.25 * kd;
    double sel2 = std::floor(2.0 * (qt - std::floor(qt)));
    double sign = 1.0 - 2.0 * sel2;
    double sr = sin_kernel(r);
    double cr = cos_kernel(r);
    sp[i] = sign * (sr + sel1 * (cr - sr));
    cp[i] = omega * sign * (cr - sel1 * (cr + sr));
  }
}

void parallel_chunks(std::size_t num_chunks, int workers,
                     const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || num_chunks <= 1) {
    for (std::size_t i = 0; i < num_chunks; ++i) fn(i);
    return;
  }
  std::size_t nthreads = std::min<std::size_t>(workers, num_chunks);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < num_chunks; i += nthreads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace pf::kern
