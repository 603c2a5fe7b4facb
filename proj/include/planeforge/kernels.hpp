#pragma once

#include <cstddef>
#include <functional>

namespace pf::kern {

// c(m x n) += sum_r a[r][m_idx] * b[r][n_idx]: the weight-gradient
// accumulation A^T . B with the m x n accumulator kept hot. Deterministic
// for a given row count.
void accumulate_outer(const double* a, const double* b, double* c,
                      std::size_t rows, int m, int n);

// out[r][n] = bias[n] + sum_k x[r][k] * m[k][n], for r in [0, rows).
// bias may be null. Each output element is accumulated sequentially over k,
// so results are bit-identical for any batch split of the rows.
void linear_rows(const double* x, const double* m, const double* bias,
                 double* out, std::size_t rows, int k_dim, int n_dim);

// dst(n x m) = src(m x n) transposed, row-major.
void transpose(const double* src, double* dst, int m, int n);

// s[i] = sin(omega * x[i]). Polynomial kernel, deterministic and
// auto-vectorizable; absolute error below 1e-13 for |omega * x| <= 1e5.
void vsin(const double* x, double* s, std::size_t n, double omega);

// s[i] = sin(omega * x[i]), c[i] = omega * cos(omega * x[i]) (the activation
// and its derivative in one pass).
void vsincos(const double* x, double* s, double* c, std::size_t n,
             double omega);

// Runs fn(chunk_index) for chunk_index in [0, num_chunks) on up to `workers`
// threads. Chunk boundaries are the caller's; results must be combined in
// chunk order by the caller for bit-deterministic reductions.
void parallel_chunks(std::size_t num_chunks, int workers,
                     const std::function<void(std::size_t)>& fn);

}  // namespace pf::kern
