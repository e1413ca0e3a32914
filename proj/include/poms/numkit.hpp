#pragma once

// Small dense-linear-algebra and statistics kernel: row-major matrices,
// jittered Cholesky, multivariate-normal sampling, least-squares slope,
// Mann-Whitney U (exact and normal-approximation), and covariance PCA.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "poms/errors.hpp"
#include "poms/rng.hpp"

namespace poms {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw DimensionMismatch("matmul: inner dimensions differ");
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ai = a.row(i);
    double* ci = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

// A^T * A, the Gram matrix of A's columns.
inline Matrix gram(const Matrix& a) {
  Matrix g(a.cols, a.cols);
  for (std::size_t r = 0; r < a.rows; ++r) {
    const double* ar = a.row(r);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double v = ar[i];
      if (v == 0.0) continue;
      double* gi = g.row(i);
      for (std::size_t j = 0; j < a.cols; ++j) gi[j] += v * ar[j];
    }
  }
  return g;
}

inline double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::abs(v));
  return m;
}

inline double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Cholesky with jitter escalation.

struct CholeskyResult {
  Matrix lower;
  double jitter = 0.0;  // the diagonal boost that made the factorization go through
};

namespace detail {

// Plain Cholesky-Crout on a + delta*I; returns false on a non-positive pivot.
inline bool try_cholesky(const Matrix& a, double delta, Matrix& out) {
  const std::size_t n = a.rows;
  out = Matrix(n, n);
  // Pivots must be meaningfully positive, not merely nonzero, so that exactly
  // singular inputs fail at delta = 0 and get repaired by the jitter ladder.
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)) + delta);
  const double pivot_floor = 1e-12 * std::max(scale, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j) + delta;
    for (std::size_t k = 0; k < j; ++k) d -= out(j, k) * out(j, k);
    if (!(d > pivot_floor)) return false;  // also rejects NaN
    const double ljj = std::sqrt(d);
    out(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j) + (i == j ? delta : 0.0);
      for (std::size_t k = 0; k < j; ++k) s -= out(i, k) * out(j, k);
      out(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace detail

// Factorizes a symmetric positive-(semi)definite matrix as L L^T. When the
// plain factorization fails, retries with a + delta*I for delta walking the
// ladder jitter_start, 10*jitter_start, ... up to 1e-3.
inline CholeskyResult cholesky(const Matrix& a, double jitter_start = 1e-9) {
  if (a.rows != a.cols) throw DimensionMismatch("cholesky: matrix not square");
  const double sym_tol = 1e-10 * std::max(1.0, max_abs(a));
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = i + 1; j < a.cols; ++j)
      if (!(std::abs(a(i, j) - a(j, i)) <= sym_tol))
        throw NotSymmetric("cholesky: input not symmetric within tolerance");

  CholeskyResult res;
  if (detail::try_cholesky(a, 0.0, res.lower)) {
    res.jitter = 0.0;
    return res;
  }
  for (double delta = jitter_start; delta <= 1e-3 * (1.0 + 1e-12); delta *= 10.0) {
    if (detail::try_cholesky(a, delta, res.lower)) {
      res.jitter = delta;
      return res;
    }
  }
  throw DecompositionFailed("cholesky: not positive definite even with jitter 1e-3");
}

// Draws mean + L*u with u ~ N(0, I); L is lower-triangular from cholesky().
inline std::vector<double> sample_mvn(std::span<const double> mean, const Matrix& chol_lower,
                                      Rng& rng) {
  const std::size_t n = mean.size();
  if (chol_lower.rows != n || chol_lower.cols != n)
    throw DimensionMismatch("sample_mvn: mean and factor dimensions differ");
  std::vector<double> u(n);
  for (auto& v : u) v = rng.normal();
  std::vector<double> x(mean.begin(), mean.end());
  for (std::size_t i = 0; i < n; ++i) {
    const double* li = chol_lower.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j <= i; ++j) acc += li[j] * u[j];
    x[i] += acc;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Least-squares slope of y against x = 0, 1, ..., n-1.

inline double fit_line_slope(std::span<const double> y) {
  const std::size_t n = y.size();
  if (n < 2) throw TooFewPoints("fit_line_slope: need at least two points");
  const double xbar = static_cast<double>(n - 1) / 2.0;
  double ybar = 0.0;
  for (double v : y) ybar += v;
  ybar /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = static_cast<double>(i) - xbar;
    sxy += dx * (y[i] - ybar);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// ---------------------------------------------------------------------------
// Mann-Whitney U rank test.

enum class Alternative { greater, two_sided };
enum class RankMethod { exact, normal_approximation };

struct RankTestResult {
  double u_statistic = 0.0;  // U of the first sample
  double p_value = 1.0;
  RankMethod method = RankMethod::exact;
};

namespace detail {

// Midranks (1-based, ties averaged) of the pooled sample; also returns the
// tie-group sizes needed by the normal approximation.
inline void pooled_midranks(std::span<const double> a, std::span<const double> b,
                            std::vector<double>& ranks, std::vector<std::size_t>& tie_sizes) {
  const std::size_t n = a.size() + b.size();
  std::vector<double> pooled;
  pooled.reserve(n);
  pooled.insert(pooled.end(), a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  ranks.assign(n, 0.0);
  tie_sizes.clear();
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    tie_sizes.push_back(j - i + 1);
    i = j + 1;
  }
}

// Exact permutation distribution of U over all C(n, n1) assignments of the
// pooled midranks to the first sample.
inline double exact_p(const std::vector<double>& ranks, std::size_t n1, double u_obs,
                      Alternative alt) {
  const std::size_t n = ranks.size();
  const double offset = static_cast<double>(n1 * (n1 + 1)) / 2.0;
  const double mu = static_cast<double>(n1 * (n - n1)) / 2.0;
  std::vector<std::size_t> comb(n1);
  std::iota(comb.begin(), comb.end(), std::size_t{0});
  std::size_t total = 0, hits = 0;
  const double eps = 1e-9;  // midranks are halves; guards float comparison
  while (true) {
    double rank_sum = 0.0;
    for (std::size_t idx : comb) rank_sum += ranks[idx];
    const double u = rank_sum - offset;
    const bool hit = alt == Alternative::greater
                         ? u >= u_obs - eps
                         : std::abs(u - mu) >= std::abs(u_obs - mu) - eps;
    hits += hit ? 1u : 0u;
    ++total;
    // next combination in lexicographic order
    std::size_t k = n1;
    while (k > 0 && comb[k - 1] == n - n1 + k - 1) --k;
    if (k == 0) break;
    ++comb[k - 1];
    for (std::size_t j = k; j < n1; ++j) comb[j] = comb[j - 1] + 1;
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace detail

// Tests H1 "a tends to exceed b" (greater) or inequality in either direction
// (two_sided). Uses the exact permutation distribution whenever
// n1 + n2 <= 12, and the tie-corrected normal approximation with a 0.5
// continuity correction otherwise. u_statistic is always U of `a`.
inline RankTestResult mann_whitney_u(std::span<const double> a, std::span<const double> b,
                                     Alternative alt) {
  if (a.empty() || b.empty()) throw EmptySample("mann_whitney_u: empty sample");
  const std::size_t n1 = a.size(), n2 = b.size(), n = n1 + n2;
  std::vector<double> ranks;
  std::vector<std::size_t> ties;
  detail::pooled_midranks(a, b, ranks, ties);
  double rank_sum_a = 0.0;
  for (std::size_t i = 0; i < n1; ++i) rank_sum_a += ranks[i];
  const double u_a = rank_sum_a - static_cast<double>(n1 * (n1 + 1)) / 2.0;

  RankTestResult res;
  res.u_statistic = u_a;
  if (n <= 12) {
    res.method = RankMethod::exact;
    res.p_value = detail::exact_p(ranks, n1, u_a, alt);
    return res;
  }

  res.method = RankMethod::normal_approximation;
  const double mu = static_cast<double>(n1 * n2) / 2.0;
  double tie_term = 0.0;
  for (std::size_t t : ties) {
    const double td = static_cast<double>(t);
    tie_term += td * td * td - td;
  }
  const double nd = static_cast<double>(n);
  const double var = static_cast<double>(n1 * n2) / 12.0 *
                     ((nd + 1.0) - tie_term / (nd * (nd - 1.0)));
  if (var <= 0.0) {  // every pooled value tied: no evidence either way
    res.p_value = 1.0;
    return res;
  }
  const double sd = std::sqrt(var);
  if (alt == Alternative::greater) {
    const double z = (u_a - mu - 0.5) / sd;
    res.p_value = 0.5 * std::erfc(z / std::sqrt(2.0));
  } else {
    const double z = std::max(0.0, std::abs(u_a - mu) - 0.5) / sd;
    res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  return res;
}

// ---------------------------------------------------------------------------
// PCA via eigendecomposition of the sample covariance.

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues
// (descending) and the corresponding orthonormal eigenvectors as columns.
inline void jacobi_eigen_symmetric(Matrix a, std::vector<double>& values, Matrix& vectors) {
  const std::size_t n = a.rows;
  vectors = Matrix::identity(n);
  const double tol = 1e-14 * std::max(1.0, frobenius_norm(a));
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= tol) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= tol / static_cast<double>(n)) continue;
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {  // rotate rows/cols p and q
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vectors(k, p), vkq = vectors(k, q);
          vectors(k, p) = c * vkp - s * vkq;
          vectors(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  values.resize(n);
  for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
  // sort eigenpairs by descending eigenvalue
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] > values[j]; });
  std::vector<double> sorted_vals(n);
  Matrix sorted_vecs(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    sorted_vals[j] = values[order[j]];
    for (std::size_t i = 0; i < n; ++i) sorted_vecs(i, j) = vectors(i, order[j]);
  }
  values = std::move(sorted_vals);
  vectors = std::move(sorted_vecs);
}

}  // namespace detail

struct PcaResult {
  std::vector<double> mean;          // length P
  Matrix components;                 // P x M, orthonormal columns
  std::vector<double> explained_variance;  // length M, descending, >= 0
};

// Fits an M-component PCA to the rows of `data` (n x P).
inline PcaResult pca_fit(const Matrix& data, std::size_t m) {
  const std::size_t n = data.rows, p = data.cols;
  if (n < 2) throw InsufficientData("pca_fit: need at least two points");
  if (m < 1 || m > std::min(n, p))
    throw InsufficientData("pca_fit: component count out of range");

  PcaResult res;
  res.mean.assign(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) res.mean[j] += data(i, j);
  for (auto& v : res.mean) v /= static_cast<double>(n);

  Matrix centered(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < p; ++j) centered(i, j) = data(i, j) - res.mean[j];

  Matrix cov = gram(centered);
  for (auto& v : cov.data) v /= static_cast<double>(n - 1);

  std::vector<double> values;
  Matrix vectors;
  detail::jacobi_eigen_symmetric(std::move(cov), values, vectors);

  res.components = Matrix(p, m);
  res.explained_variance.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    // deterministic sign: the entry of largest magnitude is positive
    std::size_t arg = 0;
    for (std::size_t i = 1; i < p; ++i)
      if (std::abs(vectors(i, j)) > std::abs(vectors(arg, j))) arg = i;
    const double sign = vectors(arg, j) < 0.0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < p; ++i) res.components(i, j) = sign * vectors(i, j);
    res.explained_variance[j] = std::max(0.0, values[j]);
  }
  return res;
}

}  // namespace poms
