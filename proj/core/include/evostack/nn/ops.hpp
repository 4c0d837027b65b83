#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

namespace evostack::nn {

// Row-major dense kernels. Shapes are caller-managed; the loops are laid
// out so the inner dimension vectorizes.

// c[m,n] (+)= a[m,k] * b[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] (+)= a[m,n] * b[k,n]^T  (row-by-row dot products)
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n,
             std::size_t k, bool accumulate = false) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * n;
    T* crow = c + i * k;
    for (std::size_t j = 0; j < k; ++j) {
      const T* brow = b + j * n;
      T acc = accumulate ? crow[j] : T(0);
      for (std::size_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
      crow[j] = acc;
    }
  }
}

// c[k,n] (+)= a[m,k]^T * b[m,n]  (rank-1 accumulation per row of a)
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false) {
  if (!accumulate) std::fill(c, c + k * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    const T* brow = b + i * n;
    for (std::size_t j = 0; j < k; ++j) {
      const T av = arow[j];
      T* crow = c + j * n;
      for (std::size_t p = 0; p < n; ++p) crow[p] += av * brow[p];
    }
  }
}

// y[m,n] = x[m,k] * w[k,n] + bias[n]
template <class T>
void linear_forward(const T* x, const T* w, const T* b, T* y, std::size_t m,
                    std::size_t k, std::size_t n) {
  gemm_nn(x, w, y, m, k, n);
  for (std::size_t i = 0; i < m; ++i) {
    T* row = y + i * n;
    for (std::size_t j = 0; j < n; ++j) row[j] += b[j];
  }
}

// dx[m,k], dw[k,n] (accumulated), db[n] (accumulated). dx may be null.
template <class T>
void linear_backward(const T* x, const T* w, const T* dy, T* dx, T* dw,
                     T* db, std::size_t m, std::size_t k, std::size_t n) {
  if (dx) gemm_nt(dy, w, dx, m, n, k);
  gemm_tn(x, dy, dw, m, k, n, /*accumulate=*/true);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = dy + i * n;
    for (std::size_t j = 0; j < n; ++j) db[j] += row[j];
  }
}

template <class T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2.0)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x * T(std::numbers::sqrt2 / 2.0)));
  const T pdf = std::exp(T(-0.5) * x * x) *
                T(1.0 / std::sqrt(2.0 * std::numbers::pi));
  return cdf + x * pdf;
}

// In-place row softmax over n columns.
template <class T>
void softmax_rows(T* z, std::size_t rows, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    T* row = z + i * n;
    T mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
  }
}

// dz = s .* (ds - sum(ds .* s)) per row; s is the softmax output.
template <class T>
void softmax_backward_rows(const T* s, const T* ds, T* dz, std::size_t rows,
                           std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T* srow = s + i * n;
    const T* drow = ds + i * n;
    T* out = dz + i * n;
    T dot = T(0);
    for (std::size_t j = 0; j < n; ++j) dot += srow[j] * drow[j];
    for (std::size_t j = 0; j < n; ++j)
      out[j] = srow[j] * (drow[j] - dot);
  }
}

struct LayerNormStats {
  std::vector<double> mean;
  std::vector<double> rstd;
};

template <class T>
void layernorm_forward(const T* x, const T* gamma, const T* beta, T* y,
                       std::size_t rows, std::size_t n,
                       LayerNormStats* stats) {
  constexpr double kEps = 1e-5;
  if (stats) {
    stats->mean.resize(rows);
    stats->rstd.resize(rows);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    const T* row = x + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += static_cast<double>(row[j]);
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = static_cast<double>(row[j]) - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + kEps);
    if (stats) {
      stats->mean[i] = mu;
      stats->rstd[i] = rstd;
    }
    T* out = y + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (static_cast<double>(row[j]) - mu) * rstd;
      out[j] = static_cast<T>(xhat) * gamma[j] + beta[j];
    }
  }
}

// dgamma/dbeta accumulate; dx overwrites.
template <class T>
void layernorm_backward(const T* x, const T* gamma, const T* dy,
                        const LayerNormStats& stats, T* dx, T* dgamma,
                        T* dbeta, std::size_t rows, std::size_t n) {
  for (std::size_t i = 0; i < rows; ++i) {
    const T* xrow = x + i * n;
    const T* drow = dy + i * n;
    T* out = dx + i * n;
    const double mu = stats.mean[i];
    const double rstd = stats.rstd[i];

    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (static_cast<double>(xrow[j]) - mu) * rstd;
      const double g = static_cast<double>(drow[j]) *
                       static_cast<double>(gamma[j]);
      sum_g += g;
      sum_gx += g * xhat;
      dgamma[j] += static_cast<T>(static_cast<double>(drow[j]) * xhat);
      dbeta[j] += drow[j];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double xhat = (static_cast<double>(xrow[j]) - mu) * rstd;
      const double g = static_cast<double>(drow[j]) *
                       static_cast<double>(gamma[j]);
      out[j] = static_cast<T>(rstd *
                              (g - inv_n * sum_g - xhat * inv_n * sum_gx));
    }
  }
}

}  // namespace evostack::nn
