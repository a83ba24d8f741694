#pragma once

#include <cmath>
#include <cstddef>

// Shared dense kernels. Every contraction accumulates in ascending index
// order with no reassociation, so any two call sites computing the same
// product produce bit-identical results (the blocked attention relies on
// this to match the all-pairs path exactly).

namespace nbsa {
namespace kernels {

// c[i][j] += sum_t a[i][t]*b[t][j]
inline void nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[i][j] += sum_t a[i][t]*b[j][t]
inline void nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    double* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double acc = crow[j];
      for (int t = 0; t < k; ++t) acc += arow[t] * brow[t];
      crow[j] = acc;
    }
  }
}

// c[t][j] += sum_i a[i][t]*b[i][j]   (a: m×k, b: m×n, c: k×n)
inline void tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<size_t>(i) * k;
    const double* brow = b + static_cast<size_t>(i) * n;
    for (int t = 0; t < k; ++t) {
      const double av = arow[t];
      double* crow = c + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// out = softmax(row) with max subtraction; out may alias row.
inline void softmax_row(const double* row, double* out, int n) {
  double mx = row[0];
  for (int j = 1; j < n; ++j)
    if (row[j] > mx) mx = row[j];
  double s = 0.0;
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(row[j] - mx);
    s += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= s;
}

// dx += p ⊙ (dy − ⟨dy, p⟩) for one row.
inline void softmax_row_backward(const double* p, const double* dy, double* dx, int n) {
  double dot = 0.0;
  for (int j = 0; j < n; ++j) dot += dy[j] * p[j];
  for (int j = 0; j < n; ++j) dx[j] += p[j] * (dy[j] - dot);
}

}  // namespace kernels
}  // namespace nbsa
