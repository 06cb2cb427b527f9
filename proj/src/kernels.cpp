#include "gsdiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <vector>

namespace gsdiff::nn::kern {
namespace {

inline void zero_or_keep(double* row, int n, bool accumulate) {
  if (!accumulate) std::memset(row, 0, sizeof(double) * static_cast<size_t>(n));
}

void nn_rows(const double* a, const double* b, double* c, int k, int n, bool accumulate, int i0,
             int i1) {
  for (int i = i0; i < i1; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    zero_or_keep(crow, n, accumulate);
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void nt_rows(const double* a, const double* b, double* c, int k, int n, bool accumulate, int i0,
             int i1) {
  for (int i = i0; i < i1; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    const double* arow = a + static_cast<size_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<size_t>(j) * k;
      double acc = 0.0;
      for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void tn_rows(const double* a, const double* b, double* c, int k, int n, bool accumulate, int m,
             int i0, int i1) {
  for (int i = i0; i < i1; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    zero_or_keep(crow, n, accumulate);
    for (int r = 0; r < k; ++r) {
      const double av = a[static_cast<size_t>(r) * m + i];
      const double* brow = b + static_cast<size_t>(r) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void sorted_rows(const double* a, const double* b, double* c, int k, int n, bool accumulate,
                 int i0, int i1) {
  std::vector<int> order(static_cast<size_t>(k));
  for (int i = i0; i < i1; ++i) {
    double* crow = c + static_cast<size_t>(i) * n;
    zero_or_keep(crow, n, accumulate);
    const double* arow = a + static_cast<size_t>(i) * k;
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [arow](int x, int y) { return arow[x] > arow[y]; });
    for (int idx = 0; idx < k; ++idx) {
      const int kk = order[static_cast<size_t>(idx)];
      const double av = arow[kk];
      const double* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void softmax_row_range(const double* x, double* y, int cols, std::vector<double>& scratch, int i0,
                       int i1) {
  for (int i = i0; i < i1; ++i) {
    const double* xrow = x + static_cast<size_t>(i) * cols;
    double* yrow = y + static_cast<size_t>(i) * cols;
    double mx = xrow[0];
    for (int j = 1; j < cols; ++j) mx = std::max(mx, xrow[j]);
    for (int j = 0; j < cols; ++j) yrow[j] = std::exp(xrow[j] - mx);
    scratch.assign(yrow, yrow + cols);
    std::sort(scratch.begin(), scratch.end(), std::greater<double>());
    double z = 0.0;
    for (double v : scratch) z += v;
    const double inv = 1.0 / z;
    for (int j = 0; j < cols; ++j) yrow[j] *= inv;
  }
}

}  // namespace

void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) nn_rows(a, b, c, k, n, accumulate, i, i + 1);
}

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
  nn_rows(a, b, c, k, n, accumulate, 0, m);
}

void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) nt_rows(a, b, c, k, n, accumulate, i, i + 1);
}

void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
  nt_rows(a, b, c, k, n, accumulate, 0, m);
}

void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) tn_rows(a, b, c, k, n, accumulate, m, i, i + 1);
}

void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
  tn_rows(a, b, c, k, n, accumulate, m, 0, m);
}

void matmul_nn_sorted(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate) {
#pragma omp parallel for schedule(static)
  for (int i = 0; i < m; ++i) sorted_rows(a, b, c, k, n, accumulate, i, i + 1);
}

void matmul_nn_sorted_serial(const double* a, const double* b, double* c, int m, int k, int n,
                             bool accumulate) {
  sorted_rows(a, b, c, k, n, accumulate, 0, m);
}

void softmax_rows(const double* x, double* y, int rows, int cols) {
#pragma omp parallel
  {
    std::vector<double> scratch;
#pragma omp for schedule(static)
    for (int i = 0; i < rows; ++i) softmax_row_range(x, y, cols, scratch, i, i + 1);
  }
}

void softmax_rows_serial(const double* x, double* y, int rows, int cols) {
  std::vector<double> scratch;
  softmax_row_range(x, y, cols, scratch, 0, rows);
}

}  // namespace gsdiff::nn::kern
