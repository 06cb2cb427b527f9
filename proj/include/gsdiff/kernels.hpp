#pragma once

#include <cstdint>

namespace gsdiff::nn::kern {

// Dense kernels behind the autodiff engine. Every parallel kernel partitions
// work by output row and keeps the per-element accumulation order fixed, so
// results are bit-identical for any thread count. The *_serial variants run
// the same row workers without OpenMP and are kept as references for the
// equality tests and the benchmark target.
//
// Shapes follow the output: C is m x n, contraction length k.
//   nn: A (m x k) * B (k x n)
//   nt: A (m x k) * B (n x k)^T
//   tn: A (k x m)^T * B (k x n)
// With accumulate = true the kernels add into C instead of overwriting.
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n,
               bool accumulate = false);

// Value-canonical variant of matmul_nn: per output row, the contraction is
// summed in descending order of the A entries rather than index order. Used
// for the attention-weighted sum over tokens, where index order depends on
// the (arbitrary) ordering of the input set and value order does not; this
// is what makes the denoiser bitwise permutation-equivariant.
void matmul_nn_sorted(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate = false);

void matmul_nn_serial(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate = false);
void matmul_nt_serial(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate = false);
void matmul_tn_serial(const double* a, const double* b, double* c, int m, int k, int n,
                      bool accumulate = false);
void matmul_nn_sorted_serial(const double* a, const double* b, double* c, int m, int k, int n,
                             bool accumulate = false);

// Row-wise softmax with a max-shift; the normalizer is summed in descending
// value order (canonical under row-content permutation, see above).
void softmax_rows(const double* x, double* y, int rows, int cols);
void softmax_rows_serial(const double* x, double* y, int rows, int cols);

}  // namespace gsdiff::nn::kern
