#include "gsdiff/tape.hpp"

#include <cmath>
#include <cstring>

#include "gsdiff/kernels.hpp"

namespace gsdiff::nn {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Tensor Tape::make(Shape shape, bool needs_grad) {
  Node n;
  n.shape = shape;
  n.value.assign(shape.numel(), 0.0);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Tensor{static_cast<int>(nodes_.size()) - 1, shape};
}

void Tape::debug_check_finite(Tensor t) const {
#ifndef NDEBUG
  for (double v : nodes_[static_cast<size_t>(t.id)].value)
    if (!std::isfinite(v)) throw Error("non-finite value produced on tape");
#else
  (void)t;
#endif
}

void Tape::add_grad(int id, const std::vector<double>& g) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.needs_grad) return;
  if (n.grad.empty()) n.grad.assign(n.shape.numel(), 0.0);
  for (size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
}

Tensor Tape::input(const double* data, Shape shape, bool requires_grad) {
  Tensor t = make(shape, requires_grad);
  std::memcpy(node(t).value.data(), data, sizeof(double) * shape.numel());
  return t;
}

Tensor Tape::input(const std::vector<double>& data, Shape shape, bool requires_grad) {
  if (data.size() != shape.numel()) throw ShapeMismatch("input data does not match shape");
  return input(data.data(), shape, requires_grad);
}

Tensor Tape::matmul(Tensor a, Tensor b) {
  if (a.shape.cols != b.shape.rows) throw ShapeMismatch("matmul inner dimensions");
  const int m = a.shape.rows, k = a.shape.cols, n = b.shape.cols;
  Tensor out = make({m, n}, node(a).needs_grad || node(b).needs_grad);
  kern::matmul_nn(node(a).value.data(), node(b).value.data(), node(out).value.data(), m, k, n);
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, b, out, m, k, n](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      Node& nb = tp.node(b);
      if (na.needs_grad) {
        if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
        kern::matmul_nt(g.data(), nb.value.data(), na.grad.data(), m, n, k, true);
      }
      if (nb.needs_grad) {
        if (nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
        kern::matmul_tn(na.value.data(), g.data(), nb.grad.data(), k, m, n, true);
      }
    };
  }
  return out;
}

Tensor Tape::matmul_nt(Tensor a, Tensor b) {
  if (a.shape.cols != b.shape.cols) throw ShapeMismatch("matmul_nt inner dimensions");
  const int m = a.shape.rows, k = a.shape.cols, n = b.shape.rows;
  Tensor out = make({m, n}, node(a).needs_grad || node(b).needs_grad);
  kern::matmul_nt(node(a).value.data(), node(b).value.data(), node(out).value.data(), m, k, n);
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, b, out, m, k, n](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      Node& nb = tp.node(b);
      if (na.needs_grad) {
        if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
        kern::matmul_nn(g.data(), nb.value.data(), na.grad.data(), m, n, k, true);
      }
      if (nb.needs_grad) {
        if (nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
        kern::matmul_tn(g.data(), na.value.data(), nb.grad.data(), n, m, k, true);
      }
    };
  }
  return out;
}

Tensor Tape::matmul_sorted(Tensor a, Tensor b) {
  if (a.shape.cols != b.shape.rows) throw ShapeMismatch("matmul_sorted inner dimensions");
  const int m = a.shape.rows, k = a.shape.cols, n = b.shape.cols;
  Tensor out = make({m, n}, node(a).needs_grad || node(b).needs_grad);
  kern::matmul_nn_sorted(node(a).value.data(), node(b).value.data(), node(out).value.data(), m, k,
                         n);
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, b, out, m, k, n](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      Node& nb = tp.node(b);
      if (na.needs_grad) {
        if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
        kern::matmul_nt(g.data(), nb.value.data(), na.grad.data(), m, n, k, true);
      }
      if (nb.needs_grad) {
        if (nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
        kern::matmul_tn(na.value.data(), g.data(), nb.grad.data(), k, m, n, true);
      }
    };
  }
  return out;
}

Tensor Tape::add(Tensor a, Tensor b) {
  const bool broadcast = b.shape.rows == 1 && a.shape.cols == b.shape.cols && a.shape.rows != 1;
  if (!broadcast && !(a.shape == b.shape)) throw ShapeMismatch("add shapes");
  Tensor out = make(a.shape, node(a).needs_grad || node(b).needs_grad);
  const std::vector<double>& av = node(a).value;
  const std::vector<double>& bv = node(b).value;
  std::vector<double>& ov = node(out).value;
  if (broadcast) {
    const int cols = a.shape.cols;
    for (int i = 0; i < a.shape.rows; ++i)
      for (int j = 0; j < cols; ++j)
        ov[static_cast<size_t>(i) * cols + j] = av[static_cast<size_t>(i) * cols + j] + bv[static_cast<size_t>(j)];
  } else {
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  }
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, b, out, broadcast](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      tp.add_grad(a.id, g);
      Node& nb = tp.node(b);
      if (!nb.needs_grad) return;
      if (!broadcast) {
        tp.add_grad(b.id, g);
      } else {
        if (nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
        const int cols = a.shape.cols;
        for (int i = 0; i < a.shape.rows; ++i)
          for (int j = 0; j < cols; ++j)
            nb.grad[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * cols + j];
      }
    };
  }
  return out;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  if (!(a.shape == b.shape)) throw ShapeMismatch("mul shapes");
  Tensor out = make(a.shape, node(a).needs_grad || node(b).needs_grad);
  const std::vector<double>& av = node(a).value;
  const std::vector<double>& bv = node(b).value;
  std::vector<double>& ov = node(out).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, b, out](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      Node& nb = tp.node(b);
      if (na.needs_grad) {
        if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
        for (size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * nb.value[i];
      }
      if (nb.needs_grad) {
        if (nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
        for (size_t i = 0; i < g.size(); ++i) nb.grad[i] += g[i] * na.value[i];
      }
    };
  }
  return out;
}

Tensor Tape::scale(Tensor a, double s) {
  Tensor out = make(a.shape, node(a).needs_grad);
  const std::vector<double>& av = node(a).value;
  std::vector<double>& ov = node(out).value;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = s * av[i];
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out, s](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) na.grad[i] += s * g[i];
    };
  }
  return out;
}

Tensor Tape::softmax(Tensor a) {
  Tensor out = make(a.shape, node(a).needs_grad);
  kern::softmax_rows(node(a).value.data(), node(out).value.data(), a.shape.rows, a.shape.cols);
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      const std::vector<double>& y = tp.node(out).value;
      const int rows = a.shape.rows, cols = a.shape.cols;
      for (int i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * cols;
        double dot = 0.0;
        for (int j = 0; j < cols; ++j) dot += g[off + j] * y[off + j];
        for (int j = 0; j < cols; ++j) na.grad[off + j] += y[off + j] * (g[off + j] - dot);
      }
    };
  }
  return out;
}

Tensor Tape::layernorm(Tensor a, Tensor gamma, Tensor beta, double eps) {
  if (gamma.shape.rows != 1 || gamma.shape.cols != a.shape.cols || !(gamma.shape == beta.shape))
    throw ShapeMismatch("layernorm affine shapes");
  Tensor out =
      make(a.shape, node(a).needs_grad || node(gamma).needs_grad || node(beta).needs_grad);
  const int rows = a.shape.rows, cols = a.shape.cols;
  const std::vector<double>& x = node(a).value;
  const std::vector<double>& gm = node(gamma).value;
  const std::vector<double>& bt = node(beta).value;
  std::vector<double>& y = node(out).value;
  std::vector<double> inv_std(static_cast<size_t>(rows));
  std::vector<double> xhat(x.size());
  for (int i = 0; i < rows; ++i) {
    const size_t off = static_cast<size_t>(i) * cols;
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x[off + j];
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) var += (x[off + j] - mean) * (x[off + j] - mean);
    var /= cols;
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = istd;
    for (int j = 0; j < cols; ++j) {
      xhat[off + j] = (x[off + j] - mean) * istd;
      y[off + j] = xhat[off + j] * gm[static_cast<size_t>(j)] + bt[static_cast<size_t>(j)];
    }
  }
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, gamma, beta, out, rows, cols, inv_std = std::move(inv_std),
                             xhat = std::move(xhat)](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      Node& ng = tp.node(gamma);
      Node& nb = tp.node(beta);
      const std::vector<double>& gm = ng.value;
      if (ng.needs_grad && ng.grad.empty()) ng.grad.assign(ng.shape.numel(), 0.0);
      if (nb.needs_grad && nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
      if (na.needs_grad && na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (int i = 0; i < rows; ++i) {
        const size_t off = static_cast<size_t>(i) * cols;
        if (ng.needs_grad)
          for (int j = 0; j < cols; ++j)
            ng.grad[static_cast<size_t>(j)] += g[off + j] * xhat[off + j];
        if (nb.needs_grad)
          for (int j = 0; j < cols; ++j) nb.grad[static_cast<size_t>(j)] += g[off + j];
        if (na.needs_grad) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (int j = 0; j < cols; ++j) {
            const double dxhat = g[off + j] * gm[static_cast<size_t>(j)];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat[off + j];
          }
          mean_dxhat /= cols;
          mean_dxhat_xhat /= cols;
          for (int j = 0; j < cols; ++j) {
            const double dxhat = g[off + j] * gm[static_cast<size_t>(j)];
            na.grad[off + j] += inv_std[static_cast<size_t>(i)] *
                                (dxhat - mean_dxhat - xhat[off + j] * mean_dxhat_xhat);
          }
        }
      }
    };
  }
  return out;
}

Tensor Tape::gelu(Tensor a) {
  Tensor out = make(a.shape, node(a).needs_grad);
  const std::vector<double>& x = node(a).value;
  std::vector<double>& y = node(out).value;
  for (size_t i = 0; i < y.size(); ++i)
    y[i] = 0.5 * x[i] * (1.0 + std::erf(x[i] * kInvSqrt2));
  debug_check_finite(out);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) {
        const double x = na.value[i];
        const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        na.grad[i] += g[i] * (phi + x * pdf);
      }
    };
  }
  return out;
}

Tensor Tape::abs(Tensor a) {
  Tensor out = make(a.shape, node(a).needs_grad);
  const std::vector<double>& x = node(a).value;
  std::vector<double>& y = node(out).value;
  for (size_t i = 0; i < y.size(); ++i) y[i] = std::abs(x[i]);
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (size_t i = 0; i < g.size(); ++i) {
        const double x = na.value[i];
        na.grad[i] += x > 0.0 ? g[i] : (x < 0.0 ? -g[i] : 0.0);
      }
    };
  }
  return out;
}

Tensor Tape::reduce_sum(Tensor a) {
  Tensor out = make({1, 1}, node(a).needs_grad);
  double acc = 0.0;
  for (double v : node(a).value) acc += v;
  node(out).value[0] = acc;
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (double& v : na.grad) v += g[0];
    };
  }
  return out;
}

Tensor Tape::reshape(Tensor a, Shape s) {
  if (s.numel() != a.shape.numel()) throw ShapeMismatch("reshape element count");
  Tensor out = make(s, node(a).needs_grad);
  node(out).value = node(a).value;
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (!g.empty()) tp.add_grad(a.id, g);
    };
  }
  return out;
}

Tensor Tape::transpose(Tensor a) {
  const int r = a.shape.rows, c = a.shape.cols;
  Tensor out = make({c, r}, node(a).needs_grad);
  const std::vector<double>& x = node(a).value;
  std::vector<double>& y = node(out).value;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      y[static_cast<size_t>(j) * r + i] = x[static_cast<size_t>(i) * c + j];
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out, r, c](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j)
          na.grad[static_cast<size_t>(i) * c + j] += g[static_cast<size_t>(j) * r + i];
    };
  }
  return out;
}

Tensor Tape::gather_rows(Tensor a, std::vector<int> idx) {
  const int c = a.shape.cols;
  for (int i : idx)
    if (i < 0 || i >= a.shape.rows) throw ShapeMismatch("gather index out of range");
  Tensor out = make({static_cast<int>(idx.size()), c}, node(a).needs_grad);
  const std::vector<double>& x = node(a).value;
  std::vector<double>& y = node(out).value;
  for (size_t r = 0; r < idx.size(); ++r)
    std::memcpy(y.data() + r * c, x.data() + static_cast<size_t>(idx[r]) * c,
                sizeof(double) * static_cast<size_t>(c));
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out, idx = std::move(idx), c](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (size_t r = 0; r < idx.size(); ++r)
        for (int j = 0; j < c; ++j)
          na.grad[static_cast<size_t>(idx[r]) * c + j] += g[r * static_cast<size_t>(c) + j];
    };
  }
  return out;
}

Tensor Tape::slice_cols(Tensor a, int c0, int c1) {
  if (c0 < 0 || c1 > a.shape.cols || c0 >= c1) throw ShapeMismatch("slice_cols range");
  const int r = a.shape.rows, w = c1 - c0, c = a.shape.cols;
  Tensor out = make({r, w}, node(a).needs_grad);
  const std::vector<double>& x = node(a).value;
  std::vector<double>& y = node(out).value;
  for (int i = 0; i < r; ++i)
    std::memcpy(y.data() + static_cast<size_t>(i) * w, x.data() + static_cast<size_t>(i) * c + c0,
                sizeof(double) * static_cast<size_t>(w));
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, out, c0, r, w, c](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      Node& na = tp.node(a);
      if (na.grad.empty()) na.grad.assign(na.shape.numel(), 0.0);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j)
          na.grad[static_cast<size_t>(i) * c + c0 + j] += g[static_cast<size_t>(i) * w + j];
    };
  }
  return out;
}

Tensor Tape::concat_rows(Tensor a, Tensor b) {
  if (a.shape.cols != b.shape.cols) throw ShapeMismatch("concat_rows widths");
  const int c = a.shape.cols;
  Tensor out = make({a.shape.rows + b.shape.rows, c}, node(a).needs_grad || node(b).needs_grad);
  std::vector<double>& y = node(out).value;
  std::memcpy(y.data(), node(a).value.data(), sizeof(double) * node(a).value.size());
  std::memcpy(y.data() + node(a).value.size(), node(b).value.data(),
              sizeof(double) * node(b).value.size());
  if (node(out).needs_grad) {
    node(out).backward_fn = [a, b, out, c](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      const size_t na_size = tp.node(a).shape.numel();
      if (tp.node(a).needs_grad) {
        Node& na = tp.node(a);
        if (na.grad.empty()) na.grad.assign(na_size, 0.0);
        for (size_t i = 0; i < na_size; ++i) na.grad[i] += g[i];
      }
      if (tp.node(b).needs_grad) {
        Node& nb = tp.node(b);
        if (nb.grad.empty()) nb.grad.assign(nb.shape.numel(), 0.0);
        for (size_t i = 0; i < nb.grad.size(); ++i) nb.grad[i] += g[na_size + i];
      }
      (void)c;
    };
  }
  return out;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeMismatch("concat_cols needs at least one part");
  const int r = parts[0].shape.rows;
  int total = 0;
  bool needs = false;
  for (const Tensor& p : parts) {
    if (p.shape.rows != r) throw ShapeMismatch("concat_cols row counts");
    total += p.shape.cols;
    needs = needs || node(p).needs_grad;
  }
  Tensor out = make({r, total}, needs);
  std::vector<double>& y = node(out).value;
  int col = 0;
  for (const Tensor& p : parts) {
    const int w = p.shape.cols;
    const std::vector<double>& x = node(p).value;
    for (int i = 0; i < r; ++i)
      std::memcpy(y.data() + static_cast<size_t>(i) * total + col,
                  x.data() + static_cast<size_t>(i) * w, sizeof(double) * static_cast<size_t>(w));
    col += w;
  }
  if (needs) {
    node(out).backward_fn = [parts, out, r, total](Tape& tp) {
      const std::vector<double>& g = tp.node(out).grad;
      if (g.empty()) return;
      int col = 0;
      for (const Tensor& p : parts) {
        const int w = p.shape.cols;
        Node& np = tp.node(p);
        if (np.needs_grad) {
          if (np.grad.empty()) np.grad.assign(np.shape.numel(), 0.0);
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j)
              np.grad[static_cast<size_t>(i) * w + j] +=
                  g[static_cast<size_t>(i) * total + col + j];
        }
        col += w;
      }
    };
  }
  return out;
}

void Tape::backward(Tensor out, const std::vector<double>* seed) {
  Node& target = node(out);
  if (!target.needs_grad) throw Error("backward target does not require grad");
  if (target.grad.empty()) target.grad.assign(target.shape.numel(), 0.0);
  if (seed) {
    if (seed->size() != target.shape.numel()) throw ShapeMismatch("backward seed size");
    for (size_t i = 0; i < seed->size(); ++i) target.grad[i] += (*seed)[i];
  } else {
    for (double& v : target.grad) v += 1.0;
  }
  for (int i = out.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.backward_fn && !n.grad.empty()) n.backward_fn(*this);
  }
}

}  // namespace gsdiff::nn
