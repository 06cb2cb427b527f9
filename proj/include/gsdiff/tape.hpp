#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gsdiff/errors.hpp"

namespace gsdiff::nn {

struct Shape {
  int rows = 0, cols = 0;
  size_t numel() const { return static_cast<size_t>(rows) * cols; }
  bool operator==(const Shape&) const = default;
};

// Handle into the active tape.
struct Tensor {
  int id = -1;
  Shape shape;
};

// Eager reverse-mode tape over row-major double matrices. Ops record a
// backward closure; backward() walks the record once in reverse, which is a
// valid topological order because ops are appended after their inputs.
class Tape {
 public:
  // Leaf tensors. requires_grad marks weights/inputs whose gradient is wanted.
  Tensor input(const double* data, Shape shape, bool requires_grad);
  Tensor input(const std::vector<double>& data, Shape shape, bool requires_grad);

  Tensor matmul(Tensor a, Tensor b);             // (m x k) * (k x n)
  Tensor matmul_nt(Tensor a, Tensor b);          // (m x k) * (n x k)^T
  // Attention-weighted sum: matmul with a value-canonical contraction order
  // so the result is invariant to permuting the contracted axis.
  Tensor matmul_sorted(Tensor a, Tensor b);
  Tensor add(Tensor a, Tensor b);                // same shape, or b is 1 x cols (row broadcast)
  Tensor mul(Tensor a, Tensor b);                // elementwise
  Tensor scale(Tensor a, double s);
  Tensor softmax(Tensor a);                      // along the last axis
  Tensor layernorm(Tensor a, Tensor gamma, Tensor beta, double eps = 1e-5);
  Tensor gelu(Tensor a);
  Tensor abs(Tensor a);
  Tensor reduce_sum(Tensor a);                   // -> 1 x 1
  Tensor reshape(Tensor a, Shape s);
  Tensor transpose(Tensor a);
  Tensor gather_rows(Tensor a, std::vector<int> idx);
  Tensor slice_cols(Tensor a, int c0, int c1);
  Tensor concat_rows(Tensor a, Tensor b);
  Tensor concat_cols(const std::vector<Tensor>& parts);

  const std::vector<double>& value(Tensor t) const { return nodes_[check(t)].value; }
  // Gradient of the last backward() target with respect to t.
  const std::vector<double>& grad(Tensor t) const { return nodes_[check(t)].grad; }

  // Seeds out with `seed` (or all-ones when null, so a 1x1 loss gets 1) and
  // accumulates gradients into every requires_grad ancestor.
  void backward(Tensor out, const std::vector<double>* seed = nullptr);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::function<void(Tape&)> backward_fn;
    bool needs_grad = false;  // this node or an ancestor requires grad
  };

  size_t check(Tensor t) const {
    if (t.id < 0 || static_cast<size_t>(t.id) >= nodes_.size())
      throw Error("tensor does not belong to this tape");
    return static_cast<size_t>(t.id);
  }

  Tensor make(Shape shape, bool needs_grad);
  Node& node(Tensor t) { return nodes_[check(t)]; }
  void add_grad(int id, const std::vector<double>& g);
  void debug_check_finite(Tensor t) const;

  std::vector<Node> nodes_;
};

}  // namespace gsdiff::nn
