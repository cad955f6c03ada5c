#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "himosa/common.hpp"

namespace himosa {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grad buffers.
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad();
};

// Dense real tensor with optional reverse-mode gradient tracking. Copying a
// Tensor copies the handle, not the buffer. Values are treated as immutable
// once the tensor has been consumed by an op; leaves may be edited in place
// before that (optimizer updates, finite-difference probes).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  int64_t dim(int axis) const;
  int64_t numel() const;

  // Spans borrow storage owned by this handle; calling them on a temporary
  // would dangle, so rvalue access is disabled.
  std::span<const double> values() const&;
  std::span<const double> values() const&& = delete;
  // In-place edits are only legal on leaves that no recorded op has consumed.
  std::span<double> mutable_values() &;
  std::span<double> mutable_values() && = delete;
  double value_at(int64_t i) const;
  double scalar_value() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const&;
  std::span<const double> grad() const&& = delete;
  void zero_grad();

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& handle() const { return node_; }

  static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;
};

// Graph recording switch. While a guard is alive, op results are detached
// constants; forward values are unaffected. Guards are created on the main
// thread only — worker threads inherit the current setting.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};
bool grad_enabled();

namespace detail {
// Builds an op result. Records parents and the backward closure only when
// recording is on and some parent requires grad; otherwise the result is a
// detached constant.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(TensorNode&)> backward_fn);
// Applies the run precision mode to freshly computed forward values.
void finish_forward(std::vector<double>& values);
void accumulate(TensorNode& parent, const double* delta, int64_t n);
}  // namespace detail

// Reverse topological schedule over the op DAG reachable from a root: every
// node's inputs precede it in order().
class Graph {
 public:
  static Graph build(const Tensor& root);
  const std::vector<TensorNode*>& order() const { return order_; }

 private:
  std::vector<TensorNode*> order_;
};

// Reverse-mode sweep from a scalar loss. Accumulates d(loss)/d(tensor) into
// the grad of every requires_grad tensor reachable from loss; repeated calls
// add into existing grads until they are zeroed.
void backward(const Tensor& loss);
void backward(const Graph& g, const Tensor& loss);

// ---- elementwise / reduction op set ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor abs(const Tensor& a);   // subgradient 0 at ties
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reduce_max(const Tensor& a);  // ties: lowest flat index takes the subgradient

// ---- structural ops ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

}  // namespace himosa
