#include "himosa/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace himosa {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

void TensorNode::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
}

// ---- Tensor handle ----

static std::shared_ptr<TensorNode> make_leaf(Shape shape,
                                             std::vector<double> values,
                                             bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->requires_grad = requires_grad;
  n->leaf = true;
  return n;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0),
                          requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  int64_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value),
                          requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  if (shape_numel(shape) != static_cast<int64_t>(values.size())) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_values({1}, {value}, requires_grad);
}

static const TensorNode& deref(const std::shared_ptr<TensorNode>& n) {
  if (!n) throw ContractError("use of undefined tensor");
  return *n;
}

const Shape& Tensor::shape() const { return deref(node_).shape; }
int Tensor::rank() const { return static_cast<int>(shape().size()); }

int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || axis >= static_cast<int>(s.size())) {
    throw ShapeError("dim " + std::to_string(axis) + " of rank-" +
                     std::to_string(s.size()) + " tensor");
  }
  return s[axis];
}

int64_t Tensor::numel() const {
  return static_cast<int64_t>(deref(node_).values.size());
}

std::span<const double> Tensor::values() const& {
  const TensorNode& n = deref(node_);
  return {n.values.data(), n.values.size()};
}

std::span<double> Tensor::mutable_values() & {
  deref(node_);
  return {node_->values.data(), node_->values.size()};
}

double Tensor::value_at(int64_t i) const {
  const TensorNode& n = deref(node_);
  if (i < 0 || i >= static_cast<int64_t>(n.values.size())) {
    throw ShapeError("value_at(" + std::to_string(i) + ") out of range");
  }
  return n.values[static_cast<size_t>(i)];
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw ShapeError("scalar_value on tensor of shape " + shape_str(shape()));
  }
  return deref(node_).values[0];
}

bool Tensor::requires_grad() const { return deref(node_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
  deref(node_);
  if (!node_->leaf && on != node_->requires_grad) {
    throw ContractError("requires_grad can only be toggled on leaves");
  }
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return !deref(node_).grad.empty(); }

std::span<const double> Tensor::grad() const& {
  const TensorNode& n = deref(node_);
  if (n.grad.empty()) {
    throw ContractError("grad read before any backward reached this tensor");
  }
  return {n.grad.data(), n.grad.size()};
}

void Tensor::zero_grad() {
  deref(node_);
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// ---- recording ----

namespace {
std::atomic<bool> g_grad_enabled{true};
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled.load(std::memory_order_relaxed)) {
  g_grad_enabled.store(false, std::memory_order_relaxed);
}
NoGradGuard::~NoGradGuard() {
  g_grad_enabled.store(prev_, std::memory_order_relaxed);
}
bool grad_enabled() { return g_grad_enabled.load(std::memory_order_relaxed); }

namespace detail {

void finish_forward(std::vector<double>& values) {
  if (run_precision() == Precision::f32) {
    for (double& v : values) v = static_cast<double>(static_cast<float>(v));
  }
#ifndef NDEBUG
  for (size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ContractError("non-finite forward value at flat index " +
                          std::to_string(i));
    }
  }
#endif
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents,
                   std::function<void(TensorNode&)> backward_fn) {
  finish_forward(values);
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  bool track = false;
  if (grad_enabled()) {
    for (const Tensor& p : parents) {
      if (p.defined() && p.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    n->requires_grad = true;
    n->leaf = false;
    n->parents.reserve(parents.size());
    for (const Tensor& p : parents) n->parents.push_back(p.handle());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor::wrap(std::move(n));
}

void accumulate(TensorNode& parent, const double* delta, int64_t n) {
  if (!parent.requires_grad) return;
  parent.ensure_grad();
  for (int64_t i = 0; i < n; ++i) parent.grad[static_cast<size_t>(i)] += delta[i];
}

}  // namespace detail

// ---- graph / backward ----

Graph Graph::build(const Tensor& root) {
  Graph g;
  if (!root.defined()) return g;
  // Iterative post-order DFS; model graphs are thousands of nodes deep, which
  // would overflow the stack if done recursively.
  std::unordered_set<TensorNode*> visited;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void backward(const Graph& g, const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_str(loss.shape()));
  }
  TensorNode* root = loss.node();
  if (!root->requires_grad) {
    throw ContractError("backward on a tensor with no grad path");
  }
  // Leaf grads accumulate across calls; interior grads are scratch space for
  // this sweep only and start from zero.
  for (TensorNode* n : g.order()) {
    if (!n->leaf && n->requires_grad) {
      n->grad.assign(n->values.size(), 0.0);
    }
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  const auto& order = g.order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->requires_grad && n->backward_fn) n->backward_fn(*n);
  }
}

void backward(const Tensor& loss) { backward(Graph::build(loss), loss); }

// ---- op helpers ----

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [](TensorNode& n) {
                               int64_t c = static_cast<int64_t>(n.values.size());
                               detail::accumulate(*n.parents[0], n.grad.data(), c);
                               detail::accumulate(*n.parents[1], n.grad.data(), c);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        size_t c = n.values.size();
        detail::accumulate(*n.parents[0], n.grad.data(), static_cast<int64_t>(c));
        if (n.parents[1]->requires_grad) {
          std::vector<double> neg(c);
          for (size_t i = 0; i < c; ++i) neg[i] = -n.grad[i];
          detail::accumulate(*n.parents[1], neg.data(), static_cast<int64_t>(c));
        }
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return detail::make_result(
      a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        size_t c = n.values.size();
        TensorNode& pa = *n.parents[0];
        TensorNode& pb = *n.parents[1];
        std::vector<double> d(c);
        if (pa.requires_grad) {
          for (size_t i = 0; i < c; ++i) d[i] = n.grad[i] * pb.values[i];
          detail::accumulate(pa, d.data(), static_cast<int64_t>(c));
        }
        if (pb.requires_grad) {
          for (size_t i = 0; i < c; ++i) d[i] = n.grad[i] * pa.values[i];
          detail::accumulate(pb, d.data(), static_cast<int64_t>(c));
        }
      });
}

Tensor scale(const Tensor& a, double s) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return detail::make_result(
      a.shape(), std::move(out), {a}, [s](TensorNode& n) {
        size_t c = n.values.size();
        std::vector<double> d(c);
        for (size_t i = 0; i < c; ++i) d[i] = n.grad[i] * s;
        detail::accumulate(*n.parents[0], d.data(), static_cast<int64_t>(c));
      });
}

Tensor sigmoid(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    // Split by sign so the exp argument is never positive.
    double x = av[i];
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      double e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return detail::make_result(
      a.shape(), std::move(out), {a}, [](TensorNode& n) {
        size_t c = n.values.size();
        std::vector<double> d(c);
        for (size_t i = 0; i < c; ++i) {
          double y = n.values[i];
          d[i] = n.grad[i] * y * (1.0 - y);
        }
        detail::accumulate(*n.parents[0], d.data(), static_cast<int64_t>(c));
      });
}

Tensor gelu(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    double x = av[i];
    double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    out[i] = 0.5 * x * (1.0 + t);
  }
  return detail::make_result(
      a.shape(), std::move(out), {a}, [](TensorNode& n) {
        size_t c = n.values.size();
        TensorNode& pa = *n.parents[0];
        std::vector<double> d(c);
        for (size_t i = 0; i < c; ++i) {
          double x = pa.values[i];
          double u = kGeluC * (x + kGeluA * x * x * x);
          double t = std::tanh(u);
          double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
          d[i] = n.grad[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
        }
        detail::accumulate(pa, d.data(), static_cast<int64_t>(c));
      });
}

Tensor abs(const Tensor& a) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = std::abs(av[i]);
  return detail::make_result(
      a.shape(), std::move(out), {a}, [](TensorNode& n) {
        size_t c = n.values.size();
        TensorNode& pa = *n.parents[0];
        std::vector<double> d(c);
        for (size_t i = 0; i < c; ++i) {
          double x = pa.values[i];
          d[i] = x > 0.0 ? n.grad[i] : (x < 0.0 ? -n.grad[i] : 0.0);
        }
        detail::accumulate(pa, d.data(), static_cast<int64_t>(c));
      });
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  const auto av = a.values();
  double s = 0.0;
  for (double v : av) s += v;
  return detail::make_result(
      {1}, {s}, {a}, [](TensorNode& n) {
        TensorNode& pa = *n.parents[0];
        std::vector<double> d(pa.values.size(), n.grad[0]);
        detail::accumulate(pa, d.data(), static_cast<int64_t>(d.size()));
      });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  const auto av = a.values();
  double s = 0.0;
  for (double v : av) s += v;
  s /= static_cast<double>(av.size());
  return detail::make_result(
      {1}, {s}, {a}, [](TensorNode& n) {
        TensorNode& pa = *n.parents[0];
        double g = n.grad[0] / static_cast<double>(pa.values.size());
        std::vector<double> d(pa.values.size(), g);
        detail::accumulate(pa, d.data(), static_cast<int64_t>(d.size()));
      });
}

Tensor reduce_max(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("reduce_max of empty tensor");
  const auto av = a.values();
  size_t arg = 0;
  for (size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[arg]) arg = i;  // ties keep the lowest index
  }
  return detail::make_result(
      {1}, {av[arg]}, {a}, [arg](TensorNode& n) {
        TensorNode& pa = *n.parents[0];
        if (!pa.requires_grad) return;
        pa.ensure_grad();
        pa.grad[arg] += n.grad[0];
      });
}

// ---- structural ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul needs rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = av.data() + i * k;
    double* crow = out.data() + i * n;
    for (int64_t p = 0; p < k; ++p) {
      double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return detail::make_result(
      {m, n}, std::move(out), {a, b}, [m, k, n](TensorNode& nd) {
        TensorNode& pa = *nd.parents[0];
        TensorNode& pb = *nd.parents[1];
        if (pa.requires_grad) {
          std::vector<double> da(static_cast<size_t>(m * k), 0.0);
          for (int64_t i = 0; i < m; ++i) {
            const double* grow = nd.grad.data() + i * n;
            double* drow = da.data() + i * k;
            for (int64_t p = 0; p < k; ++p) {
              const double* brow = pb.values.data() + p * n;
              double acc = 0.0;
              for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
              drow[p] += acc;
            }
          }
          detail::accumulate(pa, da.data(), m * k);
        }
        if (pb.requires_grad) {
          std::vector<double> db(static_cast<size_t>(k * n), 0.0);
          for (int64_t i = 0; i < m; ++i) {
            const double* arow = pa.values.data() + i * k;
            const double* grow = nd.grad.data() + i * n;
            for (int64_t p = 0; p < k; ++p) {
              double aip = arow[p];
              if (aip == 0.0) continue;
              double* drow = db.data() + p * n;
              for (int64_t j = 0; j < n; ++j) drow[j] += aip * grow[j];
            }
          }
          detail::accumulate(pb, db.data(), k * n);
        }
      });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("transpose needs rank 2, got " + shape_str(a.shape()));
  }
  const int64_t m = a.dim(0), n = a.dim(1);
  const auto av = a.values();
  std::vector<double> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return detail::make_result(
      {n, m}, std::move(out), {a}, [m, n](TensorNode& nd) {
        TensorNode& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        std::vector<double> d(static_cast<size_t>(m * n));
        for (int64_t j = 0; j < n; ++j)
          for (int64_t i = 0; i < m; ++i) d[i * n + j] = nd.grad[j * m + i];
        detail::accumulate(pa, d.data(), m * n);
      });
}

Tensor softmax_rows(const Tensor& a) {
  if (a.rank() != 2) {
    throw ShapeError("softmax_rows needs rank 2, got " + shape_str(a.shape()));
  }
  const int64_t m = a.dim(0), n = a.dim(1);
  if (n == 0) throw ShapeError("softmax_rows with empty rows");
  const auto av = a.values();
  std::vector<double> out(static_cast<size_t>(m * n));
  for (int64_t i = 0; i < m; ++i) {
    const double* row = av.data() + i * n;
    double* orow = out.data() + i * n;
    double mx = row[0];
    for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int64_t j = 0; j < n; ++j) orow[j] /= denom;
  }
  return detail::make_result(
      {m, n}, std::move(out), {a}, [m, n](TensorNode& nd) {
        TensorNode& pa = *nd.parents[0];
        if (!pa.requires_grad) return;
        std::vector<double> d(static_cast<size_t>(m * n));
        for (int64_t i = 0; i < m; ++i) {
          const double* y = nd.values.data() + i * n;
          const double* gy = nd.grad.data() + i * n;
          double dot = 0.0;
          for (int64_t j = 0; j < n; ++j) dot += gy[j] * y[j];
          double* drow = d.data() + i * n;
          for (int64_t j = 0; j < n; ++j) drow[j] = y[j] * (gy[j] - dot);
        }
        detail::accumulate(pa, d.data(), m * n);
      });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " +
                     shape_str(shape) + " changes element count");
  }
  const auto av = a.values();
  std::vector<double> out(av.begin(), av.end());
  return detail::make_result(
      std::move(shape), std::move(out), {a}, [](TensorNode& nd) {
        detail::accumulate(*nd.parents[0], nd.grad.data(),
                           static_cast<int64_t>(nd.grad.size()));
      });
}

}  // namespace himosa
