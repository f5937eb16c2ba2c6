#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A Var is a handle to a node in a dynamically recorded graph. Operations on
// Vars that depend on at least one gradient-requiring input record a backward
// closure; everything else is evaluated eagerly without bookkeeping, so the
// same functions serve both training and inference.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace radur {

/// Thrown on incompatible tensor shapes anywhere in the library.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when a computation produces or receives non-finite values.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> values);
  static Var constant(Shape shape, double fill = 0.0);
  static Var parameter(Shape shape, std::vector<double> values);
  static Var scalar(double v) { return constant({1}, std::vector<double>{v}); }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  double item() const;
  double operator[](std::size_t i) const { return node_->value[i]; }

  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }
  /// Returns a constant copy with no history.
  Var detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// While alive, new operations record no history on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds a node from an eagerly computed value. `backward_fn` receives the
/// new node and must accumulate into its inputs' gradients; it is dropped
/// when no input requires a gradient.
Var make_op(Shape shape, std::vector<double> value, std::vector<Var> inputs,
            std::function<void(Node&)> backward_fn);

/// Accumulates d(loss)/d(node) into every reachable gradient-requiring node.
/// `loss` must hold exactly one element.
void backward(const Var& loss);

// Elementwise arithmetic (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

Var sigmoid(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);

/// Softmax over the last axis.
Var softmax(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean over the last axis; the axis is removed.
Var mean_last(const Var& a);
/// Mean over the first axis of a rank-2 tensor: [m, n] -> [n].
Var mean_rows(const Var& a);

/// [m, k] x [k, n] -> [m, n].
Var matmul(const Var& a, const Var& b);
/// [m, k] x [k] -> [m]. Plain loops: equal rows give bitwise equal results.
Var matvec(const Var& a, const Var& v);
/// x[..., in] * w[in, out] (+ b[out]).
Var linear(const Var& x, const Var& w, const Var& b = Var());
/// Adds b[n] to every length-n slice along the last axis.
Var add_bias_last(const Var& x, const Var& b);
/// x[..., n] * s[n] elementwise along the last axis.
Var mul_bias_last(const Var& x, const Var& s);
/// x[N, T, C] * e[N, C]: every frame of batch element n scaled by e[n].
Var mul_broadcast_frames(const Var& x, const Var& e);

Var reshape(const Var& a, Shape shape);
/// Swaps the two last axes.
Var transpose_last2(const Var& a);
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);
/// Removes `axis` by picking index `index` along it.
Var take(const Var& a, std::size_t axis, std::size_t index);
Var concat(const std::vector<Var>& parts, std::size_t axis);
/// Stacks equally shaped tensors along a new axis.
Var stack(const std::vector<Var>& parts, std::size_t axis);
/// Gathers rows of a rank-2 tensor.
Var select_rows(const Var& a, const std::vector<std::size_t>& rows);

/// 2-D convolution, stride 1, zero "same" padding (odd kernels).
/// x[N, Ci, H, W], w[Co, Ci, kh, kw], b[Co].
Var conv2d(const Var& x, const Var& w, const Var& b);
/// Non-overlapping average pooling; trailing remainders are dropped.
Var avg_pool2d(const Var& x, std::size_t ph, std::size_t pw);

/// Batch normalization over [N, C, H, W]. In training mode batch statistics
/// are used and the running buffers are updated in place.
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta,
                 std::vector<double>& running_mean,
                 std::vector<double>& running_var, bool training,
                 double momentum = 0.1, double eps = 1e-5);

}  // namespace ad
}  // namespace radur
