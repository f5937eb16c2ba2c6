#include "radur/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace radur::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_op(Shape shape, std::vector<double> value, std::vector<Var> inputs,
            std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) {
    return v.defined() && v.requires_grad();
  });
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Var(std::move(node));
}

namespace {

constexpr auto make = make_op;

// Gradient buffer of input i, or nullptr when it does not need one.
std::vector<double>* grad_of(Node& self, std::size_t i) {
  auto& in = self.inputs[i];
  if (!in || !in->requires_grad) return nullptr;
  return &in->ensure_grad();
}

void require_same(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

template <typename F, typename D>
Var unary(const Var& a, F f, D dfdx_from_xy) {
  std::vector<double> out(a.size());
  const auto x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make(a.shape(), std::move(out), {a}, [dfdx_from_xy](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& x = self.inputs[0]->value;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      (*g)[i] += self.grad[i] * dfdx_from_xy(x[i], self.value[i]);
    }
  });
}

struct AxisSplit {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Var Var::constant(Shape shape, std::vector<double> values) {
  if (numel(shape) != values.size()) {
    throw ShapeError("constant: " + shape_str(shape) + " does not hold " +
                     std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Var(std::move(node));
}

Var Var::constant(Shape shape, double fill) {
  const auto n = numel(shape);
  return constant(std::move(shape), std::vector<double>(n, fill));
}

Var Var::parameter(Shape shape, std::vector<double> values) {
  Var v = constant(std::move(shape), std::move(values));
  v.node_->requires_grad = true;
  return v;
}

double Var::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Var Var::detach() const { return constant(shape(), node_->value); }

void backward(const Var& loss) {
  if (loss.size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child && child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward_fn) n->grad.assign(n->value.size(), 0.0);
  }
  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
  // Interior gradients are scratch; only leaves keep theirs.
  for (Node* n : order) {
    if (n->backward_fn) std::vector<double>().swap(n->grad);
  }
}

Var add(const Var& a, const Var& b) {
  require_same(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Var sub(const Var& a, const Var& b) {
  require_same(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bv[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var sigmoid(const Var& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(const Var& a) {
  return unary(a, [](double x) { return x < 0 ? 0.0 : x; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var exp(const Var& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var softmax(const Var& a) {
  if (a.rank() == 0) throw ShapeError("softmax on rank-0 tensor");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  std::vector<double> out(a.size());
  const auto x = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return make(a.shape(), std::move(out), {a}, [n, rows](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * n;
      const double* dy = self.grad.data() + r * n;
      double dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Var sum(const Var& a) {
  const auto v = a.value();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return make({1}, {s}, {a}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (auto& gi : *g) gi += self.grad[0];
    }
  });
}

Var mean(const Var& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Var mean_last(const Var& a) {
  if (a.rank() < 2) throw ShapeError("mean_last needs rank >= 2, got " + shape_str(a.shape()));
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.size() / n;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> out(rows, 0.0);
  const auto x = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0;
    for (std::size_t j = 0; j < n; ++j) s += x[r * n + j];
    out[r] = s / static_cast<double>(n);
  }
  return make(std::move(out_shape), std::move(out), {a}, [n, rows](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < n; ++j) (*g)[r * n + j] += self.grad[r] * inv;
    }
  });
}

Var mean_rows(const Var& a) {
  if (a.rank() != 2) throw ShapeError("mean_rows needs rank 2, got " + shape_str(a.shape()));
  return mean_last(transpose_last2(a));
}

Var matmul(const Var& a, const Var& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  MapMat(out.data(), m, n).noalias() = CMapMat(a.value().data(), m, k) * CMapMat(b.value().data(), k, n);
  return make({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    CMapMat dy(self.grad.data(), m, n);
    if (auto* g = grad_of(self, 0)) {
      MapMat(g->data(), m, k).noalias() += dy * CMapMat(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (auto* g = grad_of(self, 1)) {
      MapMat(g->data(), k, n).noalias() += CMapMat(self.inputs[0]->value.data(), m, k).transpose() * dy;
    }
  });
}

Var matvec(const Var& a, const Var& v) {
  if (a.rank() != 2 || v.rank() != 1 || a.dim(1) != v.dim(0)) {
    throw ShapeError("matvec: " + shape_str(a.shape()) + " x " + shape_str(v.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1);
  const auto av = a.value(), vv = v.value();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += av[i * k + j] * vv[j];
    out[i] = s;
  }
  return make({m}, std::move(out), {a, v}, [m, k](Node& self) {
    const auto& av = self.inputs[0]->value;
    const auto& vv = self.inputs[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) (*g)[i * k + j] += self.grad[i] * vv[j];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < k; ++j) (*g)[j] += self.grad[i] * av[i * k + j];
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w.rank() != 2 || x.rank() == 0 || x.shape().back() != w.dim(0)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0);
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  Var y = matmul(reshape(x, {x.size() / in, in}), w);
  if (b.defined()) y = add_bias_last(y, b);
  return reshape(y, std::move(out_shape));
}

Var add_bias_last(const Var& x, const Var& b) {
  const std::size_t n = x.shape().back();
  if (b.size() != n) throw ShapeError("add_bias_last: bias " + shape_str(b.shape()) + " vs " + shape_str(x.shape()));
  std::vector<double> out(x.value().begin(), x.value().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % n];
  return make(x.shape(), std::move(out), {x, b}, [n](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i];
    }
  });
}

Var mul_bias_last(const Var& x, const Var& s) {
  const std::size_t n = x.shape().back();
  if (s.size() != n) throw ShapeError("mul_bias_last: scale " + shape_str(s.shape()) + " vs " + shape_str(x.shape()));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s[i % n];
  return make(x.shape(), std::move(out), {x, s}, [n](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& sv = self.inputs[1]->value;
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * sv[i % n];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i % n] += self.grad[i] * xv[i];
    }
  });
}

Var mul_broadcast_frames(const Var& x, const Var& e) {
  if (x.rank() != 3 || e.rank() != 2 || x.dim(0) != e.dim(0) || x.dim(2) != e.dim(1)) {
    throw ShapeError("mul_broadcast_frames: " + shape_str(x.shape()) + " vs " + shape_str(e.shape()));
  }
  const std::size_t N = x.dim(0), T = x.dim(1), C = x.dim(2);
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t c = 0; c < C; ++c) {
        const std::size_t i = (n * T + t) * C + c;
        out[i] = x[i] * e[n * C + c];
      }
  return make(x.shape(), std::move(out), {x, e}, [N, T, C](Node& self) {
    const auto& xv = self.inputs[0]->value;
    const auto& ev = self.inputs[1]->value;
    auto* gx = grad_of(self, 0);
    auto* ge = grad_of(self, 1);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = (n * T + t) * C + c;
          if (gx) (*gx)[i] += self.grad[i] * ev[n * C + c];
          if (ge) (*ge)[n * C + c] += self.grad[i] * xv[i];
        }
  });
}

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.value().begin(), a.value().end());
  return make(std::move(shape), std::move(out), {a}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Var transpose_last2(const Var& a) {
  if (a.rank() < 2) throw ShapeError("transpose_last2 needs rank >= 2");
  const std::size_t r = a.rank();
  const std::size_t m = a.dim(r - 2), n = a.dim(r - 1);
  const std::size_t batch = a.size() / (m * n);
  Shape out_shape = a.shape();
  std::swap(out_shape[r - 2], out_shape[r - 1]);
  std::vector<double> out(a.size());
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) out[b * m * n + j * m + i] = a[b * m * n + i * n + j];
  return make(std::move(out_shape), std::move(out), {a}, [batch, m, n](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) (*g)[b * m * n + i * n + j] += self.grad[b * m * n + j * m + i];
  });
}

Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto sp = split_at(a.shape(), axis);
  if (begin > end || end > sp.len) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") of axis " +
                     std::to_string(axis) + " in " + shape_str(a.shape()));
  }
  const std::size_t w = end - begin;
  Shape out_shape = a.shape();
  out_shape[axis] = w;
  std::vector<double> out(sp.outer * w * sp.inner);
  const auto x = a.value();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(x.data() + (o * sp.len + begin) * sp.inner, w * sp.inner, out.data() + o * w * sp.inner);
  }
  return make(std::move(out_shape), std::move(out), {a}, [sp, begin, w](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t o = 0; o < sp.outer; ++o) {
      const double* src = self.grad.data() + o * w * sp.inner;
      double* dst = g->data() + (o * sp.len + begin) * sp.inner;
      for (std::size_t i = 0; i < w * sp.inner; ++i) dst[i] += src[i];
    }
  });
}

Var take(const Var& a, std::size_t axis, std::size_t index) {
  Var s = slice(a, axis, index, index + 1);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (out_shape.empty()) out_shape.push_back(1);
  return reshape(s, std::move(out_shape));
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat of nothing");
  Shape out_shape = parts.front().shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch");
    total += s.at(axis);
    s[axis] = out_shape[axis];
    if (s != out_shape) throw ShapeError("concat: incompatible " + shape_str(p.shape()) + " vs " + shape_str(parts.front().shape()));
  }
  out_shape[axis] = total;
  const auto sp = split_at(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(axis);
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(p.value().data() + o * len * sp.inner, len * sp.inner,
                  out.data() + (o * total + off) * sp.inner);
    }
    offsets.push_back(off);
    off += len;
  }
  return make(std::move(out_shape), std::move(out), parts, [sp, total, offsets](Node& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto* g = grad_of(self, k);
      if (!g) continue;
      const std::size_t len = g->size() / (sp.outer * sp.inner);
      for (std::size_t o = 0; o < sp.outer; ++o) {
        const double* src = self.grad.data() + (o * total + offsets[k]) * sp.inner;
        double* dst = g->data() + o * len * sp.inner;
        for (std::size_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
      }
    }
  });
}

Var stack(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("stack of nothing");
  std::vector<Var> expanded;
  expanded.reserve(parts.size());
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (axis > s.size()) throw ShapeError("stack: axis out of range");
    s.insert(s.begin() + static_cast<std::ptrdiff_t>(axis), 1);
    expanded.push_back(reshape(p, std::move(s)));
  }
  return concat(expanded, axis);
}

Var select_rows(const Var& a, const std::vector<std::size_t>& rows) {
  if (a.rank() != 2) throw ShapeError("select_rows needs rank 2");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(rows.size() * n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m) throw ShapeError("select_rows: row index out of range");
    std::copy_n(a.value().data() + rows[i] * n, n, out.data() + i * n);
  }
  return make({rows.size(), n}, std::move(out), {a}, [rows, n](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < n; ++j) (*g)[rows[i] * n + j] += self.grad[i * n + j];
  });
}

namespace {

// cols[(ci*kh + u)*kw + v, y*W + x] = x[ci, y + u - ph, x + v - pw]
void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, double* cols) {
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t u = 0; u < kh; ++u)
      for (std::size_t v = 0; v < kw; ++v) {
        double* row = cols + ((c * kh + u) * kw + v) * HW;
        for (std::size_t y = 0; y < H; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(u) - ph;
          double* dst = row + y * W;
          if (sy < 0 || sy >= static_cast<long>(H)) {
            std::fill_n(dst, W, 0.0);
            continue;
          }
          const double* src = x + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t xx = 0; xx < W; ++xx) {
            const long sx = static_cast<long>(xx) + static_cast<long>(v) - pw;
            dst[xx] = (sx < 0 || sx >= static_cast<long>(W)) ? 0.0 : src[sx];
          }
        }
      }
}

void col2im_add(const double* cols, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
                std::size_t kw, double* dx) {
  const long ph = static_cast<long>(kh / 2), pw = static_cast<long>(kw / 2);
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t u = 0; u < kh; ++u)
      for (std::size_t v = 0; v < kw; ++v) {
        const double* row = cols + ((c * kh + u) * kw + v) * HW;
        for (std::size_t y = 0; y < H; ++y) {
          const long sy = static_cast<long>(y) + static_cast<long>(u) - ph;
          if (sy < 0 || sy >= static_cast<long>(H)) continue;
          double* dst = dx + (c * H + static_cast<std::size_t>(sy)) * W;
          const double* src = row + y * W;
          for (std::size_t xx = 0; xx < W; ++xx) {
            const long sx = static_cast<long>(xx) + static_cast<long>(v) - pw;
            if (sx >= 0 && sx < static_cast<long>(W)) dst[sx] += src[xx];
          }
        }
      }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1) || b.size() != w.dim(0)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + ", weight " + shape_str(w.shape()) +
                     ", bias " + shape_str(b.shape()));
  }
  if (w.dim(2) % 2 == 0 || w.dim(3) % 2 == 0) throw ShapeError("conv2d: kernels must be odd");
  const std::size_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const std::size_t K = Ci * kh * kw, HW = H * W;
  std::vector<double> out(N * Co * HW);
  std::vector<double> cols(K * HW);
  CMapMat wm(w.value().data(), Co, K);
  for (std::size_t n = 0; n < N; ++n) {
    const double* xn = x.value().data() + n * Ci * HW;
    MapMat yn(out.data() + n * Co * HW, Co, HW);
    if (kh == 1 && kw == 1) {
      yn.noalias() = wm * CMapMat(xn, Ci, HW);
    } else {
      im2col(xn, Ci, H, W, kh, kw, cols.data());
      yn.noalias() = wm * CMapMat(cols.data(), K, HW);
    }
    for (std::size_t c = 0; c < Co; ++c) yn.row(static_cast<long>(c)).array() += b[c];
  }
  return make({N, Co, H, W}, std::move(out), {x, w, b}, [=](Node& self) {
    auto* gx = grad_of(self, 0);
    auto* gw = grad_of(self, 1);
    auto* gb = grad_of(self, 2);
    const auto& xv = self.inputs[0]->value;
    CMapMat wm(self.inputs[1]->value.data(), Co, K);
    std::vector<double> cols(K * HW), dcols(gx ? K * HW : 0);
    for (std::size_t n = 0; n < N; ++n) {
      CMapMat dy(self.grad.data() + n * Co * HW, Co, HW);
      if (gb) {
        for (std::size_t c = 0; c < Co; ++c) (*gb)[c] += dy.row(static_cast<long>(c)).sum();
      }
      const double* xn = xv.data() + n * Ci * HW;
      const bool pointwise = kh == 1 && kw == 1;
      if (gw) {
        if (pointwise) {
          MapMat(gw->data(), Co, K).noalias() += dy * CMapMat(xn, K, HW).transpose();
        } else {
          im2col(xn, Ci, H, W, kh, kw, cols.data());
          MapMat(gw->data(), Co, K).noalias() += dy * CMapMat(cols.data(), K, HW).transpose();
        }
      }
      if (gx) {
        if (pointwise) {
          MapMat(gx->data() + n * Ci * HW, Ci, HW).noalias() += wm.transpose() * dy;
        } else {
          MapMat(dcols.data(), K, HW).noalias() = wm.transpose() * dy;
          col2im_add(dcols.data(), Ci, H, W, kh, kw, gx->data() + n * Ci * HW);
        }
      }
    }
  });
}

Var avg_pool2d(const Var& x, std::size_t ph, std::size_t pw) {
  if (x.rank() != 4 || ph == 0 || pw == 0) throw ShapeError("avg_pool2d: bad input " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Ho = H / ph, Wo = W / pw;
  if (Ho == 0 || Wo == 0) throw ShapeError("avg_pool2d: input " + shape_str(x.shape()) + " smaller than window");
  const double inv = 1.0 / static_cast<double>(ph * pw);
  std::vector<double> out(N * C * Ho * Wo, 0.0);
  const auto xv = x.value();
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = 0;
        for (std::size_t u = 0; u < ph; ++u)
          for (std::size_t v = 0; v < pw; ++v) s += xv[(nc * H + i * ph + u) * W + j * pw + v];
        out[(nc * Ho + i) * Wo + j] = s * inv;
      }
  return make({N, C, Ho, Wo}, std::move(out), {x}, [=](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t nc = 0; nc < N * C; ++nc)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          const double d = self.grad[(nc * Ho + i) * Wo + j] * inv;
          for (std::size_t u = 0; u < ph; ++u)
            for (std::size_t v = 0; v < pw; ++v) (*g)[(nc * H + i * ph + u) * W + j * pw + v] += d;
        }
  });
}

Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, std::vector<double>& running_mean,
                 std::vector<double>& running_var, bool training, double momentum, double eps) {
  if (x.rank() != 4) throw ShapeError("batch_norm2d needs [N, C, H, W], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C || running_var.size() != C) {
    throw ShapeError("batch_norm2d: parameter size does not match " + std::to_string(C) + " channels");
  }
  const double M = static_cast<double>(N * HW);
  const auto xv = x.value();
  std::vector<double> mu(C), inv_std(C);
  if (training) {
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) s += xv[(n * C + c) * HW + i];
      mu[c] = s / M;
      double v = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
          const double d = xv[(n * C + c) * HW + i] - mu[c];
          v += d * d;
        }
      v /= M;
      inv_std[c] = 1.0 / std::sqrt(v + eps);
      const double unbiased = M > 1 ? v * M / (M - 1) : v;
      running_mean[c] = (1 - momentum) * running_mean[c] + momentum * mu[c];
      running_var[c] = (1 - momentum) * running_var[c] + momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + eps);
    }
  }
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t k = (n * C + c) * HW + i;
        out[k] = gamma[c] * (xv[k] - mu[c]) * inv_std[c] + beta[c];
      }
  return make(x.shape(), std::move(out), {x, gamma, beta}, [=](Node& self) {
    auto* gx = grad_of(self, 0);
    auto* gg = grad_of(self, 1);
    auto* gb = grad_of(self, 2);
    const auto& xv = self.inputs[0]->value;
    const auto& gv = self.inputs[1]->value;
    for (std::size_t c = 0; c < C; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
          const std::size_t k = (n * C + c) * HW + i;
          const double xhat = (xv[k] - mu[c]) * inv_std[c];
          sum_dy += self.grad[k];
          sum_dy_xhat += self.grad[k] * xhat;
        }
      if (gg) (*gg)[c] += sum_dy_xhat;
      if (gb) (*gb)[c] += sum_dy;
      if (!gx) continue;
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
          const std::size_t k = (n * C + c) * HW + i;
          if (training) {
            const double xhat = (xv[k] - mu[c]) * inv_std[c];
            (*gx)[k] += gv[c] * inv_std[c] / M * (M * self.grad[k] - sum_dy - xhat * sum_dy_xhat);
          } else {
            (*gx)[k] += gv[c] * inv_std[c] * self.grad[k];
          }
        }
    }
  });
}

}  // namespace radur::ad
