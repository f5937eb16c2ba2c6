#include "radur/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace radur::nn {

Var& ParameterStore::insert(const std::string& name, Var v) {
  auto [it, inserted] = params_.emplace(name, std::move(v));
  if (!inserted) throw std::logic_error("duplicate parameter name: " + name);
  return it->second;
}

Var ParameterStore::add_uniform(const std::string& name, Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(ad::numel(shape));
  for (auto& v : values) v = dist(rng_);
  return insert(name, Var::parameter(std::move(shape), std::move(values)));
}

Var ParameterStore::add_constant(const std::string& name, Shape shape, double fill) {
  const auto n = ad::numel(shape);
  return insert(name, Var::parameter(std::move(shape), std::vector<double>(n, fill)));
}

std::vector<double>& ParameterStore::add_buffer(const std::string& name, std::size_t size, double fill) {
  auto [it, inserted] = buffers_.emplace(name, std::vector<double>(size, fill));
  if (!inserted) throw std::logic_error("duplicate buffer name: " + name);
  return it->second;
}

Var& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : params_) n += v.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, v] : params_) {
    Var copy = v;
    copy.zero_grad();
  }
}

Linear Linear::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      bool bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.w = store.add_uniform(name + ".w", {in, out}, bound);
  if (bias) l.b = store.add_uniform(name + ".b", {out}, bound);
  return l;
}

Conv2d Conv2d::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                      std::size_t kernel) {
  // He-uniform for ReLU/GLU stacks.
  const double fan_in = static_cast<double>(in * kernel * kernel);
  Conv2d c;
  c.w = store.add_uniform(name + ".w", {out, in, kernel, kernel}, std::sqrt(6.0 / fan_in));
  c.b = store.add_constant(name + ".b", {out}, 0.0);
  return c;
}

BatchNorm2d BatchNorm2d::create(ParameterStore& store, const std::string& name, std::size_t channels) {
  BatchNorm2d bn;
  bn.gamma = store.add_constant(name + ".gamma", {channels}, 1.0);
  bn.beta = store.add_constant(name + ".beta", {channels}, 0.0);
  bn.running_mean = &store.add_buffer(name + ".running_mean", channels, 0.0);
  bn.running_var = &store.add_buffer(name + ".running_var", channels, 1.0);
  return bn;
}

Var BatchNorm2d::operator()(const Var& x, bool training) const {
  return ad::batch_norm2d(x, gamma, beta, *running_mean, *running_var, training);
}

Var glu(const Var& x, std::size_t axis) {
  if (axis >= x.rank()) throw ShapeError("glu: axis out of range");
  const std::size_t c = x.dim(axis);
  if (c % 2 != 0) throw ShapeError("glu: odd channel count " + std::to_string(c));
  const Var lin = ad::slice(x, axis, 0, c / 2);
  const Var gate = ad::slice(x, axis, c / 2, c);
  return ad::mul(lin, ad::sigmoid(gate));
}

BiGru BiGru::create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto make_dir = [&](const std::string& prefix) {
    Direction d;
    d.w_ih = store.add_uniform(prefix + ".w_ih", {in, 3 * hidden}, bound);
    d.w_hh = store.add_uniform(prefix + ".w_hh", {hidden, 3 * hidden}, bound);
    d.b_ih = store.add_uniform(prefix + ".b_ih", {3 * hidden}, bound);
    d.b_hh = store.add_uniform(prefix + ".b_hh", {3 * hidden}, bound);
    return d;
  };
  BiGru g;
  g.forward_dir = make_dir(name + ".fwd");
  g.backward_dir = make_dir(name + ".bwd");
  g.hidden = hidden;
  return g;
}

namespace {

std::vector<Var> run_direction(const BiGru::Direction& d, const Var& x, std::size_t hidden, bool reverse) {
  const std::size_t N = x.dim(0), T = x.dim(1);
  const std::size_t H = hidden;
  const Var gates_in = ad::linear(x, d.w_ih, d.b_ih);  // [N, T, 3H]
  Var h = Var::constant({N, H}, 0.0);
  std::vector<Var> states(T);
  for (std::size_t step = 0; step < T; ++step) {
    const std::size_t t = reverse ? T - 1 - step : step;
    const Var gi = ad::take(gates_in, 1, t);          // [N, 3H]
    const Var gh = ad::linear(h, d.w_hh, d.b_hh);     // [N, 3H]
    const Var r = ad::sigmoid(ad::add(ad::slice(gi, 1, 0, H), ad::slice(gh, 1, 0, H)));
    const Var z = ad::sigmoid(ad::add(ad::slice(gi, 1, H, 2 * H), ad::slice(gh, 1, H, 2 * H)));
    const Var n = ad::tanh(ad::add(ad::slice(gi, 1, 2 * H, 3 * H), ad::mul(r, ad::slice(gh, 1, 2 * H, 3 * H))));
    h = ad::add(n, ad::mul(z, ad::sub(h, n)));
    states[t] = h;
  }
  return states;
}

}  // namespace

Var BiGru::operator()(const Var& x) const {
  if (x.rank() != 3 || x.dim(2) != forward_dir.w_ih.dim(0)) {
    throw ShapeError("BiGru: input " + ad::shape_str(x.shape()) + " does not match input size " +
                     std::to_string(forward_dir.w_ih.dim(0)));
  }
  const auto fwd = run_direction(forward_dir, x, hidden, false);
  const auto bwd = run_direction(backward_dir, x, hidden, true);
  const Var f = ad::stack(fwd, 1);  // [N, T, H]
  const Var b = ad::stack(bwd, 1);
  return ad::concat({f, b}, 2);
}

}  // namespace radur::nn
