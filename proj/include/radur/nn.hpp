#pragma once

// Parameter ownership and the generic layers shared by both networks.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "radur/tensor.hpp"

namespace radur::nn {

using ad::Shape;
using ad::Var;

/// Owns every learnable tensor and non-learnable buffer of a model, keyed by
/// a stable hierarchical name ("detector.block1.conv.w"). Iteration order is
/// the lexicographic name order, which fixes checkpoint and optimizer layout.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

  Var add_uniform(const std::string& name, Shape shape, double bound);
  Var add_constant(const std::string& name, Shape shape, double fill);
  std::vector<double>& add_buffer(const std::string& name, std::size_t size, double fill);

  const std::map<std::string, Var>& parameters() const { return params_; }
  std::map<std::string, std::vector<double>>& buffers() { return buffers_; }
  const std::map<std::string, std::vector<double>>& buffers() const { return buffers_; }

  Var& at(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  Var& insert(const std::string& name, Var v);

  std::mt19937_64 rng_;
  std::map<std::string, Var> params_;
  std::map<std::string, std::vector<double>> buffers_;
};

struct Linear {
  Var w;  // [in, out]
  Var b;  // [out], may be undefined

  static Linear create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       bool bias = true);
  Var operator()(const Var& x) const { return ad::linear(x, w, b); }
};

struct Conv2d {
  Var w;  // [out, in, k, k]
  Var b;

  static Conv2d create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
                       std::size_t kernel);
  Var operator()(const Var& x) const { return ad::conv2d(x, w, b); }
};

struct BatchNorm2d {
  Var gamma;
  Var beta;
  std::vector<double>* running_mean = nullptr;
  std::vector<double>* running_var = nullptr;

  static BatchNorm2d create(ParameterStore& store, const std::string& name, std::size_t channels);
  Var operator()(const Var& x, bool training) const;
};

/// Gated linear unit along the channel axis (axis 1): the first half of the
/// channels is the linear path, the second half the sigmoid gate.
Var glu(const Var& x, std::size_t axis = 1);

/// One bidirectional GRU layer (PyTorch gate layout r, z, n).
struct BiGru {
  struct Direction {
    Var w_ih;  // [in, 3H]
    Var w_hh;  // [H, 3H]
    Var b_ih;  // [3H]
    Var b_hh;  // [3H]
  };
  Direction forward_dir;
  Direction backward_dir;
  std::size_t hidden = 0;

  static BiGru create(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden);
  /// x[N, T, in] -> [N, T, 2H], forward states first.
  Var operator()(const Var& x) const;
};

}  // namespace radur::nn
