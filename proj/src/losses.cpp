#include "radur/losses.hpp"

#include <algorithm>
#include <cmath>

namespace radur {
namespace {

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("loss: " + std::to_string(a) + " predictions vs " + std::to_string(b) + " labels");
  if (a == 0) throw ShapeError("loss: empty input");
}

bool clamped(double p) { return p < kProbabilityClamp || p > 1.0 - kProbabilityClamp; }
double clamp_p(double p) { return std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp); }

double bce_frame(double p, double y) {
  p = clamp_p(p);
  return -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
}

double bce_frame_grad(double p, double y) {
  if (clamped(p)) return 0.0;
  return -(y / p) + (1.0 - y) / (1.0 - p);
}

template <typename Frame>
double mean_of(std::span<const double> y_hat, std::span<const double> y, Frame f) {
  require_same_length(y_hat.size(), y.size());
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += f(y_hat[i], y[i]);
  return s / static_cast<double>(y.size());
}

template <typename Frame, typename Grad>
ad::Var mean_op(const ad::Var& y_hat, std::span<const double> y, Frame f, Grad g) {
  const double value = mean_of(y_hat.value(), y, f);
  std::vector<double> labels(y.begin(), y.end());
  return ad::make_op({1}, {value}, {y_hat}, [labels, g](ad::Node& self) {
    auto& in = *self.inputs[0];
    auto& grad = in.ensure_grad();
    const double scale = self.grad[0] / static_cast<double>(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) grad[i] += scale * g(in.value[i], labels[i]);
  });
}

}  // namespace

void FocalConfig::validate() const {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("focal beta must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal gamma must be >= 0");
}

void DurationWeightConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("duration alpha must be >= 0");
  if (!(w_short < w_long)) throw std::invalid_argument("duration range needs w_short < w_long");
}

std::string to_string(DurationWeightMode mode) {
  return mode == DurationWeightMode::intent ? "intent" : "literal";
}

DurationWeightMode parse_duration_mode(const std::string& name) {
  if (name == "intent") return DurationWeightMode::intent;
  if (name == "literal") return DurationWeightMode::literal;
  throw std::invalid_argument("unknown duration weight mode '" + name + "' (expected intent or literal)");
}

double focal_frame(double p, double y, const FocalConfig& cfg) {
  p = clamp_p(p);
  return -cfg.beta * y * std::pow(1.0 - p, cfg.gamma) * std::log(p) -
         (1.0 - cfg.beta) * (1.0 - y) * std::pow(p, cfg.gamma) * std::log(1.0 - p);
}

double focal_frame_grad(double p, double y, const FocalConfig& cfg) {
  if (clamped(p)) return 0.0;
  const double g = cfg.gamma;
  // d/dp of -(1-p)^g log p and of -p^g log(1-p); gamma = 0 drops the power-rule term.
  const double pos = (g == 0.0 ? 0.0 : g * std::pow(1.0 - p, g - 1.0) * std::log(p)) - std::pow(1.0 - p, g) / p;
  const double neg = -(g == 0.0 ? 0.0 : g * std::pow(p, g - 1.0) * std::log(1.0 - p)) + std::pow(p, g) / (1.0 - p);
  return cfg.beta * y * pos + (1.0 - cfg.beta) * (1.0 - y) * neg;
}

double bce_loss(std::span<const double> y_hat, std::span<const double> y) { return mean_of(y_hat, y, bce_frame); }

double focal_loss(std::span<const double> y_hat, std::span<const double> y, const FocalConfig& cfg) {
  return mean_of(y_hat, y, [&](double p, double t) { return focal_frame(p, t, cfg); });
}

double duration_weight(double w, const DurationWeightConfig& cfg) {
  w = std::clamp(w, cfg.w_short, cfg.w_long);
  const double e_short = std::exp(-cfg.w_short);
  const double e_long = std::exp(-cfg.w_long);
  const double e = std::exp(-w);
  const double unit = cfg.mode == DurationWeightMode::intent ? (e - e_long) / (e_short - e_long)
                                                             : (e - e_short) / (e_long - e_short);
  return 1.0 + cfg.alpha * unit;
}

double class_duration(const DurationStats& stats, const ClassId& class_id) {
  auto it = stats.find(class_id);
  if (it == stats.end()) throw MissingStats("no duration statistics for class '" + class_id + "'");
  return it->second;
}

double du_focal_loss(std::span<const double> y_hat, std::span<const double> y, const ClassId& class_id,
                     const DurationStats& stats, const FocalConfig& fcfg, const DurationWeightConfig& dcfg) {
  return duration_weight(class_duration(stats, class_id), dcfg) * focal_loss(y_hat, y, fcfg);
}

ad::Var bce_loss(const ad::Var& y_hat, std::span<const double> y) {
  return mean_op(y_hat, y, bce_frame, bce_frame_grad);
}

ad::Var focal_loss(const ad::Var& y_hat, std::span<const double> y, const FocalConfig& cfg) {
  return mean_op(
      y_hat, y, [cfg](double p, double t) { return focal_frame(p, t, cfg); },
      [cfg](double p, double t) { return focal_frame_grad(p, t, cfg); });
}

ad::Var du_focal_loss(const ad::Var& y_hat, std::span<const double> y, const ClassId& class_id,
                      const DurationStats& stats, const FocalConfig& fcfg, const DurationWeightConfig& dcfg) {
  const double weight = duration_weight(class_duration(stats, class_id), dcfg);
  return ad::scale(focal_loss(y_hat, y, fcfg), weight);
}

}  // namespace radur
