#pragma once

// Frame-level objectives: binary cross entropy, focal loss, and the
// duration-weighted focal loss. Each loss is the mean over frames.

#include <map>
#include <span>
#include <stdexcept>
#include <string>

#include "radur/events.hpp"
#include "radur/tensor.hpp"

namespace radur {

inline constexpr double kProbabilityClamp = 1e-7;

struct FocalConfig {
  double beta = 0.65;
  double gamma = 2.0;

  void validate() const;
};

enum class DurationWeightMode {
  intent,   // weight decreases with duration; transient events weigh most
  literal,  // the normalisation as printed; weight increases with duration
};

struct DurationWeightConfig {
  double alpha = 1.5;
  double w_short = 0.0;
  double w_long = 10.0;
  DurationWeightMode mode = DurationWeightMode::intent;

  void validate() const;
};

std::string to_string(DurationWeightMode mode);
DurationWeightMode parse_duration_mode(const std::string& name);

/// Per-class mean event duration in seconds, clipped to [0, 10].
using DurationStats = std::map<ClassId, double>;

class MissingStats : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

double bce_loss(std::span<const double> y_hat, std::span<const double> y);
double focal_loss(std::span<const double> y_hat, std::span<const double> y, const FocalConfig& cfg);
double duration_weight(double w, const DurationWeightConfig& cfg);
double du_focal_loss(std::span<const double> y_hat, std::span<const double> y, const ClassId& class_id,
                     const DurationStats& stats, const FocalConfig& fcfg, const DurationWeightConfig& dcfg);

/// Looks up the class mean duration; throws MissingStats.
double class_duration(const DurationStats& stats, const ClassId& class_id);

// Per-frame terms and their derivatives with respect to y_hat (after clamping).
double focal_frame(double p, double y, const FocalConfig& cfg);
double focal_frame_grad(double p, double y, const FocalConfig& cfg);

// Differentiable versions: y_hat is a Var of probabilities, result is [1].
ad::Var bce_loss(const ad::Var& y_hat, std::span<const double> y);
ad::Var focal_loss(const ad::Var& y_hat, std::span<const double> y, const FocalConfig& cfg);
ad::Var du_focal_loss(const ad::Var& y_hat, std::span<const double> y, const ClassId& class_id,
                      const DurationStats& stats, const FocalConfig& fcfg, const DurationWeightConfig& dcfg);

}  // namespace radur
