#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

#include "unifex/losses.hpp"
#include "unifex/matrix.hpp"

namespace unifex {

/// Output width of the projection head.
inline constexpr std::size_t kProjectionDim = 64;

/// Dropout followed by an affine map D_in -> 64, plus the margin-loss classifier.
struct ProbeModel {
  MatrixD w_proj;               // D_in x 64
  std::vector<double> b_proj;   // 64
  double dropout_rate = 0.2;
  ClassifierWeights classifier; // C x K x 64
  LossConfig loss;
  std::int64_t step = 0;

  /// Gaussian W_proj with std 1/sqrt(D_in), zero bias, unit-row Gaussian classifier.
  static ProbeModel init(std::size_t input_dim, std::size_t classes, const LossConfig& loss, double dropout_rate,
                         std::uint64_t seed);

  std::size_t input_dim() const noexcept { return w_proj.rows(); }
  /// D_in * 64 + 64 + C * K * 64.
  std::size_t trainable_parameter_count() const noexcept;
  void validate() const;

  friend bool operator==(const ProbeModel&, const ProbeModel&) = default;
};

/// Closed-form trainable-parameter count of the head.
constexpr std::size_t probe_parameter_count(std::size_t input_dim, std::size_t classes, std::size_t subcenters) {
  return input_dim * kProjectionDim + kProjectionDim + classes * subcenters * kProjectionDim;
}

enum class ProjectMode { Train, Eval };

struct Projection {
  MatrixD y;     // N x 64
  /// N x D_in multipliers (0 or 1/(1-p)); empty in eval mode.
  MatrixD mask;
};

/// Eval: y = x W + b. Train: inverted dropout on x (mask drawn from (seed, step)), then the affine map.
Projection project(const ProbeModel& model, const MatrixD& x, ProjectMode mode, std::uint64_t seed,
                   std::uint64_t step = 0);

struct ProbeGradients {
  MatrixD d_w_proj;
  std::vector<double> d_b_proj;
  MatrixD d_x;  // empty unless requested
};

ProbeGradients probe_backward(const ProbeModel& model, const MatrixD& x, const MatrixD& dy, const MatrixD& mask,
                              bool want_dx = false);

enum class ZeroShotMode { RandomLinear, AvgPool };

ZeroShotMode parse_zero_shot_mode(std::string_view text);

/// Training-free reduction to 64-d. random_linear: x R with R ~ N(0, 1/D_in).
/// avg_pool: mean of each contiguous chunk of D_in / 64 coordinates (D_in % 64 must be 0).
MatrixD zero_shot_project(const MatrixD& x, ZeroShotMode mode, std::uint64_t seed);

}  // namespace unifex
