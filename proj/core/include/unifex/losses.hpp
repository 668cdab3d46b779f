#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "unifex/data_model.hpp"
#include "unifex/matrix.hpp"

namespace unifex {

enum class LossVariant {
  ArcFace,
  SubCenterArcFace,
  LiArcFace,
  AdaCos,
  CurricularFace,
  AdaFace,
  DynMarginArcFace,
};

inline constexpr LossVariant kAllLossVariants[] = {
    LossVariant::ArcFace,        LossVariant::SubCenterArcFace, LossVariant::LiArcFace,
    LossVariant::AdaCos,         LossVariant::CurricularFace,   LossVariant::AdaFace,
    LossVariant::DynMarginArcFace,
};

/// CLI spelling: arcface, subcenter-arcface, li-arcface, adacos, curricularface,
/// adaface, dynmargin-arcface.
std::string_view to_string(LossVariant variant) noexcept;
LossVariant parse_loss_variant(std::string_view text);

struct LossConfig {
  LossVariant variant = LossVariant::ArcFace;
  /// Angular margin in radians.
  double m = 0.5;
  /// Logit scale.
  double s = 30.0;
  /// Sub-centers per class.
  std::size_t k = 1;
  double m_min = 0.2;
  double m_max = 0.6;
  double curricular_alpha = 0.01;
  double adaface_h = 0.333;
  double adaface_ema = 0.01;
  double adaface_eps = 1e-3;
  /// AdaCos: rescale s after every batch (true) or keep s0 fixed (false).
  bool adacos_dynamic = true;

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Class-center weights, stored as C*K rows of length E; row c*K + k is sub-center k of class c.
class ClassifierWeights {
 public:
  ClassifierWeights() = default;
  ClassifierWeights(std::size_t classes, std::size_t subcenters, std::size_t dim);
  ClassifierWeights(std::size_t classes, std::size_t subcenters, MatrixD rows);

  /// Unit-normalized rows of a seeded standard Gaussian.
  static ClassifierWeights random(std::size_t classes, std::size_t subcenters, std::size_t dim, std::uint64_t seed);

  std::size_t classes() const noexcept { return classes_; }
  std::size_t subcenters() const noexcept { return subcenters_; }
  std::size_t dim() const noexcept { return rows_.cols(); }

  std::span<const double> center(std::size_t cls, std::size_t sub) const noexcept {
    return rows_.row(cls * subcenters_ + sub);
  }
  const MatrixD& rows() const noexcept { return rows_; }
  MatrixD& rows() noexcept { return rows_; }

  /// Copy with every row scaled to unit norm. Zero rows raise DataError.
  ClassifierWeights normalized() const;

  friend bool operator==(const ClassifierWeights&, const ClassifierWeights&) = default;

 private:
  std::size_t classes_ = 0;
  std::size_t subcenters_ = 1;
  MatrixD rows_;
};

/// Adaptive quantities carried across batches.
struct LossState {
  double adacos_s = 0.0;
  double curricular_t = 0.0;
  double adaface_mu = 20.0;
  double adaface_sigma = 100.0;
  std::int64_t step = 0;

  /// s0 = sqrt(2) ln(C - 1) for AdaCos; the other fields take their defaults.
  static LossState initial(const LossConfig& config, std::size_t classes);
  friend bool operator==(const LossState&, const LossState&) = default;
};

struct CosineLogits {
  /// N x C cosines, clamped to [-1, 1]; max over sub-centers when K > 1.
  MatrixD cos;
  /// N x C selected sub-center (lowest index on ties). Empty when K == 1.
  std::vector<std::uint32_t> best_subcenter;
};

/// x_unit: N x E with unit rows; weights must have unit rows.
CosineLogits cosine_logits(const MatrixD& x_unit, const ClassifierWeights& weights);

/// Scaled logits together with their elementwise derivative with respect to the
/// cosine they were computed from. Every transform here is diagonal: logit (i, j)
/// depends only on cos (i, j) once the adaptive state is fixed.
struct ScaledLogits {
  MatrixD logits;
  MatrixD dlogit_dcos;
};

ScaledLogits arcface_transform(const MatrixD& cos, std::span<const ClassId> targets, double m, double s);
/// ArcFace with a per-class margin, indexed by the target class.
ScaledLogits arcface_transform(const MatrixD& cos, std::span<const ClassId> targets,
                               std::span<const double> class_margins, double s);
ScaledLogits li_arcface_transform(const MatrixD& cos, std::span<const ClassId> targets, double m, double s);
/// Normalized softmax with the current AdaCos scale; no margin.
ScaledLogits adacos_transform(const MatrixD& cos, double s);
/// Scale for the next batch: ln(B_avg) / cos(min(pi/4, theta_med)).
double adacos_update_scale(const LossState& state, const MatrixD& cos, std::span<const ClassId> targets);

struct StatefulLogits {
  ScaledLogits scaled;
  LossState state;
};

/// Logits use the incoming t; the returned state carries t <- alpha * mean(cos_y) + (1 - alpha) * t.
StatefulLogits curricular_transform(const MatrixD& cos, std::span<const ClassId> targets, double m, double s,
                                    double alpha, const LossState& state);

struct AdaFaceParams {
  double m = 0.4;
  double s = 30.0;
  double h = 0.333;
  double ema = 0.01;
  double eps = 1e-3;
};

/// Logits use the incoming (mu, sigma); the returned state carries their EMA update.
/// feature_norms are treated as constants (no gradient flows through them).
StatefulLogits adaface_transform(const MatrixD& cos, std::span<const ClassId> targets,
                                 std::span<const double> feature_norms, const AdaFaceParams& params,
                                 const LossState& state);

/// Margin for a class of size n: m_min + (m_max - m_min) (1 + cos(pi n_r)) / 2
/// with n_r = (n - n_min) / (n_max - n_min); the midpoint when n_max == n_min.
double dynamic_margin(std::size_t n, const ClassStats& stats, double m_min, double m_max);
std::vector<double> class_margins(const ClassStats& stats, double m_min, double m_max);

struct CrossEntropy {
  double loss = 0.0;
  /// dL/dlogits = (softmax - onehot) / N
  MatrixD grad;
};

CrossEntropy cross_entropy_from_logits(const MatrixD& logits, std::span<const ClassId> targets);

/// Optional per-call inputs.
struct LossInputs {
  /// Per-class margins; required for DynMarginArcFace.
  std::span<const double> class_margins;
  /// Overrides the norms AdaFace reads from x (defaults to the row norms of x).
  std::span<const double> feature_norms;
};

struct LossResult {
  double loss = 0.0;
  MatrixD d_x;
  /// Same layout as ClassifierWeights::rows().
  MatrixD d_weights;
  LossState state;
};

/// Full forward/backward: normalize x and W, cosine logits, variant transform,
/// cross-entropy. Gradients include the normalization Jacobian (I - u u^T) / |v|,
/// so each row of d_x is orthogonal to the matching row of x.
LossResult loss_and_grad(const LossConfig& config, const MatrixD& x, const ClassifierWeights& weights,
                         std::span<const ClassId> targets, const LossState& state, const LossInputs& inputs = {});

/// Loss value only; same arithmetic as loss_and_grad.
double loss_value(const LossConfig& config, const MatrixD& x, const ClassifierWeights& weights,
                  std::span<const ClassId> targets, const LossState& state, const LossInputs& inputs = {});

}  // namespace unifex
