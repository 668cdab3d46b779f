#include "unifex/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "unifex/error.hpp"
#include "unifex/parallel.hpp"
#include "unifex/random.hpp"

namespace unifex {
namespace {

constexpr double kPi = std::numbers::pi;
// Floor on sin(theta) inside d(theta)/d(cos); only reached when |cos| rounds to 1.
constexpr double kMinSin = 1e-7;

double sin_from_cos(double c) noexcept { return std::sqrt(std::max(0.0, 1.0 - c * c)); }

void check_margin(double m) {
  if (!(m >= 0.0 && m < kPi)) throw ConfigError("margin must lie in [0, pi), got " + std::to_string(m));
}

void check_targets(const MatrixD& cos, std::span<const ClassId> targets) {
  if (targets.size() != cos.rows()) throw ShapeError("target count does not match batch size");
  for (const ClassId y : targets) {
    if (y >= cos.cols()) throw ShapeError("target class " + std::to_string(y) + " out of range");
  }
}

struct MarginValue {
  double value;
  double derivative;
};

/// cos(theta + m) with the threshold fallback cos - m sin(m) past theta + m = pi.
MarginValue arcface_target(double c, double m) noexcept {
  const double cos_m = std::cos(m);
  const double sin_m = std::sin(m);
  if (c > std::cos(kPi - m)) {
    const double sin_t = sin_from_cos(c);
    return {c * cos_m - sin_t * sin_m, cos_m + c * sin_m / std::max(sin_t, kMinSin)};
  }
  return {c - m * sin_m, 1.0};
}

ScaledLogits plain_scaled(const MatrixD& cos, double s) {
  ScaledLogits out{MatrixD(cos.rows(), cos.cols()), MatrixD(cos.rows(), cos.cols(), s)};
  for (std::size_t i = 0; i < cos.size(); ++i) out.logits.values()[i] = s * cos.values()[i];
  return out;
}

ScaledLogits arcface_impl(const MatrixD& cos, std::span<const ClassId> targets, double s, auto margin_for) {
  check_targets(cos, targets);
  ScaledLogits out = plain_scaled(cos, s);
  for (std::size_t i = 0; i < cos.rows(); ++i) {
    const ClassId y = targets[i];
    const auto t = arcface_target(cos(i, y), margin_for(y));
    out.logits(i, y) = s * t.value;
    out.dlogit_dcos(i, y) = s * t.derivative;
  }
  return out;
}

double lower_median(std::vector<double> values) {
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  return values[mid];
}

}  // namespace

std::string_view to_string(LossVariant variant) noexcept {
  switch (variant) {
    case LossVariant::ArcFace: return "arcface";
    case LossVariant::SubCenterArcFace: return "subcenter-arcface";
    case LossVariant::LiArcFace: return "li-arcface";
    case LossVariant::AdaCos: return "adacos";
    case LossVariant::CurricularFace: return "curricularface";
    case LossVariant::AdaFace: return "adaface";
    case LossVariant::DynMarginArcFace: return "dynmargin-arcface";
  }
  return "arcface";
}

LossVariant parse_loss_variant(std::string_view text) {
  for (const LossVariant v : kAllLossVariants) {
    if (to_string(v) == text) return v;
  }
  throw ConfigError("unknown loss variant '" + std::string(text) + "'");
}

void LossConfig::validate() const {
  check_margin(m);
  if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("scale s must be positive");
  if (k < 1) throw ConfigError("sub-center count k must be >= 1");
  if (!(m_min <= m_max)) throw ConfigError("m_min must not exceed m_max");
  if (variant == LossVariant::DynMarginArcFace) {
    check_margin(m_min);
    check_margin(m_max);
  }
  if (!(curricular_alpha > 0.0 && curricular_alpha < 1.0)) throw ConfigError("curricular_alpha must be in (0, 1)");
  if (!(adaface_h > 0.0)) throw ConfigError("adaface_h must be positive");
  if (!(adaface_ema > 0.0 && adaface_ema <= 1.0)) throw ConfigError("adaface_ema must be in (0, 1]");
  if (!(adaface_eps > 0.0)) throw ConfigError("adaface_eps must be positive");
}

ClassifierWeights::ClassifierWeights(std::size_t classes, std::size_t subcenters, std::size_t dim)
    : ClassifierWeights(classes, subcenters, MatrixD(classes * subcenters, dim)) {}

ClassifierWeights::ClassifierWeights(std::size_t classes, std::size_t subcenters, MatrixD rows)
    : classes_(classes), subcenters_(subcenters), rows_(std::move(rows)) {
  if (subcenters_ < 1) throw ConfigError("sub-center count must be >= 1");
  if (rows_.rows() != classes_ * subcenters_) throw ShapeError("classifier rows must equal classes * subcenters");
}

ClassifierWeights ClassifierWeights::random(std::size_t classes, std::size_t subcenters, std::size_t dim,
                                            std::uint64_t seed) {
  ClassifierWeights w(classes, subcenters, dim);
  CounterRng rng(seed, streams::kClassifierInit);
  for (double& v : w.rows_.values()) v = rng.normal();
  l2_normalize_rows_inplace(w.rows_);
  return w;
}

ClassifierWeights ClassifierWeights::normalized() const {
  ClassifierWeights out = *this;
  const auto norms = l2_normalize_rows_inplace(out.rows_);
  for (std::size_t r = 0; r < norms.size(); ++r) {
    if (norms[r] == 0.0) throw DataError("classifier row " + std::to_string(r) + " has zero norm");
  }
  return out;
}

LossState LossState::initial(const LossConfig& config, std::size_t classes) {
  LossState state;
  if (config.variant == LossVariant::AdaCos) {
    if (classes < 2) throw ConfigError("AdaCos requires at least 2 classes");
    state.adacos_s = std::sqrt(2.0) * std::log(static_cast<double>(classes) - 1.0);
  }
  return state;
}

CosineLogits cosine_logits(const MatrixD& x_unit, const ClassifierWeights& weights) {
  if (x_unit.cols() != weights.dim()) {
    throw ShapeError("embedding dim " + std::to_string(x_unit.cols()) + " != classifier dim " +
                     std::to_string(weights.dim()));
  }
  const std::size_t n = x_unit.rows();
  const std::size_t classes = weights.classes();
  const std::size_t subs = weights.subcenters();
  CosineLogits out{MatrixD(n, classes), {}};
  if (subs > 1) out.best_subcenter.assign(n * classes, 0);
  parallel_for(n, [&](std::size_t i) {
    const auto xi = x_unit.row(i);
    for (std::size_t c = 0; c < classes; ++c) {
      double best = dot<double>(xi, weights.center(c, 0));
      std::uint32_t best_k = 0;
      for (std::size_t k = 1; k < subs; ++k) {
        const double v = dot<double>(xi, weights.center(c, k));
        if (v > best) {
          best = v;
          best_k = static_cast<std::uint32_t>(k);
        }
      }
      out.cos(i, c) = std::clamp(best, -1.0, 1.0);
      if (subs > 1) out.best_subcenter[i * classes + c] = best_k;
    }
  });
  return out;
}

ScaledLogits arcface_transform(const MatrixD& cos, std::span<const ClassId> targets, double m, double s) {
  check_margin(m);
  return arcface_impl(cos, targets, s, [m](ClassId) { return m; });
}

ScaledLogits arcface_transform(const MatrixD& cos, std::span<const ClassId> targets,
                               std::span<const double> margins, double s) {
  if (margins.size() != cos.cols()) throw ShapeError("need one margin per class");
  for (const double m : margins) check_margin(m);
  return arcface_impl(cos, targets, s, [margins](ClassId y) { return margins[y]; });
}

ScaledLogits li_arcface_transform(const MatrixD& cos, std::span<const ClassId> targets, double m, double s) {
  check_margin(m);
  check_targets(cos, targets);
  ScaledLogits out{MatrixD(cos.rows(), cos.cols()), MatrixD(cos.rows(), cos.cols())};
  for (std::size_t i = 0; i < cos.rows(); ++i) {
    for (std::size_t j = 0; j < cos.cols(); ++j) {
      const double c = cos(i, j);
      const double theta = std::acos(c);
      const double margin = j == targets[i] ? m : 0.0;
      out.logits(i, j) = s * (kPi - 2.0 * (theta + margin)) / kPi;
      out.dlogit_dcos(i, j) = s * (2.0 / kPi) / std::max(sin_from_cos(c), kMinSin);
    }
  }
  return out;
}

ScaledLogits adacos_transform(const MatrixD& cos, double s) {
  if (!(s > 0.0)) throw ConfigError("AdaCos scale must be positive");
  return plain_scaled(cos, s);
}

double adacos_update_scale(const LossState& state, const MatrixD& cos, std::span<const ClassId> targets) {
  if (cos.cols() < 2) throw ConfigError("AdaCos requires at least 2 classes");
  check_targets(cos, targets);
  if (cos.rows() == 0) return state.adacos_s;
  const double s = state.adacos_s;
  double b_sum = 0.0;
  std::vector<double> target_angles(cos.rows());
  for (std::size_t i = 0; i < cos.rows(); ++i) {
    for (std::size_t j = 0; j < cos.cols(); ++j) {
      if (j != targets[i]) b_sum += std::exp(s * cos(i, j));
    }
    target_angles[i] = std::acos(cos(i, targets[i]));
  }
  const double b_avg = b_sum / static_cast<double>(cos.rows());
  const double theta_med = lower_median(std::move(target_angles));
  const double next = std::log(b_avg) / std::cos(std::min(kPi / 4.0, theta_med));
  // ln(B_avg) <= 0 only when every negative cosine is already below zero; keep s.
  return std::isfinite(next) && next > 0.0 ? next : s;
}

StatefulLogits curricular_transform(const MatrixD& cos, std::span<const ClassId> targets, double m, double s,
                                    double alpha, const LossState& state) {
  check_margin(m);
  check_targets(cos, targets);
  StatefulLogits out{plain_scaled(cos, s), state};
  const double t = state.curricular_t;
  double target_sum = 0.0;
  for (std::size_t i = 0; i < cos.rows(); ++i) {
    const ClassId y = targets[i];
    const auto target = arcface_target(cos(i, y), m);
    target_sum += cos(i, y);
    for (std::size_t j = 0; j < cos.cols(); ++j) {
      if (j == y) continue;
      const double c = cos(i, j);
      if (c > target.value) {
        out.scaled.logits(i, j) = s * c * (t + c);
        out.scaled.dlogit_dcos(i, j) = s * (t + 2.0 * c);
      }
    }
    out.scaled.logits(i, y) = s * target.value;
    out.scaled.dlogit_dcos(i, y) = s * target.derivative;
  }
  if (cos.rows() > 0) {
    const double r = target_sum / static_cast<double>(cos.rows());
    out.state.curricular_t = std::clamp(alpha * r + (1.0 - alpha) * t, 0.0, 1.0);
  }
  return out;
}

StatefulLogits adaface_transform(const MatrixD& cos, std::span<const ClassId> targets,
                                 std::span<const double> feature_norms, const AdaFaceParams& p,
                                 const LossState& state) {
  check_margin(p.m);
  check_targets(cos, targets);
  if (feature_norms.size() != cos.rows()) throw ShapeError("need one feature norm per sample");
  StatefulLogits out{plain_scaled(cos, p.s), state};
  const double denom = state.adaface_sigma / p.h + p.eps;
  for (std::size_t i = 0; i < cos.rows(); ++i) {
    const ClassId y = targets[i];
    const double norm_hat = std::clamp((feature_norms[i] - state.adaface_mu) / denom, -1.0, 1.0);
    const double g_angle = -p.m * norm_hat;
    const double g_add = p.m * norm_hat + p.m;
    const double c = cos(i, y);
    const double theta = std::acos(c);
    const double shifted = theta + g_angle;
    const double theta_m = std::clamp(shifted, 0.0, kPi);
    const double derivative =
        shifted == theta_m ? std::sin(theta_m) / std::max(sin_from_cos(c), kMinSin) : 0.0;
    out.scaled.logits(i, y) = p.s * (std::cos(theta_m) - g_add);
    out.scaled.dlogit_dcos(i, y) = p.s * derivative;
  }

  const std::size_t n = feature_norms.size();
  if (n >= 2) {
    double mean = 0.0;
    for (const double z : feature_norms) mean += z;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double z : feature_norms) var += (z - mean) * (z - mean);
    const double std_dev = std::sqrt(var / static_cast<double>(n - 1));
    out.state.adaface_mu = p.ema * mean + (1.0 - p.ema) * state.adaface_mu;
    out.state.adaface_sigma = p.ema * std_dev + (1.0 - p.ema) * state.adaface_sigma;
  }
  return out;
}

double dynamic_margin(std::size_t n, const ClassStats& stats, double m_min, double m_max) {
  if (stats.n_max == stats.n_min) return 0.5 * (m_min + m_max);
  const double span = static_cast<double>(stats.n_max - stats.n_min);
  const double n_r = std::clamp((static_cast<double>(n) - static_cast<double>(stats.n_min)) / span, 0.0, 1.0);
  return m_min + 0.5 * (m_max - m_min) * (1.0 + std::cos(kPi * n_r));
}

std::vector<double> class_margins(const ClassStats& stats, double m_min, double m_max) {
  std::vector<double> margins(stats.counts.size());
  for (std::size_t c = 0; c < margins.size(); ++c) margins[c] = dynamic_margin(stats.counts[c], stats, m_min, m_max);
  return margins;
}

CrossEntropy cross_entropy_from_logits(const MatrixD& logits, std::span<const ClassId> targets) {
  check_targets(logits, targets);
  const std::size_t n = logits.rows();
  CrossEntropy out{0.0, MatrixD(n, logits.cols())};
  if (n == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = logits.row(i);
    const double shift = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (const double z : row) denom += std::exp(z - shift);
    const double log_denom = std::log(denom);
    out.loss -= (row[targets[i]] - shift - log_denom) * inv_n;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double p = std::exp(row[j] - shift - log_denom);
      out.grad(i, j) = (p - (j == targets[i] ? 1.0 : 0.0)) * inv_n;
    }
  }
  return out;
}

LossResult loss_and_grad(const LossConfig& config, const MatrixD& x, const ClassifierWeights& weights,
                         std::span<const ClassId> targets, const LossState& state, const LossInputs& inputs) {
  config.validate();
  if (x.cols() != weights.dim()) throw ShapeError("embedding dim does not match classifier dim");
  if (targets.size() != x.rows()) throw ShapeError("target count does not match batch size");

  MatrixD x_unit = x;
  const std::vector<double> x_norms = l2_normalize_rows_inplace(x_unit);
  for (std::size_t i = 0; i < x_norms.size(); ++i) {
    if (x_norms[i] == 0.0) throw DataError("embedding row " + std::to_string(i) + " has zero norm");
  }
  ClassifierWeights w_unit = weights;
  const std::vector<double> w_norms = l2_normalize_rows_inplace(w_unit.rows());
  for (std::size_t r = 0; r < w_norms.size(); ++r) {
    if (w_norms[r] == 0.0) throw DataError("classifier row " + std::to_string(r) + " has zero norm");
  }

  const CosineLogits cl = cosine_logits(x_unit, w_unit);
  LossResult result;
  result.state = state;

  ScaledLogits scaled;
  switch (config.variant) {
    case LossVariant::ArcFace:
    case LossVariant::SubCenterArcFace:
      scaled = arcface_transform(cl.cos, targets, config.m, config.s);
      break;
    case LossVariant::DynMarginArcFace:
      if (inputs.class_margins.empty()) throw ConfigError("dynamic-margin ArcFace needs per-class margins");
      scaled = arcface_transform(cl.cos, targets, inputs.class_margins, config.s);
      break;
    case LossVariant::LiArcFace:
      scaled = li_arcface_transform(cl.cos, targets, config.m, config.s);
      break;
    case LossVariant::AdaCos: {
      const LossState fresh = LossState::initial(config, weights.classes());
      if (!config.adacos_dynamic || !(state.adacos_s > 0.0)) result.state.adacos_s = fresh.adacos_s;
      scaled = adacos_transform(cl.cos, result.state.adacos_s);
      if (config.adacos_dynamic) result.state.adacos_s = adacos_update_scale(result.state, cl.cos, targets);
      break;
    }
    case LossVariant::CurricularFace: {
      auto out = curricular_transform(cl.cos, targets, config.m, config.s, config.curricular_alpha, state);
      scaled = std::move(out.scaled);
      result.state = out.state;
      break;
    }
    case LossVariant::AdaFace: {
      const std::span<const double> norms =
          inputs.feature_norms.empty() ? std::span<const double>(x_norms) : inputs.feature_norms;
      const AdaFaceParams params{config.m, config.s, config.adaface_h, config.adaface_ema, config.adaface_eps};
      auto out = adaface_transform(cl.cos, targets, norms, params, state);
      scaled = std::move(out.scaled);
      result.state = out.state;
      break;
    }
  }

  const CrossEntropy ce = cross_entropy_from_logits(scaled.logits, targets);
  result.loss = ce.loss;
  ++result.state.step;

  const std::size_t n = x.rows();
  const std::size_t dim = x.cols();
  const std::size_t classes = weights.classes();
  const std::size_t subs = weights.subcenters();
  MatrixD g_cos(n, classes);
  for (std::size_t i = 0; i < g_cos.size(); ++i) g_cos.values()[i] = ce.grad.values()[i] * scaled.dlogit_dcos.values()[i];
  const auto selected_row = [&](std::size_t i, std::size_t c) {
    return c * subs + (subs > 1 ? cl.best_subcenter[i * classes + c] : 0);
  };

  // d_x is split by sample and d_W by class, so every sum keeps a fixed order whatever the thread count.
  MatrixD d_x_unit(n, dim);
  parallel_for(n, [&](std::size_t i) {
    auto gx = d_x_unit.row(i);
    for (std::size_t c = 0; c < classes; ++c) {
      const double g = g_cos(i, c);
      if (g == 0.0) continue;
      const auto wr = w_unit.rows().row(selected_row(i, c));
      for (std::size_t e = 0; e < dim; ++e) gx[e] += g * wr[e];
    }
  });
  MatrixD d_w_unit(classes * subs, dim);
  parallel_for(classes, [&](std::size_t c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double g = g_cos(i, c);
      if (g == 0.0) continue;
      auto gw = d_w_unit.row(selected_row(i, c));
      const auto xi = x_unit.row(i);
      for (std::size_t e = 0; e < dim; ++e) gw[e] += g * xi[e];
    }
  });

  // Back through v -> v / |v|: (I - u u^T) g / |v|.
  const auto project_tangent = [](std::span<const double> u, std::span<double> g, double norm) {
    const double radial = dot<double>(u, g);
    for (std::size_t e = 0; e < g.size(); ++e) g[e] = (g[e] - radial * u[e]) / norm;
  };
  for (std::size_t i = 0; i < n; ++i) project_tangent(x_unit.row(i), d_x_unit.row(i), x_norms[i]);
  for (std::size_t r = 0; r < classes * subs; ++r) {
    project_tangent(w_unit.rows().row(r), d_w_unit.row(r), w_norms[r]);
  }
  result.d_x = std::move(d_x_unit);
  result.d_weights = std::move(d_w_unit);
  return result;
}

double loss_value(const LossConfig& config, const MatrixD& x, const ClassifierWeights& weights,
                  std::span<const ClassId> targets, const LossState& state, const LossInputs& inputs) {
  return loss_and_grad(config, x, weights, targets, state, inputs).loss;
}

}  // namespace unifex
