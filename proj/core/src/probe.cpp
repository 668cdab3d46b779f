#include "unifex/probe.hpp"

#include <cmath>
#include <string>

#include "unifex/error.hpp"
#include "unifex/parallel.hpp"
#include "unifex/random.hpp"

namespace unifex {

ProbeModel ProbeModel::init(std::size_t input_dim, std::size_t classes, const LossConfig& loss,
                            double dropout_rate, std::uint64_t seed) {
  if (input_dim == 0) throw ConfigError("input dimension must be >= 1");
  if (classes == 0) throw ConfigError("need at least one class");
  loss.validate();
  ProbeModel model;
  model.w_proj = MatrixD(input_dim, kProjectionDim);
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(input_dim));
  CounterRng rng(seed, streams::kProjectionInit);
  for (double& v : model.w_proj.values()) v = std_dev * rng.normal();
  model.b_proj.assign(kProjectionDim, 0.0);
  model.dropout_rate = dropout_rate;
  model.classifier = ClassifierWeights::random(classes, loss.k, kProjectionDim, seed);
  model.loss = loss;
  model.validate();
  return model;
}

std::size_t ProbeModel::trainable_parameter_count() const noexcept {
  return w_proj.size() + b_proj.size() + classifier.rows().size();
}

void ProbeModel::validate() const {
  if (w_proj.cols() != kProjectionDim) throw ShapeError("projection output must be 64-d");
  if (b_proj.size() != kProjectionDim) throw ShapeError("projection bias must have 64 entries");
  loss.validate();
  if (classifier.subcenters() != loss.k) throw ShapeError("classifier sub-centers do not match loss k");
  if (classifier.dim() != kProjectionDim) throw ShapeError("classifier dim must be 64");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1)");
  const auto finite = [](std::span<const double> v) {
    for (const double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  };
  if (!finite(w_proj.values()) || !finite(b_proj) || !finite(classifier.rows().values())) {
    throw NumericError("probe parameters contain non-finite values");
  }
}

Projection project(const ProbeModel& model, const MatrixD& x, ProjectMode mode, std::uint64_t seed,
                   std::uint64_t step) {
  if (x.cols() != model.input_dim()) {
    throw ShapeError("input dim " + std::to_string(x.cols()) + " != model input dim " +
                     std::to_string(model.input_dim()));
  }
  const std::size_t n = x.rows();
  const std::size_t d_in = x.cols();
  Projection out{MatrixD(n, kProjectionDim), {}};
  const bool dropout = mode == ProjectMode::Train;
  if (dropout) {
    out.mask = MatrixD(n, d_in, 1.0);
    if (model.dropout_rate > 0.0) {
      const double keep_scale = 1.0 / (1.0 - model.dropout_rate);
      CounterRng rng(seed, streams::sub(streams::kDropout, step));
      for (double& m : out.mask.values()) m = rng.uniform() < model.dropout_rate ? 0.0 : keep_scale;
    }
  }
  parallel_for(n, [&](std::size_t i) {
    auto yi = out.y.row(i);
    std::copy(model.b_proj.begin(), model.b_proj.end(), yi.begin());
    const auto xi = x.row(i);
    for (std::size_t d = 0; d < d_in; ++d) {
      const double v = dropout ? xi[d] * out.mask(i, d) : xi[d];
      if (v == 0.0) continue;
      const auto wd = model.w_proj.row(d);
      for (std::size_t o = 0; o < kProjectionDim; ++o) yi[o] += v * wd[o];
    }
  });
  return out;
}

ProbeGradients probe_backward(const ProbeModel& model, const MatrixD& x, const MatrixD& dy, const MatrixD& mask,
                              bool want_dx) {
  const std::size_t n = x.rows();
  const std::size_t d_in = model.input_dim();
  if (x.cols() != d_in) throw ShapeError("input dim does not match model");
  if (dy.rows() != n || dy.cols() != kProjectionDim) throw ShapeError("dL/dy must be N x 64");
  const bool masked = !mask.empty();
  if (masked && (mask.rows() != n || mask.cols() != d_in)) throw ShapeError("dropout mask shape mismatch");

  ProbeGradients g{MatrixD(d_in, kProjectionDim), std::vector<double>(kProjectionDim, 0.0), {}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto gi = dy.row(i);
    for (std::size_t o = 0; o < kProjectionDim; ++o) g.d_b_proj[o] += gi[o];
  }
  // Row d of dW depends only on column d of the input; parallel over d keeps a fixed summation order.
  parallel_for(d_in, [&](std::size_t d) {
    auto gw = g.d_w_proj.row(d);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = masked ? x(i, d) * mask(i, d) : x(i, d);
      if (v == 0.0) continue;
      const auto gi = dy.row(i);
      for (std::size_t o = 0; o < kProjectionDim; ++o) gw[o] += v * gi[o];
    }
  });
  if (want_dx) {
    g.d_x = MatrixD(n, d_in);
    for (std::size_t i = 0; i < n; ++i) {
      const auto gi = dy.row(i);
      for (std::size_t d = 0; d < d_in; ++d) {
        const double v = dot<double>(gi, model.w_proj.row(d));
        g.d_x(i, d) = masked ? v * mask(i, d) : v;
      }
    }
  }
  return g;
}

ZeroShotMode parse_zero_shot_mode(std::string_view text) {
  if (text == "random_linear") return ZeroShotMode::RandomLinear;
  if (text == "avg_pool") return ZeroShotMode::AvgPool;
  throw ConfigError("unknown zero-shot mode '" + std::string(text) + "' (expected random_linear or avg_pool)");
}

MatrixD zero_shot_project(const MatrixD& x, ZeroShotMode mode, std::uint64_t seed) {
  const std::size_t n = x.rows();
  const std::size_t d_in = x.cols();
  if (d_in == 0) throw ShapeError("input dimension must be >= 1");
  MatrixD y(n, kProjectionDim);
  if (mode == ZeroShotMode::AvgPool) {
    if (d_in % kProjectionDim != 0) {
      throw ConfigError("dimension not divisible by 64 (D_in = " + std::to_string(d_in) + ")");
    }
    const std::size_t chunk = d_in / kProjectionDim;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < kProjectionDim; ++j) {
        double sum = 0.0;
        for (std::size_t c = 0; c < chunk; ++c) sum += x(i, j * chunk + c);
        y(i, j) = sum / static_cast<double>(chunk);
      }
    }
    return y;
  }
  MatrixD r(d_in, kProjectionDim);
  const double std_dev = 1.0 / std::sqrt(static_cast<double>(d_in));
  CounterRng rng(seed, streams::kZeroShot);
  for (double& v : r.values()) v = std_dev * rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < d_in; ++d) {
      const double v = x(i, d);
      const auto rd = r.row(d);
      for (std::size_t o = 0; o < kProjectionDim; ++o) y(i, o) += v * rd[o];
    }
  }
  return y;
}

}  // namespace unifex
