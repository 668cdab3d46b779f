#include "unifex/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "unifex/error.hpp"
#include "unifex/random.hpp"

namespace unifex {

void TrainerConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (!(lr >= 0.0) || !(lr_min >= 0.0) || lr_min > lr) throw ConfigError("need 0 <= lr_min <= lr");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("betas must be in (0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (warmup_epochs > 0 && epochs <= warmup_epochs) throw ConfigError("epochs must exceed warmup epochs");
}

double cosine_lr(double tau, double lr, double lr_min) {
  return lr_min + 0.5 * (lr - lr_min) * (1.0 + std::cos(std::numbers::pi * tau));
}

double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainerConfig& config) {
  const std::size_t spe = std::max<std::size_t>(1, steps_per_epoch);
  const std::size_t warmup_steps = config.warmup_epochs * spe;
  const std::size_t total_steps = config.epochs * spe;
  if (step < warmup_steps) {
    return config.lr * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  // The cosine phase starts at the last warmup step so both pieces meet at lr.
  const std::size_t start = warmup_steps == 0 ? 0 : warmup_steps - 1;
  const std::size_t last = total_steps - 1;
  if (last <= start) return config.lr;
  const double tau = std::min(1.0, static_cast<double>(step - start) / static_cast<double>(last - start));
  return cosine_lr(tau, config.lr, config.lr_min);
}

void adam_step(std::span<const ParamRef> params, AdamState& state, double lr, const TrainerConfig& config) {
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (params[p].value.size() != params[p].grad.size()) throw ShapeError("parameter/gradient size mismatch");
    for (const double g : params[p].grad) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in tensor " + std::to_string(p) + " at optimizer step " +
                           std::to_string(state.step + 1));
      }
    }
  }
  if (state.first_moment.size() != params.size()) {
    state.first_moment.assign(params.size(), {});
    state.second_moment.assign(params.size(), {});
    for (std::size_t p = 0; p < params.size(); ++p) {
      state.first_moment[p].assign(params[p].value.size(), 0.0);
      state.second_moment[p].assign(params[p].value.size(), 0.0);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto value = params[p].value;
    const auto grad = params[p].grad;
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != value.size()) throw ShapeError("Adam state does not match parameter size");
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] + config.weight_decay * value[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + config.adam_eps);
    }
  }
}

TrainResult train_probe(const EmbeddingMatrix& embeddings, const DatasetManifest& manifest, ProbeModel model,
                        const TrainerConfig& config, const EvalHook& eval_hook) {
  config.validate();
  model.validate();
  check_paired(embeddings, manifest);
  if (manifest.empty()) throw ConfigError("empty training set");
  if (embeddings.dim() != model.input_dim()) throw ShapeError("embedding dim does not match probe input dim");

  const std::size_t classes = model.classifier.classes();
  const std::vector<ClassId> labels = manifest.class_ids();
  std::vector<bool> present(classes, false);
  for (const ClassId y : labels) {
    if (y >= classes) throw ConfigError("class id " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    present[y] = true;
  }
  if (std::find(present.begin(), present.end(), false) != present.end()) {
    throw ConfigError("class ids are not contiguous; remap them first");
  }

  const ClassStats stats = ClassStats::from_manifest(manifest);
  std::vector<double> margins;
  if (model.loss.variant == LossVariant::DynMarginArcFace) {
    margins = class_margins(stats, model.loss.m_min, model.loss.m_max);
  }

  const MatrixD x_all = embeddings.to_double();
  const std::size_t n = x_all.rows();
  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;

  TrainResult result;
  result.loss_state = LossState::initial(model.loss, classes);
  LossState& loss_state = result.loss_state;
  AdamState adam;
  std::optional<double> best_metric;
  result.model = model;

  std::vector<std::size_t> order(n);
  std::size_t seen = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < config.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng shuffle_rng(config.seed, streams::sub(streams::kShuffle, epoch));
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    double loss_sum = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::size_t begin = b * config.batch_size;
      std::size_t end = std::min(n, begin + config.batch_size);
      if (config.max_seen_samples) {
        if (seen >= *config.max_seen_samples) {
          stop = true;
          break;
        }
        end = std::min(end, begin + (*config.max_seen_samples - seen));
      }
      const std::size_t rows = end - begin;
      MatrixD x(rows, x_all.cols());
      std::vector<ClassId> targets(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t src = order[begin + r];
        std::copy(x_all.row(src).begin(), x_all.row(src).end(), x.row(r).begin());
        targets[r] = labels[src];
      }

      const auto global_step = static_cast<std::uint64_t>(model.step);
      const Projection proj = project(model, x, ProjectMode::Train, config.seed, global_step);
      LossResult lr_out;
      try {
        lr_out = loss_and_grad(model.loss, proj.y, model.classifier, targets, loss_state, {margins, {}});
      } catch (const DataError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(global_step) + ")");
      }
      if (!std::isfinite(lr_out.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", step " +
                           std::to_string(global_step));
      }
      const ProbeGradients pg = probe_backward(model, x, lr_out.d_x, proj.mask);

      const double lr = lr_at(static_cast<std::size_t>(global_step), steps_per_epoch, config);
      const ParamRef params[] = {
          {model.w_proj.values(), pg.d_w_proj.values()},
          {model.b_proj, pg.d_b_proj},
          {model.classifier.rows().values(), lr_out.d_weights.values()},
      };
      try {
        adam_step(params, adam, lr, config);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch + 1) + ")");
      }
      loss_state = lr_out.state;
      ++model.step;
      loss_sum += lr_out.loss * static_cast<double>(rows);
      epoch_samples += rows;
      seen += rows;
    }
    if (epoch_samples == 0) break;

    EpochRecord record{epoch + 1, loss_sum / static_cast<double>(epoch_samples), std::nullopt, seen};
    if (eval_hook) {
      record.eval_metric = eval_hook(model);
      if (!best_metric || *record.eval_metric > *best_metric) {
        best_metric = record.eval_metric;
        result.model = model;
        result.best_epoch = record.epoch;
      }
    } else {
      result.model = model;
      result.best_epoch = record.epoch;
    }
    result.history.push_back(record);
  }
  return result;
}

}  // namespace unifex
