#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "unifex/data_model.hpp"
#include "unifex/losses.hpp"
#include "unifex/probe.hpp"

namespace unifex {

struct TrainerConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 128;
  double lr = 1e-2;
  double lr_min = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t warmup_epochs = 1;
  std::uint64_t seed = 0;
  /// Stop once this many samples have been seen (mid-epoch if necessary).
  std::optional<std::size_t> max_seen_samples;

  void validate() const;
};

/// Cosine annealing from lr (tau = 0) to lr_min (tau = 1).
double cosine_lr(double tau, double lr, double lr_min);

/// Learning rate for a 0-based optimizer step. Warmup ramps linearly from
/// lr / steps_per_epoch (step 0) to lr at the last warmup step; cosine annealing
/// then runs from that step (tau = 0) to the final step (tau = 1).
double lr_at(std::size_t step, std::size_t steps_per_epoch, const TrainerConfig& config);

/// One trainable tensor and its gradient.
struct ParamRef {
  std::span<double> value;
  std::span<const double> grad;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
};

/// Bias-corrected Adam; weight decay is folded into the gradient (g + wd * p)
/// before the moment updates. Non-finite gradients raise NumericError and leave
/// parameters and state untouched.
void adam_step(std::span<const ParamRef> params, AdamState& state, double lr, const TrainerConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;
  /// Sample-weighted mean training loss.
  double mean_loss = 0.0;
  std::optional<double> eval_metric;
  std::size_t samples_seen = 0;
};

struct TrainResult {
  /// Best epoch by eval metric when a hook is given, else the last epoch.
  ProbeModel model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  LossState loss_state;
};

/// Returns the selection metric (higher is better) for the current model.
using EvalHook = std::function<double(const ProbeModel&)>;

/// Linear probing: only W_proj, b_proj and the classifier are updated.
/// Class ids must be dense in [0, C) with C = model.classifier.classes().
TrainResult train_probe(const EmbeddingMatrix& embeddings, const DatasetManifest& manifest, ProbeModel model,
                        const TrainerConfig& config, const EvalHook& eval_hook = {});

}  // namespace unifex
