#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "unifex/data_model.hpp"

namespace unifex {

struct CurationConfig {
  std::size_t min_samples_per_class = 3;
  std::size_t max_samples_per_class = 100;
  /// Number of classes to keep (e.g. 10'000 for a landmark subset).
  std::optional<std::size_t> class_budget;
  /// Per-class cap applied together with class_budget (e.g. 10).
  std::optional<std::size_t> per_class_cap_for_subset;
  std::uint64_t seed = 0;

  void validate() const;
};

// Index-returning forms: positions into the input manifest, ascending.

std::vector<std::size_t> select_min_samples(const DatasetManifest& manifest, std::size_t min);
std::vector<std::size_t> select_capped(const DatasetManifest& manifest, std::size_t cap, std::uint64_t seed);
std::vector<std::size_t> select_class_subset(const DatasetManifest& manifest, std::size_t class_budget,
                                             std::size_t per_class_cap, std::uint64_t seed);

/// Drops every class with fewer than `min` records. Record order is preserved.
DatasetManifest filter_min_samples(const DatasetManifest& manifest, std::size_t min);

/// Keeps at most `cap` records per class, drawn uniformly without replacement.
/// The draw for a class depends only on (seed, class id), not on the other classes.
DatasetManifest cap_samples_per_class(const DatasetManifest& manifest, std::size_t cap, std::uint64_t seed);

/// Keeps `class_budget` classes chosen uniformly at random, then caps each at
/// `per_class_cap`. Warns and keeps every class if the budget exceeds the class count.
DatasetManifest subsample_classes(const DatasetManifest& manifest, std::size_t class_budget,
                                  std::size_t per_class_cap, std::uint64_t seed);

struct RemapResult {
  DatasetManifest manifest;
  /// old class id -> new class id
  std::unordered_map<ClassId, ClassId> mapping;
};

/// Renumbers classes densely in order of first appearance.
RemapResult remap_class_ids(const DatasetManifest& manifest);

struct CurationResult {
  DatasetManifest manifest;
  /// Input positions of the surviving records, in output order.
  std::vector<std::size_t> kept_rows;
  std::unordered_map<ClassId, ClassId> mapping;
};

/// filter -> cap -> (optional) class subsample -> remap.
CurationResult curate(const DatasetManifest& manifest, const CurationConfig& config);

}  // namespace unifex
