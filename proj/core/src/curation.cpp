#include "unifex/curation.hpp"

#include <algorithm>
#include <map>

#include "unifex/error.hpp"
#include "unifex/log.hpp"
#include "unifex/random.hpp"

namespace unifex {
namespace {

/// Record positions grouped by class, keyed by class id so iteration order is stable.
std::map<ClassId, std::vector<std::size_t>> group_by_class(const DatasetManifest& manifest) {
  std::map<ClassId, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < manifest.size(); ++i) groups[manifest.records[i].class_id].push_back(i);
  return groups;
}

std::vector<std::size_t> cap_groups(const std::map<ClassId, std::vector<std::size_t>>& groups,
                                    std::size_t cap, std::uint64_t seed) {
  std::vector<std::size_t> kept;
  for (const auto& [cls, members] : groups) {
    if (members.size() <= cap) {
      kept.insert(kept.end(), members.begin(), members.end());
      continue;
    }
    std::vector<std::size_t> pool = members;
    CounterRng rng(seed, streams::sub(streams::kCap, cls));
    rng.shuffle(std::span<std::size_t>(pool));
    kept.insert(kept.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(cap));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

void CurationConfig::validate() const {
  if (min_samples_per_class < 1) throw ConfigError("min_samples_per_class must be >= 1");
  if (max_samples_per_class < min_samples_per_class) {
    throw ConfigError("max_samples_per_class must be >= min_samples_per_class");
  }
  if (class_budget && *class_budget == 0) throw ConfigError("class_budget must be positive");
  if (per_class_cap_for_subset && *per_class_cap_for_subset == 0) {
    throw ConfigError("per_class_cap_for_subset must be positive");
  }
}

std::vector<std::size_t> select_min_samples(const DatasetManifest& manifest, std::size_t min) {
  if (min < 1) throw ConfigError("min samples must be >= 1");
  std::unordered_map<ClassId, std::size_t> counts;
  for (const auto& r : manifest.records) ++counts[r.class_id];
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (counts[manifest.records[i].class_id] >= min) kept.push_back(i);
  }
  return kept;
}

std::vector<std::size_t> select_capped(const DatasetManifest& manifest, std::size_t cap, std::uint64_t seed) {
  if (cap < 1) throw ConfigError("cap must be >= 1");
  return cap_groups(group_by_class(manifest), cap, seed);
}

std::vector<std::size_t> select_class_subset(const DatasetManifest& manifest, std::size_t class_budget,
                                             std::size_t per_class_cap, std::uint64_t seed) {
  if (class_budget < 1) throw ConfigError("class_budget must be >= 1");
  if (per_class_cap < 1) throw ConfigError("per_class_cap must be >= 1");
  auto groups = group_by_class(manifest);
  if (class_budget >= groups.size()) {
    if (class_budget > groups.size()) {
      warn("class budget " + std::to_string(class_budget) + " exceeds available classes (" +
           std::to_string(groups.size()) + "); keeping all");
    }
    return cap_groups(groups, per_class_cap, seed);
  }

  std::vector<ClassId> classes;
  classes.reserve(groups.size());
  for (const auto& entry : groups) classes.push_back(entry.first);
  // Partial Fisher-Yates: the first class_budget slots are a uniform sample.
  CounterRng rng(seed, streams::kSubsample);
  for (std::size_t i = 0; i < class_budget; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_index(classes.size() - i));
    std::swap(classes[i], classes[j]);
  }
  std::map<ClassId, std::vector<std::size_t>> chosen;
  for (std::size_t i = 0; i < class_budget; ++i) chosen.emplace(classes[i], std::move(groups[classes[i]]));
  return cap_groups(chosen, per_class_cap, seed);
}

DatasetManifest filter_min_samples(const DatasetManifest& manifest, std::size_t min) {
  return manifest.select(select_min_samples(manifest, min));
}

DatasetManifest cap_samples_per_class(const DatasetManifest& manifest, std::size_t cap, std::uint64_t seed) {
  return manifest.select(select_capped(manifest, cap, seed));
}

DatasetManifest subsample_classes(const DatasetManifest& manifest, std::size_t class_budget,
                                  std::size_t per_class_cap, std::uint64_t seed) {
  return manifest.select(select_class_subset(manifest, class_budget, per_class_cap, seed));
}

RemapResult remap_class_ids(const DatasetManifest& manifest) {
  RemapResult out;
  out.manifest = manifest;
  for (auto& r : out.manifest.records) {
    const auto [it, inserted] = out.mapping.try_emplace(r.class_id, static_cast<ClassId>(out.mapping.size()));
    r.class_id = it->second;
  }
  return out;
}

CurationResult curate(const DatasetManifest& manifest, const CurationConfig& config) {
  config.validate();
  std::vector<std::size_t> rows = select_min_samples(manifest, config.min_samples_per_class);
  const auto compose = [&rows](const std::vector<std::size_t>& local) {
    std::vector<std::size_t> next(local.size());
    for (std::size_t i = 0; i < local.size(); ++i) next[i] = rows[local[i]];
    rows = std::move(next);
  };
  compose(select_capped(manifest.select(rows), config.max_samples_per_class, config.seed));
  if (config.class_budget) {
    const std::size_t cap = config.per_class_cap_for_subset.value_or(config.max_samples_per_class);
    compose(select_class_subset(manifest.select(rows), *config.class_budget, cap, config.seed));
  }
  auto remapped = remap_class_ids(manifest.select(rows));
  return {std::move(remapped.manifest), std::move(rows), std::move(remapped.mapping)};
}

}  // namespace unifex
