#include "unifex/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <unordered_map>

#include "unifex/error.hpp"
#include "unifex/parallel.hpp"

namespace unifex {
namespace {

bool ranks_before(const Neighbor& a, const Neighbor& b) noexcept {
  return a.score > b.score || (a.score == b.score && a.index_id < b.index_id);
}

std::vector<std::uint32_t> ids_of(const Ranking& ranking) {
  std::vector<std::uint32_t> ids(ranking.size());
  std::transform(ranking.begin(), ranking.end(), ids.begin(), [](const Neighbor& n) { return n.index_id; });
  return ids;
}

MetricSummary mean_metric(std::span<const std::vector<std::uint32_t>> rankings, std::span<const RelevantSet> relevance,
                          std::size_t k, auto per_query) {
  if (rankings.empty()) throw ConfigError("empty query set");
  if (rankings.size() != relevance.size()) throw ShapeError("rankings and relevance sets differ in length");
  if (k == 0) throw ConfigError("k must be positive");
  MetricSummary summary;
  double sum = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    const auto v = per_query(rankings[q], relevance[q], k);
    if (!v) {
      ++summary.excluded_queries;
      continue;
    }
    sum += *v;
    ++summary.scored_queries;
  }
  if (summary.scored_queries == 0) throw ConfigError("no query has a relevant index item");
  summary.value = sum / static_cast<double>(summary.scored_queries);
  return summary;
}

bool is_relevant(const RelevantSet& relevant, std::uint32_t id) {
  return std::binary_search(relevant.begin(), relevant.end(), id);
}

}  // namespace

std::vector<Ranking> top_k(const MatrixD& queries, const MatrixD& index, std::size_t k, const TopKOptions& options) {
  if (k == 0) throw ConfigError("k must be positive");
  if (queries.cols() != index.cols()) throw ShapeError("query and index dimensions differ");
  if (options.exclude_self && queries.rows() != index.rows()) {
    throw ShapeError("self-retrieval requires identical query and index sets");
  }
  MatrixD q_unit = queries;
  MatrixD i_unit = index;
  l2_normalize_rows_inplace(q_unit);
  l2_normalize_rows_inplace(i_unit);

  const std::size_t m = index.rows();
  std::vector<Ranking> out(queries.rows());
  parallel_for(queries.rows(), [&](std::size_t q) {
    Ranking all;
    all.reserve(m);
    const auto qr = q_unit.row(q);
    for (std::size_t j = 0; j < m; ++j) {
      if (options.exclude_self && j == q) continue;
      all.push_back({static_cast<std::uint32_t>(j), dot<double>(qr, i_unit.row(j))});
    }
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), ranks_before);
    all.resize(keep);
    out[q] = std::move(all);
  });
  return out;
}

std::optional<double> modified_precision_at_k(std::span<const std::uint32_t> ranking, const RelevantSet& relevant,
                                              std::size_t k) {
  if (relevant.empty()) return std::nullopt;
  const std::size_t depth = std::min(relevant.size(), k);
  std::size_t hits = 0;
  for (std::size_t j = 0; j < std::min(depth, ranking.size()); ++j) hits += is_relevant(relevant, ranking[j]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(depth);
}

std::optional<double> average_precision_at_k(std::span<const std::uint32_t> ranking, const RelevantSet& relevant,
                                             std::size_t k) {
  if (relevant.empty()) return std::nullopt;
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t j = 0; j < std::min(k, ranking.size()); ++j) {
    if (!is_relevant(relevant, ranking[j])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(j + 1);
  }
  return sum / static_cast<double>(std::min(relevant.size(), k));
}

MetricSummary mmp_at_k(std::span<const std::vector<std::uint32_t>> rankings, std::span<const RelevantSet> relevance,
                       std::size_t k) {
  return mean_metric(rankings, relevance, k, [](const auto& r, const auto& rel, std::size_t kk) {
    return modified_precision_at_k(r, rel, kk);
  });
}

MetricSummary map_at_k(std::span<const std::vector<std::uint32_t>> rankings, std::span<const RelevantSet> relevance,
                       std::size_t k) {
  return mean_metric(rankings, relevance, k, [](const auto& r, const auto& rel, std::size_t kk) {
    return average_precision_at_k(r, rel, kk);
  });
}

EvalResult evaluate_embeddings(const MatrixD& index, const DatasetManifest& index_manifest, const MatrixD& queries,
                               const DatasetManifest& query_manifest, const EvalOptions& options) {
  if (index.rows() != index_manifest.size()) throw ShapeError("index manifest does not match index embeddings");
  if (queries.rows() != query_manifest.size()) throw ShapeError("query manifest does not match query embeddings");
  if (queries.rows() == 0) throw ConfigError("empty query set");

  EvalResult result;
  result.k = options.k;
  result.rankings = top_k(queries, index, options.k, {options.self_retrieval});

  std::unordered_map<ClassId, std::vector<std::uint32_t>> by_class;
  for (std::size_t j = 0; j < index_manifest.size(); ++j) {
    by_class[index_manifest.records[j].class_id].push_back(static_cast<std::uint32_t>(j));
  }
  std::vector<RelevantSet> relevance(queries.rows());
  std::vector<std::vector<std::uint32_t>> ids(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    if (const auto it = by_class.find(query_manifest.records[q].class_id); it != by_class.end()) {
      relevance[q] = it->second;
      if (options.self_retrieval) std::erase(relevance[q], static_cast<std::uint32_t>(q));
    }
    ids[q] = ids_of(result.rankings[q]);
  }

  struct Accumulator {
    std::size_t n = 0;
    double mmp = 0.0;
    double map = 0.0;
  };
  std::map<std::string, Accumulator> domains;
  double mmp_sum = 0.0;
  double map_sum = 0.0;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto mp = modified_precision_at_k(ids[q], relevance[q], options.k);
    if (!mp) {
      ++result.excluded_queries;
      continue;
    }
    const double ap = *average_precision_at_k(ids[q], relevance[q], options.k);
    ++result.scored_queries;
    mmp_sum += *mp;
    map_sum += ap;
    auto& acc = domains[query_manifest.records[q].domain];
    ++acc.n;
    acc.mmp += *mp;
    acc.map += ap;
  }
  if (result.scored_queries == 0) throw ConfigError("no query has a relevant index item");
  result.mmp_at_k = mmp_sum / static_cast<double>(result.scored_queries);
  result.map_at_k = map_sum / static_cast<double>(result.scored_queries);
  for (const auto& [name, acc] : domains) {
    const double n = static_cast<double>(acc.n);
    result.per_domain.push_back({name, acc.n, acc.mmp / n, acc.map / n});
  }
  return result;
}

EvalResult evaluate(const ProbeModel& model, const EmbeddingMatrix& index, const DatasetManifest& index_manifest,
                    const EmbeddingMatrix& queries, const DatasetManifest& query_manifest,
                    const EvalOptions& options) {
  const MatrixD index_y = project(model, index.to_double(), ProjectMode::Eval, 0).y;
  const MatrixD query_y = project(model, queries.to_double(), ProjectMode::Eval, 0).y;
  return evaluate_embeddings(index_y, index_manifest, query_y, query_manifest, options);
}

void write_report_tsv(const EvalResult& result, std::ostream& out) {
  const auto k = std::to_string(result.k);
  out << "scope\tqueries\tmMP@" << k << "\tmAP@" << k << '\n';
  out << std::fixed << std::setprecision(6);
  out << "overall\t" << result.scored_queries << '\t' << result.mmp_at_k << '\t' << result.map_at_k << '\n';
  for (const auto& d : result.per_domain) {
    out << "domain:" << (d.domain.empty() ? "-" : d.domain) << '\t' << d.queries << '\t' << d.mmp_at_k << '\t'
        << d.map_at_k << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

void write_per_query_tsv(const EvalResult& result, const DatasetManifest& index_manifest,
                         const DatasetManifest& query_manifest, std::ostream& out) {
  out << std::setprecision(9);
  for (std::size_t q = 0; q < result.rankings.size(); ++q) {
    out << query_manifest.records.at(q).sample_id;
    for (std::size_t r = 0; r < result.rankings[q].size(); ++r) {
      const auto& n = result.rankings[q][r];
      out << '\t' << (r + 1) << '\t' << index_manifest.records.at(n.index_id).sample_id << '\t' << n.score;
    }
    out << '\n';
  }
}

}  // namespace unifex
