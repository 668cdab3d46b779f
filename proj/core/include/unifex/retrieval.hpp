#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unifex/data_model.hpp"
#include "unifex/matrix.hpp"
#include "unifex/probe.hpp"

namespace unifex {

struct Neighbor {
  std::uint32_t index_id = 0;
  double score = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

using Ranking = std::vector<Neighbor>;

struct TopKOptions {
  /// Self-retrieval: query i and index row i are the same sample; skip that pair.
  bool exclude_self = false;
};

/// Exact cosine top-k. Rows are normalized internally (zero rows score 0 against
/// everything). Sorted by descending score, ties by ascending index id; k is capped at M.
std::vector<Ranking> top_k(const MatrixD& queries, const MatrixD& index, std::size_t k,
                           const TopKOptions& options = {});

/// Relevant index ids for one query, sorted ascending.
using RelevantSet = std::vector<std::uint32_t>;

struct MetricSummary {
  double value = 0.0;
  std::size_t scored_queries = 0;
  /// Queries with no relevant index item; left out of the mean.
  std::size_t excluded_queries = 0;
};

/// Precision over the first min(n_q, k) retrieved items; nullopt when n_q == 0.
std::optional<double> modified_precision_at_k(std::span<const std::uint32_t> ranking, const RelevantSet& relevant,
                                              std::size_t k);
/// AP@k = (1 / min(n_q, k)) * sum_{j<=k} P(j) rel(j); nullopt when n_q == 0.
std::optional<double> average_precision_at_k(std::span<const std::uint32_t> ranking, const RelevantSet& relevant,
                                             std::size_t k);

/// Mean over queries of modified_precision_at_k. Empty input raises ConfigError.
MetricSummary mmp_at_k(std::span<const std::vector<std::uint32_t>> rankings, std::span<const RelevantSet> relevance,
                       std::size_t k = 5);
MetricSummary map_at_k(std::span<const std::vector<std::uint32_t>> rankings, std::span<const RelevantSet> relevance,
                       std::size_t k = 5);

struct DomainMetric {
  std::string domain;
  std::size_t queries = 0;
  double mmp_at_k = 0.0;
  double map_at_k = 0.0;
};

struct EvalOptions {
  std::size_t k = 5;
  /// Index and queries are the same set; each query's own row is not retrieved
  /// and does not count as relevant.
  bool self_retrieval = false;
};

struct EvalResult {
  std::size_t k = 5;
  std::vector<Ranking> rankings;
  double mmp_at_k = 0.0;
  double map_at_k = 0.0;
  std::size_t scored_queries = 0;
  std::size_t excluded_queries = 0;
  /// Sorted by domain name.
  std::vector<DomainMetric> per_domain;
};

/// Relevance is class equality between query and index records.
EvalResult evaluate_embeddings(const MatrixD& index, const DatasetManifest& index_manifest, const MatrixD& queries,
                               const DatasetManifest& query_manifest, const EvalOptions& options = {});

/// Projects both sets through the probe in eval mode, then evaluate_embeddings.
EvalResult evaluate(const ProbeModel& model, const EmbeddingMatrix& index, const DatasetManifest& index_manifest,
                    const EmbeddingMatrix& queries, const DatasetManifest& query_manifest,
                    const EvalOptions& options = {});

/// Tab-separated report: header, an "overall" row, then one row per domain.
void write_report_tsv(const EvalResult& result, std::ostream& out);
/// One line per query: query sample id, then rank, index sample id, score for each neighbor.
void write_per_query_tsv(const EvalResult& result, const DatasetManifest& index_manifest,
                         const DatasetManifest& query_manifest, std::ostream& out);

}  // namespace unifex
