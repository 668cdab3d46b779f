#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "unifex/matrix.hpp"

namespace unifex {

using ClassId = std::uint32_t;

/// N x D matrix of single-precision embeddings, one row per sample.
///
/// Every value is finite; construction rejects NaN/Inf with DataError.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  /// Zero-filled N x D matrix.
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data);
  explicit EmbeddingMatrix(Matrix<float> values);

  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t dim() const noexcept { return values_.cols(); }

  std::span<const float> row(std::size_t i) const noexcept { return values_.row(i); }
  std::span<const float> values() const noexcept { return values_.values(); }
  const Matrix<float>& matrix() const noexcept { return values_; }

  /// Widens to double for the numeric pipeline.
  MatrixD to_double() const;
  /// Narrows a double matrix; values must be finite and representable.
  static EmbeddingMatrix from_double(const MatrixD& values);

  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  Matrix<float> values_;
};

/// EMB1 reader/writer. Layout: "EMB1", u32 N, u32 D, u8 dtype (0x01 = f32),
/// 3 reserved zero bytes, then N*D little-endian float32 values, row-major.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

inline constexpr std::uint8_t kDtypeFloat32 = 0x01;

struct NormalizedRows {
  EmbeddingMatrix matrix;
  /// Rows whose norm was zero; they are left as zero rows.
  std::vector<std::size_t> zero_rows;
};

NormalizedRows l2_normalize_rows(const EmbeddingMatrix& matrix);

/// In-place row normalization of a double matrix; returns the original norms.
std::vector<double> l2_normalize_rows_inplace(MatrixD& matrix);

enum class Split { Train, Index, Query };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view text);

struct ManifestRecord {
  std::string sample_id;
  ClassId class_id = 0;
  Split split = Split::Train;
  std::string domain;

  friend bool operator==(const ManifestRecord&, const ManifestRecord&) = default;
};

/// Per-sample records. Record i describes row i of the paired EmbeddingMatrix.
struct DatasetManifest {
  std::vector<ManifestRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  /// Records at the given positions, in the given order.
  DatasetManifest select(std::span<const std::size_t> indices) const;
  /// Positions of records with the given split, ascending.
  std::vector<std::size_t> indices_of(Split split) const;
  std::vector<ClassId> class_ids() const;
  /// Number of classes if ids were dense: max id + 1 (0 when empty).
  std::size_t class_id_bound() const noexcept;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Tab-separated manifest: sample_id, class_id, split, domain. Empty lines are
/// skipped. Duplicate sample ids are accepted and reported through warn().
DatasetManifest load_manifest(const std::filesystem::path& path);
DatasetManifest parse_manifest(std::string_view text);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
std::string format_manifest(const DatasetManifest& manifest);

/// Per-class sample counts. n_min ranges over non-empty classes only.
struct ClassStats {
  std::vector<std::size_t> counts;
  std::size_t n_min = 0;
  std::size_t n_max = 0;

  static ClassStats from_counts(std::vector<std::size_t> counts);
  static ClassStats from_manifest(const DatasetManifest& manifest);
};

/// Throws ShapeError unless the manifest has exactly one record per matrix row.
void check_paired(const EmbeddingMatrix& matrix, const DatasetManifest& manifest);

}  // namespace unifex
