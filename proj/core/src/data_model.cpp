#include "unifex/data_model.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "unifex/error.hpp"
#include "unifex/log.hpp"

namespace unifex {
namespace {

constexpr std::size_t kHeaderBytes = 16;

void require_finite(std::span<const float> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw DataError("non-finite embedding value at flat index " + std::to_string(i));
    }
  }
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim) : values_(rows, dim, 0.0f) {
  if (dim == 0) throw ShapeError("embedding dimension must be >= 1");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<float> data)
    : EmbeddingMatrix(Matrix<float>(rows, dim, std::move(data))) {}

EmbeddingMatrix::EmbeddingMatrix(Matrix<float> values) : values_(std::move(values)) {
  if (values_.cols() == 0) throw ShapeError("embedding dimension must be >= 1");
  require_finite(values_.values());
}

MatrixD EmbeddingMatrix::to_double() const {
  MatrixD out(rows(), dim());
  std::copy(values_.values().begin(), values_.values().end(), out.values().begin());
  return out;
}

EmbeddingMatrix EmbeddingMatrix::from_double(const MatrixD& values) {
  std::vector<float> data(values.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double v = values.values()[i];
    if (!std::isfinite(v) || std::abs(v) > std::numeric_limits<float>::max()) {
      throw DataError("value not representable as finite float32");
    }
    data[i] = static_cast<float>(v);
  }
  return EmbeddingMatrix(values.rows(), values.cols(), std::move(data));
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
  std::vector<float> data;
  data.reserve(indices.size() * dim());
  for (const std::size_t i : indices) {
    if (i >= rows()) throw ShapeError("row index out of range");
    const auto r = row(i);
    data.insert(data.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(indices.size(), dim(), std::move(data));
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < kHeaderBytes) throw FormatError("EMB1 header truncated: " + path.string());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.compare(0, 4, "EMB1") != 0) throw FormatError("bad magic in " + path.string());
  const std::uint32_t rows = get_u32(p + 4);
  const std::uint32_t dim = get_u32(p + 8);
  if (p[12] != kDtypeFloat32) throw FormatError("unsupported dtype code " + std::to_string(p[12]));
  if (p[13] != 0 || p[14] != 0 || p[15] != 0) throw FormatError("reserved header bytes must be zero");
  if (dim == 0) throw FormatError("EMB1 dimension must be >= 1");

  const std::uint64_t count = static_cast<std::uint64_t>(rows) * dim;
  const std::uint64_t expected = kHeaderBytes + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError("EMB1 payload truncated: expected " + std::to_string(count) + " values, found " +
                      std::to_string((bytes.size() - kHeaderBytes) / 4));
  }
  if (bytes.size() > expected) throw FormatError("EMB1 payload has trailing bytes");

  std::vector<float> data(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<float>(get_u32(p + kHeaderBytes + 4 * i));
  }
  return EmbeddingMatrix(rows, dim, std::move(data));
}

void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  if (matrix.rows() > std::numeric_limits<std::uint32_t>::max() ||
      matrix.dim() > std::numeric_limits<std::uint32_t>::max()) {
    throw ShapeError("matrix too large for EMB1");
  }
  std::string bytes = "EMB1";
  bytes.reserve(kHeaderBytes + 4 * matrix.values().size());
  put_u32(bytes, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(bytes, static_cast<std::uint32_t>(matrix.dim()));
  bytes.push_back(static_cast<char>(kDtypeFloat32));
  bytes.append(3, '\0');
  for (const float v : matrix.values()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));
  write_file(path, bytes);
}

NormalizedRows l2_normalize_rows(const EmbeddingMatrix& matrix) {
  std::vector<float> data(matrix.values().begin(), matrix.values().end());
  NormalizedRows out;
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    std::span<float> r(data.data() + i * matrix.dim(), matrix.dim());
    double sq = 0.0;
    for (const float v : r) sq += static_cast<double>(v) * v;
    if (sq == 0.0) {
      out.zero_rows.push_back(i);
      continue;
    }
    const double norm = std::sqrt(sq);
    for (float& v : r) v = static_cast<float>(v / norm);
  }
  out.matrix = EmbeddingMatrix(matrix.rows(), matrix.dim(), std::move(data));
  return out;
}

std::vector<double> l2_normalize_rows_inplace(MatrixD& matrix) {
  std::vector<double> norms(matrix.rows());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    auto r = matrix.row(i);
    const double norm = std::sqrt(dot<double>(r, r));
    norms[i] = norm;
    if (norm == 0.0) continue;
    for (double& v : r) v /= norm;
  }
  return norms;
}

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Index: return "index";
    case Split::Query: return "query";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "index") return Split::Index;
  if (text == "query") return Split::Query;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

DatasetManifest DatasetManifest::select(std::span<const std::size_t> indices) const {
  DatasetManifest out;
  out.records.reserve(indices.size());
  for (const std::size_t i : indices) out.records.push_back(records.at(i));
  return out;
}

std::vector<std::size_t> DatasetManifest::indices_of(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<ClassId> DatasetManifest::class_ids() const {
  std::vector<ClassId> out(records.size());
  std::transform(records.begin(), records.end(), out.begin(), [](const auto& r) { return r.class_id; });
  return out;
}

std::size_t DatasetManifest::class_id_bound() const noexcept {
  std::size_t bound = 0;
  for (const auto& r : records) bound = std::max<std::size_t>(bound, std::size_t{r.class_id} + 1);
  return bound;
}

DatasetManifest parse_manifest(std::string_view text) {
  DatasetManifest manifest;
  std::unordered_set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;

    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string_view::npos ? std::string_view::npos : tab - start));
      if (tab == std::string_view::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw FormatError("expected 4 tab-separated fields, found " + std::to_string(fields.size()), line_no);
    }
    if (fields[0].empty()) throw FormatError("empty sample_id", line_no);

    std::int64_t class_id = 0;
    const auto cls = fields[1];
    const auto [ptr, ec] = std::from_chars(cls.data(), cls.data() + cls.size(), class_id);
    if (cls.empty() || ec != std::errc{} || ptr != cls.data() + cls.size()) {
      throw FormatError("class_id is not an integer: '" + std::string(cls) + "'", line_no);
    }
    if (class_id < 0) {
      throw DataError("negative class_id " + std::to_string(class_id) + " (line " + std::to_string(line_no) + ")");
    }
    if (class_id > std::numeric_limits<ClassId>::max()) {
      throw DataError("class_id out of range (line " + std::to_string(line_no) + ")");
    }

    Split split;
    try {
      split = parse_split(fields[2]);
    } catch (const FormatError& e) {
      throw FormatError(e.what(), line_no);
    }

    ManifestRecord record{std::string(fields[0]), static_cast<ClassId>(class_id), split, std::string(fields[3])};
    if (!seen.insert(record.sample_id).second) {
      warn("duplicate sample_id '" + record.sample_id + "' at line " + std::to_string(line_no));
    }
    manifest.records.push_back(std::move(record));
  }
  return manifest;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path));
}

std::string format_manifest(const DatasetManifest& manifest) {
  std::ostringstream out;
  for (const auto& r : manifest.records) {
    out << r.sample_id << '\t' << r.class_id << '\t' << to_string(r.split) << '\t' << r.domain << '\n';
  }
  return out.str();
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  for (const auto& r : manifest.records) {
    if (r.sample_id.find_first_of("\t\n") != std::string::npos ||
        r.domain.find_first_of("\t\n") != std::string::npos) {
      throw DataError("manifest field contains a tab or newline: '" + r.sample_id + "'");
    }
  }
  write_file(path, format_manifest(manifest));
}

ClassStats ClassStats::from_counts(std::vector<std::size_t> counts) {
  ClassStats stats;
  stats.counts = std::move(counts);
  bool any = false;
  for (const std::size_t n : stats.counts) {
    if (n == 0) continue;
    stats.n_min = any ? std::min(stats.n_min, n) : n;
    stats.n_max = std::max(stats.n_max, n);
    any = true;
  }
  return stats;
}

ClassStats ClassStats::from_manifest(const DatasetManifest& manifest) {
  std::vector<std::size_t> counts(manifest.class_id_bound(), 0);
  for (const auto& r : manifest.records) ++counts[r.class_id];
  return from_counts(std::move(counts));
}

void check_paired(const EmbeddingMatrix& matrix, const DatasetManifest& manifest) {
  if (matrix.rows() != manifest.size()) {
    throw ShapeError("manifest has " + std::to_string(manifest.size()) + " records but embedding matrix has " +
                     std::to_string(matrix.rows()) + " rows");
  }
}

}  // namespace unifex
