#include "unifex/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <string>

#include "unifex/error.hpp"

namespace unifex {
namespace {

constexpr std::size_t kHeaderBytes = 112;

class Writer {
 public:
  void bytes(std::string_view b) { out_.append(b); }
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (const double v : vs) f64(v);
  }
  const std::string& str() const { return out_; }

 private:
  void put(std::uint64_t v, int n) {
    for (int b = 0; b < n; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xFFu));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  std::string_view take(std::size_t n) {
    if (data_.size() - pos_ < n) throw FormatError("PRB1 checkpoint truncated");
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    const auto s = take(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[b])) << (8 * b);
    return v;
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) throw ShapeError(std::string(what) + " too large for PRB1");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

void save_checkpoint(const ProbeModel& model, const std::filesystem::path& path) {
  model.validate();
  Writer w;
  w.bytes("PRB1");
  w.u32(checked_u32(model.input_dim(), "input dim"));
  w.u32(checked_u32(kProjectionDim, "output dim"));
  w.u32(checked_u32(model.classifier.classes(), "class count"));
  w.u32(checked_u32(model.classifier.subcenters(), "sub-center count"));
  w.u8(kDtypeFloat64);
  w.u8(static_cast<std::uint8_t>(model.loss.variant));
  w.u8(0);
  w.u8(0);
  w.u64(static_cast<std::uint64_t>(model.step));
  const LossConfig& l = model.loss;
  for (const double v : {model.dropout_rate, l.m, l.s, l.m_min, l.m_max, l.curricular_alpha, l.adaface_h,
                         l.adaface_ema, l.adaface_eps}) {
    w.f64(v);
  }
  w.u8(l.adacos_dynamic ? 1 : 0);
  for (int i = 0; i < 7; ++i) w.u8(0);
  w.f64s(model.w_proj.values());
  w.f64s(model.b_proj);
  w.f64s(model.classifier.rows().values());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ProbeModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < kHeaderBytes) throw FormatError("PRB1 header truncated: " + path.string());
  Reader r(bytes);
  if (r.take(4) != "PRB1") throw FormatError("bad magic in " + path.string());
  const std::uint32_t d_in = r.u32();
  const std::uint32_t e = r.u32();
  const std::uint32_t classes = r.u32();
  const std::uint32_t subs = r.u32();
  if (r.u8() != kDtypeFloat64) throw FormatError("unsupported PRB1 dtype");
  const std::uint8_t variant = r.u8();
  if (variant >= std::size(kAllLossVariants)) throw FormatError("unknown loss variant code");
  if (r.u8() != 0 || r.u8() != 0) throw FormatError("reserved header bytes must be zero");
  if (e != kProjectionDim) throw FormatError("PRB1 output dim must be 64");
  if (d_in == 0 || classes == 0 || subs == 0) throw FormatError("PRB1 dimensions must be positive");

  ProbeModel model;
  model.step = static_cast<std::int64_t>(r.u64());
  model.dropout_rate = r.f64();
  LossConfig& l = model.loss;
  l.variant = static_cast<LossVariant>(variant);
  l.k = subs;
  for (double* field : {&l.m, &l.s, &l.m_min, &l.m_max, &l.curricular_alpha, &l.adaface_h, &l.adaface_ema,
                        &l.adaface_eps}) {
    *field = r.f64();
  }
  l.adacos_dynamic = r.u8() != 0;
  r.take(7);

  const std::uint64_t payload = (static_cast<std::uint64_t>(d_in) * e + e + std::uint64_t{classes} * subs * e) * 8;
  if (r.remaining() != payload) throw FormatError("PRB1 payload size mismatch");
  model.w_proj = MatrixD(d_in, e);
  r.f64s(model.w_proj.values());
  model.b_proj.assign(e, 0.0);
  r.f64s(model.b_proj);
  MatrixD rows(std::size_t{classes} * subs, e);
  r.f64s(rows.values());
  model.classifier = ClassifierWeights(classes, subs, std::move(rows));
  model.validate();
  return model;
}

}  // namespace unifex
