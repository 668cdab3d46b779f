#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

namespace unifex {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, stream id); the i-th draw of a stream is a
/// pure function of (seed, stream, i), so results do not depend on platform,
/// standard library, or the order in which independent streams are consumed.
/// Normal variates use Box-Muller on top of the uniform draws rather than
/// std::normal_distribution, whose output is implementation defined.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_index(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Raw Philox block function, exposed for known-answer tests.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> counter,
                                            std::array<std::uint32_t, 2> key) noexcept;

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;

  std::uint32_t next_u32() noexcept;
};

/// Stream ids used by the toolkit, so that no two consumers share draws.
namespace streams {
inline constexpr std::uint64_t kClassifierInit = 0x11;
inline constexpr std::uint64_t kProjectionInit = 0x12;
inline constexpr std::uint64_t kZeroShot = 0x13;
inline constexpr std::uint64_t kShuffle = 0x20;
inline constexpr std::uint64_t kDropout = 0x21;
inline constexpr std::uint64_t kCap = 0x30;
inline constexpr std::uint64_t kSubsample = 0x31;

/// Derives a per-item stream id (e.g. one stream per class or per step).
constexpr std::uint64_t sub(std::uint64_t base, std::uint64_t item) noexcept {
  return (base << 48) ^ item;
}
}  // namespace streams

}  // namespace unifex
