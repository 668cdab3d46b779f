#pragma once

#include <filesystem>

#include "unifex/probe.hpp"

namespace unifex {

/// PRB1 checkpoint, little-endian:
///   0  "PRB1"
///   4  u32 D_in, u32 E (= 64), u32 C, u32 K
///   20 u8 dtype (0x02 = float64), u8 loss variant, 2 reserved zero bytes
///   24 i64 training step
///   32 f64 dropout, m, s, m_min, m_max, curricular_alpha, adaface_h, adaface_ema, adaface_eps
///   104 u8 adacos_dynamic, 7 reserved zero bytes
///   112 f64 W_proj (D_in x E, row-major), f64 b_proj (E), f64 classifier (C*K x E)
void save_checkpoint(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint8_t kDtypeFloat64 = 0x02;

}  // namespace unifex
