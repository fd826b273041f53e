#pragma once

#include <cstdint>

#include "mtpd/tensor.hpp"

namespace mtpd {

inline constexpr double half_max = 65504.0;

/// Nearest IEEE-754 binary16 value (ties to even), returned in double.
/// Finite values beyond the binary16 range saturate to +-65504; NaN passes through.
double round_to_half(double x);

/// Elementwise round_to_half. The result is off the tape.
Tensor to_half_precision(const Tensor& x);

/// Decodes a raw binary16 bit pattern.
double half_bits_to_double(std::uint16_t bits);

}  // namespace mtpd
