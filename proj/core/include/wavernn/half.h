#pragma once

// IEEE 754 binary16 storage. Conversions round to nearest, ties to even.

#include <bit>
#include <cstdint>

#if defined(__F16C__)
#include <immintrin.h>
#endif

namespace wavernn {

namespace detail {

inline std::uint16_t float_to_half_soft(float value) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (bits >> 16) & 0x8000u;
  const std::uint32_t abs = bits & 0x7fffffffu;

  if (abs >= 0x7f800000u) {  // inf or nan
    const std::uint32_t mantissa = abs & 0x7fffffu;
    return static_cast<std::uint16_t>(
        sign | 0x7c00u | (mantissa ? 0x200u | (mantissa >> 13) : 0u));
  }
  if (abs >= 0x477ff000u) {  // rounds to >= 65520, overflow to inf
    return static_cast<std::uint16_t>(sign | 0x7c00u);
  }
  if (abs < 0x38800000u) {  // subnormal half (or zero)
    if (abs < 0x33000000u) {  // below half of the smallest subnormal
      return static_cast<std::uint16_t>(sign);
    }
    const std::uint32_t exponent = abs >> 23;
    const std::uint32_t mantissa = (abs & 0x7fffffu) | 0x800000u;
    const std::uint32_t shift = 126u - exponent;  // 14..24
    std::uint32_t half = mantissa >> shift;
    const std::uint32_t remainder = mantissa & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1u);
    if (remainder > halfway || (remainder == halfway && (half & 1u))) {
      ++half;
    }
    return static_cast<std::uint16_t>(sign | half);
  }
  // Normal range: rebias exponent from 127 to 15 and round 13 dropped bits.
  std::uint32_t half = (abs - 0x38000000u) >> 13;
  const std::uint32_t remainder = abs & 0x1fffu;
  if (remainder > 0x1000u || (remainder == 0x1000u && (half & 1u))) {
    ++half;  // a carry into the exponent is the correct result
  }
  return static_cast<std::uint16_t>(sign | half);
}

inline float half_to_float_soft(std::uint16_t half) {
  const std::uint32_t sign = static_cast<std::uint32_t>(half & 0x8000u) << 16;
  const std::uint32_t exponent = (half >> 10) & 0x1fu;
  std::uint32_t mantissa = half & 0x3ffu;
  std::uint32_t bits = 0;
  if (exponent == 0x1fu) {
    bits = sign | 0x7f800000u | (mantissa << 13);
  } else if (exponent != 0) {
    bits = sign | ((exponent + 112u) << 23) | (mantissa << 13);
  } else if (mantissa != 0) {
    std::uint32_t e = 113;
    while ((mantissa & 0x400u) == 0) {
      mantissa <<= 1;
      --e;
    }
    bits = sign | (e << 23) | ((mantissa & 0x3ffu) << 13);
  } else {
    bits = sign;
  }
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline std::uint16_t float_to_half(float value) {
#if defined(__F16C__)
  return static_cast<std::uint16_t>(
      _cvtss_sh(value, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC));
#else
  return detail::float_to_half_soft(value);
#endif
}

inline float half_to_float(std::uint16_t half) {
#if defined(__F16C__)
  return _cvtsh_ss(half);
#else
  return detail::half_to_float_soft(half);
#endif
}

// Value after a trip through 16-bit storage.
inline float round_to_half(float value) {
  return half_to_float(float_to_half(value));
}

}  // namespace wavernn
