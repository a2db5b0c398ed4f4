#pragma once

#include <cstdint>
#include <vector>

namespace kmerspace {

/// Base-b positional numeral of a coordinate, most significant digit first.
struct DigitCode {
  std::uint32_t base = 2;
  std::uint64_t L = 1;
  std::vector<std::uint32_t> digits;

  bool operator==(const DigitCode&) const = default;
};

/// floor(log_b(L)) + 1, computed with integer arithmetic only.
std::size_t num_digits(std::uint64_t L, std::uint32_t base);

DigitCode encode_coordinate(long long c, std::uint32_t base, std::uint64_t L);

std::uint64_t decode_digits(const DigitCode& dc);

/// Row n has a 1 in column digits[n]; shape N_b x b, row-major.
std::vector<std::uint8_t> one_hot_digits(const DigitCode& dc);

}  // namespace kmerspace
