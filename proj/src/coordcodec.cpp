#include "kmerspace/coordcodec.hpp"

#include <iostream>
#include <stdexcept>
#include <string>

namespace kmerspace {

std::size_t num_digits(std::uint64_t L, std::uint32_t base) {
  if (base < 2) throw std::invalid_argument("digit base must be >= 2");
  if (L < 1) throw std::invalid_argument("coordinate space size must be >= 1");
  std::size_t n = 1;
  std::uint64_t v = L;
  while (v >= base) {
    v /= base;
    ++n;
  }
  return n;
}

DigitCode encode_coordinate(long long c, std::uint32_t base, std::uint64_t L) {
  if (c < 0) throw std::invalid_argument("coordinate must be non-negative, got " + std::to_string(c));
  const std::size_t n = num_digits(L, base);
  DigitCode dc{base, L, std::vector<std::uint32_t>(n, 0)};
  auto v = static_cast<std::uint64_t>(c);
  for (std::size_t i = n; i-- > 0;) {
    dc.digits[i] = static_cast<std::uint32_t>(v % base);
    v /= base;
  }
  if (v != 0)
    throw std::invalid_argument("coordinate " + std::to_string(c) + " not representable with " + std::to_string(n) +
                                " base-" + std::to_string(base) + " digits");
  if (static_cast<std::uint64_t>(c) >= L)
    std::cerr << "warning: coordinate " << c << " >= coordinate space " << L << '\n';
  return dc;
}

std::uint64_t decode_digits(const DigitCode& dc) {
  if (dc.base < 2) throw std::invalid_argument("digit base must be >= 2");
  std::uint64_t v = 0;
  for (std::uint32_t d : dc.digits) {
    if (d >= dc.base)
      throw std::invalid_argument("digit " + std::to_string(d) + " out of range for base " + std::to_string(dc.base));
    v = v * dc.base + d;
  }
  return v;
}

std::vector<std::uint8_t> one_hot_digits(const DigitCode& dc) {
  std::vector<std::uint8_t> m(dc.digits.size() * dc.base, 0);
  for (std::size_t n = 0; n < dc.digits.size(); ++n) {
    if (dc.digits[n] >= dc.base) throw std::invalid_argument("digit out of range");
    m[n * dc.base + dc.digits[n]] = 1;
  }
  return m;
}

}  // namespace kmerspace
