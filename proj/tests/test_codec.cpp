#include <doctest.h>

#include <string>

#include "kmerspace/coordcodec.hpp"

using namespace kmerspace;

namespace {

std::string digit_string(const DigitCode& dc) {
  std::string s;
  for (auto d : dc.digits) s += static_cast<char>('0' + d);
  return s;
}

// Smallest n with b^n > L, by repeated multiplication.
std::size_t digits_by_multiplication(std::uint64_t L, std::uint64_t b) {
  std::size_t n = 0;
  unsigned __int128 p = 1;
  while (p <= L) {
    p *= b;
    ++n;
  }
  return n;
}

}  // namespace

TEST_CASE("digit counts") {
  CHECK(num_digits(20000, 2) == 15);
  CHECK(num_digits(4641652, 3) == digits_by_multiplication(4641652, 3));
  CHECK(num_digits(4641652, 3) == 14);
  CHECK(num_digits(4641652, 2) == 23);
  for (std::uint64_t L : {1ULL, 2ULL, 3ULL, 8ULL, 9ULL, 10ULL, 999ULL, 1000ULL, 1ULL << 40})
    for (std::uint32_t b : {2u, 3u, 10u, 16u}) CHECK(num_digits(L, b) == digits_by_multiplication(L, b));
  CHECK_THROWS(num_digits(10, 1));
}

TEST_CASE("encoding examples") {
  CHECK(digit_string(encode_coordinate(20000, 2, 20000)) == "100111000100000");
  CHECK(digit_string(encode_coordinate(20000, 3, 20000)) == "1000102202");
  CHECK(digit_string(encode_coordinate(0, 10, 999)) == "000");
  CHECK(encode_coordinate(5, 2, 8).digits.size() == 4);
  CHECK_THROWS(encode_coordinate(-1, 2, 8));
  CHECK_THROWS(decode_digits(DigitCode{3, 100, {0, 3, 1, 0, 0}}));
  auto oh = one_hot_digits(encode_coordinate(5, 3, 20));
  CHECK(oh == std::vector<std::uint8_t>{1, 0, 0, 0, 1, 0, 0, 0, 1});  // 5 = 012 in base 3
}

TEST_CASE("exhaustive round trip") {
  for (std::uint32_t b : {2u, 3u, 10u})
    for (long long c = 0; c < 100000; ++c) {
      const DigitCode dc = encode_coordinate(c, b, 100000);
      if (decode_digits(dc) != static_cast<std::uint64_t>(c)) {
        FAIL("round trip failed at c=" << c << " b=" << b);
      }
    }
}
