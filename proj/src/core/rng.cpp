#include "imu2emg/core/rng.hpp"

#include <cmath>
#include <numbers>

namespace imu2emg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t RngState::next_u64() {
  const std::uint64_t key = splitmix64(seed_);
  return splitmix64(key ^ splitmix64(counter_++ + 0x632BE59BD9B4E019ULL));
}

double RngState::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::normal() {
  double u1 = uniform();
  const double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngState::below(std::uint64_t n) {
  if (n <= 1) return 0;
  // Rejection keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

RngState RngState::fork(std::uint64_t stream) const {
  return RngState(splitmix64(seed_ ^ splitmix64(stream * 0xD1342543DE82EF95ULL + 1)));
}

}  // namespace imu2emg
