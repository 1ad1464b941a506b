#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "pat/errors.hpp"

namespace pat {

// Seeded random source. Draws are derived from the raw engine output so a
// stream is reproducible across standard libraries and can be serialized
// into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t raw() { return eng_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * (1.0 / 9007199254740992.0);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) {
    if (n <= 0) throw ContractError("uniform_int requires n >= 1");
    return static_cast<int>(eng_() % static_cast<std::uint64_t>(n));
  }

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<int>(last - first);
    for (int i = n - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

  std::string state() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw ContractError("bad rng state string");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace pat
