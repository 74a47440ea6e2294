#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace fusim {

// Error taxonomy, mapped to CLI exit codes: ConfigError/UsageError -> 1,
// DataError -> 2, everything else (incl. ShapeError) -> 3.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::uint64_t splitmix64(std::uint64_t x);

// Named sub-seed derivation. All randomness in the artifact flows from one
// base seed through tagged streams ("dataset", "init/head", "shuffle/3", ...)
// so that independent stages never share or reorder draws.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

// Deterministic RNG wrapper. Distribution transforms are hand-rolled on top
// of mt19937_64 because the std distributions are implementation-defined and
// would break cross-toolchain reproducibility of datasets and inits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller, second value cached.
  double gaussian();

  // Uniform index in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Shortest-round-trip decimal text for a double ("%.17g"): parsing the string
// back yields the identical bit pattern, and identical values always print
// identically, which is what the byte-stable report files rely on.
std::string fmt_double(double v);
double parse_double(const std::string& s);

// Hex-float text ("%a") for parameter files; exact by construction.
std::string fmt_hex_double(double v);
double parse_hex_double(const std::string& s);

std::vector<std::string> split_ws(const std::string& line);

// FNV-1a 64 over bytes, rendered as 16 hex chars by hash_hex.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::string_view bytes);

}  // namespace fusim
