#ifndef NEUROALIGN_UTIL_HPP
#define NEUROALIGN_UTIL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace neuroalign {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input text. `line()` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// A value violated a documented precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Numerical failure (singular systems, non-finite losses).
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Deterministic random source. Uniform and normal draws are computed here
/// rather than through <random> distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  /// Independent stream for (seed, counter); used for order-free parallelism.
  static Rng stream(std::uint64_t seed, std::uint64_t counter);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// 64-bit FNV-1a. Used for stable content hashes recorded in manifests.
std::uint64_t fnv1a(std::string_view data, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_whitespace(std::string_view s);
std::string to_lower_ascii(std::string_view s);

/// Quotes a field for RFC-4180 CSV when needed.
std::string csv_field(std::string_view s);

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads. Work items must be
/// independent; callers gather results by index so output order is fixed.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn);

}  // namespace neuroalign

#include "neuroalign/detail/parallel.hpp"

#endif  // NEUROALIGN_UTIL_HPP
