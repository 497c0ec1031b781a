#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dmt {

enum class ErrorKind {
  invalid_argument,
  io,
  invalid_utf8,
  line_count_mismatch,
  size_exceeded,
  unknown_language,
  out_of_range,
  shape_mismatch,
  numeric_fault,
  invalid_config,
  format_version,
  fingerprint_mismatch,
  truncated,
  empty_input,
  locked,
};

const char* to_string(ErrorKind kind);

/// Every contract violation surfaced by the library. `kind` lets callers and
/// tests discriminate without parsing messages.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

// 64-bit FNV-1a; used for content fingerprints and seed fan-out.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

/// Derives an independent stream seed from the top-level seed and a fixed stage label.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

/// Seeded random stream. Draws are counted so that the stream position is
/// observable; conversions to reals are done here rather than through
/// <random> distributions so that results do not depend on the standard library.
class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return position_; }

  std::uint64_t next_u64() {
    ++position_;
    return engine_();
  }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t n);
  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t position_ = 0;
  std::mt19937_64 engine_;
};

// Plain-text helpers shared by all file formats: one record per LF-terminated
// line, final newline optional.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);
std::vector<std::string> split_lines(std::string_view contents);
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

std::vector<std::string> split_whitespace(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::string trim(std::string_view text);

/// Round-trippable textual form of a double (17 significant digits).
std::string format_double(double value);
std::string format_fixed(double value, int decimals);

}  // namespace dmt
