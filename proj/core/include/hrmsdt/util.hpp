#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hrmsdt {

// Error categories map onto CLI exit codes: validation=1, diagnostic=2, io=3.
enum class ErrorKind { validation = 1, diagnostic = 2, io = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& msg) { return Error(ErrorKind::validation, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::io, msg); }
inline Error diagnostic_error(const std::string& msg) { return Error(ErrorKind::diagnostic, msg); }

// Shortest decimal form that round-trips the exact double value.
std::string format_double(double x);

// FNV-1a 64-bit content hash, hex-encoded; used by run manifests.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::string hash_file_hex(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

// Sample quantile with linear interpolation between order statistics
// (R type-7). q in [0,1]; input need not be sorted.
double quantile(std::vector<double> values, double q);

double mean_of(std::span<const double> values);
double sample_variance(std::span<const double> values);

// Pearson correlation via centered two-pass sums. Returns NaN when either
// input has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

}  // namespace hrmsdt
