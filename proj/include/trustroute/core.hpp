#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace trustroute {

using NodeId = std::uint32_t;
using Slot = std::uint32_t;

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(const Vec3& a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

// Error categories surface as distinct CLI exit codes.
enum class ErrorCategory {
  Domain,
  Safety,
  Invariant,
  Routing,
  Consensus,
  Learning,
  Config,
  Io,
  Usage,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), category_(category), kind_(std::move(kind)) {}

  ErrorCategory category() const noexcept { return category_; }
  const std::string& kind() const noexcept { return kind_; }

 private:
  ErrorCategory category_;
  std::string kind_;
};

#define TRUSTROUTE_DEFINE_ERROR(Name, Category)                                  \
  class Name : public Error {                                                    \
   public:                                                                       \
    explicit Name(const std::string& what) : Error(Category, #Name, what) {}     \
  }

TRUSTROUTE_DEFINE_ERROR(DomainError, ErrorCategory::Domain);
TRUSTROUTE_DEFINE_ERROR(SafetyViolation, ErrorCategory::Safety);
TRUSTROUTE_DEFINE_ERROR(ResampleExhausted, ErrorCategory::Safety);
TRUSTROUTE_DEFINE_ERROR(InvariantBreach, ErrorCategory::Invariant);
TRUSTROUTE_DEFINE_ERROR(NotDelivered, ErrorCategory::Routing);
TRUSTROUTE_DEFINE_ERROR(NoRoute, ErrorCategory::Routing);
TRUSTROUTE_DEFINE_ERROR(Unreachable, ErrorCategory::Routing);
TRUSTROUTE_DEFINE_ERROR(Isolated, ErrorCategory::Routing);
TRUSTROUTE_DEFINE_ERROR(TooFewNodes, ErrorCategory::Consensus);
TRUSTROUTE_DEFINE_ERROR(InvalidAuth, ErrorCategory::Consensus);
TRUSTROUTE_DEFINE_ERROR(NoConsensusReachable, ErrorCategory::Consensus);
TRUSTROUTE_DEFINE_ERROR(NoCandidate, ErrorCategory::Consensus);
TRUSTROUTE_DEFINE_ERROR(BufferTooSmall, ErrorCategory::Learning);
TRUSTROUTE_DEFINE_ERROR(ParseError, ErrorCategory::Config);
TRUSTROUTE_DEFINE_ERROR(ValidationError, ErrorCategory::Config);
TRUSTROUTE_DEFINE_ERROR(IoError, ErrorCategory::Io);
TRUSTROUTE_DEFINE_ERROR(UsageError, ErrorCategory::Usage);

#undef TRUSTROUTE_DEFINE_ERROR

// splitmix64 finalizer, used to derive independent seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Bit-reproducible random stream. Distributions are implemented here rather
// than through <random> adaptors so results do not depend on the standard
// library vendor.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(mix64(seed)) {}

  // Named sub-stream: enabling one feature never shifts another's draws.
  static Rng stream(std::uint64_t master, std::string_view name, std::uint64_t index = 0) {
    return Rng(mix64(master ^ fnv1a(name)) ^ mix64(index + 0x51ED270B27ULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace trustroute
