#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace msad {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double operator[](int i) const { return i == 0 ? x : i == 1 ? y : z; }
  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : z; }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double c) const { return {x * c, y * c, z * c}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm2() const { return x * x + y * y + z * z; }
  double norm() const { return std::sqrt(norm2()); }
};

// Error taxonomy maps onto CLI exit codes: usage -> 1, runtime -> 2,
// mathematical invariant violation -> 3.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Global worker-thread count for parallel loops. Results are required to be
// bit-identical for any value, so loops may only partition independent
// output elements.
int thread_count();
void set_thread_count(int n);

// Parallel map over [0, n): each index is processed by exactly one worker.
// fn must write only to state owned by its index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// FNV-1a, used for config hashes and output checksums in run manifests.
inline std::uint64_t fnv1a(const void* data, std::size_t len,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}
inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace msad
