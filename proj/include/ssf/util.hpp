#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ssf {

/// Raised when an input file or payload does not match its declared shape.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces or receives non-finite values.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic random generator with fixed algorithms for uniform and
/// normal draws, so streams do not depend on the standard library build.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // warm up so nearby seeds decorrelate
    for (int i = 0; i < 4; ++i) detail::splitmix64(state_);
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    // modulo bias is negligible for n << 2^64
    return next_u64() % n;
  }

  /// Standard normal via Box-Muller; caches the spare draw.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  /// Derive an independent stream (e.g. one per worker or per cell).
  Rng fork(std::uint64_t salt) {
    std::uint64_t s = state_ ^ (0x9e3779b97f4a7c15ULL * (salt + 1));
    return Rng(s);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// FNV-1a over a byte string; used to stamp outputs with a config hash.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// --- little-endian binary payload IO (float32) ---

inline void write_f32_payload(const std::string& path,
                              const std::vector<float>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!out) throw DataError("short write: " + path);
}

inline std::vector<float> read_f32_payload(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open: " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(float) != 0)
    throw DataError("payload length not a multiple of 4 bytes: " + path);
  std::vector<float> data(bytes / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw DataError("short read: " + path);
  return data;
}

inline void write_f64_payload(const std::string& path,
                              const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!out) throw DataError("short write: " + path);
}

inline std::vector<double> read_f64_payload(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw DataError("cannot open: " + path);
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes % sizeof(double) != 0)
    throw DataError("payload length not a multiple of 8 bytes: " + path);
  std::vector<double> data(bytes / sizeof(double));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw DataError("short read: " + path);
  return data;
}

/// Static-partition parallel loop. Work items must be independent; results
/// keyed by index so the reduction order is deterministic.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned jobs = 0) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  jobs = std::min<std::size_t>(jobs, n);
  std::vector<std::thread> workers;
  workers.reserve(jobs);
  for (unsigned w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += jobs) fn(i);
    });
  }
  for (auto& t : workers) t.join();
}

}  // namespace ssf
