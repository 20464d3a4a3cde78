#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace apsdirac {

using Complex = std::complex<double>;
using Vec = Eigen::VectorXcd;
using RVec = Eigen::VectorXd;
using Mat = Eigen::MatrixXcd;
using SpinMat = Eigen::Matrix2cd;
using SpinVec = Eigen::Vector2cd;

inline constexpr double pi = 3.14159265358979323846;

// Time-dependent field: t -> values over the mesh (size 2 * nodes).
using SourceFn = std::function<Eigen::VectorXcd(double)>;

// Error taxonomy mirrored by the CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AssumptionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct KernelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AssertionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double wrap_angle(double dtheta) {
  while (dtheta > pi) dtheta -= 2 * pi;
  while (dtheta < -pi) dtheta += 2 * pi;
  return dtheta;
}

inline std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(n);
  const double h = (n > 1) ? (b - a) / (n - 1) : 0.0;
  for (int i = 0; i < n; ++i) v[i] = a + i * h;
  if (n > 1) v[n - 1] = b;
  return v;
}

// Rotate a vector so its largest-magnitude entry is real and positive.
// Used to pin eigenvector phases so spectral data is reproducible.
inline void fix_phase(Eigen::Ref<Vec> v) {
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double m = std::abs(v[i]);
    if (m > best + 1e-14) {
      best = m;
      imax = i;
    }
  }
  if (best <= 0.0) return;
  const Complex z = v[imax] / best;
  v /= z;
}

inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a_mix(std::uint64_t h, double x) {
  return fnv1a(&x, sizeof(x), h);
}
inline std::uint64_t fnv1a_mix(std::uint64_t h, std::int64_t x) {
  return fnv1a(&x, sizeof(x), h);
}

// Runs fn(i) for i in [0, n). Serial unless parallel is requested; the work
// items must be independent. Results are bit-identical either way because
// each item writes to its own slot.
inline void for_each_index(int n, bool parallel,
                           const std::function<void(int)>& fn) {
  if (!parallel || n < 2) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  const int hw = static_cast<int>(std::thread::hardware_concurrency());
  const int nthreads = std::max(1, std::min(n, hw > 0 ? hw : 2));
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t]() {
      for (int i = t; i < n; i += nthreads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace apsdirac
