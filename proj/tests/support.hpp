#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "oadp/random.hpp"
#include "oadp/tensor.hpp"

namespace testing {

inline oadp::Tensor random_tensor(oadp::Rng& rng, oadp::Shape shape, double lo = -1.0,
                                  double hi = 1.0) {
  oadp::Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

inline oadp::Vec random_vec(oadp::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  oadp::Vec v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const oadp::Tensor& a, const oadp::Tensor& b) {
  return max_abs_diff(a.data(), b.data());
}

// Fresh directory under the system temp path, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("oadp_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path operator/(const std::string& name) const { return path / name; }
};

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

}  // namespace testing
