#pragma once

#include "lagcoder/bundle.hpp"
#include "lagcoder/rng.hpp"
#include "lagcoder/synth.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <string>
#include <unistd.h>

namespace lagcoder::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "lagcoder") {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline MatrixD gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Rng rng(seed);
  MatrixD m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = standard_normal(rng);
  }
  return m;
}

inline VectorD gaussian_vector(Eigen::Index n, std::uint64_t seed) { return gaussian_matrix(n, 1, seed).col(0); }

/// Small planted spec for fast tests: few words, layers and dimensions.
inline SynthSpec small_spec(std::uint64_t seed = 7) {
  SynthSpec s;
  s.n_words = 300;
  s.n_layers = 6;
  s.dim = 12;
  s.static_dim = 10;
  s.vocab_size = 80;
  s.sample_rate = 100.0;
  s.rois = {SynthRoiSpec{Roi::IFG, 3, SynthDriver::Contextual, 20.0, 100.0, 1.0, 0.0}};
  s.seed = seed;
  return s;
}

}  // namespace lagcoder::testing
