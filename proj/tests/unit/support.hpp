#pragma once
// Oracles and fixtures shared by the unit tests. Everything here is written
// independently of the library code it checks.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tetradat/image.hpp"
#include "tetradat/model.hpp"
#include "tetradat/tt.hpp"

namespace testing {

using namespace tetradat;

// Entry of a TT-tensor by explicit summation over every rank-index tuple
// (alpha_1, ..., alpha_{d-1}); exponential in d, fine for tiny tensors.
inline double dense_entry(const TTTensor& t, const std::vector<int>& n) {
  const auto ranks = t.ranks();
  const std::size_t d = t.dim();
  std::vector<std::size_t> alpha(d + 1, 0);
  double total = 0.0;
  while (true) {
    double prod = 1.0;
    for (std::size_t i = 0; i < d; ++i)
      prod *= t.core(i)(alpha[i], static_cast<std::size_t>(n[i]), alpha[i + 1]);
    total += prod;
    // odometer over alpha[1..d-1]
    std::size_t k = 1;
    for (; k < d; ++k) {
      if (++alpha[k] < ranks[k]) break;
      alpha[k] = 0;
    }
    if (k >= d) break;
  }
  return total;
}

// All multi-indices in row-major order (last index fastest).
inline std::vector<std::vector<int>> all_indices(const std::vector<std::size_t>& modes) {
  std::vector<std::vector<int>> out;
  std::vector<int> n(modes.size(), 0);
  while (true) {
    out.push_back(n);
    std::size_t k = modes.size();
    while (k-- > 0) {
      if (++n[k] < static_cast<int>(modes[k])) break;
      n[k] = 0;
      if (k == 0) return out;
    }
    if (modes.empty()) return out;
  }
}

inline std::vector<double> dense_tensor(const TTTensor& t) {
  std::vector<double> v;
  for (const auto& n : all_indices(t.mode_sizes())) v.push_back(dense_entry(t, n));
  return v;
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max(std::abs(b), 1e-300);
}

inline Image random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Image img(h, w);
  for (double& x : img.values()) x = u(rng);
  return img;
}

// Softmax over a single linear layer with seeded weights.
inline DenseClassifier linear_model(std::size_t h, std::size_t w, std::size_t classes,
                                    std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  DenseLayer layer{Eigen::MatrixXd(classes, h * w * 3), Eigen::VectorXd(classes)};
  for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = g(rng);
  for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = g(rng);
  return DenseClassifier(h, w, {layer});
}

inline std::filesystem::path data_dir() { return TETRADAT_DATA_DIR; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tetradat_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
