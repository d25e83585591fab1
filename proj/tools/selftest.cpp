#include "selftest.hpp"

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <vector>

#include "tetradat/attack.hpp"
#include "tetradat/desk.hpp"
#include "tetradat/hsv.hpp"
#include "tetradat/protes.hpp"
#include "tetradat/tt.hpp"

namespace tetradat::tools {

namespace {

bool dense_check() {
  const std::size_t modes[] = {3, 2, 4};
  const auto t = tt_random_nonneg(modes, 3, 11);
  const auto full = tt_full(t);
  std::size_t flat = 0;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 4; ++c, ++flat) {
        const int idx[] = {a, b, c};
        if (std::abs(tt_get(t, idx) - full[flat]) > 1e-12 * std::abs(full[flat]))
          return false;
      }
  return true;
}

bool gradient_check() {
  const std::size_t modes[] = {3, 3, 3};
  auto t = tt_random_nonneg(modes, 2, 5);
  const std::vector<MultiIndex> batch{{0, 1, 2}, {2, 2, 0}};
  const auto grad = tt_log_likelihood_grad(t, batch);
  const double h = 1e-6;
  for (std::size_t i = 0; i < t.dim(); ++i) {
    auto data = t.core(i).data();
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double saved = data[j];
      data[j] = saved + h;
      const double up = tt_log_likelihood(t, batch);
      data[j] = saved - h;
      const double down = tt_log_likelihood(t, batch);
      data[j] = saved;
      const double fd = (up - down) / (2 * h);
      const double g = grad[i].data()[j];
      if (std::abs(fd - g) > 1e-5 * std::max(1.0, std::abs(fd))) return false;
    }
  }
  return true;
}

bool sampling_check() {
  const std::size_t modes[] = {2, 3};
  const auto t = tt_random_nonneg(modes, 2, 3);
  const auto full = tt_full(t);
  double total = 0.0;
  for (double v : full) total += v;
  Rng rng(1);
  const std::size_t n = 20000;
  std::vector<double> freq(full.size(), 0.0);
  for (const auto& s : tt_sample(t, n, rng)) freq[s[0] * 3 + s[1]] += 1.0 / n;
  double tv = 0.0;
  for (std::size_t i = 0; i < full.size(); ++i) tv += std::abs(freq[i] - full[i] / total);
  return tv / 2 < 0.03;
}

bool hsv_check() {
  for (int r = 0; r <= 16; ++r)
    for (int g = 0; g <= 16; ++g)
      for (int b = 0; b <= 16; ++b) {
        const Rgb in{r / 16.0, g / 16.0, b / 16.0};
        const auto out = hsv_to_rgb(rgb_to_hsv(in));
        for (int c = 0; c < 3; ++c)
          if (std::abs(out[c] - in[c]) > 1e-9) return false;
      }
  return true;
}

bool protes_check() {
  const std::size_t modes[] = {5, 5};
  Objective f = [](std::span<const MultiIndex> batch) {
    std::vector<double> y;
    for (const auto& n : batch)
      y.push_back(std::pow(n[0] - 1, 2) + std::pow(n[1] - 2, 2));
    return y;
  };
  const auto res = protes_minimize(modes, f, 2000, ProtesConfig{});
  return res.state.best_value && *res.state.best_value == 0.0;
}

bool desk_check(const std::string& weights) {
  if (!std::filesystem::exists(weights)) return false;
  const auto model = load_weights(weights);
  const auto data = desk::synthetic_dataset(desk::kTrainDataSeed, 500);
  return desk::accuracy(model, data) >= 0.9;
}

}  // namespace

bool selftest(const std::string& weights_path, std::ostream& out) {
  const std::vector<std::pair<std::string, std::function<bool()>>> checks = {
      {"tt dense equivalence", dense_check},
      {"tt log-likelihood gradient", gradient_check},
      {"tt sampling fidelity", sampling_check},
      {"hsv round trip", hsv_check},
      {"protes 5x5 minimum", protes_check},
      {"desk model accuracy", [&] { return desk_check(weights_path); }},
  };
  bool ok = true;
  for (const auto& [name, check] : checks) {
    bool pass = false;
    try {
      pass = check();
    } catch (const std::exception& e) {
      out << "  (" << e.what() << ")\n";
    }
    out << (pass ? "PASS " : "FAIL ") << name << '\n';
    ok = ok && pass;
  }
  return ok;
}

}  // namespace tetradat::tools
