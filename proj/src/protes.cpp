#include "tetradat/protes.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace tetradat {

void ProtesConfig::validate() const {
  if (K < 1) throw std::invalid_argument("PROTES: K must be at least 1");
  if (k < 1 || k > K)
    throw std::invalid_argument("PROTES: k must satisfy 1 <= k <= K");
  if (k_gd < 1) throw std::invalid_argument("PROTES: k_gd must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("PROTES: lr must be positive");
  if (rank < 1) throw std::invalid_argument("PROTES: rank must be at least 1");
}

std::string_view to_string(StopReason reason) {
  switch (reason) {
    case StopReason::kStopRule:
      return "stop_rule";
    case StopReason::kBudget:
      return "budget";
  }
  return "unknown";
}

ProtesState protes_init(std::span<const std::size_t> mode_sizes,
                        const ProtesConfig& config) {
  config.validate();
  ProtesState state;
  state.distribution = tt_random_nonneg(mode_sizes, config.rank, config.seed);
  state.rng = Rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  return state;
}

std::vector<std::size_t> select_elites(std::span<const double> values,
                                       std::size_t k) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  order.resize(std::min(k, order.size()));
  return order;
}

IterationReport protes_iterate(ProtesState& state, const Objective& objective,
                               const ProtesConfig& config) {
  config.validate();
  Rng rng = state.rng;
  IterationReport report;
  report.candidates = tt_sample(state.distribution, config.K, rng);
  report.values = objective(report.candidates);
  if (report.values.size() != report.candidates.size())
    throw std::runtime_error("objective returned " +
                             std::to_string(report.values.size()) +
                             " values for " +
                             std::to_string(report.candidates.size()) +
                             " candidates");
  report.elites = select_elites(report.values, config.k);

  std::vector<MultiIndex> elite_batch;
  elite_batch.reserve(report.elites.size());
  for (auto pos : report.elites) elite_batch.push_back(report.candidates[pos]);

  TTTensor updated = state.distribution;
  for (std::size_t step = 0; step < config.k_gd; ++step) {
    const auto grad = tt_log_likelihood_grad(updated, elite_batch);
    tt_ascent_step_inplace(updated, grad, config.lr);
  }

  // Commit only after everything that can throw has run.
  const auto best_pos = report.elites.front();
  if (!state.best_value || report.values[best_pos] < *state.best_value) {
    state.best_value = report.values[best_pos];
    state.best_index = report.candidates[best_pos];
  }
  state.queries_used += report.candidates.size();
  state.distribution = std::move(updated);
  state.rng = rng;
  return report;
}

MinimizeResult protes_minimize(std::span<const std::size_t> mode_sizes,
                               const Objective& objective, std::size_t budget,
                               const ProtesConfig& config,
                               std::optional<TTTensor> warm_start,
                               const StopRule& stop_when) {
  MinimizeResult result;
  result.state = protes_init(mode_sizes, config);
  if (warm_start) {
    const auto modes = warm_start->mode_sizes();
    if (!std::equal(modes.begin(), modes.end(), mode_sizes.begin(),
                    mode_sizes.end()))
      throw ShapeError("warm start mode sizes do not match the problem");
    result.state.distribution = std::move(*warm_start);
  }

  while (result.state.queries_used + config.K <= budget) {
    const auto report = protes_iterate(result.state, objective, config);
    ++result.iterations;
    if (!stop_when) continue;
    for (std::size_t pos = 0; pos < report.values.size(); ++pos) {
      if (stop_when(pos, report.values[pos])) {
        result.reason = StopReason::kStopRule;
        result.stop_index = report.candidates[pos];
        result.stop_value = report.values[pos];
        return result;
      }
    }
  }
  result.reason = StopReason::kBudget;
  return result;
}

}  // namespace tetradat
