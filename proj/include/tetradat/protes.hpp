#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tetradat/tt.hpp"

namespace tetradat {

struct ProtesConfig {
  std::size_t K = 100;     // candidates sampled per iteration
  std::size_t k = 10;      // elites kept per iteration
  std::size_t k_gd = 100;  // ascent steps per iteration
  double lr = 0.01;
  std::size_t rank = 5;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when an invariant is violated.
  void validate() const;
};

struct ProtesState {
  TTTensor distribution;
  Rng rng;
  std::size_t queries_used = 0;
  std::optional<MultiIndex> best_index;
  std::optional<double> best_value;
};

/// Batch objective: one value per candidate, in order.
using Objective =
    std::function<std::vector<double>(std::span<const MultiIndex>)>;

/// Early-stop rule, called once per candidate of the batch just evaluated, in
/// sampling order, with the candidate's position in that batch and its value.
using StopRule = std::function<bool(std::size_t position, double value)>;

/// What one iteration sampled and kept.
struct IterationReport {
  std::vector<MultiIndex> candidates;
  std::vector<double> values;
  std::vector<std::size_t> elites;  // positions into `candidates`
};

enum class StopReason { kStopRule, kBudget };

std::string_view to_string(StopReason reason);

struct MinimizeResult {
  ProtesState state;
  StopReason reason = StopReason::kBudget;
  std::size_t iterations = 0;
  /// First candidate accepted by the stop rule, if any.
  std::optional<MultiIndex> stop_index;
  std::optional<double> stop_value;
};

ProtesState protes_init(std::span<const std::size_t> mode_sizes,
                        const ProtesConfig& config);

/// Indices of the k smallest values, ties kept in sampling order.
std::vector<std::size_t> select_elites(std::span<const double> values,
                                       std::size_t k);

/// One sample / evaluate / select / ascend cycle. `state` is left untouched
/// if the objective throws.
IterationReport protes_iterate(ProtesState& state, const Objective& objective,
                               const ProtesConfig& config);

/// Repeats protes_iterate until the stop rule accepts a candidate or fewer
/// than K queries remain in `budget`. A warm start replaces the random
/// initial distribution; the sampler is still seeded from config.seed.
MinimizeResult protes_minimize(std::span<const std::size_t> mode_sizes,
                               const Objective& objective, std::size_t budget,
                               const ProtesConfig& config,
                               std::optional<TTTensor> warm_start = {},
                               const StopRule& stop_when = {});

}  // namespace tetradat
