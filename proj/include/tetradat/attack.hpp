#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tetradat/attribution.hpp"
#include "tetradat/image.hpp"
#include "tetradat/model.hpp"
#include "tetradat/protes.hpp"
#include "tetradat/tt.hpp"

namespace tetradat {

/// Per-pixel choice encoded by one multi-index entry.
enum PixelAction : int {
  kDesaturate = 0,  // S <- max(0, S - eps)
  kKeep = 1,
  kBrighten = 2,  // V <- min(1, V + eps)
};
inline constexpr std::size_t kPixelActions = 3;

/// The symmetric perturbation grid {(2 n / (N - 1) - 1) eps : n = 0..N-1}.
std::vector<double> encode_grid(double epsilon, std::size_t n);

/// Applies one HSV action per selected pixel; other pixels are copied
/// bit-for-bit. `actions` is indexed like `selection.positions`.
Image perturb(const Image& image, std::span<const int> actions,
              const PixelSelection& selection, double epsilon);

struct Norms {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

/// Norms of the flattened channel difference on the 0-255 scale.
Norms compute_norms(const Image& original, const Image& adversarial);

struct AttackConfig {
  /// Pixels to perturb; 0 selects 10% of the pixel count.
  std::size_t d_hat = 0;
  double epsilon0 = 1.0;
  std::size_t budget = 10000;
  ProtesConfig protes;
  std::size_t attribution_steps = 15;
  BaselineKind baseline = BaselineKind::kBlack;

  void validate() const;
  std::size_t resolved_d_hat(const Image& image) const;
};

struct AttackResult {
  bool success = false;
  Image adversarial;
  int original_class = 0;
  int adversarial_class = 0;
  double final_epsilon = 0.0;
  std::size_t queries = 0;  // black-box queries spent by the optimizer
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;

  AttributionMap attribution;
  PixelSelection selection;
  std::vector<double> epsilons;  // amplitude of every optimizer run
};

/// One optimizer run at a fixed amplitude.
struct AttackRun {
  std::size_t index = 0;
  double epsilon = 0.0;
  std::size_t queries = 0;
  bool success = false;
  std::optional<TTTensor> entering;  // absent for the random first run
  TTTensor exiting;
};

using RunObserver = std::function<void(const AttackRun&)>;

/// The auxiliary model disagrees with the attacked model on the clean image.
class AttackRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Attribution-guided black-box attack with amplitude halving and warm
/// restarts. `attacked` is only queried through the endpoint; `auxiliary`
/// must be differentiable. The initial classification is one extra query on
/// top of `config.budget`.
AttackResult tetradat(QueryEndpoint& attacked, const Classifier& auxiliary,
                      const Image& image, const AttackConfig& config,
                      const RunObserver& observer = {});

}  // namespace tetradat
