#include "tetradat/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tetradat/hsv.hpp"

namespace tetradat {

std::vector<double> encode_grid(double epsilon, std::size_t n) {
  if (n < 2) throw std::invalid_argument("perturbation grid needs N >= 2");
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i)
    grid[i] = (2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0) *
              epsilon;
  return grid;
}

Image perturb(const Image& image, std::span<const int> actions,
              const PixelSelection& selection, double epsilon) {
  if (actions.size() != selection.positions.size())
    throw std::invalid_argument("action count does not match the selection");
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw std::invalid_argument("epsilon must lie in (0, 1]");
  Image out = image;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const int action = actions[i];
    if (action < kDesaturate || action > kBrighten)
      throw std::out_of_range("pixel action outside {0, 1, 2}");
    if (action == kKeep) continue;
    const auto pos = selection.positions[i];
    if (pos.row >= image.height() || pos.col >= image.width())
      throw std::out_of_range("selected pixel outside the image");
    auto px = out.pixel(pos.row, pos.col);
    Hsv hsv = rgb_to_hsv({px[0], px[1], px[2]});
    if (action == kDesaturate)
      hsv.s = std::max(0.0, hsv.s - epsilon);
    else
      hsv.v = std::min(1.0, hsv.v + epsilon);
    const Rgb rgb = hsv_to_rgb(hsv);
    for (std::size_t ch = 0; ch < 3; ++ch) px[ch] = std::clamp(rgb[ch], 0.0, 1.0);
  }
  return out;
}

Norms compute_norms(const Image& original, const Image& adversarial) {
  if (!original.same_shape(adversarial))
    throw std::invalid_argument("norms need images of the same shape");
  Norms n;
  double sq = 0.0;
  const auto a = original.values();
  const auto b = adversarial.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = std::abs(b[i] - a[i]) * 255.0;
    n.l1 += diff;
    sq += diff * diff;
    n.linf = std::max(n.linf, diff);
  }
  n.l2 = std::sqrt(sq);
  return n;
}

void AttackConfig::validate() const {
  if (!(epsilon0 > 0.0 && epsilon0 <= 1.0))
    throw std::invalid_argument("epsilon0 must lie in (0, 1]");
  protes.validate();
  if (budget < protes.K)
    throw std::invalid_argument("budget must be at least PROTES K");
  if (attribution_steps < 1)
    throw std::invalid_argument("attribution_steps must be at least 1");
}

std::size_t AttackConfig::resolved_d_hat(const Image& image) const {
  const std::size_t n = d_hat != 0
                            ? d_hat
                            : std::max<std::size_t>(1, image.pixel_count() / 10);
  if (n > image.pixel_count())
    throw std::invalid_argument("d_hat exceeds the pixel count");
  return n;
}

namespace {

struct Candidate {
  MultiIndex actions;
  double epsilon = 0.0;
  double value = std::numeric_limits<double>::infinity();
  int top_class = 0;
};

}  // namespace

AttackResult tetradat(QueryEndpoint& attacked, const Classifier& auxiliary,
                      const Image& image, const AttackConfig& config,
                      const RunObserver& observer) {
  config.validate();
  image.check_range();

  AttackResult result;
  const Prediction clean = attacked.query(image);
  const int target = clean.top_class;
  result.original_class = target;

  if (auxiliary.predict(image).top_class != target)
    throw AttackRefused("auxiliary model disagrees with the attacked model");

  result.attribution = integrated_gradients(auxiliary, image, target,
                                            config.attribution_steps,
                                            config.baseline);
  const std::size_t d_hat = config.resolved_d_hat(image);
  result.selection = select_top_pixels(result.attribution, d_hat);
  const std::vector<std::size_t> modes(d_hat, kPixelActions);

  std::optional<Candidate> last_success;
  Candidate best_effort;
  std::optional<TTTensor> warm;
  double epsilon = config.epsilon0;
  std::size_t used = 0;

  for (std::size_t run = 0; used + config.protes.K <= config.budget; ++run) {
    std::vector<char> changed;
    std::vector<int> classes;
    Objective loss = [&](std::span<const MultiIndex> batch) {
      std::vector<Image> images;
      images.reserve(batch.size());
      for (const auto& n : batch)
        images.push_back(perturb(image, n, result.selection, epsilon));
      const auto preds = attacked.query_batch(images);
      std::vector<double> values(batch.size());
      changed.assign(batch.size(), 0);
      classes.assign(batch.size(), 0);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        values[i] = preds[i].probs[static_cast<std::size_t>(target)];
        classes[i] = preds[i].top_class;
        changed[i] = preds[i].top_class != target;
        if (values[i] < best_effort.value)
          best_effort = {batch[i], epsilon, values[i], classes[i]};
      }
      return values;
    };
    StopRule stop = [&](std::size_t pos, double) { return changed[pos] != 0; };

    ProtesConfig pc = config.protes;
    pc.seed = config.protes.seed + run;
    AttackRun record;
    record.index = run;
    record.epsilon = epsilon;
    record.entering = warm;
    auto outcome = protes_minimize(modes, loss, config.budget - used, pc,
                                   std::move(warm), stop);
    used += outcome.state.queries_used;
    result.epsilons.push_back(epsilon);

    record.queries = outcome.state.queries_used;
    record.success = outcome.reason == StopReason::kStopRule;
    record.exiting = outcome.state.distribution;
    if (observer) observer(record);
    warm = std::move(outcome.state.distribution);

    if (!record.success) break;
    Candidate hit{*outcome.stop_index, epsilon, *outcome.stop_value, 0};
    // The stop rule fires on the first changed candidate of the last batch.
    for (std::size_t i = 0; i < changed.size(); ++i)
      if (changed[i]) {
        hit.top_class = classes[i];
        break;
      }
    last_success = std::move(hit);
    epsilon /= 2.0;
  }

  result.queries = used;
  const Candidate& chosen = last_success ? *last_success : best_effort;
  if (!chosen.actions.empty()) {
    result.adversarial = perturb(image, chosen.actions, result.selection, chosen.epsilon);
    result.adversarial_class = chosen.top_class;
    result.final_epsilon = chosen.epsilon;
  } else {
    result.adversarial = image;
    result.adversarial_class = target;
    result.final_epsilon = config.epsilon0;
  }
  result.success = result.adversarial_class != target;
  const auto norms = compute_norms(image, result.adversarial);
  result.l1 = norms.l1;
  result.l2 = norms.l2;
  result.linf = norms.linf;
  return result;
}

}  // namespace tetradat
