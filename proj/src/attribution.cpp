#include "tetradat/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace tetradat {

std::string_view to_string(BaselineKind kind) {
  return kind == BaselineKind::kBlack ? "black" : "noise";
}

BaselineKind baseline_from_string(std::string_view name) {
  if (name == "black") return BaselineKind::kBlack;
  if (name == "noise") return BaselineKind::kNoise;
  throw std::invalid_argument("unknown baseline '" + std::string(name) + "'");
}

Image make_baseline(const Image& like, BaselineKind kind, std::uint64_t seed) {
  Image out(like.height(), like.width(), 0.0);
  if (kind == BaselineKind::kNoise) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& v : out.values()) v = unit(rng);
  }
  return out;
}

DifferentiableScore class_score(const Classifier& model, int class_index) {
  if (!model.differentiable())
    throw NotDifferentiableError("attribution needs a differentiable model, got '" +
                                 model.name() + "'");
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= model.num_classes())
    throw ModelError("class index out of range");
  return {
      [&model, class_index](const Image& x) {
        return model.predict(x).probs[static_cast<std::size_t>(class_index)];
      },
      [&model, class_index](const Image& x) {
        return model.input_gradient(x, class_index);
      },
  };
}

namespace {

void check_gradient_size(const std::vector<double>& g, const Image& image) {
  if (g.size() != image.size())
    throw ModelError("gradient size does not match the image");
}

}  // namespace

AttributionMap saliency(const DifferentiableScore& score, const Image& image,
                        int class_index) {
  const auto grad = score.gradient(image);
  check_gradient_size(grad, image);
  AttributionMap map{image.height(), image.width(),
                     std::vector<double>(image.pixel_count(), 0.0), class_index,
                     BaselineKind::kBlack};
  for (std::size_t p = 0; p < image.pixel_count(); ++p)
    for (std::size_t ch = 0; ch < Image::kChannels; ++ch)
      map.scores[p] += std::abs(grad[p * Image::kChannels + ch]);
  return map;
}

AttributionMap saliency(const Classifier& model, const Image& image,
                        int class_index) {
  return saliency(class_score(model, class_index), image, class_index);
}

ChannelAttribution integrated_gradients_channels(const DifferentiableScore& score,
                                                 const Image& image,
                                                 const Image& baseline,
                                                 std::size_t steps) {
  if (steps < 1) throw std::invalid_argument("integrated gradients needs steps >= 1");
  if (!image.same_shape(baseline))
    throw std::invalid_argument("baseline shape does not match the image");
  const auto x = image.values();
  const auto x0 = baseline.values();
  std::vector<double> avg(image.size(), 0.0);
  Image point = baseline;
  for (std::size_t t = 1; t <= steps; ++t) {
    const double alpha = static_cast<double>(t) / static_cast<double>(steps);
    auto p = point.values();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = x0[i] + alpha * (x[i] - x0[i]);
    const auto grad = score.gradient(point);
    check_gradient_size(grad, image);
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += grad[i];
  }
  for (std::size_t i = 0; i < avg.size(); ++i)
    avg[i] = (x[i] - x0[i]) * avg[i] / static_cast<double>(steps);
  return {std::move(avg)};
}

AttributionMap integrated_gradients(const DifferentiableScore& score,
                                    const Image& image, const Image& baseline,
                                    std::size_t steps, int class_index,
                                    BaselineKind kind) {
  const auto channels = integrated_gradients_channels(score, image, baseline, steps);
  AttributionMap map{image.height(), image.width(),
                     std::vector<double>(image.pixel_count(), 0.0), class_index,
                     kind};
  for (std::size_t p = 0; p < image.pixel_count(); ++p)
    for (std::size_t ch = 0; ch < Image::kChannels; ++ch)
      map.scores[p] += channels.values[p * Image::kChannels + ch];
  return map;
}

AttributionMap integrated_gradients(const Classifier& model, const Image& image,
                                    int class_index, std::size_t steps,
                                    BaselineKind baseline) {
  const auto score = class_score(model, class_index);
  return integrated_gradients(score, image, make_baseline(image, baseline), steps,
                              class_index, baseline);
}

PixelSelection select_top_pixels(const AttributionMap& map, std::size_t d_hat) {
  const std::size_t total = map.height * map.width;
  if (d_hat < 1 || d_hat > total)
    throw std::out_of_range("d_hat must lie in [1, H*W], got " +
                            std::to_string(d_hat));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return map.scores[a] > map.scores[b];
  });
  PixelSelection sel;
  sel.positions.reserve(d_hat);
  for (std::size_t i = 0; i < d_hat; ++i)
    sel.positions.push_back({order[i] / map.width, order[i] % map.width});
  return sel;
}

}  // namespace tetradat
