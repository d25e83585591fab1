#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string_view>
#include <vector>

#include "tetradat/image.hpp"
#include "tetradat/model.hpp"

namespace tetradat {

enum class BaselineKind { kBlack, kNoise };

std::string_view to_string(BaselineKind kind);
BaselineKind baseline_from_string(std::string_view name);

/// Reference image x' of Integrated Gradients. The noise baseline is uniform
/// on [0, 1] per channel from `seed`.
Image make_baseline(const Image& like, BaselineKind kind, std::uint64_t seed = 0);

/// A scalar image score together with its input gradient.
struct DifferentiableScore {
  std::function<double(const Image&)> value;
  std::function<std::vector<double>(const Image&)> gradient;
};

/// probs[class_index] of a differentiable classifier. Throws
/// NotDifferentiableError otherwise.
DifferentiableScore class_score(const Classifier& model, int class_index);

struct AttributionMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> scores;  // per pixel, row-major
  int class_index = 0;
  BaselineKind baseline_kind = BaselineKind::kBlack;

  double at(std::size_t row, std::size_t col) const {
    return scores[row * width + col];
  }
};

/// Per-channel attributions before aggregation, laid out like Image::values().
struct ChannelAttribution {
  std::vector<double> values;
};

/// Gradient at the image, aggregated per pixel by summing absolute values
/// over the three channels.
AttributionMap saliency(const Classifier& model, const Image& image,
                        int class_index);
AttributionMap saliency(const DifferentiableScore& score, const Image& image,
                        int class_index = 0);

/// Right-endpoint Riemann sum of the path integral from the baseline to the
/// image with `steps` nodes.
ChannelAttribution integrated_gradients_channels(const DifferentiableScore& score,
                                                 const Image& image,
                                                 const Image& baseline,
                                                 std::size_t steps);

/// Integrated Gradients, aggregated per pixel by the signed channel sum.
AttributionMap integrated_gradients(const Classifier& model, const Image& image,
                                    int class_index, std::size_t steps = 15,
                                    BaselineKind baseline = BaselineKind::kBlack);
AttributionMap integrated_gradients(const DifferentiableScore& score,
                                    const Image& image, const Image& baseline,
                                    std::size_t steps, int class_index = 0,
                                    BaselineKind kind = BaselineKind::kBlack);

struct PixelSelection {
  std::vector<PixelPos> positions;  // descending score, row-major on ties
  std::size_t d_hat() const { return positions.size(); }
};

PixelSelection select_top_pixels(const AttributionMap& map, std::size_t d_hat);

}  // namespace tetradat
