#pragma once

// Desk-scale data and model: a synthetic 10-class image set where the class
// is the position of the dominant colored patch, and the seeded training
// routine that produces the built-in classifier.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tetradat/image.hpp"
#include "tetradat/model.hpp"

namespace tetradat::desk {

inline constexpr std::size_t kImageSize = 32;
inline constexpr std::size_t kClasses = 10;
inline constexpr std::size_t kHidden = 256;
inline constexpr std::size_t kPatch = 6;

/// Seed of the synthetic training set used for the frozen weights.
inline constexpr std::uint64_t kTrainDataSeed = 1;
/// Seed of the synthetic evaluation images used by attack campaigns.
inline constexpr std::uint64_t kEvalDataSeed = 2;

struct LabeledImage {
  Image image;
  int label = 0;
};

/// Top-left corner of the patch for `label` before jitter.
PixelPos patch_origin(int label);

/// Image `index` of the synthetic stream for `seed`; each image is generated
/// from its own derived seed so any prefix of the stream is reproducible.
LabeledImage synthetic_image(std::uint64_t seed, std::size_t index);
std::vector<LabeledImage> synthetic_dataset(std::uint64_t seed,
                                            std::size_t count);

/// Loads `<root>/<class>/<file>.{png,ppm}` where `<class>` is a 0-based
/// integer directory name. Files are visited in lexicographic order.
std::vector<LabeledImage> load_labeled_folder(const std::filesystem::path& root);

struct TrainOptions {
  std::size_t samples = 10000;
  std::size_t epochs = 20;
  std::size_t batch = 32;
  double lr = 0.05;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

/// Mini-batch gradient descent on softmax cross-entropy, fully determined by
/// `seed` (data, initialization and shuffling).
DenseClassifier train_desk_model(std::uint64_t seed, const TrainOptions& options,
                                 TrainReport* report = nullptr);

double accuracy(const Classifier& model, std::span<const LabeledImage> data);

}  // namespace tetradat::desk
