#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tetradat/image.hpp"

namespace tetradat {

/// Class probabilities with the argmax cached. Class indices are 0-based.
struct Prediction {
  std::vector<double> probs;
  int top_class = 0;
  double top_score = 0.0;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Builds a Prediction from probabilities; the first maximum wins ties.
Prediction make_prediction(std::vector<double> probs);

/// Raised when a gradient is requested from a black-box-only classifier.
class NotDifferentiableError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Shape or class-index misuse.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Communication with an out-of-process model failed; the request may be
/// retried.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Classifier {
 public:
  virtual ~Classifier() = default;

  virtual std::string name() const = 0;
  virtual std::size_t num_classes() const = 0;
  virtual Prediction predict(const Image& image) const = 0;
  virtual std::vector<Prediction> predict_batch(
      std::span<const Image> images) const;

  virtual bool differentiable() const { return false; }
  /// d probs[class_index] / d pixels, laid out like Image::values().
  virtual std::vector<double> input_gradient(const Image& image,
                                             int class_index) const;
};

struct DenseLayer {
  Eigen::MatrixXd weights;  // (out, in)
  Eigen::VectorXd bias;     // (out)
};

/// Fully connected network on flattened images: dense layers with ReLU in
/// between and a softmax on the last layer. One layer gives a linear-softmax
/// model; the built-in desk model has two.
class DenseClassifier final : public Classifier {
 public:
  DenseClassifier(std::size_t height, std::size_t width,
                  std::vector<DenseLayer> layers);

  /// He-initialized weights, zero biases.
  static DenseClassifier random(std::size_t height, std::size_t width,
                                std::span<const std::size_t> layer_sizes,
                                std::uint64_t seed);
  static DenseClassifier zeros(std::size_t height, std::size_t width,
                               std::span<const std::size_t> layer_sizes);

  std::string name() const override { return "dense"; }
  std::size_t num_classes() const override;
  std::size_t input_height() const { return height_; }
  std::size_t input_width() const { return width_; }
  std::size_t input_size() const { return height_ * width_ * Image::kChannels; }

  Prediction predict(const Image& image) const override;
  std::vector<Prediction> predict_batch(
      std::span<const Image> images) const override;

  /// Softmax probabilities for column-stacked flattened inputs.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  bool differentiable() const override { return true; }
  std::vector<double> input_gradient(const Image& image,
                                     int class_index) const override;

  std::span<const DenseLayer> layers() const { return layers_; }
  std::span<DenseLayer> layers() { return layers_; }

 private:
  void check_input(const Image& image) const;

  std::size_t height_;
  std::size_t width_;
  std::vector<DenseLayer> layers_;
};

// NNW1 container: magic "NNW1", then little-endian uint64 height, width,
// channels, layer count, (out, in) per layer; then per layer the weights
// row-major followed by the bias, all little-endian float64.
void write_weights(std::ostream& out, const DenseClassifier& model);
DenseClassifier read_weights(std::istream& in);
void save_weights(const std::filesystem::path& path,
                  const DenseClassifier& model);
DenseClassifier load_weights(const std::filesystem::path& path);

/// Black-box view of a classifier that counts successful queries.
class QueryEndpoint {
 public:
  explicit QueryEndpoint(const Classifier& model) : model_(&model) {}
  QueryEndpoint(const QueryEndpoint&) = delete;
  QueryEndpoint& operator=(const QueryEndpoint&) = delete;

  /// The counter moves only when the call succeeds; a batch counts as one
  /// unit for failure purposes.
  Prediction query(const Image& image);
  std::vector<Prediction> query_batch(std::span<const Image> images);

  std::size_t queries() const { return count_.load(); }
  const Classifier& model() const { return *model_; }

 private:
  const Classifier* model_;
  std::atomic<std::size_t> count_{0};
};

/// Flattens images into the columns of a matrix.
Eigen::MatrixXd stack_images(std::span<const Image> images);

}  // namespace tetradat
