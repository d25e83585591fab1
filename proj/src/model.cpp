#include "tetradat/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "tetradat/binary_io.hpp"

namespace tetradat {

Prediction make_prediction(std::vector<double> probs) {
  if (probs.empty()) throw ModelError("empty probability vector");
  const auto top = std::max_element(probs.begin(), probs.end());
  Prediction p;
  p.top_class = static_cast<int>(top - probs.begin());
  p.top_score = *top;
  p.probs = std::move(probs);
  return p;
}

std::vector<Prediction> Classifier::predict_batch(
    std::span<const Image> images) const {
  std::vector<Prediction> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(predict(img));
  return out;
}

std::vector<double> Classifier::input_gradient(const Image&, int) const {
  throw NotDifferentiableError("classifier '" + name() +
                               "' does not provide input gradients");
}

DenseClassifier::DenseClassifier(std::size_t height, std::size_t width,
                                 std::vector<DenseLayer> layers)
    : height_(height), width_(width), layers_(std::move(layers)) {
  if (layers_.empty()) throw ModelError("classifier needs at least one layer");
  Eigen::Index in = static_cast<Eigen::Index>(input_size());
  for (const auto& layer : layers_) {
    if (layer.weights.cols() != in)
      throw ModelError("layer input width does not chain");
    if (layer.bias.size() != layer.weights.rows())
      throw ModelError("bias length does not match layer output");
    in = layer.weights.rows();
  }
  if (in < 2) throw ModelError("classifier needs at least two classes");
}

DenseClassifier DenseClassifier::random(std::size_t height, std::size_t width,
                                        std::span<const std::size_t> layer_sizes,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  std::size_t in = height * width * Image::kChannels;
  for (auto out : layer_sizes) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = normal(rng);
    layers.push_back(std::move(layer));
    in = out;
  }
  return DenseClassifier(height, width, std::move(layers));
}

DenseClassifier DenseClassifier::zeros(std::size_t height, std::size_t width,
                                       std::span<const std::size_t> layer_sizes) {
  std::vector<DenseLayer> layers;
  std::size_t in = height * width * Image::kChannels;
  for (auto out : layer_sizes) {
    layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
    in = out;
  }
  return DenseClassifier(height, width, std::move(layers));
}

std::size_t DenseClassifier::num_classes() const {
  return static_cast<std::size_t>(layers_.back().weights.rows());
}

void DenseClassifier::check_input(const Image& image) const {
  if (image.height() != height_ || image.width() != width_)
    throw ModelError("image is " + std::to_string(image.height()) + "x" +
                     std::to_string(image.width()) + ", classifier expects " +
                     std::to_string(height_) + "x" + std::to_string(width_));
}

Eigen::MatrixXd stack_images(std::span<const Image> images) {
  if (images.empty()) return {};
  const auto rows = static_cast<Eigen::Index>(images.front().size());
  Eigen::MatrixXd x(rows, static_cast<Eigen::Index>(images.size()));
  for (std::size_t j = 0; j < images.size(); ++j) {
    if (static_cast<Eigen::Index>(images[j].size()) != rows)
      throw ModelError("images in a batch must share a shape");
    x.col(static_cast<Eigen::Index>(j)) =
        Eigen::Map<const Eigen::VectorXd>(images[j].values().data(), rows);
  }
  return x;
}

namespace {

void softmax_columns(Eigen::MatrixXd& z) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    auto col = z.col(j);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

}  // namespace

Eigen::MatrixXd DenseClassifier::forward(const Eigen::MatrixXd& inputs) const {
  Eigen::MatrixXd a = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::MatrixXd z = layers_[i].weights * a;
    z.colwise() += layers_[i].bias;
    if (i + 1 < layers_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  softmax_columns(a);
  return a;
}

Prediction DenseClassifier::predict(const Image& image) const {
  check_input(image);
  return std::move(predict_batch(std::span(&image, 1)).front());
}

std::vector<Prediction> DenseClassifier::predict_batch(
    std::span<const Image> images) const {
  for (const auto& img : images) check_input(img);
  std::vector<Prediction> out;
  if (images.empty()) return out;
  const Eigen::MatrixXd probs = forward(stack_images(images));
  out.reserve(images.size());
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    std::vector<double> p(probs.col(j).data(), probs.col(j).data() + probs.rows());
    out.push_back(make_prediction(std::move(p)));
  }
  return out;
}

std::vector<double> DenseClassifier::input_gradient(const Image& image,
                                                    int class_index) const {
  check_input(image);
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= num_classes())
    throw ModelError("class index out of range");

  // Forward pass keeping every pre-activation.
  std::vector<Eigen::VectorXd> pre;
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(
      image.values().data(), static_cast<Eigen::Index>(image.size()));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Eigen::VectorXd z = layers_[i].weights * a + layers_[i].bias;
    pre.push_back(z);
    a = (i + 1 < layers_.size()) ? Eigen::VectorXd(z.cwiseMax(0.0)) : z;
  }
  Eigen::VectorXd p = (a.array() - a.maxCoeff()).exp();
  p /= p.sum();

  // d p_c / d z_j = p_c (delta_cj - p_j)
  const double pc = p(class_index);
  Eigen::VectorXd delta = -pc * p;
  delta(class_index) += pc;

  for (std::size_t i = layers_.size(); i-- > 0;) {
    if (i + 1 < layers_.size())
      delta = (pre[i].array() > 0.0).select(delta, 0.0);
    delta = layers_[i].weights.transpose() * delta;
  }
  return {delta.data(), delta.data() + delta.size()};
}

void write_weights(std::ostream& out, const DenseClassifier& model) {
  binio::put_magic(out, "NNW1");
  binio::put_u64(out, model.input_height());
  binio::put_u64(out, model.input_width());
  binio::put_u64(out, Image::kChannels);
  binio::put_u64(out, model.layers().size());
  for (const auto& layer : model.layers()) {
    binio::put_u64(out, static_cast<std::uint64_t>(layer.weights.rows()));
    binio::put_u64(out, static_cast<std::uint64_t>(layer.weights.cols()));
  }
  for (const auto& layer : model.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        binio::put_f64(out, layer.weights(r, c));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
      binio::put_f64(out, layer.bias(r));
  }
}

DenseClassifier read_weights(std::istream& in) {
  binio::expect_magic(in, "NNW1");
  const auto height = binio::get_u64(in);
  const auto width = binio::get_u64(in);
  const auto channels = binio::get_u64(in);
  const auto count = binio::get_u64(in);
  if (channels != Image::kChannels || height == 0 || width == 0 ||
      height > 4096 || width > 4096 || count == 0 || count > 64)
    throw binio::FormatError("unsupported NNW1 header");
  std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes(count);
  for (auto& [rows, cols] : shapes) {
    rows = binio::get_u64(in);
    cols = binio::get_u64(in);
    if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
      throw binio::FormatError("invalid NNW1 layer shape");
  }
  std::vector<DenseLayer> layers;
  for (const auto& [rows, cols] : shapes) {
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c)
        layer.weights(r, c) = binio::get_f64(in);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
      layer.bias(r) = binio::get_f64(in);
    layers.push_back(std::move(layer));
  }
  try {
    return DenseClassifier(height, width, std::move(layers));
  } catch (const ModelError& e) {
    throw binio::FormatError(std::string("NNW1 layers inconsistent: ") + e.what());
  }
}

void save_weights(const std::filesystem::path& path,
                  const DenseClassifier& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_weights(out, model);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

DenseClassifier load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open weights file " + path.string());
  return read_weights(in);
}

Prediction QueryEndpoint::query(const Image& image) {
  auto p = model_->predict(image);
  ++count_;
  return p;
}

std::vector<Prediction> QueryEndpoint::query_batch(
    std::span<const Image> images) {
  auto out = model_->predict_batch(images);
  count_ += images.size();
  return out;
}

}  // namespace tetradat
