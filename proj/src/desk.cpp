#include "tetradat/desk.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "tetradat/hsv.hpp"

namespace tetradat::desk {

PixelPos patch_origin(int label) {
  if (label < 0 || label >= static_cast<int>(kClasses))
    throw std::out_of_range("desk label out of range");
  static constexpr std::size_t rows[] = {4, 20};
  static constexpr std::size_t cols[] = {1, 7, 13, 19, 25};
  return {rows[label / 5], cols[label % 5]};
}

namespace {

Rgb random_color(std::mt19937_64& rng, double s_lo, double s_hi, double v_lo,
                 double v_hi) {
  std::uniform_real_distribution<double> hue(0.0, 360.0), sat(s_lo, s_hi),
      val(v_lo, v_hi);
  const double h = hue(rng);
  const double s = sat(rng);
  const double v = val(rng);
  return hsv_to_rgb({h, s, v});
}

void fill_rect(Image& img, std::size_t r0, std::size_t c0, std::size_t size,
               const Rgb& color) {
  for (std::size_t r = r0; r < std::min(r0 + size, img.height()); ++r)
    for (std::size_t c = c0; c < std::min(c0 + size, img.width()); ++c)
      for (std::size_t ch = 0; ch < 3; ++ch) img.at(r, c, ch) = color[ch];
}

}  // namespace

LabeledImage synthetic_image(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_int_distribution<int> label_dist(0, kClasses - 1);
  std::uniform_int_distribution<int> jitter(-1, 1);
  std::uniform_real_distribution<double> noise(-0.05, 0.05);

  const int label = label_dist(rng);
  Image img(kImageSize, kImageSize);
  const Rgb background = random_color(rng, 0.0, 0.5, 0.1, 0.4);
  for (std::size_t r = 0; r < kImageSize; ++r)
    for (std::size_t c = 0; c < kImageSize; ++c)
      for (std::size_t ch = 0; ch < 3; ++ch)
        img.at(r, c, ch) = std::clamp(background[ch] + noise(rng), 0.0, 1.0);

  // Other class positions get a bright gray patch and a weaker colored patch;
  // a small colored square lands anywhere.
  std::vector<int> others;
  for (int c = 0; c < static_cast<int>(kClasses); ++c)
    if (c != label) others.push_back(c);
  std::shuffle(others.begin(), others.end(), rng);
  std::uniform_int_distribution<int> primary(0, 2);
  std::uniform_real_distribution<double> hue_jitter(-20.0, 20.0), val(0.7, 1.0);
  auto place = [&](int cls, std::size_t size, const Rgb& color) {
    const auto o = patch_origin(cls);
    const auto r0 = static_cast<std::size_t>(static_cast<int>(o.row) + jitter(rng));
    const auto c0 = static_cast<std::size_t>(static_cast<int>(o.col) + jitter(rng));
    fill_rect(img, r0, c0, size, color);
  };
  auto primary_color = [&](double s_lo, double s_hi) {
    std::uniform_real_distribution<double> sat(s_lo, s_hi);
    const double hue = std::fmod(120.0 * primary(rng) + hue_jitter(rng) + 360.0, 360.0);
    const double s = sat(rng);
    return hsv_to_rgb({hue, s, val(rng)});
  };
  place(others[0], kPatch, random_color(rng, 0.0, 0.1, 0.7, 1.0));
  place(others[1], kPatch, primary_color(0.5, 0.75));
  std::uniform_int_distribution<std::size_t> anywhere(0, kImageSize - 3);
  const auto dr = anywhere(rng);
  const auto dc = anywhere(rng);
  fill_rect(img, dr, dc, 3, random_color(rng, 0.6, 1.0, 0.5, 0.9));

  // Dominant patch: a saturated color near one of the RGB primaries.
  place(label, kPatch, primary_color(0.8, 1.0));
  return {std::move(img), label};
}

std::vector<LabeledImage> synthetic_dataset(std::uint64_t seed,
                                            std::size_t count) {
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(synthetic_image(seed, i));
  return out;
}

std::vector<LabeledImage> load_labeled_folder(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root))
    throw ImageIoError("image folder does not exist: " + root.string());
  std::vector<std::pair<fs::path, int>> files;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    const auto name = entry.path().filename().string();
    int label = 0;
    const auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), label);
    if (ec != std::errc() || ptr != name.data() + name.size() || label < 0)
      continue;
    for (const auto& file : fs::directory_iterator(entry.path())) {
      auto ext = file.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      if (ext == ".png" || ext == ".ppm") files.emplace_back(file.path(), label);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<LabeledImage> out;
  out.reserve(files.size());
  for (const auto& [path, label] : files) out.push_back({load_image(path), label});
  return out;
}

DenseClassifier train_desk_model(std::uint64_t seed, const TrainOptions& options,
                                 TrainReport* report) {
  const auto data = synthetic_dataset(seed, options.samples);
  const std::size_t sizes[] = {kHidden, kClasses};
  auto model = DenseClassifier::random(kImageSize, kImageSize, sizes, seed + 1);
  auto layers = model.layers();
  auto& l1 = layers[0];
  auto& l2 = layers[1];

  std::mt19937_64 shuffle_rng(seed + 2);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t end = std::min(start + options.batch, order.size());
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(data[0].image.size()), b);
      Eigen::MatrixXd y = Eigen::MatrixXd::Zero(kClasses, b);
      for (Eigen::Index j = 0; j < b; ++j) {
        const auto& sample = data[order[start + static_cast<std::size_t>(j)]];
        x.col(j) = Eigen::Map<const Eigen::VectorXd>(
            sample.image.values().data(), x.rows());
        y(sample.label, j) = 1.0;
      }
      Eigen::MatrixXd h = l1.weights * x;
      h.colwise() += l1.bias;
      const Eigen::MatrixXd a = h.cwiseMax(0.0);
      Eigen::MatrixXd z = l2.weights * a;
      z.colwise() += l2.bias;
      for (Eigen::Index j = 0; j < b; ++j) {
        auto col = z.col(j);
        col.array() -= col.maxCoeff();
        col = col.array().exp().matrix();
        col /= col.sum();
        for (Eigen::Index c = 0; c < col.size(); ++c)
          if (y(c, j) > 0.0) loss -= std::log(std::max(col(c), 1e-300));
      }
      // Cross-entropy through softmax: dL/dz = p - y.
      const Eigen::MatrixXd dz = (z - y) / static_cast<double>(b);
      const Eigen::MatrixXd da = l2.weights.transpose() * dz;
      const Eigen::MatrixXd dh = (h.array() > 0.0).select(da, 0.0);
      l2.weights.noalias() -= options.lr * dz * a.transpose();
      l2.bias -= options.lr * dz.rowwise().sum();
      l1.weights.noalias() -= options.lr * dh * x.transpose();
      l1.bias -= options.lr * dh.rowwise().sum();
    }
    if (report) report->epoch_loss.push_back(loss / static_cast<double>(data.size()));
  }
  if (report) report->train_accuracy = accuracy(model, data);
  return model;
}

double accuracy(const Classifier& model, std::span<const LabeledImage> data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  constexpr std::size_t kChunk = 256;
  std::vector<Image> chunk;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t end = std::min(start + kChunk, data.size());
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) chunk.push_back(data[i].image);
    const auto preds = model.predict_batch(chunk);
    for (std::size_t i = start; i < end; ++i)
      if (preds[i - start].top_class == data[i].label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace tetradat::desk
