#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tetradat {

/// Zero-based mode indices (n_1, ..., n_d) addressing one tensor entry.
using MultiIndex = std::vector<int>;

/// Random stream used by every sampler in the library.
using Rng = std::mt19937_64;

/// Floor applied to tensor values inside log-likelihoods.
inline constexpr double kLikelihoodFloor = 1e-300;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// One 3-axis TT-core of shape (left_rank, mode_size, right_rank), stored
/// contiguously with the right rank varying fastest.
class TTCore {
 public:
  TTCore() = default;
  TTCore(std::size_t left_rank, std::size_t mode_size, std::size_t right_rank,
         double fill = 0.0);

  std::size_t left_rank() const { return left_; }
  std::size_t mode_size() const { return mode_; }
  std::size_t right_rank() const { return right_; }

  double& operator()(std::size_t a, std::size_t n, std::size_t b) {
    return data_[(a * mode_ + n) * right_ + b];
  }
  double operator()(std::size_t a, std::size_t n, std::size_t b) const {
    return data_[(a * mode_ + n) * right_ + b];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  bool same_shape(const TTCore& other) const {
    return left_ == other.left_ && mode_ == other.mode_ &&
           right_ == other.right_;
  }

  friend bool operator==(const TTCore&, const TTCore&) = default;

 private:
  std::size_t left_ = 0;
  std::size_t mode_ = 0;
  std::size_t right_ = 0;
  std::vector<double> data_;
};

/// A d-dimensional tensor in the tensor-train format. Also used as the
/// unnormalized probability mass function of the PROTES optimizer.
class TTTensor {
 public:
  TTTensor() = default;
  explicit TTTensor(std::vector<TTCore> cores);

  std::size_t dim() const { return cores_.size(); }
  std::vector<std::size_t> mode_sizes() const;
  /// [R_0, ..., R_d] with R_0 = R_d = 1.
  std::vector<std::size_t> ranks() const;
  /// Total number of tensor entries, saturating at SIZE_MAX.
  std::size_t full_size() const;

  const TTCore& core(std::size_t i) const { return cores_.at(i); }
  TTCore& core(std::size_t i) { return cores_.at(i); }
  std::span<const TTCore> cores() const { return cores_; }

  /// Throws std::out_of_range when the index does not address an entry.
  void check_index(std::span<const int> index) const;

  friend bool operator==(const TTTensor&, const TTTensor&) = default;

 private:
  std::vector<TTCore> cores_;
};

/// Internal rank bound min(rank, prod_{j<=i} N_j, prod_{j>i} N_j).
std::vector<std::size_t> capped_ranks(std::span<const std::size_t> mode_sizes,
                                      std::size_t rank);

/// Random TT-tensor with every core entry i.i.d. uniform on (0, 1).
TTTensor tt_random_nonneg(std::span<const std::size_t> mode_sizes,
                          std::size_t rank, std::uint64_t seed);

/// Element evaluation by the chain product of core slices.
double tt_get(const TTTensor& t, std::span<const int> index);

/// log(max(t[n], floor)) evaluated with rescaled interface vectors, so it
/// stays finite where the plain product would overflow.
double tt_log_value(const TTTensor& t, std::span<const int> index);

/// Sum of tt_log_value over a batch.
double tt_log_likelihood(const TTTensor& t, std::span<const MultiIndex> batch);

/// Draws `count` multi-indices by sequential conditional sampling. Negative
/// conditional weights are clipped to zero; a mode whose clipped weights are
/// all zero is sampled uniformly.
std::vector<MultiIndex> tt_sample(const TTTensor& t, std::size_t count,
                                  Rng& rng);

/// Core-shaped gradient of sum_i log t[n^(i)].
using TTGradient = std::vector<TTCore>;

TTGradient tt_log_likelihood_grad(const TTTensor& t,
                                  std::span<const MultiIndex> batch);

/// G <- G + lr * grad for every core.
TTTensor tt_ascent_step(TTTensor t, const TTGradient& grad, double lr);
void tt_ascent_step_inplace(TTTensor& t, const TTGradient& grad, double lr);

/// Full materialization in row-major (last index fastest) order. Only for
/// small tensors; throws std::length_error above `max_entries`.
std::vector<double> tt_full(const TTTensor& t,
                            std::size_t max_entries = 1u << 24);

// Binary container: magic "TTT1", d, mode sizes, ranks as little-endian
// uint64, then the cores as little-endian float64 in (left, mode, right)
// order.
void tt_write(std::ostream& out, const TTTensor& t);
TTTensor tt_read(std::istream& in);
std::string tt_serialize(const TTTensor& t);
TTTensor tt_deserialize(const std::string& bytes);

}  // namespace tetradat
