#include "tetradat/tt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <sstream>

#include "tetradat/binary_io.hpp"

namespace tetradat {

namespace {

// Interface vectors are rescaled to unit max-norm after every core; the
// discarded scale is accumulated in log form.
double rescale(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  if (m == 0.0 || !std::isfinite(m)) return 0.0;
  for (double& x : v) x /= m;
  return std::log(m);
}

// v <- v^T G[:, n, :]
std::vector<double> left_apply(const TTCore& g, std::size_t n,
                               const std::vector<double>& v) {
  std::vector<double> out(g.right_rank(), 0.0);
  for (std::size_t a = 0; a < g.left_rank(); ++a) {
    const double va = v[a];
    if (va == 0.0) continue;
    for (std::size_t b = 0; b < g.right_rank(); ++b) out[b] += va * g(a, n, b);
  }
  return out;
}

// v <- G[:, n, :] v
std::vector<double> right_apply(const TTCore& g, std::size_t n,
                                const std::vector<double>& v) {
  std::vector<double> out(g.left_rank(), 0.0);
  for (std::size_t a = 0; a < g.left_rank(); ++a) {
    double s = 0.0;
    for (std::size_t b = 0; b < g.right_rank(); ++b) s += g(a, n, b) * v[b];
    out[a] = s;
  }
  return out;
}

double bilinear(const TTCore& g, std::size_t n, const std::vector<double>& l,
                const std::vector<double>& r) {
  double s = 0.0;
  for (std::size_t a = 0; a < g.left_rank(); ++a) {
    double row = 0.0;
    for (std::size_t b = 0; b < g.right_rank(); ++b) row += g(a, n, b) * r[b];
    s += l[a] * row;
  }
  return s;
}

std::size_t saturating_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a)
    return std::numeric_limits<std::size_t>::max();
  return a * b;
}

}  // namespace

TTCore::TTCore(std::size_t left_rank, std::size_t mode_size,
               std::size_t right_rank, double fill)
    : left_(left_rank),
      mode_(mode_size),
      right_(right_rank),
      data_(left_rank * mode_size * right_rank, fill) {}

TTTensor::TTTensor(std::vector<TTCore> cores) : cores_(std::move(cores)) {
  if (cores_.empty()) throw ShapeError("TT-tensor needs at least one core");
  if (cores_.front().left_rank() != 1 || cores_.back().right_rank() != 1)
    throw ShapeError("boundary TT-ranks must be 1");
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    const auto& g = cores_[i];
    if (g.left_rank() == 0 || g.mode_size() == 0 || g.right_rank() == 0)
      throw ShapeError("TT-core dimensions must be positive");
    if (i + 1 < cores_.size() && g.right_rank() != cores_[i + 1].left_rank())
      throw ShapeError("adjacent TT-core ranks do not match at core " +
                       std::to_string(i));
  }
}

std::vector<std::size_t> TTTensor::mode_sizes() const {
  std::vector<std::size_t> out;
  out.reserve(cores_.size());
  for (const auto& g : cores_) out.push_back(g.mode_size());
  return out;
}

std::vector<std::size_t> TTTensor::ranks() const {
  std::vector<std::size_t> out;
  out.reserve(cores_.size() + 1);
  out.push_back(1);
  for (const auto& g : cores_) out.push_back(g.right_rank());
  return out;
}

std::size_t TTTensor::full_size() const {
  std::size_t n = 1;
  for (const auto& g : cores_) n = saturating_mul(n, g.mode_size());
  return n;
}

void TTTensor::check_index(std::span<const int> index) const {
  if (index.size() != cores_.size())
    throw std::out_of_range("multi-index length " +
                            std::to_string(index.size()) + " != dimension " +
                            std::to_string(cores_.size()));
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 ||
        static_cast<std::size_t>(index[i]) >= cores_[i].mode_size())
      throw std::out_of_range("multi-index entry " + std::to_string(i) +
                              " out of mode range");
  }
}

std::vector<std::size_t> capped_ranks(std::span<const std::size_t> mode_sizes,
                                      std::size_t rank) {
  const std::size_t d = mode_sizes.size();
  std::vector<std::size_t> ranks(d + 1, 1);
  std::vector<std::size_t> prefix(d + 1, 1), suffix(d + 1, 1);
  for (std::size_t i = 0; i < d; ++i)
    prefix[i + 1] = std::min(saturating_mul(prefix[i], mode_sizes[i]), rank);
  for (std::size_t i = d; i-- > 0;)
    suffix[i] = std::min(saturating_mul(suffix[i + 1], mode_sizes[i]), rank);
  for (std::size_t i = 1; i < d; ++i)
    ranks[i] = std::min({rank, prefix[i], suffix[i]});
  return ranks;
}

TTTensor tt_random_nonneg(std::span<const std::size_t> mode_sizes,
                          std::size_t rank, std::uint64_t seed) {
  if (mode_sizes.empty()) throw ShapeError("mode_sizes must not be empty");
  if (rank < 1) throw ShapeError("rank must be at least 1");
  for (auto n : mode_sizes)
    if (n < 1) throw ShapeError("mode sizes must be at least 1");

  const auto ranks = capped_ranks(mode_sizes, rank);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<TTCore> cores;
  cores.reserve(mode_sizes.size());
  for (std::size_t i = 0; i < mode_sizes.size(); ++i) {
    TTCore g(ranks[i], mode_sizes[i], ranks[i + 1]);
    for (double& x : g.data()) {
      do {
        x = unit(rng);
      } while (x == 0.0);
    }
    cores.push_back(std::move(g));
  }
  return TTTensor(std::move(cores));
}

double tt_get(const TTTensor& t, std::span<const int> index) {
  t.check_index(index);
  std::vector<double> v{1.0};
  for (std::size_t i = 0; i < t.dim(); ++i)
    v = left_apply(t.core(i), static_cast<std::size_t>(index[i]), v);
  return v[0];
}

double tt_log_value(const TTTensor& t, std::span<const int> index) {
  t.check_index(index);
  std::vector<double> v{1.0};
  double log_scale = 0.0;
  for (std::size_t i = 0; i < t.dim(); ++i) {
    v = left_apply(t.core(i), static_cast<std::size_t>(index[i]), v);
    log_scale += rescale(v);
  }
  const double floor_log = std::log(kLikelihoodFloor);
  if (!(v[0] > 0.0)) return floor_log;
  return std::max(std::log(v[0]) + log_scale, floor_log);
}

double tt_log_likelihood(const TTTensor& t, std::span<const MultiIndex> batch) {
  double s = 0.0;
  for (const auto& n : batch) s += tt_log_value(t, n);
  return s;
}

std::vector<MultiIndex> tt_sample(const TTTensor& t, std::size_t count,
                                  Rng& rng) {
  const std::size_t d = t.dim();
  if (d == 0) throw ShapeError("cannot sample from an empty TT-tensor");

  // right[i] summarizes cores i..d-1 marginalized over their modes.
  std::vector<std::vector<double>> right(d + 1);
  right[d] = {1.0};
  for (std::size_t i = d; i-- > 1;) {
    const auto& g = t.core(i);
    std::vector<double> acc(g.left_rank(), 0.0);
    for (std::size_t n = 0; n < g.mode_size(); ++n) {
      const auto part = right_apply(g, n, right[i + 1]);
      for (std::size_t a = 0; a < acc.size(); ++a) acc[a] += part[a];
    }
    rescale(acc);
    right[i] = std::move(acc);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<MultiIndex> samples;
  samples.reserve(count);
  std::vector<double> weights;
  for (std::size_t s = 0; s < count; ++s) {
    MultiIndex idx(d);
    std::vector<double> left{1.0};
    for (std::size_t i = 0; i < d; ++i) {
      const auto& g = t.core(i);
      const std::size_t modes = g.mode_size();
      weights.assign(modes, 0.0);
      double total = 0.0;
      for (std::size_t n = 0; n < modes; ++n) {
        const double w = bilinear(g, n, left, right[i + 1]);
        weights[n] = (w > 0.0 && std::isfinite(w)) ? w : 0.0;
        total += weights[n];
      }
      std::size_t pick = modes - 1;
      const double u = unit(rng);
      if (!(total > 0.0) || !std::isfinite(total)) {
        pick = std::min(static_cast<std::size_t>(u * modes), modes - 1);
      } else {
        double cum = 0.0;
        const double target = u * total;
        for (std::size_t n = 0; n < modes; ++n) {
          cum += weights[n];
          if (target < cum && weights[n] > 0.0) {
            pick = n;
            break;
          }
        }
        // Rounding can leave `target` past the last cumulative sum.
        while (weights[pick] == 0.0 && pick > 0) --pick;
      }
      idx[i] = static_cast<int>(pick);
      left = left_apply(g, pick, left);
      rescale(left);
    }
    samples.push_back(std::move(idx));
  }
  return samples;
}

TTGradient tt_log_likelihood_grad(const TTTensor& t,
                                  std::span<const MultiIndex> batch) {
  const std::size_t d = t.dim();
  TTGradient grad;
  grad.reserve(d);
  for (const auto& g : t.cores())
    grad.emplace_back(g.left_rank(), g.mode_size(), g.right_rank());

  std::size_t width = 1;
  for (auto r : t.ranks()) width = std::max(width, r);
  // Interface vectors of all positions live in two flat buffers; row i holds
  // the vector entering core i from the left (or leaving it to the right).
  std::vector<double> left((d + 1) * width, 0.0), right((d + 1) * width, 0.0);
  // Scales are tracked as binary exponents so rescaling stays exact.
  std::vector<long> left_exp(d + 1, 0), right_exp(d + 1, 0);
  const double floor_log = std::log(kLikelihoodFloor);

  auto normalize = [](double* v, std::size_t len) -> long {
    double m = 0.0;
    for (std::size_t j = 0; j < len; ++j) m = std::max(m, std::abs(v[j]));
    if (m == 0.0 || !std::isfinite(m)) return 0;
    int e = 0;
    std::frexp(m, &e);
    const double f = std::ldexp(1.0, -e);
    for (std::size_t j = 0; j < len; ++j) v[j] *= f;
    return e;
  };

  for (const auto& index : batch) {
    t.check_index(index);
    left[0] = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
      const auto& g = t.core(i);
      const auto n = static_cast<std::size_t>(index[i]);
      const double* in = &left[i * width];
      double* out = &left[(i + 1) * width];
      std::fill(out, out + g.right_rank(), 0.0);
      for (std::size_t a = 0; a < g.left_rank(); ++a) {
        const double va = in[a];
        const double* row = &g.data()[(a * g.mode_size() + n) * g.right_rank()];
        for (std::size_t b = 0; b < g.right_rank(); ++b) out[b] += va * row[b];
      }
      left_exp[i + 1] = left_exp[i] + normalize(out, g.right_rank());
    }
    right[d * width] = 1.0;
    for (std::size_t i = d; i-- > 0;) {
      const auto& g = t.core(i);
      const auto n = static_cast<std::size_t>(index[i]);
      const double* in = &right[(i + 1) * width];
      double* out = &right[i * width];
      for (std::size_t a = 0; a < g.left_rank(); ++a) {
        const double* row = &g.data()[(a * g.mode_size() + n) * g.right_rank()];
        double s = 0.0;
        for (std::size_t b = 0; b < g.right_rank(); ++b) s += row[b] * in[b];
        out[a] = s;
      }
      right_exp[i] = right_exp[i + 1] + normalize(out, g.left_rank());
    }

    for (std::size_t i = 0; i < d; ++i) {
      const auto& g = t.core(i);
      const auto n = static_cast<std::size_t>(index[i]);
      const double* l = &left[i * width];
      const double* r = &right[(i + 1) * width];
      double local = 0.0;
      for (std::size_t a = 0; a < g.left_rank(); ++a) {
        const double* row = &g.data()[(a * g.mode_size() + n) * g.right_rank()];
        double s = 0.0;
        for (std::size_t b = 0; b < g.right_rank(); ++b) s += row[b] * r[b];
        local += l[a] * s;
      }
      const double outer_log =
          static_cast<double>(left_exp[i] + right_exp[i + 1]) * std::numbers::ln2;
      // d t / d G[a, n, b] = L[a] R[b]; dividing by t cancels the scales.
      double coeff;
      if (local > 0.0 && (outer_log > floor_log + 800.0 ||
                          std::log(local) + outer_log > floor_log)) {
        coeff = 1.0 / local;
      } else {
        coeff = std::exp(std::min(outer_log - floor_log, 700.0));
      }
      auto out = grad[i].data();
      for (std::size_t a = 0; a < g.left_rank(); ++a) {
        const double la = l[a] * coeff;
        double* dst = &out[(a * g.mode_size() + n) * g.right_rank()];
        for (std::size_t b = 0; b < g.right_rank(); ++b) dst[b] += la * r[b];
      }
    }
  }
  return grad;
}

void tt_ascent_step_inplace(TTTensor& t, const TTGradient& grad, double lr) {
  if (grad.size() != t.dim())
    throw ShapeError("gradient core count does not match tensor");
  for (std::size_t i = 0; i < t.dim(); ++i)
    if (!grad[i].same_shape(t.core(i)))
      throw ShapeError("gradient core shape mismatch at core " +
                       std::to_string(i));
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < t.dim(); ++i) {
    auto dst = t.core(i).data();
    auto src = grad[i].data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += lr * src[j];
  }
}

TTTensor tt_ascent_step(TTTensor t, const TTGradient& grad, double lr) {
  tt_ascent_step_inplace(t, grad, lr);
  return t;
}

std::vector<double> tt_full(const TTTensor& t, std::size_t max_entries) {
  if (t.full_size() > max_entries)
    throw std::length_error("tensor too large to materialize");
  // Progressive contraction: rows enumerate the leading indices.
  std::vector<double> acc{1.0};
  std::size_t rows = 1;
  std::size_t rank = 1;
  for (const auto& g : t.cores()) {
    const std::size_t n_modes = g.mode_size();
    const std::size_t r_next = g.right_rank();
    std::vector<double> next(rows * n_modes * r_next, 0.0);
    for (std::size_t row = 0; row < rows; ++row)
      for (std::size_t n = 0; n < n_modes; ++n)
        for (std::size_t a = 0; a < rank; ++a) {
          const double v = acc[row * rank + a];
          for (std::size_t b = 0; b < r_next; ++b)
            next[(row * n_modes + n) * r_next + b] += v * g(a, n, b);
        }
    acc = std::move(next);
    rows *= n_modes;
    rank = r_next;
  }
  return acc;
}

void tt_write(std::ostream& out, const TTTensor& t) {
  binio::put_magic(out, "TTT1");
  binio::put_u64(out, t.dim());
  for (auto n : t.mode_sizes()) binio::put_u64(out, n);
  for (auto r : t.ranks()) binio::put_u64(out, r);
  for (const auto& g : t.cores())
    for (double x : g.data()) binio::put_f64(out, x);
}

TTTensor tt_read(std::istream& in) {
  binio::expect_magic(in, "TTT1");
  const auto d = binio::get_u64(in);
  if (d == 0 || d > (1u << 26)) throw binio::FormatError("invalid dimension");
  std::vector<std::size_t> modes(d), ranks(d + 1);
  for (auto& n : modes) n = binio::get_u64(in);
  for (auto& r : ranks) r = binio::get_u64(in);
  std::vector<TTCore> cores;
  cores.reserve(d);
  for (std::size_t i = 0; i < d; ++i) {
    if (modes[i] == 0 || ranks[i] == 0 || ranks[i + 1] == 0 ||
        modes[i] > (1u << 20) || ranks[i] > (1u << 16) ||
        ranks[i + 1] > (1u << 16))
      throw binio::FormatError("invalid core shape");
    TTCore g(ranks[i], modes[i], ranks[i + 1]);
    for (double& x : g.data()) x = binio::get_f64(in);
    cores.push_back(std::move(g));
  }
  return TTTensor(std::move(cores));
}

std::string tt_serialize(const TTTensor& t) {
  std::ostringstream out(std::ios::binary);
  tt_write(out, t);
  return std::move(out).str();
}

TTTensor tt_deserialize(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return tt_read(in);
}

}  // namespace tetradat
