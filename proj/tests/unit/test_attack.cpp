#include <doctest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "tetradat/attack.hpp"
#include "tetradat/desk.hpp"
#include "tetradat/hsv.hpp"

using namespace tetradat;

namespace {

class Constant final : public Classifier {
 public:
  std::string name() const override { return "constant"; }
  std::size_t num_classes() const override { return 3; }
  Prediction predict(const Image&) const override { return make_prediction({0.2, 0.5, 0.3}); }
};

// Flips to class 1 once some pixel of a saturated reference loses nearly all
// of its saturation, which only a full-strength desaturation can do.
class SaturationGuard final : public Classifier {
 public:
  std::string name() const override { return "guard"; }
  std::size_t num_classes() const override { return 2; }
  Prediction predict(const Image& img) const override {
    for (std::size_t r = 0; r < img.height(); ++r)
      for (std::size_t c = 0; c < img.width(); ++c) {
        const auto px = img.pixel(r, c);
        if (rgb_to_hsv({px[0], px[1], px[2]}).s < 0.1) return make_prediction({0.3, 0.7});
      }
    return make_prediction({0.8, 0.2});
  }
};

DenseClassifier favour_class(std::size_t h, std::size_t w, std::size_t classes, int c) {
  DenseLayer layer{Eigen::MatrixXd::Zero(classes, h * w * 3), Eigen::VectorXd::Zero(classes)};
  layer.bias[c] = 1.0;
  return DenseClassifier(h, w, {layer});
}

PixelSelection first_pixels(std::size_t n, std::size_t width) {
  PixelSelection s;
  for (std::size_t i = 0; i < n; ++i) s.positions.push_back({i / width, i % width});
  return s;
}

}  // namespace

TEST_SUITE("hsv") {

TEST_CASE("reference conversions") {
  auto near = [](const Rgb& a, const Rgb& b) {
    for (int i = 0; i < 3; ++i)
      if (std::abs(a[i] - b[i]) > 1e-12) return false;
    return true;
  };
  Hsv h = rgb_to_hsv({1, 0, 0});
  CHECK(h.h == 0.0);
  CHECK(h.s == 1.0);
  CHECK(h.v == 1.0);
  CHECK(rgb_to_hsv({0, 1, 0}).h == doctest::Approx(120.0));
  CHECK(rgb_to_hsv({0, 0, 1}).h == doctest::Approx(240.0));
  CHECK(rgb_to_hsv({1, 1, 0}).h == doctest::Approx(60.0));
  CHECK(rgb_to_hsv({1, 0, 1}).h == doctest::Approx(300.0));
  h = rgb_to_hsv({0.5, 0.5, 0.5});
  CHECK(h.h == 0.0);
  CHECK(h.s == 0.0);
  CHECK(h.v == 0.5);
  CHECK(near(hsv_to_rgb({30.0, 0.5, 0.8}), {0.8, 0.6, 0.4}));
  CHECK(near(hsv_to_rgb({200.0, 1.0, 1.0}), {0.0, 2.0 / 3.0, 1.0}));
  CHECK(near(hsv_to_rgb({359.999999, 0.0, 0.25}), {0.25, 0.25, 0.25}));
}

TEST_CASE("round trip on the 17-level lattice") {
  for (int r = 0; r <= 16; ++r)
    for (int g = 0; g <= 16; ++g)
      for (int b = 0; b <= 16; ++b) {
        const Rgb in{r / 16.0, g / 16.0, b / 16.0};
        const Hsv hsv = rgb_to_hsv(in);
        CHECK((hsv.h >= 0.0 && hsv.h < 360.0));
        const auto out = hsv_to_rgb(hsv);
        for (int c = 0; c < 3; ++c) CHECK(std::abs(out[c] - in[c]) <= 1e-9);
      }
}

}

TEST_SUITE("attack") {

TEST_CASE("perturbation grid") {
  CHECK(encode_grid(1.0, 3) == std::vector<double>{-1.0, 0.0, 1.0});
  CHECK(encode_grid(0.5, 5) == std::vector<double>{-0.5, -0.25, 0.0, 0.25, 0.5});
  for (double eps : {0.1, 0.3, 0.77})
    for (std::size_t n : {3u, 5u, 9u}) {
      const auto g = encode_grid(eps, n);
      for (std::size_t i = 0; i < n; ++i) CHECK(g[i] == doctest::Approx(-g[n - 1 - i]));
      CHECK(g[n / 2] == 0.0);
    }
  CHECK_THROWS_AS(encode_grid(1.0, 1), std::invalid_argument);
}

TEST_CASE("perturb") {
  Image img(2, 3, 0.0);
  img.pixel(0, 0)[0] = 1.0;  // pure red
  for (auto& x : img.pixel(0, 1)) x = 0.5;
  img.pixel(1, 2)[1] = 0.4;
  const auto sel = first_pixels(2, 3);

  SUBCASE("all keep is the identity") {
    const std::vector<int> keep{kKeep, kKeep};
    CHECK(perturb(img, keep, sel, 1.0) == img);
  }
  SUBCASE("brightening pure red clamps at V = 1") {
    const std::vector<int> n{kBrighten, kKeep};
    CHECK(perturb(img, n, sel, 0.5) == img);
  }
  SUBCASE("brightening mid gray") {
    const std::vector<int> n{kKeep, kBrighten};
    const auto out = perturb(img, n, sel, 0.25);
    for (double x : out.pixel(0, 1)) CHECK(x == doctest::Approx(0.75).epsilon(1e-15));
  }
  SUBCASE("desaturating red") {
    const std::vector<int> n{kDesaturate, kKeep};
    const auto out = perturb(img, n, sel, 0.5);
    CHECK(out.pixel(0, 0)[0] == doctest::Approx(1.0));
    CHECK(out.pixel(0, 0)[1] == doctest::Approx(0.5));
    CHECK(out.pixel(0, 0)[2] == doctest::Approx(0.5));
    const auto gray = perturb(img, n, sel, 1.0);
    for (double x : gray.pixel(0, 0)) CHECK(x == doctest::Approx(1.0));
  }
  SUBCASE("unselected pixels are copied bitwise") {
    const std::vector<int> n{kDesaturate, kBrighten};
    const auto out = perturb(img, n, sel, 1.0);
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        if (r == 1 || c == 2)
          for (std::size_t k = 0; k < 3; ++k) CHECK(out.at(r, c, k) == img.at(r, c, k));
  }
  SUBCASE("invalid arguments") {
    const std::vector<int> bad{3, kKeep};
    CHECK_THROWS_AS(perturb(img, bad, sel, 1.0), std::out_of_range);
    const std::vector<int> neg{-1, kKeep};
    CHECK_THROWS_AS(perturb(img, neg, sel, 1.0), std::out_of_range);
    const std::vector<int> ok{kKeep, kKeep};
    CHECK_THROWS_AS(perturb(img, ok, sel, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(perturb(img, ok, sel, 1.5), std::invalid_argument);
    const std::vector<int> short_n{kKeep};
    CHECK_THROWS_AS(perturb(img, short_n, sel, 1.0), std::invalid_argument);
  }
}

TEST_CASE("amplitude bound and range") {
  const auto img = testing::random_image(8, 8, 3);
  const auto sel = first_pixels(40, 8);
  std::mt19937_64 rng(5);
  for (double eps : {1.0, 0.5, 0.125}) {
    std::vector<int> n(40);
    for (auto& a : n) a = static_cast<int>(rng() % 3);
    const auto out = perturb(img, n, sel, eps);
    CHECK_NOTHROW(out.check_range());
    for (std::size_t i = 0; i < 40; ++i) {
      const auto p = sel.positions[i];
      const auto a = img.pixel(p.row, p.col);
      const auto b = out.pixel(p.row, p.col);
      const Hsv ha = rgb_to_hsv({a[0], a[1], a[2]});
      const Hsv hb = rgb_to_hsv({b[0], b[1], b[2]});
      CHECK(std::abs(ha.s - hb.s) <= eps + 1e-12);
      CHECK(std::abs(ha.v - hb.v) <= eps + 1e-12);
    }
  }
}

TEST_CASE("norms") {
  const Image a(3, 3, 0.2);
  CHECK(compute_norms(a, a).l1 == 0.0);
  Image c(3, 3, 0.0), d(3, 3, 0.0);
  d.at(2, 1, 1) = 1.0;
  const auto n = compute_norms(c, d);
  CHECK(n.l1 == 255.0);
  CHECK(n.l2 == 255.0);
  CHECK(n.linf == 255.0);

  const auto x = testing::random_image(5, 4, 1);
  const auto y = testing::random_image(5, 4, 2);
  double l1 = 0.0, sq = 0.0, linf = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = 255.0 * x.values()[i] - 255.0 * y.values()[i];
    l1 += std::abs(diff);
    sq += diff * diff;
    linf = std::max(linf, std::abs(diff));
  }
  const auto m = compute_norms(x, y);
  CHECK(std::abs(m.l1 - l1) <= 1e-9 * l1);
  CHECK(std::abs(m.l2 - std::sqrt(sq)) <= 1e-9 * std::sqrt(sq));
  CHECK(std::abs(m.linf - linf) <= 1e-9);
  CHECK_THROWS_AS(compute_norms(x, Image(4, 5)), std::invalid_argument);
}

TEST_CASE("config checks") {
  AttackConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.resolved_d_hat(Image(32, 32)) == 102);
  CHECK(c.resolved_d_hat(Image(3, 3)) == 1);
  c.d_hat = 10;
  CHECK_THROWS_AS(c.resolved_d_hat(Image(3, 3)), std::invalid_argument);
  c = AttackConfig{};
  c.epsilon0 = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AttackConfig{};
  c.budget = 99;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = AttackConfig{};
  c.attribution_steps = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("a constant classifier is never fooled") {
  const Constant constant;
  QueryEndpoint ep(constant);
  const auto aux = favour_class(4, 4, 3, 1);
  const auto img = testing::random_image(4, 4, 6);
  AttackConfig cfg;
  cfg.budget = 1000;
  cfg.d_hat = 5;
  const auto r = tetradat::tetradat(ep, aux, img, cfg);
  CHECK_FALSE(r.success);
  CHECK(r.queries == 1000);
  CHECK(ep.queries() == 1001);
  CHECK(r.original_class == 1);
  CHECK(r.adversarial_class == 1);
  CHECK(r.epsilons == std::vector<double>{1.0});
  CHECK(r.final_epsilon == 1.0);
}

TEST_CASE("the auxiliary model must agree") {
  const Constant constant;
  QueryEndpoint ep(constant);
  const auto aux = favour_class(4, 4, 3, 0);
  CHECK_THROWS_AS(tetradat::tetradat(ep, aux, testing::random_image(4, 4, 1), AttackConfig{}), AttackRefused);
}

TEST_CASE("last success is returned when a later run fails") {
  Image img(4, 4, 0.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c) img.pixel(r, c)[0] = 0.6;  // saturated dark red
  const SaturationGuard guard;
  QueryEndpoint ep(guard);
  const auto aux = favour_class(4, 4, 2, 0);
  AttackConfig cfg;
  cfg.d_hat = 4;
  cfg.budget = 600;
  std::vector<AttackRun> runs;
  const auto r = tetradat::tetradat(ep, aux, img, cfg, [&](const AttackRun& run) { runs.push_back(run); });
  REQUIRE(runs.size() == 2);
  CHECK(runs[0].success);
  CHECK_FALSE(runs[1].success);
  CHECK(runs[0].queries + runs[1].queries == 600);
  CHECK(r.success);
  CHECK(r.final_epsilon == 1.0);
  CHECK(r.adversarial_class == 1);
  CHECK(r.epsilons == std::vector<double>{1.0, 0.5});
  CHECK(guard.predict(r.adversarial).top_class == 1);
  CHECK(ep.queries() <= cfg.budget + 1);
}

TEST_CASE("desk attack: locality, halving and warm starts") {
  const auto m = load_weights(testing::data_dir() / "desk_model.nnw");
  const auto s = desk::synthetic_image(desk::kEvalDataSeed, 0);
  QueryEndpoint ep(m);
  AttackConfig cfg;
  cfg.budget = 3000;
  std::vector<AttackRun> runs;
  const auto r = tetradat::tetradat(ep, m, s.image, cfg, [&](const AttackRun& run) { runs.push_back(run); });

  CHECK(r.selection.d_hat() == 102);
  CHECK(r.success == (r.adversarial_class != r.original_class));
  CHECK(r.queries <= cfg.budget);
  CHECK(ep.queries() == r.queries + 1);
  REQUIRE(r.success);
  CHECK(m.predict(r.adversarial).top_class == r.adversarial_class);

  std::set<std::pair<std::size_t, std::size_t>> chosen;
  for (const auto& p : r.selection.positions) chosen.insert(std::make_pair(p.row, p.col));
  CHECK(chosen.size() == 102);
  for (std::size_t row = 0; row < 32; ++row)
    for (std::size_t col = 0; col < 32; ++col)
      if (!chosen.count({row, col}))
        for (std::size_t k = 0; k < 3; ++k) CHECK(r.adversarial.at(row, col, k) == s.image.at(row, col, k));

  const auto n = compute_norms(s.image, r.adversarial);
  CHECK(r.l1 == n.l1);
  CHECK(r.l2 == n.l2);
  CHECK(r.linf == n.linf);

  REQUIRE(runs.size() == r.epsilons.size());
  REQUIRE(runs.size() >= 2);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    CHECK(runs[i].index == i);
    CHECK(runs[i].epsilon == std::ldexp(cfg.epsilon0, -static_cast<int>(i)));
    CHECK(r.epsilons[i] == runs[i].epsilon);
    if (i == 0) {
      CHECK_FALSE(runs[i].entering.has_value());
    } else {
      REQUIRE(runs[i].entering.has_value());
      CHECK(tt_serialize(*runs[i].entering) == tt_serialize(runs[i - 1].exiting));
    }
  }
  std::size_t total = 0;
  for (const auto& run : runs) total += run.queries;
  CHECK(total == r.queries);
}

}
