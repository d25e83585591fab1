#include "tetradat/hsv.hpp"

#include <algorithm>
#include <cmath>

namespace tetradat {

Hsv rgb_to_hsv(const Rgb& rgb) {
  const auto [r, g, b] = rgb;
  const double max = std::max({r, g, b});
  const double min = std::min({r, g, b});
  const double delta = max - min;
  Hsv out{0.0, 0.0, max};
  if (max <= 0.0 || delta <= 0.0) return out;
  out.s = delta / max;
  double h;
  if (max == r)
    h = (g - b) / delta;
  else if (max == g)
    h = 2.0 + (b - r) / delta;
  else
    h = 4.0 + (r - g) / delta;
  h *= 60.0;
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

Rgb hsv_to_rgb(const Hsv& hsv) {
  const double v = hsv.v;
  const double s = hsv.s;
  if (s <= 0.0) return {v, v, v};
  double h = std::fmod(hsv.h, 360.0);
  if (h < 0.0) h += 360.0;
  h /= 60.0;
  const int sector = std::min(static_cast<int>(h), 5);
  const double f = h - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0:
      return {v, t, p};
    case 1:
      return {q, v, p};
    case 2:
      return {p, v, t};
    case 3:
      return {p, q, v};
    case 4:
      return {t, p, v};
    default:
      return {v, p, q};
  }
}

}  // namespace tetradat
