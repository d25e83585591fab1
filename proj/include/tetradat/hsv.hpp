#pragma once

#include <array>

namespace tetradat {

/// Hue in degrees [0, 360); saturation and value in [0, 1].
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

using Rgb = std::array<double, 3>;

// Hexagonal-cone model. Grays map to h = 0, s = 0.
Hsv rgb_to_hsv(const Rgb& rgb);
Rgb hsv_to_rgb(const Hsv& hsv);

}  // namespace tetradat
