#pragma once

#include "segattr/core.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace segattr {

enum class PerturbationKind { additive_noise, brightness, contrast, gaussian_blur, horizontal_flip };

inline constexpr std::array<PerturbationKind, 5> kPerturbationBattery = {
    PerturbationKind::additive_noise, PerturbationKind::brightness, PerturbationKind::contrast,
    PerturbationKind::gaussian_blur, PerturbationKind::horizontal_flip};

std::string_view to_string(PerturbationKind kind);
/// Accepts "additive-noise", "brightness", "contrast", "gaussian-blur",
/// "horizontal-flip".
PerturbationKind parse_perturbation_kind(std::string_view name);

/// Maps the single strength scalar onto each perturbation's native parameter.
struct PerturbationCoefficients {
  double noise_sigma = 1.0;      // noise std = coefficient * strength
  double brightness_shift = 1.0; // shift = coefficient * strength
  double contrast_gain = 1.0;    // gain = 1 + coefficient * strength
  double blur_sigma = 33.33;     // sigma in pixels = coefficient * strength
};

struct Perturbation {
  PerturbationKind kind = PerturbationKind::additive_noise;
  double strength = 0.0;
  std::uint64_t seed = 0;  // additive noise only
};

/// Applies `p` and clamps the result to [0,1].
Image apply(const Image& x, const Perturbation& p, const PerturbationCoefficients& coeffs = {});

/// Normalized 1-D Gaussian taps with radius ceil(3 sigma).
Eigen::VectorXd gaussian_kernel(double sigma);

/// Separable Gaussian blur with half-sample symmetric boundary.
Plane gaussian_blur(const Plane& plane, double sigma);

}  // namespace segattr
