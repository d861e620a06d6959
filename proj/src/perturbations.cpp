#include "segattr/perturbations.hpp"

#include "segattr/random.hpp"

#include <cmath>
#include <string>

namespace segattr {

std::string_view to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::additive_noise: return "additive-noise";
    case PerturbationKind::brightness: return "brightness";
    case PerturbationKind::contrast: return "contrast";
    case PerturbationKind::gaussian_blur: return "gaussian-blur";
    case PerturbationKind::horizontal_flip: return "horizontal-flip";
  }
  throw InvalidInput("unknown perturbation kind");
}

PerturbationKind parse_perturbation_kind(std::string_view name) {
  for (PerturbationKind kind : kPerturbationBattery)
    if (to_string(kind) == name) return kind;
  throw InvalidInput("unknown perturbation kind: " + std::string(name));
}

namespace {

// Half-sample symmetric extension: -1 -> 0, n -> n-1.
int reflect_symmetric(int i, int n) {
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

Image clamped(Image x) {
  x.data = x.data.cwiseMax(0.0).cwiseMin(1.0);
  return x;
}

}  // namespace

Eigen::VectorXd gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) return Eigen::VectorXd::Ones(1);
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  Eigen::VectorXd taps(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) taps(i + radius) = std::exp(-0.5 * (i * i) / (sigma * sigma));
  return taps / taps.sum();
}

Plane gaussian_blur(const Plane& plane, double sigma) {
  const Eigen::VectorXd taps = gaussian_kernel(sigma);
  const int radius = static_cast<int>(taps.size() / 2);
  if (radius == 0) return plane;
  const int h = static_cast<int>(plane.rows());
  const int w = static_cast<int>(plane.cols());

  Plane horizontal(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += taps(t + radius) * plane(r, reflect_symmetric(c + t, w));
      horizontal(r, c) = acc;
    }
  }
  Plane out(h, w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) acc += taps(t + radius) * horizontal(reflect_symmetric(r + t, h), c);
      out(r, c) = acc;
    }
  }
  return out;
}

Image apply(const Image& x, const Perturbation& p, const PerturbationCoefficients& coeffs) {
  if (!std::isfinite(p.strength) || p.strength < 0.0) throw InvalidInput("perturbation strength must be finite and >= 0");
  Image out = x;
  switch (p.kind) {
    case PerturbationKind::additive_noise: {
      const double sigma = coeffs.noise_sigma * p.strength;
      Rng rng(p.seed);
      for (Eigen::Index i = 0; i < out.data.size(); ++i) out.data.data()[i] += sigma * rng.normal();
      return clamped(std::move(out));
    }
    case PerturbationKind::brightness:
      out.data.array() += coeffs.brightness_shift * p.strength;
      return clamped(std::move(out));
    case PerturbationKind::contrast: {
      const double gain = 1.0 + coeffs.contrast_gain * p.strength;
      const Eigen::VectorXd mean = x.data.rowwise().mean();
      out.data = ((x.data.colwise() - mean) * gain).colwise() + mean;
      return clamped(std::move(out));
    }
    case PerturbationKind::gaussian_blur: {
      const double sigma = coeffs.blur_sigma * p.strength;
      for (int c = 0; c < out.channels(); ++c) out.channel(c) = gaussian_blur(Plane(x.channel(c)), sigma);
      return clamped(std::move(out));
    }
    case PerturbationKind::horizontal_flip:
      return flip_horizontal(x);
  }
  throw InvalidInput("unknown perturbation kind");
}

}  // namespace segattr
