#pragma once

#include "segattr/core.hpp"
#include "segattr/model.hpp"
#include "segattr/random.hpp"

#include <functional>

namespace segattr::testing {

inline Image random_image(std::uint64_t seed, int h, int w) {
  Rng rng(seed);
  Image x(3, h, w);
  for (Eigen::Index i = 0; i < x.data.size(); ++i) x.data.data()[i] = rng.uniform();
  return x;
}

inline BinaryMask box_mask(int h, int w, int r0, int c0, int r1, int c1) {
  return BinaryMask::from_predicate(h, w, [&](int r, int c) { return r >= r0 && r < r1 && c >= c0 && c < c1; });
}

// Adapter whose class maps are given by a function of the image. Features
// are the image itself and the gradient is supplied by the test.
class ScriptedAdapter : public ModelAdapter {
 public:
  using ProbFn = std::function<ProbMap(const Image&)>;
  using GradFn = std::function<FeatureBundle(const Image&, int, const BinaryMask&)>;

  ScriptedAdapter(int classes, ProbFn probs, GradFn grad = {})
      : classes_(classes), probs_(std::move(probs)), grad_(std::move(grad)) {}

  int num_classes() const override { return classes_; }
  FeatureShape feature_shape(int h, int w) const override { return {3, h, w}; }
  ProbMap predict(const Image& x) override {
    ++predict_calls;
    return probs_(x);
  }
  FeatureBundle features_and_gradient(const Image& x, int c, const BinaryMask& m) override {
    ++grad_calls;
    if (grad_) return grad_(x, c, m);
    FeatureBundle b{x, Tensor3(3, x.height, x.width)};
    return b;
  }

  int predict_calls = 0;
  int grad_calls = 0;

 private:
  int classes_;
  ProbFn probs_;
  GradFn grad_;
};

// Two classes; class 1 probability is fixed everywhere.
inline ScriptedAdapter constant_head(double p1 = 0.7) {
  return ScriptedAdapter(2, [p1](const Image& x) {
    ProbMap p(2, x.height, x.width);
    p.data.row(0).setConstant(1.0 - p1);
    p.data.row(1).setConstant(p1);
    return p;
  });
}

// Two classes; class 1 probability is the red channel.
inline ScriptedAdapter red_channel_head() {
  return ScriptedAdapter(2, [](const Image& x) {
    ProbMap p(2, x.height, x.width);
    p.data.row(1) = x.data.row(0);
    p.data.row(0) = 1.0 - x.data.row(0).array();
    return p;
  });
}

}  // namespace segattr::testing
