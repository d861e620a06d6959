#pragma once

#include "segattr/core.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>

namespace segattr {

/// Failure inside a model backend (remote process died, malformed reply).
class AdapterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const FeatureShape&) const = default;
};

/// Activations of the feature layer and the gradient of the region score
/// with respect to them, both (C_f x h*w).
struct FeatureBundle {
  Tensor3 activations;
  Tensor3 gradient;
};

/// Per-pixel softmax class probabilities, (K x H*W).
using ProbMap = Tensor3;

/// What every attribution method and metric consumes from a segmentation
/// model. One instance is used by one worker at a time.
class ModelAdapter {
 public:
  virtual ~ModelAdapter() = default;

  virtual int num_classes() const = 0;
  virtual FeatureShape feature_shape(int height, int width) const = 0;

  /// Softmax probabilities at input resolution.
  virtual ProbMap predict(const Image& x) = 0;

  /// Feature activations plus d s_c(x, M) / d activations.
  virtual FeatureBundle features_and_gradient(const Image& x, int class_id, const BinaryMask& mask) = 0;
};

/// Adapters whose post-feature head can be evaluated on its own. The finite
/// difference oracle needs this to perturb activations directly.
class FeatureHead {
 public:
  virtual ~FeatureHead() = default;
  virtual Tensor3 features(const Image& x) const = 0;
  virtual double head_score(const Tensor3& features, int height, int width, int class_id,
                            const BinaryMask& mask) const = 0;
};

/// 3x3 convolution weights as (out x in*9) in (channel, ky, kx) order.
struct ConvLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  int kernel = 3;
};

struct MicroWeights {
  ConvLayer conv1;  // 3 -> 8, 3x3
  ConvLayer conv2;  // 8 -> 8, 3x3, feature layer after ReLU
  ConvLayer head;   // 8 -> K, 1x1

  int num_classes() const { return static_cast<int>(head.weight.rows()); }
  static MicroWeights random(std::uint64_t seed, int num_classes);
};

/// conv3x3(3->8) -> ReLU -> conv3x3(8->8) -> ReLU [features] -> conv1x1(8->K)
/// -> bilinear upsample -> softmax. Stride 1, reflect padding.
class MicroModel final : public ModelAdapter, public FeatureHead {
 public:
  static constexpr int kFeatureChannels = 8;

  MicroModel(std::uint64_t seed, int num_classes);
  explicit MicroModel(MicroWeights weights);

  const MicroWeights& weights() const { return weights_; }

  int num_classes() const override { return weights_.num_classes(); }
  FeatureShape feature_shape(int height, int width) const override;
  ProbMap predict(const Image& x) override;
  FeatureBundle features_and_gradient(const Image& x, int class_id, const BinaryMask& mask) override;

  Tensor3 features(const Image& x) const override;
  double head_score(const Tensor3& features, int height, int width, int class_id,
                    const BinaryMask& mask) const override;

  ProbMap head_probs(const Tensor3& features, int height, int width) const;

 private:
  MicroWeights weights_;
};

std::unique_ptr<MicroModel> micro_model_new(std::uint64_t seed, int num_classes);

/// Column-wise softmax of a (K x N) logit matrix.
Tensor3 softmax_channels(const Tensor3& logits);

/// Central differences of the region score with respect to every feature
/// activation, evaluated through the head only.
Tensor3 fd_gradient_oracle(const FeatureHead& model, const Image& x, int class_id, const BinaryMask& mask,
                           double step);

/// Elementwise max of |a-f| / max(|a|, |f|, floor).
double max_relative_error(const Tensor3& analytic, const Tensor3& reference, double floor = 1e-8);

namespace detail {
/// Index into [0, n) under reflect-101 padding (-1 -> 1, n -> n-2).
int reflect101(int i, int n);
/// (in*k*k x H*W) patch matrix for a stride-1 k x k convolution.
Eigen::MatrixXd im2col_reflect(const Tensor3& x, int kernel);
Tensor3 conv2d(const Tensor3& x, const ConvLayer& layer);
}  // namespace detail

}  // namespace segattr
