#include "segattr/model.hpp"

#include "segattr/metrics.hpp"
#include "segattr/random.hpp"

#include <cmath>
#include <string>

namespace segattr {

namespace detail {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Eigen::MatrixXd im2col_reflect(const Tensor3& x, int kernel) {
  const int pad = kernel / 2;
  const int h = x.height;
  const int w = x.width;
  Eigen::MatrixXd cols(x.channels() * kernel * kernel, x.pixels());
  std::vector<int> row_index(static_cast<std::size_t>(h + 2 * pad));
  std::vector<int> col_index(static_cast<std::size_t>(w + 2 * pad));
  for (int i = 0; i < h + 2 * pad; ++i) row_index[static_cast<std::size_t>(i)] = reflect101(i - pad, h);
  for (int i = 0; i < w + 2 * pad; ++i) col_index[static_cast<std::size_t>(i)] = reflect101(i - pad, w);

  for (int ch = 0; ch < x.channels(); ++ch) {
    const auto plane = x.channel(ch);
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const Eigen::Index row = (static_cast<Eigen::Index>(ch) * kernel + ky) * kernel + kx;
        Eigen::Index p = 0;
        for (int r = 0; r < h; ++r) {
          const int sr = row_index[static_cast<std::size_t>(r + ky)];
          for (int c = 0; c < w; ++c, ++p) cols(row, p) = plane(sr, col_index[static_cast<std::size_t>(c + kx)]);
        }
      }
    }
  }
  return cols;
}

Tensor3 conv2d(const Tensor3& x, const ConvLayer& layer) {
  Tensor3 out;
  out.height = x.height;
  out.width = x.width;
  if (layer.weight.cols() != x.channels() * layer.kernel * layer.kernel)
    throw InvalidInput("conv2d: weight shape does not match input channels");
  if (layer.kernel == 1) {
    out.data = layer.weight * x.data;
  } else {
    out.data = layer.weight * im2col_reflect(x, layer.kernel);
  }
  out.data.colwise() += layer.bias;
  return out;
}

}  // namespace detail

namespace {

ConvLayer random_layer(Rng& rng, int out, int in, int kernel) {
  ConvLayer layer;
  layer.kernel = kernel;
  const int fan_in = in * kernel * kernel;
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  layer.weight.resize(out, fan_in);
  for (int o = 0; o < out; ++o)
    for (int i = 0; i < fan_in; ++i) layer.weight(o, i) = (rng.uniform() - 0.5) * scale;
  layer.bias.resize(out);
  for (int o = 0; o < out; ++o) layer.bias(o) = (rng.uniform() - 0.5) * scale;
  return layer;
}

void relu_inplace(Tensor3& t) { t.data = t.data.cwiseMax(0.0); }

void check_region_args(const Image& x, int class_id, int num_classes, const BinaryMask& mask) {
  if (class_id < 0 || class_id >= num_classes)
    throw InvalidInput("class id " + std::to_string(class_id) + " out of range");
  if (mask.height() != x.height || mask.width() != x.width) throw InvalidInput("mask shape does not match image");
  if (mask.popcount() == 0) throw EmptyRegion("target mask is empty");
}

}  // namespace

MicroWeights MicroWeights::random(std::uint64_t seed, int num_classes) {
  if (num_classes < 2) throw InvalidInput("micro model needs at least 2 classes");
  Rng rng(seed);
  MicroWeights w;
  w.conv1 = random_layer(rng, MicroModel::kFeatureChannels, 3, 3);
  w.conv2 = random_layer(rng, MicroModel::kFeatureChannels, MicroModel::kFeatureChannels, 3);
  w.head = random_layer(rng, num_classes, MicroModel::kFeatureChannels, 1);
  return w;
}

MicroModel::MicroModel(std::uint64_t seed, int num_classes) : weights_(MicroWeights::random(seed, num_classes)) {}

MicroModel::MicroModel(MicroWeights weights) : weights_(std::move(weights)) {
  if (weights_.num_classes() < 2) throw InvalidInput("micro model needs at least 2 classes");
}

std::unique_ptr<MicroModel> micro_model_new(std::uint64_t seed, int num_classes) {
  return std::make_unique<MicroModel>(seed, num_classes);
}

FeatureShape MicroModel::feature_shape(int height, int width) const {
  return {kFeatureChannels, height, width};
}

Tensor3 MicroModel::features(const Image& x) const {
  Tensor3 hidden = detail::conv2d(x, weights_.conv1);
  relu_inplace(hidden);
  Tensor3 feat = detail::conv2d(hidden, weights_.conv2);
  relu_inplace(feat);
  return feat;
}

Tensor3 softmax_channels(const Tensor3& logits) {
  Tensor3 out = logits;
  const Eigen::RowVectorXd peak = logits.data.colwise().maxCoeff();
  out.data = (logits.data.rowwise() - peak).array().exp().matrix();
  const Eigen::RowVectorXd total = out.data.colwise().sum();
  out.data.array().rowwise() /= total.array();
  return out;
}

ProbMap MicroModel::head_probs(const Tensor3& features, int height, int width) const {
  const Tensor3 low = detail::conv2d(features, weights_.head);
  Tensor3 logits(low.channels(), height, width);
  if (low.height == height && low.width == width) {
    logits.data = low.data;
  } else {
    for (int k = 0; k < low.channels(); ++k) logits.channel(k) = bilinear_upsample(low.channel(k), height, width);
  }
  return softmax_channels(logits);
}

double MicroModel::head_score(const Tensor3& features, int height, int width, int class_id,
                              const BinaryMask& mask) const {
  return region_score(head_probs(features, height, width), class_id, mask);
}

ProbMap MicroModel::predict(const Image& x) {
  check_image(x);
  return head_probs(features(x), x.height, x.width);
}

FeatureBundle MicroModel::features_and_gradient(const Image& x, int class_id, const BinaryMask& mask) {
  check_image(x);
  check_region_args(x, class_id, num_classes(), mask);

  FeatureBundle bundle;
  bundle.activations = features(x);
  const ProbMap probs = head_probs(bundle.activations, x.height, x.width);

  // d s / d p_c(u,v) = M(u,v) / (|M| + eps); chain through the softmax:
  // d s / d z_k = w * p_c * (delta_kc - p_k).
  const Eigen::RowVectorXd weight =
      mask.as_plane().reshaped<Eigen::RowMajor>().transpose() / (static_cast<double>(mask.popcount()) + kEpsilon);
  const Eigen::RowVectorXd wp = weight.cwiseProduct(probs.data.row(class_id));
  Tensor3 dlogits = probs;
  dlogits.data = -(probs.data.array().rowwise() * wp.array()).matrix();
  dlogits.data.row(class_id) += wp;

  const FeatureShape fs = feature_shape(x.height, x.width);
  Tensor3 dlow(num_classes(), fs.height, fs.width);
  if (fs.height == x.height && fs.width == x.width) {
    dlow.data = dlogits.data;
  } else {
    for (int k = 0; k < num_classes(); ++k)
      dlow.channel(k) = bilinear_upsample_adjoint(dlogits.channel(k), fs.height, fs.width);
  }

  bundle.gradient.height = fs.height;
  bundle.gradient.width = fs.width;
  bundle.gradient.data = weights_.head.weight.transpose() * dlow.data;
  return bundle;
}

Tensor3 fd_gradient_oracle(const FeatureHead& model, const Image& x, int class_id, const BinaryMask& mask,
                           double step) {
  if (!(step > 0.0)) throw InvalidInput("finite-difference step must be positive");
  Tensor3 feat = model.features(x);
  Tensor3 grad(feat.channels(), feat.height, feat.width);
  for (Eigen::Index ch = 0; ch < feat.data.rows(); ++ch) {
    for (Eigen::Index p = 0; p < feat.data.cols(); ++p) {
      const double saved = feat.data(ch, p);
      feat.data(ch, p) = saved + step;
      const double up = model.head_score(feat, x.height, x.width, class_id, mask);
      feat.data(ch, p) = saved - step;
      const double down = model.head_score(feat, x.height, x.width, class_id, mask);
      feat.data(ch, p) = saved;
      grad.data(ch, p) = (up - down) / (2.0 * step);
    }
  }
  return grad;
}

double max_relative_error(const Tensor3& analytic, const Tensor3& reference, double floor) {
  if (analytic.data.rows() != reference.data.rows() || analytic.data.cols() != reference.data.cols())
    throw InvalidInput("max_relative_error: shape mismatch");
  const auto a = analytic.data.array();
  const auto f = reference.data.array();
  const Eigen::ArrayXXd denom = a.abs().max(f.abs()).max(floor);
  return ((a - f).abs() / denom).maxCoeff();
}

}  // namespace segattr
