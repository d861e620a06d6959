#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace segattr {

/// Denominator guard shared by the region score and the deletion metrics.
inline constexpr double kEpsilon = 1e-6;

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a pixel selection or a target region has no pixels. The
/// harness turns this into a sample skip.
class EmptyRegion : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
using PlaneT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Plane = PlaneT<double>;

// Channel-major tensor: row c of `data` holds channel c flattened row-major,
// so a whole tensor is also a (C x H*W) matrix ready for 1x1 mixing.
template <typename Scalar>
struct Tensor3T {
  PlaneT<Scalar> data;
  int height = 0;
  int width = 0;

  Tensor3T() = default;
  Tensor3T(int channels, int h, int w)
      : data(PlaneT<Scalar>::Zero(channels, static_cast<Eigen::Index>(h) * w)), height(h), width(w) {}

  int channels() const { return static_cast<int>(data.rows()); }
  Eigen::Index pixels() const { return data.cols(); }

  Eigen::Map<PlaneT<Scalar>> channel(int c) {
    return Eigen::Map<PlaneT<Scalar>>(data.row(c).data(), height, width);
  }
  Eigen::Map<const PlaneT<Scalar>> channel(int c) const {
    return Eigen::Map<const PlaneT<Scalar>>(data.row(c).data(), height, width);
  }

  template <typename Other>
  Tensor3T<Other> cast() const {
    Tensor3T<Other> out;
    out.data = data.template cast<Other>();
    out.height = height;
    out.width = width;
    return out;
  }

  bool operator==(const Tensor3T& other) const {
    return height == other.height && width == other.width && data == other.data;
  }
};
using Tensor3 = Tensor3T<double>;

/// RGB image, values in [0,1].
using Image = Tensor3;

/// Throws InvalidInput unless `x` has three channels of finite values in [0,1].
void check_image(const Image& x);

class BinaryMask {
 public:
  using Storage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BinaryMask() = default;
  BinaryMask(int height, int width) : data_(Storage::Zero(height, width)) {}
  explicit BinaryMask(Storage data);

  /// Mask of all pixels where `pred(row, col)` holds.
  template <typename Pred>
  static BinaryMask from_predicate(int height, int width, Pred pred) {
    Storage data(height, width);
    for (int r = 0; r < height; ++r)
      for (int c = 0; c < width; ++c) data(r, c) = pred(r, c) ? 1 : 0;
    return BinaryMask(std::move(data));
  }

  int height() const { return static_cast<int>(data_.rows()); }
  int width() const { return static_cast<int>(data_.cols()); }
  Eigen::Index popcount() const { return popcount_; }
  Eigen::Index size() const { return data_.size(); }
  bool operator()(int r, int c) const { return data_(r, c) != 0; }
  const Storage& data() const { return data_; }

  void set(int r, int c, bool on);
  BinaryMask complement() const;
  BinaryMask flipped_horizontally() const;

  /// 0/1 indicator as a real plane.
  Plane as_plane() const { return data_.cast<double>(); }

  bool operator==(const BinaryMask& other) const { return data_ == other.data_; }

 private:
  Storage data_;
  Eigen::Index popcount_ = 0;
};

/// Attribution map with values in [0,1]. Built by minmax_normalize, or from
/// values already known to lie in [0,1].
class Heatmap {
 public:
  Heatmap() = default;
  static Heatmap from_normalized(Plane values);

  const Plane& values() const { return values_; }
  int height() const { return static_cast<int>(values_.rows()); }
  int width() const { return static_cast<int>(values_.cols()); }
  double operator()(int r, int c) const { return values_(r, c); }

  bool operator==(const Heatmap& other) const { return values_ == other.values_; }

 private:
  explicit Heatmap(Plane values) : values_(std::move(values)) {}
  Plane values_;
  template <typename Derived>
  friend Heatmap minmax_normalize(const Eigen::MatrixBase<Derived>& map);
};

struct Pixel {
  int row = 0;
  int col = 0;
  bool operator==(const Pixel&) const = default;
};
using PixelSet = std::vector<Pixel>;

enum class Region { inside, outside };

template <typename Derived>
Heatmap minmax_normalize(const Eigen::MatrixBase<Derived>& map) {
  using Scalar = typename Derived::Scalar;
  if (!map.allFinite()) throw InvalidInput("minmax_normalize: non-finite value in map");
  Plane out(map.rows(), map.cols());
  if (map.size() == 0) return Heatmap(std::move(out));
  const Scalar lo = map.minCoeff();
  const Scalar hi = map.maxCoeff();
  if (!(hi > lo)) {
    out.setZero();
    return Heatmap(std::move(out));
  }
  const double range = static_cast<double>(hi) - static_cast<double>(lo);
  // Division (not multiplication by a reciprocal) keeps an already
  // normalized map bit-identical.
  out = ((map.template cast<double>().array() - static_cast<double>(lo)) / range).matrix();
  return Heatmap(std::move(out));
}

/// Number of pixels a top-k selection takes from a region of `region_size`.
inline Eigen::Index topk_count(double k, Eigen::Index region_size) {
  const auto n = static_cast<Eigen::Index>(std::floor(k * static_cast<double>(region_size) + 1e-9));
  return std::max<Eigen::Index>(1, std::min(n, region_size));
}

/// Top-k fraction of `region` (M or its complement) ranked by descending
/// heatmap value; ties go to the smaller row-major index.
PixelSet topk_select(const Heatmap& a, const BinaryMask& m, double k, Region region);

/// Replaces every pixel in `s` by the per-channel mean of `x`.
template <typename Scalar>
Tensor3T<Scalar> occlude(const Tensor3T<Scalar>& x, const PixelSet& s) {
  Tensor3T<Scalar> out = x;
  if (s.empty()) return out;
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean = x.data.rowwise().mean();
  for (int c = 0; c < x.channels(); ++c) {
    auto plane = out.channel(c);
    for (const Pixel& p : s) plane(p.row, p.col) = mean(c);
  }
  return out;
}

/// Half-pixel-center linear interpolation weights from `src` to `dst`
/// samples, as a dense (dst x src) matrix with rows summing to one.
template <typename Scalar = double>
PlaneT<Scalar> interpolation_matrix(int src, int dst) {
  if (src < 1 || dst < 1) throw InvalidInput("interpolation_matrix: sizes must be positive");
  PlaneT<Scalar> r = PlaneT<Scalar>::Zero(dst, src);
  if (src == dst) {
    r.setIdentity();
    return r;
  }
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (int i = 0; i < dst; ++i) {
    double pos = (i + 0.5) * scale - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(pos));
    const int i1 = std::min(i0 + 1, src - 1);
    const double t = pos - i0;
    r(i, i0) += static_cast<Scalar>(1.0 - t);
    r(i, i1) += static_cast<Scalar>(t);
  }
  return r;
}

/// Bilinear resize with half-pixel-center alignment and clamped borders.
template <typename Derived>
PlaneT<typename Derived::Scalar> bilinear_upsample(const Eigen::MatrixBase<Derived>& map, int height, int width) {
  using Scalar = typename Derived::Scalar;
  const auto ry = interpolation_matrix<Scalar>(static_cast<int>(map.rows()), height);
  const auto rx = interpolation_matrix<Scalar>(static_cast<int>(map.cols()), width);
  return ry * map * rx.transpose();
}

/// Adjoint of bilinear_upsample: maps a gradient at (height, width) back to
/// the source grid of size (src_height, src_width).
template <typename Derived>
PlaneT<typename Derived::Scalar> bilinear_upsample_adjoint(const Eigen::MatrixBase<Derived>& grad, int src_height,
                                                           int src_width) {
  using Scalar = typename Derived::Scalar;
  const auto ry = interpolation_matrix<Scalar>(src_height, static_cast<int>(grad.rows()));
  const auto rx = interpolation_matrix<Scalar>(src_width, static_cast<int>(grad.cols()));
  return ry.transpose() * grad * rx;
}

/// Pearson correlation over flattened pixels. Both maps constant gives 1;
/// exactly one constant gives 0.
template <typename DerivedA, typename DerivedB>
double pearson(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidInput("pearson: dimension mismatch");
  const bool a_const = a.size() == 0 || a.maxCoeff() == a.minCoeff();
  const bool b_const = b.size() == 0 || b.maxCoeff() == b.minCoeff();
  if (a_const && b_const) return 1.0;
  if (a_const || b_const) return 0.0;
  const Eigen::ArrayXd da = a.template cast<double>().reshaped().array() - a.template cast<double>().mean();
  const Eigen::ArrayXd db = b.template cast<double>().reshaped().array() - b.template cast<double>().mean();
  const double r = (da * db).sum() / std::sqrt(da.square().sum() * db.square().sum());
  return std::clamp(r, -1.0, 1.0);
}

inline double pearson(const Heatmap& a, const Heatmap& b) { return pearson(a.values(), b.values()); }

template <typename Derived>
PlaneT<typename Derived::Scalar> flip_horizontal(const Eigen::MatrixBase<Derived>& map) {
  return map.rowwise().reverse();
}

template <typename Scalar>
Tensor3T<Scalar> flip_horizontal(const Tensor3T<Scalar>& x) {
  Tensor3T<Scalar> out(x.channels(), x.height, x.width);
  for (int c = 0; c < x.channels(); ++c) out.channel(c) = x.channel(c).rowwise().reverse();
  return out;
}

}  // namespace segattr
