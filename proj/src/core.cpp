#include "segattr/core.hpp"

namespace segattr {

void check_image(const Image& x) {
  if (x.channels() != 3) throw InvalidInput("image must have 3 channels");
  if (x.height < 1 || x.width < 1) throw InvalidInput("image must be non-empty");
  if (x.pixels() != static_cast<Eigen::Index>(x.height) * x.width) throw InvalidInput("image storage does not match its shape");
  if (!x.data.allFinite()) throw InvalidInput("image has non-finite values");
  if (x.data.minCoeff() < 0.0 || x.data.maxCoeff() > 1.0) throw InvalidInput("image values must lie in [0,1]");
}

BinaryMask::BinaryMask(Storage data) : data_(std::move(data)) {
  data_ = data_.unaryExpr([](std::uint8_t v) -> std::uint8_t { return v != 0 ? 1 : 0; });
  popcount_ = data_.cast<Eigen::Index>().sum();
}

void BinaryMask::set(int r, int c, bool on) {
  const std::uint8_t v = on ? 1 : 0;
  if (data_(r, c) == v) return;
  popcount_ += on ? 1 : -1;
  data_(r, c) = v;
}

BinaryMask BinaryMask::complement() const {
  return BinaryMask(data_.unaryExpr([](std::uint8_t v) -> std::uint8_t { return v ? 0 : 1; }));
}

BinaryMask BinaryMask::flipped_horizontally() const { return BinaryMask(Storage(data_.rowwise().reverse())); }

Heatmap Heatmap::from_normalized(Plane values) {
  if (!values.allFinite()) throw InvalidInput("heatmap has non-finite values");
  if (values.size() > 0 && (values.minCoeff() < 0.0 || values.maxCoeff() > 1.0))
    throw InvalidInput("heatmap values must lie in [0,1]");
  return Heatmap(std::move(values));
}

PixelSet topk_select(const Heatmap& a, const BinaryMask& m, double k, Region region) {
  if (a.height() != m.height() || a.width() != m.width()) throw InvalidInput("topk_select: heatmap and mask differ in shape");
  if (!(k > 0.0 && k <= 1.0)) throw InvalidInput("topk_select: k must lie in (0,1]");

  const bool want = region == Region::inside;
  std::vector<Eigen::Index> candidates;
  candidates.reserve(static_cast<std::size_t>(m.size()));
  const auto& values = a.values();
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if ((m.data()(i) != 0) == want) candidates.push_back(i);
  }
  if (candidates.empty())
    throw EmptyRegion(want ? "topk_select: target mask is empty" : "topk_select: mask complement is empty");

  const auto n = static_cast<std::size_t>(topk_count(k, static_cast<Eigen::Index>(candidates.size())));
  auto ranked_before = [&values](Eigen::Index lhs, Eigen::Index rhs) {
    const double vl = values(lhs);
    const double vr = values(rhs);
    if (vl != vr) return vl > vr;
    return lhs < rhs;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(),
                    ranked_before);

  PixelSet out;
  out.reserve(n);
  const auto width = static_cast<Eigen::Index>(m.width());
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({static_cast<int>(candidates[i] / width), static_cast<int>(candidates[i] % width)});
  return out;
}

}  // namespace segattr
