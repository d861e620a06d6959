#include "segattr/metrics.hpp"

#include <chrono>
#include <cmath>

namespace segattr {

double region_score(const ProbMap& probs, int class_id, const BinaryMask& mask) {
  if (class_id < 0 || class_id >= probs.channels()) throw InvalidInput("region_score: class id out of range");
  if (mask.height() != probs.height || mask.width() != probs.width)
    throw InvalidInput("region_score: mask shape does not match probability map");
  const Eigen::Map<const Eigen::Matrix<std::uint8_t, 1, Eigen::Dynamic>> flat(mask.data().data(), mask.size());
  const double masked = probs.data.row(class_id).cwiseProduct(flat.cast<double>()).sum();
  return masked / (static_cast<double>(mask.popcount()) + kEpsilon);
}

double region_score(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask) {
  return region_score(adapter.predict(x), class_id, mask);
}

double deletion_drop(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, const PixelSet& s,
                     double base_score) {
  const double after = region_score(adapter, occlude(x, s), class_id, mask);
  return (base_score - after) / (std::abs(base_score) + kEpsilon);
}

double deletion_drop(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, const PixelSet& s) {
  return deletion_drop(adapter, x, class_id, mask, s, region_score(adapter, x, class_id, mask));
}

double target_deletion_drop(ModelAdapter& adapter, const Image& x, const Heatmap& a, int class_id,
                            const BinaryMask& mask, double k) {
  return deletion_drop(adapter, x, class_id, mask, topk_select(a, mask, k, Region::inside));
}

double offtarget_deletion_drop(ModelAdapter& adapter, const Image& x, const Heatmap& a, int class_id,
                               const BinaryMask& mask, double k) {
  return deletion_drop(adapter, x, class_id, mask, topk_select(a, mask, k, Region::outside));
}

double leak_abs(double tdd, double odd) { return std::abs(odd) / (std::abs(tdd) + kEpsilon); }

double reported_leak_abs(double tdd, double odd) { return std::min(leak_abs(tdd, odd), kLeakAbsCap); }

double leak_signed(double tdd, double odd) { return odd / (std::abs(tdd) + kEpsilon); }

Image mean_baseline(const Image& x) {
  Image out = x;
  const Eigen::VectorXd mean = x.data.rowwise().mean();
  out.data = mean.replicate(1, x.data.cols());
  return out;
}

double insertion_gain(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, const PixelSet& s,
                      double base_score) {
  const Image baseline = mean_baseline(x);
  Image inserted = baseline;
  for (int c = 0; c < x.channels(); ++c) {
    auto dst = inserted.channel(c);
    const auto src = x.channel(c);
    for (const Pixel& p : s) dst(p.row, p.col) = src(p.row, p.col);
  }
  const double gained = region_score(adapter, inserted, class_id, mask) - region_score(adapter, baseline, class_id, mask);
  return gained / (std::abs(base_score) + kEpsilon);
}

double insertion_gain(ModelAdapter& adapter, const Image& x, const Heatmap& a, int class_id, const BinaryMask& mask,
                      double k) {
  return insertion_gain(adapter, x, class_id, mask, topk_select(a, mask, k, Region::inside),
                        region_score(adapter, x, class_id, mask));
}

double stability(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                 const BinaryMask& mask, const StabilityOptions& options, const Heatmap& reference) {
  double total = 0.0;
  for (PerturbationKind kind : kPerturbationBattery) {
    const Image perturbed = apply(x, {kind, options.strength, options.seed}, options.coefficients);
    Heatmap compared;
    if (kind == PerturbationKind::horizontal_flip) {
      const Heatmap flipped = method(adapter, perturbed, class_id, mask.flipped_horizontally());
      compared = Heatmap::from_normalized(flip_horizontal(flipped.values()));
    } else {
      compared = method(adapter, perturbed, class_id, mask);
    }
    total += pearson(reference, compared);
  }
  return total / static_cast<double>(kPerturbationBattery.size());
}

double stability(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                 const BinaryMask& mask, const StabilityOptions& options) {
  return stability(method, adapter, x, class_id, mask, options, method(adapter, x, class_id, mask));
}

TimedHeatmap time_explanation(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                              const BinaryMask& mask) {
  const auto start = std::chrono::steady_clock::now();
  Heatmap heatmap = method(adapter, x, class_id, mask);
  const auto stop = std::chrono::steady_clock::now();
  return {std::move(heatmap), std::chrono::duration<double, std::milli>(stop - start).count()};
}

MetricRow evaluate_heatmap(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                           const BinaryMask& mask, const TimedHeatmap& explained, const EvaluationOptions& options) {
  const Heatmap& a = explained.heatmap;
  const double base = region_score(adapter, x, class_id, mask);
  const PixelSet target = topk_select(a, mask, options.k, Region::inside);
  const PixelSet offtarget = topk_select(a, mask, options.k, Region::outside);

  MetricRow row;
  row.tdd = deletion_drop(adapter, x, class_id, mask, target, base);
  row.odd = deletion_drop(adapter, x, class_id, mask, offtarget, base);
  row.leak_abs = reported_leak_abs(row.tdd, row.odd);
  row.leak_signed = leak_signed(row.tdd, row.odd);
  row.insertion = insertion_gain(adapter, x, class_id, mask, target, base);
  row.stability = stability(method, adapter, x, class_id, mask, options.stability, a);
  row.runtime_ms = explained.runtime_ms;
  return row;
}

}  // namespace segattr
