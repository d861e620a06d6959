#pragma once

#include "segattr/attribution.hpp"
#include "segattr/core.hpp"
#include "segattr/model.hpp"
#include "segattr/perturbations.hpp"

#include <cstdint>

namespace segattr {

/// Reporting cap for LeakAbs, keeps aggregates finite when TDD is ~0.
inline constexpr double kLeakAbsCap = 1e6;

/// Masked mean class probability sum(M * p_c) / (sum(M) + eps).
double region_score(const ProbMap& probs, int class_id, const BinaryMask& mask);
double region_score(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask);

/// (s_c(x,M) - s_c(O(x,S),M)) / (|s_c(x,M)| + eps) for a given pixel set.
double deletion_drop(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, const PixelSet& s,
                     double base_score);
double deletion_drop(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, const PixelSet& s);

double target_deletion_drop(ModelAdapter& adapter, const Image& x, const Heatmap& a, int class_id,
                            const BinaryMask& mask, double k);
double offtarget_deletion_drop(ModelAdapter& adapter, const Image& x, const Heatmap& a, int class_id,
                               const BinaryMask& mask, double k);

double leak_abs(double tdd, double odd);
/// leak_abs clipped at kLeakAbsCap; the value stored in records.
double reported_leak_abs(double tdd, double odd);
/// odd / (|tdd| + eps); diagnostic only.
double leak_signed(double tdd, double odd);

/// Image with every pixel set to the per-channel mean of `x`.
Image mean_baseline(const Image& x);

/// Gain in region score when the pixels `s` are restored from `x` onto the
/// mean baseline, normalized like the deletion drops.
double insertion_gain(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, const PixelSet& s,
                      double base_score);
double insertion_gain(ModelAdapter& adapter, const Image& x, const Heatmap& a, int class_id, const BinaryMask& mask,
                      double k);

struct StabilityOptions {
  double strength = 0.03;
  std::uint64_t seed = 0;
  PerturbationCoefficients coefficients;
};

/// Mean Pearson correlation between method(x) and method on each of the five
/// perturbed images. Under horizontal flip the mask is flipped with the image
/// and the resulting map is flipped back before comparison.
double stability(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                 const BinaryMask& mask, const StabilityOptions& options);
/// Same, reusing an already computed heatmap for the unperturbed image.
double stability(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                 const BinaryMask& mask, const StabilityOptions& options, const Heatmap& reference);

struct TimedHeatmap {
  Heatmap heatmap;
  double runtime_ms = 0.0;
};

/// Wall-clock duration of exactly the attribution call.
TimedHeatmap time_explanation(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                              const BinaryMask& mask);

struct MetricRow {
  double tdd = 0.0;
  double odd = 0.0;
  double leak_abs = 0.0;
  double leak_signed = 0.0;
  double insertion = 0.0;
  double stability = 0.0;
  double runtime_ms = 0.0;
};

struct EvaluationOptions {
  double k = 0.2;
  StabilityOptions stability;
};

/// Every metric for one (sample, method) pair given an already timed map.
MetricRow evaluate_heatmap(const AttributionFn& method, ModelAdapter& adapter, const Image& x, int class_id,
                           const BinaryMask& mask, const TimedHeatmap& explained, const EvaluationOptions& options);

}  // namespace segattr
