#pragma once

#include "segattr/core.hpp"
#include "segattr/model.hpp"

#include <array>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace segattr {

/// Weights of the dual-evidence fusion
///   A_f = alpha * A_g * (1 + beta * A_r) + (1 - alpha) * A_r
/// where A_g is the elementwise-gradient map and A_r the intervention map.
struct FusionParams {
  double alpha = 0.65;
  double beta = 0.35;

  void validate() const;
};

/// Number of intervention cells per image side.
struct GridSpec {
  int cells = 14;

  void validate(int height, int width) const;
};

struct AttributionSettings {
  FusionParams fusion;
  GridSpec grid;
};

enum class Method { gpa, ega, ria, dea };

inline constexpr std::array<Method, 4> kAllMethods = {Method::gpa, Method::ega, Method::ria, Method::dea};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

/// Half-open pixel span [begin, end) of grid cell `index` along an axis of
/// `extent` pixels split into `cells`.
struct CellSpan {
  int begin = 0;
  int end = 0;
};
CellSpan cell_span(int index, int extent, int cells);

// Raw (pre-normalization) maps at feature resolution.
Plane gpa_raw(const FeatureBundle& bundle);
Plane ega_raw(const FeatureBundle& bundle);

Heatmap gpa(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask);
Heatmap ega(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask);

/// g x g matrix of region-score drops s_c(x,M) - s_c(O(x,cell),M).
Plane ria_cell_deltas(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, GridSpec grid);
/// Cell deltas painted onto their pixels, signed, at image resolution.
Plane ria_raw(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, GridSpec grid);
Heatmap ria(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, GridSpec grid);

/// Fused map before the final normalization.
Plane dea_raw(const Heatmap& gradient_map, const Heatmap& intervention_map, FusionParams params);
Heatmap dea(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, FusionParams params,
            GridSpec grid);

Heatmap explain(Method method, ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask,
                const AttributionSettings& settings);

/// Any attribution procedure, as consumed by the stability metric.
using AttributionFn = std::function<Heatmap(ModelAdapter&, const Image&, int, const BinaryMask&)>;

AttributionFn make_attribution(Method method, const AttributionSettings& settings);

}  // namespace segattr
