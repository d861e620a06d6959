#include "segattr/attribution.hpp"

#include "segattr/metrics.hpp"

#include <cmath>
#include <string>

namespace segattr {

void FusionParams::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("alpha must lie in [0,1]");
  if (!std::isfinite(beta) || beta < 0.0) throw InvalidInput("beta must be finite and non-negative");
}

void GridSpec::validate(int height, int width) const {
  if (cells < 1 || cells > std::min(height, width))
    throw InvalidInput("grid must have between 1 and min(H, W) cells per side, got " + std::to_string(cells));
}

std::string_view to_string(Method method) {
  switch (method) {
    case Method::gpa: return "gpa";
    case Method::ega: return "ega";
    case Method::ria: return "ria";
    case Method::dea: return "dea";
  }
  throw InvalidInput("unknown attribution method");
}

Method parse_method(std::string_view name) {
  for (Method m : kAllMethods)
    if (to_string(m) == name) return m;
  throw InvalidInput("unknown attribution method: " + std::string(name));
}

CellSpan cell_span(int index, int extent, int cells) {
  const auto lo = static_cast<long long>(index) * extent / cells;
  const auto hi = static_cast<long long>(index + 1) * extent / cells;
  return {static_cast<int>(lo), static_cast<int>(hi)};
}

Plane gpa_raw(const FeatureBundle& bundle) {
  const Eigen::VectorXd channel_weights = bundle.gradient.data.rowwise().mean();
  const Eigen::RowVectorXd combined = channel_weights.transpose() * bundle.activations.data;
  return combined.cwiseMax(0.0).reshaped<Eigen::RowMajor>(bundle.activations.height, bundle.activations.width);
}

Plane ega_raw(const FeatureBundle& bundle) {
  const Eigen::RowVectorXd combined = bundle.gradient.data.cwiseProduct(bundle.activations.data).colwise().sum();
  return combined.cwiseMax(0.0).reshaped<Eigen::RowMajor>(bundle.activations.height, bundle.activations.width);
}

namespace {

Heatmap lift_and_normalize(const Plane& raw, int height, int width) {
  if (raw.rows() == height && raw.cols() == width) return minmax_normalize(raw);
  return minmax_normalize(bilinear_upsample(raw, height, width));
}

}  // namespace

Heatmap gpa(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask) {
  return lift_and_normalize(gpa_raw(adapter.features_and_gradient(x, class_id, mask)), x.height, x.width);
}

Heatmap ega(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask) {
  return lift_and_normalize(ega_raw(adapter.features_and_gradient(x, class_id, mask)), x.height, x.width);
}

Plane ria_cell_deltas(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, GridSpec grid) {
  grid.validate(x.height, x.width);
  if (mask.popcount() == 0) throw EmptyRegion("target mask is empty");
  const double base = region_score(adapter.predict(x), class_id, mask);

  Plane deltas(grid.cells, grid.cells);
  PixelSet cell;
  for (int i = 0; i < grid.cells; ++i) {
    const CellSpan rows = cell_span(i, x.height, grid.cells);
    for (int j = 0; j < grid.cells; ++j) {
      const CellSpan cols = cell_span(j, x.width, grid.cells);
      cell.clear();
      for (int r = rows.begin; r < rows.end; ++r)
        for (int c = cols.begin; c < cols.end; ++c) cell.push_back({r, c});
      deltas(i, j) = base - region_score(adapter.predict(occlude(x, cell)), class_id, mask);
    }
  }
  return deltas;
}

Plane ria_raw(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, GridSpec grid) {
  const Plane deltas = ria_cell_deltas(adapter, x, class_id, mask, grid);
  Plane raw(x.height, x.width);
  for (int i = 0; i < grid.cells; ++i) {
    const CellSpan rows = cell_span(i, x.height, grid.cells);
    for (int j = 0; j < grid.cells; ++j) {
      const CellSpan cols = cell_span(j, x.width, grid.cells);
      raw.block(rows.begin, cols.begin, rows.end - rows.begin, cols.end - cols.begin).setConstant(deltas(i, j));
    }
  }
  return raw;
}

Heatmap ria(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, GridSpec grid) {
  return minmax_normalize(ria_raw(adapter, x, class_id, mask, grid));
}

Plane dea_raw(const Heatmap& gradient_map, const Heatmap& intervention_map, FusionParams params) {
  params.validate();
  if (gradient_map.height() != intervention_map.height() || gradient_map.width() != intervention_map.width())
    throw InvalidInput("dea: gradient and intervention maps differ in shape");
  const auto ag = gradient_map.values().array();
  const auto ar = intervention_map.values().array();
  return (params.alpha * ag * (1.0 + params.beta * ar) + (1.0 - params.alpha) * ar).matrix();
}

Heatmap dea(ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask, FusionParams params,
            GridSpec grid) {
  params.validate();
  const Heatmap gradient_map = ega(adapter, x, class_id, mask);
  const Heatmap intervention_map = ria(adapter, x, class_id, mask, grid);
  return minmax_normalize(dea_raw(gradient_map, intervention_map, params));
}

Heatmap explain(Method method, ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask,
                const AttributionSettings& settings) {
  switch (method) {
    case Method::gpa: return gpa(adapter, x, class_id, mask);
    case Method::ega: return ega(adapter, x, class_id, mask);
    case Method::ria: return ria(adapter, x, class_id, mask, settings.grid);
    case Method::dea: return dea(adapter, x, class_id, mask, settings.fusion, settings.grid);
  }
  throw InvalidInput("unknown attribution method");
}

AttributionFn make_attribution(Method method, const AttributionSettings& settings) {
  return [method, settings](ModelAdapter& adapter, const Image& x, int class_id, const BinaryMask& mask) {
    return explain(method, adapter, x, class_id, mask, settings);
  };
}

}  // namespace segattr
