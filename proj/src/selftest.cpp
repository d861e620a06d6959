#include "segattr/selftest.hpp"

#include "segattr/attribution.hpp"
#include "segattr/harness.hpp"
#include "segattr/metrics.hpp"
#include "segattr/model.hpp"
#include "segattr/random.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace segattr {

namespace {

struct Case {
  Sample sample;
  Target target;
};

Case make_case(std::uint64_t seed, int size) {
  Case c;
  c.sample = synth_sample(seed, size);
  c.target = *select_target(c.sample.labels);
  return c;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

CheckResult check_gradients() {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 4; ++i) {
    MicroModel model(100 + i, 4);
    const Case c = make_case(mix_seed(7, i), 16);
    const FeatureBundle bundle = model.features_and_gradient(c.sample.image, c.target.class_id, c.target.mask);
    const Tensor3 fd = fd_gradient_oracle(model, c.sample.image, c.target.class_id, c.target.mask, 1e-3);
    worst = std::max(worst, max_relative_error(bundle.gradient, fd));
  }
  return {"feature gradient vs finite differences", worst < 1e-3, "max relative error " + fmt(worst)};
}

CheckResult check_probabilities() {
  MicroModel model(3, 5);
  const Case c = make_case(11, 24);
  const ProbMap p = model.predict(c.sample.image);
  const double worst = (p.data.colwise().sum().array() - 1.0).abs().maxCoeff();
  return {"softmax sums to one", worst < 1e-6, "max deviation " + fmt(worst)};
}

CheckResult check_ria_oracle() {
  double worst = 0.0;
  for (std::uint64_t i = 0; i < 2; ++i) {
    MicroModel model(i, 4);
    const Case c = make_case(mix_seed(21, i), 20);
    const Image& x = c.sample.image;
    for (int g : {2, 4}) {
      const Plane deltas = ria_cell_deltas(model, x, c.target.class_id, c.target.mask, {g});
      const double base = region_score(model.predict(x), c.target.class_id, c.target.mask);
      const Eigen::VectorXd mean = x.data.rowwise().mean();
      for (int ci = 0; ci < g; ++ci) {
        for (int cj = 0; cj < g; ++cj) {
          Image occluded = x;
          const int r0 = ci * x.height / g, r1 = (ci + 1) * x.height / g;
          const int c0 = cj * x.width / g, c1 = (cj + 1) * x.width / g;
          for (int ch = 0; ch < 3; ++ch) occluded.channel(ch).block(r0, c0, r1 - r0, c1 - c0).setConstant(mean(ch));
          const double expected = base - region_score(model.predict(occluded), c.target.class_id, c.target.mask);
          worst = std::max(worst, std::abs(expected - deltas(ci, cj)));
        }
      }
    }
  }
  return {"RIA cell deltas vs fresh predicts", worst < 1e-9, "max |diff| " + fmt(worst)};
}

CheckResult check_fusion_identities() {
  MicroModel model(5, 4);
  const Case c = make_case(31, 24);
  const Image& x = c.sample.image;
  const GridSpec grid{4};
  const Heatmap e = ega(model, x, c.target.class_id, c.target.mask);
  const Heatmap r = ria(model, x, c.target.class_id, c.target.mask, grid);
  const bool ega_identity = dea(model, x, c.target.class_id, c.target.mask, {1.0, 0.0}, grid) == e;
  const bool ria_identity = dea(model, x, c.target.class_id, c.target.mask, {0.0, 0.0}, grid) == r &&
                            dea(model, x, c.target.class_id, c.target.mask, {0.0, 0.35}, grid) == r;
  return {"fusion identities (alpha=1,beta=0 -> EGA; alpha=0 -> RIA)", ega_identity && ria_identity,
          std::string("ega ") + (ega_identity ? "identical" : "differs") + ", ria " + (ria_identity ? "identical" : "differs")};
}

CheckResult check_metric_identities() {
  MicroModel model(9, 4);
  const Case c = make_case(41, 24);
  const Image& x = c.sample.image;
  const int cls = c.target.class_id;
  const BinaryMask& m = c.target.mask;

  const double empty_drop = deletion_drop(model, x, cls, m, PixelSet{});
  const Heatmap a = ega(model, x, cls, m);
  const Heatmap cubed = Heatmap::from_normalized(a.values().array().cube().matrix());
  const double tdd = target_deletion_drop(model, x, a, cls, m, 0.2);
  const double odd = offtarget_deletion_drop(model, x, a, cls, m, 0.2);
  const bool monotone = tdd == target_deletion_drop(model, x, cubed, cls, m, 0.2) &&
                        odd == offtarget_deletion_drop(model, x, cubed, cls, m, 0.2);
  const double leak_err = std::abs(reported_leak_abs(tdd, odd) - std::abs(odd) / (std::abs(tdd) + kEpsilon));
  const AttributionFn constant = [](ModelAdapter&, const Image& img, int, const BinaryMask&) {
    return Heatmap::from_normalized(Plane::Constant(img.height, img.width, 0.5));
  };
  const double stab = stability(constant, model, x, cls, m, {});
  const bool ok = empty_drop == 0.0 && monotone && leak_err < 1e-9 && stab == 1.0;
  std::ostringstream detail;
  detail << "empty-set drop " << empty_drop << ", A vs A^3 " << (monotone ? "invariant" : "differs") << ", leak err "
         << fmt(leak_err) << ", constant-map stability " << stab;
  return {"metric identities", ok, detail.str()};
}

CheckResult check_aggregation() {
  auto run_with = [](double tdd) {
    SampleRecord r;
    r.dataset = "d";
    r.method = "gpa";
    r.metrics.tdd = tdd;
    return std::vector<SampleRecord>{r};
  };
  auto tdd_row = [](const std::vector<AggregateRow>& rows) {
    for (const auto& row : rows)
      if (row.metric == "tdd") return row;
    return AggregateRow{};
  };
  const AggregateRow two = tdd_row(aggregate({run_with(0.4), run_with(0.5)}));
  const AggregateRow one = tdd_row(aggregate({run_with(0.4)}));
  const AggregateRow dup = tdd_row(aggregate({run_with(0.4), run_with(0.4)}));
  const bool ok = std::abs(two.mean - 0.45) < 1e-12 && std::abs(two.std - 0.0707) < 1e-4 && one.std == 0.0 &&
                  std::abs(dup.mean - 0.4) < 1e-12 && dup.std == 0.0;
  return {"aggregation arithmetic", ok, "mean " + fmt(two.mean) + ", std " + fmt(two.std)};
}

}  // namespace

std::vector<CheckResult> run_selftest() {
  std::vector<CheckResult> results;
  auto guarded = [&results](const char* name, CheckResult (*fn)()) {
    try {
      results.push_back(fn());
    } catch (const std::exception& e) {
      results.push_back({name, false, std::string("threw: ") + e.what()});
    }
  };
  guarded("softmax sums to one", check_probabilities);
  guarded("feature gradient vs finite differences", check_gradients);
  guarded("RIA cell deltas vs fresh predicts", check_ria_oracle);
  guarded("fusion identities", check_fusion_identities);
  guarded("metric identities", check_metric_identities);
  guarded("aggregation arithmetic", check_aggregation);
  return results;
}

bool report(std::ostream& out, const std::vector<CheckResult>& results) {
  bool all = true;
  for (const CheckResult& r : results) {
    out << (r.passed ? "PASS  " : "FAIL  ") << r.name << "  (" << r.detail << ")\n";
    all = all && r.passed;
  }
  return all;
}

}  // namespace segattr
