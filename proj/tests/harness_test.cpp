#include "segattr/harness.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>

namespace segattr {
namespace {

using nlohmann::json;

LabelMask labels_from_counts(const std::vector<std::pair<int, int>>& counts) {
  int total = 0;
  for (auto [label, n] : counts) total += n;
  LabelMask m(1, total);
  int at = 0;
  for (auto [label, n] : counts)
    for (int i = 0; i < n; ++i) m(0, at++) = label;
  return m;
}

TEST(SelectTarget, MostFrequentForeground) {
  const auto t = select_target(labels_from_counts({{0, 100}, {1, 50}, {2, 30}}));
  ASSERT_TRUE(t);
  EXPECT_EQ(t->class_id, 1);
  EXPECT_EQ(t->mask.popcount(), 50);
  EXPECT_TRUE(t->mask(0, 100));
  EXPECT_FALSE(t->mask(0, 150));
}

TEST(SelectTarget, TieGoesToSmallestId) {
  EXPECT_EQ(select_target(labels_from_counts({{0, 10}, {7, 5}, {3, 5}}))->class_id, 3);
}

TEST(SelectTarget, BackgroundAndIgnoreSkip) {
  EXPECT_FALSE(select_target(labels_from_counts({{0, 20}})));
  EXPECT_FALSE(select_target(labels_from_counts({{0, 5}, {255, 50}})));
  EXPECT_EQ(select_target(labels_from_counts({{255, 50}, {4, 1}}))->class_id, 4);
}

TEST(Synth, Deterministic) {
  const Sample a = synth_sample(5, 48);
  const Sample b = synth_sample(5, 48);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_FALSE(synth_sample(6, 48).image == a.image);
}

TEST(Synth, Properties) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const SyntheticScene scene = synth_scene(seed, 16 + static_cast<int>(seed % 50), 4);
    const Sample& s = scene.sample;
    ASSERT_NO_THROW(check_image(s.image));
    ASSERT_GE(scene.shapes.size(), 1u);
    ASSERT_LE(scene.shapes.size(), 3u);
    ASSERT_TRUE(select_target(s.labels)) << "seed " << seed;

    // Label histogram equals the visible pixels of each shape.
    std::map<int, int> histogram;
    for (Eigen::Index i = 0; i < s.labels.size(); ++i) ++histogram[s.labels.data()[i]];
    std::map<int, int> painted;
    std::set<int> ids;
    for (int r = 0; r < s.image.height; ++r)
      for (int c = 0; c < s.image.width; ++c) {
        int top = 0;
        for (const SyntheticShape& shape : scene.shapes)
          if (shape.contains(r, c)) top = shape.class_id;
        ++painted[top];
      }
    for (const SyntheticShape& shape : scene.shapes) {
      ASSERT_GE(shape.class_id, 1);
      ASSERT_LT(shape.class_id, 4);
      ids.insert(shape.class_id);
    }
    ASSERT_EQ(ids.size(), scene.shapes.size()) << "class ids must be distinct";
    ASSERT_EQ(histogram, painted) << "seed " << seed;
  }
}

TEST(Synth, FlatShapeColors) {
  const SyntheticScene scene = synth_scene(3, 64, 4);
  const Sample& s = scene.sample;
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) {
      const int label = s.labels(r, c);
      if (label == 0) continue;
      for (const SyntheticShape& shape : scene.shapes)
        if (shape.class_id == label)
          for (int ch = 0; ch < 3; ++ch) ASSERT_DOUBLE_EQ(s.image.channel(ch)(r, c), shape.color[ch]);
    }
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const json j = json::parse(R"({"seed": 3, "k": 0.3, "grid": 8, "methods": ["ria", "dea"],
      "dataset": {"kind": "synthetic", "count": 5, "size": 32},
      "adapter": {"kind": "micro", "seed": 11}, "output": "x.jsonl"})");
  const RunConfig cfg = run_config_from_json(j);
  EXPECT_EQ(cfg.seed, 3u);
  EXPECT_EQ(cfg.k, 0.3);
  EXPECT_EQ(cfg.grid, 8);
  EXPECT_EQ(cfg.methods, (std::vector<Method>{Method::ria, Method::dea}));
  EXPECT_EQ(cfg.dataset.count, 5);
  EXPECT_EQ(*cfg.adapter.seed, 11u);
  EXPECT_EQ(cfg.alpha, 0.65);
  EXPECT_EQ(cfg.effective_run_id(), "synthetic-s3");

  EXPECT_THROW(run_config_from_json(json::parse(R"({"sead": 3})")), InvalidInput);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"dataset": {"sized": 3}})")), InvalidInput);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"methods": ["gradcam"]})")), InvalidInput);
  EXPECT_THROW(run_config_from_json(json::parse(R"({"k": "big"})")), InvalidInput);
}

TEST(Config, RoundTripAndValidation) {
  RunConfig cfg;
  cfg.seed = 9;
  cfg.methods = {Method::gpa};
  cfg.heatmap_dir = "maps";
  const RunConfig back = run_config_from_json(json::parse(run_config_to_json(cfg).dump()));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(cfg));

  auto invalid = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), InvalidInput);
  };
  invalid([](RunConfig& c) { c.k = 0.0; });
  invalid([](RunConfig& c) { c.k = 1.5; });
  invalid([](RunConfig& c) { c.grid = 0; });
  invalid([](RunConfig& c) { c.alpha = -0.1; });
  invalid([](RunConfig& c) { c.methods.clear(); });
  invalid([](RunConfig& c) { c.dataset.size = 8; });
  invalid([](RunConfig& c) { c.adapter.kind = "bridge"; });
}

TEST(Records, JsonRoundTripAndKeyOrder) {
  SampleRecord r;
  r.run_id = "run";
  r.dataset = "d";
  r.seed = 4;
  r.sample_id = "syn-00001";
  r.method = "dea";
  r.target_class = 2;
  r.metrics = {0.1, -0.2, 2.0, -2.0, 0.3, 0.9, 1.5};
  const auto j = record_to_json(r);
  std::vector<std::string> keys;
  for (const auto& item : j.items()) keys.push_back(item.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"run_id", "dataset", "seed", "sample_id", "method", "target_class", "tdd",
                                            "odd", "leak_abs", "leak_signed", "insertion", "stability",
                                            "runtime_ms"}));
  const SampleRecord back = record_from_json(json::parse(j.dump()));
  EXPECT_EQ(record_to_json(back), j);
  json missing = j;
  missing.erase("odd");
  EXPECT_THROW(record_from_json(missing), InvalidInput);
}

RunConfig small_config(std::vector<Method> methods, int count = 2) {
  RunConfig cfg;
  cfg.seed = 1;
  cfg.dataset.count = count;
  cfg.dataset.size = 24;
  cfg.grid = 4;
  cfg.methods = std::move(methods);
  return cfg;
}

std::string run_to_string(const RunConfig& cfg, RunSummary* summary = nullptr, std::string* skips = nullptr) {
  std::ostringstream records, skip_log;
  const RunSummary s =
      run_benchmark(cfg, load_samples(cfg), make_adapter_factory(cfg.adapter, cfg.seed), records, skip_log);
  if (summary) *summary = s;
  if (skips) *skips = skip_log.str();
  return records.str();
}

std::vector<json> lines_of(const std::string& text) {
  std::vector<json> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(json::parse(line));
  return out;
}

TEST(Run, CardinalityAndOrder) {
  RunSummary summary;
  const auto lines = lines_of(run_to_string(small_config({kAllMethods.begin(), kAllMethods.end()}), &summary));
  ASSERT_EQ(lines.size(), 8u);
  EXPECT_EQ(summary.records, 8u);
  EXPECT_EQ(summary.skipped, 0u);
  EXPECT_EQ(lines[0]["sample_id"], "syn-00000");
  EXPECT_EQ(lines[0]["method"], "gpa");
  EXPECT_EQ(lines[7]["sample_id"], "syn-00001");
  EXPECT_EQ(lines[7]["method"], "dea");
  for (const json& l : lines) {
    const double tdd = l["tdd"], odd = l["odd"], leak = l["leak_abs"];
    EXPECT_NEAR(leak, std::min(std::abs(odd) / (std::abs(tdd) + kEpsilon), kLeakAbsCap), 1e-9);
  }
}

std::string without_runtime(const std::string& text) {
  std::string out;
  for (json l : lines_of(text)) {
    l.erase("runtime_ms");
    out += l.dump() + "\n";
  }
  return out;
}

TEST(Run, DeterministicAndWorkerIndependent) {
  RunConfig cfg = small_config({Method::ega, Method::ria}, 5);
  const std::string first = without_runtime(run_to_string(cfg));
  EXPECT_EQ(first, without_runtime(run_to_string(cfg)));
  cfg.workers = 3;
  EXPECT_EQ(first, without_runtime(run_to_string(cfg)));
}

TEST(Run, DeaCollapsesToRiaEndToEnd) {
  RunConfig dea_cfg = small_config({Method::dea}, 3);
  dea_cfg.alpha = 0.0;
  dea_cfg.beta = 0.0;
  const RunConfig ria_cfg = small_config({Method::ria}, 3);
  auto strip = [](std::string text) {
    std::string out;
    for (json l : lines_of(text)) {
      l.erase("runtime_ms");
      l.erase("method");
      out += l.dump() + "\n";
    }
    return out;
  };
  EXPECT_EQ(strip(run_to_string(dea_cfg)), strip(run_to_string(ria_cfg)));
}

TEST(Run, SkipsAreLogged) {
  std::vector<Sample> samples;
  Sample blank{"a-blank", Image(3, 16, 16), LabelMask::Zero(16, 16)};
  blank.image.data.setConstant(0.5);
  samples.push_back(blank);
  Sample full = blank;
  full.id = "b-full";
  full.labels.setConstant(1);
  samples.push_back(full);
  Sample big_class = blank;
  big_class.id = "c-class";
  big_class.labels(3, 3) = 9;
  samples.push_back(big_class);
  Sample good = synth_sample(3, 16);
  good.id = "d-good";
  samples.push_back(good);

  RunConfig cfg = small_config({Method::gpa, Method::ria});
  std::ostringstream records, skips;
  const RunSummary s = run_benchmark(cfg, samples, make_adapter_factory(cfg.adapter, cfg.seed), records, skips);
  EXPECT_EQ(s.skipped, 3u);
  EXPECT_EQ(s.records, 2u);
  const auto skip_lines = lines_of(skips.str());
  ASSERT_EQ(skip_lines.size(), 3u);
  EXPECT_EQ(skip_lines[0]["sample_id"], "a-blank");
  EXPECT_EQ(skip_lines[2]["sample_id"], "c-class");
  for (const json& l : skip_lines) EXPECT_FALSE(l["reason"].get<std::string>().empty());
}

// Micro model that dies after a fixed number of predict calls.
class FailingAdapter : public ModelAdapter {
 public:
  explicit FailingAdapter(int budget) : model_(1, 4), budget_(budget) {}
  int num_classes() const override { return 4; }
  FeatureShape feature_shape(int h, int w) const override { return model_.feature_shape(h, w); }
  ProbMap predict(const Image& x) override {
    if (budget_-- <= 0) throw AdapterError("backend went away");
    return model_.predict(x);
  }
  FeatureBundle features_and_gradient(const Image& x, int c, const BinaryMask& m) override {
    return model_.features_and_gradient(x, c, m);
  }

 private:
  MicroModel model_;
  int budget_;
};

TEST(Run, AdapterFailureWritesTerminalError) {
  RunConfig cfg = small_config({Method::gpa}, 4);
  // gpa per sample: 1 base score, 2 deletions, 2 insertion scores, 0 for stability
  const AdapterFactory factory = [](int, int) { return std::make_unique<FailingAdapter>(10); };
  std::ostringstream records, skips;
  const RunSummary s = run_benchmark(cfg, load_samples(cfg), factory, records, skips);
  ASSERT_TRUE(s.error);
  EXPECT_NE(s.error->find("backend went away"), std::string::npos);
  const auto lines = lines_of(records.str());
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[1]["sample_id"], "syn-00001");
  EXPECT_TRUE(lines.back().contains("error"));
  EXPECT_EQ(lines.back()["run_id"], "synthetic-s1");
}

SampleRecord rec(std::string method, double tdd, std::string dataset = "d") {
  SampleRecord r;
  r.dataset = std::move(dataset);
  r.method = std::move(method);
  r.metrics.tdd = tdd;
  r.metrics.odd = -tdd;
  return r;
}

const AggregateRow& find(const std::vector<AggregateRow>& rows, const std::string& method, const std::string& metric) {
  for (const auto& r : rows)
    if (r.method == method && r.metric == metric) return r;
  throw std::runtime_error("row not found");
}

TEST(Aggregate, Arithmetic) {
  const auto two = aggregate({{rec("gpa", 0.4)}, {rec("gpa", 0.5)}});
  EXPECT_NEAR(find(two, "gpa", "tdd").mean, 0.45, 1e-12);
  EXPECT_NEAR(find(two, "gpa", "tdd").std, 0.0707, 1e-4);
  EXPECT_EQ(find(two, "gpa", "tdd").runs, 2);
  EXPECT_NEAR(find(two, "gpa", "odd_abs").mean, 0.45, 1e-12);

  EXPECT_EQ(find(aggregate({{rec("gpa", 0.4)}}), "gpa", "tdd").std, 0.0);
  const auto dup = aggregate({{rec("gpa", 0.4), rec("gpa", 0.2)}, {rec("gpa", 0.4), rec("gpa", 0.2)}});
  EXPECT_NEAR(find(dup, "gpa", "tdd").mean, 0.3, 1e-12);
  EXPECT_EQ(find(dup, "gpa", "tdd").std, 0.0);
}

TEST(Aggregate, RunsWeighEqually) {
  // Run means 0.1 and 0.5 regardless of sample counts.
  const auto rows = aggregate({{rec("ria", 0.1)}, {rec("ria", 0.4), rec("ria", 0.6), rec("ria", 0.5)}});
  EXPECT_NEAR(find(rows, "ria", "tdd").mean, 0.3, 1e-12);
}

TEST(Aggregate, CsvHeader) {
  std::ostringstream out;
  write_aggregate_csv(out, aggregate({{rec("gpa", 0.25)}}));
  std::istringstream in(out.str());
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "dataset,method,metric,mean,std,runs");
  EXPECT_EQ(first, "d,gpa,tdd,0.25,0,1");
}

TEST(Aggregate, SampleStd) {
  EXPECT_NEAR(mean_and_sample_std({1.0, 2.0, 3.0, 4.0}).std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_THROW(mean_and_sample_std({}), InvalidInput);
}

}  // namespace
}  // namespace segattr
