#pragma once

#include "segattr/attribution.hpp"
#include "segattr/core.hpp"
#include "segattr/metrics.hpp"
#include "segattr/model.hpp"
#include "segattr/netpbm.hpp"
#include "segattr/perturbations.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace segattr {

inline constexpr std::int32_t kBackgroundLabel = 0;
inline constexpr std::int32_t kIgnoreLabel = 255;

struct Sample {
  std::string id;
  Image image;
  LabelMask labels;
};

struct Target {
  int class_id = 0;
  BinaryMask mask;
};

/// Most frequent foreground label (not background, not ignore); ties go to
/// the smallest id. Empty when there is no foreground pixel.
std::optional<Target> select_target(const LabelMask& labels);

// ---- synthetic data -------------------------------------------------------

struct SyntheticShape {
  enum class Kind { rectangle, ellipse } kind = Kind::rectangle;
  int top = 0;
  int left = 0;
  int height = 0;
  int width = 0;
  std::int32_t class_id = 1;
  std::array<double, 3> color{};

  bool contains(int row, int col) const;
};

struct SyntheticScene {
  Sample sample;
  std::vector<SyntheticShape> shapes;  // painted in order, later on top
};

/// 1-3 flat-colored rectangles/ellipses over a textured background. Each
/// shape gets its own class id in [1, num_classes).
SyntheticScene synth_scene(std::uint64_t seed, int size, int num_classes = 4);
Sample synth_sample(std::uint64_t seed, int size, int num_classes = 4);

/// Pairs `<id>.ppm` with `<id>_mask.pgm`, sorted by id.
std::vector<Sample> load_dataset_dir(const std::filesystem::path& dir);

// ---- configuration --------------------------------------------------------

struct DatasetSpec {
  std::string kind = "synthetic";  // "synthetic" | "directory"
  std::string name = "synthetic";
  std::filesystem::path path;
  int count = 100;
  int size = 64;
  int classes = 4;
};

struct AdapterSpec {
  std::string kind = "micro";  // "micro" | "bridge"
  std::optional<std::uint64_t> seed;  // micro; defaults to the run seed
  int classes = 4;
  std::string command;  // bridge
};

struct RunConfig {
  std::string run_id;
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  AdapterSpec adapter;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  double k = 0.2;
  int grid = 14;
  double alpha = 0.65;
  double beta = 0.35;
  double strength = 0.03;
  PerturbationCoefficients perturbation;
  std::filesystem::path output = "records.jsonl";
  std::optional<std::filesystem::path> heatmap_dir;
  int workers = 1;

  void validate() const;
  std::string effective_run_id() const;
  AttributionSettings attribution_settings() const;
};

/// Unknown keys are rejected so typos do not silently fall back to defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

// ---- records --------------------------------------------------------------

struct SampleRecord {
  std::string run_id;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string sample_id;
  std::string method;
  int target_class = 0;
  MetricRow metrics;
};

nlohmann::ordered_json record_to_json(const SampleRecord& record);
/// Throws InvalidInput when a required field is missing or mistyped.
SampleRecord record_from_json(const nlohmann::json& j);

struct RunFile {
  std::vector<SampleRecord> records;
  std::optional<std::string> error;  // set when the run ended with a terminal error record
};
RunFile read_run_file(const std::filesystem::path& path);

// ---- running --------------------------------------------------------------

/// Builds one adapter for inputs of the given size. Called once per worker
/// (and again if the input size changes).
using AdapterFactory = std::function<std::unique_ptr<ModelAdapter>(int height, int width)>;
AdapterFactory make_adapter_factory(const AdapterSpec& spec, std::uint64_t run_seed);

std::vector<Sample> load_samples(const RunConfig& config);

struct RunSummary {
  std::size_t samples = 0;
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::optional<std::string> error;
};

/// Evaluates every (sample, method) pair in sorted sample order. Records go
/// to `records` as JSON lines; skipped samples go to `skips` with a reason.
/// An adapter failure stops the run, writes a terminal {"error": ...} record
/// after the records already completed, and is reported in the summary.
RunSummary run_benchmark(const RunConfig& config, std::vector<Sample> samples, const AdapterFactory& factory,
                         std::ostream& records, std::ostream& skips);

/// Loads the dataset and writes to config.output and `<output>.skipped.jsonl`.
RunSummary run_benchmark(const RunConfig& config);

// ---- aggregation ----------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};
MeanStd mean_and_sample_std(const std::vector<double>& values);

struct AggregateRow {
  std::string dataset;
  std::string method;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  int runs = 0;
};

/// Metrics summarized per run: the MetricRow fields plus |odd|.
const std::vector<std::string>& aggregate_metric_names();

/// Each inner vector is one run. Per (dataset, method) the records of a run
/// are averaged first; the run means are then summarized, every run
/// weighing the same.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<SampleRecord>>& runs);
/// Runs that ended with a terminal error are left out with a warning.
std::vector<AggregateRow> aggregate_files(const std::vector<std::filesystem::path>& files, std::ostream& warnings);
void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows);

}  // namespace segattr
