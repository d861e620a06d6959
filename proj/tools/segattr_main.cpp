// segattr: command-line entry point.
//
//   segattr run --config run.json [--seed N --k F --grid G --alpha A --beta B --strength S --workers W --out F]
//   segattr aggregate runs/*.jsonl --out summary.csv
//   segattr explain --image x.ppm --mask x_mask.pgm --method dea --out heat.pgm
//   segattr selftest
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 selftest failure.

#include "segattr/attribution.hpp"
#include "segattr/bridge.hpp"
#include "segattr/harness.hpp"
#include "segattr/netpbm.hpp"
#include "segattr/selftest.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitSelftest = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> k, alpha, beta, strength;
  std::optional<int> grid, workers;
  std::optional<std::string> out;
};

struct AggregateArgs {
  std::vector<std::string> files;
  std::string out;
};

struct ExplainArgs {
  std::string image, mask, method, out;
  std::optional<int> class_id;
  std::uint64_t model_seed = 0;
  int classes = 4;
  std::string bridge;
  int grid = 14;
  double alpha = 0.65;
  double beta = 0.35;
};

int do_run(const RunArgs& args) {
  if (!std::filesystem::exists(args.config)) throw UsageError("config file not found: " + args.config);
  segattr::RunConfig config;
  try {
    config = segattr::load_run_config(args.config);
    if (args.seed) config.seed = *args.seed;
    if (args.k) config.k = *args.k;
    if (args.grid) config.grid = *args.grid;
    if (args.alpha) config.alpha = *args.alpha;
    if (args.beta) config.beta = *args.beta;
    if (args.strength) config.strength = *args.strength;
    if (args.workers) config.workers = *args.workers;
    if (args.out) config.output = *args.out;
    config.validate();
  } catch (const segattr::InvalidInput& e) {
    throw UsageError(e.what());
  }

  const segattr::RunSummary summary = segattr::run_benchmark(config);
  std::cerr << "run " << config.effective_run_id() << ": " << summary.samples << " samples, " << summary.records
            << " records, " << summary.skipped << " skipped -> " << config.output.string() << '\n';
  if (summary.error) {
    std::cerr << "error: " << *summary.error << '\n';
    return kExitRuntime;
  }
  return 0;
}

int do_aggregate(const AggregateArgs& args) {
  std::vector<std::filesystem::path> files(args.files.begin(), args.files.end());
  for (const auto& f : files)
    if (!std::filesystem::exists(f)) throw UsageError("record file not found: " + f.string());
  const auto rows = segattr::aggregate_files(files, std::cerr);
  if (args.out.empty() || args.out == "-") {
    segattr::write_aggregate_csv(std::cout, rows);
  } else {
    std::ofstream out(args.out);
    if (!out) throw std::runtime_error("cannot write " + args.out);
    segattr::write_aggregate_csv(out, rows);
  }
  return 0;
}

int do_explain(const ExplainArgs& args) {
  segattr::Method method;
  segattr::FusionParams fusion{args.alpha, args.beta};
  try {
    method = segattr::parse_method(args.method);
    fusion.validate();
  } catch (const segattr::InvalidInput& e) {
    throw UsageError(e.what());
  }
  const segattr::Image image = segattr::read_ppm(args.image);
  const segattr::LabelMask labels = segattr::read_pgm_labels(args.mask);
  if (labels.rows() != image.height || labels.cols() != image.width)
    throw std::runtime_error("image and label map differ in size");

  segattr::Target target;
  if (args.class_id) {
    target.class_id = *args.class_id;
    target.mask = segattr::BinaryMask(segattr::BinaryMask::Storage((labels.array() == *args.class_id).cast<std::uint8_t>()));
  } else {
    auto selected = segattr::select_target(labels);
    if (!selected) throw std::runtime_error("label map has no foreground pixels");
    target = std::move(*selected);
  }

  std::unique_ptr<segattr::ModelAdapter> adapter;
  if (args.bridge.empty()) {
    adapter = segattr::micro_model_new(args.model_seed, args.classes);
  } else {
    adapter = std::make_unique<segattr::bridge::BridgeAdapter>(args.bridge, image.height, image.width);
  }
  const segattr::AttributionSettings settings{fusion, {args.grid}};
  const segattr::Heatmap heatmap =
      segattr::explain(method, *adapter, image, target.class_id, target.mask, settings);
  segattr::write_heatmap_pgm(args.out, heatmap);
  std::cerr << "explained class " << target.class_id << " (" << target.mask.popcount() << " px) with "
            << args.method << " -> " << args.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Segmentation attribution benchmark: GPA, EGA, RIA and dual-evidence attribution with "
               "deletion, leakage, insertion, robustness and runtime metrics."};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run the benchmark described by a JSON config");
  run->add_option("--config", run_args.config, "Run configuration (JSON)")->required();
  run->add_option("--seed", run_args.seed, "Override the run seed");
  run->add_option("--k", run_args.k, "Override the top-k fraction");
  run->add_option("--grid", run_args.grid, "Override the intervention grid size");
  run->add_option("--alpha", run_args.alpha, "Override the fusion alpha");
  run->add_option("--beta", run_args.beta, "Override the fusion beta");
  run->add_option("--strength", run_args.strength, "Override the perturbation strength");
  run->add_option("--workers", run_args.workers, "Worker threads (default 1)");
  run->add_option("--out", run_args.out, "Override the record output path");

  AggregateArgs agg_args;
  auto* agg = app.add_subcommand("aggregate", "Summarize record files, one file per run, as CSV");
  agg->add_option("files", agg_args.files, "Record files (JSONL)")->required();
  agg->add_option("--out", agg_args.out, "CSV output path (default stdout)");

  ExplainArgs ex_args;
  auto* ex = app.add_subcommand("explain", "Write one heatmap for one image");
  ex->add_option("--image", ex_args.image, "Input image (binary PPM)")->required();
  ex->add_option("--mask", ex_args.mask, "Label map (binary PGM)")->required();
  ex->add_option("--method", ex_args.method, "gpa, ega, ria or dea")->required();
  ex->add_option("--out", ex_args.out, "Output heatmap (binary PGM)")->required();
  ex->add_option("--class", ex_args.class_id, "Target class (default: most frequent foreground label)");
  ex->add_option("--model-seed", ex_args.model_seed, "Micro model seed")->capture_default_str();
  ex->add_option("--classes", ex_args.classes, "Micro model class count")->capture_default_str();
  ex->add_option("--bridge", ex_args.bridge, "Bridge server command instead of the micro model");
  ex->add_option("--grid", ex_args.grid, "Intervention grid size")->capture_default_str();
  ex->add_option("--alpha", ex_args.alpha, "Fusion alpha")->capture_default_str();
  ex->add_option("--beta", ex_args.beta, "Fusion beta")->capture_default_str();

  auto* self = app.add_subcommand("selftest", "Gradient checks, oracle equivalences and metric identities");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*run) return do_run(run_args);
    if (*agg) return do_aggregate(agg_args);
    if (*ex) return do_explain(ex_args);
    if (*self) {
      const bool ok = segattr::report(std::cout, segattr::run_selftest());
      return ok ? 0 : kExitSelftest;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
