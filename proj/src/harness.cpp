#include "segattr/harness.hpp"

#include "segattr/bridge.hpp"
#include "segattr/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

namespace segattr {

using nlohmann::json;
using nlohmann::ordered_json;

std::optional<Target> select_target(const LabelMask& labels) {
  std::map<std::int32_t, Eigen::Index> counts;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const std::int32_t label = labels(i);
    if (label != kBackgroundLabel && label != kIgnoreLabel) ++counts[label];
  }
  if (counts.empty()) return std::nullopt;
  // std::map iterates ids in ascending order, so strict > keeps the smallest id on ties.
  auto best = counts.begin();
  for (auto it = counts.begin(); it != counts.end(); ++it)
    if (it->second > best->second) best = it;
  const std::int32_t chosen = best->first;
  Target target;
  target.class_id = chosen;
  target.mask = BinaryMask(BinaryMask::Storage((labels.array() == chosen).cast<std::uint8_t>()));
  return target;
}

// ---- synthetic data -------------------------------------------------------

bool SyntheticShape::contains(int row, int col) const {
  if (row < top || row >= top + height || col < left || col >= left + width) return false;
  if (kind == Kind::rectangle) return true;
  const double cy = top + height / 2.0;
  const double cx = left + width / 2.0;
  const double dy = (row + 0.5 - cy) / (height / 2.0);
  const double dx = (col + 0.5 - cx) / (width / 2.0);
  return dy * dy + dx * dx <= 1.0;
}

SyntheticScene synth_scene(std::uint64_t seed, int size, int num_classes) {
  if (size < 16) throw InvalidInput("synthetic samples need size >= 16");
  if (num_classes < 2) throw InvalidInput("synthetic samples need at least 2 classes");
  Rng rng(seed);

  SyntheticScene scene;
  Sample& sample = scene.sample;
  sample.image = Image(3, size, size);
  sample.labels = LabelMask::Zero(size, size);

  // Background: a base color with an oriented sinusoidal texture and fine noise.
  const double freq_y = rng.uniform(0.05, 0.25);
  const double freq_x = rng.uniform(0.05, 0.25);
  std::array<double, 3> base{};
  std::array<double, 3> phase{};
  for (int c = 0; c < 3; ++c) {
    base[static_cast<std::size_t>(c)] = rng.uniform(0.3, 0.7);
    phase[static_cast<std::size_t>(c)] = rng.uniform(0.0, 6.283185307179586);
  }
  for (int c = 0; c < 3; ++c) {
    auto plane = sample.image.channel(c);
    for (int r = 0; r < size; ++r)
      for (int col = 0; col < size; ++col)
        plane(r, col) = std::clamp(base[static_cast<std::size_t>(c)] +
                                       0.12 * std::sin(freq_y * r + freq_x * col + phase[static_cast<std::size_t>(c)]) +
                                       0.03 * rng.normal(),
                                   0.0, 1.0);
  }

  std::vector<std::int32_t> ids(static_cast<std::size_t>(num_classes - 1));
  std::iota(ids.begin(), ids.end(), 1);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);

  const int count = rng.uniform_int(1, std::min(3, num_classes - 1));
  const int min_extent = std::max(3, size / 6);
  const int max_extent = std::max(min_extent, size / 2);
  for (int s = 0; s < count; ++s) {
    SyntheticShape shape;
    shape.kind = rng.uniform() < 0.5 ? SyntheticShape::Kind::rectangle : SyntheticShape::Kind::ellipse;
    shape.height = rng.uniform_int(min_extent, max_extent);
    shape.width = rng.uniform_int(min_extent, max_extent);
    shape.top = rng.uniform_int(0, size - shape.height);
    shape.left = rng.uniform_int(0, size - shape.width);
    shape.class_id = ids[static_cast<std::size_t>(s)];
    // Flat color kept well apart from the background base and earlier shapes.
    for (int attempt = 0;; ++attempt) {
      for (auto& v : shape.color) v = rng.uniform();
      auto far_from = [&shape](const std::array<double, 3>& other) {
        double diff = 0.0;
        for (std::size_t c = 0; c < 3; ++c) diff = std::max(diff, std::abs(shape.color[c] - other[c]));
        return diff >= 0.25;
      };
      bool ok = far_from(base);
      for (const SyntheticShape& prev : scene.shapes) ok = ok && far_from(prev.color);
      if (ok || attempt > 64) break;
    }
    for (int r = shape.top; r < shape.top + shape.height; ++r) {
      for (int col = shape.left; col < shape.left + shape.width; ++col) {
        if (!shape.contains(r, col)) continue;
        for (int c = 0; c < 3; ++c) sample.image.channel(c)(r, col) = shape.color[static_cast<std::size_t>(c)];
        sample.labels(r, col) = shape.class_id;
      }
    }
    scene.shapes.push_back(shape);
  }
  return scene;
}

Sample synth_sample(std::uint64_t seed, int size, int num_classes) {
  return synth_scene(seed, size, num_classes).sample;
}

std::vector<Sample> load_dataset_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw InvalidInput("dataset directory not found: " + dir.string());
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ppm") continue;
    ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  std::vector<Sample> samples;
  for (const std::string& id : ids) {
    const auto mask_path = dir / (id + "_mask.pgm");
    if (!std::filesystem::exists(mask_path)) throw InvalidInput("missing label map " + mask_path.string());
    Sample s;
    s.id = id;
    s.image = read_ppm(dir / (id + ".ppm"));
    s.labels = read_pgm_labels(mask_path);
    if (s.labels.rows() != s.image.height || s.labels.cols() != s.image.width)
      throw InvalidInput("image and label map differ in size for sample " + id);
    samples.push_back(std::move(s));
  }
  return samples;
}

// ---- configuration --------------------------------------------------------

void RunConfig::validate() const {
  if (!(k > 0.0 && k <= 1.0)) throw InvalidInput("k must lie in (0,1]");
  if (grid < 1) throw InvalidInput("grid must be >= 1");
  FusionParams{alpha, beta}.validate();
  if (!std::isfinite(strength) || strength < 0.0) throw InvalidInput("strength must be finite and >= 0");
  if (methods.empty()) throw InvalidInput("method list is empty");
  if (workers < 1) throw InvalidInput("workers must be >= 1");
  if (dataset.kind == "synthetic") {
    if (dataset.count < 0) throw InvalidInput("dataset.count must be >= 0");
    if (dataset.size < 16) throw InvalidInput("dataset.size must be >= 16");
    if (dataset.classes < 2) throw InvalidInput("dataset.classes must be >= 2");
  } else if (dataset.kind == "directory") {
    if (dataset.path.empty()) throw InvalidInput("dataset.path is required for directory datasets");
  } else {
    throw InvalidInput("dataset.kind must be 'synthetic' or 'directory'");
  }
  if (adapter.kind == "micro") {
    if (adapter.classes < 2) throw InvalidInput("adapter.classes must be >= 2");
  } else if (adapter.kind == "bridge") {
    if (adapter.command.empty()) throw InvalidInput("adapter.command is required for bridge adapters");
  } else {
    throw InvalidInput("adapter.kind must be 'micro' or 'bridge'");
  }
}

std::string RunConfig::effective_run_id() const {
  return run_id.empty() ? dataset.name + "-s" + std::to_string(seed) : run_id;
}

AttributionSettings RunConfig::attribution_settings() const { return {{alpha, beta}, {grid}}; }

namespace {

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw InvalidInput(std::string(where) + " must be a JSON object");
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end())
      throw InvalidInput("unknown key '" + item.key() + "' in " + std::string(where));
  }
}

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  try {
    reject_unknown_keys(j,
                        {"run_id", "seed", "dataset", "adapter", "methods", "k", "grid", "alpha", "beta", "strength",
                         "perturbation", "output", "heatmap_dir", "workers"},
                        "run config");
    RunConfig cfg;
    read_opt(j, "run_id", cfg.run_id);
    read_opt(j, "seed", cfg.seed);
    read_opt(j, "k", cfg.k);
    read_opt(j, "grid", cfg.grid);
    read_opt(j, "alpha", cfg.alpha);
    read_opt(j, "beta", cfg.beta);
    read_opt(j, "strength", cfg.strength);
    read_opt(j, "workers", cfg.workers);
    if (j.contains("output")) cfg.output = j.at("output").get<std::string>();
    if (j.contains("heatmap_dir") && !j.at("heatmap_dir").is_null())
      cfg.heatmap_dir = std::filesystem::path(j.at("heatmap_dir").get<std::string>());

    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      reject_unknown_keys(d, {"kind", "name", "path", "count", "size", "classes"}, "dataset");
      read_opt(d, "kind", cfg.dataset.kind);
      read_opt(d, "name", cfg.dataset.name);
      if (d.contains("path")) cfg.dataset.path = d.at("path").get<std::string>();
      read_opt(d, "count", cfg.dataset.count);
      read_opt(d, "size", cfg.dataset.size);
      read_opt(d, "classes", cfg.dataset.classes);
    }
    if (j.contains("adapter")) {
      const json& a = j.at("adapter");
      reject_unknown_keys(a, {"kind", "seed", "classes", "command"}, "adapter");
      read_opt(a, "kind", cfg.adapter.kind);
      if (a.contains("seed") && !a.at("seed").is_null()) cfg.adapter.seed = a.at("seed").get<std::uint64_t>();
      read_opt(a, "classes", cfg.adapter.classes);
      read_opt(a, "command", cfg.adapter.command);
    }
    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const json& m : j.at("methods")) cfg.methods.push_back(parse_method(m.get<std::string>()));
    }
    if (j.contains("perturbation")) {
      const json& p = j.at("perturbation");
      reject_unknown_keys(p, {"noise_sigma", "brightness_shift", "contrast_gain", "blur_sigma"}, "perturbation");
      read_opt(p, "noise_sigma", cfg.perturbation.noise_sigma);
      read_opt(p, "brightness_shift", cfg.perturbation.brightness_shift);
      read_opt(p, "contrast_gain", cfg.perturbation.contrast_gain);
      read_opt(p, "blur_sigma", cfg.perturbation.blur_sigma);
    }
    return cfg;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("run config: ") + e.what());
  }
}

ordered_json run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["run_id"] = cfg.effective_run_id();
  j["seed"] = cfg.seed;
  ordered_json d;
  d["kind"] = cfg.dataset.kind;
  d["name"] = cfg.dataset.name;
  if (cfg.dataset.kind == "directory") {
    d["path"] = cfg.dataset.path.string();
  } else {
    d["count"] = cfg.dataset.count;
    d["size"] = cfg.dataset.size;
    d["classes"] = cfg.dataset.classes;
  }
  j["dataset"] = d;
  ordered_json a;
  a["kind"] = cfg.adapter.kind;
  if (cfg.adapter.kind == "bridge") {
    a["command"] = cfg.adapter.command;
  } else {
    a["seed"] = cfg.adapter.seed.value_or(cfg.seed);
    a["classes"] = cfg.adapter.classes;
  }
  j["adapter"] = a;
  j["methods"] = ordered_json::array();
  for (Method m : cfg.methods) j["methods"].push_back(std::string(to_string(m)));
  j["k"] = cfg.k;
  j["grid"] = cfg.grid;
  j["alpha"] = cfg.alpha;
  j["beta"] = cfg.beta;
  j["strength"] = cfg.strength;
  j["perturbation"] = {{"noise_sigma", cfg.perturbation.noise_sigma},
                       {"brightness_shift", cfg.perturbation.brightness_shift},
                       {"contrast_gain", cfg.perturbation.contrast_gain},
                       {"blur_sigma", cfg.perturbation.blur_sigma}};
  j["output"] = cfg.output.string();
  j["heatmap_dir"] = cfg.heatmap_dir ? ordered_json(cfg.heatmap_dir->string()) : ordered_json(nullptr);
  j["workers"] = cfg.workers;
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open run config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidInput("run config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

// ---- records --------------------------------------------------------------

ordered_json record_to_json(const SampleRecord& r) {
  ordered_json j;
  j["run_id"] = r.run_id;
  j["dataset"] = r.dataset;
  j["seed"] = r.seed;
  j["sample_id"] = r.sample_id;
  j["method"] = r.method;
  j["target_class"] = r.target_class;
  j["tdd"] = r.metrics.tdd;
  j["odd"] = r.metrics.odd;
  j["leak_abs"] = r.metrics.leak_abs;
  j["leak_signed"] = r.metrics.leak_signed;
  j["insertion"] = r.metrics.insertion;
  j["stability"] = r.metrics.stability;
  j["runtime_ms"] = r.metrics.runtime_ms;
  return j;
}

SampleRecord record_from_json(const json& j) {
  static constexpr std::array<const char*, 13> kRequired = {
      "run_id", "dataset", "seed", "sample_id", "method", "target_class", "tdd",
      "odd", "leak_abs", "leak_signed", "insertion", "stability", "runtime_ms"};
  if (!j.is_object()) throw InvalidInput("record must be a JSON object");
  for (const char* key : kRequired)
    if (!j.contains(key)) throw InvalidInput(std::string("record is missing '") + key + "'");
  try {
    SampleRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.dataset = j.at("dataset").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.sample_id = j.at("sample_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.target_class = j.at("target_class").get<int>();
    r.metrics.tdd = j.at("tdd").get<double>();
    r.metrics.odd = j.at("odd").get<double>();
    r.metrics.leak_abs = j.at("leak_abs").get<double>();
    r.metrics.leak_signed = j.at("leak_signed").get<double>();
    r.metrics.insertion = j.at("insertion").get<double>();
    r.metrics.stability = j.at("stability").get<double>();
    r.metrics.runtime_ms = j.at("runtime_ms").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("record has a mistyped field: ") + e.what());
  }
}

RunFile read_run_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open record file " + path.string());
  RunFile run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (j.is_object() && j.contains("error")) {
      run.error = j.at("error").is_string() ? j.at("error").get<std::string>() : j.at("error").dump();
      continue;
    }
    try {
      run.records.push_back(record_from_json(j));
    } catch (const InvalidInput& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return run;
}

// ---- running --------------------------------------------------------------

AdapterFactory make_adapter_factory(const AdapterSpec& spec, std::uint64_t run_seed) {
  if (spec.kind == "micro") {
    const std::uint64_t seed = spec.seed.value_or(run_seed);
    const int classes = spec.classes;
    return [seed, classes](int, int) -> std::unique_ptr<ModelAdapter> { return micro_model_new(seed, classes); };
  }
  if (spec.kind == "bridge") {
    const std::string command = spec.command;
    return [command](int height, int width) -> std::unique_ptr<ModelAdapter> {
      return std::make_unique<bridge::BridgeAdapter>(command, height, width);
    };
  }
  throw InvalidInput("unknown adapter kind '" + spec.kind + "'");
}

std::vector<Sample> load_samples(const RunConfig& config) {
  std::vector<Sample> samples;
  if (config.dataset.kind == "directory") {
    samples = load_dataset_dir(config.dataset.path);
  } else {
    for (int i = 0; i < config.dataset.count; ++i) {
      std::ostringstream id;
      id << "syn-" << std::setw(5) << std::setfill('0') << i;
      Sample s = synth_sample(mix_seed(config.seed, static_cast<std::uint64_t>(i)), config.dataset.size,
                              config.dataset.classes);
      s.id = id.str();
      samples.push_back(std::move(s));
    }
  }
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  return samples;
}

namespace {

struct SampleOutcome {
  std::vector<SampleRecord> records;
  std::optional<std::string> skip_reason;
  std::optional<std::string> error;
  std::vector<std::pair<std::string, Heatmap>> heatmaps;
};

// Per-worker state: one adapter (rebuilt if the input size changes) and the
// set of methods already warmed up on it.
struct Worker {
  const AdapterFactory* factory = nullptr;
  std::unique_ptr<ModelAdapter> adapter;
  int height = 0;
  int width = 0;
  std::set<Method> warmed;

  ModelAdapter& adapter_for(const Image& x) {
    if (!adapter || x.height != height || x.width != width) {
      adapter = (*factory)(x.height, x.width);
      height = x.height;
      width = x.width;
      warmed.clear();
    }
    return *adapter;
  }
};

SampleOutcome evaluate_sample(const RunConfig& config, const Sample& sample, std::size_t index, Worker& worker) {
  SampleOutcome out;
  const auto target = select_target(sample.labels);
  if (!target) {
    out.skip_reason = "no foreground label";
    return out;
  }
  try {
    check_image(sample.image);
    ModelAdapter& adapter = worker.adapter_for(sample.image);
    if (target->class_id >= adapter.num_classes()) {
      out.skip_reason = "target class " + std::to_string(target->class_id) + " exceeds model classes";
      return out;
    }
    if (target->mask.popcount() == target->mask.size()) {
      out.skip_reason = "target covers the whole image, no off-target region";
      return out;
    }

    const AttributionSettings settings = config.attribution_settings();
    EvaluationOptions options;
    options.k = config.k;
    options.stability.strength = config.strength;
    options.stability.seed = mix_seed(config.seed ^ 0x5EED5EEDULL, static_cast<std::uint64_t>(index));
    options.stability.coefficients = config.perturbation;

    for (Method method : config.methods) {
      const AttributionFn fn = make_attribution(method, settings);
      if (!worker.warmed.contains(method)) {
        (void)fn(adapter, sample.image, target->class_id, target->mask);
        worker.warmed.insert(method);
      }
      const TimedHeatmap timed = time_explanation(fn, adapter, sample.image, target->class_id, target->mask);
      SampleRecord record;
      record.run_id = config.effective_run_id();
      record.dataset = config.dataset.name;
      record.seed = config.seed;
      record.sample_id = sample.id;
      record.method = std::string(to_string(method));
      record.target_class = target->class_id;
      record.metrics = evaluate_heatmap(fn, adapter, sample.image, target->class_id, target->mask, timed, options);
      out.records.push_back(std::move(record));
      if (config.heatmap_dir) out.heatmaps.emplace_back(std::string(to_string(method)), timed.heatmap);
    }
  } catch (const EmptyRegion& e) {
    out.records.clear();
    out.heatmaps.clear();
    out.skip_reason = e.what();
  } catch (const std::exception& e) {
    out.records.clear();
    out.heatmaps.clear();
    out.error = "sample " + sample.id + ": " + e.what();
  }
  return out;
}

}  // namespace

RunSummary run_benchmark(const RunConfig& config, std::vector<Sample> samples, const AdapterFactory& factory,
                         std::ostream& records, std::ostream& skips) {
  config.validate();
  std::sort(samples.begin(), samples.end(), [](const Sample& a, const Sample& b) { return a.id < b.id; });
  if (config.heatmap_dir) std::filesystem::create_directories(*config.heatmap_dir);

  RunSummary summary;
  summary.samples = samples.size();
  const std::size_t n = samples.size();
  std::vector<std::optional<SampleOutcome>> outcomes(n);
  std::mutex mutex;
  std::condition_variable ready;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  int finished_workers = 0;

  auto work = [&] {
    Worker worker;
    worker.factory = &factory;
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || abort.load()) break;
      SampleOutcome outcome;
      try {
        outcome = evaluate_sample(config, samples[i], i, worker);
      } catch (const std::exception& e) {
        outcome.error = e.what();
      }
      if (outcome.error) abort.store(true);
      {
        std::lock_guard lock(mutex);
        outcomes[i] = std::move(outcome);
      }
      ready.notify_all();
    }
    {
      std::lock_guard lock(mutex);
      ++finished_workers;
    }
    ready.notify_all();
  };

  const int workers = std::max(1, std::min(config.workers, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);

  // Single serializer: emit outcomes strictly in sample order.
  for (std::size_t i = 0; i < n; ++i) {
    SampleOutcome outcome;
    {
      std::unique_lock lock(mutex);
      ready.wait(lock, [&] { return outcomes[i].has_value() || finished_workers == workers; });
      if (!outcomes[i]) break;  // never evaluated: the run was aborted earlier
      outcome = std::move(*outcomes[i]);
    }
    if (outcome.error) {
      summary.error = *outcome.error;
      break;
    }
    if (outcome.skip_reason) {
      ++summary.skipped;
      skips << ordered_json{{"run_id", config.effective_run_id()}, {"sample_id", samples[i].id}, {"reason", *outcome.skip_reason}}.dump()
            << '\n';
      continue;
    }
    for (const SampleRecord& r : outcome.records) {
      records << record_to_json(r).dump() << '\n';
      ++summary.records;
    }
    for (const auto& [method, heatmap] : outcome.heatmaps)
      write_heatmap_pgm(*config.heatmap_dir / (samples[i].id + "_" + method + ".pgm"), heatmap);
    records.flush();
  }
  abort.store(true);
  for (auto& t : pool) t.join();

  if (summary.error) {
    records << ordered_json{{"run_id", config.effective_run_id()}, {"error", *summary.error}}.dump() << '\n';
    records.flush();
  }
  return summary;
}

RunSummary run_benchmark(const RunConfig& config) {
  config.validate();
  std::vector<Sample> samples = load_samples(config);
  const AdapterFactory factory = make_adapter_factory(config.adapter, config.seed);
  if (config.output.has_parent_path()) std::filesystem::create_directories(config.output.parent_path());
  std::ofstream records(config.output);
  if (!records) throw InvalidInput("cannot write " + config.output.string());
  std::ofstream skips(config.output.string() + ".skipped.jsonl");
  if (!skips) throw InvalidInput("cannot write skip log next to " + config.output.string());
  return run_benchmark(config, std::move(samples), factory, records, skips);
}

// ---- aggregation ----------------------------------------------------------

MeanStd mean_and_sample_std(const std::vector<double>& values) {
  if (values.empty()) throw InvalidInput("mean_and_sample_std: no values");
  const Eigen::Map<const Eigen::ArrayXd> v(values.data(), static_cast<Eigen::Index>(values.size()));
  MeanStd out;
  out.mean = v.mean();
  if (values.size() > 1) out.std = std::sqrt((v - out.mean).square().sum() / static_cast<double>(values.size() - 1));
  return out;
}

const std::vector<std::string>& aggregate_metric_names() {
  static const std::vector<std::string> names = {"tdd",         "odd",       "odd_abs",   "leak_abs",
                                                 "leak_signed", "insertion", "stability", "runtime_ms"};
  return names;
}

namespace {

std::vector<double> metric_values(const MetricRow& m) {
  return {m.tdd, m.odd, std::abs(m.odd), m.leak_abs, m.leak_signed, m.insertion, m.stability, m.runtime_ms};
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<std::vector<SampleRecord>>& runs) {
  if (runs.empty()) throw InvalidInput("aggregate: no runs");
  const std::size_t metric_count = aggregate_metric_names().size();
  // (dataset, method) -> per-metric list of run means
  std::map<std::pair<std::string, std::string>, std::vector<std::vector<double>>> run_means;
  for (const auto& run : runs) {
    std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::size_t>> sums;
    for (const SampleRecord& r : run) {
      auto& [total, count] = sums[{r.dataset, r.method}];
      if (total.empty()) total.assign(metric_count, 0.0);
      const std::vector<double> values = metric_values(r.metrics);
      for (std::size_t m = 0; m < metric_count; ++m) total[m] += values[m];
      ++count;
    }
    for (const auto& [key, entry] : sums) {
      auto& per_metric = run_means[key];
      per_metric.resize(metric_count);
      for (std::size_t m = 0; m < metric_count; ++m)
        per_metric[m].push_back(entry.first[m] / static_cast<double>(entry.second));
    }
  }

  std::vector<AggregateRow> rows;
  for (const auto& [key, per_metric] : run_means) {
    for (std::size_t m = 0; m < metric_count; ++m) {
      const MeanStd ms = mean_and_sample_std(per_metric[m]);
      rows.push_back({key.first, key.second, aggregate_metric_names()[m], ms.mean, ms.std,
                      static_cast<int>(per_metric[m].size())});
    }
  }
  return rows;
}

std::vector<AggregateRow> aggregate_files(const std::vector<std::filesystem::path>& files, std::ostream& warnings) {
  std::vector<std::vector<SampleRecord>> runs;
  for (const auto& path : files) {
    RunFile run = read_run_file(path);
    if (run.error) {
      warnings << "warning: skipping incomplete run " << path.string() << ": " << *run.error << '\n';
      continue;
    }
    runs.push_back(std::move(run.records));
  }
  if (runs.empty()) throw InvalidInput("aggregate: no completed runs among the inputs");
  return aggregate(runs);
}

void write_aggregate_csv(std::ostream& out, const std::vector<AggregateRow>& rows) {
  out << "dataset,method,metric,mean,std,runs\n";
  std::ostringstream line;
  for (const AggregateRow& row : rows) {
    line.str({});
    line << std::setprecision(12) << row.dataset << ',' << row.method << ',' << row.metric << ',' << row.mean << ','
         << row.std << ',' << row.runs << '\n';
    out << line.str();
  }
}

}  // namespace segattr
