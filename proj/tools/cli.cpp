#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"
#include "megloc/binary_io.hpp"
#include "megloc/errors.hpp"
#include "megloc/evaluation.hpp"
#include "megloc/forward_model.hpp"
#include "megloc/network.hpp"
#include "megloc/signal_gen.hpp"
#include "megloc/subspace.hpp"
#include "megloc/training.hpp"

namespace megloc::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const char* kDefaults = R"({
  "geometry": {
    "file": "geometry.megl",
    "sensors": 306,
    "sensor_radius": 0.12,
    "sources": 15002,
    "source_radius": 0.08,
    "seed": 1
  },
  "data": {
    "file": "data.megd",
    "sources": 1,
    "snr_db": 10.0,
    "correlation": "random",
    "n_samples": 16,
    "amplitude": 1.0,
    "count": 1000,
    "seed": 0
  },
  "model": {
    "file": "model.megm",
    "type": "mlp",
    "hidden": [3000, 2500, 1200],
    "filters": 32,
    "taps": 5,
    "seed": 0,
    "init_gain": 1.0,
    "input_scaling": "unit_rms",
    "standardize_outputs": true
  },
  "train": {
    "source": "stream",
    "learning_rate": 0.001,
    "batch_size": 32,
    "steps": 0,
    "reg_type": "none",
    "reg_weight": 0.0,
    "seed": 0,
    "log_every": 100,
    "history": "loss_history.csv"
  },
  "localize": {
    "method": "rap_music",
    "example": 0
  },
  "sweep": {
    "file": "sweep.csv",
    "method": "rap_music",
    "sources": 1,
    "snr_values": [-10, -5, 0, 5, 10, 20],
    "correlation_values": [0.0],
    "n_samples": 16,
    "trials": 200,
    "perturbation_rhos": [0.0, 0.05, 0.1, 0.2],
    "seed": 0,
    "amplitude": 1.0,
    "record_elapsed": false,
    "threads": 1
  },
  "bench": {
    "file": "timing.csv",
    "algorithms": ["rap_music", "mlp", "cnn"],
    "sources": [1, 2, 3],
    "n_samples": [1, 16],
    "repeats": 10,
    "warmup": 2,
    "seed": 0
  }
})";

// ---------------------------------------------------------------- config

void merge_checked(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    if (base[key].is_object()) {
      merge_checked(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* node = &config;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) path.push_back(part);
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (!node->is_object() || !node->contains(path[i])) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    node = &(*node)[path[i]];
  }
  if (node->is_object()) throw ConfigError("config key '" + key + "' names a section");
  json value = json::parse(text, nullptr, false);
  *node = value.is_discarded() ? json(text) : value;
}

class Config {
 public:
  explicit Config(json doc) : doc_(std::move(doc)) {}

  const json& doc() const { return doc_; }

  const json& at(const std::string& key) const {
    const json* node = &doc_;
    std::stringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.')) node = &node->at(part);
    return *node;
  }

  double number(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number()) fail(key, "a number");
    return v.get<double>();
  }

  double positive(const std::string& key) const {
    const double v = number(key);
    if (!(v > 0.0)) fail(key, "a positive number");
    return v;
  }

  std::size_t count(const std::string& key) const { return as_count(at(key), key); }

  std::uint64_t seed(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
      fail(key, "a non-negative integer seed");
    }
    return v.get<std::uint64_t>();
  }

  bool flag(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_boolean()) fail(key, "true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_string()) fail(key, "a string");
    return v.get<std::string>();
  }

  std::string choice(const std::string& key, std::initializer_list<const char*> options) const {
    const std::string v = text(key);
    for (const char* o : options)
      if (v == o) return v;
    std::string list;
    for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
    throw ConfigError("config key '" + key + "': expected one of {" + list + "}, got '" + v + "'");
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array() || v.empty()) fail(key, "a nonempty list of integers");
    std::vector<std::size_t> out;
    for (const auto& item : v) out.push_back(as_count(item, key));
    return out;
  }

  std::vector<double> numbers(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array()) fail(key, "a list of numbers");
    std::vector<double> out;
    for (const auto& item : v) {
      if (!item.is_number()) fail(key, "a list of numbers");
      out.push_back(item.get<double>());
    }
    return out;
  }

  std::vector<std::string> texts(const std::string& key) const {
    const json& v = at(key);
    if (!v.is_array()) fail(key, "a list of strings");
    std::vector<std::string> out;
    for (const auto& item : v) {
      if (!item.is_string()) fail(key, "a list of strings");
      out.push_back(item.get<std::string>());
    }
    return out;
  }

  static SnrDb snr(const json& v, const std::string& key) {
    if (v.is_string() && v.get<std::string>() == "noiseless") return kNoiseless;
    if (!v.is_number()) fail(key, "a number of dB or \"noiseless\"");
    return v.get<double>();
  }

  static CorrelationTarget correlation(const json& v, const std::string& key) {
    if (v.is_string() && v.get<std::string>() == "random") return CorrelationTarget::random();
    if (!v.is_number()) fail(key, "a number in [-1, 1] or \"random\"");
    try {
      return CorrelationTarget::fixed(v.get<double>());
    } catch (const InvalidArgument&) {
      fail(key, "a number in [-1, 1] or \"random\"");
    }
  }

  [[noreturn]] static void fail(const std::string& key, const std::string& expected) {
    throw ConfigError("config key '" + key + "': expected " + expected);
  }

 private:
  static std::size_t as_count(const json& v, const std::string& key) {
    if (!v.is_number_integer() || v.get<long long>() < 0) fail(key, "a non-negative integer");
    return v.get<std::size_t>();
  }

  json doc_;
};

// ---------------------------------------------------------------- context

struct Context {
  Config config;
  fs::path out_dir;
  std::ostream& out;

  fs::path file(const std::string& key) const {
    const fs::path p = config.text(key);
    return p.is_absolute() ? p : out_dir / p;
  }
};

void print_line(std::ostream& out, const json& line) { out << line.dump() << '\n'; }

void check_fingerprint(const std::string& what, std::uint64_t found, std::uint64_t expected) {
  if (found != expected) {
    throw CompatibilityError(what + " was built for lead field " + io::hex64(found) +
                             " but the geometry file has " + io::hex64(expected));
  }
}

Geometry load_geometry_file(const Context& ctx) { return load_geometry(ctx.file("geometry.file")); }

DatasetSpec data_spec(const Config& c) {
  DatasetSpec spec;
  spec.sources = c.count("data.sources");
  spec.snr_db = Config::snr(c.at("data.snr_db"), "data.snr_db");
  spec.correlation = Config::correlation(c.at("data.correlation"), "data.correlation");
  spec.n_samples = c.count("data.n_samples");
  spec.amplitude = c.positive("data.amplitude");
  spec.seed = c.seed("data.seed");
  if (spec.sources < 1 || spec.sources > 3) Config::fail("data.sources", "1, 2 or 3");
  if (spec.n_samples < 1) Config::fail("data.n_samples", "a positive integer");
  return spec;
}

LabeledDataset load_checked_dataset(const Context& ctx, const LeadField& lf) {
  auto ds = load_dataset(ctx.file("data.file"));
  check_fingerprint("dataset", ds.metadata.lead_field_fingerprint, lf.fingerprint());
  return ds;
}

std::shared_ptr<const NetworkModel> load_checked_model(const Context& ctx, const LeadField& lf,
                                                       std::size_t sources, std::size_t samples) {
  auto model = std::make_shared<const NetworkModel>(load_model(ctx.file("model.file")));
  if (model->lead_field_fingerprint != 0) {
    check_fingerprint("model", model->lead_field_fingerprint, lf.fingerprint());
  }
  if (model->input_rows != static_cast<std::size_t>(lf.sensors()) || model->input_cols != samples ||
      model->output_dim() != 3 * sources) {
    throw CompatibilityError("model expects " + std::to_string(model->input_rows) + "x" +
                             std::to_string(model->input_cols) + " inputs and " +
                             std::to_string(model->output_dim() / 3) + " sources, run asks for " +
                             std::to_string(lf.sensors()) + "x" + std::to_string(samples) +
                             " and " + std::to_string(sources));
  }
  return model;
}

Localizer make_localizer(const Context& ctx, const std::string& method_key, const Geometry& g,
                         std::size_t sources, std::size_t samples) {
  const std::string method = ctx.config.choice(method_key, {"rap_music", "music", "model", "centroid"});
  if (method == "rap_music") return make_rap_music_localizer(g.lead_field, g.space, sources);
  if (method == "music") {
    auto graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(g.space));
    return make_music_localizer(g.lead_field, g.space, graph, sources);
  }
  if (method == "centroid") return make_centroid_localizer(g.space, sources);
  return make_network_localizer(load_checked_model(ctx, g.lead_field, sources, samples), "model");
}

// ---------------------------------------------------------------- verbs

int cmd_gen_geometry(const Context& ctx) {
  const auto& c = ctx.config;
  const std::size_t sensors = c.count("geometry.sensors");
  const std::size_t sources = c.count("geometry.sources");
  const double sensor_radius = c.positive("geometry.sensor_radius");
  const double source_radius = c.positive("geometry.source_radius");
  const std::uint64_t seed = c.seed("geometry.seed");
  const fs::path path = ctx.file("geometry.file");

  auto array = build_sensor_helmet(sensors, sensor_radius);
  auto space = build_synthetic_source_space(sources, source_radius, seed);
  auto lf = compute_lead_field(array, space);
  const Geometry geometry{std::move(lf), std::move(space), std::move(array)};
  save_geometry(geometry, path);
  print_line(ctx.out, {{"written", path.string()},
                       {"M", geometry.lead_field.sensors()},
                       {"P", geometry.lead_field.sources()},
                       {"bytes", fs::file_size(path)},
                       {"fingerprint", io::hex64(geometry.lead_field.fingerprint())}});
  return kOk;
}

int cmd_gen_data(const Context& ctx) {
  const DatasetSpec spec = data_spec(ctx.config);
  const std::size_t count = ctx.config.count("data.count");
  const fs::path path = ctx.file("data.file");
  const Geometry g = load_geometry_file(ctx);
  const auto ds = generate_dataset(g.lead_field, g.space, spec, count);
  save_dataset(ds, path);
  print_line(ctx.out, {{"written", path.string()},
                       {"count", ds.size()},
                       {"M", ds.metadata.sensors},
                       {"N", ds.metadata.n_samples},
                       {"Q", ds.metadata.sources},
                       {"fingerprint", io::hex64(ds.metadata.lead_field_fingerprint)}});
  return kOk;
}

int cmd_train(const Context& ctx) {
  const auto& c = ctx.config;
  const DatasetSpec spec = data_spec(c);
  const std::string type = c.choice("model.type", {"mlp", "cnn"});
  const std::string source_kind = c.choice("train.source", {"stream", "file"});
  const std::string scaling = c.choice("model.input_scaling", {"unit_rms", "none"});
  const std::string reg = c.choice("train.reg_type", {"none", "tikhonov", "l1"});

  TrainingConfig tc;
  tc.learning_rate = c.positive("train.learning_rate");
  tc.batch_size = c.count("train.batch_size");
  tc.steps = c.count("train.steps");
  tc.reg_type = reg == "tikhonov" ? Regularization::tikhonov
                : reg == "l1"     ? Regularization::l1
                                  : Regularization::none;
  tc.reg_weight = c.number("train.reg_weight");
  tc.seed = c.seed("train.seed");
  tc.log_every = c.count("train.log_every");
  if (tc.batch_size < 1) Config::fail("train.batch_size", "a positive integer");
  if (tc.log_every < 1) Config::fail("train.log_every", "a positive integer");
  if (tc.reg_weight < 0.0) Config::fail("train.reg_weight", "a non-negative number");
  if (type == "mlp" && spec.n_samples != 1) {
    throw ConfigError("config key 'data.n_samples': the mlp model takes single snapshots (1)");
  }
  const fs::path model_path = ctx.file("model.file");
  const fs::path history_path = ctx.file("train.history");

  const Geometry g = load_geometry_file(ctx);
  ArchitectureSpec arch;
  arch.input_rows = static_cast<std::size_t>(g.lead_field.sensors());
  arch.input_cols = spec.n_samples;
  arch.conv_filters = type == "cnn" ? c.count("model.filters") : 0;
  arch.conv_taps = c.count("model.taps");
  arch.hidden = c.counts("model.hidden");
  arch.outputs = 3 * spec.sources;
  arch.scaling = scaling == "unit_rms" ? InputScaling::unit_rms : InputScaling::none;
  arch.init_gain = c.positive("model.init_gain");
  NetworkModel model = build_network(arch, c.seed("model.seed"));
  if (c.flag("model.standardize_outputs")) standardize_outputs(model, g.space.positions());
  model.lead_field_fingerprint = g.lead_field.fingerprint();

  TrainResult result;
  if (source_kind == "file") {
    const auto ds = load_checked_dataset(ctx, g.lead_field);
    if (ds.metadata.n_samples != spec.n_samples || ds.metadata.sources != spec.sources) {
      throw CompatibilityError("dataset holds N=" + std::to_string(ds.metadata.n_samples) +
                               ", Q=" + std::to_string(ds.metadata.sources) +
                               " examples; the model is configured for N=" +
                               std::to_string(spec.n_samples) + ", Q=" + std::to_string(spec.sources));
    }
    DatasetSource source(ds, tc.seed);
    result = train(std::move(model), source, tc);
  } else {
    const std::uint64_t needed = static_cast<std::uint64_t>(tc.steps) * tc.batch_size;
    DatasetStream stream(g.lead_field, g.space, spec, std::max<std::uint64_t>(needed, 1));
    StreamSource source(stream);
    result = train(std::move(model), source, tc);
  }
  save_model(result.model, model_path);
  write_loss_history_csv(result.history, history_path);
  json line{{"written", model_path.string()},
            {"history", history_path.string()},
            {"steps", tc.steps},
            {"parameters", result.model.parameter_count()}};
  if (!result.history.empty()) line["last_logged_loss"] = result.history.back().loss;
  print_line(ctx.out, line);
  return kOk;
}

int cmd_localize(const Context& ctx) {
  const auto& c = ctx.config;
  const std::size_t k = c.count("localize.example");
  const Geometry g = load_geometry_file(ctx);
  const auto ds = load_checked_dataset(ctx, g.lead_field);
  if (k >= ds.size()) {
    throw ConfigError("config key 'localize.example': index " + std::to_string(k) +
                      " out of range for " + std::to_string(ds.size()) + " examples");
  }
  const auto localizer =
      make_localizer(ctx, "localize.method", g, ds.metadata.sources, ds.metadata.n_samples);
  const Eigen::MatrixXd estimate = localizer.localize(ds.inputs[k]);
  for (Eigen::Index q = 0; q < estimate.rows(); ++q) {
    print_line(ctx.out, {{"example", k},
                         {"source", q},
                         {"method", localizer.name},
                         {"position", {estimate(q, 0), estimate(q, 1), estimate(q, 2)}}});
  }
  const auto& truth = ds.targets[k];
  json truth_rows = json::array();
  for (Eigen::Index q = 0; q < truth.rows(); ++q) truth_rows.push_back({truth(q, 0), truth(q, 1), truth(q, 2)});
  print_line(ctx.out, {{"example", k},
                       {"truth", truth_rows},
                       {"assignment_error_m", assignment_error(truth, estimate)}});
  return kOk;
}

ExperimentConfig experiment_config(const Config& c, std::optional<std::size_t> threads) {
  ExperimentConfig e;
  e.sources = c.count("sweep.sources");
  if (e.sources < 1 || e.sources > 3) Config::fail("sweep.sources", "1, 2 or 3");
  e.snr_values.clear();
  for (const auto& v : c.at("sweep.snr_values")) e.snr_values.push_back(Config::snr(v, "sweep.snr_values"));
  e.correlation_values.clear();
  for (const auto& v : c.at("sweep.correlation_values"))
    e.correlation_values.push_back(Config::correlation(v, "sweep.correlation_values"));
  if (e.snr_values.empty()) Config::fail("sweep.snr_values", "a nonempty list");
  if (e.correlation_values.empty()) Config::fail("sweep.correlation_values", "a nonempty list");
  e.n_samples = c.count("sweep.n_samples");
  e.trials = c.count("sweep.trials");
  if (e.trials < 1) Config::fail("sweep.trials", "a positive integer");
  e.perturbation_rhos = c.numbers("sweep.perturbation_rhos");
  for (double rho : e.perturbation_rhos)
    if (!(rho >= 0.0)) Config::fail("sweep.perturbation_rhos", "non-negative fractions");
  e.seed = c.seed("sweep.seed");
  e.amplitude = c.positive("sweep.amplitude");
  e.record_elapsed = c.flag("sweep.record_elapsed");
  e.threads = threads.value_or(c.count("sweep.threads"));
  if (e.threads < 1) Config::fail("sweep.threads", "a positive integer");
  return e;
}

int cmd_sweep(const Context& ctx, std::optional<std::size_t> threads, bool robustness) {
  const ExperimentConfig e = experiment_config(ctx.config, threads);
  if (robustness && e.perturbation_rhos.empty()) {
    Config::fail("sweep.perturbation_rhos", "a nonempty list");
  }
  const fs::path path = ctx.file("sweep.file");
  const Geometry g = load_geometry_file(ctx);
  const Localizer localizer = make_localizer(ctx, "sweep.method", g, e.sources, e.n_samples);
  const SweepReport report = robustness ? run_robustness_sweep(e, localizer, g.lead_field, g.space)
                                        : run_accuracy_sweep(e, localizer, g.lead_field, g.space);
  write_report_csv(report, path);
  print_line(ctx.out, {{"written", path.string()}, {"rows", report.rows.size()}});
  return kOk;
}

int cmd_bench_time(const Context& ctx) {
  const auto& c = ctx.config;
  const auto names = c.texts("bench.algorithms");
  const auto qs = c.counts("bench.sources");
  const auto ns = c.counts("bench.n_samples");
  const std::size_t repeats = c.count("bench.repeats");
  const std::size_t warmup = c.count("bench.warmup");
  const std::uint64_t seed = c.seed("bench.seed");
  const std::uint64_t model_seed = c.seed("model.seed");
  const fs::path path = ctx.file("bench.file");
  if (repeats < 10) Config::fail("bench.repeats", "an integer >= 10");
  for (std::size_t q : qs)
    if (q < 1 || q > 3) Config::fail("bench.sources", "values in {1, 2, 3}");

  const Geometry g = load_geometry_file(ctx);
  const std::size_t m = static_cast<std::size_t>(g.lead_field.sensors());
  auto graph = std::make_shared<const NeighborGraph>();
  std::vector<TimedAlgorithm> algorithms;
  for (const auto& name : names) {
    if (name == "rap_music") {
      algorithms.push_back({name, [&g](std::size_t q, std::size_t) -> std::optional<Localizer> {
                              return make_rap_music_localizer(g.lead_field, g.space, q);
                            }});
    } else if (name == "music") {
      graph = std::make_shared<const NeighborGraph>(build_neighbor_graph(g.space));
      algorithms.push_back({name, [&g, graph](std::size_t q, std::size_t) -> std::optional<Localizer> {
                              return make_music_localizer(g.lead_field, g.space, graph, q);
                            }});
    } else if (name == "mlp") {
      // Untrained Table I networks: inference cost does not depend on the weights.
      algorithms.push_back({name, [m, model_seed](std::size_t q, std::size_t n) -> std::optional<Localizer> {
                              if (n != 1) return std::nullopt;
                              return make_network_localizer(
                                  std::make_shared<const NetworkModel>(build_mlp(m, q, model_seed)), "mlp");
                            }});
    } else if (name == "cnn") {
      algorithms.push_back({name, [m, model_seed](std::size_t q, std::size_t n) -> std::optional<Localizer> {
                              if (n < 5) return std::nullopt;
                              return make_network_localizer(
                                  std::make_shared<const NetworkModel>(build_cnn(m, n, q, 32, 5, model_seed)),
                                  "cnn");
                            }});
    } else {
      throw ConfigError("config key 'bench.algorithms': unknown algorithm '" + name + "'");
    }
  }
  const auto report = run_timing_benchmark(algorithms, g.lead_field, g.space, qs, ns, repeats, warmup, seed);
  write_timing_csv(report, path);
  for (const auto& row : report.rows) {
    print_line(ctx.out, {{"algorithm", row.algorithm},
                         {"q", row.sources},
                         {"n_samples", row.n_samples},
                         {"median_ms", row.median_ms}});
  }
  print_line(ctx.out, {{"written", path.string()}, {"rows", report.rows.size()}});
  return kOk;
}

}  // namespace

std::string default_config_json() { return json::parse(kDefaults).dump(2); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MEG source localization toolkit", "megloc"};
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir = ".";
  std::optional<std::size_t> threads;
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--set", overrides, "override one key, e.g. --set sweep.trials=50")
      ->allow_extra_args(false);
  app.add_option("--out", out_dir, "directory for every file named in the configuration");
  app.add_option("--threads", threads, "worker threads for sweeps");
  app.require_subcommand(1, 1);
  const std::vector<std::pair<std::string, std::string>> verbs{
      {"gen-geometry", "write sensors, source grid and lead field (geometry.*)"},
      {"gen-data", "simulate a labeled dataset (data.*)"},
      {"train", "train a network by minibatch SGD (model.*, train.*, data.*)"},
      {"localize", "localize one dataset example (localize.*)"},
      {"sweep", "Monte-Carlo accuracy sweep to CSV (sweep.*)"},
      {"perturb-sweep", "accuracy under forward-model error to CSV (sweep.*)"},
      {"bench-time", "median inference times to CSV (bench.*)"},
      {"show-config", "print the resolved configuration"}};
  for (const auto& [name, help] : verbs) app.add_subcommand(name, help)->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }
  const std::string verb = app.get_subcommands().front()->get_name();

  try {
    json doc = json::parse(kDefaults);
    if (!config_path.empty()) {
      const auto bytes = io::read_file(config_path);
      const json user = json::parse(bytes.begin(), bytes.end());
      merge_checked(doc, user, "");
    }
    for (const auto& o : overrides) apply_override(doc, o);
    if (threads && *threads < 1) throw ConfigError("--threads must be >= 1");

    Context ctx{Config(doc), fs::path(out_dir), out};
    print_line(out, {{"command", verb}, {"config", doc}});
    if (verb == "show-config") return kOk;
    fs::create_directories(ctx.out_dir);
    if (verb == "gen-geometry") return cmd_gen_geometry(ctx);
    if (verb == "gen-data") return cmd_gen_data(ctx);
    if (verb == "train") return cmd_train(ctx);
    if (verb == "localize") return cmd_localize(ctx);
    if (verb == "sweep") return cmd_sweep(ctx, threads, false);
    if (verb == "perturb-sweep") return cmd_sweep(ctx, threads, true);
    return cmd_bench_time(ctx);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InvalidArgument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const CompatibilityError& e) {
    err << "compatibility error: " << e.what() << '\n';
    return kCompatibilityError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace megloc::cli
