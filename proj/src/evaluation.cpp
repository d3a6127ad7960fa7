#include "megloc/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "megloc/binary_io.hpp"
#include "megloc/errors.hpp"
#include "megloc/rng.hpp"

namespace megloc {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::uint64_t kPerturbationStream = 0x5045525455524245ULL;
constexpr std::uint64_t kTimingStream = 0x54494D494E470000ULL;

const char* kAccuracyHeader =
    "condition_snr_db,condition_corr,q,n_samples,localizer,trials,mean_error_m,stderr_m,"
    "mean_elapsed_s";
const char* kTimingHeader = "algorithm,q,n_samples,median_ms,repeats";

// Runs body(i) for i in [0, n) across `threads` workers. Results must be
// written to per-index slots so the outcome is independent of scheduling.
template <typename Body>
void parallel_for(std::size_t n, std::size_t threads, Body&& body) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += threads) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

Eigen::MatrixXd rows_of(const std::vector<Vec3>& points) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(points.size()), 3);
  for (std::size_t i = 0; i < points.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = points[i].transpose();
  return out;
}

Vec3 centroid(const SourceSpace& space) {
  Vec3 c = Vec3::Zero();
  for (const auto& p : space.positions()) c += p;
  return c / static_cast<double>(space.size());
}

struct TrialOutcome {
  double error = 0.0;
  double elapsed = 0.0;
};

SweepRow summarize(const std::vector<TrialOutcome>& outcomes, const ExperimentConfig& config,
                   const std::string& name, SnrDb snr, CorrelationTarget corr) {
  SweepRow row;
  row.snr_db = snr;
  row.correlation = corr;
  row.sources = config.sources;
  row.n_samples = config.n_samples;
  row.localizer = name;
  row.trials = outcomes.size();
  double sum = 0.0;
  double elapsed = 0.0;
  for (const auto& o : outcomes) {
    sum += o.error;
    elapsed += o.elapsed;
  }
  const double n = static_cast<double>(outcomes.size());
  row.mean_error_m = sum / n;
  double ss = 0.0;
  for (const auto& o : outcomes) ss += (o.error - row.mean_error_m) * (o.error - row.mean_error_m);
  row.stderr_m = outcomes.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  row.mean_elapsed_s =
      config.record_elapsed ? elapsed / n : std::numeric_limits<double>::quiet_NaN();
  return row;
}

void validate(const ExperimentConfig& config, const LeadField& lead_field, const SourceSpace& space) {
  if (config.trials < 1) throw InvalidArgument("sweep: trials must be >= 1");
  if (config.snr_values.empty() || config.correlation_values.empty()) {
    throw InvalidArgument("sweep: need at least one SNR and one correlation value");
  }
  if (static_cast<std::size_t>(lead_field.sources()) != space.size()) {
    throw InvalidArgument("sweep: lead field and source space disagree on P");
  }
  for (double rho : config.perturbation_rhos) {
    if (!(rho >= 0.0)) throw InvalidArgument("sweep: perturbation rho must be >= 0");
  }
}

// Data for every trial of condition (i, j) comes from `simulation` while the
// localizer is untouched; `simulation_for(t)` may vary per trial.
template <typename SimulationFor>
std::vector<TrialOutcome> run_condition(const ExperimentConfig& config, const Localizer& localizer,
                                        const SourceSpace& space, const DatasetSpec& spec,
                                        SimulationFor&& simulation_for) {
  std::vector<TrialOutcome> outcomes(config.trials);
  parallel_for(config.trials, config.threads, [&](std::size_t t) {
    const auto simulation = simulation_for(t);
    const Example ex = generate_example(*simulation, space, spec, t);
    const auto start = Clock::now();
    const Eigen::MatrixXd estimate = localizer.localize(ex.input);
    outcomes[t].elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    outcomes[t].error = assignment_error(ex.target, estimate);
  });
  return outcomes;
}

DatasetSpec condition_spec(const ExperimentConfig& config, std::size_t i, std::size_t j) {
  DatasetSpec spec;
  spec.sources = config.sources;
  spec.snr_db = config.snr_values[i];
  spec.correlation = config.correlation_values[j];
  spec.n_samples = config.n_samples;
  spec.amplitude = config.amplitude;
  spec.seed = derive_seed(config.seed, {i, j});
  return spec;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream in(line);
  std::string field;
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double parse_double(const std::string& text) {
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw InvalidArgument("csv: bad number '" + text + "'");
  return v;
}

void write_text_atomic(const std::string& text, const std::filesystem::path& path) {
  io::write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

Localizer make_rap_music_localizer(const LeadField& lead_field, const SourceSpace& space,
                                   std::size_t sources) {
  return {"rap_music", [&lead_field, &space, sources](const Eigen::MatrixXd& y) {
            return rows_of(rap_music_localize(y, lead_field, space, sources).positions);
          }};
}

Localizer make_music_localizer(const LeadField& lead_field, const SourceSpace& space,
                               std::shared_ptr<const NeighborGraph> graph, std::size_t sources) {
  const Vec3 fallback = centroid(space);
  return {"music", [&lead_field, &space, graph, sources, fallback](const Eigen::MatrixXd& y) {
            auto found = music_localize(y, lead_field, space, *graph, sources).positions;
            // Too few local maxima: answer the centroid for the missing sources.
            while (found.size() < sources) found.push_back(fallback);
            return rows_of(found);
          }};
}

Localizer make_network_localizer(std::shared_ptr<const NetworkModel> model, std::string name) {
  return {std::move(name), [model](const Eigen::MatrixXd& y) { return predict_locations(*model, y); }};
}

Localizer make_centroid_localizer(const SourceSpace& space, std::size_t sources) {
  const Eigen::MatrixXd answer =
      centroid(space).transpose().replicate(static_cast<Eigen::Index>(sources), 1);
  return {"centroid", [answer](const Eigen::MatrixXd&) { return answer; }};
}

double assignment_error(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& estimate) {
  if (truth.rows() != estimate.rows() || truth.cols() != 3 || estimate.cols() != 3) {
    throw InvalidArgument("assignment_error: both sets must be Q x 3 with equal Q");
  }
  if (truth.rows() < 1 || truth.rows() > 3) throw InvalidArgument("assignment_error: need 1 <= Q <= 3");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(truth.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      total += (truth.row(static_cast<Eigen::Index>(i)) - estimate.row(perm[i])).norm();
    }
    best = std::min(best, total / static_cast<double>(perm.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

SweepReport run_accuracy_sweep(const ExperimentConfig& config, const Localizer& localizer,
                               const LeadField& lead_field, const SourceSpace& space) {
  validate(config, lead_field, space);
  SweepReport report;
  for (std::size_t i = 0; i < config.snr_values.size(); ++i) {
    for (std::size_t j = 0; j < config.correlation_values.size(); ++j) {
      const DatasetSpec spec = condition_spec(config, i, j);
      auto outcomes = run_condition(config, localizer, space, spec,
                                    [&](std::size_t) { return &lead_field; });
      report.rows.push_back(summarize(outcomes, config, localizer.name, config.snr_values[i],
                                      config.correlation_values[j]));
    }
  }
  return report;
}

SweepReport run_robustness_sweep(const ExperimentConfig& config, const Localizer& localizer,
                                 const LeadField& lead_field, const SourceSpace& space) {
  validate(config, lead_field, space);
  if (config.perturbation_rhos.empty()) {
    throw InvalidArgument("robustness sweep: perturbation_rhos must be nonempty");
  }
  SweepReport report;
  report.robustness = true;
  for (std::size_t r = 0; r < config.perturbation_rhos.size(); ++r) {
    const double rho = config.perturbation_rhos[r];
    for (std::size_t i = 0; i < config.snr_values.size(); ++i) {
      for (std::size_t j = 0; j < config.correlation_values.size(); ++j) {
        const DatasetSpec spec = condition_spec(config, i, j);
        auto outcomes = run_condition(config, localizer, space, spec, [&](std::size_t t) {
          if (rho == 0.0) return std::shared_ptr<const LeadField>(std::shared_ptr<const LeadField>(), &lead_field);
          return std::make_shared<const LeadField>(perturb_lead_field(
              lead_field, rho, derive_seed(config.seed, {kPerturbationStream, r, i, j, t})));
        });
        SweepRow row = summarize(outcomes, config, localizer.name, config.snr_values[i],
                                 config.correlation_values[j]);
        row.perturbation_rho = rho;
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

TimingReport run_timing_benchmark(const std::vector<TimedAlgorithm>& algorithms,
                                  const LeadField& lead_field, const SourceSpace& space,
                                  const std::vector<std::size_t>& source_counts,
                                  const std::vector<std::size_t>& sample_counts,
                                  std::size_t repeats, std::size_t warmup, std::uint64_t seed) {
  if (repeats < 10) throw InvalidArgument("timing benchmark: repeats must be >= 10");
  TimingReport report;
  for (std::size_t q : source_counts) {
    for (std::size_t n : sample_counts) {
      DatasetSpec spec;
      spec.sources = q;
      spec.snr_db = 10.0;
      spec.correlation = n > q ? CorrelationTarget::random() : CorrelationTarget::fixed(0.0);
      spec.n_samples = n;
      spec.seed = derive_seed(seed, {kTimingStream, q, n});
      const Example ex = generate_example(lead_field, space, spec, 0);

      for (const auto& algorithm : algorithms) {
        auto localizer = algorithm.make(q, n);
        if (!localizer) continue;
        for (std::size_t w = 0; w < warmup; ++w) (void)localizer->localize(ex.input);
        std::vector<double> times;
        times.reserve(repeats);
        for (std::size_t r = 0; r < repeats; ++r) {
          const auto start = Clock::now();
          const Eigen::MatrixXd out = localizer->localize(ex.input);
          times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
          if (!out.allFinite()) throw NumericError("timing benchmark: non-finite output");
        }
        report.rows.push_back({algorithm.name, q, n, median(times), repeats});
      }
    }
  }
  return report;
}

std::string format_snr(const SnrDb& snr) { return snr ? num(*snr) : "noiseless"; }

SnrDb parse_snr(const std::string& text) {
  if (text == "noiseless") return kNoiseless;
  return parse_double(text);
}

std::string format_correlation(const CorrelationTarget& target) {
  return target.is_random() ? "random" : num(target.value());
}

CorrelationTarget parse_correlation(const std::string& text) {
  if (text == "random") return CorrelationTarget::random();
  return CorrelationTarget::fixed(parse_double(text));
}

std::string report_csv(const SweepReport& report) {
  std::ostringstream out;
  out << kAccuracyHeader << (report.robustness ? ",perturbation_rho" : "") << '\n';
  for (const auto& r : report.rows) {
    out << format_snr(r.snr_db) << ',' << format_correlation(r.correlation) << ',' << r.sources
        << ',' << r.n_samples << ',' << r.localizer << ',' << r.trials << ','
        << num(r.mean_error_m) << ',' << num(r.stderr_m) << ',' << num(r.mean_elapsed_s);
    if (report.robustness) out << ',' << num(r.perturbation_rho.value_or(0.0));
    out << '\n';
  }
  return out.str();
}

void write_report_csv(const SweepReport& report, const std::filesystem::path& path) {
  write_text_atomic(report_csv(report), path);
}

SweepReport read_report_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw CorruptFileError("csv: missing header");
  SweepReport report;
  if (line == std::string(kAccuracyHeader) + ",perturbation_rho") {
    report.robustness = true;
  } else if (line != kAccuracyHeader) {
    throw FormatError("csv: unexpected header '" + line + "'");
  }
  const std::size_t width = report.robustness ? 10 : 9;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != width) throw CorruptFileError("csv: wrong field count in '" + line + "'");
    SweepRow r;
    r.snr_db = parse_snr(f[0]);
    r.correlation = parse_correlation(f[1]);
    r.sources = std::stoul(f[2]);
    r.n_samples = std::stoul(f[3]);
    r.localizer = f[4];
    r.trials = std::stoul(f[5]);
    r.mean_error_m = parse_double(f[6]);
    r.stderr_m = parse_double(f[7]);
    r.mean_elapsed_s = parse_double(f[8]);
    if (report.robustness) r.perturbation_rho = parse_double(f[9]);
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string timing_csv(const TimingReport& report) {
  std::ostringstream out;
  out << kTimingHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.algorithm << ',' << r.sources << ',' << r.n_samples << ',' << num(r.median_ms) << ','
        << r.repeats << '\n';
  }
  return out.str();
}

void write_timing_csv(const TimingReport& report, const std::filesystem::path& path) {
  write_text_atomic(timing_csv(report), path);
}

TimingReport read_timing_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || line != kTimingHeader) throw FormatError("csv: bad timing header");
  TimingReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 5) throw CorruptFileError("csv: wrong field count in '" + line + "'");
    report.rows.push_back({f[0], std::stoul(f[1]), std::stoul(f[2]), parse_double(f[3]),
                           std::stoul(f[4])});
  }
  return report;
}

}  // namespace megloc
