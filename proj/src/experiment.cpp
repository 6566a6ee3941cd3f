#include "spyhammer/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "spyhammer/errors.hpp"
#include "spyhammer/module.hpp"
#include "spyhammer/rng.hpp"

namespace spyhammer {
namespace {

struct Bench {
  std::unique_ptr<SimulatedModule> module;
  std::unique_ptr<HammerEngine> engine;
};

Bench make_bench(const ExperimentConfig& config, const ModuleProfile& profile, std::uint64_t seed) {
  EngineConfig ec;
  ec.noise = config.noise;
  ec.fidelity = config.fidelity;
  ec.threads = config.threads;
  Bench b;
  b.module = std::make_unique<SimulatedModule>(build_module(profile, seed));
  b.engine = std::make_unique<HammerEngine>(*b.module, ec);
  return b;
}

std::vector<BerSample> collect_model_samples(const HammerEngine& engine, Region region,
                                             std::uint32_t reps) {
  const TempDomain& dom = engine.module().domain();
  std::vector<BerSample> out;
  out.reserve(static_cast<std::size_t>(dom.size()) * reps);
  for (int t = dom.lo; t <= dom.hi; ++t)
    for (std::uint32_t rep = 0; rep < reps; ++rep) out.push_back(engine.region_ber(region, t, rep));
  return out;
}

std::uint32_t test_rep(const ExperimentConfig& config, std::size_t step) {
  return config.model_reps + static_cast<std::uint32_t>(step % config.test_reps);
}

std::vector<BerSample> collect_test_samples(const ExperimentConfig& config,
                                            const HammerEngine& engine, Region region,
                                            std::span<const int> sequence) {
  std::vector<BerSample> out;
  out.reserve(sequence.size());
  for (std::size_t i = 0; i < sequence.size(); ++i)
    out.push_back(engine.region_ber(region, sequence[i], test_rep(config, i)));
  return out;
}

RegressionModel fit_samples(std::span<const BerSample> samples, const TempDomain& dom,
                            ModelSource source) {
  std::vector<TempBerPoint> points;
  points.reserve(samples.size());
  for (const BerSample& s : samples) points.push_back({double(s.temp_c), s.flips_per_row});
  return fit_cubic(points, dom.lo, dom.hi, source);
}

/// Canary-based temperature guesses, one per step. Steps whose reading saw no
/// canary flip get nullopt.
std::vector<std::optional<double>> canary_priors(const ExperimentConfig& config,
                                                 const HammerEngine& engine, const CanaryMap& map,
                                                 std::span<const int> sequence) {
  std::vector<std::optional<double>> priors(sequence.size());
  std::optional<int> previous;
  const CanaryMonitor monitor(map);
  MonitorOptions opts;
  opts.probe_budget = config.probe_budget;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    opts.rep = test_rep(config, i);
    opts.previous = previous;
    try {
      const CanaryReading r = monitor.read(engine, sequence[i], opts);
      priors[i] = r.estimate.value;
      previous = static_cast<int>(r.estimate.value);
    } catch (const UnknownTemperatureError&) {
    }
  }
  return priors;
}

CanaryMap enroll_victim(const ExperimentConfig& config, const HammerEngine& engine) {
  const TempDomain& dom = engine.module().domain();
  std::vector<int> temps;
  for (int t = dom.lo; t <= dom.hi; ++t) temps.push_back(t);
  return enroll_canaries(engine, temps, config.model_reps, 0, config.threads);
}

void estimate_absolute(AccuracyReport& report, const RegressionModel& model,
                       std::span<const BerSample> samples, std::span<const int> sequence,
                       std::span<const std::optional<double>> priors) {
  double previous = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::optional<double> prior = priors.empty() ? std::nullopt : priors[i];
    const TemperatureEstimate est = invert_model(model, samples[i].flips_per_row, prior);
    StepError s;
    s.step = i;
    s.true_temp_c = sequence[i];
    s.estimate_c = est.value;
    s.true_delta_c = i == 0 ? 0 : sequence[i] - sequence[i - 1];
    s.estimate_delta_c = i == 0 ? 0.0 : est.value - previous;
    s.error_c = est.value - sequence[i];
    s.clamped = est.clamped;
    report.steps.push_back(s);
    previous = est.value;
  }
}

void estimate_relative(AccuracyReport& report, const RegressionModel& model,
                       std::span<const BerSample> samples, std::span<const int> sequence,
                       double gain) {
  // The first reading fixes the reference; every later step is scored on
  // the change it reports.
  TemperatureEstimate previous = invert_model(model, gain * samples[0].flips_per_row);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const TemperatureEstimate now =
        invert_model(model, gain * samples[i].flips_per_row, previous.value);
    StepError s;
    s.step = i;
    s.true_temp_c = sequence[i];
    s.estimate_c = now.value;
    s.true_delta_c = sequence[i] - sequence[i - 1];
    s.estimate_delta_c = now.value - previous.value;
    s.error_c = s.estimate_delta_c - s.true_delta_c;
    s.clamped = now.clamped || previous.clamped;
    report.steps.push_back(s);
    previous = now;
  }
}

double observation_gain(const RegressionModel& model, std::span<const BerSample> samples) {
  std::vector<double> readings;
  readings.reserve(samples.size());
  for (const BerSample& s : samples) readings.push_back(s.flips_per_row);
  return fit_observation_gain(model, readings);
}

std::string ber_csv(std::span<const BerSample> samples) {
  std::ostringstream os;
  write_ber_csv(os, samples);
  return os.str();
}

std::string errors_csv(std::span<const StepError> steps) {
  std::ostringstream os;
  write_errors_csv(os, steps);
  return os.str();
}

}  // namespace

std::string_view to_string(ThreatModel m) noexcept {
  return m == ThreatModel::RelativeDonor ? "relative-donor" : "absolute-self";
}

ThreatModel threat_model_from_string(std::string_view name) {
  if (name == "relative-donor" || name == "relative") return ThreatModel::RelativeDonor;
  if (name == "absolute-self" || name == "absolute") return ThreatModel::AbsoluteSelf;
  throw ConfigError("unknown threat model '" + std::string(name) + "'");
}

std::uint64_t ExperimentConfig::effective_donor_seed() const noexcept {
  return donor_seed.value_or(hash_words({seed, stream::kDonor}));
}

void validate(const ExperimentConfig& config) {
  validate(config.victim);
  if (config.donor) validate(*config.donor);
  if (config.threat_model == ThreatModel::RelativeDonor && !config.donor)
    throw ConfigError("relative-donor needs a donor profile");
  if (config.threat_model == ThreatModel::AbsoluteSelf && config.donor)
    throw ConfigError("absolute-self takes no donor profile");
  if (config.model_reps == 0 || config.test_reps == 0)
    throw ConfigError("model and test repetitions must be positive");
  if (config.model_reps + config.test_reps > kAvailableReps)
    throw ConfigError(fmt::format("model_reps + test_reps exceeds {} repetitions", kAvailableReps));
  if (config.sequence_length < 2) throw ConfigError("sequence length must be at least 2");
  const Region r = config.effective_region();
  if (r.row_count == 0 || std::uint64_t{r.start_row} + r.row_count > config.victim.rows)
    throw ConfigError("region exceeds the victim module");
  if (config.donor && std::uint64_t{r.start_row} + r.row_count > config.donor->rows)
    throw ConfigError("region exceeds the donor module");
  if (config.donor && !(config.donor->temp_domain == config.victim.temp_domain))
    throw ConfigError("donor and victim temperature domains differ");
}

std::vector<int> generate_temperature_sequence(std::uint64_t seed, std::uint32_t length,
                                               const TempDomain& domain) {
  if (length < 2) throw ConfigError("sequence length must be at least 2");
  if (domain.hi - domain.lo < kLargeChange)
    throw ConfigError(fmt::format("domain [{}, {}] cannot hold a {} C change", domain.lo,
                                  domain.hi, kLargeChange));
  SplitMix64 rng(hash_words({seed, stream::kSequence}));
  auto draw = [&](std::uint64_t n) { return to_range(rng(), n); };
  const auto span = static_cast<std::uint64_t>(domain.size());
  std::vector<int> seq(length);
  for (int& t : seq) t = domain.lo + static_cast<int>(draw(span));

  auto has_delta = [&](int d) {
    for (std::size_t i = 1; i < seq.size(); ++i)
      if (std::abs(seq[i] - seq[i - 1]) == d) return true;
    return false;
  };

  std::size_t p = length;  // start of the forced extreme pair, if any
  if (!has_delta(kLargeChange)) {
    p = draw(length - 1);
    const int lo = domain.lo + static_cast<int>(draw(span - kLargeChange));
    const bool rising = (draw(2) == 0);
    seq[p] = rising ? lo : lo + kLargeChange;
    seq[p + 1] = rising ? lo + kLargeChange : lo;
  }
  if (length == 2 || has_delta(1)) return seq;

  auto step_from = [&](int anchor) {
    if (anchor == domain.lo) return anchor + 1;
    if (anchor == domain.hi) return anchor - 1;
    return draw(2) == 0 ? anchor - 1 : anchor + 1;
  };
  // Patch a point outside the extreme pair so both guarantees hold.
  std::vector<std::size_t> free;
  for (std::size_t i = 1; i < length; ++i)
    if (i != p && i != p + 1) free.push_back(i);
  if (!free.empty()) {
    const std::size_t i = free[draw(free.size())];
    seq[i] = step_from(seq[i - 1]);
  } else {
    seq[0] = step_from(seq[1]);  // length 3 with the extreme pair at 1..2
  }
  return seq;
}

ErrorSummary summarize_errors(std::span<const double> errors) {
  if (errors.empty()) throw DomainError("no errors to summarize");
  ErrorSummary s;
  s.count = errors.size();
  s.p50 = error_percentile(errors, 50.0);
  s.p90 = error_percentile(errors, 90.0);
  s.p100 = error_percentile(errors, 100.0);
  double sum = 0.0;
  std::size_t exact = 0;
  for (double e : errors) {
    sum += std::abs(e);
    exact += e == 0.0 ? 1 : 0;
  }
  s.mean_abs = sum / static_cast<double>(errors.size());
  s.exact_fraction = static_cast<double>(exact) / static_cast<double>(errors.size());
  return s;
}

std::vector<double> AccuracyReport::errors() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const StepError& s : steps) out.push_back(s.error_c);
  return out;
}

void finalize(AccuracyReport& report) {
  const std::vector<double> all = report.errors();
  report.all = summarize_errors(all);
  report.large.reset();
  report.small.reset();
  if (report.threat_model != ThreatModel::RelativeDonor) return;
  std::vector<double> large;
  std::vector<double> small;
  for (const StepError& s : report.steps) {
    if (std::abs(s.true_delta_c) <= kLargeChange) large.push_back(s.error_c);
    if (std::abs(s.true_delta_c) <= kSmallChange) small.push_back(s.error_c);
  }
  if (!large.empty()) report.large = summarize_errors(large);
  if (!small.empty()) report.small = summarize_errors(small);
}

PipelineResult run_pipeline(const ExperimentConfig& config) {
  validate(config);
  const bool relative = config.threat_model == ThreatModel::RelativeDonor;
  const Region region = config.effective_region();
  const TempDomain& dom = config.victim.temp_domain;

  PipelineResult result;
  const Bench victim = make_bench(config, config.victim, config.seed);
  std::optional<Bench> donor;
  if (relative) donor = make_bench(config, *config.donor, config.effective_donor_seed());

  // Step 1: fingerprint.
  const int probe_t = config.fingerprint.probe_temp_c;
  result.victim_fingerprint = classify_manufacturer(*victim.engine, probe_t, config.fingerprint);
  if (donor) {
    result.donor_fingerprint = classify_manufacturer(*donor->engine, probe_t, config.fingerprint);
    if (result.donor_fingerprint->manufacturer != result.victim_fingerprint.manufacturer)
      throw FingerprintMismatchError(fmt::format(
          "donor fingerprints as manufacturer {} but the victim as {}",
          to_string(result.donor_fingerprint->manufacturer),
          to_string(result.victim_fingerprint.manufacturer)));
  }

  // Step 2: regression model on the model repetitions.
  const HammerEngine& model_engine = donor ? *donor->engine : *victim.engine;
  result.model_samples = collect_model_samples(model_engine, region, config.model_reps);
  result.model = fit_samples(result.model_samples, dom,
                             relative ? ModelSource::Donor : ModelSource::Victim);

  // Steps 3-4: monitor the victim over the random sequence and estimate.
  result.sequence = generate_temperature_sequence(config.seed, config.sequence_length, dom);
  result.test_samples = collect_test_samples(config, *victim.engine, region, result.sequence);

  AccuracyReport& report = result.report;
  report.module_id = config.victim.module_id;
  report.threat_model = config.threat_model;
  report.sequence_length = config.sequence_length;
  report.region = region;
  if (relative) {
    report.gain = observation_gain(result.model, result.test_samples);
    report.prior = "previous";
    estimate_relative(report, result.model, result.test_samples, result.sequence, report.gain);
  } else {
    std::vector<std::optional<double>> priors;
    if (config.canary_prior && !is_injective(result.model) && !victim.module->canaries().empty()) {
      const CanaryMap map = enroll_victim(config, *victim.engine);
      if (!map.empty()) {
        priors = canary_priors(config, *victim.engine, map, result.sequence);
        report.prior = "canary";
        for (const auto& p : priors) report.unresolved += p ? 0 : 1;
      }
    }
    estimate_absolute(report, result.model, result.test_samples, result.sequence, priors);
  }
  finalize(report);

  if (!config.out_dir.empty()) {
    nlohmann::json fp;
    fp["victim"] = result.victim_fingerprint;
    if (result.donor_fingerprint) fp["donor"] = *result.donor_fingerprint;
    write_json(config.out_dir / "fingerprint.json", fp);
    write_json(config.out_dir / "model.json", result.model);
    write_text(config.out_dir / "model_samples.csv", ber_csv(result.model_samples));
    write_text(config.out_dir / "samples.csv", ber_csv(result.test_samples));
    write_text(config.out_dir / "errors.csv", errors_csv(report.steps));
    write_json(config.out_dir / "report.json", to_report_json(report));
  }
  return result;
}

std::vector<SweepRow> run_region_sweep(const ExperimentConfig& config) {
  ExperimentConfig base = config;
  base.threat_model = ThreatModel::AbsoluteSelf;
  base.donor.reset();
  base.region.reset();
  validate(base);
  if (config.donor) {
    ExperimentConfig rel = config;
    rel.threat_model = ThreatModel::RelativeDonor;
    rel.region.reset();
    validate(rel);
  }
  if (config.sweep_sizes.empty()) throw ConfigError("no region sizes to sweep");
  if (!std::is_sorted(config.sweep_sizes.begin(), config.sweep_sizes.end()))
    throw ConfigError("region sizes must be ascending");
  for (std::uint32_t size : config.sweep_sizes)
    if (size == 0 || size > config.victim.rows)
      throw ConfigError(fmt::format("region size {} exceeds the {} module rows", size,
                                    config.victim.rows));
  if (config.sweep_regions == 0) throw ConfigError("sweep needs at least one region per size");

  const TempDomain& dom = config.victim.temp_domain;
  const Bench victim = make_bench(config, config.victim, config.seed);
  std::optional<Bench> donor;
  if (config.donor) donor = make_bench(config, *config.donor, config.effective_donor_seed());
  const std::vector<int> sequence =
      generate_temperature_sequence(config.seed, config.sequence_length, dom);

  // Canary readings do not depend on the region, so one enrollment serves
  // every size.
  std::optional<std::vector<std::optional<double>>> priors;
  auto canary_prior_list = [&]() -> const std::vector<std::optional<double>>& {
    if (!priors) {
      priors.emplace();
      if (!victim.module->canaries().empty()) {
        const CanaryMap map = enroll_victim(config, *victim.engine);
        if (!map.empty()) *priors = canary_priors(config, *victim.engine, map, sequence);
      }
    }
    return *priors;
  };

  std::vector<SweepRow> rows;
  std::vector<ThreatModel> models{ThreatModel::AbsoluteSelf};
  if (donor) models.push_back(ThreatModel::RelativeDonor);
  for (ThreatModel tm : models) {
    const HammerEngine& model_engine =
        tm == ThreatModel::RelativeDonor ? *donor->engine : *victim.engine;
    for (std::uint32_t size : config.sweep_sizes) {
      const std::uint32_t count = std::min(config.sweep_regions, config.victim.rows / size);
      double sum = 0.0;
      std::size_t n = 0;
      for (std::uint32_t k = 0; k < count; ++k) {
        const Region region{k * size, size};
        const auto model_samples = collect_model_samples(model_engine, region, config.model_reps);
        const RegressionModel model =
            fit_samples(model_samples, dom,
                        tm == ThreatModel::RelativeDonor ? ModelSource::Donor : ModelSource::Victim);
        const auto test_samples = collect_test_samples(config, *victim.engine, region, sequence);
        AccuracyReport report;
        report.threat_model = tm;
        if (tm == ThreatModel::RelativeDonor) {
          estimate_relative(report, model, test_samples, sequence,
                            observation_gain(model, test_samples));
        } else {
          const bool use_canaries = config.canary_prior && !is_injective(model);
          estimate_absolute(report, model, test_samples, sequence,
                            use_canaries ? std::span<const std::optional<double>>(canary_prior_list())
                                         : std::span<const std::optional<double>>());
        }
        for (const StepError& s : report.steps) sum += std::abs(s.error_c);
        n += report.steps.size();
      }
      rows.push_back({tm, size, count, sum / static_cast<double>(n)});
    }
  }

  if (!config.out_dir.empty()) {
    std::ostringstream os;
    write_sweep_csv(os, rows);
    write_text(config.out_dir / "region_sweep.csv", os.str());
  }
  return rows;
}

CanaryExperimentResult run_canary_experiment(const ExperimentConfig& config) {
  ExperimentConfig base = config;
  base.threat_model = ThreatModel::AbsoluteSelf;
  base.donor.reset();
  validate(base);
  if (!(config.victim.canary_density > 0.0))
    throw ConfigError("victim profile plants no canary cells");

  const TempDomain& dom = config.victim.temp_domain;
  const Bench victim = make_bench(config, config.victim, config.seed);
  CanaryExperimentResult result;
  result.map = enroll_victim(config, *victim.engine);
  if (result.map.empty()) throw ConfigError("enrollment found no canary cells");
  result.sequence = generate_temperature_sequence(config.seed, config.sequence_length, dom);

  AccuracyReport& report = result.report;
  report.module_id = config.victim.module_id;
  report.threat_model = ThreatModel::AbsoluteSelf;
  report.sequence_length = config.sequence_length;
  report.region = Region{0, config.victim.rows};
  report.prior = "canary";

  const CanaryMonitor monitor(result.map);
  MonitorOptions opts;
  opts.probe_budget = config.probe_budget;
  std::optional<int> previous;
  for (std::size_t i = 0; i < result.sequence.size(); ++i) {
    opts.rep = test_rep(config, i);
    opts.previous = previous;
    StepError s;
    s.step = i;
    s.true_temp_c = result.sequence[i];
    try {
      s.estimate_c = monitor.read(*victim.engine, s.true_temp_c, opts).estimate.value;
    } catch (const UnknownTemperatureError&) {
      // Keep the last reading; with none yet, guess the middle of the domain.
      s.estimate_c = previous ? *previous : std::round(0.5 * (dom.lo + dom.hi));
      s.clamped = true;
      ++report.unresolved;
    }
    s.true_delta_c = i == 0 ? 0 : s.true_temp_c - result.sequence[i - 1];
    s.estimate_delta_c = i == 0 ? 0.0 : s.estimate_c - report.steps.back().estimate_c;
    s.error_c = s.estimate_c - s.true_temp_c;
    report.steps.push_back(s);
    previous = static_cast<int>(s.estimate_c);
  }
  finalize(report);

  if (!config.out_dir.empty()) {
    write_json(config.out_dir / "canary_map.json", result.map);
    write_text(config.out_dir / "errors.csv", errors_csv(report.steps));
    write_json(config.out_dir / "report.json", to_report_json(report));
  }
  return result;
}

void write_ber_csv(std::ostream& os, std::span<const BerSample> samples) {
  os << "module_id,start_row,row_count,temp_c,rep,flips_per_row\n";
  for (const BerSample& s : samples)
    os << fmt::format("{},{},{},{},{},{}\n", s.module_id, s.region.start_row,
                      s.region.row_count, s.temp_c, s.rep, s.flips_per_row);
}

std::vector<BerSample> read_ber_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) ||
      line.rfind("module_id,start_row,row_count,temp_c,rep,flips_per_row", 0) != 0)
    throw ConfigError("BER CSV is missing its header");
  std::vector<BerSample> out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::istringstream fields(line);
    BerSample s;
    char c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0;
    fields >> s.module_id >> c1 >> s.region.start_row >> c2 >> s.region.row_count >> c3 >>
        s.temp_c >> c4 >> s.rep >> c5 >> s.flips_per_row;
    if (!fields || c1 != ',' || c2 != ',' || c3 != ',' || c4 != ',' || c5 != ',')
      throw ConfigError(fmt::format("malformed BER CSV line {}", line_no));
    s.total_flips = s.flips_per_row * s.region.row_count;
    out.push_back(s);
  }
  return out;
}

void write_flip_csv(std::ostream& os, int module_id, std::span<const FlipRecord> records) {
  os << "module_id,row,bit,temp_c,rep\n";
  for (const FlipRecord& r : records)
    os << fmt::format("{},{},{},{},{}\n", module_id, r.coord.row, r.coord.bit, r.temp_c, r.rep);
}

void write_errors_csv(std::ostream& os, std::span<const StepError> steps) {
  os << "step,true_temp_c,estimate_c,true_delta_c,estimate_delta_c,error_c,clamped\n";
  for (const StepError& s : steps)
    os << fmt::format("{},{},{},{},{},{},{}\n", s.step, s.true_temp_c, s.estimate_c,
                      s.true_delta_c, s.estimate_delta_c, s.error_c, s.clamped ? 1 : 0);
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  os << "threat_model,region_rows,regions,mean_abs_error_c\n";
  for (const SweepRow& r : rows)
    os << fmt::format("{},{},{},{}\n", to_string(r.threat_model), r.region_rows, r.regions,
                      r.mean_abs_error_c);
}

namespace {

nlohmann::json summary_json(const ErrorSummary& s) {
  return {{"count", s.count}, {"p50", s.p50},           {"p90", s.p90},
          {"p100", s.p100},   {"mean_abs", s.mean_abs}, {"exact_fraction", s.exact_fraction}};
}

}  // namespace

nlohmann::json to_report_json(const AccuracyReport& report) {
  nlohmann::json j{
      {"module_id", report.module_id},
      {"threat_model", std::string(to_string(report.threat_model))},
      {"sequence_length", report.sequence_length},
      {"region", {{"start_row", report.region.start_row}, {"row_count", report.region.row_count}}},
      {"gain", report.gain},
      {"prior", report.prior},
      {"unresolved", report.unresolved},
      {"all", summary_json(report.all)},
  };
  if (report.large) j["large"] = summary_json(*report.large);
  if (report.small) j["small"] = summary_json(*report.small);
  return j;
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace spyhammer
