// spyhammer: simulate RowHammer temperature sensing against calibrated DRAM
// module profiles and run the attack pipeline end to end.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "spyhammer/canary.hpp"
#include "spyhammer/errors.hpp"
#include "spyhammer/experiment.hpp"
#include "spyhammer/fingerprint.hpp"
#include "spyhammer/hammer.hpp"
#include "spyhammer/module.hpp"
#include "spyhammer/profile.hpp"
#include "spyhammer/regression.hpp"

namespace fs = std::filesystem;
using namespace spyhammer;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSignal = 3;

struct Common {
  std::string profile;
  std::string donor;
  std::uint64_t seed = 1;
  std::string out;
  std::string noise = "on";
  std::string fidelity = "aggregate";
  unsigned threads = 1;
};

void add_common(CLI::App* cmd, Common& c, bool with_donor = false) {
  cmd->add_option("--profile", c.profile, "victim module profile (JSON)")->required();
  if (with_donor) cmd->add_option("--donor", c.donor, "donor module profile (JSON)");
  cmd->add_option("--seed", c.seed, "simulation seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--noise", c.noise, "on|off")->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--fidelity", c.fidelity, "aggregate|cell")
      ->check(CLI::IsMember({"aggregate", "cell"}));
  cmd->add_option("--threads", c.threads, "worker threads");
}

EngineConfig engine_config(const Common& c) {
  EngineConfig ec;
  ec.noise = noise_from_string(c.noise);
  ec.fidelity = fidelity_from_string(c.fidelity);
  ec.threads = c.threads;
  return ec;
}

std::vector<int> temps_or_domain(const std::vector<int>& temps, const TempDomain& dom) {
  if (!temps.empty()) return temps;
  std::vector<int> all(static_cast<std::size_t>(dom.size()));
  std::iota(all.begin(), all.end(), dom.lo);
  return all;
}

/// Writes to out_dir/name, or stdout without an output directory.
void emit(const std::string& out_dir, const std::string& name, const std::string& text) {
  if (out_dir.empty()) {
    std::cout << text;
  } else {
    write_text(fs::path(out_dir) / name, text);
    std::cerr << "wrote " << (fs::path(out_dir) / name).string() << "\n";
  }
}

void print_report(const AccuracyReport& r) {
  std::cout << fmt::format("module {} {}: n={} p50={:.3f} p90={:.3f} p100={:.3f} mean={:.3f} C\n",
                           r.module_id, to_string(r.threat_model), r.all.count, r.all.p50,
                           r.all.p90, r.all.p100, r.all.mean_abs);
  if (r.small)
    std::cout << fmt::format("  small changes: n={} p90={:.3f} C\n", r.small->count, r.small->p90);
  if (r.large)
    std::cout << fmt::format("  large changes: n={} p90={:.3f} C\n", r.large->count, r.large->p90);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RowHammer-based DRAM temperature side channel simulator"};
  app.require_subcommand(1);

  Common c;

  // simulate
  auto* simulate = app.add_subcommand("simulate", "emit region BER samples as CSV");
  add_common(simulate, c);
  std::vector<int> sim_temps;
  std::uint32_t sim_reps = kAvailableReps;
  std::uint32_t region_start = 0;
  std::uint32_t region_rows = 0;
  std::string flips_csv;
  simulate->add_option("--temps", sim_temps, "temperatures (default: whole domain)");
  simulate->add_option("--reps", sim_reps, "repetitions per temperature");
  simulate->add_option("--region-start", region_start, "first logical row");
  simulate->add_option("--region-rows", region_rows, "rows (default: whole module)");
  simulate->add_option("--flips", flips_csv, "also write per-cell flips of one victim row here");

  // fingerprint
  auto* fingerprint = app.add_subcommand("fingerprint", "classify the module manufacturer");
  add_common(fingerprint, c);
  int probe_temp = 50;
  fingerprint->add_option("--probe-temp", probe_temp, "temperature during probing (C)");

  // fit
  auto* fit = app.add_subcommand("fit", "fit a cubic BER model to samples CSV");
  std::string samples_path;
  std::string source = "victim";
  std::string fit_out;
  fit->add_option("--samples", samples_path, "BER samples CSV")->required();
  fit->add_option("--source", source, "donor|victim")->check(CLI::IsMember({"donor", "victim"}));
  fit->add_option("--out", fit_out, "output directory");

  // estimate
  auto* estimate = app.add_subcommand("estimate", "invert a model for a BER reading");
  std::string est_mode;
  std::string model_path;
  double ber = 0.0;
  double ber_ref = 0.0;
  std::optional<double> prior;
  estimate->add_option("mode", est_mode, "absolute|relative")
      ->required()
      ->check(CLI::IsMember({"absolute", "relative"}));
  estimate->add_option("--model", model_path, "model JSON")->required();
  estimate->add_option("--ber", ber, "current flips per row")->required();
  estimate->add_option("--ref", ber_ref, "reference flips per row (relative)");
  estimate->add_option("--prior", prior, "prior temperature for root selection");

  // enroll
  auto* enroll = app.add_subcommand("enroll", "enroll canary cells");
  add_common(enroll, c);
  std::vector<int> enroll_temps;
  std::uint32_t enroll_reps = 10;
  enroll->add_option("--temps", enroll_temps, "temperatures (default: whole domain)");
  enroll->add_option("--reps", enroll_reps, "repetitions per temperature");

  // monitor
  auto* monitor = app.add_subcommand("monitor", "estimate temperature from enrolled canaries");
  add_common(monitor, c);
  std::string map_path;
  int monitor_temp = 0;
  std::uint32_t monitor_rep = 10;
  std::uint32_t budget = 0;
  monitor->add_option("--map", map_path, "canary map JSON")->required();
  monitor->add_option("--temp", monitor_temp, "actual module temperature (C)")->required();
  monitor->add_option("--rep", monitor_rep, "measurement repetition index");
  monitor->add_option("--budget", budget, "rows to hammer (0: all canary rows)");

  // experiment
  auto* experiment = app.add_subcommand("experiment", "run an evaluation experiment");
  add_common(experiment, c, true);
  std::string exp_kind;
  std::string threat = "absolute-self";
  std::optional<double> sibling_scale;
  ExperimentConfig defaults;
  std::uint32_t length = defaults.sequence_length;
  std::uint32_t model_reps = defaults.model_reps;
  std::uint32_t test_reps = defaults.test_reps;
  std::vector<std::uint32_t> sizes = defaults.sweep_sizes;
  std::uint32_t exp_budget = 0;
  experiment->add_option("kind", exp_kind, "accuracy|region-sweep|canary")
      ->required()
      ->check(CLI::IsMember({"accuracy", "region-sweep", "canary"}));
  experiment->add_option("--threat-model", threat, "absolute-self|relative-donor");
  experiment->add_option("--sibling-scale", sibling_scale,
                         "use a same-part donor with this ber_scale instead of --donor");
  experiment->add_option("--length", length, "temperature sequence length");
  experiment->add_option("--model-reps", model_reps, "repetitions used for modeling");
  experiment->add_option("--test-reps", test_reps, "repetitions used for testing");
  experiment->add_option("--region-start", region_start, "first logical row");
  experiment->add_option("--region-rows", region_rows, "rows (default: whole module)");
  experiment->add_option("--sizes", sizes, "region sizes for the sweep");
  experiment->add_option("--budget", exp_budget, "canary rows per reading (0: all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*simulate) {
      const ModuleProfile profile = load_profile(c.profile);
      const SimulatedModule module = build_module(profile, c.seed);
      const HammerEngine engine(module, engine_config(c));
      const Region region{region_start, region_rows == 0 ? profile.rows - region_start : region_rows};
      std::vector<BerSample> samples;
      for (int t : temps_or_domain(sim_temps, profile.temp_domain)) {
        const auto s = engine.measure_region_ber(region, t, sim_reps, engine.config().pattern);
        samples.insert(samples.end(), s.begin(), s.end());
      }
      std::ostringstream os;
      write_ber_csv(os, samples);
      emit(c.out, "samples.csv", os.str());
      if (!flips_csv.empty()) {
        std::vector<std::uint32_t> reps(sim_reps);
        std::iota(reps.begin(), reps.end(), 0u);
        const std::uint32_t victim = map_logical_to_physical(profile.mapping, std::max(region.start_row, 1u));
        std::vector<FlipRecord> records;
        for (int t : temps_or_domain(sim_temps, profile.temp_domain)) {
          const auto r = engine.double_sided_cells(victim, t, reps);
          records.insert(records.end(), r.begin(), r.end());
        }
        std::ostringstream fos;
        write_flip_csv(fos, profile.module_id, records);
        write_text(flips_csv, fos.str());
      }
    } else if (*fingerprint) {
      const ModuleProfile profile = load_profile(c.profile);
      const SimulatedModule module = build_module(profile, c.seed);
      const HammerEngine engine(module, engine_config(c));
      const FingerprintReport report = classify_manufacturer(engine, probe_temp);
      emit(c.out, "fingerprint.json", nlohmann::json(report).dump(2) + "\n");
    } else if (*fit) {
      std::ifstream in(samples_path);
      if (!in) throw ConfigError("cannot read " + samples_path);
      const std::vector<BerSample> samples = read_ber_csv(in);
      std::vector<TempBerPoint> points;
      for (const BerSample& s : samples) points.push_back({double(s.temp_c), s.flips_per_row});
      if (points.empty()) throw ConfigError("samples file has no rows");
      double lo = points.front().temp_c;
      double hi = lo;
      for (const auto& p : points) {
        lo = std::min(lo, p.temp_c);
        hi = std::max(hi, p.temp_c);
      }
      const RegressionModel model = fit_cubic(points, lo, hi, model_source_from_string(source));
      emit(fit_out, "model.json", nlohmann::json(model).dump(2) + "\n");
    } else if (*estimate) {
      const RegressionModel model = read_json(model_path).get<RegressionModel>();
      nlohmann::json out;
      if (est_mode == "absolute") {
        const TemperatureEstimate e = invert_model(model, ber, prior);
        out = {{"kind", "absolute"}, {"temp_c", e.value}, {"residual", e.residual},
               {"clamped", e.clamped}};
      } else {
        const RelativeEstimate r = resolve_relative_change(model, ber_ref, ber, prior);
        out = {{"kind", "relative"},       {"delta_c", r.delta.value}, {"ref_c", r.ref.value},
               {"now_c", r.now.value},     {"clamped", r.delta.clamped}};
      }
      std::cout << out.dump(2) << "\n";
    } else if (*enroll) {
      const ModuleProfile profile = load_profile(c.profile);
      const SimulatedModule module = build_module(profile, c.seed);
      const HammerEngine engine(module, engine_config(c));
      const std::vector<int> temps = temps_or_domain(enroll_temps, profile.temp_domain);
      const CanaryMap map = enroll_canaries(engine, temps, enroll_reps, 0, c.threads);
      emit(c.out, "canary_map.json", nlohmann::json(map).dump() + "\n");
    } else if (*monitor) {
      const ModuleProfile profile = load_profile(c.profile);
      const SimulatedModule module = build_module(profile, c.seed);
      const HammerEngine engine(module, engine_config(c));
      const CanaryMap map = read_json(map_path).get<CanaryMap>();
      MonitorOptions opts;
      opts.probe_budget = budget;
      opts.rep = monitor_rep;
      const CanaryReading r = monitor_canaries(engine, map, monitor_temp, opts);
      nlohmann::json fractions = nlohmann::json::object();
      for (const auto& [t, f] : r.hit_fraction) fractions[std::to_string(t)] = f;
      std::cout << nlohmann::json{{"temp_c", r.estimate.value},
                                  {"flipped", r.flipped},
                                  {"hit_fraction", fractions}}
                       .dump(2)
                << "\n";
    } else if (*experiment) {
      ExperimentConfig config;
      config.victim = load_profile(c.profile);
      config.seed = c.seed;
      config.threat_model = threat_model_from_string(threat);
      if (!c.donor.empty() && sibling_scale)
        throw ConfigError("give either --donor or --sibling-scale, not both");
      if (!c.donor.empty()) config.donor = load_profile(c.donor);
      if (sibling_scale) config.donor = make_sibling(config.victim, *sibling_scale);
      config.sequence_length = length;
      config.model_reps = model_reps;
      config.test_reps = test_reps;
      if (region_rows != 0) config.region = Region{region_start, region_rows};
      config.sweep_sizes = sizes;
      config.noise = noise_from_string(c.noise);
      config.fidelity = fidelity_from_string(c.fidelity);
      config.threads = c.threads;
      config.probe_budget = exp_budget;
      config.out_dir = c.out;

      if (exp_kind == "accuracy") {
        print_report(run_pipeline(config).report);
      } else if (exp_kind == "region-sweep") {
        for (const SweepRow& r : run_region_sweep(config))
          std::cout << fmt::format("{} {:>6} rows x{}: mean |error| {:.3f} C\n",
                                   to_string(r.threat_model), r.region_rows, r.regions,
                                   r.mean_abs_error_c);
      } else {
        config.donor.reset();
        const CanaryExperimentResult r = run_canary_experiment(config);
        std::cout << fmt::format("module {} canary: {} enrolled, exact {:.1f}%, p90 {:.2f} C\n",
                                 r.report.module_id, r.map.size(),
                                 100.0 * r.report.all.exact_fraction, r.report.all.p90);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DomainError& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kExitConfig;
  } catch (const InsufficientSignalError& e) {
    std::cerr << "insufficient signal: " << e.what() << "\n";
    return kExitSignal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOk;
}
