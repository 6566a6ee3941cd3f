#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spyhammer/canary.hpp"
#include "spyhammer/fingerprint.hpp"
#include "spyhammer/hammer.hpp"
#include "spyhammer/profile.hpp"
#include "spyhammer/regression.hpp"

namespace spyhammer {

enum class ThreatModel { RelativeDonor, AbsoluteSelf };

std::string_view to_string(ThreatModel m) noexcept;
ThreatModel threat_model_from_string(std::string_view name);

/// Repetitions available per (temperature, region) measurement.
inline constexpr std::uint32_t kAvailableReps = 20;

struct ExperimentConfig {
  ModuleProfile victim;
  std::optional<ModuleProfile> donor;
  std::uint64_t seed = 1;
  std::optional<std::uint64_t> donor_seed;  ///< derived from seed when unset
  ThreatModel threat_model = ThreatModel::AbsoluteSelf;
  std::uint32_t sequence_length = 720;
  std::optional<Region> region;             ///< whole module when unset
  std::uint32_t model_reps = 10;            ///< repetitions 0 .. model_reps-1
  std::uint32_t test_reps = 10;             ///< the following test_reps
  std::vector<std::uint32_t> sweep_sizes{512, 1024, 2048, 4096, 8192, 24576};
  std::uint32_t sweep_regions = 4;          ///< disjoint regions per size, at most
  NoiseMode noise = NoiseMode::On;
  Fidelity fidelity = Fidelity::Aggregate;
  unsigned threads = 1;
  /// AbsoluteSelf only: when the model is not monotone, canary monitoring
  /// picks which root of the inversion to report.
  bool canary_prior = true;
  std::uint32_t probe_budget = 0;           ///< canary rows per reading, 0 = all
  FingerprintOptions fingerprint{};
  std::filesystem::path out_dir;            ///< no artifacts when empty

  Region effective_region() const noexcept {
    return region.value_or(Region{0, victim.rows});
  }
  std::uint64_t effective_donor_seed() const noexcept;
};

/// Throws ConfigError naming the first problem.
void validate(const ExperimentConfig& config);

/// Uniform integer temperatures, then patched so that some adjacent pair
/// differs by exactly 45 C and some by exactly 1 C. With two points only
/// the 45 C pair is forced.
/// Throws ConfigError if length < 2 or the domain is narrower than 45 C.
std::vector<int> generate_temperature_sequence(std::uint64_t seed, std::uint32_t length,
                                               const TempDomain& domain);

struct StepError {
  std::size_t step = 0;
  int true_temp_c = 0;
  double estimate_c = 0.0;
  int true_delta_c = 0;           ///< change from the previous step
  double estimate_delta_c = 0.0;
  double error_c = 0.0;           ///< signed, what the percentiles summarize
  bool clamped = false;
};

struct ErrorSummary {
  std::size_t count = 0;
  double p50 = 0.0;
  double p90 = 0.0;
  double p100 = 0.0;
  double mean_abs = 0.0;
  double exact_fraction = 0.0;  ///< errors equal to zero
};

/// Throws DomainError on an empty list.
ErrorSummary summarize_errors(std::span<const double> errors);

/// Changes up to this size count as Large, up to kSmallChange as Small.
inline constexpr int kLargeChange = 45;
inline constexpr int kSmallChange = 5;

struct AccuracyReport {
  int module_id = 0;
  ThreatModel threat_model = ThreatModel::AbsoluteSelf;
  std::uint32_t sequence_length = 0;
  Region region;
  std::vector<StepError> steps;
  ErrorSummary all;
  std::optional<ErrorSummary> large;  ///< relative mode only
  std::optional<ErrorSummary> small;
  double gain = 1.0;                  ///< reading multiplier applied before inversion
  std::string prior = "none";         ///< "none", "previous" or "canary"
  std::uint32_t unresolved = 0;       ///< canary readings without any flip

  std::vector<double> errors() const;
};

/// Recomputes the summaries from the steps.
void finalize(AccuracyReport& report);

struct PipelineResult {
  FingerprintReport victim_fingerprint;
  std::optional<FingerprintReport> donor_fingerprint;
  RegressionModel model;
  std::vector<BerSample> model_samples;
  std::vector<BerSample> test_samples;
  std::vector<int> sequence;
  AccuracyReport report;
};

/// Fingerprint, fit (donor or victim), BER monitoring over the random
/// sequence on test repetitions, estimation. Writes fingerprint.json,
/// model.json, model_samples.csv, samples.csv, errors.csv and report.json
/// into out_dir when set.
/// Throws FingerprintMismatchError when donor and victim disagree on the
/// manufacturer.
PipelineResult run_pipeline(const ExperimentConfig& config);

struct SweepRow {
  ThreatModel threat_model = ThreatModel::AbsoluteSelf;
  std::uint32_t region_rows = 0;
  std::uint32_t regions = 0;
  double mean_abs_error_c = 0.0;
};

/// Fit and estimation per region size, averaged over up to sweep_regions
/// disjoint regions. AbsoluteSelf always; RelativeDonor too when a donor is
/// configured. Writes region_sweep.csv into out_dir when set.
std::vector<SweepRow> run_region_sweep(const ExperimentConfig& config);

struct CanaryExperimentResult {
  CanaryMap map;
  std::vector<int> sequence;
  AccuracyReport report;
};

/// Enrollment on the model repetitions, monitoring over the sequence on the
/// test repetitions. Writes canary_map.json, errors.csv and report.json into
/// out_dir when set. Throws ConfigError if the victim has no canaries.
CanaryExperimentResult run_canary_experiment(const ExperimentConfig& config);

// --- persistence -----------------------------------------------------------

void write_ber_csv(std::ostream& os, std::span<const BerSample> samples);
std::vector<BerSample> read_ber_csv(std::istream& is);
void write_flip_csv(std::ostream& os, int module_id, std::span<const FlipRecord> records);
void write_errors_csv(std::ostream& os, std::span<const StepError> steps);
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

nlohmann::json to_report_json(const AccuracyReport& report);

/// Writes text to path, creating parent directories.
void write_text(const std::filesystem::path& path, std::string_view text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace spyhammer
