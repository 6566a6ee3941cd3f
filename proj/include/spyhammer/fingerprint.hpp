#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spyhammer/hammer.hpp"
#include "spyhammer/profile.hpp"
#include "spyhammer/row_mapping.hpp"

namespace spyhammer {

/// Black-box identification of the victim module from hammer results only.
struct FingerprintOptions {
  std::uint32_t probe_rows = 64;
  std::uint32_t probe_base = 64;   ///< first logical row probed
  std::uint32_t probe_reps = 20;   ///< single-sided runs per probe row
  int probe_temp_c = 50;
  double asymmetry_threshold = 0.95;
  double mapping_match_threshold = 0.9;
  double theta_ad = 1.0;           ///< flips/row splitting Mfr. A (above) from D
  double logistic_scale = 0.1;     ///< flips/row
  std::uint32_t ber_region_start = 0;
  std::uint32_t ber_region_rows = 2048;
  std::uint32_t ber_reps = 3;
};

/// Flips seen in each logical row while one probe row was hammered alone,
/// summed over repetitions.
struct ProbeObservation {
  std::uint32_t aggressor = 0;
  std::vector<RowFlips> flips;
};

struct AdjacencyEvidence {
  std::uint32_t rows = 0;
  std::vector<ProbeObservation> probes;
  double total_flips = 0.0;
};

/// Single-sided hammering of probe rows probe_base .. probe_base+probe_rows-1.
/// Throws DomainError unless probe_rows is a power of two >= 16 that fits.
AdjacencyEvidence collect_adjacency(const HammerTarget& target, const FingerprintOptions& opts);

struct MappingRecovery {
  RowMapping mapping;
  double match_fraction = 0.0;  ///< informative probes the mapping explains
  std::size_t informative_probes = 0;
};

/// Tests the observed adjacency against the Sequential and XorMfrB
/// hypotheses. Ties go to Sequential. Throws InsufficientSignalError when no
/// probe saw a flip, UnknownMappingError when neither hypothesis explains at
/// least `opts.mapping_match_threshold` of the informative probes.
MappingRecovery recover_mapping(const AdjacencyEvidence& evidence, const FingerprintOptions& opts);

RowMapping reverse_engineer_mapping(const HammerTarget& target, std::uint32_t probe_rows,
                                    FingerprintOptions opts = {});

struct AsymmetryResult {
  bool asymmetric = false;
  double dominant_fraction = 0.0;  ///< share of flips on the busier side
};

AsymmetryResult measure_asymmetry(const AdjacencyEvidence& evidence, const RowMapping& mapping,
                                  double threshold);

bool detect_single_sided_asymmetry(const HammerTarget& target, std::uint32_t probe_rows,
                                   FingerprintOptions opts = {});

struct FingerprintReport {
  RowMapping recovered_mapping;
  bool single_sided_asymmetric = false;
  double ber_magnitude = 0.0;  ///< flips per row at probe_temp_c
  int probe_temp_c = 50;
  Manufacturer manufacturer = Manufacturer::C;
  double confidence = 0.0;
  double dominant_fraction = 0.0;
  double mapping_match_fraction = 0.0;
  std::optional<std::string> trr_hint;  ///< reserved, never populated
};

/// Decision tree: XorMfrB mapping -> B; otherwise asymmetric -> A when the
/// BER magnitude exceeds theta_ad, D below; otherwise C.
///
/// Confidence is the product of the symmetry evidence (dominant fraction
/// when asymmetric, 2 * (1 - dominant fraction) capped at 1 otherwise), the
/// mapping match fraction, and, for the A/D split only, a logistic of the
/// BER margin from theta_ad.
FingerprintReport classify_manufacturer(const HammerTarget& target, int probe_temp_c,
                                        FingerprintOptions opts = {});

void to_json(nlohmann::json& j, const FingerprintReport& r);
void from_json(const nlohmann::json& j, FingerprintReport& r);

}  // namespace spyhammer
