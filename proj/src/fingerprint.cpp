#include "spyhammer/fingerprint.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

#include "spyhammer/errors.hpp"

namespace spyhammer {
namespace {

bool is_power_of_two(std::uint32_t v) { return v != 0 && (v & (v - 1)) == 0; }

/// Logical rows physically adjacent to `row` under a mapping hypothesis.
std::array<std::int64_t, 2> predicted_neighbors(const RowMapping& mapping, std::uint32_t rows,
                                                std::uint32_t row) {
  const std::int64_t phys = map_logical_to_physical(mapping, row);
  std::array<std::int64_t, 2> out{-1, -1};
  if (phys > 0) out[0] = map_physical_to_logical(mapping, static_cast<std::uint32_t>(phys - 1));
  if (phys + 1 < static_cast<std::int64_t>(rows))
    out[1] = map_physical_to_logical(mapping, static_cast<std::uint32_t>(phys + 1));
  return out;
}

bool explains(const RowMapping& mapping, std::uint32_t rows, const ProbeObservation& probe) {
  const auto nb = predicted_neighbors(mapping, rows, probe.aggressor);
  return std::all_of(probe.flips.begin(), probe.flips.end(), [&](const RowFlips& f) {
    return f.flips <= 0.0 || f.logical_row == nb[0] || f.logical_row == nb[1];
  });
}

bool informative(const ProbeObservation& probe) {
  return std::any_of(probe.flips.begin(), probe.flips.end(),
                     [](const RowFlips& f) { return f.flips > 0.0; });
}

}  // namespace

AdjacencyEvidence collect_adjacency(const HammerTarget& target, const FingerprintOptions& opts) {
  if (opts.probe_rows < 16 || !is_power_of_two(opts.probe_rows))
    throw DomainError("probe_rows must be a power of two >= 16");
  const std::uint32_t rows = target.row_count();
  if (std::uint64_t{opts.probe_base} + opts.probe_rows > rows)
    throw DomainError("probe rows exceed the module");

  AdjacencyEvidence evidence;
  evidence.rows = rows;
  for (std::uint32_t i = 0; i < opts.probe_rows; ++i) {
    ProbeObservation probe;
    probe.aggressor = opts.probe_base + i;
    std::map<std::uint32_t, double> per_row;
    for (std::uint32_t rep = 0; rep < opts.probe_reps; ++rep)
      for (const RowFlips& f : target.single_sided_probe(probe.aggressor, opts.probe_temp_c, rep))
        per_row[f.logical_row] += f.flips;
    for (const auto& [row, flips] : per_row) {
      probe.flips.push_back({row, flips});
      evidence.total_flips += flips;
    }
    evidence.probes.push_back(std::move(probe));
  }
  return evidence;
}

MappingRecovery recover_mapping(const AdjacencyEvidence& evidence, const FingerprintOptions& opts) {
  std::size_t n_informative = 0;
  for (const ProbeObservation& p : evidence.probes) n_informative += informative(p) ? 1 : 0;
  if (n_informative == 0)
    throw InsufficientSignalError("no flips observed while probing the row mapping");

  const unsigned width = address_width_for(evidence.rows);
  MappingRecovery best;
  best.informative_probes = n_informative;
  best.match_fraction = -1.0;
  for (MappingKind kind : {MappingKind::Sequential, MappingKind::XorMfrB}) {
    const RowMapping candidate{kind, width};
    std::size_t matched = 0;
    for (const ProbeObservation& p : evidence.probes)
      if (informative(p) && explains(candidate, evidence.rows, p)) ++matched;
    const double fraction = static_cast<double>(matched) / static_cast<double>(n_informative);
    if (fraction > best.match_fraction) {
      best.mapping = candidate;
      best.match_fraction = fraction;
    }
  }
  if (best.match_fraction < opts.mapping_match_threshold)
    throw UnknownMappingError("observed row adjacency matches neither Sequential nor XorMfrB");
  return best;
}

RowMapping reverse_engineer_mapping(const HammerTarget& target, std::uint32_t probe_rows,
                                    FingerprintOptions opts) {
  opts.probe_rows = probe_rows;
  return recover_mapping(collect_adjacency(target, opts), opts).mapping;
}

AsymmetryResult measure_asymmetry(const AdjacencyEvidence& evidence, const RowMapping& mapping,
                                  double threshold) {
  double below = 0.0;
  double above = 0.0;
  for (const ProbeObservation& p : evidence.probes) {
    const std::int64_t phys = map_logical_to_physical(mapping, p.aggressor);
    for (const RowFlips& f : p.flips) {
      const std::int64_t offset = std::int64_t{map_logical_to_physical(mapping, f.logical_row)} - phys;
      if (offset == -1) below += f.flips;
      if (offset == 1) above += f.flips;
    }
  }
  const double total = below + above;
  if (!(total > 0.0))
    throw InsufficientSignalError("no flips observed on either neighbour side");
  AsymmetryResult r;
  r.dominant_fraction = std::max(below, above) / total;
  r.asymmetric = r.dominant_fraction > threshold;
  return r;
}

bool detect_single_sided_asymmetry(const HammerTarget& target, std::uint32_t probe_rows,
                                   FingerprintOptions opts) {
  opts.probe_rows = probe_rows;
  const AdjacencyEvidence evidence = collect_adjacency(target, opts);
  const MappingRecovery mapping = recover_mapping(evidence, opts);
  return measure_asymmetry(evidence, mapping.mapping, opts.asymmetry_threshold).asymmetric;
}

FingerprintReport classify_manufacturer(const HammerTarget& target, int probe_temp_c,
                                        FingerprintOptions opts) {
  opts.probe_temp_c = probe_temp_c;
  const AdjacencyEvidence evidence = collect_adjacency(target, opts);
  const MappingRecovery mapping = recover_mapping(evidence, opts);
  const AsymmetryResult asym = measure_asymmetry(evidence, mapping.mapping, opts.asymmetry_threshold);

  const std::uint32_t region_rows = std::min(opts.ber_region_rows, target.row_count() - opts.ber_region_start);
  double ber = 0.0;
  for (std::uint32_t rep = 0; rep < opts.ber_reps; ++rep)
    ber += target.region_ber({opts.ber_region_start, region_rows}, probe_temp_c, rep).flips_per_row;
  ber /= std::max(1u, opts.ber_reps);

  FingerprintReport report;
  report.recovered_mapping = mapping.mapping;
  report.single_sided_asymmetric = asym.asymmetric;
  report.ber_magnitude = ber;
  report.probe_temp_c = probe_temp_c;
  report.dominant_fraction = asym.dominant_fraction;
  report.mapping_match_fraction = mapping.match_fraction;

  const double side_evidence =
      asym.asymmetric ? asym.dominant_fraction : std::min(1.0, 2.0 * (1.0 - asym.dominant_fraction));
  double margin = 1.0;
  if (mapping.mapping.kind == MappingKind::XorMfrB) {
    report.manufacturer = Manufacturer::B;
  } else if (asym.asymmetric) {
    report.manufacturer = ber > opts.theta_ad ? Manufacturer::A : Manufacturer::D;
    margin = 1.0 / (1.0 + std::exp(-std::abs(ber - opts.theta_ad) / opts.logistic_scale));
  } else {
    report.manufacturer = Manufacturer::C;
  }
  report.confidence = side_evidence * mapping.match_fraction * margin;
  return report;
}

void to_json(nlohmann::json& j, const FingerprintReport& r) {
  j = nlohmann::json{
      {"recovered_mapping", {{"kind", std::string(to_string(r.recovered_mapping.kind))},
                             {"width", r.recovered_mapping.width}}},
      {"single_sided_asymmetric", r.single_sided_asymmetric},
      {"ber_magnitude", r.ber_magnitude},
      {"probe_temp_c", r.probe_temp_c},
      {"manufacturer", std::string(to_string(r.manufacturer))},
      {"confidence", r.confidence},
      {"dominant_fraction", r.dominant_fraction},
      {"mapping_match_fraction", r.mapping_match_fraction},
      {"trr_hint", r.trr_hint ? nlohmann::json(*r.trr_hint) : nlohmann::json(nullptr)},
  };
}

void from_json(const nlohmann::json& j, FingerprintReport& r) {
  try {
    const auto& m = j.at("recovered_mapping");
    r.recovered_mapping = {mapping_kind_from_string(m.at("kind").get<std::string>()),
                           m.at("width").get<unsigned>()};
    r.single_sided_asymmetric = j.at("single_sided_asymmetric").get<bool>();
    r.ber_magnitude = j.at("ber_magnitude").get<double>();
    r.probe_temp_c = j.value("probe_temp_c", 50);
    r.manufacturer = manufacturer_from_string(j.at("manufacturer").get<std::string>());
    r.confidence = j.at("confidence").get<double>();
    r.dominant_fraction = j.value("dominant_fraction", 0.0);
    r.mapping_match_fraction = j.value("mapping_match_fraction", 0.0);
    if (j.contains("trr_hint") && !j.at("trr_hint").is_null())
      r.trr_hint = j.at("trr_hint").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed fingerprint report: ") + e.what());
  }
}

}  // namespace spyhammer
