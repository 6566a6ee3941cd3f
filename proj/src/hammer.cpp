#include "spyhammer/hammer.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <random>
#include <string>

#include "spyhammer/errors.hpp"
#include "spyhammer/parallel.hpp"

namespace spyhammer {

std::uint8_t DataPattern::fill_byte(int offset, std::uint64_t seed, std::uint32_t row,
                                    std::uint32_t byte_index) const noexcept {
  const bool odd = (offset % 2) != 0;
  std::uint8_t value = 0;
  switch (kind) {
    case PatternKind::Colstripe: value = 0x55; break;
    case PatternKind::Checkered: value = odd ? 0xaa : 0x55; break;
    case PatternKind::Rowstripe: value = odd ? 0xff : 0x00; break;
    case PatternKind::Random:
      return static_cast<std::uint8_t>(
          hash_words({seed, stream::kRandomPattern, row, byte_index}) >> 56);
  }
  return complement ? static_cast<std::uint8_t>(~value) : value;
}

std::size_t DataPattern::order_index() const noexcept {
  const auto base = static_cast<std::size_t>(kind);
  if (!complement || kind == PatternKind::Random) return base;
  return 4 + base;
}

std::string_view to_string(const DataPattern& p) noexcept {
  constexpr std::array<std::string_view, 7> names{
      "colstripe", "checkered", "rowstripe", "random",
      "colstripe-inv", "checkered-inv", "rowstripe-inv"};
  return names[p.order_index()];
}

Fidelity fidelity_from_string(std::string_view name) {
  if (name == "aggregate") return Fidelity::Aggregate;
  if (name == "cell") return Fidelity::CellAccurate;
  throw ConfigError("unknown fidelity '" + std::string(name) + "'");
}

NoiseMode noise_from_string(std::string_view name) {
  if (name == "on") return NoiseMode::On;
  if (name == "off") return NoiseMode::Off;
  throw ConfigError("unknown noise mode '" + std::string(name) + "'");
}

HammerEngine::HammerEngine(const SimulatedModule& module, EngineConfig config)
    : module_(module), config_(config) {
  for (double s : config_.pattern_sensitivity)
    if (!(s >= 0.0)) throw ConfigError("pattern sensitivity must be non-negative");
  if (!(config_.single_sided_factor >= 0.0))
    throw ConfigError("single-sided factor must be non-negative");
}

std::vector<bool> HammerTarget::read_cells(std::uint32_t physical_victim, int temp_c,
                                           std::uint32_t rep,
                                           std::span<const std::uint32_t> bits) const {
  const std::uint32_t reps[1] = {rep};
  const std::vector<FlipRecord> records = double_sided_cells(physical_victim, temp_c, reps);
  std::vector<bool> out(bits.size(), false);
  for (std::size_t i = 0; i < bits.size(); ++i)
    out[i] = std::any_of(records.begin(), records.end(),
                         [&](const FlipRecord& r) { return r.coord.bit == bits[i]; });
  return out;
}

std::vector<CellTempHit> HammerTarget::scan_cell_temperatures(
    std::uint32_t physical_victim, std::span<const int> temps,
    std::span<const std::uint32_t> reps) const {
  std::map<CellCoord, CellTempHit> seen;
  std::vector<int> sorted(temps.begin(), temps.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int t : sorted) {
    std::set<CellCoord> flipped;
    for (const FlipRecord& r : double_sided_cells(physical_victim, t, reps)) flipped.insert(r.coord);
    for (const CellCoord& c : flipped) {
      auto [it, inserted] = seen.try_emplace(c, CellTempHit{c, t, false});
      if (!inserted) it->second.multiple = true;
    }
  }
  std::vector<CellTempHit> out;
  for (const auto& [coord, hit] : seen) out.push_back(hit);
  return out;
}

double HammerEngine::dose_factor(std::uint32_t hammer_count) noexcept {
  return static_cast<double>(std::min(hammer_count, kReferenceHammerCount)) /
         static_cast<double>(kReferenceHammerCount);
}

void HammerEngine::check_temp(int temp_c) const {
  if (!module_.domain().contains(temp_c))
    throw DomainError("temperature " + std::to_string(temp_c) + " C outside the module domain");
}

void HammerEngine::check_region(Region region) const {
  if (region.row_count == 0) throw DomainError("empty region");
  if (std::uint64_t{region.start_row} + region.row_count > module_.rows())
    throw DomainError("region [" + std::to_string(region.start_row) + ", +" +
                      std::to_string(region.row_count) + ") exceeds the module");
}

double HammerEngine::pattern_multiplier(const DataPattern& pattern) const {
  return config_.pattern_sensitivity[pattern.order_index()];
}

double HammerEngine::expected_row_flips(std::uint32_t physical_row, int temp_c,
                                        std::uint32_t hammer_count,
                                        const DataPattern& pattern) const {
  check_temp(temp_c);
  return module_.row_mass(physical_row, temp_c) * dose_factor(hammer_count) *
         pattern_multiplier(pattern);
}

double HammerEngine::sample_count(double mean, std::uint64_t key) const {
  if (config_.noise == NoiseMode::Off) return mean;
  if (!(mean > 0.0)) return 0.0;
  SplitMix64 rng(key);
  std::poisson_distribution<long long> dist(mean);
  return static_cast<double>(dist(rng));
}

std::uint64_t HammerEngine::cell_key(std::uint32_t physical_row, int temp_c,
                                    std::uint32_t rep) const {
  return hash_words({module_.seed(), stream::kCellFlip, physical_row,
                     static_cast<std::uint64_t>(temp_c), rep});
}

bool HammerEngine::cell_flipped(std::uint64_t key, const CellProfile& cell, double p) const {
  if (config_.noise == NoiseMode::Off) return p >= 1.0;
  return to_unit(mix64(key + 0x9e3779b97f4a7c15ULL * (cell.coord.bit + 1ULL))) < p;
}

void HammerEngine::cell_flips(std::uint32_t physical_row, double multiplier, int temp_c,
                              std::span<const std::uint32_t> reps,
                              std::vector<FlipRecord>& out) const {
  std::vector<std::uint64_t> keys;
  keys.reserve(reps.size());
  for (std::uint32_t rep : reps) keys.push_back(cell_key(physical_row, temp_c, rep));
  auto visit = [&](const CellProfile& cell) {
    if (!cell.vulnerable_at(temp_c)) return;
    const double p = std::min(1.0, module_.effective_prob(cell, temp_c) * multiplier);
    for (std::size_t k = 0; k < reps.size(); ++k)
      if (cell_flipped(keys[k], cell, p)) out.push_back({cell.coord, temp_c, reps[k]});
  };
  module_.for_each_band_cell(physical_row, visit);
  for (const CellProfile& c : module_.canaries_in_row(physical_row)) visit(c);
}

double HammerEngine::physical_row_flips(std::uint32_t physical_row, double multiplier,
                                        int temp_c, std::uint32_t rep,
                                        Fidelity fidelity) const {
  const double mean = module_.row_mass(physical_row, temp_c) * multiplier;
  if (fidelity == Fidelity::Aggregate || config_.noise == NoiseMode::Off)
    return sample_count(mean, hash_words({module_.seed(), stream::kAggregate, physical_row,
                                          static_cast<std::uint64_t>(temp_c), rep}));
  std::vector<FlipRecord> records;
  const std::uint32_t reps[1] = {rep};
  cell_flips(physical_row, multiplier, temp_c, reps, records);
  return static_cast<double>(records.size());
}

DoubleSidedResult HammerEngine::hammer_double_sided(std::uint32_t victim,
                                                    std::uint32_t hammer_count,
                                                    const DataPattern& pattern, int temp_c,
                                                    std::uint32_t rep,
                                                    Fidelity fidelity) const {
  check_temp(temp_c);
  if (victim >= module_.rows()) throw DomainError("victim row outside the module");
  const std::uint32_t phys = map_logical_to_physical(module_.profile().mapping, victim);
  if (phys == 0 || phys + 1 >= module_.rows())
    throw EdgeError("victim row " + std::to_string(victim) + " has no physical neighbour on one side");
  const double multiplier = dose_factor(hammer_count) * pattern_multiplier(pattern);
  DoubleSidedResult result;
  if (fidelity == Fidelity::CellAccurate) {
    const std::uint32_t reps[1] = {rep};
    cell_flips(phys, multiplier, temp_c, reps, result.records);
    result.flips = static_cast<double>(result.records.size());
  } else {
    result.flips = physical_row_flips(phys, multiplier, temp_c, rep, Fidelity::Aggregate);
  }
  return result;
}

SingleSidedResult HammerEngine::hammer_single_sided(std::uint32_t aggressor,
                                                    std::uint32_t hammer_count,
                                                    const DataPattern& pattern, int temp_c,
                                                    std::uint32_t rep) const {
  check_temp(temp_c);
  if (aggressor >= module_.rows()) throw DomainError("aggressor row outside the module");
  const RowMapping& mapping = module_.profile().mapping;
  const std::uint32_t phys = map_logical_to_physical(mapping, aggressor);
  const double multiplier =
      dose_factor(hammer_count) * pattern_multiplier(pattern) * config_.single_sided_factor;

  SingleSidedResult result;
  auto probe = [&](std::int64_t neighbor) {
    if (neighbor < 0 || neighbor >= static_cast<std::int64_t>(module_.rows())) {
      result.missing_neighbor = true;
      return;
    }
    const auto nb = static_cast<std::uint32_t>(neighbor);
    const double mean = module_.row_mass(nb, temp_c) * multiplier;
    const double flips = sample_count(
        mean, hash_words({module_.seed(), stream::kSingleSided, phys, nb,
                          static_cast<std::uint64_t>(temp_c), rep}));
    result.neighbors.push_back({nb, map_physical_to_logical(mapping, nb), flips});
  };
  if (!module_.profile().single_sided_asymmetric) probe(std::int64_t{phys} - 1);
  probe(std::int64_t{phys} + 1);
  return result;
}

std::vector<double> HammerEngine::region_row_flips(Region region, int temp_c, std::uint32_t rep,
                                                   const DataPattern& pattern) const {
  check_temp(temp_c);
  check_region(region);
  const RowMapping& mapping = module_.profile().mapping;
  const double multiplier = dose_factor(config_.hammer_count) * pattern_multiplier(pattern);
  std::vector<double> flips(region.row_count, 0.0);
  parallel_for(region.row_count, config_.threads, [&](std::size_t i) {
    const std::uint32_t phys =
        map_logical_to_physical(mapping, region.start_row + static_cast<std::uint32_t>(i));
    // Rows on the array edge have one neighbour only and cannot be
    // double-side hammered.
    if (phys == 0 || phys + 1 >= module_.rows()) return;
    flips[i] = physical_row_flips(phys, multiplier, temp_c, rep, config_.fidelity);
  });
  return flips;
}

BerSample HammerEngine::measure_region_once(Region region, int temp_c, std::uint32_t rep,
                                            const DataPattern& pattern) const {
  const std::vector<double> flips = region_row_flips(region, temp_c, rep, pattern);
  BerSample s;
  s.module_id = module_.profile().module_id;
  s.region = region;
  s.temp_c = temp_c;
  s.rep = rep;
  for (double f : flips) s.total_flips += f;
  s.flips_per_row = s.total_flips / region.row_count;
  return s;
}

std::vector<BerSample> HammerEngine::measure_region_ber(Region region, int temp_c,
                                                        std::uint32_t repetitions,
                                                        const DataPattern& pattern,
                                                        std::uint32_t first_rep) const {
  std::vector<BerSample> samples;
  samples.reserve(repetitions);
  for (std::uint32_t r = 0; r < repetitions; ++r)
    samples.push_back(measure_region_once(region, temp_c, first_rep + r, pattern));
  return samples;
}

DataPattern HammerEngine::select_worst_case_pattern(Region region, int temp_c) const {
  DataPattern best = kAllPatterns.front();
  double best_total = -1.0;
  for (const DataPattern& p : kAllPatterns) {
    const double total = measure_region_once(region, temp_c, 0, p).total_flips;
    if (total > best_total) {
      best_total = total;
      best = p;
    }
  }
  return best;
}

std::vector<RowFlips> HammerEngine::single_sided_probe(std::uint32_t aggressor, int temp_c,
                                                       std::uint32_t rep) const {
  const SingleSidedResult r =
      hammer_single_sided(aggressor, config_.hammer_count, config_.pattern, temp_c, rep);
  std::vector<RowFlips> out;
  out.reserve(r.neighbors.size());
  for (const NeighborFlips& n : r.neighbors) out.push_back({n.logical_row, n.flips});
  return out;
}

std::vector<FlipRecord> HammerEngine::double_sided_cells(std::uint32_t physical_victim,
                                                         int temp_c,
                                                         std::span<const std::uint32_t> reps) const {
  check_temp(temp_c);
  check_victim(physical_victim);
  std::vector<FlipRecord> records;
  const double multiplier =
      dose_factor(config_.hammer_count) * pattern_multiplier(config_.pattern);
  cell_flips(physical_victim, multiplier, temp_c, reps, records);
  return records;
}

void HammerEngine::check_victim(std::uint32_t physical_victim) const {
  if (physical_victim == 0 || physical_victim + 1 >= module_.rows())
    throw EdgeError("physical row " + std::to_string(physical_victim) + " cannot be double-side hammered");
}

std::vector<bool> HammerEngine::read_cells(std::uint32_t physical_victim, int temp_c,
                                           std::uint32_t rep,
                                           std::span<const std::uint32_t> bits) const {
  check_temp(temp_c);
  check_victim(physical_victim);
  const double multiplier =
      dose_factor(config_.hammer_count) * pattern_multiplier(config_.pattern);
  const std::uint64_t key = cell_key(physical_victim, temp_c, rep);
  std::vector<bool> out(bits.size(), false);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const auto cell = module_.cell_at(physical_victim, bits[i]);
    if (!cell || !cell->vulnerable_at(temp_c)) continue;
    const double p = std::min(1.0, module_.effective_prob(*cell, temp_c) * multiplier);
    out[i] = cell_flipped(key, *cell, p);
  }
  return out;
}

std::vector<CellTempHit> HammerEngine::scan_cell_temperatures(
    std::uint32_t physical_victim, std::span<const int> temps,
    std::span<const std::uint32_t> reps) const {
  check_victim(physical_victim);
  const TempDomain& dom = module_.domain();
  // Scan keys indexed by domain position; unscanned temperatures stay empty.
  std::vector<std::vector<std::uint64_t>> keys(static_cast<std::size_t>(dom.size()));
  for (int t : temps) {
    check_temp(t);
    auto& k = keys[dom.index(t)];
    if (!k.empty()) continue;
    for (std::uint32_t rep : reps) k.push_back(cell_key(physical_victim, t, rep));
  }
  const double multiplier =
      dose_factor(config_.hammer_count) * pattern_multiplier(config_.pattern);
  std::vector<CellTempHit> out;
  auto visit = [&](const CellProfile& cell) {
    int hits = 0;
    int first = 0;
    for (int t = cell.t_lo; t <= cell.t_hi && hits < 2; ++t) {
      const auto& k = keys[dom.index(t)];
      if (k.empty()) continue;
      const double p = std::min(1.0, module_.effective_prob(cell, t) * multiplier);
      // Later repetitions cannot change the outcome once one has flipped.
      for (std::uint64_t key : k) {
        if (cell_flipped(key, cell, p)) {
          if (hits++ == 0) first = t;
          break;
        }
      }
    }
    if (hits > 0) out.push_back({cell.coord, first, hits > 1});
  };
  module_.for_each_band_cell(physical_victim, visit);
  for (const CellProfile& c : module_.canaries_in_row(physical_victim)) visit(c);
  return out;
}

BerSample HammerEngine::region_ber(Region region, int temp_c, std::uint32_t rep) const {
  return measure_region_once(region, temp_c, rep, config_.pattern);
}

}  // namespace spyhammer
