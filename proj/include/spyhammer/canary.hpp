#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "spyhammer/hammer.hpp"
#include "spyhammer/regression.hpp"

namespace spyhammer {

/// Cells that flipped at exactly one enrolled temperature. Every enrolled
/// temperature has an entry, possibly empty, so gaps stay visible.
struct CanaryMap {
  std::map<int, std::vector<CellCoord>> entries;  ///< coordinates sorted
  std::uint32_t enrollment_reps = 0;
  std::vector<int> enrollment_temps;               ///< ascending

  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
};

/// Hammers every double-sidable physical row at each temperature, reps
/// times (repetitions first_rep ..), and keeps the cells that flipped at
/// least once at one temperature and at no other.
/// Throws DomainError for empty temps or reps == 0.
CanaryMap enroll_canaries(const HammerTarget& target, std::span<const int> temps,
                          std::uint32_t reps, std::uint32_t first_rep = 0, unsigned threads = 1);

/// Physical rows holding enrolled canaries, most canaries first, ties by
/// ascending row. Throws DomainError for an empty map.
std::vector<std::uint32_t> canary_rows(const CanaryMap& map);

struct MonitorOptions {
  std::uint32_t probe_budget = 0;  ///< rows to hammer; 0 means every canary row
  std::uint32_t min_hits = 1;      ///< probed canaries a temperature needs
  std::optional<int> previous;     ///< last estimate, for tie-breaking
  std::uint32_t rep = 0;
};

struct CanaryReading {
  TemperatureEstimate estimate;
  std::map<int, double> hit_fraction;   ///< candidate temperatures only
  std::map<int, std::uint32_t> probed;  ///< probed canaries per temperature
  std::uint32_t flipped = 0;
};

/// Row-ordered view of a CanaryMap for repeated monitoring.
class CanaryMonitor {
 public:
  /// Throws DomainError for an empty map.
  explicit CanaryMonitor(const CanaryMap& map);

  /// One hammer per canary row at the current (unknown) temperature. The
  /// estimate is the temperature with the highest hit fraction; ties go to
  /// the one nearest `previous`, else the lowest.
  /// Throws UnknownTemperatureError when no enrolled canary flipped or none
  /// was probed.
  CanaryReading read(const HammerTarget& target, int temp_c, const MonitorOptions& opts) const;

  std::span<const std::uint32_t> rows() const noexcept { return rows_; }

 private:
  std::vector<std::uint32_t> rows_;          ///< canary_rows order
  std::vector<std::size_t> row_start_;       ///< offsets into bits_ / temps_
  std::vector<std::uint32_t> bits_;
  std::vector<int> temps_;
};

CanaryReading monitor_canaries(const HammerTarget& target, const CanaryMap& map, int temp_c,
                               const MonitorOptions& opts);

void to_json(nlohmann::json& j, const CanaryMap& m);
void from_json(const nlohmann::json& j, CanaryMap& m);

}  // namespace spyhammer
