#include "spyhammer/canary.hpp"

#include <algorithm>
#include <cstdlib>
#include <numeric>
#include <string>

#include "spyhammer/errors.hpp"
#include "spyhammer/parallel.hpp"

namespace spyhammer {

std::size_t CanaryMap::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [t, cells] : entries) n += cells.size();
  return n;
}

CanaryMap enroll_canaries(const HammerTarget& target, std::span<const int> temps,
                          std::uint32_t reps, std::uint32_t first_rep, unsigned threads) {
  if (temps.empty()) throw DomainError("enrollment needs at least one temperature");
  if (reps == 0) throw DomainError("enrollment needs at least one repetition");

  CanaryMap map;
  map.enrollment_reps = reps;
  map.enrollment_temps.assign(temps.begin(), temps.end());
  std::sort(map.enrollment_temps.begin(), map.enrollment_temps.end());
  map.enrollment_temps.erase(std::unique(map.enrollment_temps.begin(), map.enrollment_temps.end()),
                             map.enrollment_temps.end());
  for (int t : map.enrollment_temps) map.entries[t];

  std::vector<std::uint32_t> rep_ids(reps);
  std::iota(rep_ids.begin(), rep_ids.end(), first_rep);

  const std::uint32_t rows = target.row_count();
  if (rows < 3) return map;
  std::vector<std::vector<CellTempHit>> per_row(rows - 2);
  parallel_for(per_row.size(), threads, [&](std::size_t i) {
    auto hits = target.scan_cell_temperatures(static_cast<std::uint32_t>(i + 1),
                                              map.enrollment_temps, rep_ids);
    std::erase_if(hits, [](const CellTempHit& h) { return h.multiple; });
    per_row[i] = std::move(hits);
  });
  for (const auto& hits : per_row)
    for (const CellTempHit& h : hits) map.entries[h.temp_c].push_back(h.coord);
  for (auto& [t, cells] : map.entries) std::sort(cells.begin(), cells.end());
  return map;
}

std::vector<std::uint32_t> canary_rows(const CanaryMap& map) {
  if (map.empty()) throw DomainError("canary map is empty");
  std::map<std::uint32_t, std::uint32_t> count;
  for (const auto& [t, cells] : map.entries)
    for (const CellCoord& c : cells) ++count[c.row];
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranked(count.begin(), count.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::uint32_t> rows;
  rows.reserve(ranked.size());
  for (const auto& [row, n] : ranked) rows.push_back(row);
  return rows;
}

CanaryMonitor::CanaryMonitor(const CanaryMap& map) : rows_(canary_rows(map)) {
  std::map<std::uint32_t, std::vector<std::pair<std::uint32_t, int>>> by_row;
  for (const auto& [t, cells] : map.entries)
    for (const CellCoord& c : cells) by_row[c.row].emplace_back(c.bit, t);
  row_start_.reserve(rows_.size() + 1);
  row_start_.push_back(0);
  for (std::uint32_t row : rows_) {
    for (const auto& [bit, t] : by_row.at(row)) {
      bits_.push_back(bit);
      temps_.push_back(t);
    }
    row_start_.push_back(bits_.size());
  }
}

CanaryReading CanaryMonitor::read(const HammerTarget& target, int temp_c,
                                  const MonitorOptions& opts) const {
  const std::size_t budget =
      opts.probe_budget == 0 ? rows_.size() : std::min<std::size_t>(opts.probe_budget, rows_.size());

  CanaryReading reading;
  std::map<int, std::uint32_t> hits;
  for (std::size_t i = 0; i < budget; ++i) {
    const std::size_t b = row_start_[i];
    const std::size_t e = row_start_[i + 1];
    const std::span<const std::uint32_t> bits(bits_.data() + b, e - b);
    const std::vector<bool> flipped = target.read_cells(rows_[i], temp_c, opts.rep, bits);
    for (std::size_t k = 0; k < bits.size(); ++k) {
      const int t = temps_[b + k];
      ++reading.probed[t];
      if (flipped[k]) {
        ++hits[t];
        ++reading.flipped;
      }
    }
  }
  if (reading.flipped == 0)
    throw UnknownTemperatureError("no enrolled canary flipped at the current temperature");

  std::optional<int> best;
  double best_fraction = -1.0;
  for (const auto& [t, n] : reading.probed) {
    if (n < std::max(1u, opts.min_hits)) continue;
    const double fraction = static_cast<double>(hits[t]) / static_cast<double>(n);
    reading.hit_fraction[t] = fraction;
    bool take = fraction > best_fraction;
    if (!take && fraction == best_fraction && opts.previous)
      take = std::abs(t - *opts.previous) < std::abs(*best - *opts.previous);
    if (take) {
      best = t;
      best_fraction = fraction;
    }
  }
  if (!best) throw UnknownTemperatureError("no temperature has enough probed canaries");
  reading.estimate.value = *best;
  reading.estimate.kind = EstimateKind::Absolute;
  reading.estimate.residual = 1.0 - best_fraction;
  return reading;
}

CanaryReading monitor_canaries(const HammerTarget& target, const CanaryMap& map, int temp_c,
                               const MonitorOptions& opts) {
  return CanaryMonitor(map).read(target, temp_c, opts);
}

void to_json(nlohmann::json& j, const CanaryMap& m) {
  nlohmann::json entries = nlohmann::json::object();
  for (const auto& [t, cells] : m.entries) {
    nlohmann::json list = nlohmann::json::array();
    for (const CellCoord& c : cells) list.push_back({c.row, c.bit});
    entries[std::to_string(t)] = std::move(list);
  }
  j = nlohmann::json{{"reps", m.enrollment_reps}, {"temps", m.enrollment_temps},
                     {"entries", std::move(entries)}};
}

void from_json(const nlohmann::json& j, CanaryMap& m) {
  try {
    m.enrollment_reps = j.at("reps").get<std::uint32_t>();
    m.enrollment_temps = j.at("temps").get<std::vector<int>>();
    m.entries.clear();
    for (int t : m.enrollment_temps) m.entries[t];
    for (const auto& [key, list] : j.at("entries").items()) {
      auto& cells = m.entries[std::stoi(key)];
      for (const auto& c : list) cells.push_back({c.at(0).get<std::uint32_t>(), c.at(1).get<std::uint32_t>()});
      std::sort(cells.begin(), cells.end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed canary map: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ConfigError(std::string("malformed canary map: ") + e.what());
  }
}

}  // namespace spyhammer
