#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spyhammer/profile.hpp"
#include "spyhammer/rng.hpp"

namespace spyhammer {

struct CellCoord {
  std::uint32_t row = 0;  ///< physical row
  std::uint32_t bit = 0;
  friend auto operator<=>(const CellCoord&, const CellCoord&) = default;
};

enum class CellKind { Band, Canary };

/// One RowHammer-vulnerable DRAM cell. Band cells are vulnerable over an
/// interval of temperatures, canary cells at exactly one.
struct CellProfile {
  CellCoord coord;
  CellKind kind = CellKind::Band;
  int t_lo = 0;  ///< clipped to the module's temperature domain
  int t_hi = 0;
  double base_prob = 0.0;

  constexpr bool vulnerable_at(int t) const noexcept { return t >= t_lo && t <= t_hi; }
};

/// Band-cell draw: t_lo uniform on [lo - kMaxBandWidth, hi], width uniform on
/// [kMinBandWidth, kMaxBandWidth], base_prob uniform on [kMinBaseProb,
/// kMaxBaseProb]; bands keeping fewer than three in-domain points are redrawn.
inline constexpr int kMinBandWidth = 2;
inline constexpr int kMaxBandWidth = 46;
inline constexpr double kMinBaseProb = 0.05;
inline constexpr double kMaxBaseProb = 0.5;
inline constexpr std::uint32_t kMinBandCellsPerRow = 64;
/// Auto-sized modules keep s(t) below this so no band cell clips at 1.
inline constexpr double kTargetMaxScale = 1.6;

/// A calibrated module instance. Immutable after build_module(); safe to share
/// between threads.
///
/// Band cells are not stored: each row's population is regenerated on demand
/// from (seed, row), which keeps multi-hundred-million-cell modules in a few
/// megabytes. The per-row expected flip mass at every grid temperature is
/// precomputed for aggregate sampling.
class SimulatedModule {
 public:
  const ModuleProfile& profile() const noexcept { return profile_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint32_t rows() const noexcept { return profile_.rows; }
  const TempDomain& domain() const noexcept { return profile_.temp_domain; }
  std::uint32_t band_cells_per_row() const noexcept { return band_cells_per_row_; }

  /// s(t) over the integer temperature grid.
  std::span<const double> per_temp_scale() const noexcept { return scale_; }
  double scale_at(int t) const { return scale_.at(domain().index(t)); }

  /// Planted canaries, sorted by coordinate.
  std::span<const CellProfile> canaries() const noexcept { return canaries_; }
  std::span<const CellProfile> canaries_in_row(std::uint32_t row) const;

  /// Calls f(const CellProfile&) for every band cell of a physical row.
  template <typename F>
  void for_each_band_cell(std::uint32_t row, F&& f) const;

  /// The vulnerable cell at (row, bit), if there is one.
  std::optional<CellProfile> cell_at(std::uint32_t row, std::uint32_t bit) const;

  /// Band cells followed by canaries of one physical row.
  std::vector<CellProfile> cells_in_row(std::uint32_t row) const;

  /// Per-trial flip probability of a cell at temperature t at the reference
  /// hammer count.
  double effective_prob(const CellProfile& cell, int t) const noexcept {
    if (!cell.vulnerable_at(t)) return 0.0;
    if (cell.kind == CellKind::Canary) return cell.base_prob;
    const double p = scale_[domain().index(t)] * cell.base_prob;
    return p < 1.0 ? p : 1.0;
  }

  /// Expected flips of a double-sided hammered physical row (band + canary).
  double row_mass(std::uint32_t row, int t) const {
    return row_mass_[static_cast<std::size_t>(row) * temps_ + domain().index(t)];
  }
  /// Sum of row_mass over all rows.
  double total_mass(int t) const { return total_mass_.at(domain().index(t)); }

 private:
  friend SimulatedModule build_module(const ModuleProfile&, std::uint64_t);

  bool is_canary_bit(std::uint32_t row, std::uint32_t bit) const;

  ModuleProfile profile_;
  std::uint64_t seed_ = 0;
  std::uint32_t band_cells_per_row_ = 0;
  std::size_t temps_ = 0;
  std::vector<double> scale_;
  std::vector<CellProfile> canaries_;
  std::vector<std::uint32_t> canary_row_start_;  ///< CSR offsets into canaries_
  std::vector<double> row_mass_;                 ///< rows x temps
  std::vector<double> total_mass_;
};

/// Deterministic in (profile, seed). Throws ConfigError for an invalid
/// profile and CalibrationError when no per-temperature scale can reach the
/// target BER.
SimulatedModule build_module(const ModuleProfile& profile, std::uint64_t seed);

/// Target total flips over the module at t: rows * ber_scale * P(t).
double calibration_target(const ModuleProfile& profile, int t);

/// max_t |total_mass(t) - target(t)| / target(t) from the precomputed masses.
double calibration_error(const SimulatedModule& module);

/// Band-cell count auto-sizing result for a profile.
std::uint32_t auto_band_cells_per_row(const ModuleProfile& profile);

// --- implementation -------------------------------------------------------

namespace detail {

/// Draws the (t_lo, t_hi, base_prob, bit) of band cell j in a row.
struct BandDraw {
  int t_lo;
  int t_hi;
  double base_prob;
  std::uint32_t bit;
};

inline BandDraw draw_band_cell(std::uint64_t row_key, std::uint32_t j, std::uint32_t stride,
                               const TempDomain& dom) noexcept {
  constexpr auto kWidths = static_cast<std::uint32_t>(kMaxBandWidth - kMinBandWidth + 1);
  const auto starts = static_cast<std::uint32_t>(dom.hi - dom.lo + kMaxBandWidth + 1);
  std::uint64_t h = mix64(row_key + 0x9e3779b97f4a7c15ULL * (std::uint64_t{j} + 1));
  const std::uint64_t hp = mix64(h ^ 0x5851f42d4c957f2dULL);
  for (;;) {
    const int start = dom.lo - kMaxBandWidth + static_cast<int>(to_range(h, starts));
    const int width = kMinBandWidth + static_cast<int>((((h >> 16) & 0xffffULL) * kWidths) >> 16);
    const int lo = start < dom.lo ? dom.lo : start;
    const int hi = start + width > dom.hi ? dom.hi : start + width;
    if (hi - lo >= kMinBandWidth) {
      const auto offset = static_cast<std::uint32_t>(((h & 0xffffULL) * stride) >> 16);
      return {lo, hi, kMinBaseProb + (kMaxBaseProb - kMinBaseProb) * to_unit(hp),
              j * stride + offset};
    }
    h = mix64(h);
  }
}

}  // namespace detail

template <typename F>
void SimulatedModule::for_each_band_cell(std::uint32_t row, F&& f) const {
  const std::uint64_t row_key = hash_words({seed_, stream::kBandCell, row});
  const std::uint32_t n = band_cells_per_row_;
  const std::uint32_t stride = profile_.columns_per_row / n;
  const auto row_canaries = canaries_in_row(row);
  for (std::uint32_t j = 0; j < n; ++j) {
    const detail::BandDraw d = detail::draw_band_cell(row_key, j, stride, domain());
    if (!row_canaries.empty() && is_canary_bit(row, d.bit)) continue;
    f(CellProfile{{row, d.bit}, CellKind::Band, d.t_lo, d.t_hi, d.base_prob});
  }
}

}  // namespace spyhammer
