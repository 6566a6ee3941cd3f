#include "spyhammer/module.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <string>

#include "spyhammer/errors.hpp"

namespace spyhammer {
namespace {

constexpr int kClipRepairPasses = 4;
constexpr double kCalibrationTolerance = 1e-3;

/// Fraction of band-cell draws vulnerable at each grid temperature.
std::vector<double> band_coverage(const TempDomain& dom) {
  std::vector<double> covered(static_cast<std::size_t>(dom.size()), 0.0);
  double valid = 0.0;
  for (int start = dom.lo - kMaxBandWidth; start <= dom.hi; ++start) {
    for (int width = kMinBandWidth; width <= kMaxBandWidth; ++width) {
      const int lo = std::max(start, dom.lo);
      const int hi = std::min(start + width, dom.hi);
      if (hi - lo < kMinBandWidth) continue;
      valid += 1.0;
      for (int t = lo; t <= hi; ++t) covered[dom.index(t)] += 1.0;
    }
  }
  for (double& c : covered) c /= valid;
  return covered;
}

std::vector<CellProfile> plant_canaries(const ModuleProfile& p, std::uint64_t seed) {
  std::vector<CellProfile> canaries;
  if (p.canary_density <= 0.0) return canaries;
  std::set<CellCoord> taken;
  const TempDomain& dom = p.temp_domain;
  for (int t = dom.lo; t <= dom.hi; ++t) {
    SplitMix64 rng(hash_words({seed, stream::kCanaryPlant, static_cast<std::uint64_t>(t)}));
    std::poisson_distribution<long> count_dist(p.canary_density);
    const long count = std::max(1L, count_dist(rng));
    for (long k = 0; k < count;) {
      // Rows 0 and rows-1 cannot be hammered double-sided.
      const CellCoord c{1 + to_range(rng(), p.rows - 2), to_range(rng(), p.columns_per_row)};
      if (!taken.insert(c).second) continue;
      canaries.push_back({c, CellKind::Canary, t, t, p.canary_flip_prob});
      ++k;
    }
  }
  std::sort(canaries.begin(), canaries.end(),
            [](const CellProfile& a, const CellProfile& b) { return a.coord < b.coord; });
  return canaries;
}

}  // namespace

double calibration_target(const ModuleProfile& profile, int t) {
  return static_cast<double>(profile.rows) * expected_ber(profile, t);
}

std::uint32_t auto_band_cells_per_row(const ModuleProfile& p) {
  const std::vector<double> coverage = band_coverage(p.temp_domain);
  constexpr double kMeanBaseProb = 0.5 * (kMinBaseProb + kMaxBaseProb);
  double needed = kMinBandCellsPerRow;
  for (int t = p.temp_domain.lo; t <= p.temp_domain.hi; ++t) {
    const double per_cell = kMeanBaseProb * coverage[p.temp_domain.index(t)];
    needed = std::max(needed, p.ber_scale * p.ber_cubic(t) / (kTargetMaxScale * per_cell));
  }
  const double cap = static_cast<double>(p.columns_per_row);
  return static_cast<std::uint32_t>(std::min(std::ceil(needed), cap));
}

std::span<const CellProfile> SimulatedModule::canaries_in_row(std::uint32_t row) const {
  if (row >= profile_.rows) return {};
  const std::uint32_t b = canary_row_start_[row];
  const std::uint32_t e = canary_row_start_[row + 1];
  return std::span<const CellProfile>(canaries_).subspan(b, e - b);
}

bool SimulatedModule::is_canary_bit(std::uint32_t row, std::uint32_t bit) const {
  const auto cs = canaries_in_row(row);
  return std::binary_search(cs.begin(), cs.end(), CellProfile{{row, bit}},
                            [](const CellProfile& a, const CellProfile& b) {
                              return a.coord < b.coord;
                            });
}

std::optional<CellProfile> SimulatedModule::cell_at(std::uint32_t row, std::uint32_t bit) const {
  if (row >= profile_.rows) return std::nullopt;
  const auto cs = canaries_in_row(row);
  const auto it = std::lower_bound(cs.begin(), cs.end(), bit,
                                   [](const CellProfile& c, std::uint32_t b) { return c.coord.bit < b; });
  if (it != cs.end() && it->coord.bit == bit) return *it;
  // Band cell j always lands in bit slot [j * stride, (j + 1) * stride).
  const std::uint32_t stride = profile_.columns_per_row / band_cells_per_row_;
  const std::uint32_t j = bit / stride;
  if (j >= band_cells_per_row_) return std::nullopt;
  const detail::BandDraw d =
      detail::draw_band_cell(hash_words({seed_, stream::kBandCell, row}), j, stride, domain());
  if (d.bit != bit) return std::nullopt;
  return CellProfile{{row, bit}, CellKind::Band, d.t_lo, d.t_hi, d.base_prob};
}

std::vector<CellProfile> SimulatedModule::cells_in_row(std::uint32_t row) const {
  std::vector<CellProfile> cells;
  cells.reserve(band_cells_per_row_ + 4);
  for_each_band_cell(row, [&](const CellProfile& c) { cells.push_back(c); });
  const auto cs = canaries_in_row(row);
  cells.insert(cells.end(), cs.begin(), cs.end());
  return cells;
}

SimulatedModule build_module(const ModuleProfile& profile, std::uint64_t seed) {
  validate(profile);
  SimulatedModule m;
  m.profile_ = profile;
  m.seed_ = seed;
  const TempDomain& dom = profile.temp_domain;
  const std::size_t temps = static_cast<std::size_t>(dom.size());
  const std::uint32_t rows = profile.rows;
  m.temps_ = temps;

  m.canaries_ = plant_canaries(profile, seed);
  m.canary_row_start_.assign(rows + 1, 0);
  for (const CellProfile& c : m.canaries_) ++m.canary_row_start_[c.coord.row + 1];
  for (std::uint32_t r = 0; r < rows; ++r) m.canary_row_start_[r + 1] += m.canary_row_start_[r];

  m.band_cells_per_row_ = profile.band_cells_per_row != 0 ? profile.band_cells_per_row
                                                           : auto_band_cells_per_row(profile);

  // Band targets exclude the canary mass so the total tracks the cubic.
  std::vector<double> canary_mass(temps, 0.0);
  for (const CellProfile& c : m.canaries_) canary_mass[dom.index(c.t_lo)] += c.base_prob;
  std::vector<double> band_target(temps);
  for (int t = dom.lo; t <= dom.hi; ++t) {
    const std::size_t i = dom.index(t);
    band_target[i] = calibration_target(profile, t) - canary_mass[i];
    if (!(band_target[i] > 0.0))
      throw CalibrationError(t, "canary mass exceeds the target BER at " + std::to_string(t) + " C");
  }

  // Pass 1: raw base-probability mass per row and temperature.
  m.row_mass_.assign(static_cast<std::size_t>(rows) * temps, 0.0);
  std::vector<double> global_raw(temps, 0.0);
  std::vector<double> vulnerable_count(temps, 0.0);
  std::vector<double> diff(temps + 1);
  std::vector<double> diff_count(temps + 1);
  double max_base_prob = 0.0;
  for (std::uint32_t r = 0; r < rows; ++r) {
    std::fill(diff.begin(), diff.end(), 0.0);
    std::fill(diff_count.begin(), diff_count.end(), 0.0);
    m.for_each_band_cell(r, [&](const CellProfile& c) {
      diff[dom.index(c.t_lo)] += c.base_prob;
      diff[dom.index(c.t_hi) + 1] -= c.base_prob;
      diff_count[dom.index(c.t_lo)] += 1.0;
      diff_count[dom.index(c.t_hi) + 1] -= 1.0;
      max_base_prob = std::max(max_base_prob, c.base_prob);
    });
    double acc = 0.0;
    double acc_count = 0.0;
    double* out = &m.row_mass_[static_cast<std::size_t>(r) * temps];
    for (std::size_t i = 0; i < temps; ++i) {
      acc += diff[i];
      acc_count += diff_count[i];
      out[i] = acc;
      global_raw[i] += acc;
      vulnerable_count[i] += acc_count;
    }
  }

  m.scale_.resize(temps);
  bool clips = false;
  for (int t = dom.lo; t <= dom.hi; ++t) {
    const std::size_t i = dom.index(t);
    if (band_target[i] > vulnerable_count[i] + 0.5)
      throw CalibrationError(t, "calibration infeasible at " + std::to_string(t) +
                                    " C: target exceeds the number of vulnerable cells");
    if (!(global_raw[i] > 0.0))
      throw CalibrationError(t, "no band cell vulnerable at " + std::to_string(t) + " C");
    m.scale_[i] = band_target[i] / global_raw[i];
    clips = clips || m.scale_[i] * max_base_prob > 1.0;
  }

  if (!clips) {
    for (std::uint32_t r = 0; r < rows; ++r) {
      double* out = &m.row_mass_[static_cast<std::size_t>(r) * temps];
      for (std::size_t i = 0; i < temps; ++i) out[i] *= m.scale_[i];
    }
  } else {
    // Some cells saturate at probability 1: rescale and re-clip until the
    // clipped sums reach the target.
    std::vector<double> clipped(temps);
    auto clipped_pass = [&](bool store_rows) {
      std::fill(clipped.begin(), clipped.end(), 0.0);
      for (std::uint32_t r = 0; r < rows; ++r) {
        double* out = &m.row_mass_[static_cast<std::size_t>(r) * temps];
        if (store_rows) std::fill(out, out + temps, 0.0);
        m.for_each_band_cell(r, [&](const CellProfile& c) {
          for (int t = c.t_lo; t <= c.t_hi; ++t) {
            const std::size_t i = dom.index(t);
            const double p = std::min(1.0, m.scale_[i] * c.base_prob);
            clipped[i] += p;
            if (store_rows) out[i] += p;
          }
        });
      }
    };
    for (int pass = 0; pass < kClipRepairPasses; ++pass) {
      clipped_pass(false);
      for (std::size_t i = 0; i < temps; ++i) m.scale_[i] *= band_target[i] / clipped[i];
    }
    clipped_pass(true);
    int worst_t = dom.lo;
    double worst = 0.0;
    for (int t = dom.lo; t <= dom.hi; ++t) {
      const std::size_t i = dom.index(t);
      const double err = std::abs(clipped[i] - band_target[i]) / band_target[i];
      if (err > worst) {
        worst = err;
        worst_t = t;
      }
    }
    if (worst > kCalibrationTolerance)
      throw CalibrationError(worst_t, "calibration infeasible at " + std::to_string(worst_t) +
                                          " C: clipped probabilities cannot reach the target");
  }

  for (const CellProfile& c : m.canaries_)
    m.row_mass_[static_cast<std::size_t>(c.coord.row) * temps + dom.index(c.t_lo)] += c.base_prob;

  m.total_mass_.assign(temps, 0.0);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < temps; ++i)
      m.total_mass_[i] += m.row_mass_[static_cast<std::size_t>(r) * temps + i];
  return m;
}

double calibration_error(const SimulatedModule& module) {
  double worst = 0.0;
  const TempDomain& dom = module.domain();
  for (int t = dom.lo; t <= dom.hi; ++t) {
    const double target = calibration_target(module.profile(), t);
    worst = std::max(worst, std::abs(module.total_mass(t) - target) / target);
  }
  return worst;
}

}  // namespace spyhammer
