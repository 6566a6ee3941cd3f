#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "spyhammer/errors.hpp"
#include "spyhammer/module.hpp"
#include "test_support.hpp"

using namespace spyhammer;
using spyhammer::testing::shipped;
using spyhammer::testing::small_profile;

TEST_CASE("every shipped profile calibrates within tolerance") {
  for (int id = 1; id <= 12; ++id) {
    CAPTURE(id);
    const SimulatedModule m = build_module(shipped(id), 11);
    CHECK(calibration_error(m) <= 1e-3);
    for (double s : m.per_temp_scale()) CHECK(s > 0.0);
  }
}

TEST_CASE("calibration holds when summed cell by cell") {
  // Independent of the precomputed row masses: walk every cell.
  for (int id : {1, 4, 10}) {
    CAPTURE(id);
    const ModuleProfile p = small_profile(id);
    const SimulatedModule m = build_module(p, 3);
    const TempDomain& dom = p.temp_domain;
    std::vector<double> band(dom.size(), 0.0);
    std::vector<double> total(dom.size(), 0.0);
    for (std::uint32_t r = 0; r < p.rows; ++r) {
      for (const CellProfile& c : m.cells_in_row(r)) {
        for (int t = dom.lo; t <= dom.hi; ++t) {
          const double e = m.effective_prob(c, t);
          total[dom.index(t)] += e;
          if (c.kind == CellKind::Band) band[dom.index(t)] += e;
        }
      }
    }
    for (int t = dom.lo; t <= dom.hi; ++t) {
      CAPTURE(t);
      const double target = p.rows * p.ber_scale * p.ber_cubic(t);
      CHECK(total[dom.index(t)] == doctest::Approx(target).epsilon(1e-3));
      CHECK(total[dom.index(t)] == doctest::Approx(m.total_mass(t)).epsilon(1e-9));
      CHECK(band[dom.index(t)] < total[dom.index(t)]);
    }
  }
}

TEST_CASE("cell populations respect their shape invariants") {
  const ModuleProfile p = small_profile(4);
  const SimulatedModule m = build_module(p, 5);
  for (std::uint32_t r = 0; r < p.rows; r += 7) {
    std::set<std::uint32_t> bits;
    for (const CellProfile& c : m.cells_in_row(r)) {
      CHECK(c.coord.row == r);
      CHECK(c.coord.bit < p.columns_per_row);
      CHECK(bits.insert(c.coord.bit).second);
      CHECK(c.t_lo >= p.temp_domain.lo);
      CHECK(c.t_hi <= p.temp_domain.hi);
      CHECK(c.base_prob > 0.0);
      CHECK(c.base_prob <= 1.0);
      if (c.kind == CellKind::Band) {
        CHECK(c.t_hi - c.t_lo >= 2);
        CHECK(c.base_prob >= kMinBaseProb);
        CHECK(c.base_prob <= kMaxBaseProb);
      } else {
        CHECK(c.t_lo == c.t_hi);
      }
    }
  }
}

TEST_CASE("canaries are unique, in hammerable rows and cover every temperature") {
  const ModuleProfile p = shipped(2);
  const SimulatedModule m = build_module(p, 9);
  std::set<CellCoord> coords;
  std::map<int, int> per_temp;
  for (const CellProfile& c : m.canaries()) {
    CHECK(c.kind == CellKind::Canary);
    CHECK(c.t_lo == c.t_hi);
    CHECK(c.base_prob == p.canary_flip_prob);
    CHECK(c.coord.row >= 1);
    CHECK(c.coord.row + 1 < p.rows);
    CHECK(coords.insert(c.coord).second);
    ++per_temp[c.t_lo];
  }
  CHECK(per_temp.size() == static_cast<std::size_t>(p.temp_domain.size()));
  double mean = 0.0;
  for (const auto& [t, n] : per_temp) {
    CHECK(n >= 1);
    mean += n;
  }
  mean /= per_temp.size();
  // 46 Poisson(30) draws: the mean sits within a few standard errors of 30.
  CHECK(mean == doctest::Approx(30.0).epsilon(0.1));
  CHECK(std::is_sorted(m.canaries().begin(), m.canaries().end(),
                       [](const CellProfile& a, const CellProfile& b) { return a.coord < b.coord; }));
}

TEST_CASE("zero canary density builds a module without canaries") {
  ModuleProfile p = small_profile(1);
  p.canary_density = 0.0;
  const SimulatedModule m = build_module(p, 1);
  CHECK(m.canaries().empty());
  CHECK(calibration_error(m) <= 1e-3);
}

TEST_CASE("low canary density still plants one canary per temperature") {
  ModuleProfile p = small_profile(1);
  p.canary_density = 0.01;
  const SimulatedModule m = build_module(p, 1);
  std::set<int> temps;
  for (const CellProfile& c : m.canaries()) temps.insert(c.t_lo);
  CHECK(temps.size() == static_cast<std::size_t>(p.temp_domain.size()));
}

TEST_CASE("modules are deterministic in profile and seed") {
  const ModuleProfile p = small_profile(9);
  const SimulatedModule a = build_module(p, 77);
  const SimulatedModule b = build_module(p, 77);
  const SimulatedModule c = build_module(p, 78);
  bool differs = false;
  for (std::uint32_t r = 0; r < p.rows; r += 101) {
    for (int t = 50; t <= 95; t += 9) {
      CHECK(a.row_mass(r, t) == b.row_mass(r, t));
      differs = differs || a.row_mass(r, t) != c.row_mass(r, t);
    }
  }
  CHECK(differs);
  REQUIRE(a.canaries().size() == b.canaries().size());
  for (std::size_t i = 0; i < a.canaries().size(); ++i)
    CHECK(a.canaries()[i].coord == b.canaries()[i].coord);
}

TEST_CASE("cell_at finds exactly the cells of a row") {
  const ModuleProfile p = small_profile(5);
  const SimulatedModule m = build_module(p, 21);
  for (std::uint32_t r : {1u, 17u, 1000u, p.rows - 2}) {
    std::set<std::uint32_t> bits;
    for (const CellProfile& c : m.cells_in_row(r)) {
      const auto found = m.cell_at(r, c.coord.bit);
      REQUIRE(found.has_value());
      CHECK(found->kind == c.kind);
      CHECK(found->t_lo == c.t_lo);
      CHECK(found->t_hi == c.t_hi);
      CHECK(found->base_prob == c.base_prob);
      bits.insert(c.coord.bit);
    }
    for (std::uint32_t bit = 0; bit < p.columns_per_row; bit += 97)
      if (!bits.count(bit)) CHECK_FALSE(m.cell_at(r, bit).has_value());
  }
}

TEST_CASE("auto-sized band populations keep the scale bounded") {
  for (int id : {1, 4, 7, 10}) {
    CAPTURE(id);
    const ModuleProfile p = shipped(id);
    CHECK(auto_band_cells_per_row(p) >= kMinBandCellsPerRow);
    const SimulatedModule m = build_module(small_profile(id), 2);
    for (double s : m.per_temp_scale()) CHECK(s * kMaxBaseProb < 1.0);
  }
}

TEST_CASE("an infeasible band population raises CalibrationError") {
  ModuleProfile p = small_profile(7, 64);
  p.band_cells_per_row = 1;
  CHECK_THROWS_AS(build_module(p, 1), CalibrationError);
}
