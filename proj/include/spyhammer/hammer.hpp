#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "spyhammer/module.hpp"

namespace spyhammer {

/// Activation count per aggressor used in every characterization run.
inline constexpr std::uint32_t kReferenceHammerCount = 150'000;

enum class PatternKind { Colstripe, Checkered, Rowstripe, Random };

/// Data written to the victim row and its +/-8 physical neighbours.
struct DataPattern {
  PatternKind kind = PatternKind::Colstripe;
  bool complement = false;

  /// Byte stored in the row at physical distance `offset` from the victim.
  /// Random fills are a pure function of (seed, row, byte_index).
  std::uint8_t fill_byte(int offset, std::uint64_t seed = 0, std::uint32_t row = 0,
                         std::uint32_t byte_index = 0) const noexcept;

  /// Position in the tie-break order colstripe, checkered, rowstripe, random,
  /// then the three complements.
  std::size_t order_index() const noexcept;

  friend bool operator==(const DataPattern&, const DataPattern&) = default;
};

inline constexpr std::array<DataPattern, 7> kAllPatterns{{
    {PatternKind::Colstripe, false},
    {PatternKind::Checkered, false},
    {PatternKind::Rowstripe, false},
    {PatternKind::Random, false},
    {PatternKind::Colstripe, true},
    {PatternKind::Checkered, true},
    {PatternKind::Rowstripe, true},
}};

std::string_view to_string(const DataPattern& p) noexcept;

enum class Fidelity { Aggregate, CellAccurate };
enum class NoiseMode { On, Off };

Fidelity fidelity_from_string(std::string_view name);
NoiseMode noise_from_string(std::string_view name);

struct FlipRecord {
  CellCoord coord;
  int temp_c = 0;
  std::uint32_t rep = 0;
  friend bool operator==(const FlipRecord&, const FlipRecord&) = default;
};

/// Contiguous range of logical rows.
struct Region {
  std::uint32_t start_row = 0;
  std::uint32_t row_count = 0;
  friend bool operator==(const Region&, const Region&) = default;
};

struct BerSample {
  int module_id = 0;
  Region region;
  int temp_c = 0;
  std::uint32_t rep = 0;
  double total_flips = 0.0;
  double flips_per_row = 0.0;  ///< total_flips / region.row_count
};

/// A cell that flipped in at least one repetition of a temperature scan.
struct CellTempHit {
  CellCoord coord;
  int temp_c = 0;         ///< lowest scanned temperature that flipped it
  bool multiple = false;  ///< flipped at more than one scanned temperature
};

struct RowFlips {
  std::uint32_t logical_row = 0;
  double flips = 0.0;
};

/// What an attacker can do to the victim module: hammer and read back.
/// Temperature and repetition describe the measurement conditions set by the
/// experiment, not knowledge available to the attack logic.
class HammerTarget {
 public:
  virtual ~HammerTarget() = default;

  virtual std::uint32_t row_count() const = 0;

  /// Hammer one logical row alone; flips observed per logical row.
  virtual std::vector<RowFlips> single_sided_probe(std::uint32_t aggressor, int temp_c,
                                                   std::uint32_t rep) const = 0;

  /// Double-sided hammer around a physical victim row once per listed
  /// repetition; every flipped cell is reported.
  virtual std::vector<FlipRecord> double_sided_cells(std::uint32_t physical_victim, int temp_c,
                                                     std::span<const std::uint32_t> reps) const = 0;

  /// Double-sided hammer of every row in the region; flips counted.
  virtual BerSample region_ber(Region region, int temp_c, std::uint32_t rep) const = 0;

  /// One double-sided hammer of a physical victim, then read back only the
  /// listed bits. Result i is true when bits[i] flipped.
  virtual std::vector<bool> read_cells(std::uint32_t physical_victim, int temp_c, std::uint32_t rep,
                                       std::span<const std::uint32_t> bits) const;

  /// double_sided_cells at every listed temperature, folded per cell.
  virtual std::vector<CellTempHit> scan_cell_temperatures(std::uint32_t physical_victim,
                                                          std::span<const int> temps,
                                                          std::span<const std::uint32_t> reps) const;
};

struct EngineConfig {
  NoiseMode noise = NoiseMode::On;
  Fidelity fidelity = Fidelity::Aggregate;  ///< used by region measurements
  double single_sided_factor = 0.5;
  /// Flip-probability multiplier per pattern, indexed by order_index().
  std::array<double, 7> pattern_sensitivity{1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
  DataPattern pattern{};  ///< pattern used through the HammerTarget interface
  std::uint32_t hammer_count = kReferenceHammerCount;
  unsigned threads = 1;
};

struct DoubleSidedResult {
  double flips = 0.0;
  std::vector<FlipRecord> records;  ///< CellAccurate only
};

struct NeighborFlips {
  std::uint32_t physical_row = 0;
  std::uint32_t logical_row = 0;
  double flips = 0.0;
};

struct SingleSidedResult {
  std::vector<NeighborFlips> neighbors;
  bool missing_neighbor = false;  ///< aggressor sits on the array edge
};

/// Executes simulated RowHammer runs against a SimulatedModule. All
/// randomness derives from (module seed, row, temperature, repetition), so a
/// result never depends on call order or thread count.
///
/// The engine keeps a reference to the module, which must outlive it.
class HammerEngine final : public HammerTarget {
 public:
  explicit HammerEngine(const SimulatedModule& module, EngineConfig config = {});

  const SimulatedModule& module() const noexcept { return module_; }
  const EngineConfig& config() const noexcept { return config_; }

  /// Linear dose response below the reference count, saturated above.
  static double dose_factor(std::uint32_t hammer_count) noexcept;

  /// Expected flips in a physical victim row (band + canary cells).
  double expected_row_flips(std::uint32_t physical_row, int temp_c, std::uint32_t hammer_count,
                            const DataPattern& pattern) const;

  DoubleSidedResult hammer_double_sided(std::uint32_t victim, std::uint32_t hammer_count,
                                        const DataPattern& pattern, int temp_c,
                                        std::uint32_t rep, Fidelity fidelity) const;

  SingleSidedResult hammer_single_sided(std::uint32_t aggressor, std::uint32_t hammer_count,
                                        const DataPattern& pattern, int temp_c,
                                        std::uint32_t rep) const;

  /// One sample per repetition, repetitions first_rep .. first_rep+reps-1.
  std::vector<BerSample> measure_region_ber(Region region, int temp_c, std::uint32_t repetitions,
                                            const DataPattern& pattern,
                                            std::uint32_t first_rep = 0) const;

  BerSample measure_region_once(Region region, int temp_c, std::uint32_t rep,
                                const DataPattern& pattern) const;

  /// Per-row flip counts of one region measurement, in region order.
  std::vector<double> region_row_flips(Region region, int temp_c, std::uint32_t rep,
                                       const DataPattern& pattern) const;

  /// Argmax over the seven patterns of total region flips (one repetition each).
  DataPattern select_worst_case_pattern(Region region, int temp_c) const;

  // HammerTarget
  std::uint32_t row_count() const override { return module_.rows(); }
  std::vector<RowFlips> single_sided_probe(std::uint32_t aggressor, int temp_c,
                                           std::uint32_t rep) const override;
  std::vector<FlipRecord> double_sided_cells(std::uint32_t physical_victim, int temp_c,
                                             std::span<const std::uint32_t> reps) const override;
  BerSample region_ber(Region region, int temp_c, std::uint32_t rep) const override;
  std::vector<bool> read_cells(std::uint32_t physical_victim, int temp_c, std::uint32_t rep,
                               std::span<const std::uint32_t> bits) const override;
  std::vector<CellTempHit> scan_cell_temperatures(std::uint32_t physical_victim,
                                                  std::span<const int> temps,
                                                  std::span<const std::uint32_t> reps) const override;

 private:
  std::uint64_t cell_key(std::uint32_t physical_row, int temp_c, std::uint32_t rep) const;
  bool cell_flipped(std::uint64_t key, const CellProfile& cell, double p) const;
  void check_victim(std::uint32_t physical_victim) const;
  void check_temp(int temp_c) const;
  void check_region(Region region) const;
  double pattern_multiplier(const DataPattern& pattern) const;
  double sample_count(double mean, std::uint64_t key) const;
  double physical_row_flips(std::uint32_t physical_row, double multiplier, int temp_c,
                            std::uint32_t rep, Fidelity fidelity) const;
  void cell_flips(std::uint32_t physical_row, double multiplier, int temp_c,
                  std::span<const std::uint32_t> reps, std::vector<FlipRecord>& out) const;

  const SimulatedModule& module_;
  EngineConfig config_;
};

}  // namespace spyhammer
