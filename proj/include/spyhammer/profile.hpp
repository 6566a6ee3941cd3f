#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>

#include <json.hpp>

#include "spyhammer/row_mapping.hpp"

namespace spyhammer {

enum class Manufacturer { A, B, C, D };

std::string_view to_string(Manufacturer m) noexcept;
Manufacturer manufacturer_from_string(std::string_view name);

/// c3*t^3 + c2*t^2 + c1*t + c0, temperature in degrees Celsius.
struct Cubic {
  double c3 = 0.0;
  double c2 = 0.0;
  double c1 = 0.0;
  double c0 = 0.0;

  constexpr double operator()(double t) const noexcept {
    return ((c3 * t + c2) * t + c1) * t + c0;
  }
  constexpr double derivative(double t) const noexcept {
    return (3.0 * c3 * t + 2.0 * c2) * t + c1;
  }
  friend bool operator==(const Cubic&, const Cubic&) = default;
};

/// Inclusive integer temperature grid with 1 C steps.
struct TempDomain {
  int lo = 50;
  int hi = 95;

  constexpr int size() const noexcept { return hi - lo + 1; }
  constexpr bool contains(double t) const noexcept { return t >= lo && t <= hi; }
  constexpr std::size_t index(int t) const noexcept {
    return static_cast<std::size_t>(t - lo);
  }
  friend bool operator==(const TempDomain&, const TempDomain&) = default;
};

inline constexpr int kProfileFormatVersion = 1;

/// Static description of one simulated DRAM module.
struct ModuleProfile {
  int module_id = 1;
  Manufacturer manufacturer = Manufacturer::A;
  std::uint32_t rows = 24576;
  std::uint32_t columns_per_row = 65536;  ///< bits in one 8 KiB row
  RowMapping mapping{};
  Cubic ber_cubic{};                      ///< flips per row vs temperature
  TempDomain temp_domain{};
  bool single_sided_asymmetric = false;
  double ber_scale = 1.0;
  double canary_density = 30.0;   ///< expected canaries per temperature point
  double canary_flip_prob = 0.8;
  /// Band cells per row; 0 picks enough cells to keep the calibration scale
  /// below 1.6 at every temperature (never fewer than 64).
  std::uint32_t band_cells_per_row = 0;

  friend bool operator==(const ModuleProfile&, const ModuleProfile&) = default;
};

/// ber_scale * cubic(t). Throws DomainError outside the temperature domain.
double expected_ber(const ModuleProfile& profile, double temp_c);

/// Throws ConfigError naming the first violated invariant.
void validate(const ModuleProfile& profile);

/// Same cubic and geometry, different inter-module scale. Models a second
/// module of the same part number.
ModuleProfile make_sibling(const ModuleProfile& profile, double ber_scale);

void to_json(nlohmann::json& j, const ModuleProfile& p);
void from_json(const nlohmann::json& j, ModuleProfile& p);

ModuleProfile load_profile(const std::filesystem::path& path);
void save_profile(const ModuleProfile& profile, const std::filesystem::path& path);

}  // namespace spyhammer
