#include "spyhammer/profile.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "spyhammer/errors.hpp"

namespace spyhammer {

std::string_view to_string(Manufacturer m) noexcept {
  switch (m) {
    case Manufacturer::A: return "A";
    case Manufacturer::B: return "B";
    case Manufacturer::C: return "C";
    case Manufacturer::D: return "D";
  }
  return "?";
}

Manufacturer manufacturer_from_string(std::string_view name) {
  if (name == "A") return Manufacturer::A;
  if (name == "B") return Manufacturer::B;
  if (name == "C") return Manufacturer::C;
  if (name == "D") return Manufacturer::D;
  throw ConfigError("unknown manufacturer '" + std::string(name) + "'");
}

double expected_ber(const ModuleProfile& profile, double temp_c) {
  if (!profile.temp_domain.contains(temp_c))
    throw DomainError("temperature " + std::to_string(temp_c) + " C outside [" +
                      std::to_string(profile.temp_domain.lo) + ", " +
                      std::to_string(profile.temp_domain.hi) + "]");
  return profile.ber_scale * profile.ber_cubic(temp_c);
}

void validate(const ModuleProfile& p) {
  auto fail = [&](const std::string& what) {
    throw ConfigError("profile " + std::to_string(p.module_id) + ": " + what);
  };
  if (p.rows < 3) fail("need at least 3 rows");
  if (p.columns_per_row == 0) fail("columns_per_row must be positive");
  if (p.mapping.width > 32 || p.mapping.address_space() < p.rows)
    fail("row mapping width does not cover the row count");
  if (p.mapping.kind == MappingKind::XorMfrB && p.rows % 16 != 0)
    fail("XorMfrB mapping needs a row count that is a multiple of 16");
  if (p.temp_domain.lo > p.temp_domain.hi) fail("empty temperature domain");
  if (!(p.ber_scale > 0.0) || !std::isfinite(p.ber_scale)) fail("ber_scale must be positive");
  if (!(p.canary_density >= 0.0)) fail("canary_density must be non-negative");
  if (!(p.canary_flip_prob > 0.0 && p.canary_flip_prob <= 1.0))
    fail("canary_flip_prob must lie in (0, 1]");
  if (p.band_cells_per_row > p.columns_per_row)
    fail("more band cells than bits in a row");
  for (int t = p.temp_domain.lo; t <= p.temp_domain.hi; ++t) {
    const double v = p.ber_cubic(t);
    if (!(v > 0.0) || !std::isfinite(v))
      fail("BER cubic is not strictly positive at " + std::to_string(t) + " C");
  }
}

ModuleProfile make_sibling(const ModuleProfile& profile, double ber_scale) {
  ModuleProfile sibling = profile;
  sibling.ber_scale = ber_scale;
  return sibling;
}

void to_json(nlohmann::json& j, const ModuleProfile& p) {
  j = nlohmann::json{
      {"format_version", kProfileFormatVersion},
      {"module_id", p.module_id},
      {"manufacturer", std::string(to_string(p.manufacturer))},
      {"rows", p.rows},
      {"columns_per_row", p.columns_per_row},
      {"mapping", {{"kind", std::string(to_string(p.mapping.kind))}, {"width", p.mapping.width}}},
      {"ber_cubic", {{"c3", p.ber_cubic.c3}, {"c2", p.ber_cubic.c2}, {"c1", p.ber_cubic.c1}, {"c0", p.ber_cubic.c0}}},
      {"temp_domain", {p.temp_domain.lo, p.temp_domain.hi}},
      {"single_sided_asymmetric", p.single_sided_asymmetric},
      {"ber_scale", p.ber_scale},
      {"canary_density", p.canary_density},
      {"canary_flip_prob", p.canary_flip_prob},
      {"band_cells_per_row", p.band_cells_per_row},
  };
}

void from_json(const nlohmann::json& j, ModuleProfile& p) {
  try {
    const int version = j.value("format_version", kProfileFormatVersion);
    if (version != kProfileFormatVersion)
      throw ConfigError("unsupported profile format_version " + std::to_string(version));
    ModuleProfile d;
    d.module_id = j.at("module_id").get<int>();
    d.manufacturer = manufacturer_from_string(j.at("manufacturer").get<std::string>());
    d.rows = j.value("rows", d.rows);
    d.columns_per_row = j.value("columns_per_row", d.columns_per_row);
    if (j.contains("mapping")) {
      const auto& m = j.at("mapping");
      d.mapping.kind = mapping_kind_from_string(m.at("kind").get<std::string>());
      d.mapping.width = m.value("width", address_width_for(d.rows));
    } else {
      d.mapping.width = address_width_for(d.rows);
    }
    const auto& c = j.at("ber_cubic");
    d.ber_cubic = {c.at("c3").get<double>(), c.at("c2").get<double>(),
                   c.at("c1").get<double>(), c.at("c0").get<double>()};
    if (j.contains("temp_domain")) {
      const auto& td = j.at("temp_domain");
      d.temp_domain = {td.at(0).get<int>(), td.at(1).get<int>()};
    }
    d.single_sided_asymmetric = j.value("single_sided_asymmetric", false);
    d.ber_scale = j.value("ber_scale", 1.0);
    d.canary_density = j.value("canary_density", 30.0);
    d.canary_flip_prob = j.value("canary_flip_prob", 0.8);
    d.band_cells_per_row = j.value("band_cells_per_row", 0u);
    p = d;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed profile: ") + e.what());
  }
}

ModuleProfile load_profile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  ModuleProfile p = j.get<ModuleProfile>();
  validate(p);
  return p;
}

void save_profile(const ModuleProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << nlohmann::json(profile).dump(2) << '\n';
}

}  // namespace spyhammer
