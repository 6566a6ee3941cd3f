#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "spyhammer/errors.hpp"
#include "spyhammer/profile.hpp"
#include "test_support.hpp"

using namespace spyhammer;
using spyhammer::testing::shipped;

TEST_CASE("shipped profiles load and validate") {
  for (int id = 1; id <= 12; ++id) {
    CAPTURE(id);
    const ModuleProfile p = shipped(id);
    CHECK(p.module_id == id);
    CHECK(p.rows == 24576);
    CHECK(p.columns_per_row == 65536);
    CHECK(p.temp_domain == TempDomain{50, 95});
    CHECK(p.ber_scale == 1.0);
    CHECK(p.canary_density == 30.0);
    CHECK(p.canary_flip_prob == doctest::Approx(0.8));
    const Manufacturer expected = id <= 3 ? Manufacturer::A
                                  : id <= 6 ? Manufacturer::B
                                  : id <= 9 ? Manufacturer::C
                                            : Manufacturer::D;
    CHECK(p.manufacturer == expected);
    CHECK(p.mapping.kind == (expected == Manufacturer::B ? MappingKind::XorMfrB
                                                         : MappingKind::Sequential));
    CHECK(p.single_sided_asymmetric ==
          (expected == Manufacturer::A || expected == Manufacturer::D));
    CHECK_NOTHROW(validate(p));
  }
}

TEST_CASE("expected BER follows the published cubics") {
  // Hand-evaluated c3 t^3 + c2 t^2 + c1 t + c0.
  CHECK(expected_ber(shipped(1), 50) == doctest::Approx(1.9625).epsilon(1e-9));
  CHECK(expected_ber(shipped(4), 50) == doctest::Approx(161.25).epsilon(1e-9));
  CHECK(expected_ber(shipped(4), 60) == doctest::Approx(152.96).epsilon(1e-9));
  CHECK(expected_ber(shipped(10), 50) == doctest::Approx(0.36875).epsilon(1e-9));
  CHECK(expected_ber(shipped(8), 95) == doctest::Approx(235.3).epsilon(1e-3));
  CHECK(expected_ber(shipped(7), 50) == doctest::Approx(302.8).epsilon(1e-3));
}

TEST_CASE("expected BER scales with ber_scale and rejects out-of-domain temperatures") {
  const ModuleProfile sib = make_sibling(shipped(2), 1.2);
  CHECK(expected_ber(sib, 70) == doctest::Approx(1.2 * expected_ber(shipped(2), 70)));
  CHECK(sib.ber_cubic == shipped(2).ber_cubic);
  CHECK_THROWS_AS(expected_ber(sib, 49), DomainError);
  CHECK_THROWS_AS(expected_ber(sib, 95.5), DomainError);
}

TEST_CASE("validate rejects broken profiles") {
  ModuleProfile p = shipped(1);
  SUBCASE("negative BER inside the domain") {
    p.ber_cubic = {0.0, 0.0, 0.0, -1.0};
    CHECK_THROWS_AS(validate(p), ConfigError);
  }
  SUBCASE("flip probability outside (0, 1]") {
    p.canary_flip_prob = 0.0;
    CHECK_THROWS_AS(validate(p), ConfigError);
    p.canary_flip_prob = 1.5;
    CHECK_THROWS_AS(validate(p), ConfigError);
  }
  SUBCASE("non-positive scale") {
    p.ber_scale = 0.0;
    CHECK_THROWS_AS(validate(p), ConfigError);
  }
  SUBCASE("mapping too narrow") {
    p.mapping.width = 10;
    CHECK_THROWS_AS(validate(p), ConfigError);
  }
  SUBCASE("inverted domain") {
    p.temp_domain = {95, 50};
    CHECK_THROWS_AS(validate(p), ConfigError);
  }
}

TEST_CASE("profile JSON round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "spyhammer_profile_test";
  std::filesystem::create_directories(dir);
  for (int id : {1, 5, 8, 12}) {
    const ModuleProfile p = make_sibling(shipped(id), 1.7);
    const auto path = dir / "p.json";
    save_profile(p, path);
    CHECK(load_profile(path) == p);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("malformed profile files raise ConfigError") {
  CHECK_THROWS_AS(load_profile("/nonexistent/profile.json"), ConfigError);
  nlohmann::json j = shipped(1);
  j["ber_cubic"] = "not-a-cubic";
  CHECK_THROWS_AS(j.get<ModuleProfile>(), ConfigError);
}
