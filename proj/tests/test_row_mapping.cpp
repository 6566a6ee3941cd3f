#include <doctest.h>

#include <cstdint>
#include <vector>

#include "spyhammer/errors.hpp"
#include "spyhammer/row_mapping.hpp"

using namespace spyhammer;

namespace {

// Bit-level transcription of the Mfr. B scrambling, kept independent of the
// XOR-mask implementation.
std::uint32_t oracle_xor_mfr_b(std::uint32_t log) {
  auto bit = [&](unsigned y) { return (log >> y) & 1u; };
  std::uint32_t phy = log & ~0b0111u;
  phy |= bit(0);
  phy |= (bit(3) ^ bit(1)) << 1;
  phy |= (bit(2) ^ bit(3)) << 2;
  return phy;
}

}  // namespace

TEST_CASE("XorMfrB matches the bit formulas over a 16-bit address space") {
  const RowMapping m{MappingKind::XorMfrB, 16};
  std::vector<bool> hit(m.address_space(), false);
  for (std::uint32_t row = 0; row < m.address_space(); ++row) {
    const std::uint32_t phy = map_logical_to_physical(m, row);
    REQUIRE(phy == oracle_xor_mfr_b(row));
    REQUIRE(map_physical_to_logical(m, phy) == row);
    REQUIRE(map_logical_to_physical(m, phy) == row);
    REQUIRE_FALSE(hit[phy]);
    hit[phy] = true;
  }
}

TEST_CASE("XorMfrB examples") {
  const RowMapping m{MappingKind::XorMfrB, 15};
  CHECK(map_logical_to_physical(m, 10) == 12);
  CHECK(map_logical_to_physical(m, 12) == 10);
  CHECK(map_logical_to_physical(m, 0) == 0);
  CHECK(map_logical_to_physical(m, 7) == 7);
  CHECK(map_logical_to_physical(m, 8) == 14);
}

TEST_CASE("Sequential is the identity") {
  const RowMapping m{MappingKind::Sequential, 16};
  for (std::uint32_t row : {0u, 1u, 10u, 4095u, 65535u}) {
    CHECK(map_logical_to_physical(m, row) == row);
    CHECK(map_physical_to_logical(m, row) == row);
  }
}

TEST_CASE("rows outside the address space are rejected") {
  const RowMapping m{MappingKind::XorMfrB, 15};
  CHECK_THROWS_AS(map_logical_to_physical(m, 1u << 15), DomainError);
  CHECK_THROWS_AS(map_physical_to_logical(m, 40000), DomainError);
}

TEST_CASE("address width covers the row count") {
  CHECK(address_width_for(24576) == 15);
  CHECK(address_width_for(32768) == 15);
  CHECK(address_width_for(32769) == 16);
  CHECK(address_width_for(2048) == 11);
  CHECK(address_width_for(1) == 0);
}

TEST_CASE("mapping names round trip") {
  for (MappingKind k : {MappingKind::Sequential, MappingKind::XorMfrB})
    CHECK(mapping_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(mapping_kind_from_string("Interleaved"), ConfigError);
}
