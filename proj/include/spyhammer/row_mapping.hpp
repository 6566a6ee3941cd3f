#pragma once

#include <cstdint>
#include <string_view>

namespace spyhammer {

enum class MappingKind { Sequential, XorMfrB };

/// Logical-to-physical row address translation inside the DRAM chip.
///
/// XorMfrB scrambles bits 1 and 2 with bit 3:
///   phy[0] = log[0], phy[1] = log[3] ^ log[1], phy[2] = log[2] ^ log[3],
///   phy[y] = log[y] for y >= 3.
/// The map is an involution, so the inverse is the map itself.
struct RowMapping {
  MappingKind kind = MappingKind::Sequential;
  unsigned width = 15;  ///< row address bits

  std::uint64_t address_space() const noexcept { return std::uint64_t{1} << width; }
  friend bool operator==(const RowMapping&, const RowMapping&) = default;
};

/// Throws DomainError if row >= 2^width.
std::uint32_t map_logical_to_physical(const RowMapping& mapping, std::uint32_t row);
std::uint32_t map_physical_to_logical(const RowMapping& mapping, std::uint32_t row);

/// Smallest width whose address space covers `rows`.
unsigned address_width_for(std::uint32_t rows) noexcept;

std::string_view to_string(MappingKind kind) noexcept;
MappingKind mapping_kind_from_string(std::string_view name);

}  // namespace spyhammer
