#include "spyhammer/row_mapping.hpp"

#include <string>

#include "spyhammer/errors.hpp"

namespace spyhammer {
namespace {

void check_range(const RowMapping& mapping, std::uint32_t row) {
  if (mapping.width > 32) throw DomainError("row mapping width exceeds 32 bits");
  if (row >= mapping.address_space())
    throw DomainError("row " + std::to_string(row) + " outside " +
                      std::to_string(mapping.width) + "-bit address space");
}

std::uint32_t xor_mfr_b(std::uint32_t row) noexcept {
  const std::uint32_t bit3 = (row >> 3) & 1u;
  // Flip bits 1 and 2 together whenever bit 3 is set.
  return row ^ (bit3 * 0b0110u);
}

}  // namespace

std::uint32_t map_logical_to_physical(const RowMapping& mapping, std::uint32_t row) {
  check_range(mapping, row);
  switch (mapping.kind) {
    case MappingKind::Sequential:
      return row;
    case MappingKind::XorMfrB:
      return xor_mfr_b(row);
  }
  return row;
}

std::uint32_t map_physical_to_logical(const RowMapping& mapping, std::uint32_t row) {
  // Both supported mappings are involutions.
  return map_logical_to_physical(mapping, row);
}

unsigned address_width_for(std::uint32_t rows) noexcept {
  unsigned width = 0;
  while (width < 32 && (std::uint64_t{1} << width) < rows) ++width;
  return width;
}

std::string_view to_string(MappingKind kind) noexcept {
  return kind == MappingKind::Sequential ? "Sequential" : "XorMfrB";
}

MappingKind mapping_kind_from_string(std::string_view name) {
  if (name == "Sequential") return MappingKind::Sequential;
  if (name == "XorMfrB") return MappingKind::XorMfrB;
  throw ConfigError("unknown row mapping '" + std::string(name) + "'");
}

}  // namespace spyhammer
