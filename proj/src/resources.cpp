#include "resources.hpp"

#include <string>

#include "schemamap/errors.hpp"

namespace schemamap::detail {

std::string_view resource(std::string_view name) {
  const auto& table = resource_table();
  auto it = table.find(name);
  if (it == table.end()) throw Error(errc::kInvalidArgument, "no embedded resource " + std::string(name));
  return it->second;
}

}  // namespace schemamap::detail
