#pragma once
// Prompt templates and response schemas compiled into the library, keyed by
// their path in the source tree (e.g. "prompts/mapping.system.txt").

#include <map>
#include <string_view>

namespace schemamap::detail {

const std::map<std::string_view, std::string_view>& resource_table();

// Throws Error{InvalidArgument} for an unknown name.
std::string_view resource(std::string_view name);

}  // namespace schemamap::detail
