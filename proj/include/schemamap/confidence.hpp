#pragma once

#include <optional>
#include <span>
#include <string_view>

namespace schemamap {

// Self-reported certainty attached to every agent output item. The numeric
// values are the encoding used for averaging.
enum class Confidence { Low = 0, Medium = 1, High = 2 };

std::string_view to_string(Confidence c);
std::optional<Confidence> parse_confidence(std::string_view text);

// Mean of LOW=0 / MEDIUM=1 / HIGH=2: HIGH when the mean is >= 1.5, MEDIUM
// when >= 0.5, LOW otherwise. Throws Error{EmptyInput} on an empty list.
Confidence aggregate_confidence(std::span<const Confidence> items);

}  // namespace schemamap
