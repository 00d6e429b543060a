#include "schemamap/confidence.hpp"

#include "schemamap/errors.hpp"

namespace schemamap {

std::string_view to_string(Confidence c) {
  switch (c) {
    case Confidence::High: return "HIGH";
    case Confidence::Medium: return "MEDIUM";
    case Confidence::Low: return "LOW";
  }
  return "LOW";
}

std::optional<Confidence> parse_confidence(std::string_view text) {
  if (text == "HIGH") return Confidence::High;
  if (text == "MEDIUM") return Confidence::Medium;
  if (text == "LOW") return Confidence::Low;
  return std::nullopt;
}

Confidence aggregate_confidence(std::span<const Confidence> items) {
  if (items.empty()) throw Error(errc::kEmptyInput, "cannot aggregate an empty confidence list");
  // Compare the mean against 1.5 and 0.5 in integers: sum/n >= 3/2 <=> 2*sum >= 3n.
  std::size_t sum = 0;
  for (Confidence c : items) sum += static_cast<std::size_t>(c);
  const std::size_t n = items.size();
  if (2 * sum >= 3 * n) return Confidence::High;
  if (2 * sum >= n) return Confidence::Medium;
  return Confidence::Low;
}

}  // namespace schemamap
