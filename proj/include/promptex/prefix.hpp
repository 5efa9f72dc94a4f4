#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace promptex {

// Control tokens prepended to a query to select an expansion style.
enum class Prefix { ABST, DTL, GRD, SPCT, FLV, HAST, RFT, MSTP, NONE };

std::string_view to_string(Prefix prefix) noexcept;
Prefix parse_prefix(std::string_view token);
// Returns the prefix when `token` is one of the control tokens (NONE is not
// a token and never matches).
std::optional<Prefix> match_prefix_token(std::string_view token) noexcept;

// "<PREFIX> text", or just text for NONE.
std::string apply_prefix(Prefix prefix, std::string_view text);

// Splits a leading control token off `text`.
struct PrefixedText {
  Prefix prefix = Prefix::NONE;
  std::string body;
};
PrefixedText strip_prefix(std::string_view text);

}  // namespace promptex
