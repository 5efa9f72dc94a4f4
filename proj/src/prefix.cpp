#include "promptex/prefix.hpp"

#include <array>

#include "promptex/error.hpp"
#include "promptex/text.hpp"

namespace promptex {

namespace {

constexpr std::array<std::pair<Prefix, std::string_view>, 9> kNames = {{
    {Prefix::ABST, "ABST"},
    {Prefix::DTL, "DTL"},
    {Prefix::GRD, "GRD"},
    {Prefix::SPCT, "SPCT"},
    {Prefix::FLV, "FLV"},
    {Prefix::HAST, "HAST"},
    {Prefix::RFT, "RFT"},
    {Prefix::MSTP, "MSTP"},
    {Prefix::NONE, "NONE"},
}};

}  // namespace

std::string_view to_string(Prefix prefix) noexcept {
  for (const auto& [p, name] : kNames) {
    if (p == prefix) return name;
  }
  return "NONE";
}

Prefix parse_prefix(std::string_view token) {
  for (const auto& [p, name] : kNames) {
    if (name == token) return p;
  }
  fail(ErrorKind::invalid_argument, "unknown prefix '" + std::string(token) + "'");
}

std::optional<Prefix> match_prefix_token(std::string_view token) noexcept {
  for (const auto& [p, name] : kNames) {
    if (p != Prefix::NONE && name == token) return p;
  }
  return std::nullopt;
}

std::string apply_prefix(Prefix prefix, std::string_view text) {
  if (prefix == Prefix::NONE) return std::string(text);
  std::string out(to_string(prefix));
  out.push_back(' ');
  out += text;
  return out;
}

PrefixedText strip_prefix(std::string_view text) {
  auto trimmed = text::trim(text);
  auto ws = text::words(trimmed);
  if (!ws.empty()) {
    if (auto p = match_prefix_token(ws.front())) {
      return {*p, std::string(text::trim(trimmed.substr(ws.front().size())))};
    }
  }
  return {Prefix::NONE, std::string(trimmed)};
}

}  // namespace promptex
