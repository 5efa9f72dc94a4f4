#include "promptex/decode.hpp"

#include <cmath>

#include "promptex/error.hpp"

namespace promptex {

std::string_view to_string(DecodeStrategy strategy) noexcept {
  switch (strategy) {
    case DecodeStrategy::temperature: return "temperature";
    case DecodeStrategy::greedy: return "greedy";
    case DecodeStrategy::beam: return "beam";
  }
  return "temperature";
}

DecodeStrategy parse_decode_strategy(std::string_view name) {
  if (name == "temperature") return DecodeStrategy::temperature;
  if (name == "greedy") return DecodeStrategy::greedy;
  if (name == "beam") return DecodeStrategy::beam;
  fail(ErrorKind::invalid_argument, "unknown decode strategy '" + std::string(name) + "'");
}

void DecodeParams::validate() const {
  if (strategy == DecodeStrategy::temperature &&
      !(std::isfinite(temperature) && temperature > 0.0 && temperature <= 1.0)) {
    fail(ErrorKind::invalid_argument,
         "temperature must be in (0, 1], got " + std::to_string(temperature));
  }
  if (strategy == DecodeStrategy::beam && beam_size < 1) {
    fail(ErrorKind::invalid_argument, "beam_size must be >= 1");
  }
}

}  // namespace promptex
