#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace promptex {

enum class DecodeStrategy { temperature, greedy, beam };

std::string_view to_string(DecodeStrategy strategy) noexcept;
DecodeStrategy parse_decode_strategy(std::string_view name);

struct DecodeParams {
  DecodeStrategy strategy = DecodeStrategy::temperature;
  double temperature = 1.0;  // in (0, 1]; ignored unless strategy == temperature
  int beam_size = 4;         // ignored unless strategy == beam
  std::uint64_t seed = 0;

  static DecodeParams greedy(std::uint64_t seed = 0) {
    return {DecodeStrategy::greedy, 0.0, 4, seed};
  }
  static DecodeParams beam(int beam_size = 4, std::uint64_t seed = 0) {
    return {DecodeStrategy::beam, 0.0, beam_size, seed};
  }
  // Temperature 0 is greedy decoding.
  static DecodeParams sampled(double temperature, std::uint64_t seed = 0) {
    if (temperature == 0.0) return greedy(seed);
    return {DecodeStrategy::temperature, temperature, 4, seed};
  }

  void validate() const;
};

}  // namespace promptex
