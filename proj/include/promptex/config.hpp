#pragma once

// Runtime configuration, read from TOML. Unknown keys are rejected with
// their dotted path so typos fail at startup instead of being ignored.
//
//   seed = 7
//   mock = true
//   dimension = 64
//   token_limit = 76
//   rft_threshold = 0.55
//   hast_threshold = 6.0
//   max_parallel = 4
//
//   [decode]            strategy, temperature, beam_size, n
//   [backends.<kind>]   url, timeout_ms, retry_limit, max_in_flight
//                       (kind: text_gen, text_embed, image_gen, image_embed,
//                       aesthetic, caption)
//   [paths]             session_dir, catalog, lexicon, embedding_cache,
//                       rater_tasks, rater_responses, eval_report
//   [server]            host, port
//   [mock]              enabled, image_noise, unresponsive_fraction,
//                       unresponsive (a bare `mock = true` also works)

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "promptex/backends.hpp"
#include "promptex/decode.hpp"
#include "promptex/flavor_catalog.hpp"
#include "promptex/mock_backends.hpp"

namespace promptex {

struct Config {
  std::uint64_t seed = 0;
  bool mock = false;
  std::size_t dimension = kDefaultMockDimension;
  std::size_t token_limit = 76;
  double rft_threshold = 0.55;
  double hast_threshold = 6.0;  // aesthetic score above which a prompt is HAST
  std::size_t max_parallel = 4;

  DecodeParams decode = DecodeParams::sampled(1.0);
  std::size_t n = 4;

  std::map<BackendKind, BackendEndpoint> endpoints;

  struct Paths {
    std::string session_dir;
    std::string catalog;
    std::string lexicon;
    std::string embedding_cache;
    std::string rater_tasks;
    std::string rater_responses;
    std::string eval_report;
  } paths;

  struct Server {
    std::string host = "127.0.0.1";
    int port = 8080;
  } server;

  struct Mock {
    double image_noise = 0.35;
    double unresponsive_fraction = 0.0;
    std::vector<std::string> unresponsive;
  } mock_world;

  void validate() const;
};

Config parse_config(std::string_view toml_text, std::string_view source = "<config>");
Config load_config(const std::string& path);

// Catalog from paths.catalog when set, otherwise the built-in mock catalog.
FlavorCatalog config_catalog(const Config& config);

MockWorld config_mock_world(const Config& config, const FlavorCatalog& catalog);

// Mock backends in mock mode, otherwise HTTP clients for every configured
// endpoint. Fails with ErrorKind::config when an endpoint is missing.
Backends make_backends(const Config& config);

}  // namespace promptex
