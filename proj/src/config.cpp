#include "promptex/config.hpp"

#include <set>

#include <toml.hpp>

#include "promptex/error.hpp"
#include "promptex/http_backends.hpp"
#include "promptex/io.hpp"
#include "promptex/rng.hpp"

namespace promptex {

namespace {

[[noreturn]] void bad(const std::string& key, const std::string& what) {
  fail(ErrorKind::config, "config key '" + key + "': " + what);
}

void check_keys(const toml::table& table, const std::string& prefix, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : table) {
    const std::string name(key.str());
    if (!allowed.contains(name)) fail(ErrorKind::config, "unknown config key '" + prefix + name + "'");
  }
}

const toml::table* subtable(const toml::table& table, const char* key, const std::string& prefix) {
  const auto* node = table.get(key);
  if (!node) return nullptr;
  if (!node->is_table()) bad(prefix + key, "expected a table");
  return node->as_table();
}

template <typename T>
void read_int(const toml::table& t, const char* key, const std::string& prefix, T& out) {
  const auto* node = t.get(key);
  if (!node) return;
  auto v = node->value<std::int64_t>();
  if (!v || !node->is_integer()) bad(prefix + key, "expected an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (*v < 0) bad(prefix + key, "must be non-negative");
  }
  out = static_cast<T>(*v);
}

void read_double(const toml::table& t, const char* key, const std::string& prefix, double& out) {
  const auto* node = t.get(key);
  if (!node) return;
  if (!node->is_number()) bad(prefix + key, "expected a number");
  out = *node->value<double>();
}

void read_string(const toml::table& t, const char* key, const std::string& prefix, std::string& out) {
  const auto* node = t.get(key);
  if (!node) return;
  if (!node->is_string()) bad(prefix + key, "expected a string");
  out = *node->value<std::string>();
}

void read_bool(const toml::table& t, const char* key, const std::string& prefix, bool& out) {
  const auto* node = t.get(key);
  if (!node) return;
  if (!node->is_boolean()) bad(prefix + key, "expected true or false");
  out = *node->value<bool>();
}

}  // namespace

void Config::validate() const {
  require(dimension >= 1, ErrorKind::config, "config: dimension must be >= 1");
  require(token_limit >= 1, ErrorKind::config, "config: token_limit must be >= 1");
  require(n >= 1, ErrorKind::config, "config: decode.n must be >= 1");
  require(max_parallel >= 1, ErrorKind::config, "config: max_parallel must be >= 1");
  require(rft_threshold >= -1.0 && rft_threshold <= 1.0, ErrorKind::config,
          "config: rft_threshold must lie in [-1, 1]");
  require(server.port >= 0 && server.port <= 65535, ErrorKind::config, "config: server.port out of range");
  require(mock_world.image_noise >= 0.0, ErrorKind::config, "config: mock.image_noise must be >= 0");
  require(mock_world.unresponsive_fraction >= 0.0 && mock_world.unresponsive_fraction <= 1.0, ErrorKind::config,
          "config: mock.unresponsive_fraction must lie in [0, 1]");
  try {
    decode.validate();
    for (const auto& [_, e] : endpoints) e.validate();
  } catch (const Error& e) {
    fail(ErrorKind::config, std::string("config: ") + e.what());
  }
}

Config parse_config(std::string_view toml_text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    fail(ErrorKind::config, std::string(source) + ": " + std::string(e.description()));
  }

  check_keys(root, "", {"seed", "mock", "dimension", "token_limit", "rft_threshold", "hast_threshold", "max_parallel", "decode",
                        "backends", "paths", "server"});
  Config c;
  read_int(root, "seed", "", c.seed);
  read_int(root, "dimension", "", c.dimension);
  read_int(root, "token_limit", "", c.token_limit);
  read_double(root, "rft_threshold", "", c.rft_threshold);
  read_double(root, "hast_threshold", "", c.hast_threshold);
  read_int(root, "max_parallel", "", c.max_parallel);

  // `mock` is either the boolean switch or the [mock] table.
  if (const auto* node = root.get("mock")) {
    if (node->is_boolean()) {
      c.mock = *node->value<bool>();
    } else if (node->is_table()) {
      const auto& t = *node->as_table();
      check_keys(t, "mock.", {"enabled", "image_noise", "unresponsive_fraction", "unresponsive"});
      read_bool(t, "enabled", "mock.", c.mock);
      read_double(t, "image_noise", "mock.", c.mock_world.image_noise);
      read_double(t, "unresponsive_fraction", "mock.", c.mock_world.unresponsive_fraction);
      if (const auto* list = t.get("unresponsive")) {
        if (!list->is_array()) bad("mock.unresponsive", "expected an array of strings");
        for (const auto& item : *list->as_array()) {
          if (!item.is_string()) bad("mock.unresponsive", "expected an array of strings");
          c.mock_world.unresponsive.push_back(*item.value<std::string>());
        }
      }
    } else {
      bad("mock", "expected true/false or a table");
    }
  }

  if (const auto* t = subtable(root, "decode", "")) {
    check_keys(*t, "decode.", {"strategy", "temperature", "beam_size", "n"});
    std::string strategy(to_string(c.decode.strategy));
    read_string(*t, "strategy", "decode.", strategy);
    try {
      c.decode.strategy = parse_decode_strategy(strategy);
    } catch (const Error& e) {
      bad("decode.strategy", e.what());
    }
    read_double(*t, "temperature", "decode.", c.decode.temperature);
    read_int(*t, "beam_size", "decode.", c.decode.beam_size);
    read_int(*t, "n", "decode.", c.n);
  }

  if (const auto* t = subtable(root, "backends", "")) {
    for (const auto& [key, node] : *t) {
      const std::string kind_name(key.str());
      BackendEndpoint e;
      try {
        e.kind = parse_backend_kind(kind_name);
      } catch (const Error&) {
        fail(ErrorKind::config, "unknown config key 'backends." + kind_name + "'");
      }
      if (!node.is_table()) bad("backends." + kind_name, "expected a table");
      const auto& bt = *node.as_table();
      const auto prefix = "backends." + kind_name + ".";
      check_keys(bt, prefix, {"url", "timeout_ms", "retry_limit", "max_in_flight"});
      read_string(bt, "url", prefix, e.base_url);
      read_int(bt, "timeout_ms", prefix, e.timeout_ms);
      read_int(bt, "retry_limit", prefix, e.retry_limit);
      read_int(bt, "max_in_flight", prefix, e.max_in_flight);
      c.endpoints[e.kind] = e;
    }
  }

  if (const auto* t = subtable(root, "paths", "")) {
    check_keys(*t, "paths.", {"session_dir", "catalog", "lexicon", "embedding_cache", "rater_tasks",
                              "rater_responses", "eval_report"});
    read_string(*t, "session_dir", "paths.", c.paths.session_dir);
    read_string(*t, "catalog", "paths.", c.paths.catalog);
    read_string(*t, "lexicon", "paths.", c.paths.lexicon);
    read_string(*t, "embedding_cache", "paths.", c.paths.embedding_cache);
    read_string(*t, "rater_tasks", "paths.", c.paths.rater_tasks);
    read_string(*t, "rater_responses", "paths.", c.paths.rater_responses);
    read_string(*t, "eval_report", "paths.", c.paths.eval_report);
  }

  if (const auto* t = subtable(root, "server", "")) {
    check_keys(*t, "server.", {"host", "port"});
    read_string(*t, "host", "server.", c.server.host);
    read_int(*t, "port", "server.", c.server.port);
  }

  c.validate();
  return c;
}

Config load_config(const std::string& path) {
  std::string content;
  try {
    content = io::read_file(path);
  } catch (const Error& e) {
    fail(ErrorKind::config, e.what());
  }
  return parse_config(content, path);
}

FlavorCatalog config_catalog(const Config& config) {
  if (config.paths.catalog.empty()) return default_mock_catalog();
  return FlavorCatalog::from_json(io::read_json_file(config.paths.catalog));
}

MockWorld config_mock_world(const Config& config, const FlavorCatalog& catalog) {
  MockWorld world;
  world.dimension = config.dimension;
  world.image_noise = config.mock_world.image_noise;
  if (config.mock_world.unresponsive_fraction > 0.0) {
    world.responsiveness = sample_responsiveness(catalog, config.mock_world.unresponsive_fraction,
                                                 derive_seed(config.seed, "mock_responsiveness"));
  }
  for (const auto& f : config.mock_world.unresponsive) world.responsiveness[f] = 0.0;
  return world;
}

Backends make_backends(const Config& config) {
  if (config.mock) {
    auto catalog = config_catalog(config);
    auto world = config_mock_world(config, catalog);
    auto backends = make_mock_backends(std::move(world), std::move(catalog));
    if (!config.paths.embedding_cache.empty()) {
      backends.text_embedder =
          std::make_shared<CachingTextEmbedder>(backends.text_embedder, config.paths.embedding_cache);
    }
    return backends;
  }
  auto endpoint = [&](BackendKind kind) {
    auto it = config.endpoints.find(kind);
    if (it == config.endpoints.end()) {
      fail(ErrorKind::config, "no endpoint configured for backends." + std::string(to_string(kind)) +
                                  " (set it or run with --mock)");
    }
    return it->second;
  };
  Backends b;
  b.dimension = config.dimension;
  auto generator = std::make_shared<HttpTextGenerator>(endpoint(BackendKind::text_gen));
  b.expander = generator;
  b.extractor = generator;
  b.text_embedder = std::make_shared<HttpTextEmbedder>(endpoint(BackendKind::text_embed), config.dimension);
  if (!config.paths.embedding_cache.empty()) {
    b.text_embedder = std::make_shared<CachingTextEmbedder>(b.text_embedder, config.paths.embedding_cache);
  }
  b.image_generator = std::make_shared<HttpImageGenerator>(endpoint(BackendKind::image_gen));
  b.image_embedder = std::make_shared<HttpImageEmbedder>(endpoint(BackendKind::image_embed), config.dimension);
  b.aesthetic = std::make_shared<HttpAestheticScorer>(endpoint(BackendKind::aesthetic));
  b.captioner = std::make_shared<HttpCaptioner>(endpoint(BackendKind::caption));
  return b;
}

}  // namespace promptex
