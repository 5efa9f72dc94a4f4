#include <doctest.h>

#include <string>

#include "promptex/config.hpp"
#include "promptex/error.hpp"
#include "promptex/mock_backends.hpp"

using namespace promptex;

namespace {

ErrorKind kind_of(std::string_view toml) {
  try {
    parse_config(toml);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a config error");
  return ErrorKind::state;
}

std::string message_of(std::string_view toml) {
  try {
    parse_config(toml);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults") {
  const auto c = parse_config("");
  CHECK(c.seed == 0);
  CHECK_FALSE(c.mock);
  CHECK(c.token_limit == 76);
  CHECK(c.rft_threshold == 0.55);
  CHECK(c.hast_threshold == 6.0);
  CHECK(c.n == 4);
  CHECK(c.server.port == 8080);
}

TEST_CASE("unknown keys are named in the error") {
  CHECK(kind_of("sede = 3") == ErrorKind::config);
  CHECK(message_of("sede = 3").find("sede") != std::string::npos);
  CHECK(message_of("[decode]\ntemprature = 0.5\n").find("decode.temprature") != std::string::npos);
  CHECK(message_of("[backends.video]\nurl = \"http://x\"\n").find("video") != std::string::npos);
}

TEST_CASE("type and range errors") {
  CHECK(kind_of("seed = \"seven\"") == ErrorKind::config);
  CHECK(kind_of("token_limit = 0") == ErrorKind::config);
  CHECK(kind_of("[decode]\nstrategy = \"nucleus\"\n") == ErrorKind::config);
  CHECK(kind_of("this is not toml") == ErrorKind::config);
}

TEST_CASE("mock section variants") {
  CHECK(parse_config("mock = true").mock);
  const auto c = parse_config("[mock]\nenabled = true\nimage_noise = 0.1\nunresponsive = [\"8k\"]\n");
  CHECK(c.mock);
  CHECK(c.mock_world.image_noise == 0.1);
  CHECK(c.mock_world.unresponsive == std::vector<std::string>{"8k"});
  const auto world = config_mock_world(c, default_mock_catalog());
  CHECK(world.responsiveness_of("8k") == 0.0);
  CHECK(world.responsiveness_of("art deco") == 1.0);
}

TEST_CASE("shipped configs parse") {
  const auto local = load_config(PROMPTEX_SOURCE_DIR "/data/config.toml");
  CHECK(local.mock);
  CHECK(local.seed == 7);
  CHECK(local.decode.strategy == DecodeStrategy::temperature);
  CHECK(local.mock_world.unresponsive.size() == 3);
  auto backends = make_backends(local);
  CHECK(backends.expander);
  CHECK(backends.captioner);

  const auto remote = load_config(PROMPTEX_SOURCE_DIR "/data/config.remote.toml");
  CHECK_FALSE(remote.mock);
  CHECK(remote.endpoints.size() == 6);
  CHECK(remote.endpoints.at(BackendKind::image_gen).retry_limit == 1);
  CHECK(remote.server.host == "0.0.0.0");
  CHECK_NOTHROW(make_backends(remote));
}

TEST_CASE("a missing endpoint is a config error") {
  auto c = parse_config("[backends.text_gen]\nurl = \"http://127.0.0.1:9001\"\n");
  try {
    make_backends(c);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::config);
  }
  CHECK_THROWS_AS(load_config("/nonexistent/config.toml"), Error);
}
