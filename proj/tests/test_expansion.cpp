#include <doctest.h>

#include <atomic>
#include <mutex>
#include <string>
#include <vector>

#include "promptex/error.hpp"
#include "promptex/expansion.hpp"
#include "promptex/mock_backends.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

using namespace promptex;

namespace {

// Records contexts and forwards to the mock.
class RecordingGenerator final : public TextGenerator {
 public:
  std::vector<std::string> generate(const GenerationRequest& request) override {
    {
      std::lock_guard lock(mutex);
      contexts.push_back(request.context);
      samples.push_back(request.num_samples);
    }
    return mock_generate(request, default_mock_catalog());
  }
  std::mutex mutex;
  std::vector<std::string> contexts;
  std::vector<int> samples;
};

class FixedGenerator final : public TextGenerator {
 public:
  explicit FixedGenerator(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {}
  std::vector<std::string> generate(const GenerationRequest&) override { return outputs_; }

 private:
  std::vector<std::string> outputs_;
};

// Fails for any context containing the marker.
class FlakyGenerator final : public TextGenerator {
 public:
  explicit FlakyGenerator(std::string marker) : marker_(std::move(marker)) {}
  std::vector<std::string> generate(const GenerationRequest& request) override {
    if (request.context.find(marker_) != std::string::npos) throw BackendError("/v1/generate", "injected");
    return mock_generate(request, default_mock_catalog());
  }

 private:
  std::string marker_;
};

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

}  // namespace

TEST_CASE("expand cardinality per decode strategy") {
  RecordingGenerator gen;
  CHECK(expand("a cat", Prefix::NONE, 4, DecodeParams::sampled(1.0, 1), gen).size() == 4);
  CHECK(expand("a cat", Prefix::NONE, 4, DecodeParams::greedy(1), gen).size() == 1);
  CHECK(expand("a cat", Prefix::NONE, 4, DecodeParams::beam(4, 1), gen).size() == 4);
  CHECK(expand("a cat", Prefix::NONE, 6, DecodeParams::beam(4, 1), gen).size() == 4);
  CHECK(gen.samples[1] == 1);
  CHECK_THROWS_AS(expand("  ", Prefix::NONE, 4, DecodeParams::sampled(1.0), gen), Error);
  CHECK_THROWS_AS(expand("a cat", Prefix::NONE, 0, DecodeParams::sampled(1.0), gen), Error);
}

TEST_CASE("expand builds the prefixed context") {
  RecordingGenerator gen;
  expand("hope", Prefix::ABST, 4, DecodeParams::sampled(1.0), gen);
  CHECK(gen.contexts.back() == "ABST hope");
  expand("  hope ", Prefix::NONE, 4, DecodeParams::sampled(1.0), gen);
  CHECK(gen.contexts.back() == "hope");
}

TEST_CASE("expand rejects responses of the wrong size") {
  FixedGenerator three({"a", "b", "c"});
  CHECK_THROWS_AS(expand("q", Prefix::NONE, 4, DecodeParams::sampled(1.0), three), BackendError);
  FixedGenerator none({});
  CHECK_THROWS_AS(expand("q", Prefix::NONE, 1, DecodeParams::greedy(), none), BackendError);
  FixedGenerator blank({"ok", " "});
  CHECK_THROWS_AS(expand("q", Prefix::NONE, 2, DecodeParams::sampled(1.0), blank), BackendError);
  FixedGenerator five({"a", "b", "c", "d", "e"});
  CHECK_THROWS_AS(expand("q", Prefix::NONE, 4, DecodeParams::beam(4), five), BackendError);
}

TEST_CASE("expand is deterministic for a fixed seed") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto a = expand("hope", Prefix::ABST, 4, DecodeParams::sampled(1.0, 5), *backends.expander);
  CHECK(a == expand("hope", Prefix::ABST, 4, DecodeParams::sampled(1.0, 5), *backends.expander));
  for (const auto& p : a) CHECK(p.starts_with("hope"));
}

TEST_CASE("fit token limit") {
  CHECK(fit_token_limit(words(5), 10) == words(5));
  CHECK(fit_token_limit(words(12), 10) == words(10));
  CHECK(fit_token_limit(words(10), 10) == words(10));
  CHECK(fit_token_limit("alpha  beta,   gamma", 2) == "alpha  beta,");
  CHECK_THROWS_AS(fit_token_limit("x", 0), Error);
}

TEST_CASE("fit token limit boundary oracle and idempotence") {
  Rng rng(6);
  for (int t = 0; t < 500; ++t) {
    std::string s;
    std::vector<std::string> tokens;
    const std::size_t n = rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      std::string tok;
      for (std::size_t c = 0, len = 1 + rng.below(6); c < len; ++c) tok += static_cast<char>('a' + rng.below(26));
      if (rng.bernoulli(0.2)) tok += ",";
      tokens.push_back(tok);
      s += tok + std::string(1 + rng.below(3), ' ');
    }
    const std::size_t limit = 1 + rng.below(25);
    const auto fitted = fit_token_limit(s, limit);
    const auto got = text::words(fitted);
    const std::size_t keep = std::min(limit, tokens.size());
    REQUIRE(got.size() == keep);
    for (std::size_t i = 0; i < keep; ++i) CHECK(got[i] == tokens[i]);
    CHECK(fit_token_limit(fitted, limit) == fitted);
    CHECK(token_count(fitted) <= limit);
  }
}

TEST_CASE("next step appends details below the limit") {
  RecordingGenerator gen;
  const auto out = next_step("a brain on a wall", 4, DecodeParams::sampled(1.0, 3), kDefaultTokenLimit, gen);
  CHECK(gen.contexts.back() == "MSTP a brain on a wall");
  REQUIRE(out.size() == 4);
  bool longer = false;
  for (const auto& v : out) {
    CHECK(v.starts_with("a brain on a wall"));
    longer = longer || token_count(v) > token_count("a brain on a wall");
  }
  CHECK(longer);
  CHECK(out == next_step("a brain on a wall", 4, DecodeParams::sampled(1.0, 3), kDefaultTokenLimit, gen));
}

TEST_CASE("next step truncates long inputs first") {
  RecordingGenerator gen;
  const auto input = words(20);
  const auto out = next_step(input, 2, DecodeParams::sampled(1.0, 1), 8, gen);
  CHECK(gen.contexts.back() == "MSTP " + words(8));
  for (const auto& v : out) CHECK(token_count(v) <= 8);
}

TEST_CASE("at the limit, new details replace the last segment") {
  FixedGenerator gen({"a cat, oil painting, art deco"});
  const auto out = next_step("a cat, oil painting", 1, DecodeParams::greedy(), 4, gen);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == "a cat, art deco");
  CHECK(token_count(out[0]) <= 4);

  FixedGenerator grow({"a cat, oil painting, art deco"});
  const auto below = next_step("a cat, oil painting", 1, DecodeParams::greedy(), 10, grow);
  CHECK(below[0] == "a cat, oil painting, art deco");
}

TEST_CASE("tree cardinality") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto decode = DecodeParams::sampled(1.0, 21);
  for (std::size_t n : {1, 2, 3, 4}) {
    for (int t = 0; t <= 2; ++t) {
      const auto tree = expand_tree("a red fox", t, n, decode, *backends.expander);
      std::size_t leaves = 1, total = 0;
      for (int i = 0; i <= t; ++i) {
        leaves *= n;
        total += leaves;
        CHECK(tree.layer(i).size() == leaves);
      }
      CHECK(tree.leaves().size() == leaves);
      CHECK(tree.size() == total);
      CHECK(tree.depth() == t);
      CHECK(tree.complete());
    }
  }
  const auto big = expand_tree("a red fox", 2, 4, decode, *backends.expander);
  CHECK(big.leaves().size() == 64);
  CHECK(big.size() == 4 + 16 + 64);
}

TEST_CASE("tree structure: single parents and layered steps") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto tree = expand_tree("hope", 2, 3, DecodeParams::sampled(1.0, 4), *backends.expander);
  CHECK(tree.root().text == "hope");
  CHECK(tree.root().step == -1);
  CHECK_FALSE(tree.root().parent);
  std::vector<int> parent_count(tree.nodes().size(), 0);
  for (const auto& node : tree.nodes()) {
    for (auto c : node.children) {
      ++parent_count[c];
      CHECK(tree.node(c).parent == node.id);
      CHECK(tree.node(c).step == node.step + 1);
    }
  }
  for (std::size_t i = 1; i < parent_count.size(); ++i) CHECK(parent_count[i] == 1);
  const auto chain = expand_tree("hope", 3, 1, DecodeParams::sampled(1.0, 4), *backends.expander);
  CHECK(chain.size() == 4);
  CHECK(chain.leaves().size() == 1);
}

TEST_CASE("tree is deterministic regardless of parallelism") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  TreeOptions serial;
  serial.max_parallel = 1;
  TreeOptions wide;
  wide.max_parallel = 8;
  const auto a = expand_tree("a lantern", 2, 4, DecodeParams::sampled(0.8, 9), *backends.expander, serial);
  const auto b = expand_tree("a lantern", 2, 4, DecodeParams::sampled(0.8, 9), *backends.expander, wide);
  CHECK(a.to_json() == b.to_json());
  CHECK(ExpansionTree::from_json(a.to_json()).to_json() == a.to_json());
}

TEST_CASE("partial failures keep completed subtrees") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto decode = DecodeParams::sampled(1.0, 2);
  const auto first = expand("a cat", Prefix::NONE, 4, DecodeParams{decode.strategy, decode.temperature,
                                                                    decode.beam_size, node_seed(decode.seed, 0)},
                            *backends.expander);
  FlakyGenerator flaky("MSTP " + first[0]);
  const auto tree = expand_tree("a cat", 1, 4, decode, flaky);
  CHECK_FALSE(tree.complete());
  REQUIRE(tree.diagnostics().size() == 1);
  CHECK(tree.layer(0).size() == 4);
  CHECK(tree.layer(1).size() == 12);
  CHECK(tree.node(tree.layer(0)[0]).error);
  const auto doc = tree.to_json();
  CHECK(doc["complete"] == false);
  CHECK(ExpansionTree::from_json(doc).diagnostics() == tree.diagnostics());

  FlakyGenerator root_fails("a cat");
  const auto empty = expand_tree("a cat", 2, 4, decode, root_fails);
  CHECK(empty.size() == 0);
  CHECK_FALSE(empty.complete());
}

TEST_CASE("greedy tree is a chain") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto tree = expand_tree("a cat", 2, 4, DecodeParams::greedy(), *backends.expander);
  CHECK(tree.size() == 3);
  CHECK(tree.leaves().size() == 1);
}
