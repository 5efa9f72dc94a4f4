#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "promptex/dataset.hpp"
#include "promptex/error.hpp"
#include "promptex/mock_backends.hpp"
#include "promptex/pipeline.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

using namespace promptex;

namespace {

std::vector<QueryPromptPair> synthetic_pairs(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<QueryPromptPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto q = "query " + std::to_string(i) + " " + std::to_string(rng.below(1000));
    out.push_back(make_query_pair(q, q + ", detail", Mixture::detailed, false));
  }
  return out;
}

// Expected split sizes written out from the percentages.
SplitCounts split_oracle(std::size_t n) {
  const std::size_t val = n * 20 / 100, test = n * 10 / 100, train = n - val - test;
  return {train - train / 2, train / 2, val, test};
}

// Replies with the input plus a word, so it never gets shorter.
class GrowingGenerator final : public TextGenerator {
 public:
  std::vector<std::string> generate(const GenerationRequest& request) override {
    ++calls;
    auto line = request.context.substr(request.context.rfind('\n') + 1);
    line = line.substr(0, line.rfind(" :"));
    return {line + " more"};
  }
  int calls = 0;
};

// Shortens once, then stalls.
class OnceGenerator final : public TextGenerator {
 public:
  std::vector<std::string> generate(const GenerationRequest& request) override {
    auto line = request.context.substr(request.context.rfind('\n') + 1);
    line = line.substr(0, line.rfind(" :"));
    if (!shortened) {
      shortened = true;
      return {line.substr(0, line.rfind(','))};
    }
    return {line + ", again"};
  }
  bool shortened = false;
};

RftScoredPair scored(double score, std::size_t i) {
  RftScoredPair s;
  s.pair = make_query_pair("q" + std::to_string(i), "p" + std::to_string(i), Mixture::detailed, false);
  s.score = score;
  return s;
}

}  // namespace

TEST_CASE("query typing uses word-count buckets") {
  CHECK(classify_query("hope", true).to_string() == "abstract_short");
  CHECK(classify_query("one two three", false).length == LengthBucket::short_length);
  CHECK(classify_query("one two three four", false).length == LengthBucket::medium_length);
  CHECK(classify_query("a b c d e f", false).to_string() == "concrete_medium");
  CHECK(classify_query("one two three four five six seven", false).length == LengthBucket::medium_length);
  CHECK(classify_query("a b c d e f g h", false).length == LengthBucket::long_length);
  CHECK(classify_query("  red, fox!  ", false).length == LengthBucket::short_length);
  CHECK(QueryType::parse("abstract_long") == QueryType{Abstractness::abstract, LengthBucket::long_length});
  CHECK_THROWS_AS(QueryType::parse("abstract_huge"), Error);
}

TEST_CASE("prefix policies") {
  auto pair = make_query_pair("q", "q, x", Mixture::grounded, false);
  CHECK(assign_prefix(pair, PrefixPolicy::full).prefix == Prefix::GRD);
  CHECK(assign_prefix(pair, PrefixPolicy::multi_prefix).prefix == Prefix::DTL);
  CHECK(assign_prefix(pair, PrefixPolicy::mstp_only).prefix == Prefix::NONE);
  CHECK(assign_prefix(pair, PrefixPolicy::none).prefix == Prefix::NONE);
  pair.source = Mixture::specificity;
  CHECK(assign_prefix(pair, PrefixPolicy::full).prefix == Prefix::SPCT);
  CHECK(assign_prefix(pair, PrefixPolicy::multi_prefix).prefix == Prefix::DTL);
  pair.source = Mixture::abstract;
  CHECK(assign_prefix(pair, PrefixPolicy::multi_prefix).prefix == Prefix::ABST);
  pair.source = Mixture::multistep;
  CHECK(assign_prefix(pair, PrefixPolicy::mstp_only).prefix == Prefix::MSTP);
  CHECK(assign_prefix(pair, PrefixPolicy::full).prefix == Prefix::MSTP);
  pair.source = Mixture::unknown;
  CHECK_THROWS_AS(assign_prefix(pair, PrefixPolicy::full), Error);
  CHECK_THROWS_AS(assign_prefix(pair, PrefixPolicy::multi_prefix), Error);
  CHECK(assign_prefix(pair, PrefixPolicy::none).prefix == Prefix::NONE);
}

TEST_CASE("prefixed input text") {
  auto pair = make_query_pair("hope", "hope, oil painting", Mixture::abstract, true);
  pair = assign_prefix(pair, PrefixPolicy::full);
  CHECK(pair.input_text() == "ABST hope");
  pair.prefix = Prefix::NONE;
  CHECK(pair.input_text() == "hope");
}

TEST_CASE("high aesthetics marking") {
  const auto pair = make_query_pair("q", "q, x", Mixture::detailed, false);
  CHECK(mark_high_aesthetics(pair, 6.5).source == Mixture::high_aesthetics);
  CHECK(assign_prefix(mark_high_aesthetics(pair, 6.5), PrefixPolicy::full).prefix == Prefix::HAST);
  CHECK(mark_high_aesthetics(pair, 6.0).source == Mixture::detailed);
}

TEST_CASE("split sizes") {
  CHECK(split_sizes(1000) == SplitCounts{350, 350, 200, 100});
  CHECK(split_sizes(10) == SplitCounts{4, 3, 2, 1});
  for (std::size_t n = 1; n <= 500; ++n) CHECK(split_sizes(n) == split_oracle(n));
}

TEST_CASE("split assignment is exact, disjoint and seeded") {
  auto pairs = synthetic_pairs(1000, 1);
  const auto a = split_dataset(pairs, 42);
  CHECK(a == split_dataset(pairs, 42));
  CHECK(a != split_dataset(pairs, 43));
  apply_splits(pairs, 42);
  CHECK(count_splits(pairs) == SplitCounts{350, 350, 200, 100});
  for (std::size_t i = 0; i < pairs.size(); ++i) CHECK(pairs[i].split == a[i]);

  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    const auto n = 1 + rng.below(300);
    auto sample = synthetic_pairs(n, rng.next_u64());
    apply_splits(sample, rng.next_u64());
    const auto c = count_splits(sample);
    CHECK(c == split_oracle(n));
    CHECK(c.train_base + c.train_rft + c.val + c.test == n);
  }
}

TEST_CASE("prefix dropout schedule") {
  CHECK(prefix_dropout_rate(0, 100) == 0.4);
  CHECK(prefix_dropout_rate(100, 100) == 1.0);
  CHECK(std::abs(prefix_dropout_rate(50, 100) - 0.7) < 1e-12);
  CHECK(std::abs(prefix_dropout_rate(25, 100) - 0.55) < 1e-12);
  CHECK_THROWS_AS(prefix_dropout_rate(0, 0), Error);
  CHECK_THROWS_AS(prefix_dropout_rate(5, 4), Error);
}

TEST_CASE("curriculum retention follows the schedule") {
  auto pairs = synthetic_pairs(1000, 2);
  for (auto& p : pairs) p.prefix = Prefix::DTL;
  const std::size_t T = 4, batch = 100000;
  CurriculumStream stream(pairs, T, batch, 9);
  std::vector<std::size_t> kept(T + 1, 0), seen(T + 1, 0);
  while (auto item = stream.next()) {
    ++seen[item->step];
    if (!item->prefix_dropped) {
      CHECK(item->pair.prefix == Prefix::DTL);
      ++kept[item->step];
    } else {
      CHECK(item->pair.prefix == Prefix::NONE);
    }
  }
  for (std::size_t s = 0; s <= T; ++s) {
    CHECK(seen[s] == batch);
    const double p = 1.0 - prefix_dropout_rate(s, T);
    const double bound = 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(batch)) + 1e-12;
    CHECK(std::abs(static_cast<double>(kept[s]) / static_cast<double>(batch) - p) <= bound);
  }
  CHECK(kept[T] == 0);
}

TEST_CASE("curriculum is reproducible") {
  auto pairs = synthetic_pairs(50, 3);
  for (auto& p : pairs) p.prefix = Prefix::FLV;
  CurriculumStream a(pairs, 10, 7, 5), b(pairs, 10, 7, 5);
  std::size_t n = 0;
  while (auto x = a.next()) {
    auto y = b.next();
    REQUIRE(y);
    CHECK(x->pair == y->pair);
    CHECK(x->step == y->step);
    ++n;
  }
  CHECK(n == a.total_items());
  CHECK_FALSE(b.next());
}

TEST_CASE("rft score weights") {
  const EmbeddingVector image{1, 0};
  CHECK(rft_score(image, image, image) == 1.0);
  // cos(q, I) = 0.5 and cos(p, I) = 1.
  const EmbeddingVector q{0.5, std::sqrt(3.0) / 2.0};
  CHECK(std::abs(rft_score(q, image, image) - 0.7) < 1e-12);
  CHECK(kRftQueryWeight == 0.6);
  CHECK(kRftPromptWeight == 0.4);
  CHECK_THROWS_AS(rft_score(EmbeddingVector{0, 0}, image, image), Error);
}

TEST_CASE("rft filter boundary, order and monotonicity") {
  const std::vector<RftScoredPair> two = {scored(0.70, 0), scored(0.69, 1)};
  const auto kept = rft_filter(two, 0.70);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].pair.query == "q0");
  CHECK(rft_filter(two, -1.0).size() == 2);

  Rng rng(8);
  std::vector<RftScoredPair> many;
  for (std::size_t i = 0; i < 1000; ++i) many.push_back(scored(2.0 * rng.uniform() - 1.0, i));
  std::set<std::string> previous;
  for (double t = -1.0; t <= 1.0; t += 0.05) {
    std::set<std::string> now;
    std::size_t last = 0;
    bool ordered = true;
    for (const auto& s : rft_filter(many, t)) {
      now.insert(s.pair.query);
      const auto idx = std::stoul(s.pair.query.substr(1));
      if (!now.empty() && idx < last) ordered = false;
      last = idx;
    }
    CHECK(ordered);
    if (t > -1.0) CHECK(std::includes(previous.begin(), previous.end(), now.begin(), now.end()));
    previous = now;
  }
}

TEST_CASE("unresponsive flavors lower rft scores and are filtered more") {
  MockWorld world;
  world.responsiveness["vorticism"] = 0.0;
  auto backends = make_mock_backends(world, default_mock_catalog());
  const auto prompts = synth_corpus(400, 12, default_mock_catalog());
  std::vector<RftScoredPair> all;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto segments = text::split_commas(prompts[i]);
    if (segments.size() < 3) continue;
    const auto query = segments[0] + ", " + segments[1];
    all.push_back(score_pair(make_query_pair(query, prompts[i], Mixture::detailed, false), i, backends));
  }
  auto has = [](const RftScoredPair& s) { return s.pair.prompt.find("vorticism") != std::string::npos; };
  std::vector<double> scores;
  double with_sum = 0, without_sum = 0;
  std::size_t with_n = 0, without_n = 0;
  for (const auto& s : all) {
    scores.push_back(s.score);
    (has(s) ? with_sum : without_sum) += s.score;
    (has(s) ? with_n : without_n) += 1;
  }
  REQUIRE(with_n > 20);
  REQUIRE(without_n > 20);
  CHECK(with_sum / static_cast<double>(with_n) < without_sum / static_cast<double>(without_n));

  std::nth_element(scores.begin(), scores.begin() + static_cast<long>(scores.size() / 2), scores.end());
  const double median = scores[scores.size() / 2];
  const auto kept = rft_filter(all, median);
  std::size_t kept_with = 0;
  double kept_mean = 0;
  for (const auto& s : kept) {
    kept_with += has(s);
    kept_mean += s.score;
  }
  kept_mean /= static_cast<double>(kept.size());
  const std::size_t dropped_with = with_n - kept_with;
  CHECK(dropped_with > kept_with);
  double dropped_mean = 0;
  for (const auto& s : all) dropped_mean += s.score;
  dropped_mean = (dropped_mean - kept_mean * static_cast<double>(kept.size())) /
                 static_cast<double>(all.size() - kept.size());
  CHECK(kept_mean > dropped_mean);
}

TEST_CASE("extraction context format") {
  const std::vector<FewShotExample> shots = {{"a cat, oil painting", "a cat"}};
  CHECK(extraction_context(shots, "a dog, watercolor") == "a cat, oil painting : a cat\na dog, watercolor :");
}

TEST_CASE("query chains follow the mock drop rule") {
  MockQueryExtractor extractor;
  const auto fewshot = default_fewshot();
  const auto chain = extract_query_chain("a brain on a wall, poster art by Robert Beatty", fewshot, extractor, 1, 0);
  CHECK(chain.queries == std::vector<std::string>{"a brain on a wall"});
  CHECK_FALSE(chain.truncated);

  const std::string prompt = "s, a, b, c, d";
  for (std::size_t depth = 1; depth <= 6; ++depth) {
    const auto c = extract_query_chain(prompt, fewshot, extractor, depth, 1);
    const std::size_t expected = std::min<std::size_t>(depth, 4);
    REQUIRE(c.queries.size() == expected);
    for (std::size_t i = 0; i < expected; ++i) {
      // Each step drops one segment from the 5-segment prompt; shortest first.
      CHECK(text::split_commas(c.queries[i]).size() == 5 - expected + i);
      if (i > 0) CHECK(text::word_count(c.queries[i - 1]) < text::word_count(c.queries[i]));
    }
    CHECK_FALSE(c.truncated);
    CHECK(chain_sequence(c).back() == prompt);
  }
  CHECK_THROWS_AS(extract_query_chain("x", fewshot, extractor, 0, 0), Error);
  CHECK_THROWS_AS(extract_query_chain(" ", fewshot, extractor, 1, 0), Error);
}

TEST_CASE("stalled extraction truncates after three attempts") {
  GrowingGenerator growing;
  const auto fewshot = default_fewshot();
  const auto c = extract_query_chain("a cat, oil painting", fewshot, growing, 2, 0);
  CHECK(c.queries.empty());
  CHECK(c.truncated);
  CHECK(growing.calls == kExtractionStallLimit);

  OnceGenerator once;
  const auto d = extract_query_chain("a cat, oil painting, 8k", fewshot, once, 3, 0);
  CHECK(d.queries == std::vector<std::string>{"a cat, oil painting"});
  CHECK(d.truncated);
}

TEST_CASE("chain pairs carry the prompt and the query type") {
  QueryChain chain{"s, a, b", {"s", "s, a"}, false};
  const auto pairs = chain_pairs(chain, Mixture::flavor, false);
  REQUIRE(pairs.size() == 2);
  for (const auto& p : pairs) {
    CHECK(p.prompt == "s, a, b");
    CHECK(p.source == Mixture::flavor);
    CHECK(p.query_type == classify_query(p.query, false));
  }
}

TEST_CASE("multistep pairs") {
  const std::vector<std::vector<std::string>> brain = {
      {"a brain on a wall", "a brain on a wall, poster art", "a brain on a wall, poster art, by robert beatty",
       "a brain on a wall, poster art, by robert beatty, highly detailed"}};
  const auto pairs = build_multistep_pairs(brain);
  REQUIRE(pairs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(pairs[i].prefix == Prefix::MSTP);
    CHECK(pairs[i].source == Mixture::multistep);
    CHECK(pairs[i].query == brain[0][i]);
    CHECK(pairs[i].prompt == brain[0][i + 1]);
  }
  const std::vector<std::vector<std::string>> single = {{"only"}};
  CHECK(build_multistep_pairs(single).empty());

  auto doubled = brain;
  doubled.push_back(brain[0]);
  doubled.push_back({"x", "x, y"});
  auto key = [](const std::vector<QueryPromptPair>& ps) {
    std::set<std::pair<std::string, std::string>> s;
    for (const auto& p : ps) s.insert({p.query, p.prompt});
    return s;
  };
  const auto dedup = build_multistep_pairs(doubled);
  CHECK(dedup.size() == 4);
  auto expected = key(pairs);
  expected.insert({"x", "x, y"});
  CHECK(key(dedup) == expected);
}

TEST_CASE("pairs JSONL is sorted and round-trips") {
  auto pairs = synthetic_pairs(30, 4);
  apply_splits(pairs, 1);
  std::ostringstream out;
  write_pairs_jsonl(out, pairs);
  std::istringstream in(out.str());
  auto back = read_pairs_jsonl(in);
  CHECK(back.size() == pairs.size());
  CHECK(std::is_sorted(back.begin(), back.end(),
                       [](const auto& a, const auto& b) { return a.query < b.query; }));
  auto sorted = pairs;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.query < b.query; });
  CHECK(back == sorted);
  const auto doc = pairs[0].to_json();
  for (const char* key : {"prefix", "query", "prompt", "query_type", "source", "split"}) CHECK(doc.contains(key));
}

TEST_CASE("dataset build over 1000 inversions") {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto images = synth_images(1000, 5, default_mock_catalog(), backends);
  const auto inversions = invert_all(images, default_mock_catalog(), backends, 8, 4);
  DatasetOptions options;
  options.seed = 77;
  const auto build = build_dataset(inversions, options, backends);
  CHECK(build.pairs.size() == 1000);
  CHECK(build.chains.size() == 1000);
  CHECK(count_splits(build.pairs) == SplitCounts{350, 350, 200, 100});
  for (const auto& p : build.pairs) {
    CHECK(p.query_type.length == length_bucket(text::word_count(p.query)));
    CHECK(p.query_type.abstractness == (p.source == Mixture::abstract ? Abstractness::abstract : Abstractness::concrete));
    CHECK(p.prefix == mixture_prefix(p.source));
  }

  options.hast_threshold = 5.0;
  const auto lowered = build_dataset(inversions, options, backends);
  std::size_t hast = 0;
  for (const auto& p : lowered.pairs) hast += p.prefix == Prefix::HAST;
  CHECK(hast > 0);

  options.hast_threshold.reset();
  options.multistep = true;
  options.depth = 2;
  const auto deeper = build_dataset(inversions, options, backends);
  std::size_t mstp = 0;
  for (const auto& p : deeper.pairs) mstp += p.prefix == Prefix::MSTP;
  CHECK(mstp > 0);
  CHECK(count_splits(deeper.pairs).train_base + count_splits(deeper.pairs).train_rft +
            count_splits(deeper.pairs).val + count_splits(deeper.pairs).test ==
        deeper.pairs.size());
}
