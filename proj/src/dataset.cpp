#include "promptex/dataset.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include "promptex/error.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

namespace {

template <typename Enum, std::size_t N>
std::string_view name_of(const std::array<std::pair<Enum, std::string_view>, N>& table, Enum value) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return table.front().second;
}

template <typename Enum, std::size_t N>
Enum parse_name(const std::array<std::pair<Enum, std::string_view>, N>& table, std::string_view name,
                const char* what) {
  for (const auto& [v, n] : table) {
    if (n == name) return v;
  }
  fail(ErrorKind::invalid_argument, std::string("unknown ") + what + " '" + std::string(name) + "'");
}

constexpr std::array<std::pair<Abstractness, std::string_view>, 2> kAbstractness = {{
    {Abstractness::abstract, "abstract"},
    {Abstractness::concrete, "concrete"},
}};

constexpr std::array<std::pair<LengthBucket, std::string_view>, 3> kLength = {{
    {LengthBucket::short_length, "short"},
    {LengthBucket::medium_length, "medium"},
    {LengthBucket::long_length, "long"},
}};

constexpr std::array<std::pair<Mixture, std::string_view>, 9> kMixtures = {{
    {Mixture::abstract, "abstract"},
    {Mixture::detailed, "detailed"},
    {Mixture::grounded, "grounded"},
    {Mixture::specificity, "specificity"},
    {Mixture::flavor, "flavor"},
    {Mixture::high_aesthetics, "high_aesthetics"},
    {Mixture::rft, "rft"},
    {Mixture::multistep, "multistep"},
    {Mixture::unknown, "unknown"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 5> kSplits = {{
    {Split::unassigned, "unassigned"},
    {Split::train_base, "train_base"},
    {Split::train_rft, "train_rft"},
    {Split::val, "val"},
    {Split::test, "test"},
}};

constexpr std::array<std::pair<PrefixPolicy, std::string_view>, 4> kPolicies = {{
    {PrefixPolicy::full, "full"},
    {PrefixPolicy::multi_prefix, "multi_prefix"},
    {PrefixPolicy::mstp_only, "mstp_only"},
    {PrefixPolicy::none, "none"},
}};

}  // namespace

std::string_view to_string(Abstractness value) noexcept { return name_of(kAbstractness, value); }
std::string_view to_string(LengthBucket value) noexcept { return name_of(kLength, value); }
std::string_view to_string(Mixture value) noexcept { return name_of(kMixtures, value); }
std::string_view to_string(Split value) noexcept { return name_of(kSplits, value); }
std::string_view to_string(PrefixPolicy value) noexcept { return name_of(kPolicies, value); }
Mixture parse_mixture(std::string_view name) { return parse_name(kMixtures, name, "source"); }
Split parse_split(std::string_view name) { return parse_name(kSplits, name, "split"); }
PrefixPolicy parse_prefix_policy(std::string_view name) { return parse_name(kPolicies, name, "prefix policy"); }

std::string QueryType::to_string() const {
  return std::string(promptex::to_string(abstractness)) + "_" + std::string(promptex::to_string(length));
}

QueryType QueryType::parse(std::string_view name) {
  const auto underscore = name.find('_');
  if (underscore == std::string_view::npos) {
    fail(ErrorKind::invalid_argument, "query_type must look like abstract_short, got '" + std::string(name) + "'");
  }
  return {parse_name(kAbstractness, name.substr(0, underscore), "abstractness"),
          parse_name(kLength, name.substr(underscore + 1), "length bucket")};
}

LengthBucket length_bucket(std::size_t word_count) noexcept {
  if (word_count < 4) return LengthBucket::short_length;
  if (word_count <= 7) return LengthBucket::medium_length;
  return LengthBucket::long_length;
}

QueryType classify_query(std::string_view query, bool abstract_flag) {
  return {abstract_flag ? Abstractness::abstract : Abstractness::concrete, length_bucket(text::word_count(query))};
}

nlohmann::json QueryPromptPair::to_json() const {
  return {{"prefix", promptex::to_string(prefix)}, {"query", query},
          {"prompt", prompt},                      {"query_type", query_type.to_string()},
          {"source", promptex::to_string(source)}, {"split", promptex::to_string(split)}};
}

QueryPromptPair QueryPromptPair::from_json(const nlohmann::json& doc) {
  QueryPromptPair pair;
  pair.prefix = parse_prefix(doc.value("prefix", std::string("NONE")));
  pair.query = doc.at("query").get<std::string>();
  pair.prompt = doc.at("prompt").get<std::string>();
  pair.query_type = doc.contains("query_type") ? QueryType::parse(doc["query_type"].get<std::string>())
                                               : classify_query(pair.query, false);
  pair.source = parse_mixture(doc.value("source", std::string("unknown")));
  pair.split = parse_split(doc.value("split", std::string("unassigned")));
  require(!pair.query.empty() && !pair.prompt.empty(), ErrorKind::invalid_argument,
          "pair query and prompt must be nonempty");
  return pair;
}

QueryPromptPair make_query_pair(std::string query, std::string prompt, Mixture source, bool abstract_flag) {
  require(!text::trim(query).empty() && !text::trim(prompt).empty(), ErrorKind::invalid_argument,
          "pair query and prompt must be nonempty");
  QueryPromptPair pair;
  pair.query_type = classify_query(query, abstract_flag);
  pair.query = std::move(query);
  pair.prompt = std::move(prompt);
  pair.source = source;
  return pair;
}

std::string extraction_context(std::span<const FewShotExample> fewshot, std::string_view input) {
  std::string context;
  for (const auto& ex : fewshot) {
    context += ex.prompt;
    context += " : ";
    context += ex.query;
    context += '\n';
  }
  context += input;
  context += " :";
  return context;
}

QueryChain extract_query_chain(std::string_view prompt, std::span<const FewShotExample> fewshot,
                               TextGenerator& generator, std::size_t depth, std::uint64_t seed) {
  require(!text::trim(prompt).empty(), ErrorKind::empty_input, "extract_query_chain: empty prompt");
  require(depth >= 1, ErrorKind::invalid_argument, "extract_query_chain: depth must be >= 1");

  QueryChain chain;
  chain.prompt = std::string(text::trim(prompt));
  std::string current = chain.prompt;
  std::vector<std::string> produced;

  for (std::size_t step = 0; step < depth; ++step) {
    std::optional<std::string> accepted;
    bool stabilized = false;
    for (int attempt = 0; attempt < kExtractionStallLimit; ++attempt) {
      GenerationRequest request;
      request.context = extraction_context(fewshot, current);
      request.num_samples = 1;
      request.seed = derive_seed(seed, "extract", step * kExtractionStallLimit + static_cast<std::size_t>(attempt));
      request.decode = attempt == 0 ? DecodeParams::greedy(request.seed) : DecodeParams::sampled(1.0, request.seed);
      const auto outputs = generator.generate(request);
      if (outputs.empty()) throw BackendError("generate", "extraction returned no output");
      std::string candidate(text::trim(outputs.front()));
      if (candidate == current) {
        stabilized = true;
        break;
      }
      if (!candidate.empty() && text::word_count(candidate) < text::word_count(current)) {
        accepted = std::move(candidate);
        break;
      }
    }
    if (stabilized) break;
    if (!accepted) {
      chain.truncated = true;
      break;
    }
    current = *accepted;
    produced.push_back(std::move(*accepted));
  }
  chain.queries.assign(produced.rbegin(), produced.rend());
  return chain;
}

std::vector<QueryPromptPair> chain_pairs(const QueryChain& chain, Mixture source, bool abstract_flag) {
  std::vector<QueryPromptPair> pairs;
  for (const auto& q : chain.queries) pairs.push_back(make_query_pair(q, chain.prompt, source, abstract_flag));
  return pairs;
}

std::vector<std::string> chain_sequence(const QueryChain& chain) {
  auto seq = chain.queries;
  seq.push_back(chain.prompt);
  return seq;
}

Prefix mixture_prefix(Mixture source) {
  switch (source) {
    case Mixture::abstract: return Prefix::ABST;
    case Mixture::detailed: return Prefix::DTL;
    case Mixture::grounded: return Prefix::GRD;
    case Mixture::specificity: return Prefix::SPCT;
    case Mixture::flavor: return Prefix::FLV;
    case Mixture::high_aesthetics: return Prefix::HAST;
    case Mixture::rft: return Prefix::RFT;
    case Mixture::multistep: return Prefix::MSTP;
    case Mixture::unknown: break;
  }
  fail(ErrorKind::invalid_argument, "pair has unknown provenance; cannot choose a prefix");
}

QueryPromptPair assign_prefix(QueryPromptPair pair, PrefixPolicy policy) {
  switch (policy) {
    case PrefixPolicy::full:
      pair.prefix = mixture_prefix(pair.source);
      break;
    case PrefixPolicy::multi_prefix: {
      const auto p = mixture_prefix(pair.source);
      pair.prefix = (p == Prefix::GRD || p == Prefix::SPCT) ? Prefix::DTL : p;
      break;
    }
    case PrefixPolicy::mstp_only:
      pair.prefix = pair.source == Mixture::multistep ? Prefix::MSTP : Prefix::NONE;
      break;
    case PrefixPolicy::none:
      pair.prefix = Prefix::NONE;
      break;
  }
  return pair;
}

QueryPromptPair mark_high_aesthetics(QueryPromptPair pair, double aesthetic_score, double cutoff) {
  if (aesthetic_score > cutoff) pair.source = Mixture::high_aesthetics;
  return pair;
}

SplitCounts split_sizes(std::size_t n) noexcept {
  SplitCounts c;
  c.val = n * 2 / 10;
  c.test = n / 10;
  const std::size_t train = n - c.val - c.test;
  c.train_rft = train / 2;
  c.train_base = train - c.train_rft;
  return c;
}

std::vector<Split> split_dataset(std::span<const QueryPromptPair> pairs, std::uint64_t seed) {
  const auto sizes = split_sizes(pairs.size());
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split_dataset"));
  rng.shuffle(order);

  std::vector<Split> assignment(pairs.size(), Split::unassigned);
  std::size_t pos = 0;
  const auto cut = [&](std::size_t count, Split split) {
    for (std::size_t i = 0; i < count; ++i) assignment[order[pos++]] = split;
  };
  cut(sizes.train_base, Split::train_base);
  cut(sizes.train_rft, Split::train_rft);
  cut(sizes.val, Split::val);
  cut(sizes.test, Split::test);
  return assignment;
}

void apply_splits(std::span<QueryPromptPair> pairs, std::uint64_t seed) {
  const auto assignment = split_dataset(pairs, seed);
  for (std::size_t i = 0; i < pairs.size(); ++i) pairs[i].split = assignment[i];
}

SplitCounts count_splits(std::span<const QueryPromptPair> pairs) noexcept {
  SplitCounts c;
  for (const auto& p : pairs) {
    switch (p.split) {
      case Split::train_base: ++c.train_base; break;
      case Split::train_rft: ++c.train_rft; break;
      case Split::val: ++c.val; break;
      case Split::test: ++c.test; break;
      case Split::unassigned: break;
    }
  }
  return c;
}

double prefix_dropout_rate(std::size_t step, std::size_t total_steps) {
  require(total_steps >= 1, ErrorKind::invalid_argument, "prefix_dropout_rate: total_steps must be >= 1");
  require(step <= total_steps, ErrorKind::invalid_argument, "prefix_dropout_rate: step exceeds total_steps");
  if (step == total_steps) return kFinalPrefixDropout;
  return kInitialPrefixDropout +
         (kFinalPrefixDropout - kInitialPrefixDropout) * static_cast<double>(step) / static_cast<double>(total_steps);
}

CurriculumStream::CurriculumStream(std::vector<QueryPromptPair> pairs, std::size_t total_steps,
                                   std::size_t batch_size, std::uint64_t seed)
    : pairs_(std::move(pairs)), total_steps_(total_steps), batch_size_(batch_size), seed_(seed) {
  require(!pairs_.empty(), ErrorKind::empty_input, "curriculum: no pairs");
  require(total_steps_ >= 1, ErrorKind::invalid_argument, "curriculum: total_steps must be >= 1");
  require(batch_size_ >= 1, ErrorKind::invalid_argument, "curriculum: batch_size must be >= 1");
  order_.resize(pairs_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  Rng rng(derive_seed(seed_, "curriculum_order"));
  rng.shuffle(order_);
}

std::optional<CurriculumItem> CurriculumStream::next() {
  if (position_ >= total_items()) return std::nullopt;
  const std::size_t step = position_ / batch_size_;
  CurriculumItem item;
  item.step = step;
  item.pair = pairs_[order_[position_ % pairs_.size()]];
  Rng coin(derive_seed(seed_, "prefix_dropout", position_));
  const bool keep = coin.uniform() < 1.0 - prefix_dropout_rate(step, total_steps_);
  if (!keep && item.pair.prefix != Prefix::NONE) {
    item.pair.prefix = Prefix::NONE;
    item.prefix_dropped = true;
  }
  ++position_;
  return item;
}

double rft_score(const EmbeddingVector& query_embedding, const EmbeddingVector& prompt_embedding,
                 const EmbeddingVector& image_embedding) {
  return kRftQueryWeight * cosine_similarity(query_embedding, image_embedding) +
         kRftPromptWeight * cosine_similarity(prompt_embedding, image_embedding);
}

nlohmann::json RftScoredPair::to_json() const {
  auto doc = pair.to_json();
  doc["image_id"] = image.image_id;
  doc["image_seed"] = image.seed;
  doc["score"] = score;
  return doc;
}

RftScoredPair score_pair(const QueryPromptPair& pair, std::uint64_t image_seed, Backends& backends) {
  RftScoredPair scored;
  scored.pair = pair;
  scored.image = render_and_embed(backends, pair.prompt, image_seed);
  scored.score = rft_score(backends.text_embedder->embed_text(pair.query),
                           backends.text_embedder->embed_text(pair.prompt), *scored.image.embedding);
  return scored;
}

std::vector<RftScoredPair> rft_filter(std::span<const RftScoredPair> scored, double threshold) {
  std::vector<RftScoredPair> kept;
  for (const auto& s : scored) {
    if (s.score >= threshold) kept.push_back(s);
  }
  return kept;
}

std::vector<QueryPromptPair> build_multistep_pairs(std::span<const std::vector<std::string>> chains) {
  std::vector<QueryPromptPair> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& chain : chains) {
    for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
      if (!seen.emplace(chain[i], chain[i + 1]).second) continue;
      auto pair = make_query_pair(chain[i], chain[i + 1], Mixture::multistep, false);
      pair.prefix = Prefix::MSTP;
      out.push_back(std::move(pair));
    }
  }
  return out;
}

void write_pairs_jsonl(std::ostream& out, std::vector<QueryPromptPair> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const QueryPromptPair& a, const QueryPromptPair& b) {
    return std::tie(a.query, a.prompt, a.prefix, a.split) < std::tie(b.query, b.prompt, b.prefix, b.split);
  });
  for (const auto& p : pairs) out << p.to_json().dump() << '\n';
}

std::vector<QueryPromptPair> read_pairs_jsonl(std::istream& in) {
  std::vector<QueryPromptPair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      pairs.push_back(QueryPromptPair::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, "pairs line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

}  // namespace promptex
