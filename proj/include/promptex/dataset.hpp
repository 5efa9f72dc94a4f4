#pragma once

// Construction of the {query : prompt} dataset: successive query extraction,
// query typing, prefix assignment, splits, the prefix-dropout curriculum,
// multi-step pairs and re-fine-tune filtering.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptex/backends.hpp"
#include "promptex/prefix.hpp"

namespace promptex {

enum class Abstractness { abstract, concrete };
enum class LengthBucket { short_length, medium_length, long_length };

// Provenance: the augmentation mixture a pair was synthesized in.
enum class Mixture { abstract, detailed, grounded, specificity, flavor, high_aesthetics, rft, multistep, unknown };

enum class Split { unassigned, train_base, train_rft, val, test };

enum class PrefixPolicy { full, multi_prefix, mstp_only, none };

std::string_view to_string(Abstractness value) noexcept;
std::string_view to_string(LengthBucket value) noexcept;
std::string_view to_string(Mixture value) noexcept;
std::string_view to_string(Split value) noexcept;
std::string_view to_string(PrefixPolicy value) noexcept;
Mixture parse_mixture(std::string_view name);
Split parse_split(std::string_view name);
PrefixPolicy parse_prefix_policy(std::string_view name);

struct QueryType {
  Abstractness abstractness = Abstractness::concrete;
  LengthBucket length = LengthBucket::short_length;

  // "abstract_short", "concrete_long", ...
  std::string to_string() const;
  static QueryType parse(std::string_view name);

  bool operator==(const QueryType&) const = default;
};

// short: < 4 words, medium: 4-7 words, long: > 7 words.
LengthBucket length_bucket(std::size_t word_count) noexcept;
QueryType classify_query(std::string_view query, bool abstract_flag);

struct QueryPromptPair {
  Prefix prefix = Prefix::NONE;
  std::string query;
  std::string prompt;
  QueryType query_type;
  Mixture source = Mixture::unknown;
  Split split = Split::unassigned;

  // Model input: "<PREFIX> query", or the bare query without a prefix.
  std::string input_text() const { return apply_prefix(prefix, query); }

  nlohmann::json to_json() const;
  static QueryPromptPair from_json(const nlohmann::json& doc);

  bool operator==(const QueryPromptPair&) const = default;
};

QueryPromptPair make_query_pair(std::string query, std::string prompt, Mixture source, bool abstract_flag);

// --- successive query extraction ---------------------------------------

struct FewShotExample {
  std::string prompt;
  std::string query;
};

// "{prompt} : {query}" per example, then "{input} :" on the last line.
std::string extraction_context(std::span<const FewShotExample> fewshot, std::string_view input);

struct QueryChain {
  std::string prompt;
  std::vector<std::string> queries;  // shortest first
  bool truncated = false;            // shortening stalled before `depth`
};

inline constexpr int kExtractionStallLimit = 3;

// Repeatedly asks the generator for a shorter query, starting from the
// prompt. Stops after `depth` accepted queries, when the generator returns
// its input unchanged, or after kExtractionStallLimit consecutive replies
// that are not shorter (the chain is then flagged as truncated). The first
// attempt of every step decodes greedily; retries sample with temperature 1.
QueryChain extract_query_chain(std::string_view prompt, std::span<const FewShotExample> fewshot,
                               TextGenerator& generator, std::size_t depth, std::uint64_t seed);

// Every query of the chain paired with the original prompt.
std::vector<QueryPromptPair> chain_pairs(const QueryChain& chain, Mixture source, bool abstract_flag);

// [q_1, ..., q_n, prompt], the serialized chain form.
std::vector<std::string> chain_sequence(const QueryChain& chain);

// --- prefixes ----------------------------------------------------------

Prefix mixture_prefix(Mixture source);
QueryPromptPair assign_prefix(QueryPromptPair pair, PrefixPolicy policy);

// Marks a pair as high-aesthetics when its image scored above `cutoff`.
QueryPromptPair mark_high_aesthetics(QueryPromptPair pair, double aesthetic_score, double cutoff = 6.0);

// --- splits ------------------------------------------------------------

struct SplitCounts {
  std::size_t train_base = 0;
  std::size_t train_rft = 0;
  std::size_t val = 0;
  std::size_t test = 0;

  bool operator==(const SplitCounts&) const = default;
};

// 70/20/10 train/val/test with val and test rounded down, then train halved
// into base and re-fine-tune parts (the odd item goes to base).
SplitCounts split_sizes(std::size_t n) noexcept;

// Seeded shuffle followed by contiguous cuts; result[i] is the split of pairs[i].
std::vector<Split> split_dataset(std::span<const QueryPromptPair> pairs, std::uint64_t seed);
void apply_splits(std::span<QueryPromptPair> pairs, std::uint64_t seed);
SplitCounts count_splits(std::span<const QueryPromptPair> pairs) noexcept;

// --- prefix dropout curriculum -------------------------------------------

inline constexpr double kInitialPrefixDropout = 0.4;
inline constexpr double kFinalPrefixDropout = 1.0;

// Linear from 0.4 at step 0 to 1.0 at total_steps.
double prefix_dropout_rate(std::size_t step, std::size_t total_steps);

struct CurriculumItem {
  std::size_t step = 0;
  QueryPromptPair pair;  // prefix set to NONE when dropped
  bool prefix_dropped = false;
};

// Lazily emits `batch_size` pairs for each step 0..total_steps. Pairs are
// visited in a seeded order, cycling through the dataset; each keeps its
// prefix with probability 1 - prefix_dropout_rate(step).
class CurriculumStream {
 public:
  CurriculumStream(std::vector<QueryPromptPair> pairs, std::size_t total_steps, std::size_t batch_size,
                   std::uint64_t seed);

  std::optional<CurriculumItem> next();
  std::size_t total_items() const noexcept { return (total_steps_ + 1) * batch_size_; }

 private:
  std::vector<QueryPromptPair> pairs_;
  std::vector<std::size_t> order_;
  std::size_t total_steps_;
  std::size_t batch_size_;
  std::uint64_t seed_;
  std::size_t position_ = 0;
};

// --- re-fine-tune scoring ----------------------------------------------

inline constexpr double kRftQueryWeight = 0.6;
inline constexpr double kRftPromptWeight = 0.4;
inline constexpr double kDefaultRftThreshold = 0.55;

// 0.6 * cos(query, image) + 0.4 * cos(prompt, image)
double rft_score(const EmbeddingVector& query_embedding, const EmbeddingVector& prompt_embedding,
                 const EmbeddingVector& image_embedding);

struct RftScoredPair {
  QueryPromptPair pair;
  ImageRecord image;
  double score = 0.0;

  nlohmann::json to_json() const;
};

RftScoredPair score_pair(const QueryPromptPair& pair, std::uint64_t image_seed, Backends& backends);

// Keeps pairs with score >= threshold, in input order.
std::vector<RftScoredPair> rft_filter(std::span<const RftScoredPair> scored, double threshold);

// --- multi-step pairs ----------------------------------------------------

// For each chain [p_0 .. p_m] (shortest first) emits p_i -> p_{i+1} with the
// MSTP prefix. Repeated (query, prompt) pairs are emitted once.
std::vector<QueryPromptPair> build_multistep_pairs(std::span<const std::vector<std::string>> chains);

// --- persistence -------------------------------------------------------

// Sorted by (query, prompt, prefix, split) so files are reproducible.
void write_pairs_jsonl(std::ostream& out, std::vector<QueryPromptPair> pairs);
std::vector<QueryPromptPair> read_pairs_jsonl(std::istream& in);

}  // namespace promptex
