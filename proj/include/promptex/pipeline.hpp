#pragma once

// Synthetic inputs for offline runs and the drivers that chain the stages:
// corpus -> catalog -> inversion -> dataset -> re-fine-tune filter -> eval.

#include <cstdint>
#include <span>
#include <optional>
#include <string>
#include <vector>

#include "promptex/backends.hpp"
#include "promptex/dataset.hpp"
#include "promptex/eval.hpp"
#include "promptex/flavor_catalog.hpp"
#include "promptex/interrogator.hpp"

namespace promptex {

// Lexicon matching the built-in mock catalog.
CategoryLexicon default_lexicon();

// "subject, flavor, flavor, ..." prompts. Flavors come from the catalog; some
// prompts also carry generic phrases the lexicon does not know.
std::vector<std::string> synth_corpus(std::size_t count, std::uint64_t seed, const FlavorCatalog& catalog);

// Images rendered from synth_corpus prompts; the prompt field holds the
// hidden source prompt, embeddings are left empty.
std::vector<ImageRecord> synth_images(std::size_t count, std::uint64_t seed, const FlavorCatalog& catalog,
                                      Backends& backends);

// Typed queries cycling through the six abstractness x length types.
std::vector<TypedQuery> synth_queries(std::size_t count, std::uint64_t seed);

std::vector<FewShotExample> default_fewshot();

nlohmann::json image_to_json(const ImageRecord& image);
ImageRecord image_from_json(const nlohmann::json& doc);

std::vector<InversionResult> invert_all(std::span<const ImageRecord> images, const FlavorCatalog& catalog,
                                        Backends& backends, std::size_t k_flavors, std::size_t max_parallel = 4);

inline constexpr double kDefaultHastThreshold = 6.0;

struct DatasetOptions {
  std::size_t depth = 1;
  PrefixPolicy policy = PrefixPolicy::full;
  bool multistep = false;
  // Prompts whose rendered image scores above this get the high-aesthetics
  // mixture (HAST). Unset disables the render.
  std::optional<double> hast_threshold = kDefaultHastThreshold;
  std::uint64_t seed = 0;
  std::size_t max_parallel = 4;
};

struct DatasetBuild {
  std::vector<QueryPromptPair> pairs;  // splits assigned
  std::vector<QueryChain> chains;      // input order
  std::size_t truncated_chains = 0;
  std::size_t empty_chains = 0;  // prompts that yielded no shorter query
};

// Mixture of a prompt; a seeded pick among the base augmentation mixtures.
Mixture assign_mixture(std::string_view prompt, std::uint64_t seed);

DatasetBuild build_dataset(std::span<const InversionResult> inversions, const DatasetOptions& options,
                           Backends& backends);

// Scores every pair (rendering one image per pair) and keeps those at or
// above the threshold, relabelled as re-fine-tune pairs.
struct RftRun {
  std::vector<RftScoredPair> scored;
  std::vector<QueryPromptPair> kept;
};

RftRun run_rft_filter(std::span<const QueryPromptPair> pairs, double threshold, PrefixPolicy policy,
                      std::uint64_t seed, Backends& backends, std::size_t max_parallel = 4);

struct PipelineOptions {
  std::uint64_t seed = 0;
  std::size_t corpus_size = 2000;
  std::size_t min_count = 2;
  std::size_t images = 1000;
  std::size_t k_flavors = 8;
  std::size_t queries = 60;
  double rft_threshold = kDefaultRftThreshold;
  std::size_t max_parallel = 4;
};

// Runs every stage in mock-compatible form and writes the artifacts into
// `out_dir`. Returns the written file names, relative to out_dir.
std::vector<std::string> run_pipeline(const PipelineOptions& options, Backends& backends, const std::string& out_dir);

}  // namespace promptex
