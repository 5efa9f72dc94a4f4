#pragma once

// Image-to-text inversion: a prompt is recovered as a caption followed by the
// catalog flavors whose text embeddings are closest to the image embedding.

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptex/backends.hpp"
#include "promptex/flavor_catalog.hpp"

namespace promptex {

inline constexpr std::size_t kDefaultInversionFlavors = 8;

// Normalized phrase -> category.
using CategoryLexicon = std::map<std::string, FlavorCategory>;

// Two tab-separated columns per line: phrase, category. Blank lines and
// lines starting with '#' are skipped.
CategoryLexicon parse_lexicon(std::istream& in);
CategoryLexicon load_lexicon(const std::string& path);

// Counts, per prompt, the distinct comma-delimited phrases after the first
// segment (the subject) plus any single words of those phrases listed in the
// lexicon. Phrases present in fewer than `min_count` prompts are dropped;
// categories come from the lexicon, unmatched phrases go to `other`.
FlavorCatalog build_flavor_catalog(std::span<const std::string> corpus_prompts,
                                   const CategoryLexicon& lexicon, std::size_t min_count);

struct ScoredFlavor {
  std::string flavor;
  FlavorCategory category = FlavorCategory::other;
  double score = 0.0;

  bool operator==(const ScoredFlavor&) const = default;
};

using FlavorRanking = std::map<FlavorCategory, std::vector<ScoredFlavor>>;

// Text embeddings of every catalog flavor, computed once and reused across
// many images.
class FlavorIndex {
 public:
  FlavorIndex(const FlavorCatalog& catalog, TextEmbedder& embedder);

  FlavorRanking rank(const EmbeddingVector& image_embedding) const;
  std::size_t category_count() const noexcept { return categories_.size(); }

 private:
  struct Item {
    std::string flavor;
    FlavorCategory category;
    EmbeddingVector embedding;
  };
  std::vector<Item> items_;
  std::vector<FlavorCategory> categories_;
};

// Each category sorted by descending cosine score; ties by flavor text.
FlavorRanking rank_flavors(const EmbeddingVector& image_embedding, const FlavorCatalog& catalog,
                           TextEmbedder& embedder);

struct InversionResult {
  std::string image_id;
  std::uint64_t seed = 0;
  std::string caption;
  std::vector<ScoredFlavor> flavors;  // in prompt order
  std::string prompt;                 // caption, then flavors, joined by ", "

  nlohmann::json to_json() const;
  static InversionResult from_json(const nlohmann::json& doc);
};

// Top-1 flavor of every category in category order, then the remaining
// slots filled by global score (descending, ties by flavor text). Commas in
// the caption are replaced by spaces so the prompt splits cleanly on ", ".
InversionResult invert_image(const ImageRecord& image, const FlavorIndex& index,
                             Backends& backends, std::size_t k_flavors = kDefaultInversionFlavors);
InversionResult invert_image(const ImageRecord& image, const FlavorCatalog& catalog,
                             Backends& backends, std::size_t k_flavors = kDefaultInversionFlavors);

}  // namespace promptex
