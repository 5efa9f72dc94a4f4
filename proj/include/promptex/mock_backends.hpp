#pragma once

// Deterministic in-process stand-ins for every backend so the whole pipeline
// runs offline. Each mock is a pure function of its inputs and seed.

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "promptex/backends.hpp"
#include "promptex/flavor_catalog.hpp"

namespace promptex {

inline constexpr std::size_t kDefaultMockDimension = 64;

// Knobs of the simulated image model.
struct MockWorld {
  std::size_t dimension = kDefaultMockDimension;
  // Scale of the seeded per-image noise added before normalization.
  double image_noise = 0.35;
  // Responsiveness of flavors absent from the map.
  double default_responsiveness = 1.0;
  // Normalized flavor phrase -> responsiveness in [0, 1].
  std::map<std::string, double> responsiveness;

  double responsiveness_of(std::string_view flavor) const;
};

// Bag-of-tokens embedding: the sum of one pseudorandom unit vector per
// token (seeded by the token's hash), normalized to unit length.
EmbeddingVector mock_embed_text(std::string_view text,
                                std::size_t dimension = kDefaultMockDimension);

// Expansion stand-in. Reads the last line of the context, strips a leading
// control token and appends catalog flavors chosen by a seeded stream.
// Greedy returns one output; beam returns min(num_samples, beam_size);
// temperature returns num_samples, drawing from the top ceil(T * pool)
// flavors of the catalog's ranked pool.
std::vector<std::string> mock_generate(const GenerationRequest& request,
                                       const FlavorCatalog& catalog);

// Image stand-in. Comma segments after the first are looked up in the
// responsiveness map and enter the bag-of-tokens embedding with weight r; a
// segment with r = 0 is dropped before embedding. Seeded noise is added,
// scaled by image_noise / sqrt(d * w) where w is the total rendered weight,
// so more rendered detail leaves less room for the model to improvise. The
// noise seed depends only on the rendered text, so prompts that differ only
// in an r = 0 flavor map to the same embedding.
ImageRecord mock_generate_image(std::string_view prompt, std::uint64_t seed,
                                const MockWorld& world);

// 5 + 2 * cos(image, embedding of "aesthetic anchor"), inside [3, 7].
double mock_aesthetic_score(const EmbeddingVector& image_embedding);

// Prompt-to-query stand-in: drops the last comma segment of the input, or
// returns the input unchanged when it has a single segment.
std::vector<std::string> mock_extract(const GenerationRequest& request);

// Caption stand-in: the first comma segment of the image's prompt.
std::string mock_caption(const ImageRecord& image);

std::string mock_image_id(std::string_view prompt, std::uint64_t seed);

// Marks round(fraction * size) of the catalog's flavors, picked by a seeded
// shuffle, as unresponsive (r = 0); the rest get r = 1.
std::map<std::string, double> sample_responsiveness(const FlavorCatalog& catalog,
                                                    double unresponsive_fraction,
                                                    std::uint64_t seed);

class MockTextEmbedder final : public TextEmbedder {
 public:
  explicit MockTextEmbedder(std::size_t dimension = kDefaultMockDimension)
      : dimension_(dimension) {}
  EmbeddingVector embed_text(std::string_view text) override {
    return mock_embed_text(text, dimension_);
  }

 private:
  std::size_t dimension_;
};

class MockExpansionGenerator final : public TextGenerator {
 public:
  explicit MockExpansionGenerator(FlavorCatalog catalog);
  std::vector<std::string> generate(const GenerationRequest& request) override {
    return mock_generate(request, catalog_);
  }

 private:
  FlavorCatalog catalog_;
};

class MockQueryExtractor final : public TextGenerator {
 public:
  std::vector<std::string> generate(const GenerationRequest& request) override {
    return mock_extract(request);
  }
};

class MockImageBackend final : public ImageGenerator,
                               public ImageEmbedder,
                               public AestheticScorer,
                               public Captioner {
 public:
  explicit MockImageBackend(MockWorld world) : world_(std::move(world)) {}

  ImageRecord generate_image(std::string_view prompt, std::uint64_t seed) override;
  EmbeddingVector embed_image(const ImageRecord& image) override;
  double aesthetic_score(const ImageRecord& image) override;
  std::string caption(const ImageRecord& image) override { return mock_caption(image); }

  const MockWorld& world() const noexcept { return world_; }

 private:
  MockWorld world_;
};

Backends make_mock_backends(MockWorld world, FlavorCatalog catalog);

}  // namespace promptex
