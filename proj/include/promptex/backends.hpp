#pragma once

// Capability interfaces for the external model services: text generation,
// text embedding, image generation/embedding, aesthetic scoring and image
// captioning. Implementations must be safe to call from several threads.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "promptex/core_metrics.hpp"
#include "promptex/decode.hpp"

namespace promptex {

enum class BackendKind { text_gen, text_embed, image_gen, image_embed, aesthetic, caption };

std::string_view to_string(BackendKind kind) noexcept;
BackendKind parse_backend_kind(std::string_view name);

struct BackendEndpoint {
  BackendKind kind = BackendKind::text_gen;
  std::string base_url;
  int timeout_ms = 30000;
  int retry_limit = 2;
  int max_in_flight = 8;

  void validate() const;
};

struct GenerationRequest {
  std::string context;
  int num_samples = 1;
  DecodeParams decode;
  std::uint64_t seed = 0;
};

struct ImageRecord {
  std::string image_id;
  std::string prompt;
  std::uint64_t seed = 0;
  std::optional<EmbeddingVector> embedding;  // filled lazily

  bool operator==(const ImageRecord&) const = default;
};

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::vector<std::string> generate(const GenerationRequest& request) = 0;
};

class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual EmbeddingVector embed_text(std::string_view text) = 0;
};

class ImageGenerator {
 public:
  virtual ~ImageGenerator() = default;
  virtual ImageRecord generate_image(std::string_view prompt, std::uint64_t seed) = 0;
};

class ImageEmbedder {
 public:
  virtual ~ImageEmbedder() = default;
  virtual EmbeddingVector embed_image(const ImageRecord& image) = 0;
};

class AestheticScorer {
 public:
  virtual ~AestheticScorer() = default;
  virtual double aesthetic_score(const ImageRecord& image) = 0;
};

class Captioner {
 public:
  virtual ~Captioner() = default;
  virtual std::string caption(const ImageRecord& image) = 0;
};

// One handle per capability. `expander` serves prompt expansion and
// `extractor` serves prompt-to-query shortening; with a remote service both
// usually point at the same client.
struct Backends {
  std::shared_ptr<TextGenerator> expander;
  std::shared_ptr<TextGenerator> extractor;
  std::shared_ptr<TextEmbedder> text_embedder;
  std::shared_ptr<ImageGenerator> image_generator;
  std::shared_ptr<ImageEmbedder> image_embedder;
  std::shared_ptr<AestheticScorer> aesthetic;
  std::shared_ptr<Captioner> captioner;
  std::size_t dimension = 64;
};

// Generates the image if needed and returns it with its embedding set.
ImageRecord render_and_embed(Backends& backends, std::string_view prompt, std::uint64_t seed);

}  // namespace promptex
