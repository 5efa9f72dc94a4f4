#include "promptex/mock_backends.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "promptex/error.hpp"
#include "promptex/prefix.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

namespace {

void add_unit_vector(std::vector<double>& acc, std::uint64_t seed, double weight) {
  Rng rng(seed);
  std::vector<double> v(acc.size());
  double norm_sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm_sq += x * x;
  }
  const double scale = weight / std::sqrt(norm_sq);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i] * scale;
}

std::uint64_t token_seed(std::string_view token) { return derive_seed(fnv1a(token), "token"); }

void add_tokens(std::vector<double>& acc, std::string_view text, double weight) {
  for (const auto& token : text::tokenize(text)) add_unit_vector(acc, token_seed(token), weight);
}

EmbeddingVector normalized_or_throw(std::vector<double> acc, const char* what) {
  double norm_sq = 0.0;
  for (double x : acc) norm_sq += x * x;
  if (!(norm_sq > 0.0)) fail(ErrorKind::empty_input, what);
  const double inv = 1.0 / std::sqrt(norm_sq);
  for (double& x : acc) x *= inv;
  return EmbeddingVector(std::move(acc));
}

std::string_view last_line(std::string_view context) {
  auto pos = context.rfind('\n');
  return pos == std::string_view::npos ? context : context.substr(pos + 1);
}

}  // namespace

double MockWorld::responsiveness_of(std::string_view flavor) const {
  auto it = responsiveness.find(text::normalize_phrase(flavor));
  return it == responsiveness.end() ? default_responsiveness : it->second;
}

EmbeddingVector mock_embed_text(std::string_view text, std::size_t dimension) {
  require(!text::trim(text).empty(), ErrorKind::empty_input, "mock_embed_text: empty text");
  require(dimension >= 1, ErrorKind::invalid_argument, "mock_embed_text: dimension must be >= 1");
  std::vector<double> acc(dimension, 0.0);
  add_tokens(acc, text, 1.0);
  return normalized_or_throw(std::move(acc), "mock_embed_text: text has no tokens");
}

std::vector<std::string> mock_generate(const GenerationRequest& request,
                                       const FlavorCatalog& catalog) {
  request.decode.validate();
  if (request.num_samples < 1) throw BackendError("mock/generate", "num_samples must be >= 1");
  if (catalog.empty()) throw BackendError("mock/generate", "flavor catalog is empty");

  const auto [prefix, body] = strip_prefix(last_line(request.context));
  if (body.empty()) throw BackendError("mock/generate", "empty input text");

  std::set<std::string> present;
  for (const auto& segment : text::split_commas(body)) present.insert(text::normalize_phrase(segment));
  std::vector<std::string> available;
  for (const auto& entry : catalog.ranked_pool()) {
    if (!present.contains(entry.flavor)) available.push_back(entry.flavor);
  }

  const std::size_t per_sample = (prefix == Prefix::MSTP || prefix == Prefix::FLV) ? 1 : 2;
  const auto compose = [&](const std::vector<std::string>& chosen) {
    if (prefix == Prefix::FLV) return chosen.empty() ? catalog.ranked_pool().front().flavor : chosen.front();
    if (chosen.empty()) return body;
    return body + ", " + text::join(chosen, ", ");
  };
  const std::size_t take = std::min(per_sample, available.size());

  std::vector<std::string> outputs;
  switch (request.decode.strategy) {
    case DecodeStrategy::greedy: {
      outputs.push_back(compose({available.begin(), available.begin() + static_cast<long>(take)}));
      break;
    }
    case DecodeStrategy::beam: {
      const auto count = std::min(request.num_samples, request.decode.beam_size);
      for (int i = 0; i < count; ++i) {
        std::vector<std::string> chosen;
        for (std::size_t j = 0; j < take; ++j) {
          chosen.push_back(available[(static_cast<std::size_t>(i) * per_sample + j) % available.size()]);
        }
        outputs.push_back(compose(chosen));
      }
      break;
    }
    case DecodeStrategy::temperature: {
      const auto window = std::min(
          available.size(),
          std::max(per_sample, static_cast<std::size_t>(std::ceil(
                                   request.decode.temperature * static_cast<double>(available.size())))));
      std::vector<std::size_t> order(window);
      for (int i = 0; i < request.num_samples; ++i) {
        Rng rng(derive_seed(request.seed, "mock_generate", static_cast<std::uint64_t>(i)));
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<std::string> chosen;
        for (std::size_t j = 0; j < take; ++j) {
          const auto pick = j + static_cast<std::size_t>(rng.below(window - j));
          std::swap(order[j], order[pick]);
          chosen.push_back(available[order[j]]);
        }
        outputs.push_back(compose(chosen));
      }
      break;
    }
  }
  return outputs;
}

std::string mock_image_id(std::string_view prompt, std::uint64_t seed) {
  return "img-" + hex64(mix(fnv1a(prompt), seed));
}

ImageRecord mock_generate_image(std::string_view prompt, std::uint64_t seed,
                                const MockWorld& world) {
  require(!text::trim(prompt).empty(), ErrorKind::empty_input, "mock_generate_image: empty prompt");

  const auto segments = text::split_commas(prompt);
  std::vector<double> acc(world.dimension, 0.0);
  std::vector<std::string> rendered;
  double rendered_weight = 0.0;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const double r = i == 0 ? 1.0 : std::clamp(world.responsiveness_of(segments[i]), 0.0, 1.0);
    if (r == 0.0) continue;
    add_tokens(acc, segments[i], r);
    rendered.push_back(text::normalize_phrase(segments[i]) + (r < 1.0 ? "@" + std::to_string(r) : ""));
    rendered_weight += r;
  }
  const auto key = fnv1a(text::join(rendered, ", "));
  auto base = normalized_or_throw(std::move(acc), "mock_generate_image: prompt has no tokens");

  std::vector<double> values(base.values().begin(), base.values().end());
  if (world.image_noise > 0.0) {
    Rng rng(derive_seed(mix(key, seed), "image_noise"));
    const double scale =
        world.image_noise / std::sqrt(static_cast<double>(world.dimension) * std::max(1.0, rendered_weight));
    for (double& x : values) x += scale * rng.normal();
  }

  ImageRecord record;
  record.image_id = mock_image_id(prompt, seed);
  record.prompt = std::string(prompt);
  record.seed = seed;
  record.embedding = normalized_or_throw(std::move(values), "mock_generate_image: degenerate image");
  return record;
}

double mock_aesthetic_score(const EmbeddingVector& image_embedding) {
  static const auto anchor = mock_embed_text("aesthetic anchor", kDefaultMockDimension);
  const auto& reference = image_embedding.dimension() == anchor.dimension()
                              ? anchor
                              : mock_embed_text("aesthetic anchor", image_embedding.dimension());
  return 5.0 + 2.0 * cosine_similarity(image_embedding, reference);
}

std::vector<std::string> mock_extract(const GenerationRequest& request) {
  auto line = text::trim(last_line(request.context));
  // Extraction contexts end with "<prompt> :".
  if (line.ends_with(":")) line = text::trim(line.substr(0, line.size() - 1));
  if (line.empty()) throw BackendError("mock/extract", "empty input text");
  auto segments = text::split_commas(line);
  if (segments.size() > 1) segments.pop_back();
  return {text::join(segments, ", ")};
}

std::string mock_caption(const ImageRecord& image) {
  auto segments = text::split_commas(image.prompt);
  if (segments.empty()) throw BackendError("mock/caption", "image has no prompt");
  return segments.front();
}

std::map<std::string, double> sample_responsiveness(const FlavorCatalog& catalog,
                                                    double unresponsive_fraction,
                                                    std::uint64_t seed) {
  std::vector<std::string> flavors;
  for (const auto& entry : catalog.ranked_pool()) flavors.push_back(entry.flavor);
  std::sort(flavors.begin(), flavors.end());
  Rng rng(derive_seed(seed, "responsiveness"));
  rng.shuffle(flavors);
  const auto unresponsive = static_cast<std::size_t>(
      std::llround(std::clamp(unresponsive_fraction, 0.0, 1.0) * static_cast<double>(flavors.size())));
  std::map<std::string, double> out;
  for (std::size_t i = 0; i < flavors.size(); ++i) out[flavors[i]] = i < unresponsive ? 0.0 : 1.0;
  return out;
}

MockExpansionGenerator::MockExpansionGenerator(FlavorCatalog catalog) : catalog_(std::move(catalog)) {
  require(!catalog_.empty(), ErrorKind::invalid_argument, "mock expansion needs a nonempty catalog");
}

ImageRecord MockImageBackend::generate_image(std::string_view prompt, std::uint64_t seed) {
  return mock_generate_image(prompt, seed, world_);
}

EmbeddingVector MockImageBackend::embed_image(const ImageRecord& image) {
  if (image.embedding) return *image.embedding;
  if (image.prompt.empty()) throw BackendError("mock/embed_image", "unknown image " + image.image_id);
  return *mock_generate_image(image.prompt, image.seed, world_).embedding;
}

double MockImageBackend::aesthetic_score(const ImageRecord& image) {
  return mock_aesthetic_score(embed_image(image));
}

Backends make_mock_backends(MockWorld world, FlavorCatalog catalog) {
  Backends b;
  b.dimension = world.dimension;
  auto images = std::make_shared<MockImageBackend>(std::move(world));
  b.expander = std::make_shared<MockExpansionGenerator>(std::move(catalog));
  b.extractor = std::make_shared<MockQueryExtractor>();
  b.text_embedder = std::make_shared<MockTextEmbedder>(b.dimension);
  b.image_generator = images;
  b.image_embedder = images;
  b.aesthetic = images;
  b.captioner = images;
  return b;
}

}  // namespace promptex
