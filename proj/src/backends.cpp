#include "promptex/backends.hpp"

#include <array>

#include "promptex/error.hpp"

namespace promptex {

namespace {

constexpr std::array<std::pair<BackendKind, std::string_view>, 6> kKinds = {{
    {BackendKind::text_gen, "text_gen"},
    {BackendKind::text_embed, "text_embed"},
    {BackendKind::image_gen, "image_gen"},
    {BackendKind::image_embed, "image_embed"},
    {BackendKind::aesthetic, "aesthetic"},
    {BackendKind::caption, "caption"},
}};

}  // namespace

std::string_view to_string(BackendKind kind) noexcept {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "text_gen";
}

BackendKind parse_backend_kind(std::string_view name) {
  for (const auto& [k, n] : kKinds) {
    if (n == name) return k;
  }
  fail(ErrorKind::config, "unknown backend kind '" + std::string(name) + "'");
}

void BackendEndpoint::validate() const {
  const std::string where = "backend " + std::string(to_string(kind)) + ": ";
  if (base_url.empty()) fail(ErrorKind::config, where + "base_url is empty");
  if (timeout_ms <= 0) fail(ErrorKind::config, where + "timeout_ms must be > 0");
  if (retry_limit < 0 || retry_limit > 10) fail(ErrorKind::config, where + "retry_limit must be in [0, 10]");
  if (max_in_flight < 1) fail(ErrorKind::config, where + "max_in_flight must be >= 1");
}

ImageRecord render_and_embed(Backends& backends, std::string_view prompt, std::uint64_t seed) {
  auto image = backends.image_generator->generate_image(prompt, seed);
  if (!image.embedding) image.embedding = backends.image_embedder->embed_image(image);
  if (image.embedding->dimension() != backends.dimension) {
    throw BackendError("embed_image", "embedding dimension " + std::to_string(image.embedding->dimension()) +
                                          " != configured " + std::to_string(backends.dimension));
  }
  return image;
}

}  // namespace promptex
