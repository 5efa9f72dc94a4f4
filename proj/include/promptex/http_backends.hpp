#pragma once

// HTTP+JSON clients for remote model services, plus a server that exposes
// the mocks over the same wire protocol.
//
//   POST /v1/generate    {context, n, temperature, beam_size?, seed} -> {outputs: [string]}
//   POST /v1/embed_text  {text}                                      -> {embedding: [float]}
//   POST /v1/image       {prompt, seed}                              -> {image_id}
//   POST /v1/embed_image {image_id}                                  -> {embedding: [float]}
//   POST /v1/aesthetic   {image_id}                                  -> {score: float}
//   POST /v1/caption     {image_id}                                  -> {caption}
//
// Greedy decoding is sent as temperature 0 without beam_size.

#include <atomic>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "promptex/backends.hpp"
#include "promptex/mock_backends.hpp"

namespace promptex {

nlohmann::json encode_generation_request(const GenerationRequest& request);
GenerationRequest decode_generation_request(const nlohmann::json& body);

// POSTs JSON with a per-request timeout. Transport errors and 5xx replies
// are retried up to retry_limit times; 4xx replies fail immediately. At most
// max_in_flight requests run concurrently.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(BackendEndpoint endpoint);

  nlohmann::json post(const std::string& route, const nlohmann::json& body);

  const BackendEndpoint& endpoint() const noexcept { return endpoint_; }
  std::size_t attempts_made() const noexcept { return attempts_.load(); }

 private:
  BackendEndpoint endpoint_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::size_t> attempts_{0};
};

class HttpTextGenerator final : public TextGenerator {
 public:
  explicit HttpTextGenerator(BackendEndpoint endpoint) : client_(std::move(endpoint)) {}
  std::vector<std::string> generate(const GenerationRequest& request) override;

 private:
  HttpJsonClient client_;
};

class HttpTextEmbedder final : public TextEmbedder {
 public:
  HttpTextEmbedder(BackendEndpoint endpoint, std::size_t dimension)
      : client_(std::move(endpoint)), dimension_(dimension) {}
  EmbeddingVector embed_text(std::string_view text) override;

 private:
  HttpJsonClient client_;
  std::size_t dimension_;
};

class HttpImageGenerator final : public ImageGenerator {
 public:
  explicit HttpImageGenerator(BackendEndpoint endpoint) : client_(std::move(endpoint)) {}
  ImageRecord generate_image(std::string_view prompt, std::uint64_t seed) override;

 private:
  HttpJsonClient client_;
};

class HttpImageEmbedder final : public ImageEmbedder {
 public:
  HttpImageEmbedder(BackendEndpoint endpoint, std::size_t dimension)
      : client_(std::move(endpoint)), dimension_(dimension) {}
  EmbeddingVector embed_image(const ImageRecord& image) override;

 private:
  HttpJsonClient client_;
  std::size_t dimension_;
};

class HttpAestheticScorer final : public AestheticScorer {
 public:
  explicit HttpAestheticScorer(BackendEndpoint endpoint) : client_(std::move(endpoint)) {}
  double aesthetic_score(const ImageRecord& image) override;

 private:
  HttpJsonClient client_;
};

class HttpCaptioner final : public Captioner {
 public:
  explicit HttpCaptioner(BackendEndpoint endpoint) : client_(std::move(endpoint)) {}
  std::string caption(const ImageRecord& image) override;

 private:
  HttpJsonClient client_;
};

// Wraps an embedder with a content-hash keyed cache. When `cache_path` is
// nonempty, entries are loaded from and appended to a JSONL file.
class CachingTextEmbedder final : public TextEmbedder {
 public:
  explicit CachingTextEmbedder(std::shared_ptr<TextEmbedder> inner, std::string cache_path = {});
  EmbeddingVector embed_text(std::string_view text) override;

  std::size_t hits() const noexcept { return hits_.load(); }
  std::size_t misses() const noexcept { return misses_.load(); }

 private:
  std::shared_ptr<TextEmbedder> inner_;
  std::string cache_path_;
  std::mutex mutex_;
  std::unordered_map<std::string, EmbeddingVector> entries_;
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> misses_{0};
};

// Serves the mock backends over the wire protocol; used by tests and for
// running the service against an out-of-process backend.
class MockBackendServer {
 public:
  MockBackendServer(MockWorld world, FlavorCatalog catalog);
  ~MockBackendServer();

  MockBackendServer(const MockBackendServer&) = delete;
  MockBackendServer& operator=(const MockBackendServer&) = delete;

  // Binds to host:port (port 0 picks a free port) and serves on a thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void stop();

  // Makes the next `count` requests answer 503.
  void inject_failures(int count) { failures_to_inject_.store(count); }
  std::size_t requests_served() const noexcept { return requests_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<int> failures_to_inject_{0};
  std::atomic<std::size_t> requests_{0};
};

}  // namespace promptex
