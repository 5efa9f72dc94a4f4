#include "promptex/http_backends.hpp"

#include <fstream>

#include <httplib.h>

#include "promptex/error.hpp"
#include "promptex/rng.hpp"

namespace promptex {

using nlohmann::json;

json encode_generation_request(const GenerationRequest& request) {
  json body = {{"context", request.context}, {"n", request.num_samples}, {"seed", request.seed}};
  switch (request.decode.strategy) {
    case DecodeStrategy::greedy:
      body["temperature"] = 0.0;
      break;
    case DecodeStrategy::temperature:
      body["temperature"] = request.decode.temperature;
      break;
    case DecodeStrategy::beam:
      body["temperature"] = 0.0;
      body["beam_size"] = request.decode.beam_size;
      break;
  }
  return body;
}

GenerationRequest decode_generation_request(const json& body) {
  GenerationRequest request;
  request.context = body.at("context").get<std::string>();
  request.num_samples = body.at("n").get<int>();
  request.seed = body.value("seed", std::uint64_t{0});
  const double temperature = body.value("temperature", 1.0);
  if (body.contains("beam_size")) {
    request.decode = DecodeParams::beam(body.at("beam_size").get<int>(), request.seed);
  } else {
    request.decode = DecodeParams::sampled(temperature, request.seed);
  }
  return request;
}

namespace {

EmbeddingVector parse_embedding(const json& reply, std::size_t dimension, const std::string& route) {
  if (!reply.contains("embedding") || !reply["embedding"].is_array()) {
    throw BackendError(route, "reply lacks an embedding array");
  }
  auto values = reply["embedding"].get<std::vector<double>>();
  if (values.size() != dimension) {
    throw BackendError(route, "embedding dimension " + std::to_string(values.size()) +
                                  " != configured " + std::to_string(dimension));
  }
  try {
    return EmbeddingVector(std::move(values));
  } catch (const Error& e) {
    throw BackendError(route, e.what());
  }
}

}  // namespace

HttpJsonClient::HttpJsonClient(BackendEndpoint endpoint)
    : endpoint_(std::move(endpoint)), in_flight_(std::clamp(endpoint_.max_in_flight, 1, 1024)) {
  endpoint_.validate();
}

json HttpJsonClient::post(const std::string& route, const json& body) {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& sem;
    ~Release() { sem.release(); }
  } release{in_flight_};

  const auto payload = body.dump();
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= endpoint_.retry_limit; ++attempt) {
    ++attempts_;
    httplib::Client client(endpoint_.base_url);
    const auto sec = endpoint_.timeout_ms / 1000;
    const auto usec = (endpoint_.timeout_ms % 1000) * 1000;
    client.set_connection_timeout(sec, usec);
    client.set_read_timeout(sec, usec);
    client.set_write_timeout(sec, usec);

    auto res = client.Post(route, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw BackendError(route, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    try {
      return json::parse(res->body);
    } catch (const json::exception& e) {
      throw BackendError(route, std::string("malformed JSON reply: ") + e.what());
    }
  }
  throw BackendError(route, "failed after " + std::to_string(endpoint_.retry_limit + 1) +
                                " attempts (" + last_error + ")");
}

std::vector<std::string> HttpTextGenerator::generate(const GenerationRequest& request) {
  auto reply = client_.post("/v1/generate", encode_generation_request(request));
  if (!reply.contains("outputs") || !reply["outputs"].is_array()) {
    throw BackendError("/v1/generate", "reply lacks an outputs array");
  }
  return reply["outputs"].get<std::vector<std::string>>();
}

EmbeddingVector HttpTextEmbedder::embed_text(std::string_view text) {
  auto reply = client_.post("/v1/embed_text", json{{"text", std::string(text)}});
  return parse_embedding(reply, dimension_, "/v1/embed_text");
}

ImageRecord HttpImageGenerator::generate_image(std::string_view prompt, std::uint64_t seed) {
  auto reply = client_.post("/v1/image", json{{"prompt", std::string(prompt)}, {"seed", seed}});
  if (!reply.contains("image_id")) throw BackendError("/v1/image", "reply lacks image_id");
  ImageRecord record;
  record.image_id = reply["image_id"].get<std::string>();
  record.prompt = std::string(prompt);
  record.seed = seed;
  return record;
}

EmbeddingVector HttpImageEmbedder::embed_image(const ImageRecord& image) {
  auto reply = client_.post("/v1/embed_image", json{{"image_id", image.image_id}});
  return parse_embedding(reply, dimension_, "/v1/embed_image");
}

double HttpAestheticScorer::aesthetic_score(const ImageRecord& image) {
  auto reply = client_.post("/v1/aesthetic", json{{"image_id", image.image_id}});
  if (!reply.contains("score") || !reply["score"].is_number()) {
    throw BackendError("/v1/aesthetic", "reply lacks a numeric score");
  }
  return reply["score"].get<double>();
}

std::string HttpCaptioner::caption(const ImageRecord& image) {
  auto reply = client_.post("/v1/caption", json{{"image_id", image.image_id}});
  if (!reply.contains("caption")) throw BackendError("/v1/caption", "reply lacks caption");
  return reply["caption"].get<std::string>();
}

CachingTextEmbedder::CachingTextEmbedder(std::shared_ptr<TextEmbedder> inner, std::string cache_path)
    : inner_(std::move(inner)), cache_path_(std::move(cache_path)) {
  if (cache_path_.empty()) return;
  std::ifstream in(cache_path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto entry = json::parse(line);
    entries_.emplace(entry.at("text").get<std::string>(),
                     EmbeddingVector(entry.at("embedding").get<std::vector<double>>()));
  }
}

EmbeddingVector CachingTextEmbedder::embed_text(std::string_view text) {
  const std::string key(text);
  {
    std::lock_guard lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      ++hits_;
      return it->second;
    }
  }
  ++misses_;
  auto embedding = inner_->embed_text(text);
  std::lock_guard lock(mutex_);
  auto [it, inserted] = entries_.emplace(key, embedding);
  if (inserted && !cache_path_.empty()) {
    std::ofstream out(cache_path_, std::ios::app);
    json entry = {{"key", hex64(fnv1a(key))},
                  {"text", key},
                  {"embedding", std::vector<double>(embedding.values().begin(), embedding.values().end())}};
    out << entry.dump() << '\n';
  }
  return it->second;
}

struct MockBackendServer::Impl {
  MockWorld world;
  FlavorCatalog catalog;
  httplib::Server server;
  std::thread thread;
  std::mutex registry_mutex;
  std::unordered_map<std::string, std::pair<std::string, std::uint64_t>> registry;

  ImageRecord lookup(const std::string& image_id) {
    std::lock_guard lock(registry_mutex);
    auto it = registry.find(image_id);
    if (it == registry.end()) throw BackendError("mock-server", "unknown image_id " + image_id);
    ImageRecord record;
    record.image_id = image_id;
    record.prompt = it->second.first;
    record.seed = it->second.second;
    return record;
  }
};

MockBackendServer::MockBackendServer(MockWorld world, FlavorCatalog catalog)
    : impl_(std::make_unique<Impl>()) {
  impl_->world = std::move(world);
  impl_->catalog = std::move(catalog);
  auto* impl = impl_.get();

  const auto route = [this, impl](const std::string& path, auto handler) {
    impl->server.Post(path, [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      int pending = failures_to_inject_.load();
      while (pending > 0 && !failures_to_inject_.compare_exchange_weak(pending, pending - 1)) {
      }
      if (pending > 0) {
        res.status = 503;
        res.set_content(R"({"error":"injected failure"})", "application/json");
        return;
      }
      try {
        const auto body = json::parse(req.body);
        res.set_content(handler(body).dump(), "application/json");
      } catch (const std::exception& e) {
        res.status = 400;
        res.set_content(json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  };

  route("/v1/generate", [impl](const json& body) {
    return json{{"outputs", mock_generate(decode_generation_request(body), impl->catalog)}};
  });
  route("/v1/embed_text", [impl](const json& body) {
    const auto e = mock_embed_text(body.at("text").get<std::string>(), impl->world.dimension);
    return json{{"embedding", std::vector<double>(e.values().begin(), e.values().end())}};
  });
  route("/v1/image", [impl](const json& body) {
    const auto prompt = body.at("prompt").get<std::string>();
    const auto seed = body.at("seed").get<std::uint64_t>();
    const auto id = mock_image_id(prompt, seed);
    std::lock_guard lock(impl->registry_mutex);
    impl->registry.emplace(id, std::make_pair(prompt, seed));
    return json{{"image_id", id}};
  });
  route("/v1/embed_image", [impl](const json& body) {
    const auto record = impl->lookup(body.at("image_id").get<std::string>());
    const auto e = *mock_generate_image(record.prompt, record.seed, impl->world).embedding;
    return json{{"embedding", std::vector<double>(e.values().begin(), e.values().end())}};
  });
  route("/v1/aesthetic", [impl](const json& body) {
    const auto record = impl->lookup(body.at("image_id").get<std::string>());
    const auto e = *mock_generate_image(record.prompt, record.seed, impl->world).embedding;
    return json{{"score", mock_aesthetic_score(e)}};
  });
  route("/v1/caption", [impl](const json& body) {
    return json{{"caption", mock_caption(impl->lookup(body.at("image_id").get<std::string>()))}};
  });
}

MockBackendServer::~MockBackendServer() { stop(); }

int MockBackendServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) fail(ErrorKind::io, "mock backend server: cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([impl = impl_.get()] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void MockBackendServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace promptex
