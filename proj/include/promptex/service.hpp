#pragma once

// Interactive expansion sessions, the rater desk and the REST API that
// exposes both.
//
// Sessions persist as an append-only JSONL event log (sessions.log) plus a
// periodic snapshot (sessions.snapshot.json) in the session directory. On
// startup the snapshot is loaded and the log tail replayed, so node ids and
// trees survive restarts.

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "promptex/backends.hpp"
#include "promptex/decode.hpp"
#include "promptex/error.hpp"
#include "promptex/expansion.hpp"
#include "promptex/prefix.hpp"
#include "promptex/rater.hpp"

namespace httplib {
class Server;
}

namespace promptex {

struct SessionImage {
  std::string image_id;
  std::string prompt;
  std::uint64_t seed = 0;
  double aesthetics = 0.0;

  nlohmann::json to_json() const;
  static SessionImage from_json(const nlohmann::json& doc);
};

struct Session {
  std::string session_id;
  std::string query;
  Prefix prefix = Prefix::NONE;
  std::uint64_t seed = 0;
  DecodeParams decode;
  ExpansionTree tree;
  std::map<std::size_t, std::vector<SessionImage>> images;  // by node id
  std::int64_t created_ms = 0;
  std::int64_t updated_ms = 0;

  nlohmann::json to_json() const;
  static Session from_json(const nlohmann::json& doc);
};

struct ServiceOptions {
  std::uint64_t seed = 0;
  std::size_t default_n = 4;
  DecodeParams decode = DecodeParams::sampled(1.0);
  std::size_t token_limit = kDefaultTokenLimit;
  std::size_t max_images_per_request = 16;
  std::string session_dir;         // empty keeps sessions in memory only
  std::size_t snapshot_every = 64;  // log events between snapshots
};

class ExpansionService {
 public:
  ExpansionService(Backends backends, ServiceOptions options);
  ~ExpansionService();

  // Creates a session and expands its root. Returns {session_id, nodes}.
  nlohmann::json create_session(const std::string& query, std::optional<Prefix> prefix,
                                std::optional<std::size_t> n);
  // Adds n children under node_id. Returns {session_id, node_id, nodes}.
  nlohmann::json expand(const std::string& session_id, std::size_t node_id, std::optional<std::size_t> n);
  // Returns `count` images for the node, rendering the missing ones.
  nlohmann::json images(const std::string& session_id, std::size_t node_id, std::size_t count);
  nlohmann::json get(const std::string& session_id) const;

  std::vector<std::string> session_ids() const;
  // Writes a snapshot now (also done every snapshot_every events).
  void snapshot();

 private:
  struct Entry {
    std::mutex mutex;
    Session session;
  };

  std::shared_ptr<Entry> find(const std::string& session_id) const;
  void append_event(const nlohmann::json& event);
  void load();
  void write_snapshot_locked();

  Backends backends_;
  ServiceOptions options_;
  mutable std::shared_mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::uint64_t session_counter_ = 0;

  std::mutex log_mutex_;
  std::size_t log_lines_ = 0;
  std::size_t events_since_snapshot_ = 0;
};

// Serves rater tasks and records responses.
class RaterDesk {
 public:
  RaterDesk() = default;
  // Tasks from a JSONL file (may be empty), responses appended to `responses_path`.
  RaterDesk(std::vector<RaterTask> tasks, std::string responses_path);

  std::optional<RaterTask> next(const std::string& rater_id) const;
  // Returns true when newly recorded, false for a repeated (task, rater).
  bool respond(const RaterResponse& response);
  // Analytics over the tasks that have all three responses.
  nlohmann::json report() const;

  const std::vector<RaterTask>& tasks() const noexcept { return tasks_; }

 private:
  std::vector<RaterTask> tasks_;
  std::map<std::string, std::size_t> by_id_;
  std::unique_ptr<ResponseLog> log_ = std::make_unique<ResponseLog>();
};

class ApiServer {
 public:
  // eval_report_path: JSON file served by /api/reports/eval (may be empty).
  ApiServer(ExpansionService& sessions, RaterDesk& raters, std::string eval_report_path = {});
  ~ApiServer();

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds (port 0 picks a free port) and serves on a background thread.
  int start(const std::string& host, int port);
  // Stops accepting connections and waits for in-flight requests.
  void stop();
  bool running() const noexcept { return running_.load(); }

 private:
  void routes();

  ExpansionService& sessions_;
  RaterDesk& raters_;
  std::string eval_report_path_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  std::atomic<bool> running_{false};
};

// HTTP status used for each error kind.
int http_status(ErrorKind kind) noexcept;

}  // namespace promptex
