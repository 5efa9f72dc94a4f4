#include "promptex/service.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>

#include <httplib.h>

#include "promptex/error.hpp"
#include "promptex/io.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

namespace {

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

nlohmann::json node_json(const ExpansionNode& n) {
  return {{"id", n.id},
          {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
          {"step", n.step},
          {"text", n.text}};
}

nlohmann::json decode_json(const DecodeParams& d) {
  return {{"strategy", to_string(d.strategy)}, {"temperature", d.temperature}, {"beam_size", d.beam_size}};
}

DecodeParams decode_from_json(const nlohmann::json& doc, std::uint64_t seed) {
  DecodeParams d;
  d.strategy = parse_decode_strategy(doc.at("strategy").get<std::string>());
  d.temperature = doc.at("temperature").get<double>();
  d.beam_size = doc.at("beam_size").get<int>();
  d.seed = seed;
  return d;
}

void apply_event(std::map<std::string, Session>& sessions, const nlohmann::json& event) {
  const auto op = event.at("op").get<std::string>();
  const auto id = event.at("session_id").get<std::string>();
  if (op == "create") {
    Session s;
    s.session_id = id;
    s.query = event.at("query").get<std::string>();
    s.prefix = parse_prefix(event.at("prefix").get<std::string>());
    s.seed = event.at("seed").get<std::uint64_t>();
    s.decode = decode_from_json(event.at("decode"), s.seed);
    s.tree = ExpansionTree(s.query);
    s.created_ms = s.updated_ms = event.value("at", std::int64_t{0});
    sessions[id] = std::move(s);
    return;
  }
  auto it = sessions.find(id);
  if (it == sessions.end()) fail(ErrorKind::state, "session log references unknown session " + id);
  auto& s = it->second;
  if (op == "children") {
    const auto parent = event.at("parent").get<std::size_t>();
    for (const auto& t : event.at("texts")) s.tree.add_child(parent, t.get<std::string>());
  } else if (op == "images") {
    auto& list = s.images[event.at("node_id").get<std::size_t>()];
    for (const auto& img : event.at("images")) list.push_back(SessionImage::from_json(img));
  } else {
    fail(ErrorKind::state, "unknown session log op '" + op + "'");
  }
  s.updated_ms = event.value("at", s.updated_ms);
}

}  // namespace

nlohmann::json SessionImage::to_json() const {
  return {{"image_id", image_id}, {"prompt", prompt}, {"seed", seed}, {"aesthetics", aesthetics}};
}

SessionImage SessionImage::from_json(const nlohmann::json& doc) {
  return {doc.at("image_id").get<std::string>(), doc.at("prompt").get<std::string>(),
          doc.at("seed").get<std::uint64_t>(), doc.at("aesthetics").get<double>()};
}

nlohmann::json Session::to_json() const {
  nlohmann::json imgs = nlohmann::json::object();
  for (const auto& [node, list] : images) {
    auto& arr = imgs[std::to_string(node)] = nlohmann::json::array();
    for (const auto& i : list) arr.push_back(i.to_json());
  }
  return {{"session_id", session_id},
          {"query", query},
          {"prefix", to_string(prefix)},
          {"seed", seed},
          {"decode", decode_json(decode)},
          {"tree", tree.to_json()},
          {"images", std::move(imgs)},
          {"created_ms", created_ms},
          {"updated_ms", updated_ms}};
}

Session Session::from_json(const nlohmann::json& doc) {
  Session s;
  s.session_id = doc.at("session_id").get<std::string>();
  s.query = doc.at("query").get<std::string>();
  s.prefix = parse_prefix(doc.at("prefix").get<std::string>());
  s.seed = doc.at("seed").get<std::uint64_t>();
  s.decode = decode_from_json(doc.at("decode"), s.seed);
  s.tree = ExpansionTree::from_json(doc.at("tree"));
  for (const auto& [node, list] : doc.at("images").items()) {
    auto& out = s.images[std::stoul(node)];
    for (const auto& i : list) out.push_back(SessionImage::from_json(i));
  }
  s.created_ms = doc.value("created_ms", std::int64_t{0});
  s.updated_ms = doc.value("updated_ms", std::int64_t{0});
  return s;
}

// --- ExpansionService ----------------------------------------------------

ExpansionService::ExpansionService(Backends backends, ServiceOptions options)
    : backends_(std::move(backends)), options_(std::move(options)) {
  require(options_.default_n >= 1, ErrorKind::config, "service: default n must be >= 1");
  options_.decode.validate();
  if (!options_.session_dir.empty()) {
    io::ensure_directory(options_.session_dir);
    load();
  }
}

ExpansionService::~ExpansionService() = default;

void ExpansionService::load() {
  std::map<std::string, Session> state;
  std::size_t skip = 0;
  const auto snapshot_path = options_.session_dir + "/sessions.snapshot.json";
  const auto log_path = options_.session_dir + "/sessions.log";
  if (io::exists(snapshot_path)) {
    const auto doc = io::read_json_file(snapshot_path);
    skip = doc.at("log_lines").get<std::size_t>();
    session_counter_ = doc.at("counter").get<std::uint64_t>();
    for (const auto& s : doc.at("sessions")) {
      auto session = Session::from_json(s);
      state[session.session_id] = std::move(session);
    }
  }
  if (io::exists(log_path)) {
    std::ifstream in(log_path);
    std::string line;
    while (std::getline(in, line)) {
      if (text::trim(line).empty()) continue;
      if (log_lines_++ < skip) continue;
      const auto event = nlohmann::json::parse(line);
      apply_event(state, event);
      if (event.contains("counter")) {
        session_counter_ = std::max(session_counter_, event["counter"].get<std::uint64_t>() + 1);
      }
    }
  }
  for (auto& [id, session] : state) {
    auto entry = std::make_shared<Entry>();
    entry->session = std::move(session);
    sessions_[id] = std::move(entry);
  }
}

std::shared_ptr<ExpansionService::Entry> ExpansionService::find(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) fail(ErrorKind::not_found, "unknown session '" + session_id + "'");
  return it->second;
}

void ExpansionService::append_event(const nlohmann::json& event) {
  if (options_.session_dir.empty()) return;
  std::lock_guard lock(log_mutex_);
  {
    std::ofstream out(options_.session_dir + "/sessions.log", std::ios::app);
    if (!out) fail(ErrorKind::io, "cannot append to session log in " + options_.session_dir);
    out << event.dump() << '\n';
  }
  ++log_lines_;
  if (++events_since_snapshot_ >= options_.snapshot_every) write_snapshot_locked();
}

void ExpansionService::write_snapshot_locked() {
  // Rebuilt from the log itself so the snapshot never depends on the live
  // sessions, which other threads may be mutating.
  std::map<std::string, Session> state;
  std::ifstream in(options_.session_dir + "/sessions.log");
  std::string line;
  std::size_t lines = 0;
  const auto snapshot_path = options_.session_dir + "/sessions.snapshot.json";
  std::size_t skip = 0;
  std::uint64_t counter = 0;
  if (io::exists(snapshot_path)) {
    const auto doc = io::read_json_file(snapshot_path);
    skip = doc.at("log_lines").get<std::size_t>();
    counter = doc.at("counter").get<std::uint64_t>();
    for (const auto& s : doc.at("sessions")) {
      auto session = Session::from_json(s);
      state[session.session_id] = std::move(session);
    }
  }
  while (lines < log_lines_ && std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    if (lines++ < skip) continue;
    const auto event = nlohmann::json::parse(line);
    apply_event(state, event);
    if (event.contains("counter")) counter = std::max(counter, event["counter"].get<std::uint64_t>() + 1);
  }
  nlohmann::json sessions = nlohmann::json::array();
  for (const auto& [_, s] : state) sessions.push_back(s.to_json());
  io::write_json_file(snapshot_path, {{"log_lines", lines}, {"counter", counter}, {"sessions", std::move(sessions)}});
  events_since_snapshot_ = 0;
}

void ExpansionService::snapshot() {
  if (options_.session_dir.empty()) return;
  std::lock_guard lock(log_mutex_);
  write_snapshot_locked();
}

nlohmann::json ExpansionService::create_session(const std::string& query, std::optional<Prefix> prefix,
                                                std::optional<std::size_t> n) {
  const auto trimmed = std::string(text::trim(query));
  require(!trimmed.empty(), ErrorKind::empty_input, "session query is empty");
  const auto count = n.value_or(options_.default_n);
  require(count >= 1 && count <= 64, ErrorKind::invalid_argument, "n must lie in [1, 64]");

  std::uint64_t counter = 0;
  {
    std::unique_lock lock(sessions_mutex_);
    counter = session_counter_++;
  }
  auto entry = std::make_shared<Entry>();
  auto& s = entry->session;
  s.seed = derive_seed(options_.seed, "session", counter);
  s.session_id = "s-" + hex64(s.seed);
  s.query = trimmed;
  s.prefix = prefix.value_or(Prefix::NONE);
  s.decode = options_.decode;
  s.decode.seed = s.seed;
  s.tree = ExpansionTree(trimmed);
  s.created_ms = s.updated_ms = now_ms();

  TreeOptions tree_options;
  tree_options.prefix = s.prefix;
  tree_options.token_limit = options_.token_limit;
  auto decode = s.decode;
  decode.seed = derive_seed(s.seed, "expand_round", mix(0, 0));
  const auto ids = expand_node(s.tree, 0, count, decode, *backends_.expander, tree_options);

  nlohmann::json texts = nlohmann::json::array();
  nlohmann::json nodes = nlohmann::json::array();
  nodes.push_back(node_json(s.tree.root()));
  for (auto id : ids) {
    texts.push_back(s.tree.node(id).text);
    nodes.push_back(node_json(s.tree.node(id)));
  }
  // Held until both events are logged so no later event for this session
  // can reach the log first.
  std::lock_guard entry_lock(entry->mutex);
  {
    std::unique_lock lock(sessions_mutex_);
    sessions_[s.session_id] = entry;
  }
  append_event({{"op", "create"},
                {"session_id", s.session_id},
                {"counter", counter},
                {"query", s.query},
                {"prefix", to_string(s.prefix)},
                {"seed", s.seed},
                {"decode", decode_json(s.decode)},
                {"at", s.created_ms}});
  append_event({{"op", "children"}, {"session_id", s.session_id}, {"parent", 0}, {"texts", texts}, {"at", s.created_ms}});
  return {{"session_id", s.session_id}, {"nodes", std::move(nodes)}};
}

nlohmann::json ExpansionService::expand(const std::string& session_id, std::size_t node_id,
                                        std::optional<std::size_t> n) {
  auto entry = find(session_id);
  const auto count = n.value_or(options_.default_n);
  require(count >= 1 && count <= 64, ErrorKind::invalid_argument, "n must lie in [1, 64]");
  std::lock_guard lock(entry->mutex);
  auto& s = entry->session;
  const auto& node = s.tree.node(node_id);

  TreeOptions tree_options;
  tree_options.prefix = s.prefix;
  tree_options.token_limit = options_.token_limit;
  auto decode = s.decode;
  decode.seed = derive_seed(s.seed, "expand_round", mix(node_id, node.children.size()));
  const auto ids = expand_node(s.tree, node_id, count, decode, *backends_.expander, tree_options);

  s.updated_ms = now_ms();
  nlohmann::json texts = nlohmann::json::array();
  nlohmann::json nodes = nlohmann::json::array();
  for (auto id : ids) {
    texts.push_back(s.tree.node(id).text);
    nodes.push_back(node_json(s.tree.node(id)));
  }
  append_event({{"op", "children"}, {"session_id", session_id}, {"parent", node_id}, {"texts", texts}, {"at", s.updated_ms}});
  return {{"session_id", session_id}, {"node_id", node_id}, {"nodes", std::move(nodes)}};
}

nlohmann::json ExpansionService::images(const std::string& session_id, std::size_t node_id, std::size_t count) {
  require(count >= 1 && count <= options_.max_images_per_request, ErrorKind::invalid_argument,
          "image count out of range");
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  auto& s = entry->session;
  const auto prompt = s.tree.node(node_id).text;
  auto& list = s.images[node_id];
  nlohmann::json fresh = nlohmann::json::array();
  while (list.size() < count) {
    const auto seed = derive_seed(s.seed, "node_image", mix(node_id, list.size()));
    const auto image = render_and_embed(backends_, prompt, seed);
    SessionImage si{image.image_id, prompt, seed, backends_.aesthetic->aesthetic_score(image)};
    fresh.push_back(si.to_json());
    list.push_back(std::move(si));
  }
  if (!fresh.empty()) {
    s.updated_ms = now_ms();
    append_event({{"op", "images"}, {"session_id", session_id}, {"node_id", node_id}, {"images", fresh}, {"at", s.updated_ms}});
  }
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < count; ++i) out.push_back(list[i].to_json());
  return {{"session_id", session_id}, {"node_id", node_id}, {"images", std::move(out)}};
}

nlohmann::json ExpansionService::get(const std::string& session_id) const {
  auto entry = find(session_id);
  std::lock_guard lock(entry->mutex);
  return entry->session.to_json();
}

std::vector<std::string> ExpansionService::session_ids() const {
  std::shared_lock lock(sessions_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

// --- RaterDesk -------------------------------------------------------------

RaterDesk::RaterDesk(std::vector<RaterTask> tasks, std::string responses_path)
    : tasks_(std::move(tasks)),
      log_(responses_path.empty() ? std::make_unique<ResponseLog>()
                                  : std::make_unique<ResponseLog>(std::move(responses_path))) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!by_id_.emplace(tasks_[i].task_id, i).second) {
      fail(ErrorKind::invalid_argument, "duplicate rater task id " + tasks_[i].task_id);
    }
  }
}

std::optional<RaterTask> RaterDesk::next(const std::string& rater_id) const {
  require(!rater_id.empty(), ErrorKind::invalid_argument, "rater_id is required");
  return next_task_for(tasks_, *log_, rater_id);
}

bool RaterDesk::respond(const RaterResponse& response) {
  auto it = by_id_.find(response.task_id);
  if (it == by_id_.end()) fail(ErrorKind::not_found, "unknown rater task '" + response.task_id + "'");
  return log_->record(tasks_[it->second], response);
}

nlohmann::json RaterDesk::report() const {
  const auto responses = log_->snapshot();
  std::map<std::string, std::size_t> per_task;
  for (const auto& r : responses) ++per_task[r.task_id];
  std::vector<RaterTask> complete;
  for (const auto& t : tasks_) {
    if (t.stage == RaterStage::pair_compare && per_task[t.task_id] == 3) complete.push_back(t);
  }
  if (complete.empty()) fail(ErrorKind::not_found, "no pair_compare task has all three responses yet");
  auto doc = analyze_ratings(complete, responses).to_json();
  doc["responses"] = responses.size();
  return doc;
}

// --- ApiServer ---------------------------------------------------------------

int http_status(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument:
    case ErrorKind::dimension_mismatch:
    case ErrorKind::zero_norm:
    case ErrorKind::empty_input:
      return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::state: return 409;
    case ErrorKind::backend_failure: return 502;
    case ErrorKind::config:
    case ErrorKind::io:
      return 500;
  }
  return 500;
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

template <typename Handler>
auto guarded(Handler handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_json(res, http_status(e.kind()), {{"error", to_string(e.kind())}, {"message", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", "invalid_argument"}, {"message", e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", "internal"}, {"message", e.what()}});
    }
  };
}

nlohmann::json body_of(const httplib::Request& req) {
  if (text::trim(req.body).empty()) return nlohmann::json::object();
  auto doc = nlohmann::json::parse(req.body);
  require(doc.is_object(), ErrorKind::invalid_argument, "request body must be a JSON object");
  return doc;
}

std::optional<std::size_t> optional_size(const nlohmann::json& body, const char* key) {
  if (!body.contains(key) || body[key].is_null()) return std::nullopt;
  require(body[key].is_number_unsigned(), ErrorKind::invalid_argument, "expected a non-negative integer");
  return body[key].get<std::size_t>();
}

}  // namespace

ApiServer::ApiServer(ExpansionService& sessions, RaterDesk& raters, std::string eval_report_path)
    : sessions_(sessions),
      raters_(raters),
      eval_report_path_(std::move(eval_report_path)),
      server_(std::make_unique<httplib::Server>()) {
  routes();
}

ApiServer::~ApiServer() { stop(); }

void ApiServer::routes() {
  auto& s = *server_;
  s.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  s.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  s.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, {{"status", "ready"}});
        }));

  s.Post("/api/session", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = body_of(req);
           std::optional<Prefix> prefix;
           if (body.contains("prefix") && !body["prefix"].is_null()) {
             prefix = parse_prefix(body["prefix"].get<std::string>());
           }
           send_json(res, 201,
                     sessions_.create_session(body.at("query").get<std::string>(), prefix, optional_size(body, "n")));
         }));

  s.Post(R"(/api/session/([^/]+)/expand)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = body_of(req);
           send_json(res, 200,
                     sessions_.expand(req.matches[1], body.at("node_id").get<std::size_t>(), optional_size(body, "n")));
         }));

  s.Post(R"(/api/session/([^/]+)/images)", guarded([this](const httplib::Request& req, httplib::Response& res) {
           const auto body = body_of(req);
           send_json(res, 200,
                     sessions_.images(req.matches[1], body.at("node_id").get<std::size_t>(),
                                      optional_size(body, "count").value_or(1)));
         }));

  s.Get(R"(/api/session/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
          send_json(res, 200, sessions_.get(req.matches[1]));
        }));

  s.Get("/api/rater/next", guarded([this](const httplib::Request& req, httplib::Response& res) {
          const auto rater = req.get_param_value("rater_id");
          auto task = raters_.next(rater);
          if (!task) fail(ErrorKind::not_found, "no pending task for rater '" + rater + "'");
          send_json(res, 200, task->to_json());
        }));

  s.Post("/api/rater/response", guarded([this](const httplib::Request& req, httplib::Response& res) {
           auto body = body_of(req);
           if (!body.contains("timestamp")) body["timestamp"] = now_ms();
           const auto response = RaterResponse::from_json(body);
           const bool accepted = raters_.respond(response);
           send_json(res, 200, {{"accepted", accepted}, {"task_id", response.task_id}, {"rater_id", response.rater_id}});
         }));

  s.Get("/api/reports/eval", guarded([this](const httplib::Request&, httplib::Response& res) {
          if (eval_report_path_.empty() || !io::exists(eval_report_path_)) {
            fail(ErrorKind::not_found, "no evaluation report configured");
          }
          send_json(res, 200, io::read_json_file(eval_report_path_));
        }));

  s.Get("/api/reports/rater", guarded([this](const httplib::Request&, httplib::Response& res) {
          send_json(res, 200, raters_.report());
        }));
}

int ApiServer::start(const std::string& host, int port) {
  require(!running_.load(), ErrorKind::state, "server already running");
  int bound = port;
  if (port == 0) {
    bound = server_->bind_to_any_port(host);
  } else if (!server_->bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) fail(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  running_ = true;
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

void ApiServer::stop() {
  if (!running_.exchange(false)) return;
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace promptex
