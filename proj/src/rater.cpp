#include "promptex/rater.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "promptex/error.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

std::string_view to_string(RaterMode mode) noexcept {
  return mode == RaterMode::aesthetics ? "aesthetics" : "alignment";
}

std::string_view to_string(RaterStage stage) noexcept {
  return stage == RaterStage::select_best_of_4 ? "select_best_of_4" : "pair_compare";
}

RaterMode parse_rater_mode(std::string_view name) {
  if (name == "aesthetics") return RaterMode::aesthetics;
  if (name == "alignment") return RaterMode::alignment;
  fail(ErrorKind::invalid_argument, "unknown rater mode '" + std::string(name) + "'");
}

RaterStage parse_rater_stage(std::string_view name) {
  if (name == "select_best_of_4") return RaterStage::select_best_of_4;
  if (name == "pair_compare") return RaterStage::pair_compare;
  fail(ErrorKind::invalid_argument, "unknown rater stage '" + std::string(name) + "'");
}

std::string_view instruction_text(RaterMode mode) noexcept {
  if (mode == RaterMode::aesthetics) {
    return "Look at the images and pick the one you like best as a picture. "
           "Judge the image itself; the text of the request does not matter here.";
  }
  return "Read the request and pick the image that matches it better. "
         "Choose Unsure when both match equally well or neither matches.";
}

std::string_view to_string(Outcome outcome) noexcept {
  switch (outcome) {
    case Outcome::prompt_win: return "prompt_win";
    case Outcome::query_win: return "query_win";
    case Outcome::equivalent: return "equivalent";
  }
  return "equivalent";
}

void RaterTask::validate() const {
  require(!task_id.empty(), ErrorKind::invalid_argument, "rater task without id");
  const std::size_t expected = stage == RaterStage::pair_compare ? 2 : 4;
  if (candidates.size() != expected || sources.size() != expected) {
    fail(ErrorKind::invalid_argument, "task " + task_id + ": " + std::string(to_string(stage)) + " needs " +
                                          std::to_string(expected) + " candidates");
  }
  for (const auto& c : candidates) {
    if (c.empty()) fail(ErrorKind::invalid_argument, "task " + task_id + ": missing image");
  }
  if (allow_unsure != (mode == RaterMode::alignment)) {
    fail(ErrorKind::invalid_argument, "task " + task_id + ": UNSURE is allowed exactly for alignment tasks");
  }
}

nlohmann::json RaterTask::to_json() const {
  return {{"task_id", task_id},
          {"item_id", item_id},
          {"flow", flow},
          {"mode", to_string(mode)},
          {"stage", to_string(stage)},
          {"query", query},
          {"candidates", candidates},
          {"sources", sources},
          {"allow_unsure", allow_unsure},
          {"raters", raters},
          {"instructions", instruction_text(mode)}};
}

RaterTask RaterTask::from_json(const nlohmann::json& doc) {
  RaterTask t;
  t.task_id = doc.at("task_id").get<std::string>();
  t.item_id = doc.at("item_id").get<std::string>();
  t.flow = doc.at("flow").get<std::string>();
  t.mode = parse_rater_mode(doc.at("mode").get<std::string>());
  t.stage = parse_rater_stage(doc.at("stage").get<std::string>());
  t.query = doc.at("query").get<std::string>();
  t.candidates = doc.at("candidates").get<std::vector<std::string>>();
  t.sources = doc.at("sources").get<std::vector<std::string>>();
  t.allow_unsure = doc.at("allow_unsure").get<bool>();
  t.raters = doc.value("raters", std::vector<std::string>{});
  t.validate();
  return t;
}

nlohmann::json RaterResponse::to_json() const {
  return {{"task_id", task_id},
          {"rater_id", rater_id},
          {"choice", choice ? nlohmann::json(*choice) : nlohmann::json("UNSURE")},
          {"timestamp", timestamp}};
}

RaterResponse RaterResponse::from_json(const nlohmann::json& doc) {
  RaterResponse r;
  r.task_id = doc.at("task_id").get<std::string>();
  r.rater_id = doc.at("rater_id").get<std::string>();
  const auto& c = doc.at("choice");
  if (c.is_string()) {
    require(c.get<std::string>() == "UNSURE", ErrorKind::invalid_argument, "choice must be an index or UNSURE");
  } else {
    require(c.is_number_unsigned(), ErrorKind::invalid_argument, "choice must be an index or UNSURE");
    r.choice = c.get<std::size_t>();
  }
  r.timestamp = doc.value("timestamp", std::int64_t{0});
  return r;
}

std::vector<std::string> default_rater_pool(std::size_t size) {
  std::vector<std::string> pool;
  for (std::size_t i = 1; i <= size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "r%02zu", i);
    pool.emplace_back(buf);
  }
  return pool;
}

namespace {

constexpr std::size_t kRatersPerTask = 3;

std::vector<std::string> round_robin(std::span<const std::string> pool, std::size_t item_index) {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < kRatersPerTask; ++j) out.push_back(pool[(kRatersPerTask * item_index + j) % pool.size()]);
  return out;
}

void check_pool(std::span<const std::string> pool, std::size_t minimum) {
  if (pool.size() < minimum) {
    fail(ErrorKind::invalid_argument, "rater pool needs at least " + std::to_string(minimum) + " raters");
  }
  std::set<std::string> unique(pool.begin(), pool.end());
  require(unique.size() == pool.size(), ErrorKind::invalid_argument, "rater pool has duplicate ids");
}

// Shuffles candidates together with their sources.
void shuffle_sides(RaterTask& task, std::uint64_t seed) {
  std::vector<std::size_t> order(task.candidates.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, "side_order", fnv1a(task.task_id)));
  rng.shuffle(order);
  std::vector<std::string> c, s;
  for (auto i : order) {
    c.push_back(task.candidates[i]);
    s.push_back(task.sources[i]);
  }
  task.candidates = std::move(c);
  task.sources = std::move(s);
}

std::string item_id_or_index(const std::string& id, std::size_t index) {
  return id.empty() ? "item-" + std::to_string(index) : id;
}

std::map<std::string, std::vector<RaterResponse>> group_responses(std::span<const RaterResponse> responses) {
  std::map<std::string, std::vector<RaterResponse>> by_task;
  for (const auto& r : responses) by_task[r.task_id].push_back(r);
  return by_task;
}

void check_response(const RaterTask& task, const RaterResponse& r) {
  if (r.choice && *r.choice >= task.candidates.size()) {
    fail(ErrorKind::invalid_argument, "task " + task.task_id + ": choice " + std::to_string(*r.choice) + " out of range");
  }
  if (!r.choice && !task.allow_unsure) {
    fail(ErrorKind::invalid_argument, "task " + task.task_id + ": UNSURE is not offered for this task");
  }
}

const std::vector<RaterResponse>& three_responses(const RaterTask& task,
                                                 const std::map<std::string, std::vector<RaterResponse>>& by_task) {
  static const std::vector<RaterResponse> none;
  auto it = by_task.find(task.task_id);
  const auto& list = it == by_task.end() ? none : it->second;
  std::set<std::string> raters;
  for (const auto& r : list) raters.insert(r.rater_id);
  if (list.size() != kRatersPerTask || raters.size() != kRatersPerTask) {
    fail(ErrorKind::invalid_argument, "task " + task.task_id + " has " + std::to_string(list.size()) +
                                          " responses from " + std::to_string(raters.size()) +
                                          " raters, expected 3");
  }
  return list;
}

}  // namespace

std::vector<RaterTask> gen_1x1_tasks(std::span<const PairItem> items, RaterMode mode, std::uint64_t seed,
                                     std::span<const std::string> rater_pool) {
  check_pool(rater_pool, kRatersPerTask);
  std::vector<RaterTask> tasks;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    RaterTask t;
    t.item_id = item_id_or_index(item.item_id, i);
    t.task_id = "1x1-" + t.item_id;
    t.flow = "1x1";
    t.mode = mode;
    t.stage = RaterStage::pair_compare;
    t.query = item.query;
    t.candidates = {item.query_image, item.prompt_image};
    t.sources = {std::string(kQuerySource), std::string(kPromptSource)};
    t.allow_unsure = mode == RaterMode::alignment;
    t.raters = round_robin(rater_pool, i);
    t.validate();
    shuffle_sides(t, seed);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::vector<RaterTask> gen_4x4_tasks(std::span<const QuadItem> items, RaterMode mode, std::uint64_t seed,
                                     std::span<const std::string> rater_pool) {
  check_pool(rater_pool, 2 * kRatersPerTask);
  std::vector<RaterTask> tasks;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& item = items[i];
    for (auto source : {kQuerySource, kPromptSource}) {
      RaterTask t;
      t.item_id = item_id_or_index(item.item_id, i);
      t.task_id = "4x4s1-" + t.item_id + "-" + std::string(source);
      t.flow = "4x4";
      t.mode = mode;
      t.stage = RaterStage::select_best_of_4;
      t.query = item.query;
      const auto& images = source == kQuerySource ? item.query_images : item.prompt_images;
      t.candidates.assign(images.begin(), images.end());
      t.sources.assign(4, std::string(source));
      t.allow_unsure = mode == RaterMode::alignment;
      t.raters = round_robin(rater_pool, i);
      t.validate();
      shuffle_sides(t, seed);
      tasks.push_back(std::move(t));
    }
  }
  Rng rng(derive_seed(seed, "stage1_order"));
  rng.shuffle(tasks);
  return tasks;
}

std::map<std::string, Stage1Winners> resolve_stage1_winners(std::span<const RaterTask> stage1,
                                                            std::span<const RaterResponse> responses) {
  const auto by_task = group_responses(responses);
  std::map<std::string, Stage1Winners> winners;
  std::map<std::string, int> sides_resolved;
  for (const auto& task : stage1) {
    require(task.stage == RaterStage::select_best_of_4, ErrorKind::invalid_argument,
            "resolve_stage1_winners expects select_best_of_4 tasks");
    auto it = by_task.find(task.task_id);
    if (it == by_task.end() || it->second.size() != kRatersPerTask) {
      fail(ErrorKind::state, "stage-1 winners not resolved: task " + task.task_id + " lacks its 3 responses");
    }
    const auto& list = three_responses(task, by_task);
    std::vector<std::size_t> votes(task.candidates.size(), 0);
    for (const auto& r : list) {
      check_response(task, r);
      if (r.choice) ++votes[*r.choice];
    }
    // max_element returns the first maximum, i.e. the earliest position.
    const auto best = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    auto& w = winners[task.item_id];
    (task.sources.front() == kQuerySource ? w.query_image : w.prompt_image) = task.candidates[best];
    ++sides_resolved[task.item_id];
  }
  for (const auto& [item, count] : sides_resolved) {
    if (count != 2) fail(ErrorKind::state, "stage-1 winners not resolved for item " + item);
  }
  return winners;
}

std::vector<RaterTask> gen_4x4_stage2(std::span<const RaterTask> stage1, std::span<const RaterResponse> responses,
                                      std::uint64_t seed, std::span<const std::string> rater_pool) {
  require(!stage1.empty(), ErrorKind::state, "stage-2 requested without stage-1 tasks");
  const auto winners = resolve_stage1_winners(stage1, responses);

  std::vector<std::string> item_order;
  std::map<std::string, const RaterTask*> first_task;
  std::map<std::string, std::set<std::string>> stage1_raters;
  for (const auto& t : stage1) {
    if (!first_task.contains(t.item_id)) {
      item_order.push_back(t.item_id);
      first_task[t.item_id] = &t;
    }
    stage1_raters[t.item_id].insert(t.raters.begin(), t.raters.end());
  }
  std::sort(item_order.begin(), item_order.end());

  std::vector<RaterTask> tasks;
  for (const auto& item : item_order) {
    const auto& used = stage1_raters[item];
    if (rater_pool.size() < used.size() + kRatersPerTask) {
      fail(ErrorKind::invalid_argument, "rater pool too small for fresh stage-2 raters on item " + item);
    }
    std::size_t start = 0;
    for (std::size_t p = 0; p < rater_pool.size(); ++p) {
      if (used.contains(rater_pool[p])) start = p + 1;
    }
    const auto& src = *first_task[item];
    const auto& w = winners.at(item);
    RaterTask t;
    t.item_id = item;
    t.task_id = "4x4s2-" + item;
    t.flow = "4x4";
    t.mode = src.mode;
    t.stage = RaterStage::pair_compare;
    t.query = src.query;
    t.candidates = {w.query_image, w.prompt_image};
    t.sources = {std::string(kQuerySource), std::string(kPromptSource)};
    t.allow_unsure = src.mode == RaterMode::alignment;
    for (std::size_t step = 0; t.raters.size() < kRatersPerTask; ++step) {
      const auto& r = rater_pool[(start + step) % rater_pool.size()];
      if (!used.contains(r)) t.raters.push_back(r);
    }
    t.validate();
    shuffle_sides(t, seed);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

ResponseLog::ResponseLog(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  while (in && std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    auto r = RaterResponse::from_json(nlohmann::json::parse(line));
    auto key = std::make_pair(r.task_id, r.rater_id);
    if (index_.contains(key)) continue;
    index_[key] = responses_.size();
    responses_.push_back(std::move(r));
  }
}

bool ResponseLog::record(const RaterTask& task, const RaterResponse& response) {
  require(response.task_id == task.task_id, ErrorKind::invalid_argument, "response task_id does not match the task");
  check_response(task, response);
  if (!task.raters.empty() &&
      std::find(task.raters.begin(), task.raters.end(), response.rater_id) == task.raters.end()) {
    fail(ErrorKind::invalid_argument, "rater " + response.rater_id + " is not assigned to task " + task.task_id);
  }
  std::lock_guard lock(mutex_);
  auto key = std::make_pair(response.task_id, response.rater_id);
  if (index_.contains(key)) return false;
  if (!path_.empty()) {
    std::ofstream out(path_, std::ios::app);
    if (!out) fail(ErrorKind::io, "cannot append to response log " + path_);
    out << response.to_json().dump() << '\n';
  }
  index_[key] = responses_.size();
  responses_.push_back(response);
  return true;
}

bool ResponseLog::contains(const std::string& task_id, const std::string& rater_id) const {
  std::lock_guard lock(mutex_);
  return index_.contains({task_id, rater_id});
}

std::vector<RaterResponse> ResponseLog::snapshot() const {
  std::lock_guard lock(mutex_);
  return responses_;
}

std::size_t ResponseLog::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size();
}

std::optional<RaterTask> next_task_for(std::span<const RaterTask> tasks, const ResponseLog& log,
                                       const std::string& rater_id) {
  for (const auto& t : tasks) {
    if (std::find(t.raters.begin(), t.raters.end(), rater_id) == t.raters.end()) continue;
    if (!log.contains(t.task_id, rater_id)) return t;
  }
  return std::nullopt;
}

TaskVotes tally(const RaterTask& task, std::span<const RaterResponse> task_responses) {
  require(task.stage == RaterStage::pair_compare, ErrorKind::invalid_argument, "tally expects a pair_compare task");
  std::map<std::string, std::vector<RaterResponse>> by_task;
  for (const auto& r : task_responses) {
    require(r.task_id == task.task_id, ErrorKind::invalid_argument, "response belongs to another task");
    by_task[r.task_id].push_back(r);
  }
  TaskVotes v;
  for (const auto& r : three_responses(task, by_task)) {
    check_response(task, r);
    if (!r.choice) {
      ++v.unsure;
    } else if (task.sources[*r.choice] == kPromptSource) {
      ++v.prompt;
    } else {
      ++v.query;
    }
  }
  return v;
}

Outcome outcome_of(const TaskVotes& votes) noexcept {
  if (votes.prompt >= 2) return Outcome::prompt_win;
  if (votes.query >= 2) return Outcome::query_win;
  return Outcome::equivalent;
}

namespace {

std::vector<TaskVotes> tally_all(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses) {
  require(!tasks.empty(), ErrorKind::empty_input, "no rater tasks to analyse");
  const auto by_task = group_responses(responses);
  std::vector<TaskVotes> out;
  for (const auto& t : tasks) {
    if (t.mode != tasks.front().mode) fail(ErrorKind::invalid_argument, "rater analytics need a single mode");
    out.push_back(tally(t, three_responses(t, by_task)));
  }
  return out;
}

Fraction fraction(std::size_t hits, std::size_t population) {
  const double f = static_cast<double>(hits) / static_cast<double>(population);
  return {f, std::sqrt(f * (1.0 - f) / static_cast<double>(population))};
}

}  // namespace

WinRates win_rates(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses) {
  const auto votes = tally_all(tasks, responses);
  std::size_t prompt = 0, query = 0, equivalent = 0;
  for (const auto& v : votes) {
    switch (outcome_of(v)) {
      case Outcome::prompt_win: ++prompt; break;
      case Outcome::query_win: ++query; break;
      case Outcome::equivalent: ++equivalent; break;
    }
  }
  const double n = static_cast<double>(votes.size());
  return {static_cast<double>(prompt) / n, static_cast<double>(query) / n, static_cast<double>(equivalent) / n,
          votes.size()};
}

ConsensusStats consensus_stats(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses) {
  const auto votes = tally_all(tasks, responses);
  const bool alignment = tasks.front().mode == RaterMode::alignment;
  std::size_t three = 0, two = 0, none = 0;
  for (const auto& v : votes) {
    if (v.prompt == 3) {
      ++three;
    } else if (v.prompt == 2) {
      ++two;
    } else if (alignment && v.unsure == 3) {
      ++none;
    }
  }
  const auto population = three + two + none;
  if (population == 0) fail(ErrorKind::empty_input, "empty consensus population");
  ConsensusStats s;
  s.all_three = fraction(three, population);
  s.two = fraction(two, population);
  s.none = fraction(none, population);
  s.population = population;
  return s;
}

RaterAnalysis analyze_ratings(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses) {
  std::map<std::pair<std::string, RaterMode>, std::vector<RaterTask>> groups;
  for (const auto& t : tasks) {
    if (t.stage == RaterStage::pair_compare) groups[{t.flow, t.mode}].push_back(t);
  }
  require(!groups.empty(), ErrorKind::empty_input, "no pair_compare tasks to analyse");
  RaterAnalysis analysis;
  for (const auto& [key, list] : groups) {
    RaterAnalysis::Group g;
    g.flow = key.first;
    g.mode = key.second;
    g.rates = win_rates(list, responses);
    try {
      g.consensus = consensus_stats(list, responses);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::empty_input) throw;
    }
    analysis.groups.push_back(std::move(g));
  }
  return analysis;
}

nlohmann::json RaterAnalysis::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& g : groups) {
    nlohmann::json j = {{"flow", g.flow},
                        {"mode", to_string(g.mode)},
                        {"tasks", g.rates.tasks},
                        {"prompt_win", g.rates.prompt_win},
                        {"query_win", g.rates.query_win},
                        {"equivalent", g.rates.equivalent}};
    if (g.consensus) {
      const auto& c = *g.consensus;
      j["consensus"] = {{"population", c.population},
                        {"3/3", {{"value", c.all_three.value}, {"spread", c.all_three.spread}}},
                        {"2/3", {{"value", c.two.value}, {"spread", c.two.spread}}},
                        {"0/3", {{"value", c.none.value}, {"spread", c.none.spread}}}};
    }
    out.push_back(std::move(j));
  }
  return {{"groups", std::move(out)}};
}

void RaterAnalysis::write_csv(std::ostream& out) const {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  out << "flow,mode,metric,value,spread,count\n";
  for (const auto& g : groups) {
    const auto prefix = g.flow + "," + std::string(to_string(g.mode)) + ",";
    out << prefix << "prompt_win," << num(g.rates.prompt_win) << ",," << g.rates.tasks << '\n';
    out << prefix << "query_win," << num(g.rates.query_win) << ",," << g.rates.tasks << '\n';
    out << prefix << "equivalent," << num(g.rates.equivalent) << ",," << g.rates.tasks << '\n';
    if (g.consensus) {
      const auto& c = *g.consensus;
      out << prefix << "consensus_3of3," << num(c.all_three.value) << ',' << num(c.all_three.spread) << ','
          << c.population << '\n';
      out << prefix << "consensus_2of3," << num(c.two.value) << ',' << num(c.two.spread) << ',' << c.population
          << '\n';
      if (g.mode == RaterMode::alignment) {
        out << prefix << "consensus_0of3," << num(c.none.value) << ',' << num(c.none.spread) << ','
            << c.population << '\n';
      }
    }
  }
}

std::vector<RaterResponse> simulate_responses(std::span<const RaterTask> tasks, std::uint64_t seed, double p_prompt,
                                              double p_unsure) {
  std::vector<RaterResponse> out;
  std::int64_t clock = 0;
  for (const auto& t : tasks) {
    for (const auto& rater : t.raters) {
      Rng rng(derive_seed(seed, "simulated_rater", mix(fnv1a(t.task_id), fnv1a(rater))));
      RaterResponse r{t.task_id, rater, std::nullopt, ++clock};
      if (t.stage == RaterStage::select_best_of_4) {
        r.choice = static_cast<std::size_t>(rng.below(t.candidates.size()));
      } else {
        const double u = rng.uniform();
        const auto pick = [&](std::string_view side) {
          return static_cast<std::size_t>(std::find(t.sources.begin(), t.sources.end(), side) - t.sources.begin());
        };
        if (u < p_prompt) {
          r.choice = pick(kPromptSource);
        } else if (t.allow_unsure && u < p_prompt + p_unsure) {
          r.choice.reset();
        } else {
          r.choice = pick(kQuerySource);
        }
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

void write_tasks_jsonl(std::ostream& out, std::span<const RaterTask> tasks) {
  for (const auto& t : tasks) out << t.to_json().dump() << '\n';
}

std::vector<RaterTask> read_tasks_jsonl(std::istream& in) {
  std::vector<RaterTask> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(RaterTask::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

void write_responses_jsonl(std::ostream& out, std::span<const RaterResponse> responses) {
  for (const auto& r : responses) out << r.to_json().dump() << '\n';
}

std::vector<RaterResponse> read_responses_jsonl(std::istream& in) {
  std::vector<RaterResponse> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!text::trim(line).empty()) out.push_back(RaterResponse::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

}  // namespace promptex
