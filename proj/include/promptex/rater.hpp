#pragma once

// Side-by-side rater flows (1x1 and the two-stage 4x4), response collection
// and the win-rate / consensus analytics.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace promptex {

enum class RaterMode { aesthetics, alignment };
enum class RaterStage { select_best_of_4, pair_compare };

std::string_view to_string(RaterMode mode) noexcept;
std::string_view to_string(RaterStage stage) noexcept;
RaterMode parse_rater_mode(std::string_view name);
RaterStage parse_rater_stage(std::string_view name);

// Text shown above each task.
std::string_view instruction_text(RaterMode mode) noexcept;

// Candidate provenance: "query" for straight-query images, "prompt" for
// images of expanded prompts.
inline constexpr std::string_view kQuerySource = "query";
inline constexpr std::string_view kPromptSource = "prompt";

struct RaterTask {
  std::string task_id;
  std::string item_id;
  std::string flow;  // "1x1" or "4x4"
  RaterMode mode = RaterMode::aesthetics;
  RaterStage stage = RaterStage::pair_compare;
  std::string query;
  std::vector<std::string> candidates;  // image ids in display order
  std::vector<std::string> sources;     // per candidate: "query" or "prompt"
  bool allow_unsure = false;
  std::vector<std::string> raters;      // assigned rater ids

  void validate() const;
  nlohmann::json to_json() const;
  static RaterTask from_json(const nlohmann::json& doc);
};

struct RaterResponse {
  std::string task_id;
  std::string rater_id;
  std::optional<std::size_t> choice;  // empty means UNSURE
  std::int64_t timestamp = 0;         // milliseconds since the epoch

  nlohmann::json to_json() const;
  static RaterResponse from_json(const nlohmann::json& doc);
};

std::vector<std::string> default_rater_pool(std::size_t size = 12);

// --- task generation ---------------------------------------------------

struct PairItem {
  std::string item_id;
  std::string query;
  std::string query_image;   // first straight-query image
  std::string prompt_image;  // first expansion image
};

struct QuadItem {
  std::string item_id;
  std::string query;
  std::array<std::string, 4> query_images;
  std::array<std::string, 4> prompt_images;
};

// One pair_compare task per item, 3 raters each, round-robin over the pool.
std::vector<RaterTask> gen_1x1_tasks(std::span<const PairItem> items, RaterMode mode, std::uint64_t seed,
                                     std::span<const std::string> rater_pool);

// Stage 1: a select_best_of_4 task per item and system, all tasks shuffled
// together. Both tasks of an item share the same three raters.
std::vector<RaterTask> gen_4x4_tasks(std::span<const QuadItem> items, RaterMode mode, std::uint64_t seed,
                                     std::span<const std::string> rater_pool);

struct Stage1Winners {
  std::string query_image;
  std::string prompt_image;
};

// Winner of each stage-1 task: the candidate chosen by at least two raters;
// otherwise the candidate with the most votes, ties going to the earlier
// display position. Fails when a stage-1 task lacks its three responses.
std::map<std::string, Stage1Winners> resolve_stage1_winners(std::span<const RaterTask> stage1,
                                                            std::span<const RaterResponse> responses);

// Stage 2: winner vs winner per item, rated by three raters none of whom
// rated that item in stage 1.
std::vector<RaterTask> gen_4x4_stage2(std::span<const RaterTask> stage1, std::span<const RaterResponse> responses,
                                      std::uint64_t seed, std::span<const std::string> rater_pool);

// --- responses -----------------------------------------------------------

// Append-only, idempotent on (task_id, rater_id). With a path, accepted
// responses are appended to a JSONL file and replayed on construction.
class ResponseLog {
 public:
  ResponseLog() = default;
  explicit ResponseLog(std::string path);

  // Validates against the task. Returns false when (task, rater) was already
  // recorded; the earlier response is kept.
  bool record(const RaterTask& task, const RaterResponse& response);
  bool contains(const std::string& task_id, const std::string& rater_id) const;
  std::vector<RaterResponse> snapshot() const;
  std::size_t size() const;

 private:
  mutable std::mutex mutex_;
  std::string path_;
  std::vector<RaterResponse> responses_;
  std::map<std::pair<std::string, std::string>, std::size_t> index_;
};

// First task, in list order, assigned to the rater and not yet answered.
std::optional<RaterTask> next_task_for(std::span<const RaterTask> tasks, const ResponseLog& log,
                                       const std::string& rater_id);

// --- analytics -----------------------------------------------------------

enum class Outcome { prompt_win, query_win, equivalent };

std::string_view to_string(Outcome outcome) noexcept;

struct TaskVotes {
  std::size_t prompt = 0;
  std::size_t query = 0;
  std::size_t unsure = 0;
};

// Votes of one pair_compare task; requires exactly three distinct raters.
TaskVotes tally(const RaterTask& task, std::span<const RaterResponse> task_responses);
// Majority of three; an UNSURE majority or a 1/1/1 split is equivalent.
Outcome outcome_of(const TaskVotes& votes) noexcept;

struct WinRates {
  double prompt_win = 0.0;
  double query_win = 0.0;
  double equivalent = 0.0;
  std::size_t tasks = 0;
};

struct Fraction {
  double value = 0.0;
  double spread = 0.0;  // standard error of the proportion
};

struct ConsensusStats {
  Fraction all_three;  // 3/3 raters picked the prompt image
  Fraction two;        // exactly 2/3
  Fraction none;       // 0/3, alignment mode only (all three UNSURE)
  std::size_t population = 0;
};

// Both take pair_compare tasks of a single mode and their responses; every
// task needs exactly three responses.
WinRates win_rates(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses);
ConsensusStats consensus_stats(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses);

struct RaterAnalysis {
  struct Group {
    std::string flow;
    RaterMode mode = RaterMode::aesthetics;
    WinRates rates;
    std::optional<ConsensusStats> consensus;  // empty when no prompt-win task
  };
  std::vector<Group> groups;  // sorted by (flow, mode)

  nlohmann::json to_json() const;
  // Columns flow,mode,metric,value,spread,count.
  void write_csv(std::ostream& out) const;
};

// Groups the pair_compare tasks by (flow, mode) and analyses each group.
RaterAnalysis analyze_ratings(std::span<const RaterTask> tasks, std::span<const RaterResponse> responses);

// Simulated raters for demos and tests: each assigned rater picks the
// prompt-side candidate with probability p_prompt, UNSURE (when allowed)
// with probability p_unsure, the other side otherwise. For
// select_best_of_4 tasks a uniformly random candidate is picked.
std::vector<RaterResponse> simulate_responses(std::span<const RaterTask> tasks, std::uint64_t seed,
                                              double p_prompt = 0.6, double p_unsure = 0.1);

void write_tasks_jsonl(std::ostream& out, std::span<const RaterTask> tasks);
std::vector<RaterTask> read_tasks_jsonl(std::istream& in);
void write_responses_jsonl(std::ostream& out, std::span<const RaterResponse> responses);
std::vector<RaterResponse> read_responses_jsonl(std::istream& in);

}  // namespace promptex
