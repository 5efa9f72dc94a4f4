#pragma once

// Automatic evaluation of a straight-query baseline or an expansion system:
// per-item raw records, per-bucket reports folded from them, system deltas
// and the flavor renderability probe.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptex/backends.hpp"
#include "promptex/dataset.hpp"
#include "promptex/decode.hpp"
#include "promptex/prefix.hpp"

namespace promptex {

struct TypedQuery {
  std::string query;
  QueryType type;

  bool operator==(const TypedQuery&) const = default;
};

// JSONL, one {"query": ..., "query_type": "abstract_short"} per line.
std::vector<TypedQuery> read_query_set(std::istream& in);
std::vector<TypedQuery> load_query_set(const std::string& path);
void write_query_set(std::ostream& out, std::span<const TypedQuery> queries);

enum class SystemKind { straight_query, expansion };

std::string_view to_string(SystemKind kind) noexcept;
SystemKind parse_system_kind(std::string_view name);

struct EvalSystem {
  std::string name = "expansion";
  SystemKind kind = SystemKind::expansion;
  Prefix prefix = Prefix::NONE;
  DecodeParams decode = DecodeParams::sampled(1.0);
  std::size_t n_prompts = 4;
  // When larger than n_prompts, this many prompts are generated and the
  // n_prompts whose images are most diverse are kept.
  std::size_t posthoc_pool = 0;

  static EvalSystem straight(std::string name = "straight");
  void validate() const;
};

struct EvalOptions {
  std::size_t n_images = 4;  // images per query for the straight system
  std::uint64_t seed = 0;
  std::size_t max_parallel = 4;
};

struct EvalImage {
  std::string image_id;
  std::string prompt;
  std::uint64_t seed = 0;
  double aesthetics = 0.0;
  double alignment = 0.0;  // cos(query embedding, image embedding)
};

struct EvalItemRecord {
  std::string system;
  std::string query;
  QueryType query_type;
  std::vector<std::string> prompts;
  std::vector<EvalImage> images;
  double diversity = 0.0;
  std::optional<double> repetition;
  std::optional<std::string> error;  // backend failure; the record carries no metrics

  nlohmann::json to_json() const;
  static EvalItemRecord from_json(const nlohmann::json& doc);
};

struct BucketReport {
  MetricsSummary aesthetics;
  MetricsSummary alignment;
  MetricsSummary diversity;
  std::optional<double> repetition;
  std::size_t queries = 0;
};

// Bucket names: all, abstract, concrete, short, medium, long.
std::vector<std::string> buckets_of(const QueryType& type);

struct EvalReport {
  std::string system;
  std::map<std::string, BucketReport> buckets;
  std::size_t failed_queries = 0;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& doc);
  // Columns bucket,metric,mean,std,count.
  void write_csv(std::ostream& out) const;
};

// Aggregation is a pure fold over the raw records.
EvalReport fold_records(std::string system, std::span<const EvalItemRecord> records);

struct EvalRun {
  std::vector<EvalItemRecord> records;  // in query order
  EvalReport report;
};

// Seed used for every draw belonging to one query; depends only on the query
// text so results for a query do not change when others are added or removed.
std::uint64_t query_seed(std::uint64_t seed, std::string_view query);

EvalItemRecord evaluate_query(const TypedQuery& query, const EvalSystem& system, const EvalOptions& options,
                              Backends& backends);
EvalRun run_auto_eval(std::span<const TypedQuery> queries, const EvalSystem& system, const EvalOptions& options,
                      Backends& backends);

void write_records_jsonl(std::ostream& out, std::span<const EvalItemRecord> records);
std::vector<EvalItemRecord> read_records_jsonl(std::istream& in);

struct MetricDelta {
  double aesthetics = 0.0;
  double alignment = 0.0;
  double diversity = 0.0;
  std::optional<double> repetition;
};

struct DeltaReport {
  std::string system_a;
  std::string system_b;
  std::map<std::string, MetricDelta> buckets;  // a - b

  nlohmann::json to_json() const;
};

DeltaReport compare_systems(const EvalReport& a, const EvalReport& b);

// --- flavor probe --------------------------------------------------------

struct ProbeCell {
  std::string flavor;
  std::string query;
  std::string prompt;  // query + ", " + flavor
  std::uint64_t seed = 0;
  std::optional<double> query_image;   // cos(query, image)
  std::optional<double> prompt_image;  // cos(prompt, image)
  std::optional<std::string> error;

  nlohmann::json to_json() const;
};

struct ProbeEntry {
  std::string flavor;
  double query_image = 0.0;
  double prompt_image = 0.0;
  double average = 0.0;  // (query_image + prompt_image) / 2
  std::size_t cells = 0;
};

struct FlavorProbeReport {
  std::vector<ProbeEntry> ranking;  // best first
  std::vector<ProbeCell> cells;

  nlohmann::json to_json() const;
};

// Averages successful cells per flavor and ranks by the mean of the two
// averages, descending, ties broken by flavor name. Flavors without a
// successful cell are dropped.
std::vector<ProbeEntry> rank_probe_cells(std::span<const ProbeCell> cells);

// Every query is rendered with the same seed for all flavors.
FlavorProbeReport flavor_probe(std::span<const std::string> flavors, std::span<const std::string> queries,
                               Backends& backends, std::uint64_t seed, std::size_t max_parallel = 4);

}  // namespace promptex
