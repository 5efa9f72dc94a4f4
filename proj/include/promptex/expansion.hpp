#pragma once

// Serving-side prompt expansion: N-sample expansion of a query, multi-step
// expansion of a chosen prompt, and the expansion tree built by repeating
// the latter on every leaf.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptex/backends.hpp"
#include "promptex/decode.hpp"
#include "promptex/prefix.hpp"

namespace promptex {

inline constexpr std::size_t kDefaultTokenLimit = 76;

// Tokens here are whitespace-delimited words.
std::size_t token_count(std::string_view text);

// Unchanged when within `limit` tokens; otherwise cut after the limit-th
// token, keeping the original spacing up to that point.
std::string fit_token_limit(std::string_view text, std::size_t limit);

// Context "<PREFIX> query" (bare query for NONE), n samples. Greedy yields one
// prompt, beam at most min(n, beam_size), temperature exactly n.
std::vector<std::string> expand(std::string_view query, Prefix prefix, std::size_t n,
                                const DecodeParams& decode, TextGenerator& backend);

// MSTP-prefixed expansion of an existing prompt. The input is fitted to the
// token limit first. If it already fills the limit, each variant that grew
// the input has its new detail swapped in for the input's last comma segment
// instead of appended. Every variant is fitted to the limit.
std::vector<std::string> next_step(std::string_view prompt, std::size_t n, const DecodeParams& decode,
                                   std::size_t token_limit, TextGenerator& backend);

struct ExpansionNode {
  std::size_t id = 0;
  std::optional<std::size_t> parent;  // empty for the root
  int step = -1;                      // root is -1, first expansion layer is 0
  std::string text;
  std::vector<std::size_t> children;
  // Set when expanding this node failed; its subtree is missing.
  std::optional<std::string> error;
};

// Node ids are assigned in creation order and never reused; the root is 0.
class ExpansionTree {
 public:
  ExpansionTree() = default;
  explicit ExpansionTree(std::string root_query);

  std::size_t add_child(std::size_t parent, std::string text);
  void mark_failed(std::size_t node, std::string message);

  const ExpansionNode& root() const { return nodes_.front(); }
  const ExpansionNode& node(std::size_t id) const;
  const std::vector<ExpansionNode>& nodes() const noexcept { return nodes_; }
  // Nodes excluding the root.
  std::size_t size() const noexcept { return nodes_.empty() ? 0 : nodes_.size() - 1; }
  std::vector<std::size_t> leaves() const;
  std::vector<std::size_t> layer(int step) const;
  int depth() const noexcept;  // deepest step present, -1 for a bare root
  bool complete() const noexcept;
  std::vector<std::string> diagnostics() const;

  nlohmann::json to_json() const;
  static ExpansionTree from_json(const nlohmann::json& doc);

 private:
  std::vector<ExpansionNode> nodes_;
};

struct TreeOptions {
  Prefix prefix = Prefix::NONE;  // used for the first layer only
  std::size_t token_limit = kDefaultTokenLimit;
  std::size_t max_parallel = 4;
};

// Seed of the request that expands `node_id`, derived from the decode seed.
std::uint64_t node_seed(std::uint64_t decode_seed, std::size_t node_id);

// Expands one node in place: the root via expand(), any other node via
// next_step(). Returns the new child ids. Backend failures propagate.
std::vector<std::size_t> expand_node(ExpansionTree& tree, std::size_t node_id, std::size_t n,
                                     const DecodeParams& decode, TextGenerator& backend,
                                     const TreeOptions& options = {});

// Layer 0 = expand(query); each later layer runs next_step on every leaf.
// Leaf expansions within a layer run in parallel. A failing leaf is marked
// and skipped; the tree is returned with complete() == false.
ExpansionTree expand_tree(std::string_view query, int t_max, std::size_t branching,
                          const DecodeParams& decode, TextGenerator& backend,
                          const TreeOptions& options = {});

}  // namespace promptex
