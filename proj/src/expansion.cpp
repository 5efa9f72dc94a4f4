#include "promptex/expansion.hpp"

#include <algorithm>

#include "promptex/error.hpp"
#include "promptex/parallel.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

std::size_t token_count(std::string_view text) { return text::word_count(text); }

std::string fit_token_limit(std::string_view text, std::size_t limit) {
  require(limit >= 1, ErrorKind::invalid_argument, "fit_token_limit: limit must be >= 1");
  const auto tokens = text::words(text);
  if (tokens.size() <= limit) return std::string(text);
  const auto& last = tokens[limit - 1];
  const auto end = static_cast<std::size_t>(last.data() - text.data()) + last.size();
  return std::string(text::trim(text.substr(0, end)));
}

namespace {

std::vector<std::string> checked_generate(TextGenerator& backend, GenerationRequest request) {
  request.decode.validate();
  auto outputs = backend.generate(request);
  const auto n = static_cast<std::size_t>(request.num_samples);
  switch (request.decode.strategy) {
    case DecodeStrategy::greedy:
      if (outputs.empty()) throw BackendError("generate", "greedy decode returned no output");
      outputs.resize(1);
      break;
    case DecodeStrategy::beam: {
      const auto cap = std::min(n, static_cast<std::size_t>(request.decode.beam_size));
      if (outputs.empty() || outputs.size() > cap) {
        throw BackendError("generate", "beam decode returned " + std::to_string(outputs.size()) +
                                           " outputs, expected 1.." + std::to_string(cap));
      }
      break;
    }
    case DecodeStrategy::temperature:
      if (outputs.size() != n) {
        throw BackendError("generate", "expected " + std::to_string(n) + " outputs, got " +
                                           std::to_string(outputs.size()));
      }
      break;
  }
  for (const auto& o : outputs) {
    if (text::trim(o).empty()) throw BackendError("generate", "backend returned an empty prompt");
  }
  return outputs;
}

}  // namespace

std::vector<std::string> expand(std::string_view query, Prefix prefix, std::size_t n,
                                const DecodeParams& decode, TextGenerator& backend) {
  require(!text::trim(query).empty(), ErrorKind::empty_input, "expand: empty query");
  require(n >= 1, ErrorKind::invalid_argument, "expand: n must be >= 1");
  GenerationRequest request;
  request.context = apply_prefix(prefix, text::trim(query));
  request.num_samples = decode.strategy == DecodeStrategy::greedy ? 1 : static_cast<int>(n);
  request.decode = decode;
  request.seed = decode.seed;
  return checked_generate(backend, std::move(request));
}

std::vector<std::string> next_step(std::string_view prompt, std::size_t n, const DecodeParams& decode,
                                   std::size_t token_limit, TextGenerator& backend) {
  require(!text::trim(prompt).empty(), ErrorKind::empty_input, "next_step: empty prompt");
  require(n >= 1, ErrorKind::invalid_argument, "next_step: n must be >= 1");
  const auto input = fit_token_limit(text::trim(prompt), token_limit);
  const bool at_limit = token_count(input) >= token_limit;

  GenerationRequest request;
  request.context = apply_prefix(Prefix::MSTP, input);
  request.num_samples = decode.strategy == DecodeStrategy::greedy ? 1 : static_cast<int>(n);
  request.decode = decode;
  request.seed = decode.seed;
  auto variants = checked_generate(backend, std::move(request));

  for (auto& variant : variants) {
    if (at_limit && variant.size() > input.size() && variant.starts_with(input)) {
      auto detail = std::string(text::trim(variant.substr(input.size())));
      while (!detail.empty() && detail.front() == ',') detail = std::string(text::trim(detail.substr(1)));
      auto segments = text::split_commas(input);
      if (segments.size() > 1 && !detail.empty()) {
        segments.back() = detail;
        variant = text::join(segments, ", ");
      }
    }
    variant = fit_token_limit(variant, token_limit);
  }
  return variants;
}

ExpansionTree::ExpansionTree(std::string root_query) {
  require(!text::trim(root_query).empty(), ErrorKind::empty_input, "expansion tree needs a nonempty query");
  ExpansionNode root;
  root.text = std::move(root_query);
  nodes_.push_back(std::move(root));
}

std::size_t ExpansionTree::add_child(std::size_t parent, std::string text) {
  require(parent < nodes_.size(), ErrorKind::not_found, "add_child: unknown parent node");
  ExpansionNode child;
  child.id = nodes_.size();
  child.parent = parent;
  child.step = nodes_[parent].step + 1;
  child.text = std::move(text);
  nodes_[parent].children.push_back(child.id);
  nodes_.push_back(std::move(child));
  return nodes_.back().id;
}

void ExpansionTree::mark_failed(std::size_t node, std::string message) {
  require(node < nodes_.size(), ErrorKind::not_found, "mark_failed: unknown node");
  nodes_[node].error = std::move(message);
}

const ExpansionNode& ExpansionTree::node(std::size_t id) const {
  if (id >= nodes_.size()) fail(ErrorKind::not_found, "unknown node id " + std::to_string(id));
  return nodes_[id];
}

std::vector<std::size_t> ExpansionTree::leaves() const {
  std::vector<std::size_t> out;
  for (const auto& n : nodes_) {
    if (n.children.empty() && n.parent) out.push_back(n.id);
  }
  return out;
}

std::vector<std::size_t> ExpansionTree::layer(int step) const {
  std::vector<std::size_t> out;
  for (const auto& n : nodes_) {
    if (n.step == step) out.push_back(n.id);
  }
  return out;
}

int ExpansionTree::depth() const noexcept {
  int d = -1;
  for (const auto& n : nodes_) d = std::max(d, n.step);
  return d;
}

bool ExpansionTree::complete() const noexcept {
  return std::none_of(nodes_.begin(), nodes_.end(), [](const ExpansionNode& n) { return n.error.has_value(); });
}

std::vector<std::string> ExpansionTree::diagnostics() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.error) out.push_back("node " + std::to_string(n.id) + ": " + *n.error);
  }
  return out;
}

nlohmann::json ExpansionTree::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : nodes_) {
    nlohmann::json j = {{"id", n.id}, {"step", n.step}, {"text", n.text}, {"children", n.children}};
    j["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
    if (n.error) j["error"] = *n.error;
    nodes.push_back(std::move(j));
  }
  return {{"root", nodes_.empty() ? std::string() : nodes_.front().text},
          {"nodes", std::move(nodes)},
          {"leaf_count", leaves().size()},
          {"complete", complete()}};
}

ExpansionTree ExpansionTree::from_json(const nlohmann::json& doc) {
  const auto& nodes = doc.at("nodes");
  require(!nodes.empty(), ErrorKind::invalid_argument, "tree JSON has no nodes");
  ExpansionTree tree(nodes.at(0).at("text").get<std::string>());
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    require(n.at("id").get<std::size_t>() == i, ErrorKind::invalid_argument, "tree node ids must be dense");
    tree.add_child(n.at("parent").get<std::size_t>(), n.at("text").get<std::string>());
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].contains("error")) tree.mark_failed(i, nodes[i]["error"].get<std::string>());
  }
  return tree;
}

std::uint64_t node_seed(std::uint64_t decode_seed, std::size_t node_id) {
  return derive_seed(decode_seed, "expand_node", node_id);
}

namespace {

std::vector<std::string> generate_for_node(const ExpansionTree& tree, std::size_t node_id, std::size_t n,
                                           const DecodeParams& decode, TextGenerator& backend,
                                           const TreeOptions& options) {
  auto params = decode;
  params.seed = node_seed(decode.seed, node_id);
  const auto& node = tree.node(node_id);
  if (!node.parent) return expand(node.text, options.prefix, n, params, backend);
  return next_step(node.text, n, params, options.token_limit, backend);
}

}  // namespace

std::vector<std::size_t> expand_node(ExpansionTree& tree, std::size_t node_id, std::size_t n,
                                     const DecodeParams& decode, TextGenerator& backend,
                                     const TreeOptions& options) {
  auto texts = generate_for_node(tree, node_id, n, decode, backend, options);
  std::vector<std::size_t> ids;
  for (auto& t : texts) ids.push_back(tree.add_child(node_id, std::move(t)));
  return ids;
}

ExpansionTree expand_tree(std::string_view query, int t_max, std::size_t branching,
                          const DecodeParams& decode, TextGenerator& backend, const TreeOptions& options) {
  require(t_max >= 0, ErrorKind::invalid_argument, "expand_tree: t_max must be >= 0");
  require(branching >= 1, ErrorKind::invalid_argument, "expand_tree: branching must be >= 1");
  decode.validate();

  ExpansionTree tree{std::string(text::trim(query))};
  std::vector<std::size_t> frontier{0};
  for (int step = 0; step <= t_max && !frontier.empty(); ++step) {
    std::vector<std::vector<std::string>> results(frontier.size());
    std::vector<std::optional<std::string>> errors(frontier.size());
    parallel_for(frontier.size(), options.max_parallel, [&](std::size_t i) {
      try {
        results[i] = generate_for_node(tree, frontier[i], branching, decode, backend, options);
      } catch (const BackendError& e) {
        errors[i] = e.what();
      }
    });
    std::vector<std::size_t> next;
    for (std::size_t i = 0; i < frontier.size(); ++i) {
      if (errors[i]) {
        tree.mark_failed(frontier[i], *errors[i]);
        continue;
      }
      for (auto& text : results[i]) next.push_back(tree.add_child(frontier[i], std::move(text)));
    }
    frontier = std::move(next);
  }
  return tree;
}

}  // namespace promptex
