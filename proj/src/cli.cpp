#include "promptex/cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "promptex/config.hpp"
#include "promptex/dataset.hpp"
#include "promptex/error.hpp"
#include "promptex/eval.hpp"
#include "promptex/expansion.hpp"
#include "promptex/interrogator.hpp"
#include "promptex/io.hpp"
#include "promptex/pipeline.hpp"
#include "promptex/rater.hpp"
#include "promptex/rng.hpp"
#include "promptex/service.hpp"
#include "promptex/text.hpp"

namespace promptex {

namespace {

std::atomic<bool> g_stop{false};

extern "C" void handle_stop_signal(int) { g_stop = true; }

struct Globals {
  std::string config_path;
  bool mock = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallel;
};

Config resolve_config(const Globals& g) {
  Config c = g.config_path.empty() ? Config{} : load_config(g.config_path);
  if (g.mock) c.mock = true;
  if (g.seed) c.seed = *g.seed;
  if (g.parallel) c.max_parallel = *g.parallel;
  c.validate();
  return c;
}

DecodeParams decode_from(const Config& config, const std::string& strategy, std::optional<double> temperature,
                         std::optional<int> beam_size) {
  DecodeParams d = config.decode;
  if (!strategy.empty()) d.strategy = parse_decode_strategy(strategy);
  if (temperature) {
    if (*temperature == 0.0) {
      d.strategy = DecodeStrategy::greedy;
    } else {
      d.temperature = *temperature;
    }
  }
  if (beam_size) d.beam_size = *beam_size;
  d.validate();
  return d;
}

std::vector<QueryPromptPair> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  return read_pairs_jsonl(in);
}

std::string pairs_jsonl(const std::vector<QueryPromptPair>& pairs) {
  std::ostringstream out;
  write_pairs_jsonl(out, pairs);
  return out.str();
}

std::vector<TypedQuery> load_queries_any(const std::string& path) {
  // JSONL query sets or plain text, one query per line.
  const auto lines = io::read_lines(path);
  if (!lines.empty() && text::trim(lines.front()).starts_with("{")) return load_query_set(path);
  std::vector<TypedQuery> out;
  for (const auto& l : lines) out.push_back({std::string(text::trim(l)), classify_query(l, false)});
  return out;
}

template <typename T, typename F>
std::string jsonl_of(const std::vector<T>& items, F to_json) {
  std::string out;
  for (const auto& i : items) out += to_json(i).dump() + "\n";
  return out;
}

std::vector<EvalItemRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  return read_records_jsonl(in);
}

std::vector<RaterTask> load_tasks(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  return read_tasks_jsonl(in);
}

std::vector<RaterResponse> load_responses(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open " + path);
  return read_responses_jsonl(in);
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"promptex: prompt expansion data, serving and evaluation tools", "promptex"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "TOML configuration file")->check(CLI::ExistingFile);
  app.add_flag("--mock", g.mock, "use in-process mock backends");
  app.add_option("--seed", g.seed, "root seed for every random draw");
  app.add_option("--parallel", g.parallel, "maximum concurrent backend calls");

  std::function<void()> action;

  // synth-corpus
  auto* synth_corpus_cmd = app.add_subcommand("synth-corpus", "write a synthetic prompt corpus, one per line");
  std::size_t corpus_count = 2000;
  std::string corpus_out;
  synth_corpus_cmd->add_option("--count", corpus_count, "number of prompts");
  synth_corpus_cmd->add_option("--out", corpus_out, "output text file")->required();
  synth_corpus_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      const auto corpus = synth_corpus(corpus_count, derive_seed(c.seed, "corpus"), config_catalog(c));
      io::write_file_atomic(corpus_out, text::join(corpus, "\n") + "\n");
      out << "wrote " << corpus.size() << " prompts to " << corpus_out << '\n';
    };
  });

  // synth-images
  auto* synth_images_cmd = app.add_subcommand("synth-images", "render images from synthetic prompts");
  std::size_t image_count = 1000;
  std::string images_out;
  synth_images_cmd->add_option("--count", image_count, "number of images");
  synth_images_cmd->add_option("--out", images_out, "output JSONL")->required();
  synth_images_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      const auto images = synth_images(image_count, derive_seed(c.seed, "images"), config_catalog(c), backends);
      io::write_file_atomic(images_out, jsonl_of(images, image_to_json));
      out << "wrote " << images.size() << " images to " << images_out << '\n';
    };
  });

  // synth-queries
  auto* synth_queries_cmd = app.add_subcommand("synth-queries", "write a typed synthetic query set");
  std::size_t query_count = 60;
  std::string queries_out;
  synth_queries_cmd->add_option("--count", query_count, "number of queries");
  synth_queries_cmd->add_option("--out", queries_out, "output JSONL")->required();
  synth_queries_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      const auto queries = synth_queries(query_count, derive_seed(c.seed, "queries"));
      std::ostringstream buf;
      write_query_set(buf, queries);
      io::write_file_atomic(queries_out, buf.str());
      out << "wrote " << queries.size() << " queries to " << queries_out << '\n';
    };
  });

  // build-catalog
  auto* catalog_cmd = app.add_subcommand("build-catalog", "count flavor phrases in a prompt corpus");
  std::string corpus_in, lexicon_in, catalog_out;
  std::size_t min_count = 2;
  catalog_cmd->add_option("--corpus", corpus_in, "prompt corpus, one per line")->required()->check(CLI::ExistingFile);
  catalog_cmd->add_option("--lexicon", lexicon_in, "phrase<TAB>category file")->check(CLI::ExistingFile);
  catalog_cmd->add_option("--min-count", min_count, "minimum number of prompts using a phrase");
  catalog_cmd->add_option("--out", catalog_out, "output catalog JSON")->required();
  catalog_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      const auto path = lexicon_in.empty() ? c.paths.lexicon : lexicon_in;
      const auto lexicon = path.empty() ? default_lexicon() : load_lexicon(path);
      const auto corpus = io::read_lines(corpus_in);
      const auto catalog = build_flavor_catalog(corpus, lexicon, min_count);
      io::write_json_file(catalog_out, catalog.to_json());
      out << "catalog: " << catalog.size() << " flavors in " << catalog.categories().size() << " categories\n";
    };
  });

  // invert
  auto* invert_cmd = app.add_subcommand("invert", "turn images into caption + flavor prompts");
  std::string images_in, catalog_in, inversions_out;
  std::size_t k_flavors = 8;
  invert_cmd->add_option("--images", images_in, "image records JSONL")->required()->check(CLI::ExistingFile);
  invert_cmd->add_option("--catalog", catalog_in, "catalog JSON")->check(CLI::ExistingFile);
  invert_cmd->add_option("--k", k_flavors, "flavors per prompt");
  invert_cmd->add_option("--out", inversions_out, "output JSONL")->required();
  invert_cmd->callback([&] {
    action = [&] {
      auto c = resolve_config(g);
      if (!catalog_in.empty()) c.paths.catalog = catalog_in;
      auto backends = make_backends(c);
      std::vector<ImageRecord> images;
      for (const auto& doc : io::read_jsonl(images_in)) images.push_back(image_from_json(doc));
      const auto inversions = invert_all(images, config_catalog(c), backends, k_flavors, c.max_parallel);
      io::write_file_atomic(inversions_out, jsonl_of(inversions, [](const auto& r) { return r.to_json(); }));
      out << "inverted " << inversions.size() << " images\n";
    };
  });

  // build-dataset
  auto* dataset_cmd = app.add_subcommand("build-dataset", "extract queries and build the split dataset");
  std::string inversions_in, pairs_out, policy_name = "full";
  DatasetOptions dataset_options;
  dataset_cmd->add_option("--inversions", inversions_in, "inversions JSONL")->required()->check(CLI::ExistingFile);
  dataset_cmd->add_option("--depth", dataset_options.depth, "queries extracted per prompt");
  dataset_cmd->add_option("--policy", policy_name, "prefix policy: full, multi_prefix, mstp_only, none");
  dataset_cmd->add_flag("--multistep", dataset_options.multistep, "add MSTP pairs from each chain");
  dataset_cmd->add_option("--out", pairs_out, "output pairs JSONL")->required();
  std::string chains_out;
  dataset_cmd->add_option("--chains", chains_out, "write query chains (JSONL arrays) here");
  dataset_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      std::vector<InversionResult> inversions;
      for (const auto& doc : io::read_jsonl(inversions_in)) inversions.push_back(InversionResult::from_json(doc));
      dataset_options.policy = parse_prefix_policy(policy_name);
      dataset_options.seed = derive_seed(c.seed, "dataset");
      dataset_options.hast_threshold = c.hast_threshold;
      dataset_options.max_parallel = c.max_parallel;
      const auto build = build_dataset(inversions, dataset_options, backends);
      io::write_file_atomic(pairs_out, pairs_jsonl(build.pairs));
      if (!chains_out.empty()) {
        std::string buf;
        for (const auto& chain : build.chains) buf += nlohmann::json(chain_sequence(chain)).dump() + "\n";
        io::write_file_atomic(chains_out, buf);
      }
      const auto counts = count_splits(build.pairs);
      out << nlohmann::json{{"pairs", build.pairs.size()},
                            {"train_base", counts.train_base},
                            {"train_rft", counts.train_rft},
                            {"val", counts.val},
                            {"test", counts.test},
                            {"truncated_chains", build.truncated_chains},
                            {"empty_chains", build.empty_chains}}
                 .dump()
          << '\n';
    };
  });

  // rft-filter
  auto* rft_cmd = app.add_subcommand("rft-filter", "score pairs against their images and keep the best");
  std::string rft_pairs_in, rft_out, rft_scored_out, rft_split = "train_rft", rft_policy = "full";
  std::optional<double> rft_threshold;
  rft_cmd->add_option("--pairs", rft_pairs_in, "pairs JSONL")->required()->check(CLI::ExistingFile);
  rft_cmd->add_option("--threshold", rft_threshold, "minimum score to keep");
  rft_cmd->add_option("--split", rft_split, "split to score, or 'all'");
  rft_cmd->add_option("--policy", rft_policy, "prefix policy for kept pairs");
  rft_cmd->add_option("--out", rft_out, "kept pairs JSONL")->required();
  rft_cmd->add_option("--scored", rft_scored_out, "all scored pairs JSONL");
  rft_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      std::vector<QueryPromptPair> input;
      const bool all = rft_split == "all";
      const auto split = all ? Split::unassigned : parse_split(rft_split);
      for (auto& p : load_pairs(rft_pairs_in)) {
        if (all || p.split == split) input.push_back(std::move(p));
      }
      const auto run = run_rft_filter(input, rft_threshold.value_or(c.rft_threshold), parse_prefix_policy(rft_policy),
                                      derive_seed(c.seed, "rft"), backends, c.max_parallel);
      io::write_file_atomic(rft_out, pairs_jsonl(run.kept));
      if (!rft_scored_out.empty()) {
        io::write_file_atomic(rft_scored_out, jsonl_of(run.scored, [](const auto& s) { return s.to_json(); }));
      }
      out << "kept " << run.kept.size() << " of " << run.scored.size() << " pairs\n";
    };
  });

  // curriculum
  auto* curriculum_cmd = app.add_subcommand("curriculum", "emit training items with prefix dropout");
  std::string curriculum_in, curriculum_out;
  std::size_t curriculum_steps = 100, curriculum_batch = 32;
  curriculum_cmd->add_option("--pairs", curriculum_in, "pairs JSONL")->required()->check(CLI::ExistingFile);
  curriculum_cmd->add_option("--steps", curriculum_steps, "total steps T");
  curriculum_cmd->add_option("--batch", curriculum_batch, "items per step");
  curriculum_cmd->add_option("--out", curriculum_out, "output JSONL")->required();
  curriculum_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      std::vector<QueryPromptPair> train;
      for (auto& p : load_pairs(curriculum_in)) {
        if (p.split == Split::train_base || p.split == Split::train_rft || p.split == Split::unassigned) {
          train.push_back(std::move(p));
        }
      }
      CurriculumStream stream(std::move(train), curriculum_steps, curriculum_batch, derive_seed(c.seed, "curriculum"));
      std::string buf;
      std::size_t dropped = 0, total = 0;
      while (auto item = stream.next()) {
        ++total;
        if (item->prefix_dropped) ++dropped;
        buf += nlohmann::json{{"step", item->step},
                              {"prefix_dropped", item->prefix_dropped},
                              {"input", item->pair.input_text()},
                              {"target", item->pair.prompt}}
                   .dump() +
               "\n";
      }
      io::write_file_atomic(curriculum_out, buf);
      out << "emitted " << total << " items, prefix dropped on " << dropped << '\n';
    };
  });

  // expand
  auto* expand_cmd = app.add_subcommand("expand", "expand one query into N prompts");
  std::string expand_query, expand_prefix = "NONE", expand_decode;
  std::optional<std::size_t> expand_n;
  std::optional<double> expand_temperature;
  std::optional<int> expand_beam;
  expand_cmd->add_option("--query", expand_query, "query text")->required();
  expand_cmd->add_option("--prefix", expand_prefix, "control prefix (ABST, DTL, ..., NONE)");
  expand_cmd->add_option("--n", expand_n, "number of prompts");
  expand_cmd->add_option("--decode", expand_decode, "temperature, greedy or beam");
  expand_cmd->add_option("--temperature", expand_temperature, "sampling temperature, 0 means greedy");
  expand_cmd->add_option("--beam-size", expand_beam, "beam size");
  expand_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      auto decode = decode_from(c, expand_decode, expand_temperature, expand_beam);
      decode.seed = derive_seed(c.seed, "cli_expand");
      for (const auto& p : expand(expand_query, parse_prefix(expand_prefix), expand_n.value_or(c.n), decode,
                                  *backends.expander)) {
        out << p << '\n';
      }
    };
  });

  // tree
  auto* tree_cmd = app.add_subcommand("tree", "build a multi-step expansion tree");
  std::string tree_query, tree_prefix = "NONE", tree_decode, tree_out;
  int tree_steps = 1;
  std::optional<std::size_t> tree_n;
  tree_cmd->add_option("--query", tree_query, "query text")->required();
  tree_cmd->add_option("--steps", tree_steps, "last expansion step t_max");
  tree_cmd->add_option("--n", tree_n, "branching factor");
  tree_cmd->add_option("--prefix", tree_prefix, "prefix for the first layer");
  tree_cmd->add_option("--decode", tree_decode, "temperature, greedy or beam");
  tree_cmd->add_option("--out", tree_out, "write the tree JSON here instead of standard output");
  tree_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      auto decode = decode_from(c, tree_decode, std::nullopt, std::nullopt);
      decode.seed = derive_seed(c.seed, "cli_tree");
      TreeOptions options;
      options.prefix = parse_prefix(tree_prefix);
      options.token_limit = c.token_limit;
      options.max_parallel = c.max_parallel;
      const auto tree = expand_tree(tree_query, tree_steps, tree_n.value_or(c.n), decode, *backends.expander, options);
      auto doc = tree.to_json();
      doc["diagnostics"] = tree.diagnostics();
      if (tree_out.empty()) {
        out << doc.dump(2) << '\n';
      } else {
        io::write_json_file(tree_out, doc);
      }
      if (!tree.complete()) err << "warning: tree incomplete, " << tree.diagnostics().size() << " failed nodes\n";
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "automatic evaluation of a system on a query set");
  std::string eval_queries, eval_system = "expansion", eval_name, eval_prefix = "NONE", eval_decode, eval_out,
                            eval_baseline;
  std::optional<double> eval_temperature;
  std::optional<std::size_t> eval_n;
  std::size_t eval_images = 4, eval_posthoc = 0;
  eval_cmd->add_option("--queries", eval_queries, "query set (JSONL or text)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--system", eval_system, "straight or expansion");
  eval_cmd->add_option("--name", eval_name, "system name used in the report");
  eval_cmd->add_option("--prefix", eval_prefix, "expansion prefix");
  eval_cmd->add_option("--decode", eval_decode, "temperature, greedy or beam");
  eval_cmd->add_option("--temperature", eval_temperature, "sampling temperature, 0 means greedy");
  eval_cmd->add_option("--n", eval_n, "prompts per query");
  eval_cmd->add_option("--n-images", eval_images, "images per query for the straight system");
  eval_cmd->add_option("--posthoc-pool", eval_posthoc, "generate this many prompts and keep the most diverse n");
  eval_cmd->add_option("--baseline", eval_baseline, "report JSON to compare against")->check(CLI::ExistingFile);
  eval_cmd->add_option("--out-dir", eval_out, "output directory")->required();
  eval_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      EvalSystem system;
      system.kind = parse_system_kind(eval_system);
      system.name = eval_name.empty() ? std::string(system.kind == SystemKind::straight_query ? "straight" : "expansion")
                                      : eval_name;
      system.prefix = parse_prefix(eval_prefix);
      system.decode = decode_from(c, eval_decode, eval_temperature, std::nullopt);
      system.n_prompts = eval_n.value_or(c.n);
      system.posthoc_pool = eval_posthoc;
      EvalOptions options;
      options.n_images = eval_images;
      options.seed = derive_seed(c.seed, "eval");
      options.max_parallel = c.max_parallel;
      const auto queries = load_queries_any(eval_queries);
      const auto run = run_auto_eval(queries, system, options, backends);
      io::ensure_directory(eval_out);
      std::ostringstream records, csv;
      write_records_jsonl(records, run.records);
      run.report.write_csv(csv);
      io::write_file_atomic(eval_out + "/records.jsonl", records.str());
      io::write_json_file(eval_out + "/report.json", run.report.to_json());
      io::write_file_atomic(eval_out + "/report.csv", csv.str());
      if (!eval_baseline.empty()) {
        const auto baseline = EvalReport::from_json(io::read_json_file(eval_baseline));
        io::write_json_file(eval_out + "/delta.json", compare_systems(run.report, baseline).to_json());
      }
      const auto& all = run.report.buckets.at("all");
      out << system.name << ": aesthetics " << all.aesthetics.mean << ", alignment " << all.alignment.mean
          << ", diversity " << all.diversity.mean << " over " << all.queries << " queries\n";
    };
  });

  // probe-flavors
  auto* probe_cmd = app.add_subcommand("probe-flavors", "rank flavors by how well images render them");
  std::string probe_flavors, probe_catalog, probe_queries, probe_out;
  probe_cmd->add_option("--flavors", probe_flavors, "comma separated flavors");
  probe_cmd->add_option("--catalog", probe_catalog, "probe every flavor of this catalog")->check(CLI::ExistingFile);
  probe_cmd->add_option("--queries", probe_queries, "probe queries (JSONL or text)")->required()->check(CLI::ExistingFile);
  probe_cmd->add_option("--out", probe_out, "output JSON")->required();
  probe_cmd->callback([&] {
    action = [&] {
      auto c = resolve_config(g);
      if (!probe_catalog.empty()) c.paths.catalog = probe_catalog;
      auto backends = make_backends(c);
      std::vector<std::string> flavors = text::split_commas(probe_flavors);
      if (flavors.empty()) {
        for (const auto& e : config_catalog(c).ranked_pool()) flavors.push_back(e.flavor);
      }
      std::vector<std::string> queries;
      for (const auto& q : load_queries_any(probe_queries)) queries.push_back(q.query);
      const auto report = flavor_probe(flavors, queries, backends, derive_seed(c.seed, "probe"), c.max_parallel);
      auto doc = report.to_json();
      doc["cells"] = nlohmann::json::array();
      for (const auto& cell : report.cells) doc["cells"].push_back(cell.to_json());
      io::write_json_file(probe_out, doc);
      for (std::size_t i = 0; i < report.ranking.size(); ++i) {
        out << i + 1 << '\t' << report.ranking[i].flavor << '\t' << report.ranking[i].average << '\n';
      }
    };
  });

  // rater-gen
  auto* rater_gen_cmd = app.add_subcommand("rater-gen", "generate side-by-side rater tasks from eval records");
  std::string rg_flow = "1x1", rg_mode = "aesthetics", rg_straight, rg_expansion, rg_out, rg_stage1, rg_responses;
  std::size_t rg_raters = 12;
  rater_gen_cmd->add_option("--flow", rg_flow, "1x1 or 4x4");
  rater_gen_cmd->add_option("--mode", rg_mode, "aesthetics or alignment");
  rater_gen_cmd->add_option("--straight", rg_straight, "straight-query eval records")->check(CLI::ExistingFile);
  rater_gen_cmd->add_option("--expansion", rg_expansion, "expansion eval records")->check(CLI::ExistingFile);
  rater_gen_cmd->add_option("--stage1", rg_stage1, "4x4 stage-1 tasks; generates stage 2")->check(CLI::ExistingFile);
  rater_gen_cmd->add_option("--responses", rg_responses, "stage-1 responses")->check(CLI::ExistingFile);
  rater_gen_cmd->add_option("--raters", rg_raters, "size of the rater pool");
  rater_gen_cmd->add_option("--out", rg_out, "output tasks JSONL")->required();
  rater_gen_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      const auto pool = default_rater_pool(rg_raters);
      const auto seed = derive_seed(c.seed, "rater_tasks");
      std::vector<RaterTask> tasks;
      if (!rg_stage1.empty()) {
        if (rg_responses.empty()) fail(ErrorKind::invalid_argument, "--stage1 needs --responses");
        tasks = gen_4x4_stage2(load_tasks(rg_stage1), load_responses(rg_responses), seed, pool);
      } else {
        if (rg_straight.empty() || rg_expansion.empty()) {
          fail(ErrorKind::invalid_argument, "--straight and --expansion records are required");
        }
        const auto straight = load_records(rg_straight);
        std::map<std::string, EvalItemRecord> expansion;
        for (auto& r : load_records(rg_expansion)) expansion[r.query] = std::move(r);
        const auto mode = parse_rater_mode(rg_mode);
        std::vector<PairItem> pairs;
        std::vector<QuadItem> quads;
        for (std::size_t i = 0; i < straight.size(); ++i) {
          const auto& s = straight[i];
          auto it = expansion.find(s.query);
          if (it == expansion.end() || s.error || it->second.error) continue;
          const auto& e = it->second;
          char id[32];
          std::snprintf(id, sizeof id, "q%04zu", i);
          if (rg_flow == "1x1") {
            if (s.images.empty() || e.images.empty()) continue;
            pairs.push_back({id, s.query, s.images.front().image_id, e.images.front().image_id});
          } else if (rg_flow == "4x4") {
            if (s.images.size() < 4 || e.images.size() < 4) continue;
            QuadItem q{id, s.query, {}, {}};
            for (std::size_t j = 0; j < 4; ++j) {
              q.query_images[j] = s.images[j].image_id;
              q.prompt_images[j] = e.images[j].image_id;
            }
            quads.push_back(std::move(q));
          } else {
            fail(ErrorKind::invalid_argument, "--flow must be 1x1 or 4x4");
          }
        }
        tasks = rg_flow == "1x1" ? gen_1x1_tasks(pairs, mode, seed, pool) : gen_4x4_tasks(quads, mode, seed, pool);
      }
      std::ostringstream buf;
      write_tasks_jsonl(buf, tasks);
      io::write_file_atomic(rg_out, buf.str());
      out << "wrote " << tasks.size() << " tasks\n";
    };
  });

  // rater-simulate
  auto* rater_sim_cmd = app.add_subcommand("rater-simulate", "produce simulated responses for tasks");
  std::string rs_tasks, rs_out;
  double rs_prompt = 0.6, rs_unsure = 0.1;
  rater_sim_cmd->add_option("--tasks", rs_tasks, "tasks JSONL")->required()->check(CLI::ExistingFile);
  rater_sim_cmd->add_option("--p-prompt", rs_prompt, "probability of picking the prompt side");
  rater_sim_cmd->add_option("--p-unsure", rs_unsure, "probability of UNSURE where offered");
  rater_sim_cmd->add_option("--out", rs_out, "responses JSONL")->required();
  rater_sim_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      const auto responses = simulate_responses(load_tasks(rs_tasks), derive_seed(c.seed, "rater_sim"), rs_prompt, rs_unsure);
      std::ostringstream buf;
      write_responses_jsonl(buf, responses);
      io::write_file_atomic(rs_out, buf.str());
      out << "wrote " << responses.size() << " responses\n";
    };
  });

  // rater-analyze
  auto* rater_an_cmd = app.add_subcommand("rater-analyze", "win rates and consensus from rater responses");
  std::string ra_tasks, ra_responses, ra_out, ra_csv;
  rater_an_cmd->add_option("--tasks", ra_tasks, "tasks JSONL")->required()->check(CLI::ExistingFile);
  rater_an_cmd->add_option("--responses", ra_responses, "responses JSONL")->required()->check(CLI::ExistingFile);
  rater_an_cmd->add_option("--out", ra_out, "report JSON")->required();
  rater_an_cmd->add_option("--csv", ra_csv, "report CSV");
  rater_an_cmd->callback([&] {
    action = [&] {
      const auto analysis = analyze_ratings(load_tasks(ra_tasks), load_responses(ra_responses));
      io::write_json_file(ra_out, analysis.to_json());
      std::ostringstream csv;
      analysis.write_csv(csv);
      if (!ra_csv.empty()) io::write_file_atomic(ra_csv, csv.str());
      out << csv.str();
    };
  });

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "run the REST service");
  std::string serve_host, serve_session_dir, serve_tasks, serve_responses, serve_eval;
  std::optional<int> serve_port;
  serve_cmd->add_option("--host", serve_host, "bind address");
  serve_cmd->add_option("--port", serve_port, "port, 0 picks a free one");
  serve_cmd->add_option("--session-dir", serve_session_dir, "session store directory");
  serve_cmd->add_option("--tasks", serve_tasks, "rater tasks JSONL");
  serve_cmd->add_option("--responses", serve_responses, "rater responses JSONL (appended)");
  serve_cmd->add_option("--eval-report", serve_eval, "report JSON served at /api/reports/eval");
  serve_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      ServiceOptions options;
      options.seed = c.seed;
      options.default_n = c.n;
      options.decode = c.decode;
      options.token_limit = c.token_limit;
      options.session_dir = serve_session_dir.empty() ? c.paths.session_dir : serve_session_dir;
      ExpansionService sessions(make_backends(c), options);
      const auto tasks_path = serve_tasks.empty() ? c.paths.rater_tasks : serve_tasks;
      RaterDesk raters(tasks_path.empty() || !io::exists(tasks_path) ? std::vector<RaterTask>{} : load_tasks(tasks_path),
                       serve_responses.empty() ? c.paths.rater_responses : serve_responses);
      ApiServer server(sessions, raters, serve_eval.empty() ? c.paths.eval_report : serve_eval);
      const auto host = serve_host.empty() ? c.server.host : serve_host;
      const int port = server.start(host, serve_port.value_or(c.server.port));
      out << "listening on http://" << host << ":" << port << std::endl;
      g_stop = false;
      std::signal(SIGINT, handle_stop_signal);
      std::signal(SIGTERM, handle_stop_signal);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      sessions.snapshot();
      out << "stopped" << std::endl;
    };
  });

  // pipeline
  auto* pipeline_cmd = app.add_subcommand("pipeline", "run catalog, inversion, dataset, filter and eval end to end");
  std::string pipeline_out;
  PipelineOptions pipeline_options;
  pipeline_cmd->add_option("--out-dir", pipeline_out, "artifact directory")->required();
  pipeline_cmd->add_option("--corpus", pipeline_options.corpus_size, "synthetic corpus size");
  pipeline_cmd->add_option("--images", pipeline_options.images, "images to invert");
  pipeline_cmd->add_option("--queries", pipeline_options.queries, "eval queries");
  pipeline_cmd->callback([&] {
    action = [&] {
      const auto c = resolve_config(g);
      auto backends = make_backends(c);
      pipeline_options.seed = c.seed;
      pipeline_options.rft_threshold = c.rft_threshold;
      pipeline_options.max_parallel = c.max_parallel;
      for (const auto& f : run_pipeline(pipeline_options, backends, pipeline_out)) out << pipeline_out << "/" << f << '\n';
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    if (action) action();
    return 0;
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
  } catch (const nlohmann::json::exception& e) {
    err << "error [invalid_argument]: " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return 1;
}

}  // namespace promptex
