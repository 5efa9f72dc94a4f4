#include "promptex/pipeline.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "promptex/error.hpp"
#include "promptex/io.hpp"
#include "promptex/parallel.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

namespace {

constexpr std::array kAdjectives = {"red",    "weathered", "tiny",   "quiet", "golden", "broken", "glass",
                                    "paper",  "wooden",  "silver", "giant", "sleepy", "rusty",  "floating"};
constexpr std::array kNouns = {"fox",    "lighthouse", "bicycle", "teapot",  "robot", "cathedral", "whale",
                               "garden", "violin",     "owl",     "tram",    "brain", "mountain",  "lantern"};
constexpr std::array kSettings = {"in a forest",   "on a wall",          "at dusk",         "under the sea",
                                  "in the rain",   "on a kitchen table", "in outer space",  "near a river",
                                  "in a city park", "on a snowy hill"};
constexpr std::array kGenericPhrases = {"highly detailed", "sharp focus", "soft lighting", "wide angle"};

constexpr std::array kAbstractNouns = {"hope",    "solitude", "nostalgia", "joy",   "grief",   "freedom",
                                       "wonder",  "patience", "longing",   "chaos", "harmony", "courage"};
constexpr std::array kAbstractAdjectives = {"quiet", "endless", "fragile", "bright", "distant", "restless"};

template <typename List>
std::string pick(Rng& rng, const List& list) {
  return list[rng.below(list.size())];
}

std::string subject(Rng& rng) {
  return "a " + pick(rng, kAdjectives) + " " + pick(rng, kNouns) + " " + pick(rng, kSettings);
}

std::string abstract_query(Rng& rng, LengthBucket length) {
  switch (length) {
    case LengthBucket::short_length:
      return rng.bernoulli(0.5) ? pick(rng, kAbstractNouns)
                                : pick(rng, kAbstractAdjectives) + " " + pick(rng, kAbstractNouns);
    case LengthBucket::medium_length:
      return "the " + pick(rng, kAbstractAdjectives) + " " + pick(rng, kAbstractNouns) + " of " +
             pick(rng, kAbstractNouns);
    case LengthBucket::long_length:
      return "the " + pick(rng, kAbstractNouns) + " we feel when " + pick(rng, kAbstractNouns) +
             " slowly turns into " + pick(rng, kAbstractNouns);
  }
  return {};
}

std::string concrete_query(Rng& rng, LengthBucket length) {
  switch (length) {
    case LengthBucket::short_length:
      return rng.bernoulli(0.5) ? pick(rng, kNouns) : pick(rng, kAdjectives) + " " + pick(rng, kNouns);
    case LengthBucket::medium_length:
      return subject(rng);
    case LengthBucket::long_length:
      return subject(rng) + " next to a " + pick(rng, kAdjectives) + " " + pick(rng, kNouns);
  }
  return {};
}

}  // namespace

CategoryLexicon default_lexicon() {
  CategoryLexicon lexicon;
  const auto catalog = default_mock_catalog();
  for (auto category : catalog.categories()) {
    for (const auto& entry : catalog.flavors(category)) lexicon[entry.flavor] = category;
  }
  return lexicon;
}

std::vector<std::string> synth_corpus(std::size_t count, std::uint64_t seed, const FlavorCatalog& catalog) {
  const auto pool = catalog.ranked_pool();
  require(!pool.empty(), ErrorKind::empty_input, "synth_corpus: empty catalog");
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, "synth_corpus", i));
    std::vector<std::string> parts{subject(rng)};
    auto shuffled = pool;
    rng.shuffle(shuffled);
    const auto k = std::min<std::size_t>(shuffled.size(), 2 + rng.below(5));
    for (std::size_t j = 0; j < k; ++j) parts.push_back(shuffled[j].flavor);
    if (rng.bernoulli(0.3)) parts.push_back(pick(rng, kGenericPhrases));
    out.push_back(text::join(parts, ", "));
  }
  return out;
}

std::vector<ImageRecord> synth_images(std::size_t count, std::uint64_t seed, const FlavorCatalog& catalog,
                                      Backends& backends) {
  const auto prompts = synth_corpus(count, derive_seed(seed, "synth_images"), catalog);
  std::vector<ImageRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto image = backends.image_generator->generate_image(prompts[i], derive_seed(seed, "synth_image_seed", i));
    image.embedding.reset();
    out.push_back(std::move(image));
  }
  return out;
}

std::vector<TypedQuery> synth_queries(std::size_t count, std::uint64_t seed) {
  constexpr std::array<QueryType, 6> types = {{{Abstractness::abstract, LengthBucket::short_length},
                                               {Abstractness::abstract, LengthBucket::medium_length},
                                               {Abstractness::abstract, LengthBucket::long_length},
                                               {Abstractness::concrete, LengthBucket::short_length},
                                               {Abstractness::concrete, LengthBucket::medium_length},
                                               {Abstractness::concrete, LengthBucket::long_length}}};
  std::vector<TypedQuery> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto type = types[i % types.size()];
    Rng rng(derive_seed(seed, "synth_queries", i));
    auto query = type.abstractness == Abstractness::abstract ? abstract_query(rng, type.length)
                                                             : concrete_query(rng, type.length);
    const auto actual = classify_query(query, type.abstractness == Abstractness::abstract);
    if (!(actual == type)) fail(ErrorKind::state, "synth_queries produced a mistyped query: " + query);
    out.push_back({std::move(query), type});
  }
  return out;
}

std::vector<FewShotExample> default_fewshot() {
  return {
      {"a lighthouse on a cliff at night, oil painting, dramatic clouds", "a lighthouse on a cliff at night"},
      {"portrait of an old sailor, charcoal sketch, by claude monet", "portrait of an old sailor"},
      {"a tiny robot watering plants, pixel art, soft lighting", "a tiny robot watering plants"},
  };
}

nlohmann::json image_to_json(const ImageRecord& image) {
  nlohmann::json doc = {{"image_id", image.image_id}, {"prompt", image.prompt}, {"seed", image.seed}};
  if (image.embedding) {
    doc["embedding"] = std::vector<double>(image.embedding->values().begin(), image.embedding->values().end());
  }
  return doc;
}

ImageRecord image_from_json(const nlohmann::json& doc) {
  ImageRecord image;
  image.image_id = doc.at("image_id").get<std::string>();
  image.prompt = doc.value("prompt", std::string{});
  image.seed = doc.value("seed", std::uint64_t{0});
  if (doc.contains("embedding")) image.embedding = EmbeddingVector(doc["embedding"].get<std::vector<double>>());
  return image;
}

std::vector<InversionResult> invert_all(std::span<const ImageRecord> images, const FlavorCatalog& catalog,
                                        Backends& backends, std::size_t k_flavors, std::size_t max_parallel) {
  const FlavorIndex index(catalog, *backends.text_embedder);
  std::vector<InversionResult> out(images.size());
  parallel_for(images.size(), max_parallel,
               [&](std::size_t i) { out[i] = invert_image(images[i], index, backends, k_flavors); });
  return out;
}

Mixture assign_mixture(std::string_view prompt, std::uint64_t seed) {
  constexpr std::array kBase = {Mixture::abstract, Mixture::detailed, Mixture::grounded, Mixture::specificity,
                                Mixture::flavor};
  return kBase[derive_seed(seed, "mixture", fnv1a(prompt)) % kBase.size()];
}

DatasetBuild build_dataset(std::span<const InversionResult> inversions, const DatasetOptions& options,
                           Backends& backends) {
  require(!inversions.empty(), ErrorKind::empty_input, "build_dataset: no inversions");
  const auto fewshot = default_fewshot();
  std::vector<QueryChain> chains(inversions.size());
  parallel_for(inversions.size(), options.max_parallel, [&](std::size_t i) {
    const auto& prompt = inversions[i].prompt;
    chains[i] = extract_query_chain(prompt, fewshot, *backends.extractor, options.depth,
                                    derive_seed(options.seed, "extract_chain", fnv1a(prompt)));
  });

  std::vector<char> high_aesthetics(inversions.size(), 0);
  if (options.hast_threshold) {
    parallel_for(inversions.size(), options.max_parallel, [&](std::size_t i) {
      const auto& prompt = inversions[i].prompt;
      const auto image =
          backends.image_generator->generate_image(prompt, derive_seed(options.seed, "hast_image", fnv1a(prompt)));
      high_aesthetics[i] = backends.aesthetic->aesthetic_score(image) > *options.hast_threshold;
    });
  }

  DatasetBuild build;
  std::vector<std::vector<std::string>> sequences;
  for (std::size_t i = 0; i < chains.size(); ++i) {
    const auto& chain = chains[i];
    if (chain.truncated) ++build.truncated_chains;
    if (chain.queries.empty()) {
      ++build.empty_chains;
      continue;
    }
    const auto mixture = high_aesthetics[i] ? Mixture::high_aesthetics : assign_mixture(chain.prompt, options.seed);
    for (auto& pair : chain_pairs(chain, mixture, mixture == Mixture::abstract)) {
      build.pairs.push_back(assign_prefix(std::move(pair), options.policy));
    }
    if (options.multistep) sequences.push_back(chain_sequence(chain));
  }
  if (options.multistep) {
    for (auto& pair : build_multistep_pairs(sequences)) {
      build.pairs.push_back(assign_prefix(std::move(pair), options.policy));
    }
  }
  require(!build.pairs.empty(), ErrorKind::empty_input, "build_dataset: no query could be extracted");
  apply_splits(build.pairs, derive_seed(options.seed, "splits"));
  build.chains = std::move(chains);
  return build;
}

RftRun run_rft_filter(std::span<const QueryPromptPair> pairs, double threshold, PrefixPolicy policy,
                      std::uint64_t seed, Backends& backends, std::size_t max_parallel) {
  RftRun run;
  run.scored.resize(pairs.size());
  parallel_for(pairs.size(), max_parallel, [&](std::size_t i) {
    const auto image_seed = derive_seed(seed, "rft_image", fnv1a(pairs[i].query + "\n" + pairs[i].prompt));
    run.scored[i] = score_pair(pairs[i], image_seed, backends);
  });
  for (const auto& s : rft_filter(run.scored, threshold)) {
    auto pair = s.pair;
    pair.source = Mixture::rft;
    run.kept.push_back(assign_prefix(std::move(pair), policy));
  }
  return run;
}

namespace {

std::string to_jsonl(const std::vector<nlohmann::json>& docs) {
  std::string out;
  for (const auto& d : docs) out += d.dump() + "\n";
  return out;
}

std::string pairs_text(const std::vector<QueryPromptPair>& pairs) {
  std::ostringstream out;
  write_pairs_jsonl(out, pairs);
  return out.str();
}

}  // namespace

std::vector<std::string> run_pipeline(const PipelineOptions& options, Backends& backends,
                                      const std::string& out_dir) {
  io::ensure_directory(out_dir);
  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    io::write_file_atomic(out_dir + "/" + name, content);
    written.push_back(name);
  };

  const auto base_catalog = default_mock_catalog();
  const auto corpus = synth_corpus(options.corpus_size, derive_seed(options.seed, "corpus"), base_catalog);
  emit("corpus.txt", text::join(corpus, "\n") + "\n");

  const auto catalog = build_flavor_catalog(corpus, default_lexicon(), options.min_count);
  emit("catalog.json", catalog.to_json().dump(2) + "\n");

  const auto images = synth_images(options.images, derive_seed(options.seed, "images"), base_catalog, backends);
  std::vector<nlohmann::json> docs;
  for (const auto& img : images) docs.push_back(image_to_json(img));
  emit("images.jsonl", to_jsonl(docs));

  const auto inversions = invert_all(images, catalog, backends, options.k_flavors, options.max_parallel);
  docs.clear();
  for (const auto& inv : inversions) docs.push_back(inv.to_json());
  emit("inversions.jsonl", to_jsonl(docs));

  DatasetOptions dataset_options;
  dataset_options.seed = derive_seed(options.seed, "dataset");
  dataset_options.max_parallel = options.max_parallel;
  const auto build = build_dataset(inversions, dataset_options, backends);
  emit("pairs.jsonl", pairs_text(build.pairs));
  docs.clear();
  for (const auto& chain : build.chains) docs.push_back(chain_sequence(chain));
  emit("chains.jsonl", to_jsonl(docs));
  const auto counts = count_splits(build.pairs);
  emit("splits.json", nlohmann::json{{"train_base", counts.train_base},
                                     {"train_rft", counts.train_rft},
                                     {"val", counts.val},
                                     {"test", counts.test}}
                              .dump(2) +
                          "\n");

  std::vector<QueryPromptPair> rft_input;
  for (const auto& p : build.pairs) {
    if (p.split == Split::train_rft) rft_input.push_back(p);
  }
  const auto rft = run_rft_filter(rft_input, options.rft_threshold, PrefixPolicy::full,
                                  derive_seed(options.seed, "rft"), backends, options.max_parallel);
  docs.clear();
  for (const auto& s : rft.scored) docs.push_back(s.to_json());
  emit("rft_scored.jsonl", to_jsonl(docs));
  emit("rft_pairs.jsonl", pairs_text(rft.kept));

  const auto queries = synth_queries(options.queries, derive_seed(options.seed, "queries"));
  {
    std::ostringstream out;
    write_query_set(out, queries);
    emit("queries.jsonl", out.str());
  }

  EvalOptions eval_options;
  eval_options.seed = derive_seed(options.seed, "eval");
  eval_options.max_parallel = options.max_parallel;
  std::vector<EvalReport> reports;
  for (const auto& system : {EvalSystem::straight(), EvalSystem{}}) {
    const auto run = run_auto_eval(queries, system, eval_options, backends);
    std::ostringstream records, csv;
    write_records_jsonl(records, run.records);
    run.report.write_csv(csv);
    emit("eval_records_" + system.name + ".jsonl", records.str());
    emit("eval_report_" + system.name + ".json", run.report.to_json().dump(2) + "\n");
    emit("eval_report_" + system.name + ".csv", csv.str());
    reports.push_back(run.report);
  }
  emit("eval_delta.json", compare_systems(reports[1], reports[0]).to_json().dump(2) + "\n");
  return written;
}

}  // namespace promptex
