#include "promptex/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "promptex/error.hpp"
#include "promptex/expansion.hpp"
#include "promptex/parallel.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

namespace promptex {

std::vector<TypedQuery> read_query_set(std::istream& in) {
  std::vector<TypedQuery> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    try {
      const auto doc = nlohmann::json::parse(line);
      out.push_back({doc.at("query").get<std::string>(), QueryType::parse(doc.at("query_type").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::invalid_argument, "query set line " + std::to_string(line_no) + ": " + e.what());
    }
    if (text::trim(out.back().query).empty()) {
      fail(ErrorKind::invalid_argument, "query set line " + std::to_string(line_no) + ": empty query");
    }
  }
  return out;
}

std::vector<TypedQuery> load_query_set(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open query set " + path);
  return read_query_set(in);
}

void write_query_set(std::ostream& out, std::span<const TypedQuery> queries) {
  for (const auto& q : queries) {
    out << nlohmann::json{{"query", q.query}, {"query_type", q.type.to_string()}}.dump() << '\n';
  }
}

std::string_view to_string(SystemKind kind) noexcept {
  return kind == SystemKind::straight_query ? "straight_query" : "expansion";
}

SystemKind parse_system_kind(std::string_view name) {
  if (name == "straight_query" || name == "straight") return SystemKind::straight_query;
  if (name == "expansion") return SystemKind::expansion;
  fail(ErrorKind::invalid_argument, "unknown system kind '" + std::string(name) + "'");
}

EvalSystem EvalSystem::straight(std::string name) {
  EvalSystem s;
  s.name = std::move(name);
  s.kind = SystemKind::straight_query;
  return s;
}

void EvalSystem::validate() const {
  require(!name.empty(), ErrorKind::invalid_argument, "eval system needs a name");
  if (kind == SystemKind::straight_query) return;
  decode.validate();
  require(n_prompts >= 1, ErrorKind::invalid_argument, "eval system: n_prompts must be >= 1");
  require(posthoc_pool == 0 || posthoc_pool >= n_prompts, ErrorKind::invalid_argument,
          "eval system: posthoc_pool must be 0 or >= n_prompts");
  require(posthoc_pool <= 24, ErrorKind::invalid_argument, "eval system: posthoc_pool above 24 is not supported");
}

nlohmann::json EvalItemRecord::to_json() const {
  nlohmann::json imgs = nlohmann::json::array();
  for (const auto& i : images) {
    imgs.push_back({{"image_id", i.image_id},
                    {"prompt", i.prompt},
                    {"seed", i.seed},
                    {"aesthetics", i.aesthetics},
                    {"alignment", i.alignment}});
  }
  nlohmann::json doc = {{"system", system},     {"query", query},           {"query_type", query_type.to_string()},
                        {"prompts", prompts},   {"images", std::move(imgs)}, {"diversity", diversity}};
  if (repetition) doc["repetition"] = *repetition;
  if (error) doc["error"] = *error;
  return doc;
}

EvalItemRecord EvalItemRecord::from_json(const nlohmann::json& doc) {
  EvalItemRecord r;
  r.system = doc.at("system").get<std::string>();
  r.query = doc.at("query").get<std::string>();
  r.query_type = QueryType::parse(doc.at("query_type").get<std::string>());
  r.prompts = doc.at("prompts").get<std::vector<std::string>>();
  for (const auto& i : doc.at("images")) {
    r.images.push_back({i.at("image_id").get<std::string>(), i.at("prompt").get<std::string>(),
                        i.at("seed").get<std::uint64_t>(), i.at("aesthetics").get<double>(),
                        i.at("alignment").get<double>()});
  }
  r.diversity = doc.at("diversity").get<double>();
  if (doc.contains("repetition")) r.repetition = doc["repetition"].get<double>();
  if (doc.contains("error")) r.error = doc["error"].get<std::string>();
  return r;
}

std::vector<std::string> buckets_of(const QueryType& type) {
  return {"all", std::string(to_string(type.abstractness)), std::string(to_string(type.length))};
}

namespace {

void write_summary(nlohmann::json& out, const char* key, const MetricsSummary& s) {
  out[key] = {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
}

MetricsSummary read_summary(const nlohmann::json& doc) {
  return {doc.at("mean").get<double>(), doc.at("std").get<double>(), doc.at("count").get<std::size_t>()};
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", value);
  return buf;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json b = nlohmann::json::object();
  for (const auto& [name, bucket] : buckets) {
    nlohmann::json j;
    write_summary(j, "aesthetics", bucket.aesthetics);
    write_summary(j, "alignment", bucket.alignment);
    write_summary(j, "diversity", bucket.diversity);
    if (bucket.repetition) j["repetition"] = *bucket.repetition;
    j["queries"] = bucket.queries;
    b[name] = std::move(j);
  }
  return {{"system", system}, {"buckets", std::move(b)}, {"failed_queries", failed_queries}};
}

EvalReport EvalReport::from_json(const nlohmann::json& doc) {
  EvalReport r;
  r.system = doc.at("system").get<std::string>();
  r.failed_queries = doc.value("failed_queries", std::size_t{0});
  for (const auto& [name, j] : doc.at("buckets").items()) {
    BucketReport b;
    b.aesthetics = read_summary(j.at("aesthetics"));
    b.alignment = read_summary(j.at("alignment"));
    b.diversity = read_summary(j.at("diversity"));
    if (j.contains("repetition")) b.repetition = j["repetition"].get<double>();
    b.queries = j.at("queries").get<std::size_t>();
    r.buckets[name] = b;
  }
  return r;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "bucket,metric,mean,std,count\n";
  for (const auto& [name, b] : buckets) {
    const std::pair<const char*, const MetricsSummary*> rows[] = {
        {"aesthetics", &b.aesthetics}, {"alignment", &b.alignment}, {"diversity", &b.diversity}};
    for (const auto& [metric, s] : rows) {
      out << name << ',' << metric << ',' << format_number(s->mean) << ',' << format_number(s->std) << ','
          << s->count << '\n';
    }
    if (b.repetition) out << name << ",repetition," << format_number(*b.repetition) << ",," << b.queries << '\n';
  }
}

EvalReport fold_records(std::string system, std::span<const EvalItemRecord> records) {
  struct Acc {
    std::vector<double> aesthetics, alignment, diversity, repetition;
    std::size_t queries = 0;
  };
  std::map<std::string, Acc> acc;
  EvalReport report;
  report.system = std::move(system);
  for (const auto& r : records) {
    if (r.error || r.images.empty()) {
      ++report.failed_queries;
      continue;
    }
    for (const auto& name : buckets_of(r.query_type)) {
      auto& a = acc[name];
      ++a.queries;
      for (const auto& img : r.images) {
        a.aesthetics.push_back(img.aesthetics);
        a.alignment.push_back(img.alignment);
      }
      a.diversity.push_back(r.diversity);
      if (r.repetition) a.repetition.push_back(*r.repetition);
    }
  }
  for (const auto& [name, a] : acc) {
    BucketReport b;
    b.aesthetics = aggregate_stats(a.aesthetics);
    b.alignment = aggregate_stats(a.alignment);
    b.diversity = aggregate_stats(a.diversity);
    if (!a.repetition.empty()) b.repetition = aggregate_stats(a.repetition).mean;
    b.queries = a.queries;
    report.buckets[name] = b;
  }
  return report;
}

std::uint64_t query_seed(std::uint64_t seed, std::string_view query) {
  return derive_seed(seed, "eval_query", fnv1a(query));
}

namespace {

std::vector<std::string> system_prompts(const TypedQuery& query, const EvalSystem& system, std::uint64_t qseed,
                                        Backends& backends, std::size_t pool) {
  auto decode = system.decode;
  decode.seed = derive_seed(qseed, "expand");
  return expand(query.query, system.prefix, pool, decode, *backends.expander);
}

}  // namespace

EvalItemRecord evaluate_query(const TypedQuery& query, const EvalSystem& system, const EvalOptions& options,
                              Backends& backends) {
  EvalItemRecord record;
  record.system = system.name;
  record.query = query.query;
  record.query_type = query.type;
  const auto qseed = query_seed(options.seed, query.query);
  try {
    std::vector<ImageRecord> images;
    if (system.kind == SystemKind::straight_query) {
      record.prompts = {query.query};
      for (std::size_t j = 0; j < options.n_images; ++j) {
        images.push_back(render_and_embed(backends, query.query, derive_seed(qseed, "image", j)));
      }
    } else {
      const auto pool = std::max(system.n_prompts, system.posthoc_pool);
      auto prompts = system_prompts(query, system, qseed, backends, pool);
      for (std::size_t j = 0; j < prompts.size(); ++j) {
        images.push_back(render_and_embed(backends, prompts[j], derive_seed(qseed, "image", j)));
      }
      if (system.posthoc_pool > system.n_prompts && images.size() > system.n_prompts) {
        std::vector<EmbeddingVector> embs;
        for (const auto& img : images) embs.push_back(*img.embedding);
        std::vector<ImageRecord> kept;
        std::vector<std::string> kept_prompts;
        for (auto i : posthoc_select(embs, system.n_prompts)) {
          kept.push_back(images[i]);
          kept_prompts.push_back(prompts[i]);
        }
        images = std::move(kept);
        prompts = std::move(kept_prompts);
      }
      record.prompts = std::move(prompts);
    }

    const auto query_embedding = backends.text_embedder->embed_text(query.query);
    std::vector<EmbeddingVector> embeddings;
    for (const auto& img : images) {
      EvalImage e;
      e.image_id = img.image_id;
      e.prompt = img.prompt;
      e.seed = img.seed;
      e.aesthetics = backends.aesthetic->aesthetic_score(img);
      e.alignment = cosine_similarity(query_embedding, *img.embedding);
      record.images.push_back(std::move(e));
      embeddings.push_back(*img.embedding);
    }
    record.diversity = diversity_sigma(embeddings);
    try {
      record.repetition = repetition_rate(record.prompts);
    } catch (const Error&) {
      record.repetition.reset();  // prompts without bigrams
    }
  } catch (const BackendError& e) {
    record.prompts.clear();
    record.images.clear();
    record.diversity = 0.0;
    record.repetition.reset();
    record.error = e.what();
  }
  return record;
}

EvalRun run_auto_eval(std::span<const TypedQuery> queries, const EvalSystem& system, const EvalOptions& options,
                      Backends& backends) {
  require(!queries.empty(), ErrorKind::empty_input, "run_auto_eval: empty query set");
  require(options.n_images >= 1, ErrorKind::invalid_argument, "run_auto_eval: n_images must be >= 1");
  system.validate();
  EvalRun run;
  run.records.resize(queries.size());
  parallel_for(queries.size(), options.max_parallel,
               [&](std::size_t i) { run.records[i] = evaluate_query(queries[i], system, options, backends); });
  run.report = fold_records(system.name, run.records);
  return run;
}

void write_records_jsonl(std::ostream& out, std::span<const EvalItemRecord> records) {
  for (const auto& r : records) out << r.to_json().dump() << '\n';
}

std::vector<EvalItemRecord> read_records_jsonl(std::istream& in) {
  std::vector<EvalItemRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    out.push_back(EvalItemRecord::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

nlohmann::json DeltaReport::to_json() const {
  nlohmann::json b = nlohmann::json::object();
  for (const auto& [name, d] : buckets) {
    nlohmann::json j = {{"aesthetics", d.aesthetics}, {"alignment", d.alignment}, {"diversity", d.diversity}};
    if (d.repetition) j["repetition"] = *d.repetition;
    b[name] = std::move(j);
  }
  return {{"system_a", system_a}, {"system_b", system_b}, {"delta", std::move(b)}};
}

DeltaReport compare_systems(const EvalReport& a, const EvalReport& b) {
  for (const auto& [name, _] : a.buckets) {
    if (!b.buckets.contains(name)) {
      fail(ErrorKind::invalid_argument, "bucket '" + name + "' missing from report " + b.system);
    }
  }
  for (const auto& [name, _] : b.buckets) {
    if (!a.buckets.contains(name)) {
      fail(ErrorKind::invalid_argument, "bucket '" + name + "' missing from report " + a.system);
    }
  }
  DeltaReport delta;
  delta.system_a = a.system;
  delta.system_b = b.system;
  for (const auto& [name, x] : a.buckets) {
    const auto& y = b.buckets.at(name);
    MetricDelta d;
    d.aesthetics = x.aesthetics.mean - y.aesthetics.mean;
    d.alignment = x.alignment.mean - y.alignment.mean;
    d.diversity = x.diversity.mean - y.diversity.mean;
    if (x.repetition && y.repetition) d.repetition = *x.repetition - *y.repetition;
    delta.buckets[name] = d;
  }
  return delta;
}

nlohmann::json ProbeCell::to_json() const {
  nlohmann::json doc = {{"flavor", flavor}, {"query", query}, {"prompt", prompt}, {"seed", seed}};
  if (query_image) doc["query_image"] = *query_image;
  if (prompt_image) doc["prompt_image"] = *prompt_image;
  if (error) doc["error"] = *error;
  return doc;
}

nlohmann::json FlavorProbeReport::to_json() const {
  nlohmann::json rank = nlohmann::json::array();
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    const auto& e = ranking[i];
    rank.push_back({{"rank", i + 1},
                    {"flavor", e.flavor},
                    {"query_image", e.query_image},
                    {"prompt_image", e.prompt_image},
                    {"average", e.average},
                    {"cells", e.cells}});
  }
  return {{"ranking", std::move(rank)}};
}

std::vector<ProbeEntry> rank_probe_cells(std::span<const ProbeCell> cells) {
  std::map<std::string, ProbeEntry> by_flavor;
  for (const auto& c : cells) {
    if (!c.query_image || !c.prompt_image) continue;
    auto& e = by_flavor[c.flavor];
    e.flavor = c.flavor;
    e.query_image += *c.query_image;
    e.prompt_image += *c.prompt_image;
    ++e.cells;
  }
  std::vector<ProbeEntry> out;
  for (auto& [_, e] : by_flavor) {
    e.query_image /= static_cast<double>(e.cells);
    e.prompt_image /= static_cast<double>(e.cells);
    e.average = (e.query_image + e.prompt_image) / 2.0;
    out.push_back(e);
  }
  std::sort(out.begin(), out.end(), [](const ProbeEntry& a, const ProbeEntry& b) {
    if (a.average != b.average) return a.average > b.average;
    return a.flavor < b.flavor;
  });
  return out;
}

FlavorProbeReport flavor_probe(std::span<const std::string> flavors, std::span<const std::string> queries,
                               Backends& backends, std::uint64_t seed, std::size_t max_parallel) {
  require(!flavors.empty(), ErrorKind::empty_input, "flavor_probe: no flavors");
  require(!queries.empty(), ErrorKind::empty_input, "flavor_probe: no queries");
  FlavorProbeReport report;
  for (const auto& f : flavors) {
    for (const auto& q : queries) {
      ProbeCell c;
      c.flavor = f;
      c.query = q;
      c.prompt = q + ", " + f;
      c.seed = derive_seed(seed, "probe_query", fnv1a(q));
      report.cells.push_back(std::move(c));
    }
  }
  parallel_for(report.cells.size(), max_parallel, [&](std::size_t i) {
    auto& c = report.cells[i];
    try {
      const auto image = render_and_embed(backends, c.prompt, c.seed);
      c.query_image = cosine_similarity(backends.text_embedder->embed_text(c.query), *image.embedding);
      c.prompt_image = cosine_similarity(backends.text_embedder->embed_text(c.prompt), *image.embedding);
    } catch (const BackendError& e) {
      c.error = e.what();
    }
  });
  report.ranking = rank_probe_cells(report.cells);
  return report;
}

}  // namespace promptex
