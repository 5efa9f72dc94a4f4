// Acceptance run: one PASS/FAIL line per primary criterion. Exits non-zero
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "promptex/core_metrics.hpp"
#include "promptex/dataset.hpp"
#include "promptex/eval.hpp"
#include "promptex/expansion.hpp"
#include "promptex/interrogator.hpp"
#include "promptex/mock_backends.hpp"
#include "promptex/pipeline.hpp"
#include "promptex/rater.hpp"
#include "promptex/rng.hpp"
#include "promptex/text.hpp"

using namespace promptex;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// --- split exactness -------------------------------------------------------

Verdict split_exactness() {
  std::vector<QueryPromptPair> pairs;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto q = "synthetic query " + std::to_string(i);
    pairs.push_back(make_query_pair(q, q + ", watercolor", Mixture::detailed, false));
  }
  const auto start = Clock::now();
  auto a = pairs;
  apply_splits(a, 1234);
  const double elapsed = seconds_since(start);
  auto b = pairs;
  apply_splits(b, 1234);
  const auto c = count_splits(a);
  bool same = true;
  for (std::size_t i = 0; i < a.size(); ++i) same = same && a[i].split == b[i].split;
  const bool ok = c == SplitCounts{350, 350, 200, 100} && same && elapsed < 1.0;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu/%zu/%zu/%zu deterministic=%d in %.4fs", c.train_base, c.train_rft, c.val, c.test,
                same, elapsed);
  return {ok, buf};
}

// --- post-hoc selection ---------------------------------------------------------

double sigma_oracle(const std::vector<const EmbeddingVector*>& embs) {
  const std::size_t n = embs.size(), d = embs.front()->dimension();
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double m = 0.0;
    for (const auto* e : embs) m += e->values()[j];
    m /= static_cast<double>(n);
    for (const auto* e : embs) total += (e->values()[j] - m) * (e->values()[j] - m);
  }
  return total / static_cast<double>(n * d);
}

Verdict posthoc_oracle() {
  const auto start = Clock::now();
  std::size_t agree = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(derive_seed(seed, "acceptance_posthoc"));
    std::vector<EmbeddingVector> embs;
    for (int i = 0; i < 20; ++i) {
      std::vector<double> v(64);
      for (auto& x : v) x = rng.normal();
      embs.emplace_back(std::move(v));
    }
    double best = -1.0;
    std::vector<std::size_t> arg;
    for (std::size_t a = 0; a < 20; ++a)
      for (std::size_t b = a + 1; b < 20; ++b)
        for (std::size_t c = b + 1; c < 20; ++c)
          for (std::size_t d = c + 1; d < 20; ++d) {
            const double s = sigma_oracle({&embs[a], &embs[b], &embs[c], &embs[d]});
            if (s > best) {
              best = s;
              arg = {a, b, c, d};
            }
          }
    agree += posthoc_select(embs, 4) == arg;
  }
  const double elapsed = seconds_since(start);
  char buf[120];
  std::snprintf(buf, sizeof buf, "%zu/100 seeds agree with exhaustive C(20,4) in %.2fs", agree, elapsed);
  return {agree == 100 && elapsed < 10.0, buf};
}

// --- greedy diversity ----------------------------------------------------------

Verdict greedy_sigma() {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  EvalSystem system;
  system.name = "greedy";
  system.prefix = Prefix::ABST;
  system.decode = DecodeParams::greedy();
  const auto queries = synth_queries(60, 17);
  const auto run = run_auto_eval(queries, system, EvalOptions{}, backends);
  bool ok = true;
  for (const auto& r : run.records) ok = ok && !r.error && r.prompts.size() == 1 && r.diversity == 0.0;
  const auto& all = run.report.buckets.at("all").diversity;
  ok = ok && all.mean == 0.0 && all.std == 0.0;
  char buf[120];
  std::snprintf(buf, sizeof buf, "60 queries, one prompt each, sigma_p = %.1f +- %.1f", all.mean, all.std);
  return {ok, buf};
}

// --- prefix dropout --------------------------------------------------------------

Verdict dropout_schedule() {
  const std::size_t T = 100;
  const double r0 = prefix_dropout_rate(0, T), rT = prefix_dropout_rate(T, T), rh = prefix_dropout_rate(T / 2, T);
  bool ok = std::abs(r0 - 0.4) <= 1e-12 && std::abs(rT - 1.0) <= 1e-12 && std::abs(rh - 0.7) <= 1e-12;

  std::vector<QueryPromptPair> pairs;
  for (std::size_t i = 0; i < 500; ++i) {
    auto p = make_query_pair("q" + std::to_string(i), "q" + std::to_string(i) + ", detail", Mixture::detailed, false);
    p.prefix = Prefix::DTL;
    pairs.push_back(p);
  }
  const std::size_t batch = 100000;
  CurriculumStream stream(pairs, T, batch, 42);
  std::size_t kept = 0, seen = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    const auto item = stream.next();
    if (!item || item->step != 0) {
      ok = false;
      break;
    }
    ++seen;
    kept += !item->prefix_dropped;
  }
  const double retention = static_cast<double>(kept) / static_cast<double>(seen);
  ok = ok && std::abs(retention - 0.6) <= 0.01;
  char buf[160];
  std::snprintf(buf, sizeof buf, "rate(0)=%.12g rate(T)=%.12g rate(T/2)=%.12g retention(0)=%.4f over %zu", r0, rT, rh,
                retention, seen);
  return {ok, buf};
}

// --- RFT scoring -----------------------------------------------------------------

Verdict rft_scoring() {
  const EmbeddingVector image{1.0, 0.0};
  const EmbeddingVector query{0.5, std::sqrt(3.0) / 2.0};
  const double s = rft_score(query, image, image);
  bool ok = std::abs(s - 0.7) <= 1e-12;

  Rng rng(99);
  std::vector<RftScoredPair> scored;
  for (std::size_t i = 0; i < 1000; ++i) {
    RftScoredPair p;
    p.pair.query = "q" + std::to_string(i);
    p.score = 2.0 * rng.uniform() - 1.0;
    scored.push_back(p);
  }
  std::vector<double> thresholds;
  for (int i = 0; i <= 200; ++i) thresholds.push_back(-1.0 + 0.01 * i);
  for (int i = 0; i < 50; ++i) thresholds.push_back(scored[rng.below(scored.size())].score);
  std::sort(thresholds.begin(), thresholds.end());
  std::set<std::string> previous;
  bool monotone = true;
  for (std::size_t k = 0; k < thresholds.size(); ++k) {
    std::set<std::string> now;
    std::size_t expected = 0;
    for (const auto& p : scored) expected += p.score >= thresholds[k];
    for (const auto& p : rft_filter(scored, thresholds[k])) now.insert(p.pair.query);
    monotone = monotone && now.size() == expected;
    if (k > 0) monotone = monotone && std::includes(previous.begin(), previous.end(), now.begin(), now.end());
    previous = std::move(now);
  }
  ok = ok && monotone;
  char buf[120];
  std::snprintf(buf, sizeof buf, "score(0.5, 1.0) = %.15f; monotone over %zu thresholds = %d", s, thresholds.size(),
                monotone);
  return {ok, buf};
}

// --- tree cardinality ---------------------------------------------------------

Verdict tree_cardinality() {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto tree = expand_tree("a lighthouse at night", 2, 4, DecodeParams::sampled(1.0, 5), *backends.expander);
  const auto leaves = tree.leaves().size();
  const bool ok = leaves == 64 && tree.size() == 4 + 16 + 64 && tree.complete();
  char buf[100];
  std::snprintf(buf, sizeof buf, "%zu leaves, %zu expanded nodes", leaves, tree.size());
  return {ok, buf};
}

// --- repetition -----------------------------------------------------------------

Verdict repetition() {
  const std::vector<std::string> same(4, "a quiet harbor at dawn, oil painting");
  const std::vector<std::string> disjoint = {"red fox jumps", "blue whale sings", "green tree grows", "old car rusts"};
  const double a = repetition_rate(same), b = repetition_rate(disjoint);
  char buf[80];
  std::snprintf(buf, sizeof buf, "identical x4 = %.17g, disjoint = %.17g", a, b);
  return {a == 0.75 && b == 0.0, buf};
}

// --- inversion coverage -------------------------------------------------------

Verdict inversion_coverage() {
  auto backends = make_mock_backends(MockWorld{}, default_mock_catalog());
  const auto catalog = default_mock_catalog();
  const auto images = synth_images(1000, 21, catalog, backends);
  const auto inversions = invert_all(images, catalog, backends, 8, 4);
  const auto categories = catalog.categories();
  std::size_t covered = 0, round_trip = 0;
  for (const auto& r : inversions) {
    std::set<FlavorCategory> seen;
    for (const auto& f : r.flavors) seen.insert(f.category);
    covered += std::all_of(categories.begin(), categories.end(), [&](auto c) { return seen.contains(c); });

    const auto parts = text::split(r.prompt, ", ");
    bool ok = parts.size() == r.flavors.size() + 1 && parts[0] == r.caption;
    for (std::size_t i = 0; ok && i < r.flavors.size(); ++i) ok = parts[i + 1] == r.flavors[i].flavor;
    const auto back = InversionResult::from_json(r.to_json());
    ok = ok && back.prompt == r.prompt && back.flavors == r.flavors;
    round_trip += ok;
  }
  char buf[120];
  std::snprintf(buf, sizeof buf, "%zu inversions: %zu cover all %zu categories, %zu round-trip", inversions.size(),
                covered, categories.size(), round_trip);
  return {inversions.size() == 1000 && covered == 1000 && round_trip == 1000, buf};
}

// --- flavor probe ---------------------------------------------------------------

// Flavors within a pair have the same token count, so only responsiveness
// differs between them.
Verdict flavor_probe_direction() {
  const std::vector<std::pair<std::string, std::string>> contrasts = {{"watercolor", "vorticism"},
                                                                      {"art deco", "poster art"}};
  MockWorld world;
  world.responsiveness["vorticism"] = 0.0;
  world.responsiveness["poster art"] = 0.0;
  auto backends = make_mock_backends(world, default_mock_catalog());
  std::string detail;
  bool ok = true;
  for (const auto& [good, bad] : contrasts) {
    int wins = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto queries = synth_queries(20, derive_seed(seed, "acceptance_probe_queries"));
      std::vector<std::string> texts;
      for (const auto& q : queries) texts.push_back(q.query);
      const std::vector<std::string> flavors = {good, bad};
      const auto report = flavor_probe(flavors, texts, backends, seed);
      wins += !report.ranking.empty() && report.ranking.front().flavor == good;
    }
    ok = ok && wins >= 99;
    detail += (detail.empty() ? "" : "; ") + good + " > " + bad + " in " + std::to_string(wins) + "/100";
  }
  return {ok, detail};
}

// --- rater analytics ------------------------------------------------------------

RaterTask pair_task(const std::string& id, RaterMode mode) {
  RaterTask t;
  t.task_id = id;
  t.item_id = id;
  t.flow = "1x1";
  t.mode = mode;
  t.stage = RaterStage::pair_compare;
  t.query = id;
  t.candidates = {"query-img-" + id, "prompt-img-" + id};
  t.sources = {std::string(kQuerySource), std::string(kPromptSource)};
  t.allow_unsure = mode == RaterMode::alignment;
  t.raters = {"a", "b", "c"};
  return t;
}

// 'p' prompt image, 'q' query image, 'u' UNSURE.
void add_votes(const RaterTask& t, const std::string& pattern, std::vector<RaterResponse>& out) {
  for (std::size_t i = 0; i < 3; ++i) {
    RaterResponse r{t.task_id, t.raters[i], std::nullopt, 0};
    if (pattern[i] == 'q') r.choice = 0;
    if (pattern[i] == 'p') r.choice = 1;
    out.push_back(r);
  }
}

bool near(double a, double b) { return std::abs(a - b) <= 1e-12; }

Verdict rater_oracle() {
  // Aesthetics: 4 unanimous and 6 two-of-three prompt wins, 5 query wins.
  const std::vector<std::string> aes = {"ppp", "ppp", "ppp", "ppp", "ppq", "pqp", "qpp", "ppq", "pqp", "qpp",
                                        "qqq", "qqp", "pqq", "qpq", "qqq"};
  std::vector<RaterTask> aes_tasks;
  std::vector<RaterResponse> aes_resp;
  for (std::size_t i = 0; i < aes.size(); ++i) {
    aes_tasks.push_back(pair_task("aes" + std::to_string(i), RaterMode::aesthetics));
    add_votes(aes_tasks.back(), aes[i], aes_resp);
  }
  const auto aw = win_rates(aes_tasks, aes_resp);
  const auto ac = consensus_stats(aes_tasks, aes_resp);
  bool ok = near(aw.prompt_win, 10.0 / 15) && near(aw.query_win, 5.0 / 15) && near(aw.equivalent, 0.0) &&
            ac.population == 10 && near(ac.all_three.value, 0.4) && near(ac.two.value, 0.6) &&
            near(ac.all_three.spread, std::sqrt(0.4 * 0.6 / 10));

  // Alignment: 2 unanimous prompt, 1 two-of-three, 1 all-UNSURE, 1 split, 1 query win.
  const std::vector<std::string> ali = {"ppp", "ppp", "ppu", "uuu", "pqu", "qqu"};
  std::vector<RaterTask> ali_tasks;
  std::vector<RaterResponse> ali_resp;
  for (std::size_t i = 0; i < ali.size(); ++i) {
    ali_tasks.push_back(pair_task("ali" + std::to_string(i), RaterMode::alignment));
    add_votes(ali_tasks.back(), ali[i], ali_resp);
  }
  const auto lw = win_rates(ali_tasks, ali_resp);
  const auto lc = consensus_stats(ali_tasks, ali_resp);
  ok = ok && near(lw.prompt_win, 3.0 / 6) && near(lw.query_win, 1.0 / 6) && near(lw.equivalent, 2.0 / 6) &&
       lc.population == 4 && near(lc.all_three.value, 0.5) && near(lc.two.value, 0.25) && near(lc.none.value, 0.25);

  // Stage-2 disjointness on 1000 items.
  std::vector<QuadItem> items;
  for (std::size_t i = 0; i < 1000; ++i) {
    QuadItem q;
    q.item_id = "item" + std::to_string(i);
    q.query = "query " + std::to_string(i);
    for (std::size_t j = 0; j < 4; ++j) {
      q.query_images[j] = q.item_id + "-q" + std::to_string(j);
      q.prompt_images[j] = q.item_id + "-p" + std::to_string(j);
    }
    items.push_back(q);
  }
  const auto pool = default_rater_pool();
  const auto stage1 = gen_4x4_tasks(items, RaterMode::aesthetics, 5, pool);
  const auto responses = simulate_responses(stage1, 5);
  const auto stage2 = gen_4x4_stage2(stage1, responses, 5, pool);
  std::map<std::string, std::set<std::string>> used;
  for (const auto& t : stage1) used[t.item_id].insert(t.raters.begin(), t.raters.end());
  std::size_t disjoint = 0;
  for (const auto& t : stage2) {
    disjoint += t.raters.size() == 3 && std::none_of(t.raters.begin(), t.raters.end(),
                                                     [&](const auto& r) { return used[t.item_id].contains(r); });
  }
  ok = ok && stage2.size() == 1000 && disjoint == 1000;
  char buf[200];
  std::snprintf(buf, sizeof buf, "consensus 3/3=%.2f 2/3=%.2f; win %.4f/%.4f/%.4f; stage-2 disjoint %zu/1000",
                ac.all_three.value, ac.two.value, lw.prompt_win, lw.query_win, lw.equivalent, disjoint);
  return {ok, buf};
}

// --- end-to-end determinism ---------------------------------------------------

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Verdict end_to_end() {
  const auto root = std::filesystem::temp_directory_path() / "promptex_acceptance_e2e";
  std::filesystem::remove_all(root);
  PipelineOptions options;
  options.seed = 7;
  MockWorld world;
  for (const char* f : {"poster art", "vorticism", "8k"}) world.responsiveness[f] = 0.0;

  const auto start = Clock::now();
  std::vector<std::vector<std::string>> files;
  for (const char* run : {"a", "b"}) {
    auto backends = make_mock_backends(world, default_mock_catalog());
    const auto dir = root / run;
    std::filesystem::create_directories(dir);
    files.push_back(run_pipeline(options, backends, dir.string()));
  }
  const double elapsed = seconds_since(start);
  std::size_t identical = 0;
  for (const auto& f : files[0]) {
    const auto a = slurp(root / "a" / f), b = slurp(root / "b" / f);
    identical += !a.empty() && a == b;
  }
  const bool ok = files[0] == files[1] && identical == files[0].size() && elapsed < 60.0;
  char buf[120];
  std::snprintf(buf, sizeof buf, "%zu/%zu artifacts byte-identical, two runs in %.2fs", identical, files[0].size(),
                elapsed);
  std::filesystem::remove_all(root);
  return {ok, buf};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"split exactness", split_exactness},
      {"post-hoc selection oracle", posthoc_oracle},
      {"greedy sigma_p", greedy_sigma},
      {"prefix-dropout schedule", dropout_schedule},
      {"rft scoring", rft_scoring},
      {"tree cardinality", tree_cardinality},
      {"repetition rate", repetition},
      {"inversion coverage", inversion_coverage},
      {"flavor probe direction", flavor_probe_direction},
      {"rater analytics oracle", rater_oracle},
      {"end-to-end determinism", end_to_end},
  };
  int failures = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = Clock::now();
    Verdict o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  %-28s %s (%.2fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                seconds_since(start));
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
