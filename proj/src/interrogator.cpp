#include "promptex/interrogator.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>

#include "promptex/error.hpp"
#include "promptex/text.hpp"

namespace promptex {

CategoryLexicon parse_lexicon(std::istream& in) {
  CategoryLexicon lexicon;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (text::trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      fail(ErrorKind::invalid_argument, "lexicon line " + std::to_string(line_no) + ": expected phrase<TAB>category");
    }
    auto phrase = text::normalize_phrase(line.substr(0, tab));
    const auto category = parse_flavor_category(text::trim(line.substr(tab + 1)));
    if (phrase.empty()) fail(ErrorKind::invalid_argument, "lexicon line " + std::to_string(line_no) + ": empty phrase");
    lexicon[std::move(phrase)] = category;
  }
  return lexicon;
}

CategoryLexicon load_lexicon(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open lexicon " + path);
  return parse_lexicon(in);
}

FlavorCatalog build_flavor_catalog(std::span<const std::string> corpus_prompts,
                                   const CategoryLexicon& lexicon, std::size_t min_count) {
  require(!corpus_prompts.empty(), ErrorKind::empty_input, "build_flavor_catalog: empty corpus");
  require(min_count >= 1, ErrorKind::invalid_argument, "build_flavor_catalog: min_count must be >= 1");

  std::map<std::string, std::size_t> document_frequency;
  for (const auto& prompt : corpus_prompts) {
    const auto segments = text::split_commas(prompt);
    std::set<std::string> seen;
    for (std::size_t i = 1; i < segments.size(); ++i) {
      auto phrase = text::normalize_phrase(segments[i]);
      if (phrase.empty()) continue;
      for (auto word : text::words(phrase)) {
        std::string w(word);
        if (w != phrase && lexicon.contains(w)) seen.insert(std::move(w));
      }
      seen.insert(std::move(phrase));
    }
    for (const auto& phrase : seen) ++document_frequency[phrase];
  }

  FlavorCatalog catalog;
  for (const auto& [phrase, count] : document_frequency) {
    if (count < min_count) continue;
    auto it = lexicon.find(phrase);
    catalog.add(it == lexicon.end() ? FlavorCategory::other : it->second, phrase, count);
  }
  if (catalog.empty() && lexicon.empty()) {
    fail(ErrorKind::empty_input, "build_flavor_catalog: empty lexicon and no phrase reached min_count");
  }
  return catalog;
}

FlavorIndex::FlavorIndex(const FlavorCatalog& catalog, TextEmbedder& embedder) {
  require(!catalog.empty(), ErrorKind::empty_input, "flavor catalog is empty");
  categories_ = catalog.categories();
  for (auto category : categories_) {
    for (const auto& entry : catalog.flavors(category)) {
      items_.push_back({entry.flavor, category, embedder.embed_text(entry.flavor)});
    }
  }
}

FlavorRanking FlavorIndex::rank(const EmbeddingVector& image_embedding) const {
  FlavorRanking ranking;
  for (const auto& item : items_) {
    ranking[item.category].push_back(
        {item.flavor, item.category, cosine_similarity(item.embedding, image_embedding)});
  }
  for (auto& [category, list] : ranking) {
    std::sort(list.begin(), list.end(), [](const ScoredFlavor& a, const ScoredFlavor& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.flavor < b.flavor;
    });
  }
  return ranking;
}

FlavorRanking rank_flavors(const EmbeddingVector& image_embedding, const FlavorCatalog& catalog,
                           TextEmbedder& embedder) {
  return FlavorIndex(catalog, embedder).rank(image_embedding);
}

namespace {

std::string sanitize_caption(std::string_view caption) {
  std::string out(caption);
  std::replace(out.begin(), out.end(), ',', ' ');
  std::string collapsed;
  for (auto word : text::words(out)) {
    if (!collapsed.empty()) collapsed.push_back(' ');
    collapsed += word;
  }
  return collapsed;
}

}  // namespace

InversionResult invert_image(const ImageRecord& image, const FlavorIndex& index, Backends& backends,
                             std::size_t k_flavors) {
  if (k_flavors < index.category_count()) {
    fail(ErrorKind::invalid_argument, "invert_image: k_flavors=" + std::to_string(k_flavors) +
                                          " is below the category count " +
                                          std::to_string(index.category_count()));
  }
  const auto image_embedding = image.embedding ? *image.embedding : backends.image_embedder->embed_image(image);

  InversionResult result;
  result.image_id = image.image_id;
  result.seed = image.seed;
  result.caption = sanitize_caption(backends.captioner->caption(image));
  if (result.caption.empty()) throw BackendError("caption", "captioner returned an empty caption");

  const auto ranking = index.rank(image_embedding);
  std::set<std::string> chosen;
  for (const auto& [category, list] : ranking) {
    result.flavors.push_back(list.front());
    chosen.insert(list.front().flavor);
  }

  std::vector<ScoredFlavor> rest;
  for (const auto& [category, list] : ranking) {
    for (const auto& f : list) {
      if (!chosen.contains(f.flavor)) rest.push_back(f);
    }
  }
  std::sort(rest.begin(), rest.end(), [](const ScoredFlavor& a, const ScoredFlavor& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.flavor < b.flavor;
  });
  for (const auto& f : rest) {
    if (result.flavors.size() >= k_flavors) break;
    result.flavors.push_back(f);
  }

  std::vector<std::string> parts{result.caption};
  for (const auto& f : result.flavors) parts.push_back(f.flavor);
  result.prompt = text::join(parts, ", ");
  return result;
}

InversionResult invert_image(const ImageRecord& image, const FlavorCatalog& catalog, Backends& backends,
                             std::size_t k_flavors) {
  return invert_image(image, FlavorIndex(catalog, *backends.text_embedder), backends, k_flavors);
}

nlohmann::json InversionResult::to_json() const {
  nlohmann::json flavors_json = nlohmann::json::array();
  for (const auto& f : flavors) {
    flavors_json.push_back({{"flavor", f.flavor}, {"category", to_string(f.category)}, {"score", f.score}});
  }
  return {{"image_id", image_id}, {"seed", seed},         {"caption", caption},
          {"flavors", flavors_json}, {"prompt", prompt}};
}

InversionResult InversionResult::from_json(const nlohmann::json& doc) {
  InversionResult r;
  r.image_id = doc.value("image_id", std::string{});
  r.seed = doc.value("seed", std::uint64_t{0});
  r.caption = doc.value("caption", std::string{});
  r.prompt = doc.at("prompt").get<std::string>();
  if (doc.contains("flavors")) {
    for (const auto& f : doc["flavors"]) {
      r.flavors.push_back({f.at("flavor").get<std::string>(),
                           parse_flavor_category(f.at("category").get<std::string>()),
                           f.value("score", 0.0)});
    }
  }
  return r;
}

}  // namespace promptex
