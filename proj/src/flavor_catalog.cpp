#include "promptex/flavor_catalog.hpp"

#include <algorithm>
#include <json.hpp>

#include "promptex/error.hpp"

namespace promptex {

std::string_view to_string(FlavorCategory category) noexcept {
  switch (category) {
    case FlavorCategory::art_form: return "art_form";
    case FlavorCategory::artist: return "artist";
    case FlavorCategory::medium: return "medium";
    case FlavorCategory::style: return "style";
    case FlavorCategory::other: return "other";
  }
  return "other";
}

FlavorCategory parse_flavor_category(std::string_view name) {
  for (auto category : kAllCategories) {
    if (to_string(category) == name) return category;
  }
  fail(ErrorKind::invalid_argument, "unknown flavor category '" + std::string(name) + "'");
}

namespace {

bool ranked_before(const FlavorEntry& a, const FlavorEntry& b) {
  if (a.count != b.count) return a.count > b.count;
  return a.flavor < b.flavor;
}

const std::vector<FlavorEntry> kNoFlavors;

}  // namespace

void FlavorCatalog::add(FlavorCategory category, std::string flavor, std::size_t count) {
  require(!flavor.empty(), ErrorKind::invalid_argument, "flavor must be nonempty");
  require(count >= 1, ErrorKind::invalid_argument, "flavor count must be >= 1");
  for (const auto& [cat, entries] : by_category_) {
    for (const auto& e : entries) {
      if (e.flavor == flavor) {
        fail(ErrorKind::invalid_argument,
             "duplicate flavor '" + flavor + "' (already in " + std::string(to_string(cat)) + ")");
      }
    }
  }
  auto& entries = by_category_[category];
  FlavorEntry entry{std::move(flavor), count};
  entries.insert(std::upper_bound(entries.begin(), entries.end(), entry, ranked_before),
                 std::move(entry));
}

const std::vector<FlavorEntry>& FlavorCatalog::flavors(FlavorCategory category) const {
  auto it = by_category_.find(category);
  return it == by_category_.end() ? kNoFlavors : it->second;
}

std::vector<FlavorCategory> FlavorCatalog::categories() const {
  std::vector<FlavorCategory> out;
  for (auto category : kAllCategories) {
    if (!flavors(category).empty()) out.push_back(category);
  }
  return out;
}

std::size_t FlavorCatalog::size() const noexcept {
  std::size_t n = 0;
  for (const auto& [cat, entries] : by_category_) n += entries.size();
  return n;
}

bool FlavorCatalog::contains(std::string_view flavor) const {
  for (const auto& [cat, entries] : by_category_) {
    for (const auto& e : entries) {
      if (e.flavor == flavor) return true;
    }
  }
  return false;
}

std::vector<FlavorEntry> FlavorCatalog::ranked_pool() const {
  std::vector<FlavorEntry> pool;
  for (const auto& [cat, entries] : by_category_) pool.insert(pool.end(), entries.begin(), entries.end());
  std::sort(pool.begin(), pool.end(), ranked_before);
  return pool;
}

nlohmann::json FlavorCatalog::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (auto category : categories()) {
    auto& list = doc[std::string(to_string(category))];
    list = nlohmann::json::array();
    for (const auto& e : flavors(category)) {
      list.push_back({{"flavor", e.flavor}, {"count", e.count}});
    }
  }
  return doc;
}

FlavorCatalog FlavorCatalog::from_json(const nlohmann::json& doc) {
  require(doc.is_object(), ErrorKind::invalid_argument, "catalog JSON must be an object");
  FlavorCatalog catalog;
  for (const auto& [name, list] : doc.items()) {
    const auto category = parse_flavor_category(name);
    require(list.is_array(), ErrorKind::invalid_argument, "catalog category must be an array");
    for (const auto& item : list) {
      catalog.add(category, item.at("flavor").get<std::string>(), item.at("count").get<std::size_t>());
    }
  }
  return catalog;
}

FlavorCatalog default_mock_catalog() {
  FlavorCatalog catalog;
  const std::pair<FlavorCategory, std::vector<std::string>> seed_lists[] = {
      {FlavorCategory::art_form, {"vector art", "pixel art", "poster art", "concept art"}},
      {FlavorCategory::artist, {"by robert beatty", "by maurycy gottlieb", "by claude monet"}},
      {FlavorCategory::medium, {"oil painting", "watercolor", "digital painting", "charcoal sketch"}},
      {FlavorCategory::style, {"art deco", "photorealistic", "neo-primitivism", "vorticism"}},
      {FlavorCategory::other, {"artstation", "matte finish", "8k", "trending on behance"}},
  };
  for (const auto& [category, names] : seed_lists) {
    std::size_t count = 100;
    for (const auto& name : names) catalog.add(category, name, count--);
  }
  return catalog;
}

}  // namespace promptex
