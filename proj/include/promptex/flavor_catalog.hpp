#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace promptex {

enum class FlavorCategory { art_form, artist, medium, style, other };

inline constexpr std::array<FlavorCategory, 5> kAllCategories = {
    FlavorCategory::art_form, FlavorCategory::artist, FlavorCategory::medium,
    FlavorCategory::style, FlavorCategory::other};

std::string_view to_string(FlavorCategory category) noexcept;
FlavorCategory parse_flavor_category(std::string_view name);

struct FlavorEntry {
  std::string flavor;
  std::size_t count = 0;  // number of corpus prompts containing the flavor

  bool operator==(const FlavorEntry&) const = default;
};

// Style phrases grouped by category. Entries within a category are kept in
// (count desc, flavor asc) order; a flavor string belongs to one category.
class FlavorCatalog {
 public:
  FlavorCatalog() = default;

  void add(FlavorCategory category, std::string flavor, std::size_t count);

  const std::vector<FlavorEntry>& flavors(FlavorCategory category) const;
  // Categories holding at least one flavor, in kAllCategories order.
  std::vector<FlavorCategory> categories() const;
  std::size_t size() const noexcept;
  bool empty() const noexcept { return size() == 0; }
  bool contains(std::string_view flavor) const;

  // All flavors across categories in (count desc, flavor asc) order.
  std::vector<FlavorEntry> ranked_pool() const;

  nlohmann::json to_json() const;
  static FlavorCatalog from_json(const nlohmann::json& doc);

  bool operator==(const FlavorCatalog&) const = default;

 private:
  std::map<FlavorCategory, std::vector<FlavorEntry>> by_category_;
};

// Small built-in catalog used when mock mode runs without a catalog file.
FlavorCatalog default_mock_catalog();

}  // namespace promptex
