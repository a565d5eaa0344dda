#include "cmnt/constraint.hpp"

#include <algorithm>

namespace cmnt {

ConstraintSet ConstraintSet::from_tokens(std::span<const int> ids) {
  ConstraintSet c;
  for (int id : ids) c.add({"", {id}});
  return c;
}

std::size_t ConstraintSet::total_tokens() const {
  std::size_t n = 0;
  for (const auto& c : items_) n += c.tokens.size();
  return n;
}

bool contains_subsequence(std::span<const int> haystack, std::span<const int> needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
         haystack.end();
}

std::vector<bool> ConstraintSet::satisfied(std::span<const int> prefix) const {
  std::vector<bool> out(items_.size());
  for (std::size_t i = 0; i < items_.size(); ++i) {
    out[i] = contains_subsequence(prefix, items_[i].tokens);
  }
  return out;
}

bool ConstraintSet::all_satisfied(std::span<const int> prefix) const {
  return std::all_of(items_.begin(), items_.end(),
                     [&](const Constraint& c) { return contains_subsequence(prefix, c.tokens); });
}

}  // namespace cmnt
