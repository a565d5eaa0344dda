#pragma once

#include <span>
#include <string>
#include <vector>

namespace cmnt {

// One lexical constraint: a target word and its subword token ids.
struct Constraint {
  std::string word;
  std::vector<int> tokens;

  bool operator==(const Constraint&) const = default;
};

class ConstraintSet {
 public:
  ConstraintSet() = default;
  explicit ConstraintSet(std::vector<Constraint> items) : items_(std::move(items)) {}

  // Single-subword constraints, one per id; words are left empty.
  static ConstraintSet from_tokens(std::span<const int> ids);

  void add(Constraint c) { items_.push_back(std::move(c)); }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Constraint& operator[](std::size_t i) const { return items_[i]; }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::size_t total_tokens() const;
  // Flag i is set when constraint i's full subword sequence occurs
  // contiguously in `prefix`.
  std::vector<bool> satisfied(std::span<const int> prefix) const;
  bool all_satisfied(std::span<const int> prefix) const;

  bool operator==(const ConstraintSet&) const = default;

 private:
  std::vector<Constraint> items_;
};

bool contains_subsequence(std::span<const int> haystack, std::span<const int> needle);

}  // namespace cmnt
