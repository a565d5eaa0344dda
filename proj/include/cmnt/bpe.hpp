#pragma once

#include "cmnt/text.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cmnt {

// Greedy pair-merging subword model. The last symbol of every word carries
// the "</w>" marker, so undo only needs to concatenate and split on it.
class BpeModel {
 public:
  static constexpr std::string_view kEndOfWord = "</w>";
  using Merge = std::pair<std::string, std::string>;

  BpeModel() = default;
  explicit BpeModel(std::vector<Merge> merges);

  const std::vector<Merge>& merges() const { return merges_; }

  Words apply_word(const std::string& word) const;
  Words apply(const Words& words) const;

  // "<count>" then one "left right" per line.
  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

  bool operator==(const BpeModel& o) const { return merges_ == o.merges_; }

 private:
  std::vector<Merge> merges_;
  std::map<Merge, std::size_t> rank_;
};

// Most frequent adjacent pair first, ties by the smaller (left, right). Stops
// early once no pair occurs at least twice.
BpeModel learn_bpe(const std::vector<Words>& corpus, int merges);

Words undo_bpe(const Words& subwords);

}  // namespace cmnt
