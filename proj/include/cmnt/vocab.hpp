#pragma once

#include "cmnt/text.hpp"

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

namespace cmnt {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kSpecials = 4;

  // Only the four specials.
  Vocabulary();
  // Specials followed by `tokens` in order. Duplicates or special names are rejected.
  explicit Vocabulary(const std::vector<std::string>& tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(const std::string& token) const;  // unk when absent
  bool contains(const std::string& token) const { return index_.count(token) > 0; }
  const std::string& token(int id) const;

  std::vector<int> encode(const Words& tokens) const;
  // Specials are dropped.
  Words decode(const std::vector<int>& ids) const;

  // One token per line, specials omitted.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Frequency-ranked, ties lexicographic, truncated to `max_size` including specials.
Vocabulary build_vocab(const std::vector<Words>& corpus, int max_size);

}  // namespace cmnt
