#include "cmnt/vocab.hpp"

#include "cmnt/error.hpp"

#include <algorithm>
#include <map>

namespace cmnt {

namespace {
const std::vector<std::string> kSpecialNames = {"<pad>", "<s>", "</s>", "<unk>"};
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
  tokens_ = kSpecialNames;
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("vocabulary: empty token at id " + std::to_string(i));
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw DataError("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
  }
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(const Words& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Words Vocabulary::decode(const std::vector<int>& ids) const {
  Words out;
  for (int i : ids) {
    if (i >= kSpecials) out.push_back(token(i));
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  write_lines(path, std::vector<std::string>(tokens_.begin() + kSpecials, tokens_.end()));
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return Vocabulary(lines);
}

Vocabulary build_vocab(const std::vector<Words>& corpus, int max_size) {
  if (max_size <= Vocabulary::kSpecials) throw Error("build_vocab: max_size must exceed 4");
  std::map<std::string, long> counts;
  for (const auto& line : corpus)
    for (const auto& w : line) ++counts[w];
  for (const auto& s : kSpecialNames) counts.erase(s);
  std::vector<std::pair<std::string, long>> ranked(counts.begin(), counts.end());
  // map order is lexicographic, so a stable sort keeps ties in that order
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  const auto keep = std::min(ranked.size(), static_cast<std::size_t>(max_size - Vocabulary::kSpecials));
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(tokens);
}

}  // namespace cmnt
