#include "cmnt/bpe.hpp"

#include "cmnt/error.hpp"

#include <sstream>

namespace cmnt {

namespace {

std::vector<std::string> initial_symbols(const std::string& word) {
  auto syms = utf8_chars(word);
  if (!syms.empty()) syms.back() += BpeModel::kEndOfWord;
  return syms;
}

void merge_pair(std::vector<std::string>& syms, const BpeModel::Merge& m) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size(); ++i) {
    if (i + 1 < syms.size() && syms[i] == m.first && syms[i + 1] == m.second) {
      out.push_back(syms[i] + syms[i + 1]);
      ++i;
    } else {
      out.push_back(std::move(syms[i]));
    }
  }
  syms = std::move(out);
}

}  // namespace

BpeModel::BpeModel(std::vector<Merge> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    if (!rank_.emplace(merges_[i], i).second) {
      throw DataError("bpe: duplicate merge '" + merges_[i].first + " " + merges_[i].second + "'");
    }
  }
}

Words BpeModel::apply_word(const std::string& word) const {
  auto syms = initial_symbols(word);
  while (syms.size() > 1) {
    std::size_t best = merges_.size();
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      auto it = rank_.find({syms[i], syms[i + 1]});
      if (it != rank_.end() && it->second < best) best = it->second;
    }
    if (best == merges_.size()) break;
    merge_pair(syms, merges_[best]);
  }
  return syms;
}

Words BpeModel::apply(const Words& words) const {
  Words out;
  for (const auto& w : words) {
    auto pieces = apply_word(w);
    out.insert(out.end(), pieces.begin(), pieces.end());
  }
  return out;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::vector<std::string> lines{std::to_string(merges_.size())};
  for (const auto& [l, r] : merges_) lines.push_back(l + " " + r);
  write_lines(path, lines);
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError("bpe model " + path.string() + ": missing header");
  std::size_t count = 0;
  try {
    count = std::stoul(lines[0]);
  } catch (const std::exception&) {
    throw DataError("bpe model " + path.string() + ": bad header '" + lines[0] + "'");
  }
  if (lines.size() < count + 1) {
    throw DataError("bpe model " + path.string() + ": header says " + std::to_string(count) +
                    " merges, file has " + std::to_string(lines.size() - 1));
  }
  std::vector<Merge> merges;
  for (std::size_t i = 1; i <= count; ++i) {
    const auto parts = split_words(lines[i]);
    if (parts.size() != 2) throw DataError("bpe model " + path.string() + ": bad merge on line " + std::to_string(i + 1));
    merges.emplace_back(parts[0], parts[1]);
  }
  return BpeModel(std::move(merges));
}

BpeModel learn_bpe(const std::vector<Words>& corpus, int merges) {
  if (merges < 0) throw Error("learn_bpe: merges must be >= 0");
  std::map<std::string, long> freq;
  for (const auto& line : corpus)
    for (const auto& w : line) ++freq[w];
  if (freq.empty()) throw DataError("learn_bpe: empty corpus");

  std::vector<std::pair<std::vector<std::string>, long>> words;
  for (const auto& [w, n] : freq) words.emplace_back(initial_symbols(w), n);

  std::vector<BpeModel::Merge> learned;
  for (int step = 0; step < merges; ++step) {
    std::map<BpeModel::Merge, long> pairs;
    for (const auto& [syms, n] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) pairs[{syms[i], syms[i + 1]}] += n;
    const BpeModel::Merge* best = nullptr;
    long best_n = 1;
    for (const auto& [p, n] : pairs) {
      if (n > best_n) {
        best = &p;
        best_n = n;
      }
    }
    if (!best) break;
    const auto m = *best;
    for (auto& entry : words) merge_pair(entry.first, m);
    learned.push_back(m);
  }
  return BpeModel(std::move(learned));
}

Words undo_bpe(const Words& subwords) {
  Words out;
  std::string cur;
  for (const auto& s : subwords) {
    if (s.size() >= BpeModel::kEndOfWord.size() &&
        s.compare(s.size() - BpeModel::kEndOfWord.size(), BpeModel::kEndOfWord.size(), BpeModel::kEndOfWord) == 0) {
      cur += s.substr(0, s.size() - BpeModel::kEndOfWord.size());
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += s;
    }
  }
  // a truncated hypothesis may end mid-word
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace cmnt
