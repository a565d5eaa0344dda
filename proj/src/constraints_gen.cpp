#include "cmnt/constraints_gen.hpp"

#include "cmnt/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace cmnt {

FrequencyTable::FrequencyTable(const std::vector<Words>& corpus) {
  for (const auto& s : corpus) add(s);
}

void FrequencyTable::add(const Words& sentence) {
  for (const auto& w : sentence) ++counts_[w];
}

long FrequencyTable::count(const std::string& word) const {
  auto it = counts_.find(word);
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::string> FrequencyTable::words() const {
  std::vector<std::string> out;
  out.reserve(counts_.size());
  for (const auto& [w, n] : counts_) out.push_back(w);
  return out;
}

void AlignmentTable::set(const std::string& source, std::vector<Entry> entries) {
  if (auto old = table_.find(source); old != table_.end()) {
    for (const auto& e : old->second) reverse_[e.target].erase(source);
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return a.prob != b.prob ? a.prob > b.prob : a.target < b.target;
  });
  for (const auto& e : entries) reverse_[e.target].insert(source);
  table_[source] = std::move(entries);
}

const std::vector<AlignmentTable::Entry>* AlignmentTable::lookup(const std::string& source) const {
  auto it = table_.find(source);
  return it == table_.end() || it->second.empty() ? nullptr : &it->second;
}

std::optional<std::string> AlignmentTable::best_target(const std::string& source) const {
  const auto* e = lookup(source);
  if (!e) return std::nullopt;
  return e->front().target;
}

const std::set<std::string>& AlignmentTable::sources_of(const std::string& target) const {
  static const std::set<std::string> kEmpty;
  auto it = reverse_.find(target);
  return it == reverse_.end() ? kEmpty : it->second;
}

void AlignmentTable::save(const std::filesystem::path& path) const {
  std::string out;
  char buf[64];
  for (const auto& [src, entries] : table_) {
    for (const auto& e : entries) {
      auto res = std::to_chars(buf, buf + sizeof buf, e.prob);
      out += src + '\t' + e.target + '\t' + std::string(buf, res.ptr) + '\n';
    }
  }
  write_file(path, out);
}

AlignmentTable AlignmentTable::load(const std::filesystem::path& path) {
  std::map<std::string, std::vector<Entry>> rows;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = split_tabs(lines[i]);
    if (f.size() != 3) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": expected source<TAB>target<TAB>prob");
    }
    double p = 0.0;
    const auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), p);
    if (res.ec != std::errc() || res.ptr != f[2].data() + f[2].size() || !(p >= 0.0 && p <= 1.0)) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": bad probability '" + f[2] + "'");
    }
    rows[f[0]].push_back({f[1], p});
  }
  AlignmentTable t;
  for (auto& [src, entries] : rows) t.set(src, std::move(entries));
  return t;
}

AlignmentTable build_alignment_table(const std::vector<Words>& source, const std::vector<Words>& target,
                                     const AlignmentOptions& options, AlignmentTable* unpruned) {
  if (source.size() != target.size()) {
    throw DataError("build_alignment_table: " + std::to_string(source.size()) + " source lines but " +
                    std::to_string(target.size()) + " target lines");
  }
  if (options.iterations < 1) throw Error("build_alignment_table: iterations must be >= 1");
  if (source.empty()) throw DataError("build_alignment_table: empty corpus");

  // Index words; source id 0 is NULL.
  std::unordered_map<std::string, int> sid, tid;
  std::vector<std::string> snames{""}, tnames;
  sid[""] = 0;
  auto intern = [](std::unordered_map<std::string, int>& ids, std::vector<std::string>& names, const std::string& w) {
    auto [it, fresh] = ids.emplace(w, static_cast<int>(names.size()));
    if (fresh) names.push_back(w);
    return it->second;
  };
  std::vector<std::vector<int>> src_ids(source.size()), tgt_ids(target.size());
  bool any = false;
  for (std::size_t s = 0; s < source.size(); ++s) {
    src_ids[s].push_back(0);
    for (const auto& w : source[s]) src_ids[s].push_back(intern(sid, snames, w));
    for (const auto& w : target[s]) tgt_ids[s].push_back(intern(tid, tnames, w));
    any = any || !target[s].empty();
  }
  if (!any) throw DataError("build_alignment_table: empty corpus");

  // t(y|x) over co-occurring pairs only; everything else stays zero.
  using Key = std::uint64_t;
  auto key = [](int x, int y) { return (static_cast<Key>(x) << 32) | static_cast<std::uint32_t>(y); };
  std::unordered_map<Key, double> t;
  const double init = 1.0 / static_cast<double>(tnames.size());
  for (std::size_t s = 0; s < source.size(); ++s)
    for (int x : src_ids[s])
      for (int y : tgt_ids[s]) t.emplace(key(x, y), init);

  for (int it = 0; it < options.iterations; ++it) {
    std::unordered_map<Key, double> count;
    std::vector<double> total(snames.size(), 0.0);
    for (std::size_t s = 0; s < source.size(); ++s) {
      for (int y : tgt_ids[s]) {
        double denom = 0.0;
        for (int x : src_ids[s]) denom += t[key(x, y)];
        for (int x : src_ids[s]) {
          const double c = t[key(x, y)] / denom;
          count[key(x, y)] += c;
          total[static_cast<std::size_t>(x)] += c;
        }
      }
    }
    for (auto& [k, v] : t) {
      const auto x = static_cast<std::size_t>(k >> 32);
      v = total[x] > 0.0 ? count[k] / total[x] : 0.0;
    }
  }

  std::vector<std::vector<AlignmentTable::Entry>> rows(snames.size());
  for (const auto& [k, v] : t) {
    const auto x = static_cast<std::size_t>(k >> 32);
    const auto y = static_cast<std::size_t>(k & 0xffffffffu);
    if (x == 0 || v <= 0.0) continue;
    rows[x].push_back({tnames[y], v});
  }
  AlignmentTable out;
  for (std::size_t x = 1; x < rows.size(); ++x) {
    if (unpruned) unpruned->set(snames[x], rows[x]);
    std::vector<AlignmentTable::Entry> kept;
    for (const auto& e : rows[x])
      if (e.prob >= options.prune_threshold) kept.push_back(e);
    double sum = 0.0;
    for (const auto& e : kept) sum += e.prob;
    for (auto& e : kept) e.prob /= sum;
    if (!kept.empty()) out.set(snames[x], std::move(kept));
  }
  return out;
}

Words rarest_words(const Words& sentence, const FrequencyTable& freq, int k) {
  if (k <= 0) return {};
  std::vector<std::size_t> eligible;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < sentence.size(); ++i) {
    if (is_punctuation(sentence[i]) || !seen.insert(sentence[i]).second) continue;
    eligible.push_back(i);
  }
  std::stable_sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
    return freq.count(sentence[a]) < freq.count(sentence[b]);
  });
  if (eligible.size() > static_cast<std::size_t>(k)) eligible.resize(static_cast<std::size_t>(k));
  std::sort(eligible.begin(), eligible.end());
  Words out;
  for (auto i : eligible) out.push_back(sentence[i]);
  return out;
}

Words extract_perfect_constraints(const Words& reference, const FrequencyTable& freq, int k) {
  return rarest_words(reference, freq, k);
}

std::set<std::string> replacing_candidates(const std::string& word, const AlignmentTable& table) {
  std::set<std::string> out;
  for (const auto& src : table.sources_of(word)) {
    for (const auto& e : *table.lookup(src))
      if (e.target != word) out.insert(e.target);
  }
  return out;
}

std::string noise_word(const std::string& word, const Words& reference, const AlignmentTable& table,
                       const std::vector<std::string>& vocabulary, std::mt19937_64& rng) {
  const std::unordered_set<std::string> in_ref(reference.begin(), reference.end());
  std::vector<std::string> pool;
  for (const auto& c : replacing_candidates(word, table))
    if (!in_ref.count(c)) pool.push_back(c);
  if (pool.empty()) {
    for (const auto& v : vocabulary)
      if (!in_ref.count(v) && !is_punctuation(v)) pool.push_back(v);
  }
  if (pool.empty()) throw DataError("inject_noise: every vocabulary word occurs in the reference");
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  return pool[pick(rng)];
}

NoisyConstraints inject_noise(const Words& constraints, const Words& reference, const AlignmentTable& table,
                              const std::vector<std::string>& vocabulary, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("inject_noise: probability must be in [0, 1]");
  NoisyConstraints out{constraints, {}};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    if (u(rng) < p) {
      out.words[i] = noise_word(constraints[i], reference, table, vocabulary, rng);
      out.noise_positions.push_back(static_cast<int>(i));
    }
  }
  return out;
}

NoisyConstraints fixed_noise_count(const Words& constraints, const Words& reference, const AlignmentTable& table,
                                   const std::vector<std::string>& vocabulary, int n, std::mt19937_64& rng,
                                   std::size_t expected_size) {
  if (constraints.size() != expected_size) {
    throw Error("fixed_noise_count: expected " + std::to_string(expected_size) + " constraints, got " +
                std::to_string(constraints.size()));
  }
  if (n < 0 || static_cast<std::size_t>(n) > constraints.size()) {
    throw Error("fixed_noise_count: noise count " + std::to_string(n) + " out of range");
  }
  std::vector<int> idx(constraints.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(n));
  std::sort(idx.begin(), idx.end());
  NoisyConstraints out{constraints, idx};
  for (int i : idx) {
    out.words[static_cast<std::size_t>(i)] =
        noise_word(constraints[static_cast<std::size_t>(i)], reference, table, vocabulary, rng);
  }
  return out;
}

Words auto_constraints(const Words& source, const FrequencyTable& source_freq, const AlignmentTable& table, int k) {
  Words out;
  for (const auto& w : rarest_words(source, source_freq, k)) {
    if (auto t = table.best_target(w)) out.push_back(std::move(*t));
  }
  return out;
}

NoisyRate noisy_rate(const std::vector<Words>& constraints, const std::vector<Words>& references) {
  if (constraints.size() != references.size()) {
    throw DataError("noisy_rate: " + std::to_string(constraints.size()) + " constraint lines but " +
                    std::to_string(references.size()) + " references");
  }
  NoisyRate r;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const std::unordered_set<std::string> ref(references[i].begin(), references[i].end());
    for (const auto& c : constraints[i]) {
      ++r.constraints;
      if (!ref.count(c)) ++r.absent;
    }
  }
  return r;
}

void write_constraints(const std::filesystem::path& path, const std::vector<Words>& constraints) {
  std::vector<std::string> lines;
  for (const auto& c : constraints) lines.push_back(join_words(c, "\t"));
  write_lines(path, lines);
}

std::vector<Words> read_constraints(const std::filesystem::path& path) {
  std::vector<Words> out;
  for (const auto& line : read_lines(path)) {
    Words w;
    for (auto& f : split_tabs(line))
      if (!f.empty()) w.push_back(std::move(f));
    out.push_back(std::move(w));
  }
  return out;
}

void write_noise_positions(const std::filesystem::path& path, const std::vector<std::vector<int>>& positions) {
  std::vector<std::string> lines;
  for (const auto& p : positions) {
    std::string l;
    for (std::size_t i = 0; i < p.size(); ++i) l += (i ? "," : "") + std::to_string(p[i]);
    lines.push_back(std::move(l));
  }
  write_lines(path, lines);
}

std::vector<std::vector<int>> read_noise_positions(const std::filesystem::path& path) {
  std::vector<std::vector<int>> out;
  for (const auto& line : read_lines(path)) {
    std::vector<int> p;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      try {
        p.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw DataError(path.string() + ": bad noise position '" + item + "'");
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace cmnt
