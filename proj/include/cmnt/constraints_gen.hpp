#pragma once

#include "cmnt/text.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace cmnt {

class FrequencyTable {
 public:
  FrequencyTable() = default;
  explicit FrequencyTable(const std::vector<Words>& corpus);

  void add(const Words& sentence);
  long count(const std::string& word) const;  // 0 when unseen
  std::size_t size() const { return counts_.size(); }
  // All stored words in lexicographic order.
  std::vector<std::string> words() const;

 private:
  std::map<std::string, long> counts_;
};

// Word-to-word translation probabilities t(target | source).
class AlignmentTable {
 public:
  struct Entry {
    std::string target;
    double prob;
  };

  // Replaces the entries for `source`; they are stored by descending probability.
  void set(const std::string& source, std::vector<Entry> entries);
  const std::vector<Entry>* lookup(const std::string& source) const;
  std::optional<std::string> best_target(const std::string& source) const;
  const std::set<std::string>& sources_of(const std::string& target) const;

  std::size_t size() const { return table_.size(); }
  const std::map<std::string, std::vector<Entry>>& entries() const { return table_; }

  // source<TAB>target<TAB>prob, sorted by source then descending prob.
  void save(const std::filesystem::path& path) const;
  static AlignmentTable load(const std::filesystem::path& path);

 private:
  std::map<std::string, std::vector<Entry>> table_;
  std::map<std::string, std::set<std::string>> reverse_;
};

struct AlignmentOptions {
  int iterations = 5;
  double prune_threshold = 0.05;
};

// IBM Model 1 EM with a NULL source word, then pruning and renormalisation.
// `unpruned`, when non-null, receives the table before pruning.
AlignmentTable build_alignment_table(const std::vector<Words>& source, const std::vector<Words>& target,
                                     const AlignmentOptions& options = {}, AlignmentTable* unpruned = nullptr);

// The k rarest distinct non-punctuation words, rarity ties to the earlier
// position, returned in order of appearance.
Words rarest_words(const Words& sentence, const FrequencyTable& freq, int k);
Words extract_perfect_constraints(const Words& reference, const FrequencyTable& freq, int k = 5);

// Other targets sharing a source entry with `word`.
std::set<std::string> replacing_candidates(const std::string& word, const AlignmentTable& table);

struct NoisyConstraints {
  Words words;
  std::vector<int> noise_positions;  // zero-based, ascending
};

// Replacement used for one noisy position: a uniform replacing candidate absent
// from the reference, otherwise a uniform vocabulary word absent from it.
std::string noise_word(const std::string& word, const Words& reference, const AlignmentTable& table,
                       const std::vector<std::string>& vocabulary, std::mt19937_64& rng);

// Each constraint independently replaced with probability p.
NoisyConstraints inject_noise(const Words& constraints, const Words& reference, const AlignmentTable& table,
                              const std::vector<std::string>& vocabulary, double p, std::mt19937_64& rng);

// Exactly n positions, chosen uniformly without replacement. |constraints|
// must equal `expected_size` (5 unless configured otherwise).
NoisyConstraints fixed_noise_count(const Words& constraints, const Words& reference, const AlignmentTable& table,
                                   const std::vector<std::string>& vocabulary, int n, std::mt19937_64& rng,
                                   std::size_t expected_size = 5);

// Rarest source words mapped to their best table translation.
Words auto_constraints(const Words& source, const FrequencyTable& source_freq, const AlignmentTable& table,
                       int k = 5);

struct NoisyRate {
  std::size_t constraints = 0;
  std::size_t absent = 0;
  double rate() const { return constraints ? static_cast<double>(absent) / static_cast<double>(constraints) : 0.0; }
};

// Fraction of constraints that do not occur in their reference.
NoisyRate noisy_rate(const std::vector<Words>& constraints, const std::vector<Words>& references);

// One line per sentence, tab-separated words; empty line = no constraints.
void write_constraints(const std::filesystem::path& path, const std::vector<Words>& constraints);
std::vector<Words> read_constraints(const std::filesystem::path& path);
// One line per sentence, comma-separated zero-based positions.
void write_noise_positions(const std::filesystem::path& path, const std::vector<std::vector<int>>& positions);
std::vector<std::vector<int>> read_noise_positions(const std::filesystem::path& path);

}  // namespace cmnt
