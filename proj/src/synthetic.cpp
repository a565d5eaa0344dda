#include "cmnt/synthetic.hpp"

#include "cmnt/error.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace cmnt {

SyntheticCorpus generate_synthetic(const SyntheticOptions& o) {
  if (o.pairs < 0 || o.common_words < 1 || o.variants < 1 || o.min_common < 0 || o.max_common < o.min_common ||
      o.ambiguous_per_sentence < 0 || o.ambiguous_per_sentence > o.ambiguous_words || o.cue_probability < 0.0 ||
      o.cue_probability > 1.0) {
    throw Error("generate_synthetic: inconsistent options");
  }
  std::mt19937_64 rng(o.seed);
  std::uniform_int_distribution<int> n_common(o.min_common, o.max_common);
  std::uniform_int_distribution<int> common(0, o.common_words - 1);
  std::uniform_int_distribution<int> variant(0, o.variants - 1);
  std::bernoulli_distribution cue(o.cue_probability);
  std::vector<int> ambiguous(static_cast<std::size_t>(o.ambiguous_words));
  for (int i = 0; i < o.ambiguous_words; ++i) ambiguous[static_cast<std::size_t>(i)] = i;

  SyntheticCorpus out;
  for (int p = 0; p < o.pairs; ++p) {
    // slot >= 0: common word id; slot < 0: ambiguous word -(id + 1)
    std::vector<int> slots;
    const int nc = n_common(rng);
    for (int i = 0; i < nc; ++i) slots.push_back(common(rng));
    std::shuffle(ambiguous.begin(), ambiguous.end(), rng);
    for (int i = 0; i < o.ambiguous_per_sentence; ++i) slots.push_back(-(ambiguous[static_cast<std::size_t>(i)] + 1));
    std::shuffle(slots.begin(), slots.end(), rng);

    const int v = variant(rng);
    Words src, tgt;
    for (int s : slots) {
      if (s >= 0) {
        src.push_back("s" + std::to_string(s));
        tgt.push_back("T" + std::to_string(s));
        continue;
      }
      const int a = -s - 1;
      if (cue(rng)) src.push_back("m" + std::to_string(v));
      src.push_back("amb" + std::to_string(a));
      tgt.push_back("W" + std::to_string(a) + "v" + std::to_string(v));
    }
    std::reverse(tgt.begin(), tgt.end());
    out.source.push_back(std::move(src));
    out.target.push_back(std::move(tgt));
  }
  return out;
}

}  // namespace cmnt
