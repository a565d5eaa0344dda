#pragma once

#include "cmnt/text.hpp"

#include <cstdint>
#include <vector>

namespace cmnt {

// A toy translation task with lexical ambiguity. Common source words map
// one-to-one onto target words. Each ambiguous source word has several target
// variants, and one sense index per sentence picks the variant of every
// ambiguous word in it. A cue marker in front of an ambiguous word names the
// sense; sentences without any cue leave it unpredictable from the source.
// Markers are not translated and the target reverses the source order.
struct SyntheticOptions {
  int pairs = 2000;
  int common_words = 20;
  int ambiguous_words = 20;
  int variants = 8;
  int ambiguous_per_sentence = 5;
  int min_common = 2;
  int max_common = 5;
  double cue_probability = 0.15;  // per ambiguous word
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<Words> source;
  std::vector<Words> target;
};

SyntheticCorpus generate_synthetic(const SyntheticOptions& options);

}  // namespace cmnt
