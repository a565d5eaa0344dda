#pragma once

#include "cmnt/model.hpp"

#include <vector>

namespace cmnt {

struct Hypothesis {
  std::vector<int> tokens;     // eos included when finished
  double log_prob = 0.0;       // sum of per-step natural-log probabilities
  bool finished = false;
  std::vector<bool> coverage;  // one flag per constraint
  bool flagged = false;        // search gave up: unfinished, or constraints force-appended
};

// Candidate order everywhere: higher log-prob first, then the lexicographically
// smaller token sequence.
bool better(const Hypothesis& a, const Hypothesis& b);

// Coverage progress of a token sequence: tokens of completed constraints plus
// the longest partial match in progress.
int coverage_count(const ConstraintSet& c, const std::vector<int>& tokens);

// Plain length-wise beam search; constraints only reach the model.
Hypothesis beam_search(const DecodeSession& session, int beam, int max_len);
// Grid beam search: one cell of width `beam` per coverage count.
Hypothesis grid_beam_search(const DecodeSession& session, int beam, int max_len);
// Dynamic beam allocation: one beam of width `beam` split into coverage banks.
Hypothesis dba_search(const DecodeSession& session, int beam, int max_len);
// Enumerates every eos-terminated sequence of at most max_len tokens. With
// `require_coverage`, only sequences covering every constraint compete.
Hypothesis exhaustive_oracle(const DecodeSession& session, int max_len, bool require_coverage);

// Tokens a decoder may emit (everything except pad and bos).
std::vector<int> emittable_tokens(int vocab_size);

}  // namespace cmnt
