#pragma once

#include "cmnt/bpe.hpp"
#include "cmnt/constraint.hpp"
#include "cmnt/vocab.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace cmnt {

// One (x, r, c) training or test tuple in token ids.
struct Example {
  std::vector<int> source;
  std::vector<int> target;  // ends with eos
  ConstraintSet constraints;
};

struct TextSide {
  const BpeModel& bpe;
  const Vocabulary& vocab;
};

std::vector<int> encode_sentence(const Words& words, const TextSide& side);
std::vector<int> encode_reference(const Words& words, const TextSide& side);  // appends eos
// Each word becomes one constraint of its subword ids.
ConstraintSet encode_constraints(const Words& words, const TextSide& target);
// Ids back to words: specials dropped, subwords merged.
Words decode_sentence(const std::vector<int>& ids, const Vocabulary& vocab);

// Line i of every input becomes tuple i. Empty `constraints` = no constraints.
std::vector<Example> assemble_dataset(const std::vector<Words>& source, const std::vector<Words>& reference,
                                      const std::vector<Words>& constraints, const TextSide& src,
                                      const TextSide& tgt);
std::vector<Example> assemble_dataset(const std::filesystem::path& source, const std::filesystem::path& reference,
                                      const std::optional<std::filesystem::path>& constraints,
                                      const TextSide& src, const TextSide& tgt);

std::vector<Words> read_corpus(const std::filesystem::path& path);

}  // namespace cmnt
