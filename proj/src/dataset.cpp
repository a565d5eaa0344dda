#include "cmnt/dataset.hpp"

#include "cmnt/constraints_gen.hpp"
#include "cmnt/error.hpp"

namespace cmnt {

std::vector<int> encode_sentence(const Words& words, const TextSide& side) {
  return side.vocab.encode(side.bpe.apply(words));
}

std::vector<int> encode_reference(const Words& words, const TextSide& side) {
  auto ids = encode_sentence(words, side);
  ids.push_back(Vocabulary::kEos);
  return ids;
}

ConstraintSet encode_constraints(const Words& words, const TextSide& target) {
  ConstraintSet c;
  for (const auto& w : words) c.add({w, target.vocab.encode(target.bpe.apply_word(w))});
  return c;
}

Words decode_sentence(const std::vector<int>& ids, const Vocabulary& vocab) {
  return undo_bpe(vocab.decode(ids));
}

std::vector<Example> assemble_dataset(const std::vector<Words>& source, const std::vector<Words>& reference,
                                      const std::vector<Words>& constraints, const TextSide& src,
                                      const TextSide& tgt) {
  if (source.size() != reference.size()) {
    throw DataError("assemble_dataset: source has " + std::to_string(source.size()) + " lines, reference has " +
                    std::to_string(reference.size()));
  }
  if (!constraints.empty() && constraints.size() != source.size()) {
    throw DataError("assemble_dataset: source has " + std::to_string(source.size()) +
                    " lines, constraints have " + std::to_string(constraints.size()));
  }
  std::vector<Example> out;
  out.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (source[i].empty()) throw DataError("assemble_dataset: empty source sentence on line " + std::to_string(i + 1));
    Example ex;
    ex.source = encode_sentence(source[i], src);
    ex.target = encode_reference(reference[i], tgt);
    if (!constraints.empty()) ex.constraints = encode_constraints(constraints[i], tgt);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<Words> read_corpus(const std::filesystem::path& path) {
  std::vector<Words> out;
  for (const auto& line : read_lines(path)) out.push_back(split_words(line));
  return out;
}

std::vector<Example> assemble_dataset(const std::filesystem::path& source, const std::filesystem::path& reference,
                                      const std::optional<std::filesystem::path>& constraints,
                                      const TextSide& src, const TextSide& tgt) {
  std::vector<Words> c;
  if (constraints) c = read_constraints(*constraints);
  return assemble_dataset(read_corpus(source), read_corpus(reference), c, src, tgt);
}

}  // namespace cmnt
