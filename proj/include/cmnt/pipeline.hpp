#pragma once

#include "cmnt/bpe.hpp"
#include "cmnt/constraints_gen.hpp"
#include "cmnt/dataset.hpp"
#include "cmnt/decoding.hpp"
#include "cmnt/eval.hpp"
#include "cmnt/model.hpp"
#include "cmnt/run_config.hpp"
#include "cmnt/vocab.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cmnt {

// BPE models and vocabularies of both sides, stored as bpe.src, bpe.tgt,
// vocab.src and vocab.tgt in one directory.
struct TextModels {
  BpeModel src_bpe, tgt_bpe;
  Vocabulary src_vocab, tgt_vocab;

  TextSide src() const { return {src_bpe, src_vocab}; }
  TextSide tgt() const { return {tgt_bpe, tgt_vocab}; }
  void save(const std::filesystem::path& dir) const;
  static TextModels load(const std::filesystem::path& dir);
};

TextModels learn_text_models(const std::vector<Words>& source, const std::vector<Words>& target, int src_merges,
                             int tgt_merges, int src_vocab_size, int tgt_vocab_size);

enum class Scenario { perfect = 1, noisy = 2, automatic = 3 };
Scenario parse_scenario(std::string_view s);  // perfect|noisy|auto or 1|2|3

struct ConstraintOptions {
  int k = 5;
  double noise_p = 0.6;
  int noise_count = -1;  // >= 0: exactly this many noises per sentence
  std::uint64_t seed = 1;
};

struct GeneratedConstraints {
  std::vector<Words> constraints;
  std::vector<std::vector<int>> noise_positions;  // empty lists outside the noisy scenario
};

// Perfect and noisy constraints come from `references` with rarity measured
// by `target_freq`; automatic ones from `sources` with `source_freq`.
GeneratedConstraints generate_constraints(Scenario scenario, const std::vector<Words>& sources,
                                          const std::vector<Words>& references, const FrequencyTable& source_freq,
                                          const FrequencyTable& target_freq, const AlignmentTable& table,
                                          const ConstraintOptions& options);

enum class DecoderMode { beam, gbs, dba };
DecoderMode parse_decoder(std::string_view s);

struct DecodeOptions {
  DecoderMode mode = DecoderMode::beam;
  int beam = 4;
  int max_len = 0;  // 0: 2|x| + 10, capped so the model's max_length holds
};

struct Translation {
  Words words;
  Hypothesis hypothesis;
  double seconds = 0.0;
};

Translation translate(const Model& model, const TextModels& text, const Words& source, const Words& constraints,
                      const DecodeOptions& options);

// One line per sentence: log_prob, coverage flags (0/1 per constraint),
// microseconds, flagged.
std::string translation_metadata(const Translation& t);
// Mean seconds per sentence from a metadata file.
double mean_seconds_from_metadata(const std::filesystem::path& path);

ModelConfig model_config_from(const RunConfig& config, int source_vocab, int target_vocab);

// Algorithm-1 run: constraints for training, baseline training and
// fine-tuning, test constraints (read or generated), translation, report and
// manifest. Artifacts are written to config "out_dir" as each stage finishes.
struct PipelineResult {
  std::optional<BleuReport> bleu;
  std::optional<NoisyRate> test_noisy_rate;
  double sec_per_sentence = 0.0;
};
PipelineResult run_pipeline(const RunConfig& config, std::ostream& log);

}  // namespace cmnt
