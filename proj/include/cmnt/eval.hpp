#pragma once

#include "cmnt/text.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cmnt {

struct BleuReport {
  double bleu = 0.0;                  // percent
  std::array<double, 4> precision{};  // modified n-gram precisions, n = 1..4
  double brevity_penalty = 0.0;
  std::size_t hyp_length = 0;
  std::size_t ref_length = 0;
};

// Corpus-level, case-sensitive BLEU-4 without smoothing.
BleuReport bleu4(const std::vector<Words>& hypotheses, const std::vector<Words>& references);

// Human-readable summary followed by a key=value block (bleu, p1..p4, bp,
// hyp_len, ref_len and, when given, sec_per_sentence).
std::string format_report(const BleuReport& r, std::optional<double> sec_per_sentence = std::nullopt);

struct RuntimeReport {
  double mean_sec_per_sentence = 0.0;
  std::vector<double> repetition_sec_per_sentence;
};

// One warmup pass, then `repetitions` timed passes of decode(i) over every
// sentence index. Single-threaded wall clock.
RuntimeReport measure_runtime(const std::function<void(std::size_t)>& decode, std::size_t sentences,
                              int repetitions = 3);

}  // namespace cmnt
