#include "cmnt/eval.hpp"

#include "cmnt/error.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

namespace cmnt {

namespace {

std::map<std::vector<std::string>, std::size_t> ngrams(const Words& w, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++out[Words(w.begin() + static_cast<std::ptrdiff_t>(i), w.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

BleuReport bleu4(const std::vector<Words>& hypotheses, const std::vector<Words>& references) {
  if (hypotheses.size() != references.size()) {
    throw DataError("bleu4: " + std::to_string(hypotheses.size()) + " hypotheses but " +
                    std::to_string(references.size()) + " references");
  }
  std::array<std::size_t, 4> matched{}, total{};
  BleuReport r;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    r.hyp_length += hypotheses[s].size();
    r.ref_length += references[s].size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto h = ngrams(hypotheses[s], n);
      const auto ref = ngrams(references[s], n);
      for (const auto& [g, count] : h) {
        auto it = ref.find(g);
        matched[n - 1] += std::min(count, it == ref.end() ? std::size_t{0} : it->second);
        total[n - 1] += count;
      }
    }
  }
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 0; n < 4; ++n) {
    r.precision[n] = total[n] ? static_cast<double>(matched[n]) / static_cast<double>(total[n]) : 0.0;
    if (r.precision[n] == 0.0) zero = true;
    else log_sum += std::log(r.precision[n]);
  }
  if (r.hyp_length == 0) {
    r.brevity_penalty = 0.0;
  } else if (r.hyp_length < r.ref_length) {
    r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
  } else {
    r.brevity_penalty = 1.0;
  }
  r.bleu = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

std::string format_report(const BleuReport& r, std::optional<double> sec_per_sentence) {
  std::string out = "BLEU = " + fixed(r.bleu, 2) + ", " + fixed(100 * r.precision[0], 1) + "/" +
                    fixed(100 * r.precision[1], 1) + "/" + fixed(100 * r.precision[2], 1) + "/" +
                    fixed(100 * r.precision[3], 1) + " (BP=" + fixed(r.brevity_penalty, 3) +
                    ", hyp_len=" + std::to_string(r.hyp_length) + ", ref_len=" + std::to_string(r.ref_length) +
                    ")\n";
  if (sec_per_sentence) out += "decoding: " + fixed(*sec_per_sentence, 6) + " s/sentence\n";
  out += "\nbleu=" + fixed(r.bleu, 2) + "\n";
  for (int n = 0; n < 4; ++n) out += "p" + std::to_string(n + 1) + "=" + fixed(r.precision[static_cast<std::size_t>(n)], 6) + "\n";
  out += "bp=" + fixed(r.brevity_penalty, 6) + "\n";
  out += "hyp_len=" + std::to_string(r.hyp_length) + "\n";
  out += "ref_len=" + std::to_string(r.ref_length) + "\n";
  if (sec_per_sentence) out += "sec_per_sentence=" + fixed(*sec_per_sentence, 6) + "\n";
  return out;
}

RuntimeReport measure_runtime(const std::function<void(std::size_t)>& decode, std::size_t sentences,
                              int repetitions) {
  if (sentences == 0) throw DataError("measure_runtime: empty test set");
  if (repetitions < 3) throw Error("measure_runtime: at least 3 repetitions required");
  using clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < sentences; ++i) decode(i);
  RuntimeReport r;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto start = clock::now();
    for (std::size_t i = 0; i < sentences; ++i) decode(i);
    const std::chrono::duration<double> elapsed = clock::now() - start;
    r.repetition_sec_per_sentence.push_back(elapsed.count() / static_cast<double>(sentences));
  }
  r.mean_sec_per_sentence = std::accumulate(r.repetition_sec_per_sentence.begin(), r.repetition_sec_per_sentence.end(), 0.0) /
                            static_cast<double>(repetitions);
  return r;
}

}  // namespace cmnt
