#include "cmnt/run_config.hpp"

#include "cmnt/model_config.hpp"
#include "cmnt/text.hpp"

#include <charconv>
#include <cmath>

namespace cmnt {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

const std::vector<RunConfig::Key>& RunConfig::keys() {
  static const std::vector<Key> k = {
      {"scenario", "perfect", "constraint source: perfect | noisy | auto (or 1 | 2 | 3)"},
      {"variant", "SE-Attn", "baseline or <SE|DE>-<Gate|Copy|Attn>"},
      {"decoder", "beam", "beam | gbs | dba"},
      {"train_src", "", "training source corpus"},
      {"train_tgt", "", "training target corpus"},
      {"test_src", "", "test source corpus"},
      {"test_tgt", "", "test references (needed for BLEU and reference-based constraints)"},
      {"test_constraints", "", "user constraints for the test set; generated when empty"},
      {"table", "", "translation table to use instead of building one"},
      {"out_dir", "run", "output directory"},
      {"k", "5", "constraints per sentence"},
      {"train_noise_p", "0.6", "replacement probability for noisy training constraints"},
      {"test_noise_p", "0.6", "replacement probability for noisy test constraints"},
      {"test_noise_count", "-1", "exact noises per test sentence (>= 0 overrides test_noise_p)"},
      {"src_merges", "2000", "source BPE merges"},
      {"tgt_merges", "2000", "target BPE merges"},
      {"src_vocab", "4000", "source vocabulary size including specials"},
      {"tgt_vocab", "4000", "target vocabulary size including specials"},
      {"align_iterations", "5", "IBM model 1 EM iterations"},
      {"prune_threshold", "0.05", "translation table pruning threshold"},
      {"encoder_layers", "2", ""},
      {"decoder_layers", "2", ""},
      {"model_dim", "64", ""},
      {"heads", "4", ""},
      {"ff_dim", "128", ""},
      {"dropout", "0.1", ""},
      {"max_length", "128", "longest token sequence the model accepts"},
      {"epochs", "70", "baseline training epochs"},
      {"finetune_epochs", "30", "constraint-model fine-tuning epochs"},
      {"batch_size", "16", ""},
      {"learning_rate", "0.002", ""},
      {"beam", "4", "beam width (per grid cell for gbs)"},
      {"max_len", "0", "decoding length limit; 0 = 2|x| + 10 capped by max_length"},
      {"seed", "1", "seed for initialisation, dropout, shuffling and noise"},
  };
  return k;
}

RunConfig::RunConfig() {
  for (const auto& k : keys()) values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find('\n', start), text.size());
    std::string line(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected key=value");
    }
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const UsageError& e) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) { merge_text(read_file(path), path.string()); }

const std::string& RunConfig::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw UsageError("unknown config key '" + key + "'");
  return it->second;
}

long RunConfig::integer(const std::string& key) const {
  const std::string& v = str(key);
  long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw UsageError("config key '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::real(const std::string& key) const {
  const std::string& v = str(key);
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out)) {
    throw UsageError("config key '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::validate() const {
  for (const char* k : {"k", "test_noise_count", "src_merges", "tgt_merges", "src_vocab", "tgt_vocab",
                        "align_iterations", "encoder_layers", "decoder_layers", "model_dim", "heads", "ff_dim",
                        "max_length", "epochs", "finetune_epochs", "batch_size", "beam", "max_len", "seed"}) {
    integer(k);
  }
  for (const char* k : {"train_noise_p", "test_noise_p", "prune_threshold", "dropout", "learning_rate"}) real(k);
  for (const char* k : {"train_noise_p", "test_noise_p"}) {
    if (real(k) < 0.0 || real(k) > 1.0) throw UsageError(std::string(k) + " must be in [0, 1]");
  }
  const std::string& s = str("scenario");
  if (s != "perfect" && s != "noisy" && s != "auto" && s != "1" && s != "2" && s != "3") {
    throw UsageError("scenario must be perfect, noisy or auto (1, 2, 3), got '" + s + "'");
  }
  const std::string& d = str("decoder");
  if (d != "beam" && d != "gbs" && d != "dba") throw UsageError("decoder must be beam, gbs or dba, got '" + d + "'");
  ModelConfig probe;
  try {
    apply_variant(probe, str("variant"));
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  if (integer("k") < 0) throw UsageError("k must be >= 0");
  if (integer("seed") < 0) throw UsageError("seed must be >= 0");
}

}  // namespace cmnt
