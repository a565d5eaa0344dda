// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Every tolerance is pinned below.

#include "../unit/fixtures.hpp"

#include "cmnt/bpe.hpp"
#include "cmnt/checkpoint.hpp"
#include "cmnt/constraints_gen.hpp"
#include "cmnt/dataset.hpp"
#include "cmnt/decoding.hpp"
#include "cmnt/eval.hpp"
#include "cmnt/memory.hpp"
#include "cmnt/optim.hpp"
#include "cmnt/pipeline.hpp"
#include "cmnt/run_config.hpp"
#include "cmnt/synthetic.hpp"
#include "cmnt/text.hpp"
#include "cmnt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace cmnt;
namespace fs = std::filesystem;

namespace tol {
constexpr double kGradRelError = 1e-4;
constexpr double kGradSeconds = 120.0;
constexpr double kReluMargin = 1e-2;  // smallest |relu input| for a gradient-check tuple
constexpr double kDistributionSum = 1e-6;
constexpr double kOracleLogProb = 1e-12;
constexpr double kMemoryOverBaseline = 1.2;
constexpr double kGbsOverBaseline = 3.0;
// Spread of repeated min-of-rounds timings on a shared core. DBA expands the
// same number of hypotheses per step as beam search, so "not cheaper than the
// baseline" can only be asked up to this band.
constexpr double kTimingNoise = 0.05;
constexpr double kPerfectGain = 1.0;
constexpr double kNoisyRate = 0.001;  // absolute, i.e. 0.1 percentage points
constexpr double kBleuBp = 0.01;
constexpr double kExperimentSeconds = 30 * 60.0;
}  // namespace tol

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Model perturbed_model(const std::string& variant, int vocab, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  Model m(fixtures::tiny_config(variant, vocab), seed);
  fixtures::perturb(m, rng, scale);
  return m;
}

// ---------------------------------------------------------------- 1
// Finite differences only mean something where the loss is smooth, so tuples
// whose forward pass puts a relu input near zero are redrawn.
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  std::string worst_variant;
  std::size_t checked = 0;
  int redraws = 0;
  for (const auto& v : fixtures::kVariants) {
    for (int tuple = 0; tuple < 3; ++tuple) {
      Model m(fixtures::tiny_config(v), 300 + static_cast<std::uint64_t>(tuple));
      std::vector<int> x, r;
      ConstraintSet c;
      for (int attempt = 0;; ++attempt) {
        if (attempt == 1000) return {false, v + ": no tuple clear of relu kinks in 1000 draws"};
        m = Model(fixtures::tiny_config(v), 300 + static_cast<std::uint64_t>(tuple));
        fixtures::perturb(m, rng);
        x = fixtures::random_ids(rng, 12, 2, 4);
        c = fixtures::random_constraints_exact(rng, 12, 1 + tuple);
        r = fixtures::random_reference(rng, 12, 1, 3);
        // one constraint inside the reference so masking and copying both fire
        r.insert(r.begin() + 1, c[0].tokens.begin(), c[0].tokens.end());
        Graph g;
        m.sequence_loss(g, x, r, c, {});
        if (g.relu_margin() >= tol::kReluMargin) break;
        ++redraws;
      }
      auto loss = [&](bool with_grad) {
        Graph g;
        Var l = m.sequence_loss(g, x, r, c, {});
        if (with_grad) g.backward(l);
        return g.scalar(l);
      };
      auto ts = m.params().tensors();
      const auto res = finite_difference_check(loss, ts, 1e-4);
      checked += res.checked;
      if (res.max_relative_error > worst) {
        worst = res.max_relative_error;
        worst_variant = v;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < tol::kGradRelError && secs < tol::kGradSeconds,
          "max rel error " + fmt("%.3g", worst) + " (" + worst_variant + ") over " + std::to_string(checked) +
              " entries, " + std::to_string(redraws) + " tuples redrawn for relu margin, " + fmt("%.1f", secs) +
              " s"};
}

// ---------------------------------------------------------------- 2
Outcome normalisation() {
  std::mt19937_64 rng(202);
  const int vocab = 12;
  int steps = 0, copy_checks = 0;
  double worst = 0.0;
  long support_violations = 0;
  for (std::uint64_t model_seed = 1; steps < 1000; ++model_seed) {
    const auto& v = fixtures::kVariants[model_seed % fixtures::kVariants.size()];
    Model m = perturbed_model(v, vocab, model_seed, 0.5);
    const bool copy = m.config().integrator == IntegratorKind::copy;
    for (int sentence = 0; sentence < 4 && steps < 1000; ++sentence) {
      auto x = fixtures::random_ids(rng, vocab, 1, 5);
      auto c = fixtures::random_constraints(rng, vocab, 3);
      DecodeSession s(m, x, c);
      std::set<int> allowed;
      for (const auto& item : c) allowed.insert(item.tokens.begin(), item.tokens.end());
      auto state = s.initial_state();
      int prev = Vocabulary::kBos;
      std::vector<int> prefix;
      std::uniform_int_distribution<int> tok(Vocabulary::kSpecials, vocab - 1);
      for (int t = 0; t < 8 && steps < 1000; ++t, ++steps) {
        auto step = s.step(state, prev);
        double sum = 0.0;
        for (double p : step.distribution) sum += p;
        worst = std::max(worst, std::abs(sum - 1.0));
        if (copy) {
          const auto mem = s.memory_for(prefix);
          const auto proj = project_memory(m.params(), m.config(), mem);
          const Matrix pc = copy_distribution(m.params(), step.hidden, mem, proj, vocab);
          for (int w = 0; w < vocab; ++w)
            if (!allowed.count(w) && pc(0, w) != 0.0) ++support_violations;
          ++copy_checks;
        }
        // walk a random continuation, sometimes through a constraint token
        prev = (!allowed.empty() && t % 2) ? *allowed.begin() : tok(rng);
        prefix.push_back(prev);
        state = std::move(step.state);
      }
    }
  }
  return {worst <= tol::kDistributionSum && support_violations == 0 && copy_checks > 0,
          std::to_string(steps) + " steps, max |sum-1| " + fmt("%.3g", worst) + ", " + std::to_string(copy_checks) +
              " copy steps with " + std::to_string(support_violations) + " off-support mass entries"};
}

// ---------------------------------------------------------------- 3
bool same(const Hypothesis& a, const Hypothesis& b) {
  return a.tokens == b.tokens && std::abs(a.log_prob - b.log_prob) <= tol::kOracleLogProb;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(303);
  int mismatches = 0;
  const int models = 200;
  for (int i = 0; i < models; ++i) {
    const int vocab = 5;
    const int max_len = 2 + i % 3;  // 2..4
    const auto& v = fixtures::kVariants[static_cast<std::size_t>(i) % fixtures::kVariants.size()];
    Model m = perturbed_model(v, vocab, 1000 + static_cast<std::uint64_t>(i), 1.5);
    auto x = fixtures::random_ids(rng, vocab, 1, 3);
    // constraints over the non-eos emittable tokens, satisfiable within max_len
    std::uniform_int_distribution<int> tok(Vocabulary::kUnk, vocab - 1);
    std::uniform_int_distribution<int> len(1, max_len - 1);
    std::vector<int> ids(static_cast<std::size_t>(len(rng)));
    for (int& t : ids) t = tok(rng);
    ConstraintSet c;
    c.add({"c", ids});
    DecodeSession s(m, x, c);
    const int saturated = 1 << (2 * max_len);  // >= 3^max_len live prefixes
    if (!same(beam_search(s, saturated, max_len), exhaustive_oracle(s, max_len, false))) ++mismatches;
    if (!same(grid_beam_search(s, saturated, max_len), exhaustive_oracle(s, max_len, true))) ++mismatches;
  }
  return {mismatches == 0, std::to_string(models) + " models, " + std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------- 4
Outcome coverage_guarantee() {
  std::mt19937_64 rng(404);
  int failures = 0;
  const int cases = 500;
  for (int i = 0; i < cases; ++i) {
    const auto& v = fixtures::kVariants[static_cast<std::size_t>(i) % fixtures::kVariants.size()];
    Model m = perturbed_model(v, 12, 5000 + static_cast<std::uint64_t>(i), 1.0);
    auto x = fixtures::random_ids(rng, 12, 1, 5);
    auto c = fixtures::random_constraints_exact(rng, 12, 1 + i % 3);
    DecodeSession s(m, x, c);
    const int max_len = static_cast<int>(c.total_tokens()) + 3;  // + forced tokens stays within max_length 16
    for (const auto& h : {grid_beam_search(s, 3, max_len), dba_search(s, 3, max_len)}) {
      if (!c.all_satisfied(h.tokens) || h.tokens.empty() || h.tokens.back() != Vocabulary::kEos) ++failures;
    }
  }
  return {failures == 0, std::to_string(cases) + " cases x {GBS, DBA}, " + std::to_string(failures) + " uncovered"};
}

// ------------------------------------------------- shared synthetic experiment
struct Experiment {
  SyntheticCorpus train, test;
  TextModels text;
  AlignmentTable table;
  std::vector<Words> perfect_test, noisy_train;
  std::optional<Model> base, noisy_attn, perfect_attn;
  double baseline_bleu = 0.0;
  double perfect_bleu = 0.0;
  std::vector<double> gbs, attn;  // noise counts 0..5
  double seconds = 0.0;
};

constexpr int kBeam = 4;
constexpr int kMaxLen = 40;
constexpr int kTimingRounds = 5;

ModelConfig experiment_config(const TextModels& text) {
  ModelConfig cfg;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 2;
  cfg.model_dim = 32;
  cfg.heads = 4;
  cfg.ff_dim = 64;
  cfg.dropout = 0.1;
  cfg.max_length = 64;
  cfg.source_vocab = text.src_vocab.size();
  cfg.target_vocab = text.tgt_vocab.size();
  return cfg;
}

double corpus_bleu(const Experiment& ex, const Model& m, const std::vector<Words>& cons, bool grid) {
  const auto data = assemble_dataset(ex.test.source, ex.test.target, cons, ex.text.src(), ex.text.tgt());
  std::vector<Words> hyps;
  for (const auto& e : data) {
    DecodeSession s(m, e.source, e.constraints);
    const Hypothesis h = grid ? grid_beam_search(s, kBeam, kMaxLen) : beam_search(s, kBeam, kMaxLen);
    hyps.push_back(decode_sentence(h.tokens, ex.text.tgt_vocab));
  }
  return bleu4(hyps, ex.test.target).bleu;
}

Experiment& experiment() {
  static std::optional<Experiment> cached;
  if (cached) return *cached;
  const auto t0 = std::chrono::steady_clock::now();
  Experiment ex;
  SyntheticOptions so;
  so.pairs = 2000;
  so.seed = 1;
  ex.train = generate_synthetic(so);
  so.pairs = 200;
  so.seed = 2;
  ex.test = generate_synthetic(so);
  ex.text = learn_text_models(ex.train.source, ex.train.target, 2000, 2000, 1000, 1000);
  ex.table = build_alignment_table(ex.train.source, ex.train.target);
  const FrequencyTable src_freq(ex.train.source), tgt_freq(ex.train.target);

  ConstraintOptions copt;
  copt.k = 5;
  copt.seed = 5;
  const auto perfect_train =
      generate_constraints(Scenario::perfect, ex.train.source, ex.train.target, src_freq, tgt_freq, ex.table, copt);
  copt.noise_p = 0.6;
  const auto noisy_train =
      generate_constraints(Scenario::noisy, ex.train.source, ex.train.target, src_freq, tgt_freq, ex.table, copt);
  ex.noisy_train = noisy_train.constraints;
  ex.perfect_test =
      generate_constraints(Scenario::perfect, ex.test.source, ex.test.target, src_freq, tgt_freq, ex.table, copt)
          .constraints;

  const ModelConfig cfg = experiment_config(ex.text);
  TrainOptions to;
  to.batch_size = 16;
  to.learning_rate = 2e-3;
  to.on_epoch = [&](int e, double l) {
    if ((e + 1) % 10 == 0) std::fprintf(stderr, "  epoch %d loss %.4f (%.0f s)\n", e + 1, l, seconds_since(t0));
  };
  std::fprintf(stderr, "synthetic task: training baseline\n");
  ex.base.emplace(cfg, 7);
  to.epochs = 70;
  to.seed = 1;
  train(*ex.base, assemble_dataset(ex.train.source, ex.train.target, {}, ex.text.src(), ex.text.tgt()), to);

  ModelConfig vcfg = cfg;
  apply_variant(vcfg, "SE-Attn");
  to.epochs = 30;
  to.seed = 2;
  std::fprintf(stderr, "synthetic task: fine-tuning SE-Attn on noisy constraints\n");
  ex.noisy_attn.emplace(init_from_baseline(vcfg, *ex.base, 11));
  train(*ex.noisy_attn,
        assemble_dataset(ex.train.source, ex.train.target, noisy_train.constraints, ex.text.src(), ex.text.tgt()),
        to);
  std::fprintf(stderr, "synthetic task: fine-tuning SE-Attn on perfect constraints\n");
  ex.perfect_attn.emplace(init_from_baseline(vcfg, *ex.base, 11));
  train(*ex.perfect_attn,
        assemble_dataset(ex.train.source, ex.train.target, perfect_train.constraints, ex.text.src(), ex.text.tgt()),
        to);

  std::fprintf(stderr, "synthetic task: decoding\n");
  ex.baseline_bleu = corpus_bleu(ex, *ex.base, {}, false);
  ex.perfect_bleu = corpus_bleu(ex, *ex.perfect_attn, ex.perfect_test, false);
  for (int n = 0; n <= 5; ++n) {
    ConstraintOptions t = copt;
    t.noise_count = n;
    t.seed = 100 + static_cast<std::uint64_t>(n);
    const auto cons =
        generate_constraints(Scenario::noisy, ex.test.source, ex.test.target, src_freq, tgt_freq, ex.table, t)
            .constraints;
    ex.gbs.push_back(corpus_bleu(ex, *ex.base, cons, true));
    ex.attn.push_back(corpus_bleu(ex, *ex.noisy_attn, cons, false));
  }
  ex.seconds = seconds_since(t0);
  cached = std::move(ex);
  return *cached;
}

// ---------------------------------------------------------------- 5
// Desk-default architecture (ModelConfig defaults) trained briefly on the
// synthetic task, so beams behave like those of a real model.
std::pair<Model, Model> desk_models(const Experiment& ex) {
  ModelConfig cfg;
  cfg.source_vocab = ex.text.src_vocab.size();
  cfg.target_vocab = ex.text.tgt_vocab.size();
  cfg.max_length = 64;
  TrainOptions to;
  to.learning_rate = 2e-3;
  to.epochs = 15;
  std::fprintf(stderr, "runtime: training desk-size baseline (d=%d)\n", cfg.model_dim);
  Model base(cfg, 41);
  train(base, assemble_dataset(ex.train.source, ex.train.target, {}, ex.text.src(), ex.text.tgt()), to);
  ModelConfig vcfg = cfg;
  apply_variant(vcfg, "SE-Attn");
  Model attn = init_from_baseline(vcfg, base, 42);
  to.epochs = 5;
  std::fprintf(stderr, "runtime: fine-tuning desk-size SE-Attn\n");
  train(attn, assemble_dataset(ex.train.source, ex.train.target, ex.noisy_train, ex.text.src(), ex.text.tgt()), to);
  return {std::move(base), std::move(attn)};
}

Outcome runtime_shape() {
  Experiment& ex = experiment();
  const auto [desk_base, desk_attn] = desk_models(ex);
  const std::size_t n = 100;
  const auto data = assemble_dataset(ex.test.source, ex.test.target, ex.perfect_test, ex.text.src(), ex.text.tgt());
  auto first = [&](std::size_t i, std::size_t k) {
    const auto& c = data[i].constraints;
    ConstraintSet out;
    for (std::size_t j = 0; j < std::min(k, c.size()); ++j) out.add(c[j]);
    return out;
  };
  // one max_len for every decoder: the fallback needs room for the full set
  auto max_len = [&](std::size_t i) {
    const int cap = desk_base.config().max_length - static_cast<int>(data[i].constraints.total_tokens()) - 1;
    return std::min(2 * static_cast<int>(data[i].source.size()) + 10, cap);
  };
  auto time = [&](const Model& m, std::size_t k, const std::function<Hypothesis(const DecodeSession&, int)>& run) {
    return measure_runtime(
               [&](std::size_t i) {
                 DecodeSession s(m, data[i].source, first(i, k));
                 run(s, max_len(i));
               },
               n)
        .mean_sec_per_sentence;
  };
  auto beam = [](const DecodeSession& s, int l) { return beam_search(s, kBeam, l); };
  auto gbs = [](const DecodeSession& s, int l) { return grid_beam_search(s, kBeam, l); };
  auto dba = [](const DecodeSession& s, int l) { return dba_search(s, kBeam, l); };

  // interleaved rounds, fastest round per decoder: the box is shared and noisy
  double base = 1e9, memory = 1e9;
  std::map<std::size_t, double> g, d;
  for (std::size_t k : {1, 3, 5}) g[k] = d[k] = 1e9;
  for (int round = 0; round < kTimingRounds; ++round) {
    base = std::min(base, time(desk_base, 0, beam));
    memory = std::min(memory, time(desk_attn, 5, beam));
    for (std::size_t k : {1, 3, 5}) {
      g[k] = std::min(g[k], time(desk_base, k, gbs));
      d[k] = std::min(d[k], time(desk_base, k, dba));
    }
  }
  const double g_growth = g[5] / g[1], d_growth = d[5] / d[1];
  const bool pass = memory <= tol::kMemoryOverBaseline * base && g[5] >= tol::kGbsOverBaseline * base &&
                    d[5] >= (1.0 - tol::kTimingNoise) * base && d[5] < g[5] && g[3] > g[1] && g[5] > g[3] && d_growth < g_growth;
  std::string detail = "sec/sent baseline " + fmt("%.4f", base) + ", SE-Attn " + fmt("%.4f", memory) + " (" +
                       fmt("%.2fx", memory / base) + ")";
  for (std::size_t k : {1, 3, 5})
    detail += ", |c|=" + std::to_string(k) + " GBS " + fmt("%.4f", g[k]) + " DBA " + fmt("%.4f", d[k]);
  detail += ", GBS " + fmt("%.2fx", g[5] / base) + " DBA " + fmt("%.2fx", d[5] / base) + " baseline, growth 1->5 GBS " + fmt("%.2f", g_growth) + " DBA " +
            fmt("%.2f", d_growth);
  return {pass, detail};
}

// ---------------------------------------------------------------- 6
Outcome noise_trend() {
  Experiment& ex = experiment();
  bool monotone = true, below = true;
  for (int n = 2; n <= 5; ++n) monotone = monotone && ex.gbs[n] <= ex.gbs[n - 1];
  for (int n = 3; n <= 5; ++n) below = below && ex.gbs[n] < ex.baseline_bleu;
  const bool robust = ex.attn[1] > ex.baseline_bleu && ex.attn[2] > ex.baseline_bleu;
  const bool smaller_drop = ex.attn[0] - ex.attn[5] < ex.gbs[0] - ex.gbs[5];
  std::string detail = "baseline " + fmt("%.2f", ex.baseline_bleu) + "; noises 0..5 GBS";
  for (double b : ex.gbs) detail += fmt(" %.2f", b);
  detail += "; SE-Attn";
  for (double b : ex.attn) detail += fmt(" %.2f", b);
  detail += "; experiment " + fmt("%.0f", ex.seconds) + " s";
  return {monotone && below && robust && smaller_drop && ex.seconds <= tol::kExperimentSeconds, detail};
}

// ---------------------------------------------------------------- 7
Outcome perfect_gain() {
  Experiment& ex = experiment();
  const double gain = ex.perfect_bleu - ex.baseline_bleu;
  return {gain >= tol::kPerfectGain, "SE-Attn " + fmt("%.2f", ex.perfect_bleu) + " vs baseline " +
                                         fmt("%.2f", ex.baseline_bleu) + " (gain " + fmt("%+.2f", gain) + ")"};
}

// ---------------------------------------------------------------- 8
void write_corpus(const fs::path& p, const std::vector<Words>& corpus) {
  std::vector<std::string> lines;
  for (const auto& s : corpus) lines.push_back(join_words(s));
  write_lines(p, lines);
}

// Independent recount straight from the files: a constraint is noisy when the
// word is not a token of its reference line.
std::pair<long, long> recount(const fs::path& constraints, const fs::path& references) {
  std::ifstream cin_(constraints), rin(references);
  std::string cline, rline;
  long total = 0, absent = 0;
  while (std::getline(cin_, cline)) {
    if (!std::getline(rin, rline)) throw std::runtime_error("reference file too short");
    std::set<std::string> ref;
    std::istringstream rs(rline);
    for (std::string w; rs >> w;) ref.insert(w);
    std::istringstream cs(cline);
    for (std::string w; std::getline(cs, w, '\t');) {
      if (w.empty()) continue;
      ++total;
      if (!ref.count(w)) ++absent;
    }
  }
  return {total, absent};
}

double reported_rate(const fs::path& report) {
  std::ifstream in(report);
  const std::string key = "noisy_rate=";
  for (std::string line; std::getline(in, line);)
    if (line.rfind(key, 0) == 0) return std::stod(line.substr(key.size()));
  throw std::runtime_error("no noisy_rate in " + report.string());
}

Outcome automatic_noisy_rate() {
  const fs::path work = fs::current_path() / "acceptance_work" / "auto";
  fs::remove_all(work);
  fs::create_directories(work);
  SyntheticOptions so;
  so.pairs = 400;
  so.seed = 21;
  const auto tr = generate_synthetic(so);
  so.pairs = 100;
  so.seed = 22;
  const auto te = generate_synthetic(so);
  write_corpus(work / "train.src", tr.source);
  write_corpus(work / "train.tgt", tr.target);
  write_corpus(work / "test.src", te.source);
  write_corpus(work / "test.tgt", te.target);

  // degrade the table: keep its sources and probabilities, permute the targets
  const AlignmentTable clean = build_alignment_table(tr.source, tr.target);
  std::vector<std::string> targets;
  for (const auto& [src, entries] : clean.entries())
    for (const auto& e : entries) targets.push_back(e.target);
  std::mt19937_64 rng(23);
  std::shuffle(targets.begin(), targets.end(), rng);
  AlignmentTable degraded;
  std::size_t next = 0;
  for (const auto& [src, entries] : clean.entries()) {
    std::map<std::string, double> merged;
    for (const auto& e : entries) merged[targets[next++]] += e.prob;
    std::vector<AlignmentTable::Entry> out;
    for (const auto& [t, p] : merged) out.push_back({t, p});
    degraded.set(src, out);
  }
  degraded.save(work / "degraded.tsv");

  RunConfig cfg;
  cfg.set("train_src", (work / "train.src").string());
  cfg.set("train_tgt", (work / "train.tgt").string());
  cfg.set("test_src", (work / "test.src").string());
  cfg.set("test_tgt", (work / "test.tgt").string());
  cfg.set("table", (work / "degraded.tsv").string());
  cfg.set("out_dir", (work / "run").string());
  cfg.set("scenario", "auto");
  cfg.set("variant", "baseline");
  cfg.set("epochs", "1");
  std::ostringstream log;
  const auto result = run_pipeline(cfg, log);
  const double reported = reported_rate(work / "run" / "report.txt");
  const auto [total, absent] = recount(work / "run" / "constraints.test.tsv", work / "test.tgt");
  const double independent = total ? static_cast<double>(absent) / static_cast<double>(total) : 0.0;
  const bool pass = result.test_noisy_rate && total > 0 && std::abs(reported - independent) <= tol::kNoisyRate;
  return {pass, "reported " + fmt("%.4f", reported) + ", recount " + std::to_string(absent) + "/" +
                    std::to_string(total) + " = " + fmt("%.4f", independent)};
}

// ---------------------------------------------------------------- 9
Outcome bleu_oracles() {
  const std::vector<Words> refs{{"the", "cat", "sat", "on", "the", "mat"}, {"a", "b", "c", "d", "e"}};
  const double identity = bleu4(refs, refs).bleu;
  const double clip = bleu4({{"the", "the", "the", "the"}}, {{"the", "cat"}}).bleu;
  const double bp = bleu4({{"a", "b", "c", "d"}}, {{"a", "b", "c", "d", "e"}}).bleu;
  const bool pass = fmt("%.2f", identity) == "100.00" && clip == 0.0 && std::abs(bp - 77.88) <= tol::kBleuBp;
  return {pass, "identity " + fmt("%.2f", identity) + ", clipping " + fmt("%.2f", clip) + ", brevity " +
                    fmt("%.4f", bp)};
}

// ---------------------------------------------------------------- 10
Outcome determinism() {
  const fs::path work = fs::current_path() / "acceptance_work" / "det";
  fs::remove_all(work);
  fs::create_directories(work);
  SyntheticOptions so;
  so.pairs = 300;
  so.seed = 31;
  const auto tr = generate_synthetic(so);
  so.pairs = 40;
  so.seed = 32;
  const auto te = generate_synthetic(so);
  write_corpus(work / "train.src", tr.source);
  write_corpus(work / "train.tgt", tr.target);
  write_corpus(work / "test.src", te.source);
  write_corpus(work / "test.tgt", te.target);

  std::string hyps[2];
  std::string checkpoints[2];
  for (int run = 0; run < 2; ++run) {
    RunConfig cfg;
    cfg.set("train_src", (work / "train.src").string());
    cfg.set("train_tgt", (work / "train.tgt").string());
    cfg.set("test_src", (work / "test.src").string());
    cfg.set("test_tgt", (work / "test.tgt").string());
    cfg.set("out_dir", (work / ("run" + std::to_string(run))).string());
    cfg.set("scenario", "noisy");
    cfg.set("epochs", "3");
    cfg.set("finetune_epochs", "2");
    cfg.set("seed", "9");
    std::ostringstream log;
    run_pipeline(cfg, log);
    hyps[run] = read_file(work / ("run" + std::to_string(run)) / "hyp.txt");
    checkpoints[run] = read_file(work / ("run" + std::to_string(run)) / "checkpoint.ft.bin");
  }
  const bool reruns = !hyps[0].empty() && hyps[0] == hyps[1] && checkpoints[0] == checkpoints[1];

  bool round_trip = true;
  std::mt19937_64 rng(33);
  for (const auto& v : fixtures::kVariants) {
    Model m(fixtures::tiny_config(v), 40);
    fixtures::perturb(m, rng);
    save_checkpoint(m, work / "model.bin");
    Model back = load_checkpoint(work / "model.bin");
    round_trip = round_trip && back.config() == m.config() && back.params() == m.params() &&
                 serialize_checkpoint(back) == serialize_checkpoint(m);
  }

  const BpeModel bpe = learn_bpe(tr.source, 500);
  const std::vector<std::string> alphabet{"a", "b", "c", "m", "s", "1", "2", "-", "\xc3\xa9", "\xe4\xb8\xad"};
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1), len(1, 12);
  int bpe_failures = 0;
  const int words = 10000;
  for (int i = 0; i < words; ++i) {
    std::string w;
    const std::size_t l = len(rng);
    for (std::size_t j = 0; j < l; ++j) w += alphabet[pick(rng)];
    if (undo_bpe(bpe.apply_word(w)) != Words{w}) ++bpe_failures;
  }
  return {reruns && round_trip && bpe_failures == 0,
          std::string("pipeline reruns ") + (reruns ? "identical" : "DIFFER") + ", checkpoints " +
              (round_trip ? "bit-exact" : "NOT bit-exact") + ", BPE " + std::to_string(words - bpe_failures) + "/" +
              std::to_string(words) + " words round-trip"};
}

}  // namespace

// With arguments, only the listed criterion numbers run.
int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"distribution normalisation", normalisation},
      {"decoding oracle equivalence", oracle_equivalence},
      {"hard-constraint coverage", coverage_guarantee},
      {"runtime shape", runtime_shape},
      {"noise-robustness trend", noise_trend},
      {"perfect-constraint gain", perfect_gain},
      {"automatic-constraint noisy rate", automatic_noisy_rate},
      {"BLEU oracles", bleu_oracles},
      {"determinism and persistence", determinism},
  };
  std::set<std::size_t> only;
  for (int a = 1; a < argc; ++a) only.insert(static_cast<std::size_t>(std::stoul(argv[a])));
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(i + 1)) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu %s: %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %d criteria failed\n", failed, ran);
  return failed == 0 ? 0 : 1;
}
