#include "cmnt/pipeline.hpp"

#include "cmnt/checkpoint.hpp"
#include "cmnt/error.hpp"
#include "cmnt/hash.hpp"
#include "cmnt/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ostream>
#include <random>

namespace cmnt {

namespace fs = std::filesystem;

void TextModels::save(const fs::path& dir) const {
  fs::create_directories(dir);
  src_bpe.save(dir / "bpe.src");
  tgt_bpe.save(dir / "bpe.tgt");
  src_vocab.save(dir / "vocab.src");
  tgt_vocab.save(dir / "vocab.tgt");
}

TextModels TextModels::load(const fs::path& dir) {
  return {BpeModel::load(dir / "bpe.src"), BpeModel::load(dir / "bpe.tgt"), Vocabulary::load(dir / "vocab.src"),
          Vocabulary::load(dir / "vocab.tgt")};
}

TextModels learn_text_models(const std::vector<Words>& source, const std::vector<Words>& target, int src_merges,
                             int tgt_merges, int src_vocab_size, int tgt_vocab_size) {
  TextModels t{learn_bpe(source, src_merges), learn_bpe(target, tgt_merges), {}, {}};
  std::vector<Words> s, r;
  for (const auto& w : source) s.push_back(t.src_bpe.apply(w));
  for (const auto& w : target) r.push_back(t.tgt_bpe.apply(w));
  t.src_vocab = build_vocab(s, src_vocab_size);
  t.tgt_vocab = build_vocab(r, tgt_vocab_size);
  return t;
}

Scenario parse_scenario(std::string_view s) {
  if (s == "perfect" || s == "1") return Scenario::perfect;
  if (s == "noisy" || s == "2") return Scenario::noisy;
  if (s == "auto" || s == "3") return Scenario::automatic;
  throw UsageError("unknown scenario '" + std::string(s) + "'");
}

DecoderMode parse_decoder(std::string_view s) {
  if (s == "beam") return DecoderMode::beam;
  if (s == "gbs") return DecoderMode::gbs;
  if (s == "dba") return DecoderMode::dba;
  throw UsageError("unknown decoder '" + std::string(s) + "'");
}

GeneratedConstraints generate_constraints(Scenario scenario, const std::vector<Words>& sources,
                                          const std::vector<Words>& references, const FrequencyTable& source_freq,
                                          const FrequencyTable& target_freq, const AlignmentTable& table,
                                          const ConstraintOptions& options) {
  GeneratedConstraints out;
  if (scenario == Scenario::automatic) {
    for (const auto& x : sources) out.constraints.push_back(auto_constraints(x, source_freq, table, options.k));
    out.noise_positions.resize(out.constraints.size());
    return out;
  }
  std::mt19937_64 rng(options.seed);
  const auto vocabulary = target_freq.words();
  for (const auto& r : references) {
    Words c = extract_perfect_constraints(r, target_freq, options.k);
    if (scenario == Scenario::perfect) {
      out.constraints.push_back(std::move(c));
      out.noise_positions.emplace_back();
      continue;
    }
    NoisyConstraints n =
        options.noise_count >= 0
            ? fixed_noise_count(c, r, table, vocabulary, std::min<int>(options.noise_count, static_cast<int>(c.size())),
                                rng, c.size())
            : inject_noise(c, r, table, vocabulary, options.noise_p, rng);
    out.constraints.push_back(std::move(n.words));
    out.noise_positions.push_back(std::move(n.noise_positions));
  }
  return out;
}

Translation translate(const Model& model, const TextModels& text, const Words& source, const Words& constraints,
                      const DecodeOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const std::vector<int> x = encode_sentence(source, text.src());
  if (x.empty()) throw DataError("translate: empty source sentence");
  const ConstraintSet c = encode_constraints(constraints, text.tgt());
  const int limit = model.config().max_length;
  int max_len = options.max_len;
  if (max_len <= 0) {
    const int forced = options.mode == DecoderMode::beam || c.empty() ? 0 : static_cast<int>(c.total_tokens()) + 1;
    max_len = std::min(2 * static_cast<int>(x.size()) + 10, limit - forced);
    if (max_len < 1) throw DataError("translate: constraints leave no room under max_length");
  }
  DecodeSession session(model, x, c);
  Translation t;
  switch (options.mode) {
    case DecoderMode::beam: t.hypothesis = beam_search(session, options.beam, max_len); break;
    case DecoderMode::gbs: t.hypothesis = grid_beam_search(session, options.beam, max_len); break;
    case DecoderMode::dba: t.hypothesis = dba_search(session, options.beam, max_len); break;
  }
  t.words = decode_sentence(t.hypothesis.tokens, text.tgt_vocab);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

std::string translation_metadata(const Translation& t) {
  char lp[64];
  std::snprintf(lp, sizeof lp, "%.6f", t.hypothesis.log_prob);
  std::string cov;
  for (bool b : t.hypothesis.coverage) cov += b ? '1' : '0';
  if (cov.empty()) cov = "-";
  return std::string(lp) + "\t" + cov + "\t" + std::to_string(static_cast<long long>(t.seconds * 1e6)) + "\t" +
         (t.hypothesis.flagged ? "1" : "0");
}

double mean_seconds_from_metadata(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw DataError(path.string() + ": no metadata lines");
  double total = 0.0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const Words f = split_tabs(lines[i]);
    long long micros = 0;
    if (f.size() != 4 ||
        std::from_chars(f[2].data(), f[2].data() + f[2].size(), micros).ec != std::errc()) {
      throw DataError(path.string() + ":" + std::to_string(i + 1) + ": malformed metadata line");
    }
    total += static_cast<double>(micros) * 1e-6;
  }
  return total / static_cast<double>(lines.size());
}

ModelConfig model_config_from(const RunConfig& config, int source_vocab, int target_vocab) {
  ModelConfig m;
  m.encoder_layers = static_cast<int>(config.integer("encoder_layers"));
  m.decoder_layers = static_cast<int>(config.integer("decoder_layers"));
  m.model_dim = static_cast<int>(config.integer("model_dim"));
  m.heads = static_cast<int>(config.integer("heads"));
  m.ff_dim = static_cast<int>(config.integer("ff_dim"));
  m.dropout = config.real("dropout");
  m.max_length = static_cast<int>(config.integer("max_length"));
  m.source_vocab = source_vocab;
  m.target_vocab = target_vocab;
  try {
    m.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  return m;
}

namespace {

// Independent streams from the one configured seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<Words> require_corpus(const RunConfig& config, const std::string& key) {
  if (!config.has_value(key)) throw UsageError("config key '" + key + "' is required");
  return read_corpus(config.str(key));
}

void check_parallel(const std::vector<Words>& a, const std::vector<Words>& b, const std::string& what) {
  if (a.size() != b.size()) {
    throw DataError(what + ": " + std::to_string(a.size()) + " source lines but " + std::to_string(b.size()) +
                    " target lines");
  }
}

// Drops pairs the model can't hold.
std::vector<Example> fit_length(std::vector<Example> data, int max_length, std::ostream& log) {
  const auto before = data.size();
  std::erase_if(data, [&](const Example& e) {
    return e.source.empty() || static_cast<int>(e.source.size()) > max_length ||
           static_cast<int>(e.target.size()) > max_length;
  });
  if (data.size() != before) log << "dropped " << before - data.size() << " training pairs longer than max_length\n";
  return data;
}

Model train_logged(Model model, const std::vector<Example>& data, const RunConfig& config, int epochs,
                   std::uint64_t seed, std::ostream& log) {
  TrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = static_cast<int>(config.integer("batch_size"));
  opt.learning_rate = config.real("learning_rate");
  opt.seed = seed;
  opt.on_epoch = [&](int e, double loss) {
    char line[96];
    std::snprintf(line, sizeof line, "  %s epoch %d loss %.4f\n", model.config().variant_name().c_str(), e + 1, loss);
    log << line << std::flush;
  };
  train(model, data, opt);
  return model;
}

std::string format_rate(const NoisyRate& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "noisy rate of test constraints: %.2f%% (%zu of %zu absent from references)\n",
                100.0 * r.rate(), r.absent, r.constraints);
  return buf;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config, std::ostream& log) {
  config.validate();
  const fs::path out = config.str("out_dir");
  fs::create_directories(out);
  write_file(out / "config.txt", config.resolved_text());
  const std::uint64_t seed = static_cast<std::uint64_t>(config.integer("seed"));
  const Scenario scenario = parse_scenario(config.str("scenario"));
  ModelConfig variant;
  apply_variant(variant, config.str("variant"));

  // inputs
  const auto train_src = require_corpus(config, "train_src");
  const auto train_tgt = require_corpus(config, "train_tgt");
  check_parallel(train_src, train_tgt, "training corpus");
  const auto test_src = require_corpus(config, "test_src");
  std::optional<std::vector<Words>> test_ref;
  if (config.has_value("test_tgt")) {
    test_ref = read_corpus(config.str("test_tgt"));
    check_parallel(test_src, *test_ref, "test corpus");
  }

  log << "learning BPE and vocabularies\n";
  const TextModels text = learn_text_models(
      train_src, train_tgt, static_cast<int>(config.integer("src_merges")), static_cast<int>(config.integer("tgt_merges")),
      static_cast<int>(config.integer("src_vocab")), static_cast<int>(config.integer("tgt_vocab")));
  text.save(out);

  AlignmentTable table;
  if (config.has_value("table")) {
    log << "loading translation table\n";
    table = AlignmentTable::load(config.str("table"));
  } else {
    log << "building translation table\n";
    AlignmentOptions align;
    align.iterations = static_cast<int>(config.integer("align_iterations"));
    align.prune_threshold = config.real("prune_threshold");
    table = build_alignment_table(train_src, train_tgt, align);
  }
  table.save(out / "table.tsv");
  const FrequencyTable src_freq(train_src), tgt_freq(train_tgt);

  ConstraintOptions copt;
  copt.k = static_cast<int>(config.integer("k"));
  copt.noise_p = config.real("train_noise_p");
  copt.seed = derive_seed(seed, 1);
  const auto train_c = generate_constraints(scenario, train_src, train_tgt, src_freq, tgt_freq, table, copt);
  write_constraints(out / "constraints.train.tsv", train_c.constraints);
  if (scenario == Scenario::noisy) write_noise_positions(out / "constraints.train.noise", train_c.noise_positions);

  // training
  const ModelConfig base_cfg = model_config_from(config, text.src_vocab.size(), text.tgt_vocab.size());
  const auto base_data = fit_length(assemble_dataset(train_src, train_tgt, {}, text.src(), text.tgt()),
                                    base_cfg.max_length, log);
  log << "training baseline\n";
  Model base = train_logged(Model(base_cfg, derive_seed(seed, 2)), base_data, config,
                            static_cast<int>(config.integer("epochs")), derive_seed(seed, 3), log);
  save_checkpoint(base, out / "checkpoint.base.bin");

  std::optional<Model> tuned;
  if (variant.uses_memory()) {
    ModelConfig vcfg = base_cfg;
    vcfg.integrator = variant.integrator;
    vcfg.encoder = variant.encoder;
    const auto data = fit_length(assemble_dataset(train_src, train_tgt, train_c.constraints, text.src(), text.tgt()),
                                 base_cfg.max_length, log);
    log << "fine-tuning " << vcfg.variant_name() << "\n";
    tuned = train_logged(init_from_baseline(vcfg, base, derive_seed(seed, 4)), data, config,
                         static_cast<int>(config.integer("finetune_epochs")), derive_seed(seed, 5), log);
    save_checkpoint(*tuned, out / "checkpoint.ft.bin");
  }
  const Model& model = tuned ? *tuned : base;

  // test constraints: provided by the user, or generated
  GeneratedConstraints test_c;
  if (config.has_value("test_constraints")) {
    test_c.constraints = read_constraints(config.str("test_constraints"));
    if (test_c.constraints.size() != test_src.size()) {
      throw DataError("test constraints: " + std::to_string(test_c.constraints.size()) + " lines but " +
                      std::to_string(test_src.size()) + " test sentences");
    }
  } else {
    if (scenario != Scenario::automatic && !test_ref) {
      throw UsageError("scenario " + config.str("scenario") + " needs test_tgt or test_constraints");
    }
    ConstraintOptions t = copt;
    t.noise_p = config.real("test_noise_p");
    t.noise_count = static_cast<int>(config.integer("test_noise_count"));
    t.seed = derive_seed(seed, 6);
    test_c = generate_constraints(scenario, test_src, test_ref ? *test_ref : std::vector<Words>{}, src_freq, tgt_freq,
                                  table, t);
    if (scenario == Scenario::noisy) write_noise_positions(out / "constraints.test.noise", test_c.noise_positions);
  }
  write_constraints(out / "constraints.test.tsv", test_c.constraints);

  log << "translating " << test_src.size() << " sentences\n";
  DecodeOptions dopt;
  dopt.mode = parse_decoder(config.str("decoder"));
  dopt.beam = static_cast<int>(config.integer("beam"));
  dopt.max_len = static_cast<int>(config.integer("max_len"));
  std::vector<Words> hyps;
  std::vector<std::string> hyp_lines, meta_lines;
  double seconds = 0.0;
  for (std::size_t i = 0; i < test_src.size(); ++i) {
    const Translation t = translate(model, text, test_src[i], test_c.constraints[i], dopt);
    seconds += t.seconds;
    hyp_lines.push_back(join_words(t.words));
    meta_lines.push_back(translation_metadata(t));
    hyps.push_back(t.words);
  }
  write_lines(out / "hyp.txt", hyp_lines);
  write_lines(out / "hyp.meta.tsv", meta_lines);

  PipelineResult result;
  result.sec_per_sentence = test_src.empty() ? 0.0 : seconds / static_cast<double>(test_src.size());
  std::string report = "system: " + model.config().variant_name() + ", decoder " + config.str("decoder") +
                       ", scenario " + config.str("scenario") + "\n";
  if (test_ref) {
    result.bleu = bleu4(hyps, *test_ref);
    result.test_noisy_rate = noisy_rate(test_c.constraints, *test_ref);
    report += format_report(*result.bleu, result.sec_per_sentence);
    report += format_rate(*result.test_noisy_rate);
    char rate[64];
    std::snprintf(rate, sizeof rate, "noisy_rate=%.6f\n", result.test_noisy_rate->rate());
    report += rate;
  } else {
    char line[64];
    std::snprintf(line, sizeof line, "sec_per_sentence=%.6f\n", result.sec_per_sentence);
    report += line;
  }
  write_file(out / "report.txt", report);
  log << report;

  std::string manifest = "config_sha256 " + sha256_hex(config.resolved_text()) + "\nseed " + std::to_string(seed) + "\n";
  for (const char* name : {"checkpoint.base.bin", "checkpoint.ft.bin", "table.tsv", "constraints.train.tsv",
                           "constraints.test.tsv", "hyp.txt"}) {
    if (fs::exists(out / name)) manifest += std::string("sha256 ") + name + " " + sha256_file(out / name) + "\n";
  }
  write_file(out / "manifest.txt", manifest);
  return result;
}

}  // namespace cmnt
