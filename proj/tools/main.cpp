// cmnt: command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.

#include "cmnt/checkpoint.hpp"
#include "cmnt/constraints_gen.hpp"
#include "cmnt/dataset.hpp"
#include "cmnt/error.hpp"
#include "cmnt/eval.hpp"
#include "cmnt/pipeline.hpp"
#include "cmnt/run_config.hpp"
#include "cmnt/synthetic.hpp"
#include "cmnt/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace cmnt;

namespace {

constexpr int kUsage = 1, kData = 2, kRuntime = 3;

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& ch : f)
    if (ch == '_') ch = '-';
  return "--" + f;
}

// RunConfig keys exposed as flags; values given on the command line override
// the config file.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* app, const std::vector<std::string>& only = {}) {
    app->add_option("--config", file, "key=value config file");
    for (const auto& k : RunConfig::keys()) {
      if (!only.empty() && std::find(only.begin(), only.end(), k.name) == only.end()) continue;
      app->add_option(flag_name(k.name), values[k.name], k.help.empty() ? "default " + k.default_value : k.help);
    }
  }

  RunConfig resolve(CLI::App* app) const {
    RunConfig c;
    if (!file.empty()) c.merge_file(file);
    for (const auto& [k, v] : values)
      if (app->count(flag_name(k))) c.set(k, v);
    c.validate();
    return c;
  }
};

const std::vector<std::string> kModelKeys = {"encoder_layers", "decoder_layers", "model_dim", "heads",
                                              "ff_dim",         "dropout",        "max_length", "epochs",
                                              "finetune_epochs", "batch_size",    "learning_rate", "seed"};

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

std::vector<Example> load_examples(const std::string& src, const std::string& tgt, const std::string& constraints,
                                   const TextModels& text) {
  std::optional<fs::path> c;
  if (!constraints.empty()) c = constraints;
  return assemble_dataset(src, tgt, c, text.src(), text.tgt());
}

TrainOptions train_options(const RunConfig& c, int epochs) {
  TrainOptions o;
  o.epochs = epochs;
  o.batch_size = static_cast<int>(c.integer("batch_size"));
  o.learning_rate = c.real("learning_rate");
  o.seed = static_cast<std::uint64_t>(c.integer("seed"));
  o.on_epoch = [](int e, double loss) { std::cerr << "epoch " << e + 1 << " loss " << loss << "\n"; };
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"soft-constraint neural machine translation"};
  app.require_subcommand(1);
  std::uint64_t seed = 1;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic parallel corpus");
  SyntheticOptions so;
  std::string synth_src, synth_tgt;
  synth->add_option("--pairs", so.pairs)->capture_default_str();
  synth->add_option("--variants", so.variants)->capture_default_str();
  synth->add_option("--cue-probability", so.cue_probability)->capture_default_str();
  synth->add_option("--src", synth_src)->required();
  synth->add_option("--tgt", synth_tgt)->required();
  synth->add_option("--seed", seed)->capture_default_str();

  // bpe
  auto* bpe = app.add_subcommand("bpe", "learn BPE models and vocabularies for both sides");
  std::string bpe_src, bpe_tgt, text_out;
  int src_merges = 2000, tgt_merges = 2000, src_vocab = 4000, tgt_vocab = 4000;
  bpe->add_option("--src", bpe_src)->required()->check(CLI::ExistingFile);
  bpe->add_option("--tgt", bpe_tgt)->required()->check(CLI::ExistingFile);
  bpe->add_option("--src-merges", src_merges)->capture_default_str();
  bpe->add_option("--tgt-merges", tgt_merges)->capture_default_str();
  bpe->add_option("--src-vocab", src_vocab)->capture_default_str();
  bpe->add_option("--tgt-vocab", tgt_vocab)->capture_default_str();
  bpe->add_option("--out-dir", text_out)->required();
  bpe->add_option("--seed", seed, "accepted for uniformity; learning is deterministic");

  // build-table
  auto* table_cmd = app.add_subcommand("build-table", "IBM model 1 word translation table");
  std::string tab_src, tab_tgt, tab_out;
  AlignmentOptions aopt;
  table_cmd->add_option("--src", tab_src)->required()->check(CLI::ExistingFile);
  table_cmd->add_option("--tgt", tab_tgt)->required()->check(CLI::ExistingFile);
  table_cmd->add_option("--output", tab_out)->required();
  table_cmd->add_option("--iterations", aopt.iterations)->capture_default_str();
  table_cmd->add_option("--prune", aopt.prune_threshold)->capture_default_str();
  table_cmd->add_option("--seed", seed, "accepted for uniformity; EM is deterministic");

  // gen-constraints
  auto* gen = app.add_subcommand("gen-constraints", "perfect (1), noisy (2) or automatic (3) constraints");
  int scenario = 1, k = 5, noise_count = -1;
  double noise_p = 0.6;
  std::string gen_ref, gen_src, gen_table, gen_freq_tgt, gen_freq_src, gen_out, gen_noise_out;
  gen->add_option("--scenario", scenario)->required()->check(CLI::Range(1, 3));
  gen->add_option("--reference", gen_ref, "word-level references (scenarios 1, 2)");
  gen->add_option("--source", gen_src, "word-level sources (scenario 3)");
  gen->add_option("--table", gen_table, "translation table (scenarios 2, 3)");
  gen->add_option("--train-tgt", gen_freq_tgt, "target corpus for rarity (default: the references)");
  gen->add_option("--train-src", gen_freq_src, "source corpus for rarity (default: the sources)");
  gen->add_option("--k", k)->capture_default_str();
  gen->add_option("--noise-p", noise_p)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  gen->add_option("--noise-count", noise_count, "exact noises per sentence; overrides --noise-p");
  gen->add_option("--output", gen_out)->required();
  gen->add_option("--noise-output", gen_noise_out, "noise positions file (scenario 2)");
  gen->add_option("--seed", seed)->capture_default_str();

  // train / finetune
  auto* train_cmd = app.add_subcommand("train", "train a baseline model");
  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a constraint-aware variant from a baseline");
  std::string tr_src, tr_tgt, tr_text, tr_out, tr_constraints, ft_base, ft_variant = "SE-Attn";
  ConfigFlags train_flags, ft_flags;
  for (auto* cmd : {train_cmd, ft_cmd}) {
    cmd->add_option("--src", tr_src)->required()->check(CLI::ExistingFile);
    cmd->add_option("--tgt", tr_tgt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--text-dir", tr_text, "directory written by `cmnt bpe`")->required();
    cmd->add_option("--output", tr_out)->required();
  }
  train_flags.attach(train_cmd, kModelKeys);
  ft_cmd->add_option("--baseline", ft_base)->required()->check(CLI::ExistingFile);
  ft_cmd->add_option("--variant", ft_variant)->capture_default_str();
  ft_cmd->add_option("--constraints", tr_constraints, "training constraints")->required();
  ft_flags.attach(ft_cmd, kModelKeys);

  // translate
  auto* tr = app.add_subcommand("translate", "decode a source file");
  std::string tl_ckpt, tl_text, tl_in, tl_constraints, tl_out, tl_meta, tl_decoder = "beam";
  DecodeOptions dopt;
  tr->add_option("--checkpoint", tl_ckpt)->required()->check(CLI::ExistingFile);
  tr->add_option("--text-dir", tl_text)->required();
  tr->add_option("--input", tl_in)->required()->check(CLI::ExistingFile);
  tr->add_option("--constraints", tl_constraints);
  tr->add_option("--decoder", tl_decoder)->capture_default_str()->check(CLI::IsMember({"beam", "gbs", "dba"}));
  tr->add_option("--beam", dopt.beam)->capture_default_str();
  tr->add_option("--max-len", dopt.max_len, "0 = 2|x| + 10 capped by max_length")->capture_default_str();
  tr->add_option("--output", tl_out)->required();
  tr->add_option("--meta", tl_meta, "sidecar: log_prob, coverage flags, microseconds, flagged");
  tr->add_option("--seed", seed, "accepted for uniformity; decoding is deterministic");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "case-sensitive corpus BLEU-4");
  std::string ev_hyp, ev_ref, ev_meta, ev_out;
  ev->add_option("--hyp", ev_hyp)->required()->check(CLI::ExistingFile);
  ev->add_option("--ref", ev_ref)->required()->check(CLI::ExistingFile);
  ev->add_option("--meta", ev_meta, "translate sidecar; adds sec_per_sentence");
  ev->add_option("--output", ev_out, "also write the report here");
  ev->add_option("--seed", seed, "accepted for uniformity");

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "run the full experiment loop");
  ConfigFlags pipe_flags;
  pipe_flags.attach(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*synth) {
      so.seed = seed;
      const auto c = generate_synthetic(so);
      std::vector<std::string> s, t;
      for (const auto& w : c.source) s.push_back(join_words(w));
      for (const auto& w : c.target) t.push_back(join_words(w));
      write_lines(synth_src, s);
      write_lines(synth_tgt, t);
    } else if (*bpe) {
      learn_text_models(read_corpus(bpe_src), read_corpus(bpe_tgt), src_merges, tgt_merges, src_vocab, tgt_vocab)
          .save(text_out);
    } else if (*table_cmd) {
      build_alignment_table(read_corpus(tab_src), read_corpus(tab_tgt), aopt).save(tab_out);
    } else if (*gen) {
      const auto sc = static_cast<Scenario>(scenario);
      std::vector<Words> sources, refs;
      AlignmentTable table;
      if (sc == Scenario::automatic) {
        if (gen_src.empty() || gen_table.empty()) throw UsageError("scenario 3 needs --source and --table");
        sources = read_corpus(gen_src);
      } else {
        if (gen_ref.empty()) throw UsageError("scenarios 1 and 2 need --reference");
        refs = read_corpus(gen_ref);
      }
      if (sc == Scenario::noisy && gen_table.empty()) throw UsageError("scenario 2 needs --table");
      if (!gen_table.empty()) table = AlignmentTable::load(gen_table);
      const FrequencyTable tgt_freq(gen_freq_tgt.empty() ? refs : read_corpus(gen_freq_tgt));
      const FrequencyTable src_freq(gen_freq_src.empty() ? sources : read_corpus(gen_freq_src));
      ConstraintOptions o;
      o.k = k;
      o.noise_p = noise_p;
      o.noise_count = noise_count;
      o.seed = seed;
      const auto out = generate_constraints(sc, sources, refs, src_freq, tgt_freq, table, o);
      write_constraints(gen_out, out.constraints);
      if (!gen_noise_out.empty()) write_noise_positions(gen_noise_out, out.noise_positions);
    } else if (*train_cmd) {
      const RunConfig c = train_flags.resolve(train_cmd);
      const TextModels text = TextModels::load(tr_text);
      Model m(model_config_from(c, text.src_vocab.size(), text.tgt_vocab.size()),
              static_cast<std::uint64_t>(c.integer("seed")));
      train(m, load_examples(tr_src, tr_tgt, "", text), train_options(c, static_cast<int>(c.integer("epochs"))));
      save_checkpoint(m, tr_out);
    } else if (*ft_cmd) {
      const RunConfig c = ft_flags.resolve(ft_cmd);
      const TextModels text = TextModels::load(tr_text);
      const Model base = load_checkpoint(ft_base);
      ModelConfig vc = base.config();
      apply_variant(vc, ft_variant);
      if (!vc.uses_memory()) throw UsageError("finetune needs a constraint-aware --variant");
      Model m = init_from_baseline(vc, base, static_cast<std::uint64_t>(c.integer("seed")) + 1);
      train(m, load_examples(tr_src, tr_tgt, tr_constraints, text),
            train_options(c, static_cast<int>(c.integer("finetune_epochs"))));
      save_checkpoint(m, tr_out);
    } else if (*tr) {
      const Model m = load_checkpoint(tl_ckpt);
      const TextModels text = TextModels::load(tl_text);
      const auto sources = read_corpus(tl_in);
      std::vector<Words> cons(sources.size());
      if (!tl_constraints.empty()) {
        cons = read_constraints(tl_constraints);
        if (cons.size() != sources.size()) {
          throw DataError("constraints: " + std::to_string(cons.size()) + " lines but " +
                          std::to_string(sources.size()) + " source lines");
        }
      }
      dopt.mode = parse_decoder(tl_decoder);
      std::vector<std::string> hyp, meta;
      for (std::size_t i = 0; i < sources.size(); ++i) {
        const Translation t = translate(m, text, sources[i], cons[i], dopt);
        hyp.push_back(join_words(t.words));
        meta.push_back(translation_metadata(t));
      }
      write_lines(tl_out, hyp);
      if (!tl_meta.empty()) write_lines(tl_meta, meta);
    } else if (*ev) {
      const auto report = bleu4(read_corpus(ev_hyp), read_corpus(ev_ref));
      std::optional<double> sec;
      if (!ev_meta.empty()) sec = mean_seconds_from_metadata(ev_meta);
      const std::string text = format_report(report, sec);
      std::cout << text;
      if (!ev_out.empty()) write_file(ev_out, text);
    } else if (*pipe) {
      run_pipeline(pipe_flags.resolve(pipe), std::cerr);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return 0;
}
