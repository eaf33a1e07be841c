// SPDX-License-Identifier: Apache-2.0
//
// plbert: build-vocab | prepare | train | probe | export
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plbert/checkpoint.hpp"
#include "plbert/corpus.hpp"
#include "plbert/errors.hpp"
#include "plbert/kernels.hpp"
#include "plbert/lexicon.hpp"
#include "plbert/probe.hpp"
#include "plbert/record_io.hpp"
#include "plbert/text.hpp"
#include "plbert/train.hpp"
#include "plbert/vocab.hpp"

namespace fs = std::filesystem;
using namespace plbert;

namespace {

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void log_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& entries,
                const fs::path* file = nullptr) {
  std::cerr << "# plbert " << command << " isa=" << kernels::isa_name(kernels::active().isa) << '\n';
  for (const auto& [k, v] : entries) std::cerr << "# " << k << '=' << v << '\n';
  if (file != nullptr) {
    std::ofstream out(*file);
    for (const auto& [k, v] : entries) out << k << '=' << v << '\n';
    if (!out) throw DataError("cannot write '" + file->string() + "'");
  }
}

std::uint64_t resolve_seed(const CLI::Option* opt, std::uint64_t value) {
  if (opt->count() > 0) return value;
  if (const char* env = std::getenv("PLBERT_SEED")) {
    const std::string s(env);
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw UsageError("PLBERT_SEED must be a non-negative integer, got '" + s + "'");
    }
    return std::stoull(s);
  }
  return 0;
}

void check_records(std::span<const ExampleRecord> records, const ModelConfig& model) {
  for (std::size_t i = 0; i < records.size(); ++i) {
    const ExampleRecord& r = records[i];
    validate_record(r);
    if (r.length() > model.max_len) {
      throw DataError("record " + std::to_string(i) + " has " + std::to_string(r.length()) +
                      " phonemes, more than max_len " + std::to_string(model.max_len));
    }
    for (TokenId id : r.phonemes) {
      if (static_cast<std::size_t>(id) >= model.phoneme_vocab_size) {
        throw DataError("record " + std::to_string(i) + " has a phoneme id outside the vocabulary");
      }
    }
    for (const WordSpan& s : r.spans) {
      if (s.grapheme < 0 || static_cast<std::size_t>(s.grapheme) >= model.grapheme_vocab_size) {
        throw DataError("record " + std::to_string(i) + " has a grapheme id outside the vocabulary");
      }
    }
  }
}

// ---------------------------------------------------------------------------

struct BuildVocabArgs {
  fs::path lexicon, corpus, out_dir;
  std::size_t cutoff = 3;
};

int build_vocab(const BuildVocabArgs& a) {
  if (a.cutoff < 1) throw UsageError("--cutoff must be >= 1");
  log_config("build-vocab", {{"lexicon", a.lexicon.string()},
                             {"corpus", a.corpus.string()},
                             {"cutoff", std::to_string(a.cutoff)},
                             {"out_dir", a.out_dir.string()}});
  const Lexicon lexicon = load_lexicon(a.lexicon);
  const PhonemeVocab phonemes = build_phoneme_vocab(lexicon);
  WordCounter counter;
  for (const auto& line : read_lines(a.corpus)) counter.add_all(normalize(line));
  const GraphemeVocab graphemes = counter.finish(a.cutoff);
  fs::create_directories(a.out_dir);
  save_vocab(phonemes, a.out_dir / "phonemes.vocab");
  save_vocab(graphemes, a.out_dir / "graphemes.vocab");
  std::cout << "phonemes=" << phonemes.size() << " graphemes=" << graphemes.size()
            << " distinct_words=" << counter.distinct() << '\n';
  return 0;
}

struct PrepareArgs {
  fs::path corpus, lexicon, vocab_dir, out;
  std::string oov_policy = "skip_sentence";
  std::size_t max_len = kDefaultMaxLen;
  std::size_t workers = 1;
};

int prepare(const PrepareArgs& a) {
  AlignOptions options;
  options.oov_policy = parse_oov_policy(a.oov_policy);
  options.max_len = a.max_len;
  if (a.max_len == 0) throw UsageError("--max-len must be >= 1");
  if (a.workers == 0) throw UsageError("--workers must be >= 1");
  log_config("prepare", {{"corpus", a.corpus.string()},
                         {"lexicon", a.lexicon.string()},
                         {"vocab_dir", a.vocab_dir.string()},
                         {"oov_policy", std::string(oov_policy_name(options.oov_policy))},
                         {"max_len", std::to_string(a.max_len)},
                         {"workers", std::to_string(a.workers)},
                         {"out", a.out.string()}});
  const Lexicon lexicon = load_lexicon(a.lexicon);
  const PhonemeVocab phonemes = load_phoneme_vocab(a.vocab_dir / "phonemes.vocab");
  const GraphemeVocab graphemes = load_grapheme_vocab(a.vocab_dir / "graphemes.vocab");
  const auto sentences = read_lines(a.corpus);
  PrepareStats stats;
  const auto records = prepare_corpus(sentences, lexicon, phonemes, graphemes, options, a.workers, &stats);
  write_examples(records, a.out);
  char rate[32];
  std::snprintf(rate, sizeof rate, "%.6f", stats.oov_rate());
  std::cout << "sentences=" << stats.sentences << " kept=" << stats.kept << " skipped=" << stats.skipped
            << " words=" << stats.words << " oov_words=" << stats.oov_words << " oov_rate=" << rate
            << " truncated_words=" << stats.truncated_words << '\n';
  return 0;
}

struct TrainArgs {
  fs::path examples, vocab_dir, out_dir, resume;
  std::string preset = "toy";
  std::size_t layers = 0, hidden = 0, intermediate = 0, heads = 0, embed = 0, max_len = 0;
  double dropout = -1.0;
  bool tie_mlm_head = false;
  std::size_t steps = 1000, batch_size = 16, checkpoint_every = 0;
  double lr = 1e-3, weight_decay = 0.01, warmup = 0.1, clip_norm = 1.0, lambda = 1.0;
  bool no_mlm = false, no_p2g = false, score_only_msk = false;
  double select_prob = 0.15, mask_prob = 0.8, random_prob = 0.1, keep_prob = 0.1;
  std::uint64_t seed = 0;
};

int train(const TrainArgs& a, const CLI::App& cmd) {
  fs::create_directories(a.out_dir);
  TrainState state;
  TrainConfig config;

  if (!a.resume.empty()) {
    for (const char* name : {"--preset", "--layers", "--hidden", "--intermediate", "--heads", "--embed", "--max-len",
                             "--dropout", "--tie-mlm-head", "--batch-size", "--lr", "--weight-decay", "--warmup",
                             "--clip-norm", "--lambda", "--no-mlm", "--no-p2g", "--score-only-msk", "--select-prob",
                             "--mask-prob", "--random-prob", "--keep-prob", "--seed", "--vocab-dir"}) {
      if (cmd.count(name) > 0) throw UsageError(std::string(name) + " cannot be combined with --resume");
    }
    std::tie(state, config) = from_checkpoint(load_checkpoint(a.resume));
    if (cmd.count("--steps") > 0) config.optim.total_steps = a.steps;
  } else {
    if (a.vocab_dir.empty()) throw UsageError("--vocab-dir is required unless --resume is given");
    const auto vp = load_phoneme_vocab(a.vocab_dir / "phonemes.vocab").size();
    const auto vg = load_grapheme_vocab(a.vocab_dir / "graphemes.vocab").size();
    if (a.preset == "toy") {
      config.model = ModelConfig::toy(vp, vg);
    } else if (a.preset == "base") {
      config.model = ModelConfig::base(vp, vg);
    } else {
      throw UsageError("unknown preset '" + a.preset + "' (expected toy or base)");
    }
    ModelConfig& m = config.model;
    if (a.layers) m.n_layers = a.layers;
    if (a.hidden) m.hidden = a.hidden;
    if (a.intermediate) m.intermediate = a.intermediate;
    if (a.heads) m.heads = a.heads;
    if (a.embed) m.embed = a.embed;
    if (a.max_len) m.max_len = a.max_len;
    if (a.dropout >= 0.0) m.dropout = a.dropout;
    m.tie_mlm_head = a.tie_mlm_head;
    config.mask = {a.select_prob, a.mask_prob, a.random_prob, a.keep_prob};
    config.optim.lr = a.lr;
    config.optim.weight_decay = a.weight_decay;
    config.optim.warmup_fraction = a.warmup;
    config.optim.clip_norm = a.clip_norm;
    config.optim.total_steps = a.steps;
    config.objective = {!a.no_mlm, !a.no_p2g, a.lambda};
    config.score_only_msk = a.score_only_msk;
    config.batch_size = a.batch_size;
    config.seed = resolve_seed(cmd.get_option("--seed"), a.seed);
    state = init_train_state(config);
  }
  config.validate();

  auto entries = model_config_entries(config.model);
  for (auto& e : config.entries()) entries.push_back(std::move(e));
  entries.emplace_back("examples", a.examples.string());
  entries.emplace_back("out_dir", a.out_dir.string());
  entries.emplace_back("checkpoint_every", std::to_string(a.checkpoint_every));
  if (!a.resume.empty()) {
    entries.emplace_back("resume", a.resume.string());
    entries.emplace_back("resume_step", std::to_string(state.step));
  }
  const fs::path config_file = a.out_dir / "config.txt";
  log_config("train", entries, &config_file);

  const auto records = read_examples(a.examples);
  if (records.empty()) throw DataError("'" + a.examples.string() + "' contains no records");
  check_records(records, config.model);

  std::ofstream metrics(a.out_dir / "metrics.log", a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!metrics) throw DataError("cannot open metrics log in '" + a.out_dir.string() + "'");

  TrainHooks hooks;
  hooks.checkpoint_every = a.checkpoint_every;
  hooks.on_step = [&](const TrainState& s, const LossReport& r, double lr) {
    metrics << metrics_line(s.step, r, lr) << '\n';
  };
  hooks.on_checkpoint = [&](const TrainState& s) {
    metrics.flush();
    save_checkpoint(to_checkpoint(s, config), a.out_dir / ("step-" + std::to_string(s.step) + ".ckpt"));
  };
  run_training(state, records, config, hooks);
  metrics.flush();
  save_checkpoint(to_checkpoint(state, config), a.out_dir / "final.ckpt");
  std::cout << "steps=" << state.step << " checkpoint=" << (a.out_dir / "final.ckpt").string() << '\n';
  return 0;
}

struct ProbeArgs {
  fs::path checkpoint, examples, report;
  ProbeConfig probe;
  std::uint64_t seed = 0;
};

int probe(const ProbeArgs& a, const CLI::App& cmd) {
  ProbeConfig pc = a.probe;
  pc.seed = resolve_seed(cmd.get_option("--seed"), a.seed);
  pc.validate();
  log_config("probe", {{"checkpoint", a.checkpoint.string()},
                       {"examples", a.examples.string()},
                       {"eval_fraction", format_double(pc.eval_fraction)},
                       {"steps", std::to_string(pc.steps)},
                       {"batch_size", std::to_string(pc.batch_size)},
                       {"lr", format_double(pc.lr)},
                       {"seed", std::to_string(pc.seed)},
                       {"report", a.report.string()}});
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const auto records = read_examples(a.examples);
  check_records(records, ckpt.model());
  const DataSplit split = split_records(records.size(), pc.eval_fraction, pc.seed);
  const ProbeFeatures train = extract_features(ckpt.params, records, split.train);
  const ProbeFeatures eval = extract_features(ckpt.params, records, split.eval);
  const ProbeParams params = probe_train(train, ckpt.model().grapheme_vocab_size, pc);
  const ProbeReport rep = probe_eval(params, eval);

  char line[200];
  std::snprintf(line, sizeof line, "top1=%.6f top5=%.6f majority_baseline=%.6f n_eval=%zu", rep.top1, rep.top5,
                rep.majority_baseline, rep.n_eval);
  std::cout << line << '\n';
  if (!a.report.empty()) {
    nlohmann::json j = {{"top1", rep.top1},
                        {"top5", rep.top5},
                        {"majority_baseline", rep.majority_baseline},
                        {"n_eval", rep.n_eval},
                        {"n_train", train.labels.size()},
                        {"checkpoint", a.checkpoint.string()},
                        {"seed", pc.seed}};
    std::ofstream out(a.report);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write '" + a.report.string() + "'");
  }
  return 0;
}

int export_cmd(const fs::path& checkpoint, const fs::path& out) {
  log_config("export", {{"checkpoint", checkpoint.string()}, {"out", out.string()}});
  save_checkpoint(export_encoder(load_checkpoint(checkpoint)), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phoneme-level BERT pre-training toolkit"};
  app.require_subcommand(1);
  std::string isa = "auto";
  app.add_option("--isa", isa, "Kernel variant: auto, scalar, avx2, neon")->capture_default_str();

  BuildVocabArgs bv;
  auto* c_vocab = app.add_subcommand("build-vocab", "Build phoneme and grapheme vocabularies");
  c_vocab->add_option("--lexicon", bv.lexicon, "Lexicon file (word<TAB>phonemes)")->required();
  c_vocab->add_option("--corpus", bv.corpus, "Text corpus, one sentence per line")->required();
  c_vocab->add_option("--cutoff", bv.cutoff, "Minimum word frequency")->capture_default_str();
  c_vocab->add_option("--out-dir", bv.out_dir, "Output directory")->required();

  PrepareArgs pr;
  auto* c_prep = app.add_subcommand("prepare", "Align a corpus into training records");
  c_prep->add_option("--corpus", pr.corpus)->required();
  c_prep->add_option("--lexicon", pr.lexicon)->required();
  c_prep->add_option("--vocab-dir", pr.vocab_dir, "Directory written by build-vocab")->required();
  c_prep->add_option("--oov-policy", pr.oov_policy, "skip_sentence or drop_word")->capture_default_str();
  c_prep->add_option("--max-len", pr.max_len)->capture_default_str();
  c_prep->add_option("--workers", pr.workers)->capture_default_str();
  c_prep->add_option("--out", pr.out, "Example file to write")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Pre-train the encoder");
  c_train->add_option("--examples", tr.examples)->required();
  c_train->add_option("--vocab-dir", tr.vocab_dir);
  c_train->add_option("--out-dir", tr.out_dir)->required();
  c_train->add_option("--resume", tr.resume, "Continue from a full checkpoint");
  c_train->add_option("--preset", tr.preset, "toy or base")->capture_default_str();
  c_train->add_option("--layers", tr.layers);
  c_train->add_option("--hidden", tr.hidden);
  c_train->add_option("--intermediate", tr.intermediate);
  c_train->add_option("--heads", tr.heads);
  c_train->add_option("--embed", tr.embed);
  c_train->add_option("--max-len", tr.max_len);
  c_train->add_option("--dropout", tr.dropout);
  c_train->add_flag("--tie-mlm-head", tr.tie_mlm_head);
  c_train->add_option("--steps", tr.steps)->capture_default_str();
  c_train->add_option("--batch-size", tr.batch_size)->capture_default_str();
  c_train->add_option("--checkpoint-every", tr.checkpoint_every)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  c_train->add_option("--warmup", tr.warmup, "Warmup fraction of the steps")->capture_default_str();
  c_train->add_option("--clip-norm", tr.clip_norm)->capture_default_str();
  c_train->add_option("--lambda", tr.lambda, "Weight of the grapheme loss")->capture_default_str();
  c_train->add_flag("--no-mlm", tr.no_mlm, "Disable the masked-phoneme loss");
  c_train->add_flag("--no-p2g", tr.no_p2g, "Disable the grapheme loss");
  c_train->add_flag("--score-only-msk", tr.score_only_msk, "Score only positions replaced by the mask token");
  c_train->add_option("--select-prob", tr.select_prob)->capture_default_str();
  c_train->add_option("--mask-prob", tr.mask_prob)->capture_default_str();
  c_train->add_option("--random-prob", tr.random_prob)->capture_default_str();
  c_train->add_option("--keep-prob", tr.keep_prob)->capture_default_str();
  c_train->add_option("--seed", tr.seed, "Defaults to $PLBERT_SEED, then 0");

  ProbeArgs pb;
  auto* c_probe = app.add_subcommand("probe", "Fit and evaluate a linear grapheme probe");
  c_probe->add_option("--checkpoint", pb.checkpoint)->required();
  c_probe->add_option("--examples", pb.examples)->required();
  c_probe->add_option("--eval-fraction", pb.probe.eval_fraction)->capture_default_str();
  c_probe->add_option("--steps", pb.probe.steps)->capture_default_str();
  c_probe->add_option("--batch-size", pb.probe.batch_size)->capture_default_str();
  c_probe->add_option("--lr", pb.probe.lr)->capture_default_str();
  c_probe->add_option("--seed", pb.seed, "Defaults to $PLBERT_SEED, then 0");
  c_probe->add_option("--report", pb.report, "Also write the report as JSON");

  fs::path ex_ckpt, ex_out;
  auto* c_export = app.add_subcommand("export", "Write an encoder-only checkpoint");
  c_export->add_option("--checkpoint", ex_ckpt)->required();
  c_export->add_option("--out", ex_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  try {
    if (isa != "auto") kernels::select(kernels::parse_isa(isa));
    if (*c_vocab) return build_vocab(bv);
    if (*c_prep) return prepare(pr);
    if (*c_train) return train(tr, *c_train);
    if (*c_probe) return probe(pb, *c_probe);
    if (*c_export) return export_cmd(ex_ckpt, ex_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
