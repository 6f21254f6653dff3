// genderlab: corpus preparation, training, agreement evaluation and few-shot
// gender learning experiments from one binary.

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "genderlab/agreement.hpp"
#include "genderlab/analysis.hpp"
#include "genderlab/checkpoint.hpp"
#include "genderlab/corpus.hpp"
#include "genderlab/error.hpp"
#include "genderlab/grammar.hpp"
#include "genderlab/hash.hpp"
#include "genderlab/model.hpp"
#include "genderlab/trainer.hpp"
#include "genderlab/wordlab.hpp"

namespace fs = std::filesystem;
using namespace genderlab;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct Global {
  std::uint64_t seed = 1;
  std::string out = "runs";
  bool quiet = false;
};

struct RunDir {
  fs::path dir;
  json manifest;
  std::vector<fs::path> outputs;
};

void log(const Global& g, const std::string& msg) {
  if (!g.quiet) fmt::print(stderr, "{}\n", msg);
}

std::string file_hash(const fs::path& p) { return sha256_hex(read_text_file(p)); }

void lock_options(const CLI::App& app, std::string& out) {
  for (const CLI::Option* opt : app.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help" || name == "config" || name == "help-all") continue;
    std::string value;
    if (opt->count() > 0 || !opt->results().empty()) {
      const auto& r = opt->results();
      if (r.size() == 1) {
        value = r.front();
      } else {
        value = "[";
        for (std::size_t i = 0; i < r.size(); ++i) value += (i ? "," : "") + r[i];
        value += "]";
      }
    } else {
      value = opt->get_default_str();
      // An empty list default is left out; reading the lock back restores it.
      if (value == "{}" || value == "[]") continue;
    }
    if (opt->get_expected_max() == 0) value = value == "true" ? "true" : "false";
    if (value.empty() || value.front() != '[') value = "\"" + value + "\"";
    out += fmt::format("{}={}\n", name, value);
  }
}

// Global options followed by the active subcommand's section, in the INI
// form --config reads back.
std::string config_lock(const CLI::App& app, const CLI::App& sub) {
  std::string out;
  lock_options(app, out);
  out += fmt::format("\n[{}]\n", sub.get_name());
  lock_options(sub, out);
  return out;
}

// The run directory name is derived from the resolved config, so the same
// config always lands in the same place.
RunDir open_run(const CLI::App& app, const CLI::App& sub, const Global& g) {
  std::string lock = config_lock(app, sub);
  const std::string stamp = sha256_hex(lock).substr(0, 12);
  RunDir run;
  run.dir = fs::path(g.out) / fmt::format("{}-{}", sub.get_name(), stamp);
  std::error_code ec;
  fs::create_directories(run.dir, ec);
  if (ec) throw IoError("cannot create run directory " + run.dir.string() + ": " + ec.message());
  write_text_file(run.dir / "config.lock", lock);
  run.manifest["subcommand"] = sub.get_name();
  run.manifest["seed"] = g.seed;
  run.manifest["config_sha256"] = sha256_hex(lock);
  run.manifest["inputs"] = json::object();
  return run;
}

void note_input(RunDir& run, const std::string& name, const fs::path& p) {
  run.manifest["inputs"][name] = {{"path", p.string()}, {"sha256", file_hash(p)}};
}

void write_output(RunDir& run, const std::string& name, std::string_view text) {
  write_text_file(run.dir / name, text);
  run.outputs.push_back(run.dir / name);
}

void close_run(RunDir& run, const Global& g) {
  json outs = json::object();
  for (const auto& p : run.outputs) outs[p.filename().string()] = file_hash(p);
  run.manifest["outputs"] = outs;
  write_text_file(run.dir / "manifest.json", run.manifest.dump(2) + "\n");
  log(g, "wrote " + run.dir.string());
  std::cout << run.dir.string() << "\n";
}

std::vector<std::uint64_t> read_counts(const fs::path& p, std::size_t vocab_size) {
  std::vector<std::uint64_t> counts;
  std::istringstream in(read_text_file(p));
  std::uint64_t c;
  while (in >> c) counts.push_back(c);
  if (counts.size() != vocab_size) {
    throw InputError(fmt::format("{}: {} counts for a vocabulary of {}", p.string(), counts.size(), vocab_size));
  }
  return counts;
}

struct DataDir {
  Vocabulary vocab;
  std::vector<std::uint64_t> counts;
};

DataDir load_data_dir(const fs::path& dir) {
  DataDir d;
  d.vocab = load_vocabulary(dir / "vocab.txt");
  d.counts = read_counts(dir / "counts.txt", d.vocab.size());
  d.vocab.attach_frequencies(d.counts);
  return d;
}

std::vector<Condition> parse_conditions(const std::string& text) {
  std::vector<Condition> out;
  for (char c : text) {
    if (c == ',' || c == ' ') continue;
    const Condition cond = parse_condition(std::string(1, c));
    if (std::find(out.begin(), out.end(), cond) == out.end()) out.push_back(cond);
  }
  if (out.empty()) throw ConfigError("conditions: at least one of A, B, C, D is required");
  return out;
}

// ---- synth-corpus -------------------------------------------------------

struct SynthOpts {
  std::string grammar;
  std::size_t sentences = 67000;
  double ratio = -1.0;
};

void run_synth(const CLI::App& app, const CLI::App& sub, const Global& g, const SynthOpts& o) {
  GrammarSpec spec = load_grammar(o.grammar);
  if (o.ratio >= 0.0) {
    if (o.ratio > 1.0) throw ConfigError("synth-corpus.masculine_ratio: must lie in [0, 1]");
    spec.masculine_ratio = o.ratio;
  }
  RunDir run = open_run(app, sub, g);
  note_input(run, "grammar", o.grammar);
  log(g, fmt::format("generating {} sentences (masculine ratio {})", o.sentences, spec.masculine_ratio));
  write_output(run, "corpus.txt", generate_synthetic_corpus(spec, o.sentences, g.seed));
  write_output(run, "grammar.resolved", format_grammar(spec));
  close_run(run, g);
}

// ---- corpus-prep --------------------------------------------------------

struct PrepOpts {
  std::string input;
  std::size_t max_vocab = 50000;
  double max_unknown = 0.05;
};

void run_prep(const CLI::App& app, const CLI::App& sub, const Global& g, const PrepOpts& o) {
  RunDir run = open_run(app, sub, g);
  note_input(run, "input", o.input);
  const auto sentences = tokenize(read_text_file(o.input));
  const Vocabulary vocab = Vocabulary::build(sentences, o.max_vocab);
  const TokenizedCorpus corpus = apply_unknowns_and_filter(sentences, vocab, o.max_unknown);
  const CorpusSplit split = split_corpus(corpus, g.seed);
  const auto counts = count_tokens(split.train, vocab.size());
  save_vocabulary(vocab, run.dir / "vocab.txt");
  save_corpus(split.train, run.dir / "train.ids");
  save_corpus(split.valid, run.dir / "valid.ids");
  save_corpus(split.test, run.dir / "test.ids");
  for (const char* f : {"vocab.txt", "train.ids", "valid.ids", "test.ids"}) run.outputs.push_back(run.dir / f);
  std::string c;
  for (auto v : counts) c += std::to_string(v) + "\n";
  write_output(run, "counts.txt", c);
  json stats{{"sentences_in", sentences.size()},
             {"sentences_kept", corpus.sentences.size()},
             {"vocab_size", vocab.size()},
             {"tokens", corpus.token_count()},
             {"train_sentences", split.train.sentences.size()},
             {"valid_sentences", split.valid.sentences.size()},
             {"test_sentences", split.test.sentences.size()},
             {"least_frequent", vocab.token(vocab.least_frequent())}};
  write_output(run, "stats.json", stats.dump(2) + "\n");
  log(g, fmt::format("V={} kept {}/{} sentences", vocab.size(), corpus.sentences.size(), sentences.size()));
  close_run(run, g);
}

// ---- train --------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::string arch = "lstm";
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int seq_len = 32;
  double dropout = 0.1;
  int epochs = 10;
  int warmup = 1;
  double max_lr = 2.0;
  double momentum = 0.9;
  int batch_size = 32;
  double grad_clip = 0.25;
};

void run_train(const CLI::App& app, const CLI::App& sub, const Global& g, const TrainOpts& o) {
  ModelConfig cfg;
  cfg.arch = parse_arch(o.arch);
  cfg.d_emb = cfg.d_hidden = o.d_model;
  cfg.n_layers = o.layers;
  cfg.n_heads = o.heads;
  cfg.seq_len = o.seq_len;
  cfg.dropout = o.dropout;
  cfg.seed = g.seed;
  TrainSchedule sched;
  sched.n_epochs = o.epochs;
  sched.warmup_epochs = o.warmup;
  sched.max_lr = o.max_lr;
  sched.momentum = o.momentum;
  sched.batch_size = o.batch_size;
  sched.seq_len = o.seq_len;
  sched.grad_clip = o.grad_clip > 0 ? std::optional<double>(o.grad_clip) : std::nullopt;
  sched.seed = g.seed;
  sched.validate();

  const fs::path data(o.data);
  const Vocabulary vocab = load_vocabulary(data / "vocab.txt");
  cfg.vocab_size = int(vocab.size());
  cfg.validate();
  const auto train_c = load_corpus(data / "train.ids", vocab.size(), SplitTag::train);
  const auto valid_c = load_corpus(data / "valid.ids", vocab.size(), SplitTag::valid);
  const auto test_c = load_corpus(data / "test.ids", vocab.size(), SplitTag::test);

  RunDir run = open_run(app, sub, g);
  note_input(run, "vocab", data / "vocab.txt");
  note_input(run, "train", data / "train.ids");
  note_input(run, "valid", data / "valid.ids");
  note_input(run, "test", data / "test.ids");
  log(g, fmt::format("training {} d={} layers={} on {} tokens", o.arch, o.d_model, o.layers,
                     train_c.token_count()));
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(init_model<float>(cfg), train_c, valid_c, sched, [&](const EpochLog& e) {
    log(g, fmt::format("epoch {} loss {:.4f} valid ppl {:.3f} lr {:.4g}", e.epoch, e.train_loss, e.valid_ppl,
                       e.lr));
  });
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.log.test_ppl = perplexity(r.best, test_c);
  log(g, fmt::format("best epoch {} valid ppl {:.3f} test ppl {:.3f} ({:.0f}s)", r.log.best_epoch,
                     r.log.best_valid_ppl, *r.log.test_ppl, secs));
  const json meta{{"vocab_sha256", file_hash(data / "vocab.txt")},
                  {"best_epoch", r.log.best_epoch},
                  {"valid_ppl", r.log.best_valid_ppl},
                  {"test_ppl", *r.log.test_ppl}};
  save_checkpoint(run.dir / "checkpoint.bin", r.best, &r.momentum, std::uint64_t(r.steps), meta);
  run.outputs.push_back(run.dir / "checkpoint.bin");
  write_output(run, "train_log.csv", r.log.to_csv());
  run.manifest["checkpoint_model_sha256"] = model_hash(r.best);
  run.manifest["test_ppl"] = *r.log.test_ppl;
  run.manifest["train_seconds"] = secs;
  close_run(run, g);
}

// ---- eval-baseline ------------------------------------------------------

struct BaselineOpts {
  std::string checkpoint;
  std::string data;
  std::string grammar;
  std::string stimuli;
  std::string conditions = "ABCD";
  std::size_t n_per_gender = 20;
  std::uint64_t min_count = 50;
  std::vector<int> distances{0, 1, 3, 6};
  std::size_t max_beginnings = 0;
  int bootstrap = 1000;
};

void run_baseline(const CLI::App& app, const CLI::App& sub, const Global& g, const BaselineOpts& o) {
  const auto conditions = parse_conditions(o.conditions);
  const DataDir data = load_data_dir(o.data);
  const GrammarSpec lexicon = load_grammar(o.grammar);
  const StimulusSet stimuli = load_stimuli(o.stimuli);
  const auto ck = load_checkpoint<float>(o.checkpoint);
  if (ck.model.config.vocab_size != int(data.vocab.size())) {
    throw ConfigError("eval-baseline.checkpoint: vocabulary size differs from eval-baseline.data");
  }
  RunDir run = open_run(app, sub, g);
  note_input(run, "checkpoint", o.checkpoint);
  note_input(run, "vocab", fs::path(o.data) / "vocab.txt");

  std::vector<TestItem> all;
  json nouns = json::object();
  for (Condition c : conditions) {
    // The relative-pronoun frames use "l'", so they take vowel-initial nouns.
    const bool elided = condition_info(c).test == Construction::noun_relative;
    const NounSets sets = build_known_noun_baseline(data.vocab, data.counts, lexicon, o.n_per_gender,
                                                    o.min_count, elided ? NounFilter::elided : NounFilter::any);
    std::vector<ProbeNoun> probe = sets.feminine;
    probe.insert(probe.end(), sets.masculine.begin(), sets.masculine.end());
    SuiteOptions opts;
    opts.max_beginnings = o.max_beginnings;
    if (!elided) opts.distances = o.distances;
    auto items = build_test_suite(c, probe, stimuli.test(c), data.vocab, opts);
    save_suite(items, data.vocab, run.dir / fmt::format("suite_{}.tsv", condition_code(c)));
    run.outputs.push_back(run.dir / fmt::format("suite_{}.tsv", condition_code(c)));
    json list = json::array();
    for (const auto& n : probe) list.push_back(n.token + ":" + gender_code(n.gender));
    nouns[std::string(1, condition_code(c))] = list;
    for (auto& it : items) {
      it.id = all.size();
      all.push_back(std::move(it));
    }
  }
  BootstrapConfig boot;
  boot.resamples = o.bootstrap;
  boot.seed = g.seed;
  const AccuracyReport report = evaluate_suite(ck.model, std::span<const TestItem>(all), boot);
  write_output(run, "accuracy.csv", report.to_csv());
  const json summary{{"mean_accuracy", report.mean_accuracy},
                     {"n_items", report.n_items},
                     {"ties", report.ties},
                     {"nouns", nouns},
                     {"checkpoint_model_sha256", model_hash(ck.model)}};
  write_output(run, "summary.json", summary.dump(2) + "\n");
  log(g, fmt::format("mean agreement accuracy {:.4f} over {} items", report.mean_accuracy, report.n_items));
  close_run(run, g);
}

// ---- wordlab-run / sweep-lr --------------------------------------------

struct WordlabOpts {
  std::string checkpoint;
  std::string data;
  std::string grammar;
  std::string stimuli;
  std::string specs = "matched";
  std::size_t n_specs = 20;
  std::uint64_t min_count = 50;
  std::string conditions = "ABCD";
  std::vector<int> shots{1, 2, 3, 5, 10};
  int reps = 5;
  int pool_size = 15;
  double lr = 1.0;
  std::vector<double> lrs{0.01, 0.1, 0.5, 1.0, 2.0};
  std::string scope = "embedding";
  std::vector<int> distances;
  int top_k = 10;
  bool no_control = false;
  int workers = 1;
  std::string label;
};

struct WordlabInputs {
  ModelState<float> model;
  Vocabulary vocab;
  std::vector<NovelNounSpec> specs;
  std::vector<Condition> conditions;
  StimulusSet stimuli;
  FewShotConfig config;
};

WordlabInputs load_wordlab(const WordlabOpts& o, const Global& g) {
  WordlabInputs in;
  const DataDir data = load_data_dir(o.data);
  in.vocab = data.vocab;
  const GrammarSpec lexicon = load_grammar(o.grammar);
  in.model = load_checkpoint<float>(o.checkpoint).model;
  if (in.model.config.vocab_size != int(in.vocab.size())) {
    throw ConfigError("checkpoint: vocabulary size differs from data");
  }
  if (o.specs == "lexicon") {
    in.specs = specs_from_lexicon(in.vocab, lexicon);
    if (o.n_specs < in.specs.size()) in.specs.resize(o.n_specs);
  } else if (o.specs == "matched") {
    in.specs = matched_novel_specs(in.vocab, data.counts, lexicon, o.n_specs, o.min_count);
  } else {
    throw ConfigError("specs: expected 'lexicon' or 'matched', got '" + o.specs + "'");
  }
  in.conditions = parse_conditions(o.conditions);
  in.stimuli = load_stimuli(o.stimuli);
  in.config.shots = o.shots;
  in.config.repetitions = o.reps;
  in.config.pool_size = o.pool_size;
  in.config.lr = o.lr;
  in.config.scope = parse_update_scope(o.scope);
  in.config.seed = g.seed;
  in.config.distances = o.distances;
  in.config.top_k = o.top_k;
  in.config.control = !o.no_control;
  in.config.model_label = o.label.empty() ? std::string(arch_name(in.model.config.arch)) : o.label;
  in.config.validate();
  return in;
}

ProtocolResult run_trials(const WordlabInputs& in, const FewShotConfig& config, int workers, const Global& g) {
  std::size_t last = 0;
  return run_protocol(in.model, in.vocab, std::span<const NovelNounSpec>(in.specs),
                      std::span<const Condition>(in.conditions), in.stimuli, config, workers,
                      [&](std::size_t done, std::size_t total) {
                        if (done * 10 / total != last * 10 / total || done == total) {
                          log(g, fmt::format("  {}/{} trials", done, total));
                        }
                        last = done;
                      });
}

json protocol_summary(const ProtocolResult& r) {
  std::size_t hash_equal = 0;
  for (const auto& t : r.trials) hash_equal += t.hash_before == t.hash_after;
  return {{"trials", r.trials.size()}, {"controls", r.controls.size()}, {"scope_hash_equal", hash_equal}};
}

void run_wordlab(const CLI::App& app, const CLI::App& sub, const Global& g, const WordlabOpts& o) {
  const WordlabInputs in = load_wordlab(o, g);
  RunDir run = open_run(app, sub, g);
  note_input(run, "checkpoint", o.checkpoint);
  log(g, fmt::format("{} specs x {} conditions x 2 genders x {} shot counts x {} reps", in.specs.size(),
                     in.conditions.size(), in.config.shots.size(), in.config.repetitions));
  const ProtocolResult r = run_trials(in, in.config, o.workers, g);
  write_output(run, "trials.jsonl", trials_to_jsonl(r.trials));
  write_output(run, "trials.csv", trials_to_csv(r.trials));
  write_output(run, "controls.jsonl", trials_to_jsonl(r.controls));
  write_output(run, "controls.csv", trials_to_csv(r.controls));
  json specs = json::array();
  for (const auto& s : in.specs) {
    specs.push_back({{"label", s.label}, {"parent_f", in.vocab.token(s.parent_f)},
                     {"parent_m", in.vocab.token(s.parent_m)}, {"slot", in.vocab.token(s.slot)}});
  }
  json summary = protocol_summary(r);
  summary["specs"] = specs;
  summary["checkpoint_model_sha256"] = model_hash(in.model);
  write_output(run, "summary.json", summary.dump(2) + "\n");
  run.manifest["trials"] = r.trials.size();
  close_run(run, g);
}

void run_sweep(const CLI::App& app, const CLI::App& sub, const Global& g, const WordlabOpts& o) {
  if (o.lrs.empty()) throw ConfigError("sweep-lr.lrs: at least one learning rate is required");
  const WordlabInputs in = load_wordlab(o, g);
  RunDir run = open_run(app, sub, g);
  note_input(run, "checkpoint", o.checkpoint);
  std::vector<SweepPoint> sweep;
  json summary = json::array();
  for (double lr : o.lrs) {
    FewShotConfig cfg = in.config;
    cfg.lr = lr;
    cfg.validate();
    log(g, fmt::format("lr {:g}", lr));
    const ProtocolResult r = run_trials(in, cfg, o.workers, g);
    const std::string stem = fmt::format("lr_{:g}", lr);
    write_output(run, stem + "_trials.jsonl", trials_to_jsonl(r.trials));
    write_output(run, stem + "_trials.csv", trials_to_csv(r.trials));
    BootstrapConfig boot;
    boot.seed = g.seed;
    sweep.push_back({lr, aggregate_trials(r.trials, boot)});
    json s = protocol_summary(r);
    s["lr"] = lr;
    summary.push_back(s);
  }
  for (const auto& p : emit_sweep_report(sweep, run.dir)) run.outputs.push_back(p);
  write_output(run, "summary.json", summary.dump(2) + "\n");
  close_run(run, g);
}

// ---- analyze ------------------------------------------------------------

struct AnalyzeOpts {
  std::vector<std::string> trials;
  std::string title = "few-shot gender learning";
  int bootstrap = 1000;
};

void run_analyze(const CLI::App& app, const CLI::App& sub, const Global& g, const AnalyzeOpts& o) {
  std::vector<FewShotTrial> trials;
  RunDir run = open_run(app, sub, g);
  for (std::size_t i = 0; i < o.trials.size(); ++i) {
    note_input(run, fmt::format("trials_{}", i), o.trials[i]);
    auto part = trials_from_jsonl(read_text_file(o.trials[i]));
    trials.insert(trials.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  BootstrapConfig boot;
  boot.resamples = o.bootstrap;
  boot.seed = g.seed;
  const TrialAggregate agg = aggregate_trials(trials, boot);
  const auto deltas = collect_deltas(trials);
  ReportOptions ro;
  ro.title = o.title;
  for (const auto& p : emit_report(agg, deltas, run.dir, ro)) run.outputs.push_back(p);
  close_run(run, g);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"genderlab: grammatical gender agreement and few-shot noun learning in LSTM and transformer "
               "language models"};
  app.set_config("--config", "", "INI config file; [subcommand] sections set subcommand flags");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  Global g;
  app.add_option("--seed", g.seed, "Global seed for every seeded component")->envname("GP_SEED");
  app.add_option("--out", g.out, "Root directory for run directories");
  app.add_flag("--quiet", g.quiet, "Suppress progress messages");

  SynthOpts synth;
  auto* s_synth = app.add_subcommand("synth-corpus", "Generate a synthetic gendered corpus from a grammar");
  s_synth->add_option("--grammar", synth.grammar, "Grammar file")->required()->check(CLI::ExistingFile);
  s_synth->add_option("--sentences", synth.sentences, "Number of sentences")->check(CLI::PositiveNumber);
  s_synth->add_option("--masculine-ratio", synth.ratio, "Override the grammar's masculine noun ratio");

  PrepOpts prep;
  auto* s_prep = app.add_subcommand("corpus-prep", "Tokenize, build the vocabulary, filter and split a corpus");
  s_prep->add_option("--input", prep.input, "Raw text, one sentence per line")->required()->check(CLI::ExistingFile);
  s_prep->add_option("--max-vocab", prep.max_vocab, "Vocabulary size including <unk> and <eos>");
  s_prep->add_option("--max-unknown", prep.max_unknown, "Drop sentences with a larger unknown-token fraction")
      ->check(CLI::Range(0.0, 1.0));

  TrainOpts tr;
  auto* s_train = app.add_subcommand("train", "Train a language model on a prepared corpus");
  s_train->add_option("--data", tr.data, "corpus-prep run directory")->required()->check(CLI::ExistingDirectory);
  s_train->add_option("--arch", tr.arch, "lstm or transformer")->check(CLI::IsMember({"lstm", "transformer"}));
  s_train->add_option("--d-model", tr.d_model, "Embedding and hidden width");
  s_train->add_option("--layers", tr.layers, "Number of layers");
  s_train->add_option("--heads", tr.heads, "Attention heads (transformer)");
  s_train->add_option("--seq-len", tr.seq_len, "Context length / BPTT window");
  s_train->add_option("--dropout", tr.dropout, "Dropout probability")->check(CLI::Range(0.0, 1.0));
  s_train->add_option("--epochs", tr.epochs, "Training epochs");
  s_train->add_option("--warmup", tr.warmup, "Linear warm-up epochs");
  s_train->add_option("--max-lr", tr.max_lr, "Peak learning rate");
  s_train->add_option("--momentum", tr.momentum, "SGD momentum");
  s_train->add_option("--batch-size", tr.batch_size, "Mini-batch size");
  s_train->add_option("--grad-clip", tr.grad_clip, "Global gradient-norm clip (0 disables)");

  BaselineOpts bl;
  auto* s_base = app.add_subcommand("eval-baseline", "Agreement accuracy on known nouns");
  s_base->add_option("--checkpoint", bl.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  s_base->add_option("--data", bl.data, "corpus-prep run directory")->required()->check(CLI::ExistingDirectory);
  s_base->add_option("--grammar", bl.grammar, "Grammar file (noun lexicon)")->required()->check(CLI::ExistingFile);
  s_base->add_option("--stimuli", bl.stimuli, "Stimulus directory")->required()->check(CLI::ExistingDirectory);
  s_base->add_option("--conditions", bl.conditions, "Test constructions to evaluate, e.g. ABCD");
  s_base->add_option("--n-per-gender", bl.n_per_gender, "Known nouns per gender");
  s_base->add_option("--min-count", bl.min_count, "Minimum training-corpus count for a known noun");
  s_base->add_option("--distances", bl.distances, "Intervening-word counts for conditions A and B");
  s_base->add_option("--max-beginnings", bl.max_beginnings, "Cap on sentence beginnings (0 keeps all)");
  s_base->add_option("--bootstrap", bl.bootstrap, "Bootstrap resamples")->check(CLI::PositiveNumber);

  WordlabOpts wl;
  auto add_wordlab = [&](CLI::App* s, bool sweep) {
    s->add_option("--checkpoint", wl.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
    s->add_option("--data", wl.data, "corpus-prep run directory")->required()->check(CLI::ExistingDirectory);
    s->add_option("--grammar", wl.grammar, "Grammar file (lexicon and novel pairs)")->required()->check(CLI::ExistingFile);
    s->add_option("--stimuli", wl.stimuli, "Stimulus directory")->required()->check(CLI::ExistingDirectory);
    s->add_option("--specs", wl.specs, "Novel nouns: the grammar's 'lexicon' pairs or frequency-'matched' pairs")
        ->check(CLI::IsMember({"lexicon", "matched"}));
    s->add_option("--n-specs", wl.n_specs, "Number of novel nouns");
    s->add_option("--min-count", wl.min_count, "Minimum count for matched parent nouns");
    s->add_option("--conditions", wl.conditions, "Conditions to run, e.g. ABCD");
    s->add_option("--shots", wl.shots, "Learning-sentence counts");
    s->add_option("--reps", wl.reps, "Repetitions per shot count");
    s->add_option("--pool-size", wl.pool_size, "Learning sentences per pool");
    if (sweep) {
      s->add_option("--lrs", wl.lrs, "Few-shot learning rates");
    } else {
      s->add_option("--lr", wl.lr, "Few-shot learning rate");
    }
    s->add_option("--scope", wl.scope, "Update scope: embedding, novel-row or full")
        ->check(CLI::IsMember({"embedding", "novel-row", "full"}));
    s->add_option("--distances", wl.distances, "Test distances (default: all)");
    s->add_option("--top-k", wl.top_k, "Weight-change ranks kept per trial");
    s->add_flag("--no-control", wl.no_control, "Skip the gender-neutral control trials");
    s->add_option("--workers", wl.workers, "Parallel trial workers")->check(CLI::PositiveNumber);
    s->add_option("--label", wl.label, "Model label in trial records (default: architecture)");
  };
  auto* s_word = app.add_subcommand("wordlab-run", "Novel-noun few-shot learning protocol");
  add_wordlab(s_word, false);
  auto* s_sweep = app.add_subcommand("sweep-lr", "wordlab-run across a grid of few-shot learning rates");
  add_wordlab(s_sweep, true);

  AnalyzeOpts an;
  auto* s_an = app.add_subcommand("analyze", "Aggregate trials into tables and plots");
  s_an->add_option("--trials", an.trials, "trials.jsonl files")->required()->check(CLI::ExistingFile);
  s_an->add_option("--title", an.title, "Plot title");
  s_an->add_option("--bootstrap", an.bootstrap, "Bootstrap resamples")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (s_synth->parsed()) run_synth(app, *s_synth, g, synth);
    if (s_prep->parsed()) run_prep(app, *s_prep, g, prep);
    if (s_train->parsed()) run_train(app, *s_train, g, tr);
    if (s_base->parsed()) run_baseline(app, *s_base, g, bl);
    if (s_word->parsed()) run_wordlab(app, *s_word, g, wl);
    if (s_sweep->parsed()) run_sweep(app, *s_sweep, g, wl);
    if (s_an->parsed()) run_analyze(app, *s_an, g, an);
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitConfig;
  } catch (const DivergenceError& e) {
    fmt::print(stderr, "divergence: {}\n", e.what());
    return kExitDivergence;
  } catch (const InputError& e) {
    fmt::print(stderr, "data error: {}\n", e.what());
    return kExitData;
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
