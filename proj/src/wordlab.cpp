#include "genderlab/wordlab.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "genderlab/analysis.hpp"
#include "genderlab/error.hpp"
#include "genderlab/hash.hpp"
#include "genderlab/random.hpp"

namespace genderlab {
namespace {

constexpr std::string_view kNounPlaceholder = "NOUN";

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[0] == '#') continue;
    out.push_back(line);
  }
  return out;
}

std::string_view construction_file_stem(Construction c) {
  switch (c) {
    case Construction::article_noun: return "article";
    case Construction::noun_adjective: return "adjective";
    case Construction::noun_participle: return "participle";
    case Construction::noun_relative: return "relative";
  }
  return "?";
}

// Accuracy against `taught` per distance, plus the pooled value under -1.
std::map<int, double> accuracy_by_distance(std::span<const TestItem> items,
                                           std::span<const ItemScore> scores, Gender taught) {
  std::map<int, std::pair<double, double>> acc;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double ok = is_correct(scores[i].choice, taught) ? 1.0 : 0.0;
    for (int d : {items[i].distance, -1}) {
      acc[d].first += ok;
      acc[d].second += 1.0;
    }
  }
  std::map<int, double> out;
  for (const auto& [d, v] : acc) out[d] = v.first / v.second;
  return out;
}

std::string distance_key(int d) { return d < 0 ? "all" : std::to_string(d); }

nlohmann::json accuracy_json(const std::map<int, double>& acc) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [d, v] : acc) j[distance_key(d)] = v;
  return j;
}

std::map<int, double> accuracy_from_json(const nlohmann::json& j) {
  std::map<int, double> out;
  for (const auto& [k, v] : j.items()) out[k == "all" ? -1 : std::stoi(k)] = v.get<double>();
  return out;
}

struct Job {
  std::size_t spec = 0;
  Condition condition = Condition::A;
  Gender taught = Gender::feminine;
  bool control = false;
  int shots = 0;
  int rep = 0;
};

}  // namespace

NovelNounSpec make_novel_noun_spec(const Vocabulary& vocab, const GrammarSpec& lexicon,
                                   std::string_view feminine, std::string_view masculine) {
  auto check = [&](std::string_view token, Gender g) {
    const LexiconNoun* noun = lexicon.find_noun(token);
    if (!noun) throw InputError("novel-noun parent '" + std::string(token) + "' is not a lexicon noun");
    if (noun->gender != g) {
      throw InputError(fmt::format("novel-noun parent '{}' is not {}", token,
                                   g == Gender::feminine ? "feminine" : "masculine"));
    }
    const auto id = vocab.find(token);
    if (!id) throw InputError("novel-noun parent '" + std::string(token) + "' is not in the vocabulary");
    return *id;
  };
  NovelNounSpec spec;
  spec.parent_f = check(feminine, Gender::feminine);
  spec.parent_m = check(masculine, Gender::masculine);
  if (spec.parent_f == spec.parent_m) throw InputError("novel-noun parents must differ");
  spec.slot = vocab.least_frequent();
  if (spec.slot == spec.parent_f || spec.slot == spec.parent_m || vocab.is_reserved(spec.slot)) {
    throw InputError("the least frequent token '" + vocab.token(spec.slot) + "' cannot host a novel noun");
  }
  spec.label = fmt::format("{}+{}", feminine, masculine);
  return spec;
}

std::vector<NovelNounSpec> specs_from_lexicon(const Vocabulary& vocab, const GrammarSpec& lexicon) {
  std::vector<NovelNounSpec> out;
  for (const auto& [f, m] : lexicon.novel_pairs) out.push_back(make_novel_noun_spec(vocab, lexicon, f, m));
  return out;
}

std::vector<NovelNounSpec> matched_novel_specs(const Vocabulary& vocab, std::span<const std::uint64_t> counts,
                                               const GrammarSpec& lexicon, std::size_t n,
                                               std::uint64_t min_count, NounFilter filter) {
  const NounSets sets = build_known_noun_baseline(vocab, counts, lexicon, n, min_count, filter);
  std::vector<NovelNounSpec> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(make_novel_noun_spec(vocab, lexicon, sets.feminine[i].token, sets.masculine[i].token));
  }
  return out;
}

template <typename S>
RowVector<S> synthesize_novel_embedding(const ModelState<S>& model, const NovelNounSpec& spec) {
  const RowVector<S> f = get_embedding_row(model, spec.parent_f);
  const RowVector<S> m = get_embedding_row(model, spec.parent_m);
  return S(0.5) * f + S(0.5) * m;
}

template <typename S>
TokenId implant_novel_noun(ModelState<S>& model, const RowVector<S>& vector, const Vocabulary& vocab) {
  const TokenId slot = vocab.least_frequent();
  set_embedding_row(model, slot, vector);
  return slot;
}

std::vector<TestItem> initial_gender_probe(TokenId slot, const TestTemplates& adjective_test,
                                           const Vocabulary& vocab) {
  const std::vector<ProbeNoun> noun{{vocab.token(slot), Gender::feminine}};
  SuiteOptions opts;
  opts.distances = {0};
  return build_test_suite(Condition::A, noun, adjective_test, vocab, opts);
}

template <typename S>
InitialGender initial_gender(const ModelState<S>& model, std::span<const TestItem> probe_suite) {
  if (probe_suite.empty()) throw InputError("initial_gender needs a nonempty probe suite");
  const auto scores = score_items(model, probe_suite);
  InitialGender out;
  out.n = scores.size();
  std::size_t fem = 0, masc = 0;
  for (const auto& s : scores) {
    out.margin += s.p_f - s.p_m;
    fem += s.choice == Choice::feminine;
    masc += s.choice == Choice::masculine;
  }
  out.margin /= double(out.n);
  out.feminine_fraction = double(fem) / double(out.n);
  if (fem != masc) {
    out.gender = fem > masc ? Gender::feminine : Gender::masculine;
  } else {
    out.gender = out.margin < 0.0 ? Gender::masculine : Gender::feminine;
  }
  return out;
}

std::string_view update_scope_name(UpdateScope s) {
  switch (s) {
    case UpdateScope::embedding_only: return "embedding";
    case UpdateScope::novel_row_only: return "novel-row";
    case UpdateScope::full: return "full";
  }
  return "?";
}

UpdateScope parse_update_scope(std::string_view text) {
  for (UpdateScope s : {UpdateScope::embedding_only, UpdateScope::novel_row_only, UpdateScope::full}) {
    if (text == update_scope_name(s)) return s;
  }
  throw ConfigError("scope: expected embedding, novel-row or full, got '" + std::string(text) + "'");
}

template <typename S>
EmbeddingDelta few_shot_update(ModelState<S>& model, std::span<const IdSentence> sentences,
                               TokenId slot, double lr, UpdateScope scope) {
  if (sentences.empty()) throw InputError("few-shot update needs at least one sentence");
  for (const auto& s : sentences) {
    if (std::find(s.begin(), s.end(), slot) == s.end()) {
      throw StimulusError("learning sentence does not contain the novel-noun token");
    }
  }
  const Matrix<S> before = model.embedding();
  GradientSet<S> grads;
  EmbeddingDelta out;
  out.loss = loss_and_gradients(
      model, sentences, scope == UpdateScope::full ? GradScope::full : GradScope::embedding_only, grads);
  if (scope == UpdateScope::novel_row_only) {
    const RowVector<S> keep = grads.tensors[0].row(slot);
    grads.tensors[0].setZero();
    grads.tensors[0].row(slot) = keep;
  }
  apply_update(model, grads, lr);
  const Matrix<S>& after = model.embedding();
  for (Eigen::Index r = 0; r < after.rows(); ++r) {
    if ((after.row(r).array() != before.row(r).array()).any()) {
      RowChange change;
      change.token = TokenId(r);
      for (Eigen::Index c = 0; c < after.cols(); ++c) {
        change.delta.push_back(double(after(r, c)) - double(before(r, c)));
      }
      out.rows.push_back(std::move(change));
    }
  }
  return out;
}

const std::vector<std::string>& StimulusSet::pool(Construction c, Gender g) const {
  const auto it = pools.find({c, g});
  if (it == pools.end()) {
    throw ConfigError(fmt::format("no {} learning pool for gender {}", construction_name(c), gender_code(g)));
  }
  return it->second;
}

const TestTemplates& StimulusSet::test(Condition c) const {
  const auto it = tests.find(c);
  if (it == tests.end()) throw ConfigError(fmt::format("no test templates for condition {}", condition_code(c)));
  return it->second;
}

StimulusSet load_stimuli(const std::filesystem::path& dir) {
  StimulusSet set;
  for (Construction c : {Construction::article_noun, Construction::noun_adjective, Construction::noun_participle}) {
    for (Gender g : {Gender::feminine, Gender::masculine}) {
      const auto path = dir / fmt::format("learn_{}_{}.txt", construction_file_stem(c), gender_code(g));
      set.pools[{c, g}] = read_lines(path);
    }
  }
  set.neutral = read_lines(dir / "learn_neutral.txt");
  for (Condition c : kAllConditions) {
    set.tests[c] = load_test_templates(dir / fmt::format("test_{}.tmpl", condition_code(c)));
  }
  return set;
}

std::vector<IdSentence> instantiate_pool(std::span<const std::string> lines, TokenId slot,
                                         const Vocabulary& vocab) {
  std::vector<IdSentence> out;
  for (const auto& line : lines) {
    std::istringstream in(line);
    std::string word;
    IdSentence ids{Vocabulary::kEosId};
    bool has_noun = false;
    while (in >> word) {
      if (word == kNounPlaceholder) {
        ids.push_back(slot);
        has_noun = true;
        continue;
      }
      Sentence toks = tokenize_line(word);
      if (word == kEosToken) toks = {std::string(kEosToken)};
      else if (!toks.empty()) toks.pop_back();
      for (const auto& t : toks) {
        const auto id = vocab.find(t);
        if (!id || *id == Vocabulary::kUnkId) {
          throw StimulusError("learning sentence '" + line + "': token '" + t + "' is not in the vocabulary");
        }
        ids.push_back(*id);
      }
    }
    if (!has_noun) throw StimulusError("learning sentence '" + line + "' has no NOUN placeholder");
    if (ids.back() != Vocabulary::kEosId) ids.push_back(Vocabulary::kEosId);
    out.push_back(std::move(ids));
  }
  return out;
}

void FewShotConfig::validate() const {
  if (shots.empty()) throw ConfigError("shots: at least one shot count is required");
  if (pool_size < 1) throw ConfigError("pool_size: must be positive");
  for (int s : shots) {
    if (s < 1 || s > pool_size) {
      throw ConfigError(fmt::format("shots: {} is outside [1, pool_size = {}]", s, pool_size));
    }
  }
  if (repetitions < 1) throw ConfigError("repetitions: must be positive");
  if (!std::isfinite(lr) || lr < 0.0) throw ConfigError("lr: must be finite and non-negative");
  if (top_k < 1) throw ConfigError("top_k: must be positive");
  for (int d : distances) {
    if (d < 0) throw ConfigError("distances: must be non-negative");
  }
}

std::string FewShotTrial::key() const {
  return fmt::format("{}/{:03d}/{}/{}/{:02d}/{:02d}", model, spec_index,
                     control ? std::string("ctl") : std::string(1, condition_code(condition)),
                     gender_code(taught), shots, rep);
}

template <typename S>
ProtocolResult run_protocol(const ModelState<S>& pristine, const Vocabulary& vocab,
                            std::span<const NovelNounSpec> specs, std::span<const Condition> conditions,
                            const StimulusSet& stimuli, const FewShotConfig& config, int workers,
                            const TrialCallback& progress) {
  config.validate();
  if (specs.empty()) throw ConfigError("no novel-noun specs");
  if (conditions.empty()) throw ConfigError("no conditions");
  if (std::size_t(vocab.size()) != std::size_t(pristine.config.vocab_size)) {
    throw ConfigError("vocabulary size does not match the checkpoint");
  }
  auto check_pool = [&](const std::vector<std::string>& pool, const std::string& what) {
    if (int(pool.size()) < config.pool_size) {
      throw ConfigError(fmt::format("{} pool has {} sentences, pool_size is {}", what, pool.size(),
                                    config.pool_size));
    }
  };
  for (Condition c : conditions) {
    for (Gender g : {Gender::feminine, Gender::masculine}) {
      check_pool(stimuli.pool(condition_info(c).learning, g),
                 fmt::format("condition {} {}", condition_code(c), gender_code(g)));
    }
  }
  if (config.control) check_pool(stimuli.neutral, "neutral");

  const Matrix<double> pristine_table = pristine.embedding().template cast<double>();
  SuiteOptions suite_opts;
  suite_opts.distances = config.distances;

  // Per spec: implanted model, probe result, axis, test suites with their
  // pre-update scores, and instantiated learning pools.
  struct SpecData {
    ModelState<S> implanted;
    Matrix<double> table;
    std::vector<double> axis;
    InitialGender initial;
    std::map<Condition, std::vector<TestItem>> suites;
    std::map<Condition, std::vector<ItemScore>> pre_scores;
    std::map<std::pair<Construction, Gender>, std::vector<IdSentence>> pools;
    std::vector<IdSentence> neutral;
  };
  std::vector<Condition> test_conditions(conditions.begin(), conditions.end());
  if (config.control && std::find(test_conditions.begin(), test_conditions.end(), Condition::A) ==
                            test_conditions.end()) {
    test_conditions.push_back(Condition::A);
  }
  std::vector<SpecData> data(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    SpecData& d = data[i];
    d.implanted = pristine;
    const TokenId slot = implant_novel_noun(d.implanted, synthesize_novel_embedding(pristine, specs[i]), vocab);
    if (slot != specs[i].slot) throw ConfigError("spec '" + specs[i].label + "' names a different slot token");
    d.table = d.implanted.embedding().template cast<double>();
    d.axis = gender_axis(pristine_table, specs[i]);
    const auto probe = initial_gender_probe(slot, stimuli.test(Condition::A), vocab);
    d.initial = initial_gender(d.implanted, std::span<const TestItem>(probe));
    const std::vector<ProbeNoun> noun{{vocab.token(slot), Gender::feminine}};
    for (Condition c : test_conditions) {
      d.suites[c] = build_test_suite(c, noun, stimuli.test(c), vocab, suite_opts);
      d.pre_scores[c] = score_items(d.implanted, std::span<const TestItem>(d.suites[c]));
      for (Gender g : {Gender::feminine, Gender::masculine}) {
        const auto key = std::pair{condition_info(c).learning, g};
        if (!d.pools.count(key) && std::find(conditions.begin(), conditions.end(), c) != conditions.end()) {
          const auto& lines = stimuli.pool(key.first, g);
          d.pools[key] = instantiate_pool(std::span(lines).first(std::size_t(config.pool_size)), slot, vocab);
        }
      }
    }
    if (config.control) {
      d.neutral = instantiate_pool(std::span(stimuli.neutral).first(std::size_t(config.pool_size)), slot, vocab);
    }
  }

  std::vector<Job> jobs;
  for (std::size_t s = 0; s < specs.size(); ++s) {
    for (Condition c : conditions) {
      for (Gender g : {Gender::feminine, Gender::masculine}) {
        for (int shots : config.shots) {
          for (int rep = 0; rep < config.repetitions; ++rep) jobs.push_back({s, c, g, false, shots, rep});
        }
      }
    }
  }
  const std::size_t n_main = jobs.size();
  if (config.control) {
    for (std::size_t s = 0; s < specs.size(); ++s) {
      for (int shots : config.shots) {
        for (int rep = 0; rep < config.repetitions; ++rep) {
          jobs.push_back({s, Condition::A, Gender::feminine, true, shots, rep});
        }
      }
    }
  }

  auto run_job = [&](const Job& job) {
    const SpecData& d = data[job.spec];
    const NovelNounSpec& spec = specs[job.spec];
    FewShotTrial t;
    t.model = config.model_label;
    t.spec_index = job.spec;
    t.label = spec.label;
    t.slot = spec.slot;
    t.condition = job.condition;
    t.taught = job.taught;
    t.control = job.control;
    t.shots = job.shots;
    t.rep = job.rep;
    t.seed = mix_seed(config.seed, {job.spec, std::uint64_t(job.condition), std::uint64_t(job.taught),
                                    std::uint64_t(job.control), std::uint64_t(job.shots),
                                    std::uint64_t(job.rep)});
    t.initial = d.initial;

    Rng rng(t.seed);
    const auto picks = rng.sample_without_replacement(std::size_t(config.pool_size), std::size_t(job.shots));
    const auto& pool =
        job.control ? d.neutral : d.pools.at({condition_info(job.condition).learning, job.taught});
    std::vector<IdSentence> batch;
    for (std::size_t p : picks) {
      t.sentence_ids.push_back(int(p));
      batch.push_back(pool[p]);
    }

    ModelState<S> model = d.implanted;
    t.hash_before = non_embedding_hash(model);
    const EmbeddingDelta delta =
        few_shot_update(model, std::span<const IdSentence>(batch), spec.slot, config.lr, config.scope);
    t.hash_after = non_embedding_hash(model);
    t.loss = delta.loss;
    t.rows_changed = delta.rows.size();

    const auto& suite = d.suites.at(job.condition);
    t.pre_accuracy = accuracy_by_distance(suite, d.pre_scores.at(job.condition), job.taught);
    const auto post = score_items(model, std::span<const TestItem>(suite));
    t.post_accuracy = accuracy_by_distance(suite, post, job.taught);

    const Matrix<double> after = model.embedding().template cast<double>();
    t.delta_norm = (after - d.table).norm();
    const auto ranked = rank_all_weight_changes(d.table, after);
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      const WeightDelta& w = ranked[r];
      const bool is_slot = w.token == spec.slot;
      if (int(r) >= config.top_k && !is_slot) continue;
      std::vector<double> row(std::size_t(after.cols()));
      for (Eigen::Index c = 0; c < after.cols(); ++c) row[std::size_t(c)] = after(w.token, c) - d.table(w.token, c);
      const double proj = project_on_gender_axis(row, d.axis);
      if (is_slot) {
        t.slot_rank = int(r) + 1;
        t.slot_percent = w.percent_change;
        t.slot_projection = proj;
      }
      if (int(r) < config.top_k) t.top.push_back({w.token, vocab.token(w.token), w.percent_change, proj});
    }
    return t;
  };

  std::vector<FewShotTrial> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        results[i] = run_job(jobs[i]);
      } catch (...) {
        std::lock_guard lock(progress_mutex);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
        return;
      }
      const std::size_t n = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(n, jobs.size());
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(workers, int(jobs.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  ProtocolResult out;
  out.trials.assign(std::make_move_iterator(results.begin()),
                    std::make_move_iterator(results.begin() + std::ptrdiff_t(n_main)));
  out.controls.assign(std::make_move_iterator(results.begin() + std::ptrdiff_t(n_main)),
                      std::make_move_iterator(results.end()));
  return out;
}

nlohmann::json trial_to_json(const FewShotTrial& t) {
  nlohmann::json top = nlohmann::json::array();
  for (const auto& e : t.top) {
    top.push_back({{"token", e.text}, {"id", e.token}, {"percent_change", e.percent_change},
                   {"projection", e.projection}});
  }
  return nlohmann::json{
      {"key", t.key()},
      {"model", t.model},
      {"spec", t.spec_index},
      {"label", t.label},
      {"slot", t.slot},
      {"condition", std::string(1, condition_code(t.condition))},
      {"gender", std::string(1, gender_code(t.taught))},
      {"control", t.control},
      {"shots", t.shots},
      {"rep", t.rep},
      {"seed", t.seed},
      {"sentences", t.sentence_ids},
      {"initial",
       {{"gender", std::string(1, gender_code(t.initial.gender))},
        {"margin", t.initial.margin},
        {"feminine_fraction", t.initial.feminine_fraction},
        {"n", t.initial.n}}},
      {"pre", accuracy_json(t.pre_accuracy)},
      {"post", accuracy_json(t.post_accuracy)},
      {"hash_before", t.hash_before},
      {"hash_after", t.hash_after},
      {"loss", t.loss},
      {"rows_changed", t.rows_changed},
      {"delta_norm", t.delta_norm},
      {"slot_rank", t.slot_rank},
      {"slot_percent", t.slot_percent},
      {"slot_projection", t.slot_projection},
      {"top", top},
  };
}

FewShotTrial trial_from_json(const nlohmann::json& j) {
  try {
    FewShotTrial t;
    t.model = j.at("model").get<std::string>();
    t.spec_index = j.at("spec").get<std::size_t>();
    t.label = j.at("label").get<std::string>();
    t.slot = j.at("slot").get<TokenId>();
    t.condition = parse_condition(j.at("condition").get<std::string>());
    t.taught = parse_gender(j.at("gender").get<std::string>());
    t.control = j.at("control").get<bool>();
    t.shots = j.at("shots").get<int>();
    t.rep = j.at("rep").get<int>();
    t.seed = j.at("seed").get<std::uint64_t>();
    t.sentence_ids = j.at("sentences").get<std::vector<int>>();
    const auto& init = j.at("initial");
    t.initial.gender = parse_gender(init.at("gender").get<std::string>());
    t.initial.margin = init.at("margin").get<double>();
    t.initial.feminine_fraction = init.at("feminine_fraction").get<double>();
    t.initial.n = init.at("n").get<std::size_t>();
    t.pre_accuracy = accuracy_from_json(j.at("pre"));
    t.post_accuracy = accuracy_from_json(j.at("post"));
    t.hash_before = j.at("hash_before").get<std::string>();
    t.hash_after = j.at("hash_after").get<std::string>();
    t.loss = j.at("loss").get<double>();
    t.rows_changed = j.at("rows_changed").get<std::size_t>();
    t.delta_norm = j.at("delta_norm").get<double>();
    t.slot_rank = j.at("slot_rank").get<int>();
    t.slot_percent = j.at("slot_percent").get<double>();
    t.slot_projection = j.at("slot_projection").get<double>();
    for (const auto& e : j.at("top")) {
      t.top.push_back({e.at("id").get<TokenId>(), e.at("token").get<std::string>(),
                       e.at("percent_change").get<double>(), e.at("projection").get<double>()});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed trial record: ") + e.what());
  }
}

std::string trials_to_jsonl(std::span<const FewShotTrial> trials) {
  std::string out;
  for (const auto& t : trials) {
    out += trial_to_json(t).dump();
    out += '\n';
  }
  return out;
}

std::vector<FewShotTrial> trials_from_jsonl(std::string_view text) {
  std::vector<FewShotTrial> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw InputError(fmt::format("trial line {}: {}", line_no, e.what()));
    }
    out.push_back(trial_from_json(j));
  }
  return out;
}

std::string trials_to_csv(std::span<const FewShotTrial> trials) {
  std::string out =
      "model,trial_key,spec,label,condition,taught_gender,control,shots,rep,distance,pre_acc,post_acc,"
      "slot_rank,slot_percent,slot_projection,scope_hash_equal\n";
  for (const auto& t : trials) {
    for (const auto& [d, post] : t.post_accuracy) {
      const auto pre = t.pre_accuracy.find(d);
      out += fmt::format("{},{},{},{},{},{},{},{},{},{},{:.6f},{:.6f},{},{:.6f},{:.6f},{}\n", t.model,
                         t.key(), t.spec_index, t.label, condition_code(t.condition), gender_code(t.taught),
                         t.control ? 1 : 0, t.shots, t.rep, distance_key(d),
                         pre == t.pre_accuracy.end() ? 0.0 : pre->second, post, t.slot_rank, t.slot_percent,
                         t.slot_projection, t.hash_before == t.hash_after ? 1 : 0);
    }
  }
  return out;
}

#define GENDERLAB_INSTANTIATE(S)                                                                      \
  template RowVector<S> synthesize_novel_embedding(const ModelState<S>&, const NovelNounSpec&);        \
  template TokenId implant_novel_noun(ModelState<S>&, const RowVector<S>&, const Vocabulary&);        \
  template InitialGender initial_gender(const ModelState<S>&, std::span<const TestItem>);             \
  template EmbeddingDelta few_shot_update(ModelState<S>&, std::span<const IdSentence>, TokenId, double, \
                                          UpdateScope);                                               \
  template ProtocolResult run_protocol(const ModelState<S>&, const Vocabulary&,                       \
                                       std::span<const NovelNounSpec>, std::span<const Condition>,    \
                                       const StimulusSet&, const FewShotConfig&, int,                 \
                                       const TrialCallback&);

GENDERLAB_INSTANTIATE(float)
GENDERLAB_INSTANTIATE(double)

}  // namespace genderlab
