#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "genderlab/agreement.hpp"
#include "genderlab/corpus.hpp"
#include "genderlab/grammar.hpp"
#include "genderlab/model.hpp"

namespace genderlab {

struct NovelNounSpec {
  TokenId parent_f = 0;
  TokenId parent_m = 0;
  TokenId slot = 0;
  std::string label;
};

// Checks both parents against the lexicon and takes the vocabulary's least
// frequent token as the slot. Throws InputError on any violation.
NovelNounSpec make_novel_noun_spec(const Vocabulary& vocab, const GrammarSpec& lexicon,
                                   std::string_view feminine, std::string_view masculine);

// One spec per lexicon novel pair, in file order.
std::vector<NovelNounSpec> specs_from_lexicon(const Vocabulary& vocab, const GrammarSpec& lexicon);

// n specs from frequency-matched opposite-gender lexicon nouns sharing an
// article form (consonant-initial by default), counted in counts.
std::vector<NovelNounSpec> matched_novel_specs(const Vocabulary& vocab, std::span<const std::uint64_t> counts,
                                               const GrammarSpec& lexicon, std::size_t n,
                                               std::uint64_t min_count = 50,
                                               NounFilter filter = NounFilter::plain);

// 0.5 * x(parent_f) + 0.5 * x(parent_m) from the model's current table.
template <typename S>
RowVector<S> synthesize_novel_embedding(const ModelState<S>& model, const NovelNounSpec& spec);

// Overwrites the least frequent non-reserved token's row; returns its id.
template <typename S>
TokenId implant_novel_noun(ModelState<S>& model, const RowVector<S>& vector, const Vocabulary& vocab);

struct InitialGender {
  Gender gender = Gender::feminine;
  double margin = 0.0;             // mean(p_f - p_m)
  double feminine_fraction = 0.0;  // share of probes choosing the feminine form
  std::size_t n = 0;
};

// Majority vote over probe items; an even split falls back to the sign of the
// margin, and a zero margin to feminine.
template <typename S>
InitialGender initial_gender(const ModelState<S>& model, std::span<const TestItem> probe_suite);

// Condition A (noun-adjective) items over the slot at distance 0.
std::vector<TestItem> initial_gender_probe(TokenId slot, const TestTemplates& adjective_test,
                                           const Vocabulary& vocab);

enum class UpdateScope { embedding_only, novel_row_only, full };

std::string_view update_scope_name(UpdateScope s);
UpdateScope parse_update_scope(std::string_view text);

struct RowChange {
  TokenId token = 0;
  std::vector<double> delta;
};

// Rows of after - before that are not identically zero, by token id.
struct EmbeddingDelta {
  std::vector<RowChange> rows;
  double loss = 0.0;
};

// One plain gradient step (no momentum) on the learning sentences. Every
// sentence must contain the slot token.
template <typename S>
EmbeddingDelta few_shot_update(ModelState<S>& model, std::span<const IdSentence> sentences,
                               TokenId slot, double lr,
                               UpdateScope scope = UpdateScope::embedding_only);

// Learning pools are keyed by construction and gender; the neutral pool feeds
// the control trials.
struct StimulusSet {
  std::map<std::pair<Construction, Gender>, std::vector<std::string>> pools;
  std::vector<std::string> neutral;
  std::map<Condition, TestTemplates> tests;

  const std::vector<std::string>& pool(Construction c, Gender g) const;
  const TestTemplates& test(Condition c) const;
};

// learn_{article,adjective,participle}_{F,M}.txt, learn_neutral.txt and
// test_{A,B,C,D}.tmpl.
StimulusSet load_stimuli(const std::filesystem::path& dir);

// Replaces NOUN with the slot token and encodes each line behind a leading
// <eos>. Throws StimulusError on unknown tokens or a missing NOUN.
std::vector<IdSentence> instantiate_pool(std::span<const std::string> lines, TokenId slot,
                                         const Vocabulary& vocab);

struct FewShotConfig {
  std::vector<int> shots{1, 2, 3, 5, 10};
  int repetitions = 5;
  int pool_size = 15;
  double lr = 1.0;
  UpdateScope scope = UpdateScope::embedding_only;
  std::uint64_t seed = 1;
  std::vector<int> distances;  // empty keeps every test distance
  int top_k = 10;
  bool control = true;
  std::string model_label = "model";

  void validate() const;
};

struct WeightChangeEntry {
  TokenId token = 0;
  std::string text;
  double percent_change = 0.0;
  double projection = 0.0;
};

struct FewShotTrial {
  std::string model;
  std::size_t spec_index = 0;
  std::string label;
  TokenId slot = 0;
  Condition condition = Condition::A;
  Gender taught = Gender::feminine;
  bool control = false;
  int shots = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  std::vector<int> sentence_ids;
  InitialGender initial;
  // Accuracy against the taught gender, keyed by distance (-1 pools all).
  std::map<int, double> pre_accuracy;
  std::map<int, double> post_accuracy;
  std::string hash_before;
  std::string hash_after;
  double loss = 0.0;
  std::size_t rows_changed = 0;
  double delta_norm = 0.0;
  int slot_rank = 0;  // 1-based rank of the slot by percent change
  double slot_percent = 0.0;
  double slot_projection = 0.0;
  std::vector<WeightChangeEntry> top;

  // model/spec/condition/gender/shots/rep, zero padded so it sorts.
  std::string key() const;
};

struct ProtocolResult {
  std::vector<FewShotTrial> trials;
  std::vector<FewShotTrial> controls;
};

using TrialCallback = std::function<void(std::size_t done, std::size_t total)>;

// Trials for spec x condition x gender x shots x repetition, plus (with
// config.control) one neutral-pool control per spec x shots x repetition.
// Each trial starts from a copy of the pristine model.
template <typename S>
ProtocolResult run_protocol(const ModelState<S>& pristine, const Vocabulary& vocab,
                            std::span<const NovelNounSpec> specs, std::span<const Condition> conditions,
                            const StimulusSet& stimuli, const FewShotConfig& config, int workers = 1,
                            const TrialCallback& progress = {});

nlohmann::json trial_to_json(const FewShotTrial& t);
FewShotTrial trial_from_json(const nlohmann::json& j);

// One JSON object per line.
std::string trials_to_jsonl(std::span<const FewShotTrial> trials);
std::vector<FewShotTrial> trials_from_jsonl(std::string_view text);

// One row per trial and distance: model, trial_key, spec, label, condition,
// taught_gender, control, shots, rep, distance, pre_acc, post_acc, slot_rank,
// slot_percent, slot_projection, scope_hash_equal.
std::string trials_to_csv(std::span<const FewShotTrial> trials);

}  // namespace genderlab
