#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genderlab/corpus.hpp"
#include "genderlab/grammar.hpp"
#include "genderlab/model.hpp"
#include "genderlab/stats.hpp"

namespace genderlab {

enum class Condition { A, B, C, D };

inline constexpr Condition kAllConditions[] = {Condition::A, Condition::B, Condition::C,
                                               Condition::D};

char condition_code(Condition c);
Condition parse_condition(std::string_view text);

enum class Construction { article_noun, noun_adjective, noun_participle, noun_relative };

std::string_view construction_name(Construction c);

// A: article -> adjective, B: article -> participle,
// C: adjective -> relative pronoun, D: participle -> relative pronoun.
struct ConditionInfo {
  Condition tag;
  Construction learning;
  Construction test;
};

ConditionInfo condition_info(Condition c);

// Sentence frames for one test construction. Items are the cross product
// beginnings x intervening x targets; a distance is the word count of its
// intervening phrase.
struct TestTemplates {
  std::vector<Sentence> beginnings;
  std::vector<Sentence> intervening;
  std::vector<InflectedPair> targets;
};

// Sections [beginnings], [intervening] ("<distance> = words") and [targets]
// ("feminine masculine"); '#' starts a comment line.
TestTemplates parse_test_templates(std::string_view text);
TestTemplates load_test_templates(const std::filesystem::path& path);

struct ProbeNoun {
  std::string token;
  Gender gender = Gender::feminine;
};

struct TestItem {
  std::size_t id = 0;
  IdSentence prefix;  // starts with <eos>, ends just before the target
  TokenId target_f = 0;
  TokenId target_m = 0;
  Condition condition = Condition::A;
  int distance = 0;
  TokenId noun = 0;
  Gender gender = Gender::feminine;
};

struct SuiteOptions {
  // Empty keeps every intervening phrase.
  std::vector<int> distances;
  // 0 keeps every beginning.
  std::size_t max_beginnings = 0;
};

// Throws StimulusError naming any template token missing from vocab or any
// malformed item (noun repeated in the prefix, target inside the prefix).
std::vector<TestItem> build_test_suite(Condition condition, std::span<const ProbeNoun> nouns,
                                       const TestTemplates& templates, const Vocabulary& vocab,
                                       const SuiteOptions& options = {});

enum class Choice { feminine, masculine, tie };

struct ItemScore {
  Choice choice = Choice::tie;
  double p_f = 0.0;
  double p_m = 0.0;
};

// Strict comparison; equal probabilities are a tie.
Choice choose(double p_f, double p_m);
// A tie is incorrect for both genders.
bool is_correct(Choice choice, Gender expected);

template <typename S>
ItemScore score_item(const ModelState<S>& model, const TestItem& item);

// Batched scoring in item order.
template <typename S>
std::vector<ItemScore> score_items(const ModelState<S>& model, std::span<const TestItem> items);

struct AccuracyCell {
  Condition condition = Condition::A;
  Gender gender = Gender::feminine;
  int distance = -1;  // -1 pools every distance
  std::size_t n = 0;
  double accuracy = 0.0;
  Interval ci;
  std::size_t ties = 0;
};

struct AccuracyReport {
  std::vector<AccuracyCell> cells;
  double mean_accuracy = 0.0;
  std::size_t n_items = 0;
  std::size_t ties = 0;

  const AccuracyCell* find(Condition c, Gender g, int distance) const;
  // Columns condition, gender, distance, n, accuracy, ci_lo, ci_hi, ties.
  std::string to_csv() const;
};

// Correctness is judged against each item's own gender field.
AccuracyReport summarize_scores(std::span<const TestItem> items, std::span<const ItemScore> scores,
                                const BootstrapConfig& bootstrap = {});

template <typename S>
AccuracyReport evaluate_suite(const ModelState<S>& model, std::span<const TestItem> items,
                              const BootstrapConfig& bootstrap = {});

// One item per line: prefix tokens (space separated), target_f, target_m,
// condition, distance, noun, gender, tab separated.
void save_suite(std::span<const TestItem> items, const Vocabulary& vocab,
                const std::filesystem::path& path);
std::vector<TestItem> load_suite(const std::filesystem::path& path, const Vocabulary& vocab);

struct NounSets {
  std::vector<ProbeNoun> feminine;
  std::vector<ProbeNoun> masculine;
};

enum class NounFilter { any, elided, plain };

// Lexicon nouns with count >= min_count in counts (indexed by token id),
// paired greedily across genders by closest count: feminine[i] and
// masculine[i] form the i-th pair. The filter keeps only vowel-initial
// (elided) or only consonant-initial (plain) nouns. Throws ConfigError when
// either gender has fewer than n_per_gender candidates.
NounSets build_known_noun_baseline(const Vocabulary& vocab, std::span<const std::uint64_t> counts,
                                   const GrammarSpec& lexicon, std::size_t n_per_gender,
                                   std::uint64_t min_count, NounFilter filter = NounFilter::any);

}  // namespace genderlab
