#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace genderlab {

enum class Gender { feminine, masculine };

inline char gender_code(Gender g) { return g == Gender::feminine ? 'F' : 'M'; }
inline Gender opposite(Gender g) {
  return g == Gender::feminine ? Gender::masculine : Gender::feminine;
}
Gender parse_gender(std::string_view text);

struct LexiconNoun {
  std::string token;
  Gender gender = Gender::feminine;
  // Vowel-initial nouns take the elided article "l'" instead of le/la.
  bool elided = false;
};

// A gender-inflected word: one form per gender.
struct InflectedPair {
  std::string feminine;
  std::string masculine;

  const std::string& form(Gender g) const { return g == Gender::feminine ? feminine : masculine; }
};

struct RuleAlternative {
  std::vector<std::string> symbols;
  double weight = 1.0;
};

// Declarative gendered grammar used to synthesise training corpora. Rules form
// a small weighted context-free grammar over upper-case nonterminals; the
// reserved symbols NOUN, ART, ADJ, PART and REL are bound to the sentence's
// head noun so every gender-marked word agrees with it.
struct GrammarSpec {
  double masculine_ratio = 0.5;
  std::string start_symbol = "S";

  InflectedPair article;
  std::string elided_article;
  InflectedPair relative;

  std::vector<LexiconNoun> nouns;
  std::vector<InflectedPair> adjectives;
  std::vector<InflectedPair> participles;
  // Opposite-gender noun pairs (feminine, masculine) for novel-noun synthesis.
  std::vector<std::pair<std::string, std::string>> novel_pairs;

  std::map<std::string, std::vector<RuleAlternative>> rules;

  // Throws ConfigError describing the first problem found.
  void validate() const;

  // Every token whose form depends on gender (articles, inflected words,
  // relative pronouns). Nouns are not included.
  std::set<std::string> gender_marked_tokens() const;
  std::optional<Gender> gender_of_marked(std::string_view token) const;
  const LexiconNoun* find_noun(std::string_view token) const;

  static bool is_nonterminal(std::string_view symbol);
  static bool is_agreement_slot(std::string_view symbol);
};

GrammarSpec parse_grammar(std::string_view text);
GrammarSpec load_grammar(const std::filesystem::path& path);
std::string format_grammar(const GrammarSpec& spec);

// Returns n_sentences lines of space-separated tokens (no <eos>), fully
// determined by (spec, n_sentences, seed).
std::string generate_synthetic_corpus(const GrammarSpec& spec, std::size_t n_sentences,
                                      std::uint64_t seed);

}  // namespace genderlab
