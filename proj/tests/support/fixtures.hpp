#pragma once

// Small shared fixtures: the bundled grammar and stimuli, a vocabulary that
// covers every stimulus word, and tiny untrained models over it.

#include <set>
#include <string>

#include "genderlab/agreement.hpp"
#include "genderlab/grammar.hpp"
#include "genderlab/model.hpp"
#include "genderlab/wordlab.hpp"

namespace fixture {

using namespace genderlab;

inline const GrammarSpec& grammar() {
  static const GrammarSpec g = load_grammar(GENDERLAB_DATA_DIR "/grammar/french_synthetic.grammar");
  return g;
}

inline const StimulusSet& stimuli() {
  static const StimulusSet s = load_stimuli(GENDERLAB_DATA_DIR "/stimuli");
  return s;
}

inline constexpr const char* kRare = "patientons";

// Every lexicon and stimulus word appears twice, kRare once, so kRare is the
// least frequent token.
inline Vocabulary stimulus_vocab() {
  std::set<std::string> words;
  const auto& g = grammar();
  for (const auto& n : g.nouns) words.insert(n.token);
  for (const auto* list : {&g.adjectives, &g.participles}) {
    for (const auto& p : *list) words.insert({p.feminine, p.masculine});
  }
  words.insert({g.article.feminine, g.article.masculine, g.elided_article, g.relative.feminine,
                g.relative.masculine});
  const auto& s = stimuli();
  for (const auto& [c, t] : s.tests) {
    for (const auto& b : t.beginnings) words.insert(b.begin(), b.end());
    for (const auto& b : t.intervening) words.insert(b.begin(), b.end());
    for (const auto& p : t.targets) words.insert({p.feminine, p.masculine});
  }
  auto add_lines = [&](const std::vector<std::string>& lines) {
    for (const auto& line : lines)
      for (const auto& w : tokenize_line(line))
        if (w != "noun" && w != "<eos>" && w != "eos") words.insert(w);
  };
  for (const auto& [k, lines] : s.pools) add_lines(lines);
  add_lines(s.neutral);
  Sentence all;
  for (const auto& w : words) all.insert(all.end(), {w, w});
  all.push_back(kRare);
  return Vocabulary::build({all}, 1u << 20);
}

inline ModelConfig tiny_config(Arch arch, std::size_t V, int d = 8) {
  ModelConfig c;
  c.arch = arch;
  c.vocab_size = int(V);
  c.d_emb = c.d_hidden = d;
  c.n_layers = 1;
  c.n_heads = 2;
  c.seq_len = 32;
  c.dropout = 0.0;
  c.seed = 11;
  return c;
}

}  // namespace fixture
