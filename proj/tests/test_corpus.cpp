#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "genderlab/corpus.hpp"
#include "genderlab/error.hpp"
#include "genderlab/grammar.hpp"

using namespace genderlab;

namespace {

Sentence words(std::string_view line) {
  Sentence out;
  std::istringstream in{std::string(line)};
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

GrammarSpec default_grammar() { return load_grammar(GENDERLAB_DATA_DIR "/grammar/french_synthetic.grammar"); }

TokenizedCorpus numbered(std::size_t n) {
  TokenizedCorpus c;
  for (std::size_t i = 0; i < n; ++i) c.sentences.push_back({TokenId(2 + i), Vocabulary::kEosId});
  return c;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("Je vois la table") == std::vector<Sentence>{{"je", "vois", "la", "table", "<eos>"}});
  CHECK(tokenize("").empty());
  CHECK(tokenize("le chat, noir.") == std::vector<Sentence>{{"le", "chat", "noir", "<eos>"}});
  CHECK(tokenize_line("je vois l'arbre") == Sentence{"je", "vois", "l'", "arbre", "<eos>"});
  CHECK(tokenize_line("Élégante cuillère") == Sentence{"élégante", "cuillère", "<eos>"});
  auto multi = tokenize("a b\n\n  \nc\n");
  REQUIRE(multi.size() == 2);
  CHECK(multi[1] == Sentence{"c", "<eos>"});
}

TEST_CASE("vocabulary ordering and size") {
  auto v = Vocabulary::build({{"a", "a", "b"}}, 4);
  CHECK(v.tokens() == std::vector<std::string>{"<unk>", "<eos>", "a", "b"});
  CHECK(v.frequency(*v.find("a")) == 2);
  CHECK(v.frequency(*v.find("b")) == 1);
  CHECK(v == Vocabulary::build({{"b", "a", "a"}}, 4));

  auto tie = Vocabulary::build({{"z", "y", "x", "x"}}, 10);
  CHECK(tie.tokens() == std::vector<std::string>{"<unk>", "<eos>", "x", "y", "z"});
  CHECK(tie.least_frequent() == *tie.find("z"));

  auto cut = Vocabulary::build({{"a", "a", "a", "b", "b", "c"}}, 4);
  CHECK(cut.size() == 4);
  CHECK_FALSE(cut.find("c"));
  CHECK(cut.id("c") == cut.unk_id());
  CHECK_THROWS_AS(Vocabulary::build({{"a"}}, 1), ConfigError);
}

TEST_CASE("encode and decode round trip") {
  auto sents = tokenize("je vois la table\nle chat dort");
  auto v = Vocabulary::build(sents, 100);
  for (const auto& s : sents) CHECK(v.decode(v.encode(s)) == s);
}

TEST_CASE("unknown filter boundary") {
  Sentence known;
  for (int i = 0; i < 200; ++i) known.push_back("w" + std::to_string(i));
  auto v = Vocabulary::build({known}, 1000);

  Sentence ten(known.begin(), known.begin() + 9);
  ten.push_back("oov");
  ten.push_back("<eos>");
  CHECK(apply_unknowns_and_filter({ten}, v).empty());

  Sentence hundred(known.begin(), known.begin() + 95);
  for (int i = 0; i < 5; ++i) hundred.push_back("oov" + std::to_string(i));
  hundred.push_back("<eos>");
  auto kept = apply_unknowns_and_filter({hundred}, v);
  REQUIRE(kept.sentences.size() == 1);
  CHECK(std::count(kept.sentences[0].begin(), kept.sentences[0].end(), v.unk_id()) == 5);

  Sentence clean(known.begin(), known.begin() + 7);
  clean.push_back("<eos>");
  auto same = apply_unknowns_and_filter({clean}, v);
  REQUIRE(same.sentences.size() == 1);
  CHECK(same.sentences[0] == v.encode(clean));

  // Property: every retained sentence is within the limit.
  std::vector<Sentence> mixed;
  for (int n = 1; n < 40; ++n) {
    Sentence s(known.begin(), known.begin() + n);
    for (int u = 0; u < n % 4; ++u) s.push_back("oov");
    s.push_back("<eos>");
    mixed.push_back(s);
  }
  for (const auto& s : apply_unknowns_and_filter(mixed, v).sentences) {
    auto unk = std::count(s.begin(), s.end(), v.unk_id());
    CHECK(double(unk) / double(s.size() - 1) <= 0.05);
    CHECK(s.back() == v.eos_id());
    CHECK(std::count(s.begin(), s.end(), v.eos_id()) == 1);
  }
}

TEST_CASE("split sizes and determinism") {
  auto s10 = split_corpus(numbered(10), 3);
  CHECK(s10.train.sentences.size() == 8);
  CHECK(s10.valid.sentences.size() == 1);
  CHECK(s10.test.sentences.size() == 1);
  auto s13 = split_corpus(numbered(13), 3);
  CHECK(s13.train.sentences.size() == 11);
  CHECK(s13.valid.sentences.size() == 1);
  CHECK(s13.test.sentences.size() == 1);
  auto again = split_corpus(numbered(13), 3);
  CHECK(again.train.sentences == s13.train.sentences);
  CHECK(again.test.sentences == s13.test.sentences);
  CHECK_THROWS_AS(split_corpus(numbered(9), 3), ConfigError);
}

TEST_CASE("vocabulary and corpus files round trip") {
  auto dir = std::filesystem::temp_directory_path() / "genderlab_corpus_io";
  std::filesystem::create_directories(dir);
  auto sents = tokenize("je vois la table\nje vois l'arbre");
  auto v = Vocabulary::build(sents, 100);
  save_vocabulary(v, dir / "vocab.txt");
  CHECK(read_text_file(dir / "vocab.txt").starts_with("#V=" + std::to_string(v.size()) + "\n"));
  auto back = load_vocabulary(dir / "vocab.txt");
  CHECK(back.tokens() == v.tokens());
  auto corpus = apply_unknowns_and_filter(sents, v);
  save_corpus(corpus, dir / "c.ids");
  CHECK(load_corpus(dir / "c.ids", v.size()).sentences == corpus.sentences);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic corpus agrees, is balanced and deterministic") {
  auto g = default_grammar();
  CHECK(g.nouns.size() >= 40);
  CHECK(g.adjectives.size() >= 15);
  CHECK(g.participles.size() >= 15);

  const auto text = generate_synthetic_corpus(g, 1000, 11);
  CHECK(text == generate_synthetic_corpus(g, 1000, 11));
  CHECK(text != generate_synthetic_corpus(g, 1000, 12));

  std::size_t masculine = 0, lines = 0, violations = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    ++lines;
    const LexiconNoun* head = nullptr;
    int heads = 0;
    for (const auto& w : words(line)) {
      if (const auto* n = g.find_noun(w)) {
        head = n;
        ++heads;
      }
    }
    REQUIRE(heads <= 1);
    if (!head) {
      // Noun-free filler sentences carry no gender marking.
      for (const auto& w : words(line)) violations += g.gender_of_marked(w).has_value() || w == g.elided_article;
      continue;
    }
    if (head->gender == Gender::masculine) ++masculine;
    for (const auto& w : words(line)) {
      auto marked = g.gender_of_marked(w);
      if (marked && *marked != head->gender) ++violations;
      if (w == g.elided_article && !head->elided) ++violations;
    }
  }
  CHECK(lines == 1000);
  CHECK(violations == 0);
  CHECK(masculine >= 400);
  CHECK(masculine <= 600);

  g.masculine_ratio = 0.7;
  const auto biased = generate_synthetic_corpus(g, 1000, 11);
  double m7 = 0, headed = 0;
  std::istringstream bin(biased);
  for (std::string line; std::getline(bin, line);)
    for (const auto& w : words(line))
      if (const auto* n = g.find_noun(w)) {
        ++headed;
        m7 += n->gender == Gender::masculine;
      }
  CHECK(m7 / headed == doctest::Approx(0.7).epsilon(0.08));
}

TEST_CASE("grammar text round trip and validation") {
  auto g = default_grammar();
  auto again = parse_grammar(format_grammar(g));
  CHECK(format_grammar(again) == format_grammar(g));
  CHECK(generate_synthetic_corpus(again, 50, 1) == generate_synthetic_corpus(g, 50, 1));
  g.masculine_ratio = 1.5;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}
