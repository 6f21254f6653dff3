#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "genderlab/agreement.hpp"
#include "genderlab/error.hpp"
#include "genderlab/random.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace genderlab;

namespace {

const oracle::TinyLstm kTiny{{0.7, -0.4, 1.3}, {0.1, -0.2, 0.05}, 0.9, -0.6, 1.1, 0.4,
                             -0.3, 0.8, 0.5, -0.7, 0.2, 0.3, -0.1, 0.15};

std::vector<ProbeNoun> two_nouns() { return {{"table", Gender::feminine}, {"livre", Gender::masculine}}; }

}  // namespace

TEST_CASE("score_item matches a hand-written three-token LSTM") {
  const auto m = oracle::tiny_lstm_model(kTiny);
  for (const std::vector<int>& prefix :
       {std::vector<int>{1}, {1, 2}, {1, 2, 0}, {1, 0, 0, 2, 2, 1, 2}}) {
    TestItem item;
    item.prefix.assign(prefix.begin(), prefix.end());
    item.target_f = 2;
    item.target_m = 0;
    const auto expect = oracle::tiny_lstm_probs(kTiny, prefix);
    const auto got = score_item(m, item);
    CHECK(std::abs(got.p_f - expect[2]) < 1e-10);
    CHECK(std::abs(got.p_m - expect[0]) < 1e-10);
    CHECK(got.choice == choose(expect[2], expect[0]));
    const auto dist = next_token_distribution(m, std::span<const TokenId>(item.prefix));
    CHECK(std::abs(dist[0] + dist[1] + dist[2] - 1.0) < 1e-12);
  }
}

TEST_CASE("batched scoring equals one-at-a-time scoring") {
  const auto vocab = fixture::stimulus_vocab();
  const auto& tmpl = fixture::stimuli().test(Condition::C);
  auto items = build_test_suite(Condition::C, two_nouns(), tmpl, vocab);
  for (Arch arch : {Arch::lstm, Arch::transformer}) {
    const auto m = init_model<double>(fixture::tiny_config(arch, vocab.size()));
    const auto batch = score_items(m, std::span<const TestItem>(items));
    for (std::size_t i = 0; i < items.size(); i += 17) {
      const auto p = next_token_distribution(m, std::span<const TokenId>(items[i].prefix));
      CHECK(batch[i].p_f == doctest::Approx(p[items[i].target_f]).epsilon(1e-9));
      CHECK(batch[i].p_m == doctest::Approx(p[items[i].target_m]).epsilon(1e-9));
    }
  }
}

TEST_CASE("choice rule and ties") {
  CHECK(choose(0.3, 0.1) == Choice::feminine);
  CHECK(choose(0.1, 0.3) == Choice::masculine);
  CHECK(choose(0.2, 0.2) == Choice::tie);
  CHECK_FALSE(is_correct(Choice::tie, Gender::feminine));
  CHECK_FALSE(is_correct(Choice::tie, Gender::masculine));
  CHECK(is_correct(Choice::masculine, Gender::masculine));

  // Swapping the target labels flips the choice but not the larger probability.
  for (double pf : {0.01, 0.2, 0.5, 0.77}) {
    for (double pm : {0.01, 0.2, 0.5, 0.77}) {
      const auto a = choose(pf, pm), b = choose(pm, pf);
      if (a == Choice::tie) {
        CHECK(b == Choice::tie);
      } else {
        CHECK(a != b);
        CHECK(b != Choice::tie);
      }
    }
  }
}

TEST_CASE("full-sized suites and item shape") {
  const auto vocab = fixture::stimulus_vocab();
  const std::map<Condition, std::string> noun{{Condition::A, "table"},
                                              {Condition::B, "table"},
                                              {Condition::C, "assiette"},
                                              {Condition::D, "assiette"}};
  for (Condition c : kAllConditions) {
    CAPTURE(condition_code(c));
    const auto& tmpl = fixture::stimuli().test(c);
    const std::vector<ProbeNoun> one{{noun.at(c), Gender::feminine}};
    const auto items = build_test_suite(c, one, tmpl, vocab);
    CHECK(items.size() == 120);
    CHECK(items.size() == tmpl.beginnings.size() * tmpl.intervening.size() * tmpl.targets.size());
    const TokenId n = vocab.require(noun.at(c));
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& it = items[i];
      CHECK(it.id == i);
      CHECK(it.prefix.front() == vocab.eos_id());
      CHECK(std::count(it.prefix.begin(), it.prefix.end(), it.target_f) == 0);
      CHECK(std::count(it.prefix.begin(), it.prefix.end(), it.target_m) == 0);
      CHECK(std::count(it.prefix.begin(), it.prefix.end(), n) == 1);
      const auto pos = std::find(it.prefix.begin(), it.prefix.end(), n) - it.prefix.begin();
      CHECK(std::ptrdiff_t(it.prefix.size()) - 1 - pos == it.distance);
      if (it.distance == 0) CHECK(it.prefix.back() == n);
    }
  }

  SuiteOptions only3;
  only3.distances = {3};
  only3.max_beginnings = 1;
  const auto few = build_test_suite(Condition::A, two_nouns(), fixture::stimuli().test(Condition::A), vocab, only3);
  CHECK(few.size() == 2 * 15);
  for (const auto& it : few) CHECK(it.distance == 3);
}

TEST_CASE("suite construction rejects bad stimuli") {
  const auto vocab = fixture::stimulus_vocab();
  const auto& tmpl = fixture::stimuli().test(Condition::A);
  const std::vector<ProbeNoun> oov{{"ornithorynque", Gender::masculine}};
  CHECK_THROWS_AS(build_test_suite(Condition::A, oov, tmpl, vocab), StimulusError);
  const std::vector<ProbeNoun> reserved{{"<eos>", Gender::masculine}};
  CHECK_THROWS_AS(build_test_suite(Condition::A, reserved, tmpl, vocab), StimulusError);

  auto inside = parse_test_templates("[beginnings]\nje vois la\n[intervening]\n1 = verte\n[targets]\nverte vert\n");
  CHECK_THROWS_AS(build_test_suite(Condition::A, two_nouns(), inside, vocab), StimulusError);
  SuiteOptions none;
  none.distances = {9};
  CHECK_THROWS_AS(build_test_suite(Condition::A, two_nouns(), tmpl, vocab, none), StimulusError);
}

TEST_CASE("template parsing") {
  auto t = parse_test_templates(
      "# c\n[beginnings]\nje vois\n\n[intervening]\n0 =\n2 = qui est\n[targets]\nverte vert\n");
  CHECK(t.beginnings == std::vector<Sentence>{{"je", "vois"}});
  REQUIRE(t.intervening.size() == 2);
  CHECK(t.intervening[0].empty());
  CHECK(t.targets.size() == 1);
  CHECK_THROWS_AS(parse_test_templates("[beginnings]\nje\n[intervening]\n3 = qui est\n[targets]\na b\n"),
                  StimulusError);
  CHECK_THROWS_AS(parse_test_templates("[beginnings]\nje\n[targets]\na\n"), StimulusError);
  CHECK_THROWS_AS(parse_test_templates("[intervening]\n0 =\n[targets]\na b\n"), StimulusError);
  try {
    parse_test_templates("[beginnings]\nje\n[intervening]\nx = y\n[targets]\na b\n");
    FAIL("expected a parse error");
  } catch (const StimulusError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("accuracy summary") {
  std::vector<TestItem> items(6);
  std::vector<ItemScore> scores(6);
  for (int i = 0; i < 6; ++i) {
    items[i].id = std::size_t(i);
    items[i].gender = i < 3 ? Gender::feminine : Gender::masculine;
    items[i].distance = i % 2;
    scores[i].choice = items[i].gender == Gender::feminine ? Choice::feminine : Choice::masculine;
  }
  auto all = summarize_scores(items, scores);
  CHECK(all.mean_accuracy == 1.0);
  for (const auto& c : all.cells) {
    CHECK(c.accuracy == 1.0);
    CHECK(c.ci.lo == 1.0);
    CHECK(c.ci.hi == 1.0);
  }
  scores[0].choice = Choice::tie;
  scores[4].choice = Choice::feminine;
  auto r = summarize_scores(items, scores);
  CHECK(r.ties == 1);
  CHECK(r.mean_accuracy == doctest::Approx(4.0 / 6.0));
  const auto* f = r.find(Condition::A, Gender::feminine, -1);
  REQUIRE(f);
  CHECK(f->n == 3);
  CHECK(f->accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(f->ties == 1);
  CHECK(f->ci.lo <= f->accuracy);
  CHECK(f->ci.hi >= f->accuracy);
  CHECK(r.to_csv().starts_with("condition,gender,distance,n,accuracy,ci_lo,ci_hi,ties\n"));
}

TEST_CASE("random guessing stays near chance") {
  // Binomial(120, 0.5) lands in [48, 72] with probability about 0.967.
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    Rng rng(seed);
    std::vector<TestItem> items(120);
    std::vector<ItemScore> scores(120);
    for (std::size_t i = 0; i < 120; ++i) {
      items[i].gender = i % 2 ? Gender::masculine : Gender::feminine;
      scores[i].choice = rng.bernoulli(0.5) ? Choice::feminine : Choice::masculine;
    }
    const double acc = summarize_scores(items, scores, {.resamples = 10}).mean_accuracy;
    inside += acc >= 0.4 && acc <= 0.6;
  }
  CHECK(inside >= 376);
}

TEST_CASE("suite files round trip") {
  const auto vocab = fixture::stimulus_vocab();
  auto items = build_test_suite(Condition::B, two_nouns(), fixture::stimuli().test(Condition::B), vocab);
  const auto path = std::filesystem::temp_directory_path() / "genderlab_suite.tsv";
  save_suite(items, vocab, path);
  auto back = load_suite(path, vocab);
  REQUIRE(back.size() == items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(back[i].prefix == items[i].prefix);
    CHECK(back[i].target_f == items[i].target_f);
    CHECK(back[i].distance == items[i].distance);
    CHECK(back[i].gender == items[i].gender);
    CHECK(back[i].condition == Condition::B);
  }
  std::filesystem::remove(path);
}

TEST_CASE("known-noun baseline selection") {
  const auto vocab = fixture::stimulus_vocab();
  const auto& g = fixture::grammar();
  std::vector<std::uint64_t> counts(vocab.size(), 0);
  // Counts spread so the greedy pairing has something to match.
  std::uint64_t k = 60;
  for (const auto& n : g.nouns) {
    if (auto id = vocab.find(n.token)) counts[std::size_t(*id)] = (k = k * 7 % 500 + 50);
  }
  auto sets = build_known_noun_baseline(vocab, counts, g, 20, 50);
  REQUIRE(sets.feminine.size() == 20);
  REQUIRE(sets.masculine.size() == 20);
  double cf = 0, cm = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(sets.feminine[i].gender == Gender::feminine);
    CHECK(sets.masculine[i].gender == Gender::masculine);
    CHECK(counts[std::size_t(vocab.require(sets.feminine[i].token))] >= 50);
    cf += double(counts[std::size_t(vocab.require(sets.feminine[i].token))]);
    cm += double(counts[std::size_t(vocab.require(sets.masculine[i].token))]);
  }
  CHECK(cf / cm >= 0.8);
  CHECK(cf / cm <= 1.25);

  auto elided = build_known_noun_baseline(vocab, counts, g, 5, 50, NounFilter::elided);
  for (const auto& n : elided.feminine) CHECK(g.find_noun(n.token)->elided);
  CHECK_THROWS_AS(build_known_noun_baseline(vocab, counts, g, 20, 100000), ConfigError);
}

TEST_CASE("condition codes") {
  CHECK(parse_condition("c") == Condition::C);
  CHECK(condition_code(Condition::D) == 'D');
  CHECK_THROWS_AS(parse_condition("E"), ConfigError);
  CHECK(condition_info(Condition::A).learning == Construction::article_noun);
  CHECK(condition_info(Condition::A).test == Construction::noun_adjective);
  CHECK(condition_info(Condition::D).learning == Construction::noun_participle);
  CHECK(condition_info(Condition::D).test == Construction::noun_relative);
}
