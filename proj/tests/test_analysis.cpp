#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <json.hpp>

#include "genderlab/analysis.hpp"
#include "genderlab/corpus.hpp"
#include "genderlab/error.hpp"
#include "genderlab/random.hpp"

using namespace genderlab;

namespace {

Matrix<double> random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix<double> m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
  return m;
}

FewShotTrial make_trial(std::size_t spec, Condition c, Gender g, int shots, int rep, double pre, double post) {
  FewShotTrial t;
  t.model = "toy";
  t.spec_index = spec;
  t.label = "f" + std::to_string(spec) + "+m" + std::to_string(spec);
  t.condition = c;
  t.taught = g;
  t.shots = shots;
  t.rep = rep;
  t.pre_accuracy = {{-1, pre}, {0, pre}, {3, pre}};
  t.post_accuracy = {{-1, post}, {0, post}, {3, post}};
  t.top = {{5, "noun", 40.0 + shots, g == Gender::masculine ? 1.0 : -1.0},
           {7, "la", 3.0, 0.1}};
  return t;
}

std::vector<FewShotTrial> grid() {
  std::vector<FewShotTrial> out;
  for (std::size_t spec = 0; spec < 3; ++spec)
    for (Condition c : {Condition::A, Condition::C})
      for (Gender g : {Gender::feminine, Gender::masculine})
        for (int shots : {1, 5})
          for (int rep = 0; rep < 2; ++rep)
            out.push_back(make_trial(spec, c, g, shots, rep, 0.5 + 0.05 * double(spec),
                                     0.6 + 0.05 * shots + 0.01 * rep + 0.02 * double(spec)));
  return out;
}

std::size_t count_of(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("weight-change ranking") {
  const auto before = random_matrix(6, 4, 1);
  auto after = before;
  auto none = rank_all_weight_changes(before, after);
  REQUIRE(none.size() == 6);
  for (const auto& d : none) CHECK(d.percent_change == 0.0);
  CHECK(none[0].token == 0);

  after.row(4) *= 1.1;
  auto one = rank_weight_changes(before, after, 3);
  REQUIRE(one.size() == 3);
  CHECK(one[0].token == 4);
  CHECK(one[0].percent_change == doctest::Approx(10.0));
  CHECK(one[1].percent_change == 0.0);
  CHECK(one[1].token < one[2].token);

  after.row(1) += 2.0 * before.row(1);
  auto two = rank_all_weight_changes(before, after);
  CHECK(two[0].token == 1);
  CHECK(two[0].percent_change == doctest::Approx(200.0));
  CHECK(two[1].token == 4);
  for (std::size_t i = 1; i < two.size(); ++i) CHECK(two[i - 1].percent_change >= two[i].percent_change);

  auto table = rank_all_weight_changes(before, after, PercentBase::table);
  CHECK(table[0].percent_change == doctest::Approx(100.0 * two[0].delta_norm / before.norm()));

  CHECK_THROWS_AS(rank_all_weight_changes(before, random_matrix(5, 4, 2)), InputError);
}

TEST_CASE("gender-axis projection") {
  const std::vector<double> axis{3.0, 4.0};
  CHECK(project_on_gender_axis(std::vector<double>{0.6, 0.8}, axis) == doctest::Approx(1.0));
  CHECK(project_on_gender_axis(std::vector<double>{-1.2, -1.6}, axis) == doctest::Approx(-2.0));
  CHECK(project_on_gender_axis(std::vector<double>{4.0, -3.0}, axis) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK_THROWS_AS(project_on_gender_axis(std::vector<double>{1.0}, axis), InputError);
  CHECK_THROWS_AS(project_on_gender_axis(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}),
                  InputError);

  // Linearity in the delta.
  Rng rng(9);
  std::vector<double> ax(16), a(16), b(16), sum(16);
  for (int i = 0; i < 16; ++i) {
    ax[i] = rng.uniform(-1, 1);
    a[i] = rng.uniform(-1, 1);
    b[i] = rng.uniform(-1, 1);
    sum[i] = 2.0 * a[i] - b[i];
  }
  CHECK(project_on_gender_axis(sum, ax) ==
        doctest::Approx(2.0 * project_on_gender_axis(a, ax) - project_on_gender_axis(b, ax)));

  Matrix<double> table(4, 2);
  table << 0, 0, 0, 0, 1, 2, 4, 6;
  const auto axis_fm = gender_axis(table, NovelNounSpec{2, 3, 1, ""});
  CHECK(axis_fm == std::vector<double>{3.0, 4.0});
}

TEST_CASE("aggregation cells and order invariance") {
  auto trials = grid();
  const auto agg = aggregate_trials(trials);
  // (condition x gender) x (shots 0, 1, 5) x (distance all, 0, 3)
  CHECK(agg.cells.size() == 2 * 2 * 3 * 3);
  const auto* c = agg.find("toy", Condition::A, Gender::feminine, 5);
  REQUIRE(c);
  CHECK(c->n_trials == 6);
  double expect = 0.0;
  for (const auto& t : trials)
    if (t.condition == Condition::A && t.taught == Gender::feminine && t.shots == 5) expect += t.post_accuracy.at(-1);
  CHECK(c->mean_acc == doctest::Approx(expect / 6.0));
  CHECK(c->ci.lo <= c->mean_acc);
  CHECK(c->ci.hi >= c->mean_acc);
  const auto* pre = agg.find("toy", Condition::A, Gender::feminine, 0);
  REQUIRE(pre);
  CHECK(pre->n_trials == 3);
  CHECK(pre->mean_acc == doctest::Approx(0.55));

  std::reverse(trials.begin(), trials.end());
  Rng rng(3);
  rng.shuffle(trials);
  CHECK(aggregate_to_csv(aggregate_trials(trials)) == aggregate_to_csv(agg));

  // Partition consistency: the pooled cell over two halves equals the
  // size-weighted mean of the halves.
  std::vector<FewShotTrial> first, second;
  for (const auto& t : grid()) (t.spec_index == 0 ? first : second).push_back(t);
  const auto a1 = aggregate_trials(first), a2 = aggregate_trials(second);
  const auto *h1 = a1.find("toy", Condition::C, Gender::masculine, 1), *h2 = a2.find("toy", Condition::C, Gender::masculine, 1);
  const auto* all = agg.find("toy", Condition::C, Gender::masculine, 1);
  CHECK(all->mean_acc == doctest::Approx((h1->mean_acc * double(h1->n_trials) + h2->mean_acc * double(h2->n_trials)) /
                                         double(h1->n_trials + h2->n_trials)));
}

TEST_CASE("aggregation edge cases") {
  std::vector<FewShotTrial> one{make_trial(0, Condition::B, Gender::masculine, 3, 0, 0.4, 0.75)};
  const auto agg = aggregate_trials(one);
  const auto* c = agg.find("toy", Condition::B, Gender::masculine, 3);
  REQUIRE(c);
  CHECK(c->mean_acc == 0.75);
  CHECK(c->ci.lo == 0.75);
  CHECK(c->ci.hi == 0.75);

  auto dup = grid();
  dup.push_back(dup.front());
  CHECK_THROWS_AS(aggregate_trials(dup), InputError);

  auto controls = grid();
  auto ctl = make_trial(0, Condition::A, Gender::feminine, 1, 0, 0.5, 0.5);
  ctl.control = true;
  controls.push_back(ctl);
  CHECK(aggregate_to_csv(aggregate_trials(controls)) == aggregate_to_csv(aggregate_trials(grid())));
}

TEST_CASE("report files") {
  const auto trials = grid();
  const auto agg = aggregate_trials(trials);
  const auto deltas = collect_deltas(trials);
  CHECK(deltas.size() == trials.size() * 2);

  const auto csv = aggregate_to_csv(agg);
  CHECK(std::size_t(std::count(csv.begin(), csv.end(), '\n')) == agg.cells.size() + 1);
  CHECK(csv.starts_with("model,condition,taught_gender,shots,distance,n_trials,mean_acc,ci_lo,ci_hi\n"));
  const auto gap = gender_gap_csv(agg);
  CHECK(gap.starts_with("model,condition,shots,acc_f,acc_m,gap\n"));
  CHECK(std::size_t(std::count(gap.begin(), gap.end(), '\n')) == 1 + 2 * 3);

  const auto dir = std::filesystem::temp_directory_path() / "genderlab_report";
  std::filesystem::remove_all(dir);
  emit_report(agg, deltas, dir / "a");
  emit_report(agg, deltas, dir / "b");
  for (const char* f : {"aggregate.csv", "gender_gap.csv", "deltas.csv", "learning_curves.svg",
                        "weight_change_heatmap.svg", "summary.json"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(dir / "a" / f));
    CHECK(read_text_file(dir / "a" / f) == read_text_file(dir / "b" / f));
  }
  const auto svg = read_text_file(dir / "a" / "learning_curves.svg");
  // One mean series per taught gender per condition.
  CHECK(count_of(svg, "class=\"series\"") == 2 * 2);
  CHECK(count_of(svg, "data-condition=\"C\" data-gender=\"M\"") == 1);

  emit_report(agg, {}, dir / "empty");
  CHECK_FALSE(std::filesystem::exists(dir / "empty" / "weight_change_heatmap.svg"));
  const auto summary = nlohmann::json::parse(read_text_file(dir / "empty" / "summary.json"));
  CHECK(summary["heatmap"].get<std::string>().starts_with("omitted"));

  std::vector<SweepPoint> sweep{{0.1, agg}, {1.0, agg}};
  emit_sweep_report(sweep, dir / "sweep");
  CHECK(count_of(read_text_file(dir / "sweep" / "lr_sweep.svg"), "class=\"series\"") >= 2);
  std::filesystem::remove_all(dir);
}
