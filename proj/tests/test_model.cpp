#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "genderlab/error.hpp"
#include "genderlab/model.hpp"
#include "support/oracles.hpp"

using namespace genderlab;

namespace {

ModelConfig toy(Arch arch, int V = 50, int d = 16, int layers = 1, int heads = 2) {
  ModelConfig c;
  c.arch = arch;
  c.vocab_size = V;
  c.d_emb = c.d_hidden = d;
  c.n_layers = layers;
  c.n_heads = heads;
  c.seq_len = 12;
  c.dropout = 0.0;
  c.seed = 7;
  return c;
}

bool same(const ModelState<double>& a, const ModelState<double>& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i] != b.params[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("init is deterministic and validates the config") {
  auto a = init_model<double>(toy(Arch::transformer));
  auto b = init_model<double>(toy(Arch::transformer));
  CHECK(same(a, b));
  auto c = toy(Arch::transformer);
  c.seed = 8;
  CHECK_FALSE(same(a, init_model<double>(c)));

  ModelConfig big;
  big.arch = Arch::transformer;
  big.vocab_size = 42908;
  big.d_emb = big.d_hidden = 768;
  big.n_layers = 12;
  big.n_heads = 12;
  big.seq_len = 100;
  CHECK_NOTHROW(big.validate());
  ModelConfig lstm_big = big;
  lstm_big.arch = Arch::lstm;
  lstm_big.d_emb = lstm_big.d_hidden = 650;
  lstm_big.n_layers = 2;
  CHECK_NOTHROW(lstm_big.validate());

  auto bad = toy(Arch::transformer, 50, 10, 1, 3);
  CHECK_THROWS_AS(init_model<double>(bad), ConfigError);
  auto untied = toy(Arch::lstm);
  untied.d_hidden = 32;
  CHECK_THROWS_AS(untied.validate(), ConfigError);
}

TEST_CASE("next-token distribution is normalised and causal") {
  for (Arch arch : {Arch::lstm, Arch::transformer}) {
    auto m = init_model<double>(toy(arch, 50, 16, 2, 2));
    const std::vector<TokenId> prefix{1, 5, 9, 3, 17};
    const auto p = next_token_distribution(m, prefix);
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::all_of(p.begin(), p.end(), [](double v) { return v > 0.0; }));

    std::vector<TokenId> longer = prefix;
    longer.push_back(22);
    longer.push_back(4);
    const auto h_short = hidden_states(m, prefix);
    const auto h_long = hidden_states(m, longer);
    CHECK((h_long.topRows(h_short.rows()) - h_short).cwiseAbs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(next_token_distribution(m, std::vector<TokenId>{1, 50}), InputError);
    CHECK_THROWS_AS(next_token_distribution(m, std::vector<TokenId>{}), InputError);
  }
}

TEST_CASE("zeroed output path gives a uniform distribution") {
  auto m = init_model<double>(toy(Arch::transformer));
  const std::size_t lnf = m.params.size() - 2;
  m.params[lnf].setZero();
  const auto p = next_token_distribution(m, std::vector<TokenId>{1, 2, 3});
  const auto [lo, hi] = std::minmax_element(p.begin(), p.end());
  CHECK(*hi / *lo < 1.01);

  auto l = init_model<double>(toy(Arch::lstm));
  l.params[2 + 3 * 0 + 1].setZero();  // w_hh
  l.params[2].setZero();              // w_ih: hidden state stays at zero
  const auto q = next_token_distribution(l, std::vector<TokenId>{1, 2, 3});
  const auto [qlo, qhi] = std::minmax_element(q.begin(), q.end());
  CHECK(*qhi / *qlo < 1.01);
}

TEST_CASE("analytic gradients match central differences") {
  struct Case {
    ModelConfig cfg;
    const char* label;
  };
  for (const Case& c : {Case{toy(Arch::lstm, 50, 16, 1), "lstm 1 layer"},
                        Case{toy(Arch::lstm, 20, 8, 3), "lstm 3 layers"},
                        Case{toy(Arch::transformer, 50, 16, 2, 2), "transformer 2 layers"},
                        Case{toy(Arch::transformer, 20, 8, 3, 4), "transformer 3 layers"}}) {
    CAPTURE(c.label);
    auto m = init_model<double>(c.cfg);
    auto batch = oracle::random_batch(3, 6, c.cfg.vocab_size, 11);
    batch.weights[5] = 0.0f;  // one padded position
    const auto samples = oracle::finite_difference_check(m, batch, 60, 1e-4, 3);
    for (const auto& s : samples) {
      CAPTURE(s.name);
      CAPTURE(s.analytic);
      CAPTURE(s.numeric);
      CHECK(s.rel_error < 1e-3);
    }
  }
}

TEST_CASE("embedding-only gradients leave other tensors zero") {
  for (Arch arch : {Arch::lstm, Arch::transformer}) {
    auto m = init_model<double>(toy(arch, 30, 8, 2, 2));
    const auto batch = oracle::random_batch(2, 5, 30, 4);
    GradientSet<double> full, emb;
    const double l1 = loss_and_gradients(m, batch, GradScope::full, full);
    const double l2 = loss_and_gradients(m, batch, GradScope::embedding_only, emb);
    CHECK(l1 == l2);
    CHECK((full.tensors[0] - emb.tensors[0]).cwiseAbs().maxCoeff() < 1e-14);
    for (std::size_t i = 1; i < emb.tensors.size(); ++i) CHECK(emb.tensors[i].isZero(0.0));
  }
}

TEST_CASE("degenerate batches are input errors") {
  auto m = init_model<double>(toy(Arch::lstm));
  GradientSet<double> g;
  const std::vector<IdSentence> eos_only{{Vocabulary::kEosId}};
  CHECK_THROWS_AS(loss_and_gradients(m, std::span<const IdSentence>(eos_only), GradScope::full, g),
                  InputError);
  const std::vector<IdSentence> none;
  CHECK_THROWS_AS(loss_and_gradients(m, std::span<const IdSentence>(none), GradScope::full, g),
                  InputError);
}

TEST_CASE("apply_update respects scope, zero gradients and lr 0") {
  auto m = init_model<double>(toy(Arch::transformer, 30, 8, 1, 2));
  const auto before = m;
  const auto batch = oracle::random_batch(2, 5, 30, 9);
  GradientSet<double> g;
  loss_and_gradients(m, batch, GradScope::full, g);

  apply_update(m, g, 0.0);
  CHECK(same(m, before));

  auto zero = GradientSet<double>::zeros_like(m, GradScope::full);
  MomentumState<double> mom{0.9, {}};
  apply_update(m, zero, 0.5, &mom);
  CHECK(same(m, before));

  loss_and_gradients(m, batch, GradScope::embedding_only, g);
  apply_update(m, g, 0.5);
  CHECK(m.params[0] != before.params[0]);
  for (std::size_t i = 1; i < m.params.size(); ++i) CHECK(m.params[i] == before.params[i]);

  auto bad = g;
  bad.tensors.pop_back();
  CHECK_THROWS_AS(apply_update(m, bad, 0.1), InternalError);
}

TEST_CASE("momentum follows v = mu v + g, p -= lr v") {
  auto m = init_model<double>(toy(Arch::lstm, 10, 4, 1));
  auto g = GradientSet<double>::zeros_like(m, GradScope::full);
  g.tensors[0](3, 1) = 2.0;
  const double p0 = m.params[0](3, 1);
  MomentumState<double> mom{0.5, {}};
  apply_update(m, g, 0.1, &mom);
  CHECK(m.params[0](3, 1) == doctest::Approx(p0 - 0.2));
  apply_update(m, g, 0.1, &mom);  // v = 0.5 * 2 + 2 = 3
  CHECK(m.params[0](3, 1) == doctest::Approx(p0 - 0.2 - 0.3));
}

TEST_CASE("embedding rows are shared between input and output roles") {
  for (Arch arch : {Arch::lstm, Arch::transformer}) {
    auto m = init_model<double>(toy(arch, 30, 8, 2, 2));
    const TokenId r = 7;
    const std::vector<TokenId> with_r{1, 4, r, 9};
    const std::vector<TokenId> without_r{1, 4, 5, 9};
    const auto h0 = hidden_states(m, with_r);
    const auto h0b = hidden_states(m, without_r);
    const auto z0 = logits(m, without_r);

    RowVector<double> row = get_embedding_row(m, r);
    const auto other = m.params[0];
    row *= 1.5;
    row(0) += 0.3;
    set_embedding_row(m, r, row);
    CHECK(get_embedding_row(m, r) == row);
    for (int i = 0; i < 30; ++i) {
      if (i != r) CHECK(m.params[0].row(i) == other.row(i));
    }
    CHECK((hidden_states(m, with_r) - h0).cwiseAbs().maxCoeff() > 1e-6);
    CHECK((hidden_states(m, without_r) - h0b).cwiseAbs().maxCoeff() == 0.0);
    const auto z1 = logits(m, without_r);
    CHECK(std::abs(z1(3, r) - z0(3, r)) > 1e-6);
    CHECK(z1(3, 2) == z0(3, 2));

    CHECK_THROWS_AS(get_embedding_row(m, 30), InputError);
    CHECK_THROWS_AS(set_embedding_row(m, 0, RowVector<double>(RowVector<double>::Zero(3))), InputError);
  }
}

TEST_CASE("forward pass agrees with the straight-line oracle") {
  for (Arch arch : {Arch::lstm, Arch::transformer}) {
    auto m = init_model<double>(toy(arch, 12, 8, 2, 2));
    const std::vector<int> prefix{1, 3, 7, 2, 11};
    const auto expect = oracle::next_token_probs(m, prefix);
    const auto got = next_token_distribution(m, std::vector<TokenId>(prefix.begin(), prefix.end()));
    for (std::size_t v = 0; v < expect.size(); ++v) CHECK(std::abs(got[v] - expect[v]) < 1e-12);
  }
}

TEST_CASE("embedding gradient splits into input and output roles") {
  // Hand-sized model (V = 4): token 2 is absent from inputs and targets.
  for (Arch arch : {Arch::lstm, Arch::transformer}) {
    auto cfg = toy(arch, 4, 2, 1, 1);
    auto m = init_model<double>(cfg);
    const std::vector<IdSentence> sentences{{1, 0, 3, 1}};
    GradientSet<double> g;
    loss_and_gradients(m, std::span<const IdSentence>(sentences), GradScope::embedding_only, g);

    // Output role: sum over positions of (p - onehot) * h, by hand.
    const std::vector<int> inputs{1, 0, 3};
    const std::vector<int> targets{0, 3, 1};
    const auto H = oracle::hidden(m, inputs);
    oracle::Vec out_role(2, 0.0);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const auto p = oracle::softmax(oracle::logits_from_hidden(m, H[t]));
      const double coeff = (p[2] - (targets[t] == 2 ? 1.0 : 0.0)) / inputs.size();
      for (int k = 0; k < 2; ++k) out_role[k] += coeff * H[t][k];
    }
    CHECK(std::abs(out_role[0]) + std::abs(out_role[1]) > 1e-6);
    CHECK(g.tensors[0](2, 0) == doctest::Approx(out_role[0]).epsilon(1e-10));
    CHECK(g.tensors[0](2, 1) == doctest::Approx(out_role[1]).epsilon(1e-10));
  }
}
