#include <algorithm>
#include <cmath>
#include <string>

#include "model_impl.hpp"

namespace genderlab {

std::string_view arch_name(Arch arch) { return arch == Arch::lstm ? "lstm" : "transformer"; }

Arch parse_arch(std::string_view text) {
  if (text == "lstm") return Arch::lstm;
  if (text == "transformer") return Arch::transformer;
  throw ConfigError("arch: expected lstm or transformer, got '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (vocab_size < int(Vocabulary::kReservedCount)) fail("vocab_size must be at least 2");
  if (d_emb <= 0 || d_hidden <= 0) fail("d_emb and d_hidden must be positive");
  if (n_layers <= 0) fail("n_layers must be positive");
  if (seq_len <= 0) fail("seq_len must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
  if (d_emb != d_hidden) fail("d_emb must equal d_hidden (tied embedding)");
  if (arch == Arch::transformer) {
    if (n_heads <= 0) fail("n_heads must be positive");
    if (d_emb % n_heads != 0) {
      fail("d_emb " + std::to_string(d_emb) + " is not divisible by n_heads " +
           std::to_string(n_heads));
    }
  }
}

double SequenceBatch::weight_sum() const {
  double s = 0.0;
  for (float w : weights) s += w;
  return s;
}

SequenceBatch make_sentence_batch(std::span<const IdSentence> sentences) {
  SequenceBatch batch;
  batch.batch = int(sentences.size());
  for (const auto& s : sentences) batch.length = std::max<int>(batch.length, int(s.size()) - 1);
  batch.length = std::max(batch.length, 1);
  const std::size_t n = std::size_t(batch.batch) * batch.length;
  batch.inputs.assign(n, Vocabulary::kEosId);
  batch.targets.assign(n, Vocabulary::kEosId);
  batch.weights.assign(n, 0.0f);
  for (int b = 0; b < batch.batch; ++b) {
    const IdSentence& s = sentences[b];
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      const std::size_t r = std::size_t(b) * batch.length + t;
      batch.inputs[r] = s[t];
      batch.targets[r] = s[t + 1];
      batch.weights[r] = 1.0f;
    }
    if (s.size() == 1) batch.inputs[std::size_t(b) * batch.length] = s[0];
  }
  return batch;
}

template <typename S>
std::size_t ModelState<S>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += std::size_t(p.size());
  return n;
}

template <typename S>
bool ModelState<S>::all_finite() const {
  return std::all_of(params.begin(), params.end(), [](const Matrix<S>& p) { return p.allFinite(); });
}

template <typename S>
GradientSet<S> GradientSet<S>::zeros_like(const ModelState<S>& model, GradScope scope) {
  GradientSet g;
  g.scope = scope;
  for (const auto& p : model.params) g.tensors.push_back(Matrix<S>::Zero(p.rows(), p.cols()));
  return g;
}

template <typename S>
void GradientSet<S>::set_zero() {
  for (auto& t : tensors) t.setZero();
}

template <typename S>
double GradientSet<S>::norm() const {
  double sq = 0.0;
  for (const auto& t : tensors) sq += double(t.squaredNorm());
  return std::sqrt(sq);
}

template <typename S>
double GradientSet<S>::clip(double max_norm) {
  const double n = norm();
  if (max_norm > 0.0 && n > max_norm) {
    const S f = S(max_norm / (n + 1e-12));
    for (auto& t : tensors) t *= f;
  }
  return n;
}

namespace {

template <typename S>
void add_param(ModelState<S>& m, std::string name, Eigen::Index rows, Eigen::Index cols) {
  m.names.push_back(std::move(name));
  m.params.push_back(Matrix<S>::Zero(rows, cols));
}

template <typename S>
void fill_uniform(Matrix<S>& m, double bound, Rng& rng) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = S(rng.uniform(-bound, bound));
}

template <typename S>
struct Pass {
  detail::LstmCache<S> lstm;
  detail::TransformerCache<S> transformer;
};

void check_batch(const ModelConfig& cfg, const SequenceBatch& batch) {
  const std::size_t n = std::size_t(batch.batch) * std::size_t(batch.length);
  if (batch.batch <= 0 || batch.length <= 0) throw InputError("empty batch");
  if (batch.inputs.size() != n || batch.targets.size() != n || batch.weights.size() != n) {
    throw InternalError("batch arrays do not match batch x length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (TokenId id : {batch.inputs[i], batch.targets[i]}) {
      if (id < 0 || id >= cfg.vocab_size) {
        throw InputError("token id " + std::to_string(id) + " out of range for V=" +
                         std::to_string(cfg.vocab_size));
      }
    }
  }
}

template <typename S>
Matrix<S> forward(const ModelState<S>& model, const SequenceBatch& batch,
                  const PassOptions<S>& options, Pass<S>& pass) {
  check_batch(model.config, batch);
  if (model.config.arch == Arch::lstm) {
    return detail::lstm_forward(model, batch, options, pass.lstm);
  }
  return detail::transformer_forward(model, batch, options, pass.transformer);
}

template <typename S>
void backward(const ModelState<S>& model, const SequenceBatch& batch, const Pass<S>& pass,
              const Matrix<S>& d_hidden, GradientSet<S>& grads) {
  if (model.config.arch == Arch::lstm) {
    detail::lstm_backward(model, batch, pass.lstm, d_hidden, grads);
  } else {
    detail::transformer_backward(model, batch, pass.transformer, d_hidden, grads);
  }
}

// Tied output projection plus softmax cross-entropy. With grads set, also
// returns d(hidden) and adds the output-role embedding gradient.
template <typename S>
double output_head(const ModelState<S>& model, const Matrix<S>& hidden, const SequenceBatch& batch,
                   double weight_sum, GradientSet<S>* grads, Matrix<S>* d_hidden) {
  const Matrix<S>& E = model.embedding();
  Matrix<S> z = hidden * E.transpose();
  z.rowwise() += model.output_bias().row(0);
  double nll = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const float w = batch.weights[r];
    if (w == 0.0f) {
      if (grads) z.row(r).setZero();
      continue;
    }
    const S mx = z.row(r).maxCoeff();
    const S lse = mx + std::log((z.row(r).array() - mx).exp().sum());
    const TokenId target = batch.targets[r];
    nll += double(w) * double(lse - z(r, target));
    if (grads) {
      z.row(r) = (z.row(r).array() - lse).exp();
      z(r, target) -= S(1);
      z.row(r) *= S(double(w) / weight_sum);
    }
  }
  if (grads) {
    *d_hidden = z * E;
    grads->tensors[ModelState<S>::kEmbedding].noalias() += z.transpose() * hidden;
    if (grads->scope == GradScope::full) {
      grads->tensors[ModelState<S>::kOutputBias] += z.colwise().sum();
    }
  }
  return nll;
}

SequenceBatch prefix_batch(const ModelConfig& cfg, std::span<const TokenId> prefix) {
  if (prefix.empty()) throw InputError("empty prefix");
  if (cfg.arch == Arch::transformer && int(prefix.size()) > cfg.seq_len) {
    throw InputError("prefix of length " + std::to_string(prefix.size()) + " exceeds seq_len " +
                     std::to_string(cfg.seq_len));
  }
  SequenceBatch batch;
  batch.batch = 1;
  batch.length = int(prefix.size());
  batch.inputs.assign(prefix.begin(), prefix.end());
  batch.targets.assign(prefix.size(), Vocabulary::kEosId);
  batch.weights.assign(prefix.size(), 0.0f);
  return batch;
}

}  // namespace

template <typename S>
ModelState<S> init_model(const ModelConfig& config) {
  config.validate();
  ModelState<S> m;
  m.config = config;
  const int V = config.vocab_size;
  const int d = config.d_emb;
  add_param(m, "embedding", V, d);
  add_param(m, "output_bias", 1, V);
  if (config.arch == Arch::lstm) {
    const int h = config.d_hidden;
    for (int l = 0; l < config.n_layers; ++l) {
      const std::string p = "lstm." + std::to_string(l) + ".";
      add_param(m, p + "w_ih", 4 * h, l == 0 ? d : h);
      add_param(m, p + "w_hh", 4 * h, h);
      add_param(m, p + "bias", 1, 4 * h);
    }
  } else {
    for (int l = 0; l < config.n_layers; ++l) {
      const std::string p = "block." + std::to_string(l) + ".";
      add_param(m, p + "ln1_g", 1, d);
      add_param(m, p + "ln1_b", 1, d);
      add_param(m, p + "w_qkv", 3 * d, d);
      add_param(m, p + "b_qkv", 1, 3 * d);
      add_param(m, p + "w_o", d, d);
      add_param(m, p + "b_o", 1, d);
      add_param(m, p + "ln2_g", 1, d);
      add_param(m, p + "ln2_b", 1, d);
      add_param(m, p + "w_fc", 4 * d, d);
      add_param(m, p + "b_fc", 1, 4 * d);
      add_param(m, p + "w_proj", d, 4 * d);
      add_param(m, p + "b_proj", 1, d);
    }
    add_param(m, "lnf_g", 1, d);
    add_param(m, "lnf_b", 1, d);
  }

  Rng rng(mix_seed(config.seed, {0x1417}));
  fill_uniform(m.embedding(), 0.1, rng);
  for (std::size_t i = 2; i < m.params.size(); ++i) {
    Matrix<S>& p = m.params[i];
    const std::string& name = m.names[i];
    if (name.ends_with("_g")) {
      p.setOnes();
    } else if (p.rows() > 1) {
      fill_uniform(p, 1.0 / std::sqrt(double(p.cols())), rng);
    }
  }
  return m;
}

template <typename S>
double loss_and_gradients(const ModelState<S>& model, const SequenceBatch& batch, GradScope scope,
                          GradientSet<S>& grads, const PassOptions<S>& options) {
  const double wsum = batch.weight_sum();
  if (!(wsum > 0.0)) throw InputError("batch has no predictable positions");
  if (grads.tensors.size() != model.params.size()) {
    grads = GradientSet<S>::zeros_like(model, scope);
  } else {
    grads.scope = scope;
    grads.set_zero();
  }
  Pass<S> pass;
  const Matrix<S> hidden = forward(model, batch, options, pass);
  Matrix<S> d_hidden;
  const double nll = output_head(model, hidden, batch, wsum, &grads, &d_hidden);
  backward(model, batch, pass, d_hidden, grads);
  return nll / wsum;
}

template <typename S>
double loss_and_gradients(const ModelState<S>& model, std::span<const IdSentence> sentences,
                          GradScope scope, GradientSet<S>& grads) {
  if (sentences.empty()) throw InputError("empty batch");
  return loss_and_gradients(model, make_sentence_batch(sentences), scope, grads);
}

template <typename S>
LossSum evaluate_loss(const ModelState<S>& model, const SequenceBatch& batch,
                      const PassOptions<S>& options) {
  Pass<S> pass;
  const Matrix<S> hidden = forward(model, batch, options, pass);
  LossSum out;
  out.weight = batch.weight_sum();
  out.nll = output_head<S>(model, hidden, batch, out.weight, nullptr, nullptr);
  return out;
}

template <typename S>
Matrix<S> hidden_states(const ModelState<S>& model, std::span<const TokenId> prefix) {
  const SequenceBatch batch = prefix_batch(model.config, prefix);
  Pass<S> pass;
  return forward(model, batch, PassOptions<S>{}, pass);
}

template <typename S>
Matrix<S> logits(const ModelState<S>& model, std::span<const TokenId> prefix) {
  Matrix<S> z = hidden_states(model, prefix) * model.embedding().transpose();
  z.rowwise() += model.output_bias().row(0);
  return z;
}

template <typename S>
Matrix<S> last_position_logits(const ModelState<S>& model, std::span<const IdSentence> prefixes) {
  if (prefixes.empty()) return Matrix<S>(0, model.config.vocab_size);
  SequenceBatch batch;
  batch.batch = int(prefixes.size());
  for (const auto& p : prefixes) {
    if (p.empty()) throw InputError("empty prefix");
    batch.length = std::max(batch.length, int(p.size()));
  }
  if (model.config.arch == Arch::transformer && batch.length > model.config.seq_len) {
    throw InputError("prefix of length " + std::to_string(batch.length) + " exceeds seq_len " +
                     std::to_string(model.config.seq_len));
  }
  const std::size_t n = std::size_t(batch.batch) * batch.length;
  batch.inputs.assign(n, Vocabulary::kEosId);
  batch.targets.assign(n, Vocabulary::kEosId);
  batch.weights.assign(n, 0.0f);
  for (int b = 0; b < batch.batch; ++b) {
    std::copy(prefixes[b].begin(), prefixes[b].end(),
              batch.inputs.begin() + std::ptrdiff_t(b) * batch.length);
  }
  Pass<S> pass;
  const Matrix<S> hidden = forward(model, batch, PassOptions<S>{}, pass);
  Matrix<S> last(batch.batch, hidden.cols());
  for (int b = 0; b < batch.batch; ++b) {
    last.row(b) = hidden.row(Eigen::Index(b) * batch.length + Eigen::Index(prefixes[b].size()) - 1);
  }
  Matrix<S> z = last * model.embedding().transpose();
  z.rowwise() += model.output_bias().row(0);
  return z;
}

template <typename S>
std::vector<double> next_token_distribution(const ModelState<S>& model,
                                            std::span<const TokenId> prefix) {
  const Matrix<S> h = hidden_states(model, prefix);
  const auto last = h.row(h.rows() - 1).template cast<double>();
  Eigen::RowVectorXd z = last * model.embedding().template cast<double>().transpose();
  z += model.output_bias().row(0).template cast<double>();
  const double mx = z.maxCoeff();
  Eigen::RowVectorXd p = (z.array() - mx).exp();
  p /= p.sum();
  return std::vector<double>(p.data(), p.data() + p.size());
}

template <typename S>
void apply_update(ModelState<S>& model, const GradientSet<S>& grads, double lr,
                  MomentumState<S>* momentum_state) {
  if (grads.tensors.size() != model.params.size()) {
    throw InternalError("gradient set does not match model parameters");
  }
  for (std::size_t i = 0; i < model.params.size(); ++i) {
    if (grads.tensors[i].rows() != model.params[i].rows() ||
        grads.tensors[i].cols() != model.params[i].cols()) {
      throw InternalError("gradient shape mismatch for " + model.names[i]);
    }
  }
  const std::size_t n_update = grads.scope == GradScope::full ? model.params.size() : 1;
  const bool use_momentum = momentum_state != nullptr && momentum_state->momentum != 0.0;
  if (use_momentum && momentum_state->buffers.size() != model.params.size()) {
    momentum_state->buffers.clear();
    for (const auto& p : model.params) {
      momentum_state->buffers.push_back(Matrix<S>::Zero(p.rows(), p.cols()));
    }
  }
  const S step = S(lr);
  for (std::size_t i = 0; i < n_update; ++i) {
    if (use_momentum) {
      Matrix<S>& v = momentum_state->buffers[i];
      v = S(momentum_state->momentum) * v + grads.tensors[i];
      if (lr != 0.0) model.params[i] -= step * v;
    } else if (lr != 0.0) {
      model.params[i] -= step * grads.tensors[i];
    }
  }
}

template <typename S>
RowVector<S> get_embedding_row(const ModelState<S>& model, TokenId id) {
  if (id < 0 || id >= model.config.vocab_size) {
    throw InputError("embedding row " + std::to_string(id) + " out of range");
  }
  return model.embedding().row(id);
}

template <typename S>
void set_embedding_row(ModelState<S>& model, TokenId id, const RowVector<S>& row) {
  if (id < 0 || id >= model.config.vocab_size) {
    throw InputError("embedding row " + std::to_string(id) + " out of range");
  }
  if (row.size() != model.config.d_emb) {
    throw InputError("embedding row has length " + std::to_string(row.size()) + ", expected " +
                     std::to_string(model.config.d_emb));
  }
  model.embedding().row(id) = row;
}

#define GENDERLAB_INSTANTIATE(S)                                                                  \
  template struct ModelState<S>;                                                                  \
  template struct GradientSet<S>;                                                                 \
  template ModelState<S> init_model<S>(const ModelConfig&);                                       \
  template double loss_and_gradients(const ModelState<S>&, const SequenceBatch&, GradScope,       \
                                     GradientSet<S>&, const PassOptions<S>&);                     \
  template double loss_and_gradients(const ModelState<S>&, std::span<const IdSentence>,           \
                                     GradScope, GradientSet<S>&);                                 \
  template LossSum evaluate_loss(const ModelState<S>&, const SequenceBatch&,                      \
                                 const PassOptions<S>&);                                          \
  template Matrix<S> hidden_states(const ModelState<S>&, std::span<const TokenId>);               \
  template Matrix<S> logits(const ModelState<S>&, std::span<const TokenId>);                      \
  template Matrix<S> last_position_logits(const ModelState<S>&, std::span<const IdSentence>);     \
  template std::vector<double> next_token_distribution(const ModelState<S>&,                      \
                                                       std::span<const TokenId>);                 \
  template void apply_update(ModelState<S>&, const GradientSet<S>&, double, MomentumState<S>*);   \
  template RowVector<S> get_embedding_row(const ModelState<S>&, TokenId);                         \
  template void set_embedding_row(ModelState<S>&, TokenId, const RowVector<S>&);

GENDERLAB_INSTANTIATE(float)
GENDERLAB_INSTANTIATE(double)

#undef GENDERLAB_INSTANTIATE

}  // namespace genderlab
