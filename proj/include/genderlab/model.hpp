#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "genderlab/corpus.hpp"
#include "genderlab/random.hpp"

namespace genderlab {

enum class Arch { lstm, transformer };

std::string_view arch_name(Arch arch);
Arch parse_arch(std::string_view text);

struct ModelConfig {
  Arch arch = Arch::lstm;
  int vocab_size = 0;
  int d_emb = 64;
  int d_hidden = 64;
  int n_layers = 2;
  int n_heads = 4;
  int seq_len = 32;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  // Throws ConfigError naming the offending field.
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

enum class GradScope { full, embedding_only };

// Parameter layout (index into ModelState::params):
//   0 embedding [V x d] (input lookup and output projection), 1 output_bias [1 x V]
//   lstm, layer l at 2+3l: w_ih [4h x in], w_hh [4h x h], bias [1 x 4h]  (gates i,f,g,o)
//   transformer, layer l at 2+12l: ln1_g, ln1_b, w_qkv [3d x d], b_qkv, w_o, b_o,
//     ln2_g, ln2_b, w_fc [4d x d], b_fc, w_proj [d x 4d], b_proj; then lnf_g, lnf_b
template <typename S>
struct ModelState {
  ModelConfig config;
  std::vector<std::string> names;
  std::vector<Matrix<S>> params;

  static constexpr std::size_t kEmbedding = 0;
  static constexpr std::size_t kOutputBias = 1;

  Matrix<S>& embedding() { return params[kEmbedding]; }
  const Matrix<S>& embedding() const { return params[kEmbedding]; }
  Matrix<S>& output_bias() { return params[kOutputBias]; }
  const Matrix<S>& output_bias() const { return params[kOutputBias]; }

  std::size_t parameter_count() const;
  bool all_finite() const;

  template <typename T>
  ModelState<T> cast() const {
    ModelState<T> out;
    out.config = config;
    out.names = names;
    for (const auto& p : params) out.params.push_back(p.template cast<T>());
    return out;
  }
};

template <typename S>
struct GradientSet {
  GradScope scope = GradScope::full;
  // Same shapes as ModelState::params. Under embedding_only every entry but
  // the embedding stays zero.
  std::vector<Matrix<S>> tensors;

  static GradientSet zeros_like(const ModelState<S>& model, GradScope scope);
  void set_zero();
  double norm() const;
  // Rescales so the global L2 norm is at most max_norm; returns the pre-clip norm.
  double clip(double max_norm);
};

// Padded token grid, row-major over (sequence, position). weight 0 marks
// padding; loss is sum(weight * nll) / sum(weight).
struct SequenceBatch {
  int batch = 0;
  int length = 0;
  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  std::vector<float> weights;

  double weight_sum() const;
};

// Each sentence s yields inputs s[0..n-2] and targets s[1..n-1].
SequenceBatch make_sentence_batch(std::span<const IdSentence> sentences);

// LSTM (h, c) per layer, each [batch x d_hidden]; unused by the transformer.
template <typename S>
struct RecurrentState {
  std::vector<Matrix<S>> h;
  std::vector<Matrix<S>> c;

  bool empty() const { return h.empty(); }
};

template <typename S>
struct PassOptions {
  // Dropout is active only when train is set and rng is provided.
  bool train = false;
  Rng* rng = nullptr;
  // LSTM: read as the initial state (zero when empty) and overwritten with
  // the final state.
  RecurrentState<S>* state = nullptr;
};

template <typename S>
ModelState<S> init_model(const ModelConfig& config);

// Mean cross-entropy over weighted positions; gradients are written into
// grads (resized and zeroed here) for the requested scope.
template <typename S>
double loss_and_gradients(const ModelState<S>& model, const SequenceBatch& batch, GradScope scope,
                          GradientSet<S>& grads, const PassOptions<S>& options = {});

template <typename S>
double loss_and_gradients(const ModelState<S>& model, std::span<const IdSentence> sentences,
                          GradScope scope, GradientSet<S>& grads);

struct LossSum {
  double nll = 0.0;
  double weight = 0.0;
};

// Forward only: total weighted negative log-likelihood.
template <typename S>
LossSum evaluate_loss(const ModelState<S>& model, const SequenceBatch& batch,
                      const PassOptions<S>& options = {});

// Probabilities of every token after the prefix (evaluation mode).
template <typename S>
std::vector<double> next_token_distribution(const ModelState<S>& model,
                                            std::span<const TokenId> prefix);

// Final hidden representation (input to the output projection) at every
// prefix position, [prefix length x d].
template <typename S>
Matrix<S> hidden_states(const ModelState<S>& model, std::span<const TokenId> prefix);

// Logits at every prefix position, [prefix length x V].
template <typename S>
Matrix<S> logits(const ModelState<S>& model, std::span<const TokenId> prefix);

// Logits at the last position of each prefix, [prefixes x V]. Prefixes are
// run as one padded batch.
template <typename S>
Matrix<S> last_position_logits(const ModelState<S>& model, std::span<const IdSentence> prefixes);

// Velocity buffers, zero until the first update touches them.
template <typename S>
struct MomentumState {
  double momentum = 0.0;
  std::vector<Matrix<S>> buffers;
};

// SGD step p -= lr * v with v = momentum * v + g (plain gradient descent when
// momentum_state is null). Only the tensors covered by grads.scope change.
template <typename S>
void apply_update(ModelState<S>& model, const GradientSet<S>& grads, double lr,
                  MomentumState<S>* momentum_state = nullptr);

template <typename S>
RowVector<S> get_embedding_row(const ModelState<S>& model, TokenId id);
template <typename S>
void set_embedding_row(ModelState<S>& model, TokenId id, const RowVector<S>& row);

}  // namespace genderlab
