#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "genderlab/error.hpp"
#include "genderlab/model.hpp"

namespace genderlab::detail {

// Rows {b * T + t : b < B} of a batch-major [B*T x cols] matrix.
template <typename S>
using StridedRows = Eigen::Map<Matrix<S>, 0, Eigen::OuterStride<>>;

template <typename S>
StridedRows<S> timestep_rows(Matrix<S>& m, int batch, int length, int t) {
  return StridedRows<S>(m.data() + Eigen::Index(t) * m.cols(), batch, m.cols(),
                        Eigen::OuterStride<>(Eigen::Index(length) * m.cols()));
}

template <typename S>
bool dropout_active(const PassOptions<S>& options, double p) {
  return options.train && options.rng != nullptr && p > 0.0;
}

// Inverted dropout: entries are 0 or 1/(1-p).
template <typename S>
Matrix<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Matrix<S> mask(rows, cols);
  const S keep = S(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < p ? S(0) : keep;
  }
  return mask;
}

template <typename S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
struct LstmCache {
  Matrix<S> emb_mask;
  std::vector<Matrix<S>> inputs;  // layer inputs, inputs[0] is the embedded batch
  std::vector<Matrix<S>> gates;   // activated i, f, g, o
  std::vector<Matrix<S>> cells;
  std::vector<Matrix<S>> tanh_cells;
  std::vector<Matrix<S>> hidden;
  std::vector<Matrix<S>> h0, c0;
  std::vector<Matrix<S>> out_masks;  // dropout applied to each layer's output
};

template <typename S>
struct TransformerLayerCache {
  Matrix<S> x_in;
  Matrix<S> xhat1, a1;
  RowVector<S> rstd1;
  Matrix<S> qkv;
  std::vector<Matrix<S>> probs;  // per (sequence, head), [T x T]
  Matrix<S> attn;                // concatenated head outputs
  Matrix<S> attn_mask;
  Matrix<S> x1;
  Matrix<S> xhat2, a2;
  RowVector<S> rstd2;
  Matrix<S> fc;  // pre-activation
  Matrix<S> act;
  Matrix<S> ffn_mask;
};

template <typename S>
struct TransformerCache {
  Matrix<S> emb_mask;
  std::vector<TransformerLayerCache<S>> layers;
  Matrix<S> x_final, xhat_final;
  RowVector<S> rstd_final;
};

// Both return the final hidden matrix [B*T x d] that feeds the output
// projection. Backward adds into grads: the input-role embedding gradient
// always, weight gradients only under full scope.
template <typename S>
Matrix<S> lstm_forward(const ModelState<S>& model, const SequenceBatch& batch,
                       const PassOptions<S>& options, LstmCache<S>& cache);
template <typename S>
void lstm_backward(const ModelState<S>& model, const SequenceBatch& batch,
                   const LstmCache<S>& cache, const Matrix<S>& d_hidden, GradientSet<S>& grads);

template <typename S>
Matrix<S> transformer_forward(const ModelState<S>& model, const SequenceBatch& batch,
                              const PassOptions<S>& options, TransformerCache<S>& cache);
template <typename S>
void transformer_backward(const ModelState<S>& model, const SequenceBatch& batch,
                          const TransformerCache<S>& cache, const Matrix<S>& d_hidden,
                          GradientSet<S>& grads);

inline std::size_t lstm_param(int layer, int k) { return 2 + 3 * std::size_t(layer) + k; }
inline std::size_t transformer_param(int layer, int k) { return 2 + 12 * std::size_t(layer) + k; }

enum TransformerSlot {
  kLn1G,
  kLn1B,
  kWqkv,
  kBqkv,
  kWo,
  kBo,
  kLn2G,
  kLn2B,
  kWfc,
  kBfc,
  kWproj,
  kBproj
};

}  // namespace genderlab::detail
