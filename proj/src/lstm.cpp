#include "model_impl.hpp"

namespace genderlab::detail {

template <typename S>
Matrix<S> lstm_forward(const ModelState<S>& model, const SequenceBatch& batch,
                       const PassOptions<S>& options, LstmCache<S>& cache) {
  const ModelConfig& cfg = model.config;
  const int B = batch.batch;
  const int T = batch.length;
  const int h = cfg.d_hidden;
  const Eigen::Index N = Eigen::Index(B) * T;
  const bool drop = dropout_active(options, cfg.dropout);
  const Matrix<S>& E = model.embedding();

  Matrix<S> x(N, cfg.d_emb);
  for (Eigen::Index r = 0; r < N; ++r) x.row(r) = E.row(batch.inputs[r]);
  if (drop) {
    cache.emb_mask = dropout_mask<S>(N, cfg.d_emb, cfg.dropout, *options.rng);
    x.array() *= cache.emb_mask.array();
  } else {
    cache.emb_mask.resize(0, 0);
  }

  const int L = cfg.n_layers;
  cache.inputs.assign(L, {});
  cache.gates.assign(L, {});
  cache.cells.assign(L, {});
  cache.tanh_cells.assign(L, {});
  cache.hidden.assign(L, {});
  cache.h0.assign(L, Matrix<S>::Zero(B, h));
  cache.c0.assign(L, Matrix<S>::Zero(B, h));
  cache.out_masks.assign(L, {});

  RecurrentState<S>* state = options.state;
  if (state && !state->empty()) {
    if (int(state->h.size()) != L || state->h[0].rows() != B) {
      throw InternalError("recurrent state does not match the batch shape");
    }
    for (int l = 0; l < L; ++l) {
      cache.h0[l] = state->h[l];
      cache.c0[l] = state->c[l];
    }
  }

  cache.inputs[0] = std::move(x);
  for (int l = 0; l < L; ++l) {
    const Matrix<S>& w_ih = model.params[lstm_param(l, 0)];
    const Matrix<S>& w_hh = model.params[lstm_param(l, 1)];
    const Matrix<S>& bias = model.params[lstm_param(l, 2)];

    Matrix<S>& G = cache.gates[l];
    G.noalias() = cache.inputs[l] * w_ih.transpose();
    G.rowwise() += bias.row(0);
    Matrix<S>& C = cache.cells[l];
    Matrix<S>& TC = cache.tanh_cells[l];
    Matrix<S>& H = cache.hidden[l];
    C.resize(N, h);
    TC.resize(N, h);
    H.resize(N, h);

    for (int t = 0; t < T; ++t) {
      auto g = timestep_rows(G, B, T, t);
      if (t == 0) {
        g.noalias() += cache.h0[l] * w_hh.transpose();
      } else {
        g.noalias() += timestep_rows(H, B, T, t - 1) * w_hh.transpose();
      }
      for (int b = 0; b < B; ++b) {
        const Eigen::Index r = Eigen::Index(b) * T + t;
        S* gr = G.row(r).data();
        const S* c_prev = t == 0 ? cache.c0[l].row(b).data() : C.row(r - 1).data();
        S* c = C.row(r).data();
        S* tc = TC.row(r).data();
        S* hr = H.row(r).data();
        for (int k = 0; k < h; ++k) {
          const S i = sigmoid(gr[k]);
          const S f = sigmoid(gr[h + k]);
          const S gg = std::tanh(gr[2 * h + k]);
          const S o = sigmoid(gr[3 * h + k]);
          gr[k] = i;
          gr[h + k] = f;
          gr[2 * h + k] = gg;
          gr[3 * h + k] = o;
          c[k] = f * c_prev[k] + i * gg;
          tc[k] = std::tanh(c[k]);
          hr[k] = o * tc[k];
        }
      }
    }

    Matrix<S> out = H;
    if (drop) {
      cache.out_masks[l] = dropout_mask<S>(N, h, cfg.dropout, *options.rng);
      out.array() *= cache.out_masks[l].array();
    }
    if (l + 1 < L) {
      cache.inputs[l + 1] = std::move(out);
    } else {
      if (state) {
        state->h.assign(L, {});
        state->c.assign(L, {});
        for (int k = 0; k < L; ++k) {
          state->h[k].resize(B, h);
          state->c[k].resize(B, h);
          for (int b = 0; b < B; ++b) {
            const Eigen::Index r = Eigen::Index(b) * T + T - 1;
            state->h[k].row(b) = cache.hidden[k].row(r);
            state->c[k].row(b) = cache.cells[k].row(r);
          }
        }
      }
      return out;
    }
  }
  return {};
}

template <typename S>
void lstm_backward(const ModelState<S>& model, const SequenceBatch& batch,
                   const LstmCache<S>& cache, const Matrix<S>& d_hidden, GradientSet<S>& grads) {
  const ModelConfig& cfg = model.config;
  const int B = batch.batch;
  const int T = batch.length;
  const int h = cfg.d_hidden;
  const Eigen::Index N = Eigen::Index(B) * T;
  const bool full = grads.scope == GradScope::full;

  Matrix<S> dH = d_hidden;
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    if (cache.out_masks[l].size() > 0) dH.array() *= cache.out_masks[l].array();
    const Matrix<S>& w_ih = model.params[lstm_param(l, 0)];
    const Matrix<S>& w_hh = model.params[lstm_param(l, 1)];
    const Matrix<S>& G = cache.gates[l];
    const Matrix<S>& C = cache.cells[l];
    const Matrix<S>& TC = cache.tanh_cells[l];

    Matrix<S> dG(N, 4 * h);
    Matrix<S> dh_next = Matrix<S>::Zero(B, h);
    Matrix<S> dc_next = Matrix<S>::Zero(B, h);
    for (int t = T - 1; t >= 0; --t) {
      for (int b = 0; b < B; ++b) {
        const Eigen::Index r = Eigen::Index(b) * T + t;
        const S* g = G.row(r).data();
        const S* c_prev = t == 0 ? cache.c0[l].row(b).data() : C.row(r - 1).data();
        const S* tc = TC.row(r).data();
        const S* dh_in = dH.row(r).data();
        S* dhn = dh_next.row(b).data();
        S* dcn = dc_next.row(b).data();
        S* dg = dG.row(r).data();
        for (int k = 0; k < h; ++k) {
          const S i = g[k], f = g[h + k], gg = g[2 * h + k], o = g[3 * h + k];
          const S dh = dh_in[k] + dhn[k];
          const S dc = dcn[k] + dh * o * (S(1) - tc[k] * tc[k]);
          dg[k] = dc * gg * i * (S(1) - i);
          dg[h + k] = dc * c_prev[k] * f * (S(1) - f);
          dg[2 * h + k] = dc * i * (S(1) - gg * gg);
          dg[3 * h + k] = dh * tc[k] * o * (S(1) - o);
          dcn[k] = dc * f;
        }
      }
      dh_next.noalias() = timestep_rows(dG, B, T, t) * w_hh;
    }

    if (full) {
      Matrix<S> h_prev(N, h);
      for (int b = 0; b < B; ++b) {
        for (int t = 0; t < T; ++t) {
          const Eigen::Index r = Eigen::Index(b) * T + t;
          h_prev.row(r) = t == 0 ? cache.h0[l].row(b) : cache.hidden[l].row(r - 1);
        }
      }
      grads.tensors[lstm_param(l, 0)].noalias() += dG.transpose() * cache.inputs[l];
      grads.tensors[lstm_param(l, 1)].noalias() += dG.transpose() * h_prev;
      grads.tensors[lstm_param(l, 2)] += dG.colwise().sum();
    }
    dH.noalias() = dG * w_ih;
  }

  if (cache.emb_mask.size() > 0) dH.array() *= cache.emb_mask.array();
  Matrix<S>& dE = grads.tensors[ModelState<S>::kEmbedding];
  for (Eigen::Index r = 0; r < N; ++r) dE.row(batch.inputs[r]) += dH.row(r);
}

template Matrix<float> lstm_forward(const ModelState<float>&, const SequenceBatch&,
                                    const PassOptions<float>&, LstmCache<float>&);
template Matrix<double> lstm_forward(const ModelState<double>&, const SequenceBatch&,
                                     const PassOptions<double>&, LstmCache<double>&);
template void lstm_backward(const ModelState<float>&, const SequenceBatch&,
                            const LstmCache<float>&, const Matrix<float>&, GradientSet<float>&);
template void lstm_backward(const ModelState<double>&, const SequenceBatch&,
                            const LstmCache<double>&, const Matrix<double>&,
                            GradientSet<double>&);

}  // namespace genderlab::detail
