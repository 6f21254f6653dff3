#include <cmath>
#include <numbers>

#include "model_impl.hpp"

namespace genderlab::detail {
namespace {

constexpr double kLnEps = 1e-5;

template <typename S>
void layer_norm(const Matrix<S>& x, const Matrix<S>& gain, const Matrix<S>& bias, Matrix<S>& xhat,
                RowVector<S>& rstd, Matrix<S>& out) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  xhat.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const S mu = x.row(r).mean();
    const auto centred = x.row(r).array() - mu;
    const S var = centred.square().mean();
    rstd(r) = S(1) / std::sqrt(var + S(kLnEps));
    xhat.row(r) = centred * rstd(r);
  }
  out = (xhat.array().rowwise() * gain.row(0).array()).rowwise() + bias.row(0).array();
}

// Returns d(input); adds gain/bias gradients when those pointers are set.
template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& d_out, const Matrix<S>& xhat,
                              const RowVector<S>& rstd, const Matrix<S>& gain, Matrix<S>* d_gain,
                              Matrix<S>* d_bias) {
  if (d_gain) {
    d_gain->row(0) += (d_out.array() * xhat.array()).colwise().sum().matrix();
    d_bias->row(0) += d_out.colwise().sum();
  }
  const Eigen::Index d = xhat.cols();
  Matrix<S> dx(xhat.rows(), d);
  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
    const auto dxhat = (d_out.row(r).array() * gain.row(0).array()).eval();
    const S m1 = dxhat.mean();
    const S m2 = (dxhat * xhat.row(r).array()).mean();
    dx.row(r) = rstd(r) * (dxhat - m1 - xhat.row(r).array() * m2);
  }
  return dx;
}

template <typename S>
S gelu(S x) {
  const S c = S(std::sqrt(2.0 / std::numbers::pi));
  return S(0.5) * x * (S(1) + std::tanh(c * (x + S(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  const S c = S(std::sqrt(2.0 / std::numbers::pi));
  const S th = std::tanh(c * (x + S(0.044715) * x * x * x));
  return S(0.5) * (S(1) + th) +
         S(0.5) * x * (S(1) - th * th) * c * (S(1) + S(3 * 0.044715) * x * x);
}

template <typename S>
Matrix<S> positional_encoding(int length, int d) {
  Matrix<S> pe(length, d);
  for (int t = 0; t < length; ++t) {
    for (int i = 0; i < d; i += 2) {
      const double angle = t / std::pow(10000.0, double(i) / d);
      pe(t, i) = S(std::sin(angle));
      if (i + 1 < d) pe(t, i + 1) = S(std::cos(angle));
    }
  }
  return pe;
}

}  // namespace

template <typename S>
Matrix<S> transformer_forward(const ModelState<S>& model, const SequenceBatch& batch,
                              const PassOptions<S>& options, TransformerCache<S>& cache) {
  const ModelConfig& cfg = model.config;
  const int B = batch.batch;
  const int T = batch.length;
  const int d = cfg.d_emb;
  const int heads = cfg.n_heads;
  const int dh = d / heads;
  const Eigen::Index N = Eigen::Index(B) * T;
  const bool drop = dropout_active(options, cfg.dropout);
  if (T > cfg.seq_len) {
    throw InputError("sequence of length " + std::to_string(T) + " exceeds seq_len " +
                     std::to_string(cfg.seq_len));
  }

  const Matrix<S>& E = model.embedding();
  const S scale_in = S(std::sqrt(double(d)));
  const Matrix<S> pe = positional_encoding<S>(T, d);
  Matrix<S> x(N, d);
  for (int b = 0; b < B; ++b) {
    for (int t = 0; t < T; ++t) {
      const Eigen::Index r = Eigen::Index(b) * T + t;
      x.row(r) = E.row(batch.inputs[r]) * scale_in + pe.row(t);
    }
  }
  if (drop) {
    cache.emb_mask = dropout_mask<S>(N, d, cfg.dropout, *options.rng);
    x.array() *= cache.emb_mask.array();
  } else {
    cache.emb_mask.resize(0, 0);
  }

  const S att_scale = S(1.0 / std::sqrt(double(dh)));
  cache.layers.assign(cfg.n_layers, {});
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto P = [&](int k) -> const Matrix<S>& { return model.params[transformer_param(l, k)]; };
    TransformerLayerCache<S>& c = cache.layers[l];
    c.x_in = x;
    layer_norm(x, P(kLn1G), P(kLn1B), c.xhat1, c.rstd1, c.a1);
    c.qkv.noalias() = c.a1 * P(kWqkv).transpose();
    c.qkv.rowwise() += P(kBqkv).row(0);

    c.attn.resize(N, d);
    c.probs.assign(std::size_t(B) * heads, {});
    for (int b = 0; b < B; ++b) {
      for (int hd = 0; hd < heads; ++hd) {
        const auto q = c.qkv.block(Eigen::Index(b) * T, hd * dh, T, dh);
        const auto k = c.qkv.block(Eigen::Index(b) * T, d + hd * dh, T, dh);
        const auto v = c.qkv.block(Eigen::Index(b) * T, 2 * d + hd * dh, T, dh);
        Matrix<S> p = (q * k.transpose()) * att_scale;
        for (int i = 0; i < T; ++i) {
          const S mx = p.row(i).head(i + 1).maxCoeff();
          S sum = 0;
          for (int j = 0; j <= i; ++j) {
            p(i, j) = std::exp(p(i, j) - mx);
            sum += p(i, j);
          }
          for (int j = 0; j <= i; ++j) p(i, j) /= sum;
          for (int j = i + 1; j < T; ++j) p(i, j) = 0;
        }
        c.attn.block(Eigen::Index(b) * T, hd * dh, T, dh).noalias() = p * v;
        c.probs[std::size_t(b) * heads + hd] = std::move(p);
      }
    }

    Matrix<S> proj = c.attn * P(kWo).transpose();
    proj.rowwise() += P(kBo).row(0);
    if (drop) {
      c.attn_mask = dropout_mask<S>(N, d, cfg.dropout, *options.rng);
      proj.array() *= c.attn_mask.array();
    }
    c.x1 = c.x_in + proj;

    layer_norm(c.x1, P(kLn2G), P(kLn2B), c.xhat2, c.rstd2, c.a2);
    c.fc.noalias() = c.a2 * P(kWfc).transpose();
    c.fc.rowwise() += P(kBfc).row(0);
    c.act = c.fc.unaryExpr([](S v) { return gelu(v); });
    Matrix<S> y = c.act * P(kWproj).transpose();
    y.rowwise() += P(kBproj).row(0);
    if (drop) {
      c.ffn_mask = dropout_mask<S>(N, d, cfg.dropout, *options.rng);
      y.array() *= c.ffn_mask.array();
    }
    x = c.x1 + y;
  }

  const std::size_t lnf = transformer_param(cfg.n_layers, 0);
  cache.x_final = x;
  Matrix<S> out;
  layer_norm(x, model.params[lnf], model.params[lnf + 1], cache.xhat_final, cache.rstd_final, out);
  return out;
}

template <typename S>
void transformer_backward(const ModelState<S>& model, const SequenceBatch& batch,
                          const TransformerCache<S>& cache, const Matrix<S>& d_hidden,
                          GradientSet<S>& grads) {
  const ModelConfig& cfg = model.config;
  const int B = batch.batch;
  const int T = batch.length;
  const int d = cfg.d_emb;
  const int heads = cfg.n_heads;
  const int dh = d / heads;
  const Eigen::Index N = Eigen::Index(B) * T;
  const bool full = grads.scope == GradScope::full;
  auto G = [&](std::size_t i) -> Matrix<S>* { return full ? &grads.tensors[i] : nullptr; };

  const std::size_t lnf = transformer_param(cfg.n_layers, 0);
  Matrix<S> dx = layer_norm_backward(d_hidden, cache.xhat_final, cache.rstd_final,
                                     model.params[lnf], G(lnf), G(lnf + 1));

  const S att_scale = S(1.0 / std::sqrt(double(dh)));
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    auto P = [&](int k) -> const Matrix<S>& { return model.params[transformer_param(l, k)]; };
    auto GP = [&](int k) -> Matrix<S>& { return grads.tensors[transformer_param(l, k)]; };
    const TransformerLayerCache<S>& c = cache.layers[l];

    Matrix<S> dy = dx;
    if (c.ffn_mask.size() > 0) dy.array() *= c.ffn_mask.array();
    if (full) {
      GP(kWproj).noalias() += dy.transpose() * c.act;
      GP(kBproj) += dy.colwise().sum();
    }
    Matrix<S> dfc = dy * P(kWproj);
    dfc.array() *= c.fc.unaryExpr([](S v) { return gelu_grad(v); }).array();
    if (full) {
      GP(kWfc).noalias() += dfc.transpose() * c.a2;
      GP(kBfc) += dfc.colwise().sum();
    }
    const Matrix<S> da2 = dfc * P(kWfc);
    Matrix<S> dx1 = dx + layer_norm_backward(da2, c.xhat2, c.rstd2, P(kLn2G),
                                             full ? &GP(kLn2G) : nullptr,
                                             full ? &GP(kLn2B) : nullptr);

    Matrix<S> dproj = dx1;
    if (c.attn_mask.size() > 0) dproj.array() *= c.attn_mask.array();
    if (full) {
      GP(kWo).noalias() += dproj.transpose() * c.attn;
      GP(kBo) += dproj.colwise().sum();
    }
    const Matrix<S> dattn = dproj * P(kWo);

    Matrix<S> dqkv(N, 3 * d);
    for (int b = 0; b < B; ++b) {
      for (int hd = 0; hd < heads; ++hd) {
        const Eigen::Index r0 = Eigen::Index(b) * T;
        const auto q = c.qkv.block(r0, hd * dh, T, dh);
        const auto k = c.qkv.block(r0, d + hd * dh, T, dh);
        const auto v = c.qkv.block(r0, 2 * d + hd * dh, T, dh);
        const auto d_o = dattn.block(r0, hd * dh, T, dh);
        const Matrix<S>& p = c.probs[std::size_t(b) * heads + hd];
        const Matrix<S> dp = d_o * v.transpose();
        Matrix<S> ds = p.array() * (dp.array().colwise() - (dp.array() * p.array()).rowwise().sum());
        ds *= att_scale;
        dqkv.block(r0, hd * dh, T, dh).noalias() = ds * k;
        dqkv.block(r0, d + hd * dh, T, dh).noalias() = ds.transpose() * q;
        dqkv.block(r0, 2 * d + hd * dh, T, dh).noalias() = p.transpose() * d_o;
      }
    }
    if (full) {
      GP(kWqkv).noalias() += dqkv.transpose() * c.a1;
      GP(kBqkv) += dqkv.colwise().sum();
    }
    const Matrix<S> da1 = dqkv * P(kWqkv);
    dx = dx1 + layer_norm_backward(da1, c.xhat1, c.rstd1, P(kLn1G), full ? &GP(kLn1G) : nullptr,
                                   full ? &GP(kLn1B) : nullptr);
  }

  if (cache.emb_mask.size() > 0) dx.array() *= cache.emb_mask.array();
  dx *= S(std::sqrt(double(d)));
  Matrix<S>& dE = grads.tensors[ModelState<S>::kEmbedding];
  for (Eigen::Index r = 0; r < N; ++r) dE.row(batch.inputs[r]) += dx.row(r);
}

template Matrix<float> transformer_forward(const ModelState<float>&, const SequenceBatch&,
                                           const PassOptions<float>&, TransformerCache<float>&);
template Matrix<double> transformer_forward(const ModelState<double>&, const SequenceBatch&,
                                            const PassOptions<double>&,
                                            TransformerCache<double>&);
template void transformer_backward(const ModelState<float>&, const SequenceBatch&,
                                   const TransformerCache<float>&, const Matrix<float>&,
                                   GradientSet<float>&);
template void transformer_backward(const ModelState<double>&, const SequenceBatch&,
                                   const TransformerCache<double>&, const Matrix<double>&,
                                   GradientSet<double>&);

}  // namespace genderlab::detail
