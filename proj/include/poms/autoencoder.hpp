#pragma once

// Latent models over policy-parameter vectors: a symmetric one-hidden-layer
// autoencoder (ELU hidden units, linear bottleneck and output) trained with
// Adam on mean squared reconstruction error, and a linear PCA alternative.
// Both expose encode / decode / decoder_jacobian so search code can treat
// them uniformly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "poms/errors.hpp"
#include "poms/numkit.hpp"
#include "poms/rng.hpp"

namespace poms {

inline double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }

// ELU derivative recovered from the activation value: for x < 0 the
// activation is e^x - 1, so the derivative e^x equals activation + 1.
inline double elu_prime_from_value(double a) { return a >= 0.0 ? 1.0 : a + 1.0; }

struct AeParams {
  std::size_t input_dim = 0;   // P
  std::size_t hidden_dim = 0;  // HD
  std::size_t latent_dim = 0;  // M

  // Affine layers store weights as (fan_out x fan_in), row-major.
  Matrix enc_w1, dec_w1;  // (HD x P), (HD x M)
  Matrix enc_w2, dec_w2;  // (M x HD), (P x HD)
  std::vector<double> enc_b1, enc_b2, dec_b1, dec_b2;
};

inline AeParams init_ae_glorot(std::size_t input_dim, std::size_t hidden_dim,
                               std::size_t latent_dim, Rng& rng) {
  AeParams ae;
  ae.input_dim = input_dim;
  ae.hidden_dim = hidden_dim;
  ae.latent_dim = latent_dim;
  auto fill = [&rng](Matrix& w, std::size_t out, std::size_t in) {
    w = Matrix(out, in);
    const double sd = std::sqrt(2.0 / static_cast<double>(in + out));
    for (auto& v : w.data) v = sd * rng.normal();
  };
  fill(ae.enc_w1, hidden_dim, input_dim);
  fill(ae.enc_w2, latent_dim, hidden_dim);
  fill(ae.dec_w1, hidden_dim, latent_dim);
  fill(ae.dec_w2, input_dim, hidden_dim);
  ae.enc_b1.assign(hidden_dim, 0.0);
  ae.enc_b2.assign(latent_dim, 0.0);
  ae.dec_b1.assign(hidden_dim, 0.0);
  ae.dec_b2.assign(input_dim, 0.0);
  return ae;
}

// ---------------------------------------------------------------------------
// Latent model: tagged union of the two model families.

enum class LatentKind { nonlinear_ae, linear_pca };

struct LatentModel {
  LatentKind kind = LatentKind::nonlinear_ae;
  AeParams ae;    // valid when kind == nonlinear_ae
  PcaResult pca;  // valid when kind == linear_pca

  std::size_t param_dim() const {
    return kind == LatentKind::nonlinear_ae ? ae.input_dim : pca.components.rows;
  }
  std::size_t latent_dim() const {
    return kind == LatentKind::nonlinear_ae ? ae.latent_dim : pca.components.cols;
  }
};

inline LatentModel make_ae_model(AeParams ae) {
  LatentModel m;
  m.kind = LatentKind::nonlinear_ae;
  m.ae = std::move(ae);
  return m;
}

inline LatentModel make_pca_model(PcaResult pca) {
  LatentModel m;
  m.kind = LatentKind::linear_pca;
  m.pca = std::move(pca);
  return m;
}

namespace detail {

// y[b] = W x[b] + bias for every row of x; W is (O x I) row-major.
inline void linear_forward(const Matrix& x, const Matrix& w, std::span<const double> bias,
                           Matrix& y) {
  y = Matrix(x.rows, w.rows);
  for (std::size_t b = 0; b < x.rows; ++b) {
    const double* xb = x.row(b);
    double* yb = y.row(b);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double* wo = w.row(o);
      double acc = bias[o];
      for (std::size_t i = 0; i < w.cols; ++i) acc += wo[i] * xb[i];
      yb[o] = acc;
    }
  }
}

inline void elu_inplace(Matrix& m) {
  for (auto& v : m.data) v = elu(v);
}

// dW += dY^T X and db += column sums of dY.
inline void accumulate_affine_grads(const Matrix& dy, const Matrix& x, Matrix& dw,
                                    std::vector<double>& db) {
  for (std::size_t b = 0; b < dy.rows; ++b) {
    const double* dyb = dy.row(b);
    const double* xb = x.row(b);
    for (std::size_t o = 0; o < dy.cols; ++o) {
      const double g = dyb[o];
      if (g == 0.0) continue;
      double* dwo = dw.row(o);
      for (std::size_t i = 0; i < x.cols; ++i) dwo[i] += g * xb[i];
      db[o] += g;
    }
  }
}

// dX = dY W, with W (O x I).
inline void input_grad(const Matrix& dy, const Matrix& w, Matrix& dx) {
  dx = Matrix(dy.rows, w.cols);
  for (std::size_t b = 0; b < dy.rows; ++b) {
    const double* dyb = dy.row(b);
    double* dxb = dx.row(b);
    for (std::size_t o = 0; o < dy.cols; ++o) {
      const double g = dyb[o];
      if (g == 0.0) continue;
      const double* wo = w.row(o);
      for (std::size_t i = 0; i < w.cols; ++i) dxb[i] += g * wo[i];
    }
  }
}

struct AeActivations {
  Matrix a1;    // elu(enc layer 1), B x HD
  Matrix z;     // latent codes, B x M
  Matrix a3;    // elu(dec layer 1), B x HD
  Matrix xhat;  // reconstructions, B x P
};

inline void ae_forward(const AeParams& ae, const Matrix& x, AeActivations& act) {
  linear_forward(x, ae.enc_w1, ae.enc_b1, act.a1);
  elu_inplace(act.a1);
  linear_forward(act.a1, ae.enc_w2, ae.enc_b2, act.z);
  linear_forward(act.z, ae.dec_w1, ae.dec_b1, act.a3);
  elu_inplace(act.a3);
  linear_forward(act.a3, ae.dec_w2, ae.dec_b2, act.xhat);
}

// Mean over rows of the squared reconstruction error ||x - xhat||^2.
inline double mean_sq_error(const Matrix& x, const Matrix& xhat) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.data.size(); ++k) {
    const double d = x.data[k] - xhat.data[k];
    s += d * d;
  }
  return s / static_cast<double>(x.rows);
}

// The eight parameter tensors of an autoencoder, in a fixed order shared by
// the optimizer state and the checkpoint format.
inline std::vector<std::span<double>> ae_tensors(AeParams& ae) {
  return {std::span<double>(ae.enc_w1.data), std::span<double>(ae.enc_b1),
          std::span<double>(ae.enc_w2.data), std::span<double>(ae.enc_b2),
          std::span<double>(ae.dec_w1.data), std::span<double>(ae.dec_b1),
          std::span<double>(ae.dec_w2.data), std::span<double>(ae.dec_b2)};
}

struct AeScratch {
  Matrix dxhat, da3, dz, da1;
};

// Gradient of the batch-mean squared reconstruction error with respect to
// every parameter tensor, written into `grad` (which must have the same
// shapes as `ae`). `act` must hold the forward pass of `ae` on `x`.
inline void ae_backward(const AeParams& ae, const Matrix& x, const AeActivations& act,
                        AeParams& grad, AeScratch& scratch) {
  for (auto& s : ae_tensors(grad)) std::fill(s.begin(), s.end(), 0.0);
  scratch.dxhat = Matrix(x.rows, ae.input_dim);
  const double scale = 2.0 / static_cast<double>(x.rows);
  for (std::size_t k = 0; k < scratch.dxhat.data.size(); ++k)
    scratch.dxhat.data[k] = scale * (act.xhat.data[k] - x.data[k]);

  accumulate_affine_grads(scratch.dxhat, act.a3, grad.dec_w2, grad.dec_b2);
  input_grad(scratch.dxhat, ae.dec_w2, scratch.da3);
  for (std::size_t k = 0; k < scratch.da3.data.size(); ++k)
    scratch.da3.data[k] *= elu_prime_from_value(act.a3.data[k]);
  accumulate_affine_grads(scratch.da3, act.z, grad.dec_w1, grad.dec_b1);
  input_grad(scratch.da3, ae.dec_w1, scratch.dz);
  accumulate_affine_grads(scratch.dz, act.a1, grad.enc_w2, grad.enc_b2);
  input_grad(scratch.dz, ae.enc_w2, scratch.da1);
  for (std::size_t k = 0; k < scratch.da1.data.size(); ++k)
    scratch.da1.data[k] *= elu_prime_from_value(act.a1.data[k]);
  accumulate_affine_grads(scratch.da1, x, grad.enc_w1, grad.enc_b1);
}

}  // namespace detail

// Latent code of a single parameter vector.
inline std::vector<double> encode(const LatentModel& model, std::span<const double> theta) {
  if (theta.size() != model.param_dim())
    throw DimensionMismatch("encode: parameter length does not match model");
  if (model.kind == LatentKind::linear_pca) {
    const Matrix& v = model.pca.components;
    std::vector<double> z(v.cols, 0.0);
    for (std::size_t i = 0; i < v.rows; ++i) {
      const double c = theta[i] - model.pca.mean[i];
      if (c == 0.0) continue;
      const double* vi = v.row(i);
      for (std::size_t j = 0; j < v.cols; ++j) z[j] += c * vi[j];
    }
    return z;
  }
  const AeParams& ae = model.ae;
  std::vector<double> h(ae.hidden_dim);
  for (std::size_t o = 0; o < ae.hidden_dim; ++o) {
    const double* w = ae.enc_w1.row(o);
    double acc = ae.enc_b1[o];
    for (std::size_t i = 0; i < ae.input_dim; ++i) acc += w[i] * theta[i];
    h[o] = elu(acc);
  }
  std::vector<double> z(ae.latent_dim);
  for (std::size_t o = 0; o < ae.latent_dim; ++o) {
    const double* w = ae.enc_w2.row(o);
    double acc = ae.enc_b2[o];
    for (std::size_t i = 0; i < ae.hidden_dim; ++i) acc += w[i] * h[i];
    z[o] = acc;
  }
  return z;
}

// Reconstructed parameter vector for a latent code.
inline std::vector<double> decode(const LatentModel& model, std::span<const double> z) {
  if (z.size() != model.latent_dim())
    throw DimensionMismatch("decode: latent length does not match model");
  if (model.kind == LatentKind::linear_pca) {
    const Matrix& v = model.pca.components;
    std::vector<double> theta(model.pca.mean.begin(), model.pca.mean.end());
    for (std::size_t i = 0; i < v.rows; ++i) {
      const double* vi = v.row(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < v.cols; ++j) acc += vi[j] * z[j];
      theta[i] += acc;
    }
    return theta;
  }
  const AeParams& ae = model.ae;
  std::vector<double> h(ae.hidden_dim);
  for (std::size_t o = 0; o < ae.hidden_dim; ++o) {
    const double* w = ae.dec_w1.row(o);
    double acc = ae.dec_b1[o];
    for (std::size_t i = 0; i < ae.latent_dim; ++i) acc += w[i] * z[i];
    h[o] = elu(acc);
  }
  std::vector<double> theta(ae.input_dim);
  for (std::size_t o = 0; o < ae.input_dim; ++o) {
    const double* w = ae.dec_w2.row(o);
    double acc = ae.dec_b2[o];
    for (std::size_t i = 0; i < ae.hidden_dim; ++i) acc += w[i] * h[i];
    theta[o] = acc;
  }
  return theta;
}

inline double reconstruction_error(const LatentModel& model, std::span<const double> theta) {
  const auto rec = decode(model, encode(model, theta));
  double s = 0.0;
  for (std::size_t i = 0; i < rec.size(); ++i) {
    const double d = theta[i] - rec[i];
    s += d * d;
  }
  return s;
}

// Jacobian of decode at z, a (P x M) matrix. For the linear model this is
// the component matrix itself, independent of z.
inline Matrix decoder_jacobian(const LatentModel& model, std::span<const double> z) {
  if (z.size() != model.latent_dim())
    throw DimensionMismatch("decoder_jacobian: latent length does not match model");
  if (model.kind == LatentKind::linear_pca) return model.pca.components;
  const AeParams& ae = model.ae;
  // d_h = elu'(W3 z + b3), then J = W4 diag(d) W3.
  std::vector<double> d(ae.hidden_dim);
  for (std::size_t h = 0; h < ae.hidden_dim; ++h) {
    const double* w = ae.dec_w1.row(h);
    double acc = ae.dec_b1[h];
    for (std::size_t j = 0; j < ae.latent_dim; ++j) acc += w[j] * z[j];
    d[h] = elu_prime_from_value(elu(acc));
  }
  Matrix jac(ae.input_dim, ae.latent_dim);
  for (std::size_t p = 0; p < ae.input_dim; ++p) {
    const double* w4p = ae.dec_w2.row(p);
    double* jp = jac.row(p);
    for (std::size_t h = 0; h < ae.hidden_dim; ++h) {
      const double s = w4p[h] * d[h];
      if (s == 0.0) continue;
      const double* w3h = ae.dec_w1.row(h);
      for (std::size_t j = 0; j < ae.latent_dim; ++j) jp[j] += s * w3h[j];
    }
  }
  return jac;
}

// Pushforward of the isotropic parameter-space covariance sigma_theta * I
// through the decoder linearized at z: Sigma_Z = sigma_theta * J^T J.
inline Matrix latent_covariance(const Matrix& jacobian, double sigma_theta) {
  Matrix cov = gram(jacobian);
  for (auto& v : cov.data) v *= sigma_theta;
  return cov;
}

// Diagonal covariance whose d-th entry is the spread (max - min) of latent
// coordinate d over the given codes.
inline Matrix range_covariance(std::span<const std::vector<double>> latent_points) {
  if (latent_points.size() < 2)
    throw InsufficientPoints("range_covariance: need at least two latent points");
  const std::size_t m = latent_points.front().size();
  std::vector<double> lo(m, std::numeric_limits<double>::infinity());
  std::vector<double> hi(m, -std::numeric_limits<double>::infinity());
  for (const auto& z : latent_points) {
    if (z.size() != m)
      throw DimensionMismatch("range_covariance: inconsistent latent dimensions");
    for (std::size_t d = 0; d < m; ++d) {
      lo[d] = std::min(lo[d], z[d]);
      hi[d] = std::max(hi[d], z[d]);
    }
  }
  Matrix cov(m, m);
  for (std::size_t d = 0; d < m; ++d) cov(d, d) = hi[d] - lo[d];
  return cov;
}

// ---------------------------------------------------------------------------
// Training.

struct TrainOptions {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 20000;
  // 30% of each epoch's batches are held out; training stops early once the
  // least-squares slope of the last `window` held-out losses exceeds
  // `slope_threshold` (the loss stopped improving).
  double test_fraction = 0.3;
  std::size_t window = 100;
  double slope_threshold = 1e-5;
};

struct TrainReport {
  std::size_t epochs_run = 0;
  double final_train_loss = 0.0;
  double final_test_loss = 0.0;
  bool stopped_early = false;
  // Mean ||theta - decode(encode(theta))||^2 over the whole collection,
  // measured with the post-training weights.
  double mean_recon_error = 0.0;
};

struct DivergedLoss : Error {
  explicit DivergedLoss(const std::string& what, TrainReport r)
      : Error(what), report(r) {}
  TrainReport report;
};

namespace detail {

struct Adam {
  std::vector<std::vector<double>> m, v;
  std::uint64_t t = 0;

  explicit Adam(const std::vector<std::span<double>>& tensors) {
    for (const auto& span : tensors) {
      m.emplace_back(span.size(), 0.0);
      v.emplace_back(span.size(), 0.0);
    }
  }

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads, const TrainOptions& opt) {
    ++t;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& mk = m[k];
      auto& vk = v[k];
      auto p = params[k];
      auto g = grads[k];
      for (std::size_t i = 0; i < p.size(); ++i) {
        mk[i] = opt.beta1 * mk[i] + (1.0 - opt.beta1) * g[i];
        vk[i] = opt.beta2 * vk[i] + (1.0 - opt.beta2) * g[i] * g[i];
        p[i] -= opt.learning_rate * (mk[i] / bc1) /
                (std::sqrt(vk[i] / bc2) + opt.adam_epsilon);
      }
    }
  }
};

}  // namespace detail

// Trains the autoencoder in place on the collection of parameter vectors.
// Optimizer state is fresh on every call; successive calls continue from the
// current weights. Throws DivergedLoss (with the partial report attached) if
// a loss stops being finite.
inline TrainReport train(AeParams& ae, std::span<const std::vector<double>> collection,
                         Rng& rng, const TrainOptions& opt = {}) {
  if (collection.empty()) throw EmptyCollection("train: empty collection");
  for (const auto& theta : collection)
    if (theta.size() != ae.input_dim)
      throw DimensionMismatch("train: parameter length does not match model");

  const std::size_t n = collection.size();
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  const std::size_t n_batches = (n + bs - 1) / bs;
  const std::size_t n_test_batches =
      static_cast<std::size_t>(opt.test_fraction * static_cast<double>(n_batches));

  auto params = detail::ae_tensors(ae);
  detail::Adam adam(params);

  // gradient tensors mirror the parameter tensors
  AeParams grad = ae;
  auto grad_spans = detail::ae_tensors(grad);
  std::vector<std::span<const double>> grad_views(grad_spans.begin(), grad_spans.end());

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainReport report;
  std::vector<double> test_history;
  detail::AeActivations act;
  detail::AeScratch scratch;
  Matrix x;

  for (std::size_t epoch = 0; epoch < opt.max_epochs; ++epoch) {
    for (std::size_t i = n - 1; i > 0; --i)  // Fisher-Yates reshuffle
      std::swap(order[i], order[rng.index(i + 1)]);

    double train_sq = 0.0, test_sq = 0.0;
    std::size_t train_count = 0, test_count = 0;
    for (std::size_t batch = 0; batch < n_batches; ++batch) {
      const std::size_t begin = batch * bs;
      const std::size_t end = std::min(n, begin + bs);
      const std::size_t rows = end - begin;
      x = Matrix(rows, ae.input_dim);
      for (std::size_t r = 0; r < rows; ++r)
        std::copy(collection[order[begin + r]].begin(), collection[order[begin + r]].end(),
                  x.row(r));

      const bool held_out = batch >= n_batches - n_test_batches;
      detail::ae_forward(ae, x, act);
      const double sq = detail::mean_sq_error(x, act.xhat) * static_cast<double>(rows);
      if (held_out) {
        test_sq += sq;
        test_count += rows;
        continue;
      }
      train_sq += sq;
      train_count += rows;

      detail::ae_backward(ae, x, act, grad, scratch);
      adam.step(params, grad_views, opt);
    }

    report.epochs_run = epoch + 1;
    report.final_train_loss =
        train_count ? train_sq / static_cast<double>(train_count) : 0.0;
    report.final_test_loss = test_count ? test_sq / static_cast<double>(test_count)
                                        : report.final_train_loss;
    if (!std::isfinite(report.final_train_loss) || !std::isfinite(report.final_test_loss))
      throw DivergedLoss("train: loss diverged", report);

    test_history.push_back(report.final_test_loss);
    if (test_history.size() >= opt.window && opt.window >= 2) {
      const std::span<const double> tail(test_history.data() + test_history.size() - opt.window,
                                         opt.window);
      if (fit_line_slope(tail) > opt.slope_threshold) {
        report.stopped_early = true;
        break;
      }
    }
  }

  // reconstruction error of the final weights over the full collection
  double total_sq = 0.0;
  for (std::size_t begin = 0; begin < n; begin += bs) {
    const std::size_t end = std::min(n, begin + bs);
    x = Matrix(end - begin, ae.input_dim);
    for (std::size_t r = 0; r < end - begin; ++r)
      std::copy(collection[begin + r].begin(), collection[begin + r].end(), x.row(r));
    detail::ae_forward(ae, x, act);
    total_sq += detail::mean_sq_error(x, act.xhat) * static_cast<double>(end - begin);
  }
  report.mean_recon_error = total_sq / static_cast<double>(n);
  return report;
}

}  // namespace poms
