#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "qas/error.hpp"
#include "qas/numerics.hpp"
#include "qas/rng.hpp"

namespace qas {

/// Feedforward ReLU network: hidden layers x <- ReLU(A x + b), then an affine
/// readout. `weights.size()` is the number of affine maps (hidden + 1).
struct ReluNet {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  std::size_t capacity = 0;

  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.empty() ? 0 : weights.back().rows(); }
  std::size_t hidden_layers() const { return weights.empty() ? 0 : weights.size() - 1; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t t = 0; t < weights.size(); ++t)
      n += static_cast<std::size_t>(weights[t].size() + biases[t].size());
    return n;
  }

  friend bool operator==(const ReluNet&, const ReluNet&) = default;
};

inline Vector relu_forward(const ReluNet& net, const Vector& x) {
  if (net.weights.empty() || net.weights.size() != net.biases.size()) throw ShapeError("relu_forward: malformed network");
  if (x.size() != net.input_dim())
    throw ShapeError("relu_forward: input has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(net.input_dim()));
  Vector h = x;
  for (std::size_t t = 0; t < net.weights.size(); ++t) {
    if (net.weights[t].cols() != h.size() || net.weights[t].rows() != net.biases[t].size())
      throw ShapeError("relu_forward: layer " + std::to_string(t) + " shape mismatch");
    h = net.weights[t] * h + net.biases[t];
    if (t + 1 < net.weights.size()) h = h.cwiseMax(0.0);
  }
  return h;
}

/// Net with no hidden layer returning the constant c.
inline ReluNet constant_net(Eigen::Index input_dim, const Vector& c) {
  ReluNet net;
  net.weights.push_back(Matrix::Zero(c.size(), input_dim));
  net.biases.push_back(c);
  return net;
}

enum class FitMethod { ridge, gradient_descent };

struct FitOptions {
  FitMethod method = FitMethod::ridge;
  double ridge = 1e-10;         // relative to the mean squared feature activation
  std::size_t gd_epochs = 2000;
  double gd_step = 0.05;
};

struct FitResult {
  ReluNet net;
  double max_train_error = 0.0;  // max over pairs of the l_inf residual
  bool fallback = false;         // ridge had to be strengthened
};

namespace detail {

/// Hidden layer of c ReLU units in the raw input coordinates. The first
/// min(c, n) units are shifted coordinate ramps ReLU(x_i - lo_i), linear on
/// the data; the rest are random features whose parameters depend only on
/// (seed, unit index, data), so widths are nested across c.
inline void random_hidden_layer(const std::vector<Vector>& xs, std::size_t c, std::uint64_t seed, Matrix& a,
                                Vector& b) {
  const Eigen::Index n = xs.front().size();
  Vector lo = xs.front(), hi = xs.front();
  for (const auto& x : xs) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  const Vector scale = (0.5 * (hi - lo)).cwiseMax(1e-12);

  a.resize(static_cast<Eigen::Index>(c), n);
  b.resize(static_cast<Eigen::Index>(c));
  const CounterRng root(seed);
  for (std::size_t j = 0; j < c; ++j) {
    const auto r = static_cast<Eigen::Index>(j);
    if (r < n) {
      a.row(r).setZero();
      a(r, r) = 1.0 / scale[r];
      b[r] = -(lo[r] - scale[r]) / scale[r];
      continue;
    }
    CounterRng rng = root.derive(j);
    Vector w(n);
    for (Eigen::Index i = 0; i < n; ++i) w[i] = rng.normal();
    const double wn = std::max(w.norm(), 1e-12);
    w /= wn;
    // Kink hyperplane through a randomly drawn training point.
    const Vector& anchor = xs[rng.below(xs.size())];
    a.row(r) = (w.array() / scale.array()).matrix().transpose();
    b[r] = -a.row(r).dot(anchor);
  }
}

inline Matrix activations(const Matrix& a, const Vector& b, const std::vector<Vector>& xs) {
  Matrix h(static_cast<Eigen::Index>(xs.size()), a.rows());
  for (std::size_t k = 0; k < xs.size(); ++k)
    h.row(static_cast<Eigen::Index>(k)) = (a * xs[k] + b).cwiseMax(0.0).transpose();
  return h;
}

inline double max_residual(const ReluNet& net, const std::vector<Vector>& xs, const std::vector<Vector>& ys) {
  double worst = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k)
    worst = std::max(worst, (relu_forward(net, xs[k]) - ys[k]).lpNorm<Eigen::Infinity>());
  return worst;
}

}  // namespace detail

/// Fits a one-hidden-layer ReLU net of width c. Default: random hidden
/// features and a ridge readout on centred activations (intercept not
/// penalised); optionally refined by full-batch gradient descent.
inline FitResult fit_universal(const std::vector<Vector>& xs, const std::vector<Vector>& ys, std::size_t c,
                               std::uint64_t seed, const FitOptions& opt = {}) {
  if (xs.empty() || xs.size() != ys.size()) throw ShapeError("fit_universal: need matching, nonempty training pairs");
  const Eigen::Index n = xs.front().size(), m = ys.front().size();
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (xs[k].size() != n || ys[k].size() != m) throw ShapeError("fit_universal: inconsistent pair dimensions");
    if (!xs[k].allFinite() || !ys[k].allFinite()) throw DomainError("fit_universal: non-finite training value");
  }
  const auto kk = static_cast<double>(xs.size());
  Vector ymean = Vector::Zero(m);
  for (const auto& y : ys) ymean += y;
  ymean /= kk;

  FitResult res;
  if (c == 0) {
    res.net = constant_net(n, ymean);
    res.max_train_error = detail::max_residual(res.net, xs, ys);
    return res;
  }

  Matrix a;
  Vector b;
  detail::random_hidden_layer(xs, c, seed, a, b);
  const Matrix h = detail::activations(a, b, xs);
  const Vector hmean = h.colwise().mean().transpose();
  const Matrix hc = h.rowwise() - hmean.transpose();
  Matrix yc(static_cast<Eigen::Index>(xs.size()), m);
  for (std::size_t k = 0; k < ys.size(); ++k) yc.row(static_cast<Eigen::Index>(k)) = (ys[k] - ymean).transpose();

  const Matrix gram = hc.transpose() * hc;
  const Matrix rhs = hc.transpose() * yc;
  const double level = std::max(gram.trace() / static_cast<double>(c), 1e-300);
  double lambda = opt.ridge * level;
  Matrix w;
  for (int attempt = 0;; ++attempt) {
    Eigen::LDLT<Matrix> ldlt(gram + lambda * Matrix::Identity(gram.rows(), gram.cols()));
    if (ldlt.info() == Eigen::Success) {
      w = ldlt.solve(rhs);
      if (w.allFinite() && ldlt.isPositive()) break;
    }
    if (attempt > 12) throw ConvergenceError("fit_universal: ridge system stayed singular", lambda);
    res.fallback = true;
    lambda = std::max(lambda * 1e3, 1e-12 * level);
  }

  ReluNet net;
  net.capacity = c;
  net.weights = {a, w.transpose()};
  net.biases = {b, ymean - w.transpose() * hmean};

  if (opt.method == FitMethod::gradient_descent) {
    // Plain full-batch gradient descent on the mean squared error,
    // step decayed as step / (1 + t / 100).
    for (std::size_t t = 0; t < opt.gd_epochs; ++t) {
      Matrix ga = Matrix::Zero(a.rows(), a.cols()), gw = Matrix::Zero(net.weights[1].rows(), net.weights[1].cols());
      Vector gb = Vector::Zero(b.size()), go = Vector::Zero(m);
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const Vector pre = net.weights[0] * xs[k] + net.biases[0];
        const Vector act = pre.cwiseMax(0.0);
        const Vector err = net.weights[1] * act + net.biases[1] - ys[k];
        gw += err * act.transpose();
        go += err;
        Vector back = net.weights[1].transpose() * err;
        for (Eigen::Index i = 0; i < back.size(); ++i)
          if (pre[i] <= 0.0) back[i] = 0.0;
        ga += back * xs[k].transpose();
        gb += back;
      }
      const double step = opt.gd_step / (1.0 + static_cast<double>(t) / 100.0) / kk;
      net.weights[0] -= step * ga;
      net.biases[0] -= step * gb;
      net.weights[1] -= step * gw;
      net.biases[1] -= step * go;
    }
  }
  res.net = std::move(net);
  res.max_train_error = detail::max_residual(res.net, xs, ys);
  return res;
}

}  // namespace qas
