#include "vsd/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vsd {

namespace {

void check_problem(const RegularizerProblem& p, const Tensor& alpha, const Tensor& u) {
  if (p.network == nullptr) throw std::invalid_argument("regularizer: no network");
  if (p.layer >= p.network->size()) throw std::out_of_range("regularizer: layer index out of range");
  auto* dense = dynamic_cast<const DenseBase*>(&p.network->layer(p.layer));
  if (dense == nullptr) throw std::invalid_argument("regularizer: noise layer must be dense");
  const std::size_t k = dense->in_features();
  if (alpha.size() != k) throw ShapeError("regularizer: alpha must have length " + std::to_string(k));
  if (u.rank() != 2 || u.rows() != k || u.cols() != k) throw ShapeError("regularizer: U must be KxK");
  for (double a : alpha.values()) {
    if (!(a >= 0.0)) throw DomainError("regularizer: alpha must be non-negative");
  }
  const std::size_t n = p.x.rank() == 0 ? 0 : p.x.dim(0);
  if (n == 0) throw ShapeError("regularizer: empty input");
  if (p.loss == RegLoss::SquaredError) {
    if (p.targets.rank() != 2 || p.targets.rows() != n) throw ShapeError("regularizer: targets must be [n x outputs]");
  } else if (p.labels.size() != n) {
    throw ShapeError("regularizer: one label per row required");
  }
}

// Input of the noisy layer, computed deterministically.
Tensor layer_input(const RegularizerProblem& p) {
  Rng unused(0);
  ForwardContext ctx{unused, unused, NoiseMode::Deterministic};
  Tape tape(false);
  Var h = tape.constant(p.x);
  for (std::size_t i = 0; i < p.layer; ++i) h = p.network->layer(i).forward(tape, h, ctx);
  return h.value();
}

Var tail(Tape& tape, const RegularizerProblem& p, const Var& h) {
  Rng unused(0);
  ForwardContext ctx{unused, unused, NoiseMode::Deterministic};
  Var out = h;
  for (std::size_t i = p.layer; i < p.network->size(); ++i) out = p.network->layer(i).forward(tape, out, ctx);
  return out;
}

Tensor tail_value(const RegularizerProblem& p, const Tensor& h) {
  Tape tape(false);
  return tail(tape, p, tape.constant(h)).value();
}

// Loss of output row r, compared against example `example`.
double row_loss(const RegularizerProblem& p, const Tensor& f, std::size_t r, std::size_t example) {
  const std::size_t d = f.cols();
  const double* row = f.data() + r * d;
  if (p.loss == RegLoss::SquaredError) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double e = row[j] - p.targets(example, j);
      s += e * e;
    }
    return s;
  }
  const double mx = *std::max_element(row, row + d);
  double z = 0.0;
  for (std::size_t j = 0; j < d; ++j) z += std::exp(row[j] - mx);
  return mx + std::log(z) - row[static_cast<std::size_t>(p.labels.at(example))];
}

// Omega_n = diag(h_n) J_n^T H_n J_n diag(h_n), and the factor S_n J_n diag(h_n)
// with S_n = H_n^(1/2), for every example.
struct Curvature {
  std::vector<Tensor> omega;
  std::vector<Tensor> root;
};

Curvature curvature(const RegularizerProblem& p) {
  const Tensor h = layer_input(p);
  const std::size_t n = h.rows();
  const std::size_t k = h.cols();
  const Tensor f = tail_value(p, h);
  const std::size_t d = f.cols();

  // jac[j] holds dF_j/dh for every row, [n x K]. Parameter gradients touched
  // by these backward passes are restored afterwards.
  std::vector<Parameter*> params = p.network->parameters();
  std::vector<Tensor> saved;
  for (Parameter* q : params) saved.push_back(q->grad);
  std::vector<Tensor> jac;
  for (std::size_t j = 0; j < d; ++j) {
    Tape tape;
    Var hv = tape.variable(h);
    Tensor mask({1, d});
    mask[j] = 1.0;
    tape.backward(sum(tail(tape, p, hv) * tape.constant(mask)));
    jac.push_back(hv.grad());
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->grad = saved[i];

  Curvature c;
  for (std::size_t r = 0; r < n; ++r) {
    Tensor jd({d, k});  // J_n diag(h_n)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t i = 0; i < k; ++i) jd(j, i) = jac[j](r, i) * h(r, i);
    Tensor hout = Tensor::eye(d);
    if (p.loss == RegLoss::CrossEntropy) {
      Tensor row({1, d});
      for (std::size_t j = 0; j < d; ++j) row[j] = f(r, j);
      const Tensor prob = softmax_rows(row);
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) hout(a, b) = 0.5 * ((a == b ? prob[a] : 0.0) - prob[a] * prob[b]);
    }
    c.omega.push_back(matmul(transpose(jd), matmul(hout, jd)));
    const SymmetricEigen eig = symmetric_eigen(hout);
    Tensor sroot({d, d});
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        for (std::size_t m = 0; m < d; ++m)
          sroot(a, b) += eig.vectors(a, m) * std::sqrt(std::max(0.0, eig.values[m])) * eig.vectors(b, m);
    c.root.push_back(matmul(sroot, jd));
  }
  return c;
}

}  // namespace

double regularizer_mc(const RegularizerProblem& p, const Tensor& alpha, const Tensor& u, std::size_t samples,
                      Rng& rng) {
  check_problem(p, alpha, u);
  if (samples == 0) throw std::invalid_argument("regularizer_mc: samples must be positive");
  const Tensor h = layer_input(p);
  const std::size_t n = h.rows();
  const std::size_t k = h.cols();
  const Tensor base = tail_value(p, h);
  std::vector<double> base_loss(n);
  for (std::size_t r = 0; r < n; ++r) base_loss[r] = row_loss(p, base, r, r);

  std::vector<double> sd(k);
  for (std::size_t i = 0; i < k; ++i) sd[i] = std::sqrt(alpha[i]);
  const std::size_t pairs = (samples + 1) / 2;
  const std::size_t chunk = std::max<std::size_t>(1, 16384 / n);
  double total = 0.0;
  std::vector<double> eps(k), eta(k);
  for (std::size_t start = 0; start < pairs; start += chunk) {
    const std::size_t m = std::min(chunk, pairs - start);
    Tensor noisy({2 * m * n, k});
    for (std::size_t s = 0; s < m; ++s) {
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t i = 0; i < k; ++i) eps[i] = sd[i] * rng.normal();
        for (std::size_t i = 0; i < k; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < k; ++j) acc += u(i, j) * eps[j];
          eta[i] = acc;
        }
        const std::size_t plus = (2 * s) * n + r;
        const std::size_t minus = (2 * s + 1) * n + r;
        for (std::size_t i = 0; i < k; ++i) {
          noisy(plus, i) = h(r, i) * (1.0 + eta[i]);
          noisy(minus, i) = h(r, i) * (1.0 - eta[i]);
        }
      }
    }
    const Tensor f = tail_value(p, noisy);
    for (std::size_t s = 0; s < m; ++s) {
      for (std::size_t r = 0; r < n; ++r) {
        total += row_loss(p, f, (2 * s) * n + r, r) + row_loss(p, f, (2 * s + 1) * n + r, r) - 2.0 * base_loss[r];
      }
    }
  }
  return total / (2.0 * static_cast<double>(pairs) * static_cast<double>(n));
}

double regularizer_analytic(const RegularizerProblem& p, const Tensor& alpha, const Tensor& u) {
  check_problem(p, alpha, u);
  const std::size_t k = alpha.size();
  Tensor cov({k, k});  // U diag(alpha) U^T
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t m = 0; m < k; ++m) cov(i, j) += u(i, m) * alpha[m] * u(j, m);
  const Curvature c = curvature(p);
  double total = 0.0;
  for (const Tensor& om : c.omega) total += dot(om, cov);
  return total / static_cast<double>(c.omega.size());
}

double regularizer_tikhonov(const RegularizerProblem& p, const Tensor& alpha, const Tensor& u) {
  check_problem(p, alpha, u);
  const std::size_t k = alpha.size();
  Tensor scaled = u;  // U diag(alpha)^(1/2)
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j) scaled(i, j) *= std::sqrt(alpha[j]);
  const Curvature c = curvature(p);
  double total = 0.0;
  for (const Tensor& r : c.root) {
    const double f = frobenius_norm(matmul(r, scaled));
    total += f * f;
  }
  return total / static_cast<double>(c.root.size());
}

double regularizer_column_sum(const RegularizerProblem& p, const Tensor& alpha, const Tensor& u) {
  check_problem(p, alpha, u);
  const std::size_t k = alpha.size();
  const Curvature c = curvature(p);
  Tensor omega({k, k});
  for (const Tensor& om : c.omega) omega = add(omega, om);
  omega = scale(omega, 1.0 / static_cast<double>(c.omega.size()));
  double total = 0.0;
  for (std::size_t col = 0; col < k; ++col) {
    double q = 0.0;
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) q += u(i, col) * omega(i, j) * u(j, col);
    total += alpha[col] * q;
  }
  return total;
}

RegularizerEstimate estimate_regularizer(const RegularizerProblem& p, const Tensor& alpha, const Tensor& u,
                                         std::size_t samples, Rng& rng) {
  RegularizerEstimate e;
  e.mc_value = regularizer_mc(p, alpha, u, samples, rng);
  e.analytic_value = regularizer_analytic(p, alpha, u);
  e.noise_scale = alpha.size() == 0 ? 0.0 : sum(alpha) / static_cast<double>(alpha.size());
  return e;
}

namespace {

Tensor as_matrix(const Tensor& w) {
  if (w.rank() == 2) return w;
  if (w.rank() == 0 || w.size() == 0) throw ShapeError("expected a matrix");
  if (w.rank() == 1) return w.reshaped({1, w.size()});
  return w.reshaped({w.dim(0), w.size() / w.dim(0)});
}

}  // namespace

double spectral_norm(const Tensor& w, std::size_t iters, double tol) {
  const Tensor m = as_matrix(w);
  if (frobenius_norm(m) == 0.0) return 0.0;
  const Tensor mt = transpose(m);
  Rng rng(0x5eedULL);
  Tensor v = sample_standard_normal({m.cols(), 1}, rng);
  v = scale(v, 1.0 / frobenius_norm(v));
  double lambda = 0.0;
  for (std::size_t it = 0; it < std::max<std::size_t>(1, iters); ++it) {
    Tensor next = matmul(mt, matmul(m, v));
    const double norm = frobenius_norm(next);
    if (norm == 0.0) {
      // v landed in the null space; restart from a fresh direction.
      v = sample_standard_normal({m.cols(), 1}, rng);
      v = scale(v, 1.0 / frobenius_norm(v));
      continue;
    }
    v = scale(next, 1.0 / norm);
    const bool done = std::abs(norm - lambda) <= tol * norm;
    lambda = norm;
    if (done) break;
  }
  return frobenius_norm(matmul(m, v));
}

double stable_rank(const Tensor& w) {
  const Tensor m = as_matrix(w);
  const double fro = frobenius_norm(m);
  if (fro == 0.0) throw DomainError("stable_rank: zero matrix");
  const double sn = spectral_norm(m);
  return fro * fro / (sn * sn);
}

SymmetricEigen symmetric_eigen(const Tensor& a_in) {
  if (a_in.rank() != 2 || a_in.rows() != a_in.cols()) throw ShapeError("symmetric_eigen: square matrix required");
  const std::size_t n = a_in.rows();
  Tensor a = a_in;
  Tensor v = Tensor::eye(n);
  const double scale_ref = std::max(frobenius_norm(a), 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-15 * scale_ref) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  Tensor values({n});
  for (std::size_t i = 0; i < n; ++i) values[i] = a(i, i);
  return {values, v};
}

}  // namespace vsd
