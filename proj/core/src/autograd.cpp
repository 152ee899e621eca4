#include "vsd/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace vsd {

Parameter::Parameter(std::string name_, Tensor value_, bool trainable_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()), trainable(trainable_) {}

const Tensor& Var::value() const { return tape_->value(id_); }
Tensor Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  if (check_finite_) ensure_finite(value, "constant");
  nodes_.push_back(Node{std::move(value), {}, false, false, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, grad_enabled_, nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  nodes_.push_back(Node{p.value, {}, false, grad_enabled_ && p.trainable, nullptr, &p});
  const std::size_t id = nodes_.size() - 1;
  param_nodes_.emplace(&p, id);
  return Var(this, id);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  if (check_finite_) ensure_finite(value, "recorded op");
  bool needs = false;
  for (const Var& v : inputs) {
    if (v.tape() != this) throw TapeError("op mixes nodes from different tapes");
    needs = needs || nodes_[v.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, false, needs, needs ? std::move(fn) : nullptr, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (g.shape() != node.value.shape()) {
    throw ShapeError("gradient shape " + shape_to_string(g.shape()) + " does not match value shape " +
                     shape_to_string(node.value.shape()));
  }
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
  } else {
    double* dst = node.grad.data();
    const double* src = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }
}

Tensor Tape::grad(std::size_t id) const {
  const Node& node = nodes_[id];
  return node.has_grad ? node.grad : Tensor(node.value.shape());
}

void Tape::backward(const Var& loss) {
  if (loss.tape() != this) throw TapeError("loss belongs to a different tape");
  if (consumed_) throw TapeError("tape already consumed; re-run the forward pass");
  if (loss.value().size() != 1) {
    throw TapeError("backward() needs a scalar loss, got shape " + shape_to_string(loss.shape()));
  }
  consumed_ = true;
  nodes_[loss.id()].grad = Tensor(loss.shape(), 1.0);
  nodes_[loss.id()].has_grad = true;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.has_grad) continue;
    if (node.backward) {
      // accumulate() only writes to input nodes and never resizes nodes_.
      node.backward(*this, node.grad);
    }
  }
  for (Node& node : nodes_) {
    if (node.param && node.has_grad && node.param->trainable) {
      Parameter& p = *node.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += node.grad[i];
    }
  }
}

namespace {

Tape& tape_of(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw TapeError("op mixes nodes from different tapes");
  return *a.tape();
}

Var scalar_const(Tape& t, double s) { return t.constant(Tensor::scalar(s)); }

}  // namespace

Var operator+(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record(add(a.value(), b.value()), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, reduce_to_shape(g, t.value(ia).shape()));
    t.accumulate(ib, reduce_to_shape(g, t.value(ib).shape()));
  });
}

Var operator-(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record(sub(a.value(), b.value()), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, reduce_to_shape(g, t.value(ia).shape()));
    t.accumulate(ib, reduce_to_shape(neg(g), t.value(ib).shape()));
  });
}

Var operator*(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record(mul(a.value(), b.value()), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, reduce_to_shape(mul(g, t.value(ib)), t.value(ia).shape()));
    if (t.requires_grad(ib)) t.accumulate(ib, reduce_to_shape(mul(g, t.value(ia)), t.value(ib).shape()));
  });
}

Var operator/(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record(div(a.value(), b.value()), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) t.accumulate(ia, reduce_to_shape(div(g, bv), t.value(ia).shape()));
    if (t.requires_grad(ib)) {
      const Tensor gb = neg(div(mul(g, t.value(ia)), square(bv)));
      t.accumulate(ib, reduce_to_shape(gb, bv.shape()));
    }
  });
}

Var operator-(const Var& a) {
  return a.tape()->record(neg(a.value()), {a},
                          [ia = a.id()](Tape& t, const Tensor& g) { t.accumulate(ia, neg(g)); });
}

Var operator+(const Var& a, double s) {
  return a.tape()->record(add_scalar(a.value(), s), {a},
                          [ia = a.id()](Tape& t, const Tensor& g) { t.accumulate(ia, g); });
}
Var operator+(double s, const Var& a) { return a + s; }
Var operator-(const Var& a, double s) { return a + (-s); }
Var operator-(double s, const Var& a) { return (-a) + s; }

Var operator*(const Var& a, double s) {
  return a.tape()->record(scale(a.value(), s), {a},
                          [ia = a.id(), s](Tape& t, const Tensor& g) { t.accumulate(ia, scale(g, s)); });
}
Var operator*(double s, const Var& a) { return a * s; }
Var operator/(const Var& a, double s) {
  if (s == 0.0) throw DomainError("division by zero scalar");
  return a * (1.0 / s);
}
Var operator/(double s, const Var& a) { return scalar_const(*a.tape(), s) / a; }

Var exp(const Var& a) {
  Tensor out = exp(a.value());
  return a.tape()->record(out, {a}, [ia = a.id(), out](Tape& t, const Tensor& g) {
    t.accumulate(ia, mul(g, out));
  });
}

Var log(const Var& a) {
  return a.tape()->record(log(a.value()), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, div(g, t.value(ia)));
  });
}

Var sqrt(const Var& a) {
  Tensor out = sqrt(a.value());
  return a.tape()->record(out, {a}, [ia = a.id(), out](Tape& t, const Tensor& g) {
    Tensor d(out.shape());
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (out[i] == 0.0) throw DomainError("sqrt: gradient undefined at 0");
      d[i] = g[i] * 0.5 / out[i];
    }
    t.accumulate(ia, d);
  });
}

Var square(const Var& a) {
  return a.tape()->record(square(a.value()), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, scale(mul(g, t.value(ia)), 2.0));
  });
}

Var relu(const Var& a) {
  return a.tape()->record(relu(a.value()), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor d(x.shape());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
    t.accumulate(ia, d);
  });
}

Var matmul(const Var& a, const Var& b) {
  Tape& t = tape_of(a, b);
  return t.record(matmul(a.value(), b.value()), {a, b}, [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, matmul(g, transpose(t.value(ib))));
    if (t.requires_grad(ib)) t.accumulate(ib, matmul(transpose(t.value(ia)), g));
  });
}

Var transpose(const Var& a) {
  return a.tape()->record(transpose(a.value()), {a},
                          [ia = a.id()](Tape& t, const Tensor& g) { t.accumulate(ia, transpose(g)); });
}

Var reshape(const Var& a, Shape shape) {
  return a.tape()->record(a.value().reshaped(std::move(shape)), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, g.reshaped(t.value(ia).shape()));
  });
}

Var sum(const Var& a) {
  return a.tape()->record(Tensor::scalar(sum(a.value())), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, Tensor(t.value(ia).shape(), g.item()));
  });
}

Var mean(const Var& a) { return sum(a) / static_cast<double>(a.value().size()); }

Var sum_rows(const Var& a) {
  return a.tape()->record(sum_rows(a.value()), {a}, [ia = a.id()](Tape& t, const Tensor& g) {
    t.accumulate(ia, broadcast_to(g, t.value(ia).shape()));
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels) {
  const Tensor& z = logits.value();
  const std::size_t n = z.rows();
  const std::size_t c = z.cols();
  if (labels.size() != n) throw ShapeError("softmax_cross_entropy: label count does not match rows");
  Tensor probs = softmax_rows(z);
  double loss = 0.0;
  std::vector<int> owned(labels.begin(), labels.end());
  for (std::size_t i = 0; i < n; ++i) {
    const int y = owned[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) throw ShapeError("label out of range");
    double mx = z(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, z(i, j));
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(z(i, j) - mx);
    loss += mx + std::log(lse) - z(i, static_cast<std::size_t>(y));
  }
  return logits.tape()->record(
      Tensor::scalar(loss), {logits},
      [il = logits.id(), probs = std::move(probs), owned = std::move(owned)](Tape& t, const Tensor& g) {
        Tensor d = probs;
        for (std::size_t i = 0; i < owned.size(); ++i) d(i, static_cast<std::size_t>(owned[i])) -= 1.0;
        t.accumulate(il, scale(d, g.item()));
      });
}

Var gaussian_log_density(const Var& pred, const Tensor& target, const Var& log_precision) {
  Tape& t = tape_of(pred, log_precision);
  if (pred.shape() != target.shape()) throw ShapeError("gaussian_log_density: target shape mismatch");
  if (log_precision.value().size() != 1) throw ShapeError("gaussian_log_density: precision must be scalar");
  const double lp = log_precision.value().item();
  const double tau = std::exp(lp);
  const Tensor resid = sub(pred.value(), target);
  const double sse = dot(resid, resid);
  const double n = static_cast<double>(target.size());
  const double value = 0.5 * n * (lp - std::log(2.0 * std::numbers::pi)) - 0.5 * tau * sse;
  return t.record(Tensor::scalar(value), {pred, log_precision},
                  [ip = pred.id(), il = log_precision.id(), resid, tau, sse, n](Tape& t, const Tensor& g) {
                    const double gs = g.item();
                    t.accumulate(ip, scale(resid, -tau * gs));
                    t.accumulate(il, Tensor(t.value(il).shape(), gs * (0.5 * n - 0.5 * tau * sse)));
                  });
}

namespace {

struct ConvGeom {
  std::size_t n, c, h, w, o, kh, kw, oh, ow, stride, pad;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || k.rank() != 4) throw ShapeError("conv2d expects 4-D input and kernel");
  if (x.dim(1) != k.dim(1)) {
    throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " != kernel channels " +
                     std::to_string(k.dim(1)));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  ConvGeom gm{x.dim(0), x.dim(1), x.dim(2), x.dim(3), k.dim(0), k.dim(2), k.dim(3), 0, 0, stride, pad};
  if (gm.h + 2 * pad < gm.kh || gm.w + 2 * pad < gm.kw) throw ShapeError("conv2d: kernel larger than input");
  gm.oh = (gm.h + 2 * pad - gm.kh) / stride + 1;
  gm.ow = (gm.w + 2 * pad - gm.kw) / stride + 1;
  return gm;
}

// Calls f(out_index, x_index, k_index) for every multiply-accumulate term.
template <typename F>
void conv_for_each(const ConvGeom& g, F&& f) {
  for (std::size_t b = 0; b < g.n; ++b)
    for (std::size_t oc = 0; oc < g.o; ++oc)
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const std::size_t oi = ((b * g.o + oc) * g.oh + oy) * g.ow + ox;
          for (std::size_t ic = 0; ic < g.c; ++ic)
            for (std::size_t ky = 0; ky < g.kh; ++ky) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) -
                                        static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
              for (std::size_t kx = 0; kx < g.kw; ++kx) {
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
                const std::size_t xi = ((b * g.c + ic) * g.h + static_cast<std::size_t>(iy)) * g.w +
                                       static_cast<std::size_t>(ix);
                const std::size_t ki = ((oc * g.c + ic) * g.kh + ky) * g.kw + kx;
                f(oi, xi, ki);
              }
            }
        }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t padding) {
  const ConvGeom g = conv_geometry(x, kernel, stride, padding);
  Tensor out({g.n, g.o, g.oh, g.ow});
  conv_for_each(g, [&](std::size_t oi, std::size_t xi, std::size_t ki) { out[oi] += x[xi] * kernel[ki]; });
  return out;
}

Var conv2d(const Var& x, const Var& kernel, std::size_t stride, std::size_t padding) {
  Tape& t = tape_of(x, kernel);
  const ConvGeom geom = conv_geometry(x.value(), kernel.value(), stride, padding);
  return t.record(conv2d(x.value(), kernel.value(), stride, padding), {x, kernel},
                  [ix = x.id(), ik = kernel.id(), geom](Tape& t, const Tensor& g) {
                    const Tensor& xv = t.value(ix);
                    const Tensor& kv = t.value(ik);
                    if (t.requires_grad(ix)) {
                      Tensor dx(xv.shape());
                      conv_for_each(geom, [&](std::size_t oi, std::size_t xi, std::size_t ki) {
                        dx[xi] += g[oi] * kv[ki];
                      });
                      t.accumulate(ix, dx);
                    }
                    if (t.requires_grad(ik)) {
                      Tensor dk(kv.shape());
                      conv_for_each(geom, [&](std::size_t oi, std::size_t xi, std::size_t ki) {
                        dk[ki] += g[oi] * xv[xi];
                      });
                      t.accumulate(ik, dk);
                    }
                  });
}

namespace {

void check_pool_input(const Tensor& x) {
  if (x.rank() != 4 || x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0) {
    throw ShapeError("2x2 pooling needs [n,c,h,w] with even h, w; got " + shape_to_string(x.shape()));
  }
}

}  // namespace

Var max_pool2x2(const Var& x) {
  const Tensor& v = x.value();
  check_pool_input(v);
  const std::size_t n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  Tensor out({n, c, h / 2, w / 2});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t b = 0; b < n * c; ++b)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx) {
        const std::size_t oi = (b * (h / 2) + y) * (w / 2) + xx;
        std::size_t best = (b * h + 2 * y) * w + 2 * xx;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t ii = (b * h + 2 * y + dy) * w + 2 * xx + dx;
            if (v[ii] > v[best]) best = ii;
          }
        out[oi] = v[best];
        argmax[oi] = best;
      }
  return x.tape()->record(out, {x}, [ix = x.id(), argmax = std::move(argmax)](Tape& t, const Tensor& g) {
    Tensor dx(t.value(ix).shape());
    for (std::size_t i = 0; i < argmax.size(); ++i) dx[argmax[i]] += g[i];
    t.accumulate(ix, dx);
  });
}

Var avg_pool2x2(const Var& x) {
  const Tensor& v = x.value();
  check_pool_input(v);
  const std::size_t n = v.dim(0), c = v.dim(1), h = v.dim(2), w = v.dim(3);
  Tensor out({n, c, h / 2, w / 2});
  for (std::size_t b = 0; b < n * c; ++b)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) out[(b * (h / 2) + y / 2) * (w / 2) + xx / 2] += 0.25 * v[(b * h + y) * w + xx];
  return x.tape()->record(out, {x}, [ix = x.id()](Tape& t, const Tensor& g) {
    const Shape& s = t.value(ix).shape();
    const std::size_t h = s[2], w = s[3];
    Tensor dx(s);
    for (std::size_t b = 0; b < s[0] * s[1]; ++b)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx)
          dx[(b * h + y) * w + xx] = 0.25 * g[(b * (h / 2) + y / 2) * (w / 2) + xx / 2];
    t.accumulate(ix, dx);
  });
}

GradCheckResult finite_difference_check(const std::function<Var(Tape&)>& loss_fn,
                                        std::span<Parameter* const> params, double step) {
  for (Parameter* p : params) p->grad = Tensor(p->value.shape());
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto evaluate = [&]() {
    Tape tape(false);
    return loss_fn(tape).item();
  };

  GradCheckResult result;
  for (Parameter* p : params) {
    if (!p->trainable) continue;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + step;
      const double up = evaluate();
      p->value[i] = original - step;
      const double down = evaluate();
      p->value[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p->grad[i];
      const double diff = std::abs(analytic - numeric);
      const double err = std::abs(analytic) < 1e-8 ? diff : diff / std::abs(analytic);
      if (result.worst_parameter.empty() || err > result.max_error) {
        result = {err, p->name, i, analytic, numeric};
      }
    }
  }
  return result;
}

}  // namespace vsd
