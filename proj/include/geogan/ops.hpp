#pragma once

// Differentiable primitives over tape Vars. Forward computes the value,
// the recorded closure accumulates into parent grads during the reverse
// sweep. Activations cache what their backward rule needs.

#include <cmath>
#include <type_traits>

#include "geogan/conv.hpp"
#include "geogan/rng.hpp"
#include "geogan/tape.hpp"

namespace geogan {

namespace detail {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          Tensor<T>::shape_str(a.shape()) + " vs " +
                          Tensor<T>::shape_str(b.shape()));
}

template <typename T>
Tensor<T>& grad_of(Node<T>* n) {
  return n->ensure_grad();
}

}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "add");
  Tensor<T> y = a.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] += b.value()[i];
  Node<T>*pa = a.node(), *pb = b.node();
  return a.tape()->make(
      std::move(y), {a, b},
      [pa, pb](Node<T>& self) {
        if (pa->needs_grad) {
          Tensor<T>& ga = detail::grad_of(pa);
          for (std::int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
        }
        if (pb->needs_grad) {
          Tensor<T>& gb = detail::grad_of(pb);
          for (std::int64_t i = 0; i < self.grad.numel(); ++i) gb[i] += self.grad[i];
        }
      },
      "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "sub");
  Tensor<T> y = a.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] -= b.value()[i];
  Node<T>*pa = a.node(), *pb = b.node();
  return a.tape()->make(
      std::move(y), {a, b},
      [pa, pb](Node<T>& self) {
        if (pa->needs_grad) {
          Tensor<T>& ga = detail::grad_of(pa);
          for (std::int64_t i = 0; i < self.grad.numel(); ++i) ga[i] += self.grad[i];
        }
        if (pb->needs_grad) {
          Tensor<T>& gb = detail::grad_of(pb);
          for (std::int64_t i = 0; i < self.grad.numel(); ++i) gb[i] -= self.grad[i];
        }
      },
      "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_shape(a, b, "mul");
  Tensor<T> y = a.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= b.value()[i];
  Node<T>*pa = a.node(), *pb = b.node();
  return a.tape()->make(
      std::move(y), {a, b},
      [pa, pb](Node<T>& self) {
        if (pa->needs_grad) {
          Tensor<T>& ga = detail::grad_of(pa);
          for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            ga[i] += self.grad[i] * pb->value[i];
        }
        if (pb->needs_grad) {
          Tensor<T>& gb = detail::grad_of(pb);
          for (std::int64_t i = 0; i < self.grad.numel(); ++i)
            gb[i] += self.grad[i] * pa->value[i];
        }
      },
      "mul");
}

template <typename T>
Var<T> scale(Var<T> a, double c) {
  Tensor<T> y = a.value();
  for (auto& v : y.vec()) v = static_cast<T>(v * c);
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa, c](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
          ga[i] += static_cast<T>(self.grad[i] * c);
      },
      "scale");
}

namespace detail {
template <typename T>
void record_kinks(Tape<T>* tape, const Tensor<T>& x) {
  if (!tape->record_kinks) return;
  const double m = tape->kink_margin;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    double v = static_cast<double>(x[i]);
    if (std::abs(v) <= m) tape->kink_hit = true;
    tape->kink_signature.push_back(v > 0.0 ? 1 : 0);
  }
}
}  // namespace detail

template <typename T>
Var<T> relu(Var<T> a) {
  detail::record_kinks(a.tape(), a.value());
  Tensor<T> y = a.value();
  for (auto& v : y.vec())
    if (v < T(0)) v = T(0);
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
          if (pa->value[i] > T(0)) ga[i] += self.grad[i];
      },
      "relu");
}

template <typename T>
Var<T> leaky_relu(Var<T> a, double slope = 0.2) {
  detail::record_kinks(a.tape(), a.value());
  Tensor<T> y = a.value();
  for (auto& v : y.vec())
    if (v < T(0)) v = static_cast<T>(v * slope);
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa, slope](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
          ga[i] += self.grad[i] * (pa->value[i] > T(0) ? T(1) : static_cast<T>(slope));
      },
      "leaky_relu");
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> y = a.value();
  for (auto& v : y.vec()) v = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
          T s = self.value[i];
          ga[i] += self.grad[i] * s * (T(1) - s);
        }
      },
      "sigmoid");
}

template <typename T>
Var<T> tanh_op(Var<T> a) {
  Tensor<T> y = a.value();
  for (auto& v : y.vec()) v = static_cast<T>(std::tanh(static_cast<double>(v)));
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
          T t = self.value[i];
          ga[i] += self.grad[i] * (T(1) - t * t);
        }
      },
      "tanh");
}

// Train-mode inverted dropout; eval mode is the identity (no node recorded).
// The mask stream is a pure function of `key`, so masks are reproducible and
// independent of evaluation order.
template <typename T>
Var<T> dropout(Var<T> a, double p, std::uint64_t key, bool train) {
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout: p must be in [0,1)");
  if (!train || p == 0.0) return a;
  CounterRng rng{CounterRng::mix(key)};
  Tensor<T> mask(a.value().shape());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask.vec()) m = rng.next_double() >= p ? keep_scale : T(0);
  Tensor<T> y = a.value();
  for (std::int64_t i = 0; i < y.numel(); ++i) y[i] *= mask[i];
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa, mask = std::move(mask)](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i)
          ga[i] += self.grad[i] * mask[i];
      },
      "dropout");
}

template <typename T>
Var<T> concat_ch(Var<T> a, Var<T> b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 3 || sb.size() != 3 || sa[1] != sb[1] || sa[2] != sb[2])
    throw ValidationError("concat: expected CHW tensors with matching planes");
  Tensor<T> y({sa[0] + sb[0], sa[1], sa[2]});
  std::copy(a.value().data(), a.value().data() + a.value().numel(), y.data());
  std::copy(b.value().data(), b.value().data() + b.value().numel(),
            y.data() + a.value().numel());
  Node<T>*pa = a.node(), *pb = b.node();
  const std::int64_t na = a.value().numel();
  return a.tape()->make(
      std::move(y), {a, b},
      [pa, pb, na](Node<T>& self) {
        if (pa->needs_grad) {
          Tensor<T>& ga = detail::grad_of(pa);
          for (std::int64_t i = 0; i < na; ++i) ga[i] += self.grad[i];
        }
        if (pb->needs_grad) {
          Tensor<T>& gb = detail::grad_of(pb);
          for (std::int64_t i = na; i < self.grad.numel(); ++i)
            gb[i - na] += self.grad[i];
        }
      },
      "concat");
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  double acc = 0.0;
  for (const auto& v : a.value().vec()) acc += static_cast<double>(v);
  Tensor<T> y({1});
  y[0] = static_cast<T>(acc);
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        T g = self.grad[0];
        for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
      },
      "sum");
}

template <typename T>
Var<T> mean_all(Var<T> a) {
  if (a.value().numel() == 0) throw ValidationError("mean: empty tensor");
  double acc = 0.0;
  for (const auto& v : a.value().vec()) acc += static_cast<double>(v);
  Tensor<T> y({1});
  y[0] = static_cast<T>(acc / static_cast<double>(a.value().numel()));
  Node<T>* pa = a.node();
  const double inv_n = 1.0 / static_cast<double>(a.value().numel());
  return a.tape()->make(
      std::move(y), {a},
      [pa, inv_n](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        T g = static_cast<T>(self.grad[0] * inv_n);
        for (std::int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
      },
      "mean");
}

template <typename T>
Var<T> abs_op(Var<T> a) {
  Tensor<T> y = a.value();
  for (auto& v : y.vec()) v = std::abs(v);
  Node<T>* pa = a.node();
  return a.tape()->make(
      std::move(y), {a},
      [pa](Node<T>& self) {
        Tensor<T>& ga = detail::grad_of(pa);
        for (std::int64_t i = 0; i < self.grad.numel(); ++i) {
          T x = pa->value[i];
          // subgradient 0 at x == 0
          ga[i] += self.grad[i] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
        }
      },
      "abs");
}

// x {C,H,W}, w {O,C,kh,kw}, optional bias {O}.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, const std::type_identity_t<Var<T>>* bias, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[1] != xs[0])
    throw ValidationError("conv2d: expected x{C,H,W}, w{O,C,kh,kw}");
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != ws[0]))
    throw ValidationError("conv2d: bias shape must be {O}");
  conv::Conv2dGeom g{xs[0], xs[1], xs[2], ws[0], ws[2], ws[3], stride, pad};
  g.check();
  Tensor<T> y({g.out_ch, g.out_h(), g.out_w()});
  conv::forward(x.value().data(), w.value().data(),
                bias ? bias->value().data() : nullptr, g, y.data());
  Node<T>*px = x.node(), *pw = w.node();
  Node<T>* pb = bias ? bias->node() : nullptr;
  auto run = [px, pw, pb, g](Node<T>& self) {
    if (px->needs_grad)
      conv::backward_input(self.grad.data(), pw->value.data(), g,
                           detail::grad_of(px).data());
    if (pw->needs_grad || (pb && pb->needs_grad))
      conv::backward_weight(self.grad.data(), px->value.data(), g,
                            detail::grad_of(pw).data(),
                            pb ? detail::grad_of(pb).data() : nullptr);
  };
  if (bias) return x.tape()->make(std::move(y), {x, w, *bias}, run, "conv2d");
  return x.tape()->make(std::move(y), {x, w}, run, "conv2d");
}

// Transposed convolution: x {C,H,W}, w {C,O,kh,kw} (input-major, matching
// the adjoint pairing with conv2d), optional bias {O}.
// out_h = (H-1)*stride - 2*pad + kh.
template <typename T>
Var<T> tconv2d(Var<T> x, Var<T> w, const std::type_identity_t<Var<T>>* bias, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 4 || ws[0] != xs[0])
    throw ValidationError("tconv2d: expected x{C,H,W}, w{C,O,kh,kw}");
  const int out_ch = ws[1], kh = ws[2], kw = ws[3];
  const int out_h = (xs[1] - 1) * stride - 2 * pad + kh;
  const int out_w = (xs[2] - 1) * stride - 2 * pad + kw;
  if (out_h <= 0 || out_w <= 0) throw ValidationError("tconv2d: empty output");
  if (bias && (bias->shape().size() != 1 || bias->shape()[0] != out_ch))
    throw ValidationError("tconv2d: bias shape must be {O}");
  // Geometry of the conv this op is the adjoint of: maps {O,out} -> {C,in}.
  conv::Conv2dGeom g{out_ch, out_h, out_w, xs[0], kh, kw, stride, pad};
  g.check();
  if (g.out_h() != xs[1] || g.out_w() != xs[2])
    throw ValidationError("tconv2d: stride/pad/kernel do not tile the output");

  Tensor<T> y({out_ch, out_h, out_w});
  // Scatter pass: treat x as the "upstream gradient" of that conv.
  conv::backward_input(x.value().data(), w.value().data(), g, y.data());
  if (bias) {
    const std::int64_t plane = static_cast<std::int64_t>(out_h) * out_w;
    for (int o = 0; o < out_ch; ++o) {
      T b = bias->value()[o];
      T* dst = y.data() + o * plane;
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += b;
    }
  }

  Node<T>*px = x.node(), *pw = w.node();
  Node<T>* pb = bias ? bias->node() : nullptr;
  auto run = [px, pw, pb, g, out_ch, out_h, out_w](Node<T>& self) {
    if (px->needs_grad) {
      // Gather pass over dy, i.e. the paired conv's forward.
      conv::Conv2dGeom gg = g;
      std::vector<T> tmp(static_cast<std::size_t>(px->value.numel()));
      conv::forward(self.grad.data(), pw->value.data(), static_cast<const T*>(nullptr),
                    gg, tmp.data());
      Tensor<T>& gx = detail::grad_of(px);
      for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += tmp[i];
    }
    if (pw->needs_grad)
      conv::backward_weight(px->value.data(), self.grad.data(), g,
                            detail::grad_of(pw).data(), static_cast<T*>(nullptr));
    if (pb && pb->needs_grad) {
      Tensor<T>& gb = detail::grad_of(pb);
      const std::int64_t plane = static_cast<std::int64_t>(out_h) * out_w;
      for (int o = 0; o < out_ch; ++o) {
        double acc = 0.0;
        const T* src = self.grad.data() + o * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(src[i]);
        gb[o] += static_cast<T>(acc);
      }
    }
  };
  if (bias) return x.tape()->make(std::move(y), {x, w, *bias}, run, "tconv2d");
  return x.tape()->make(std::move(y), {x, w}, run, "tconv2d");
}

// Per-channel normalization over the spatial plane, affine parameters {C}.
template <typename T>
Var<T> instance_norm(Var<T> x, Var<T> gamma, Var<T> beta, double eps = 1e-5) {
  const auto& xs = x.shape();
  if (xs.size() != 3) throw ValidationError("instance_norm: expected CHW");
  const int C = xs[0];
  const std::int64_t plane = static_cast<std::int64_t>(xs[1]) * xs[2];
  if (gamma.shape() != std::vector<int>{C} || beta.shape() != std::vector<int>{C})
    throw ValidationError("instance_norm: affine params must be {C}");
  if (plane < 2) throw ValidationError("instance_norm: plane too small");

  Tensor<T> y(xs);
  Tensor<T> xhat(xs);
  std::vector<double> inv_std(static_cast<std::size_t>(C));
  for (int c = 0; c < C; ++c) {
    const T* src = x.value().data() + c * plane;
    double mean = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) mean += static_cast<double>(src[i]);
    mean /= static_cast<double>(plane);
    double var = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) {
      double d = static_cast<double>(src[i]) - mean;
      var += d * d;
    }
    var /= static_cast<double>(plane);
    double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(c)] = is;
    double gc = static_cast<double>(gamma.value()[c]);
    double bc = static_cast<double>(beta.value()[c]);
    T* xh = xhat.data() + c * plane;
    T* dst = y.data() + c * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      double h = (static_cast<double>(src[i]) - mean) * is;
      xh[i] = static_cast<T>(h);
      dst[i] = static_cast<T>(gc * h + bc);
    }
  }

  Node<T>*px = x.node(), *pg = gamma.node(), *pb = beta.node();
  return x.tape()->make(
      std::move(y), {x, gamma, beta},
      [px, pg, pb, C, plane, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Node<T>& self) {
        for (int c = 0; c < C; ++c) {
          const T* g = self.grad.data() + c * plane;
          const T* xh = xhat.data() + c * plane;
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::int64_t i = 0; i < plane; ++i) {
            sum_g += static_cast<double>(g[i]);
            sum_gx += static_cast<double>(g[i]) * static_cast<double>(xh[i]);
          }
          if (pg->needs_grad) detail::grad_of(pg)[c] += static_cast<T>(sum_gx);
          if (pb->needs_grad) detail::grad_of(pb)[c] += static_cast<T>(sum_g);
          if (px->needs_grad) {
            double gc = static_cast<double>(pg->value[c]);
            double is = inv_std[static_cast<std::size_t>(c)];
            double mg = sum_g / static_cast<double>(plane);
            double mgx = sum_gx / static_cast<double>(plane);
            T* gx = detail::grad_of(px).data() + c * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
              double dxh = static_cast<double>(g[i]) * gc;
              gx[i] += static_cast<T>(
                  is * (dxh - gc * mg - static_cast<double>(xh[i]) * gc * mgx));
            }
          }
        }
      },
      "instance_norm");
}

// Mean binary cross-entropy against a constant target, computed on logits
// with the numerically stable softplus form.
template <typename T>
Var<T> bce_with_logits_mean(Var<T> logits, double target) {
  const std::int64_t n = logits.value().numel();
  if (n == 0) throw ValidationError("bce: empty logits");
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double l = static_cast<double>(logits.value()[i]);
    double softplus = std::max(l, 0.0) + std::log1p(std::exp(-std::abs(l)));
    acc += softplus - l * target;
  }
  Tensor<T> y({1});
  y[0] = static_cast<T>(acc / static_cast<double>(n));
  Node<T>* pl = logits.node();
  return logits.tape()->make(
      std::move(y), {logits},
      [pl, target, n](Node<T>& self) {
        Tensor<T>& gl = detail::grad_of(pl);
        double g = static_cast<double>(self.grad[0]) / static_cast<double>(n);
        for (std::int64_t i = 0; i < n; ++i) {
          double l = static_cast<double>(pl->value[i]);
          double s = 1.0 / (1.0 + std::exp(-l));
          gl[i] += static_cast<T>(g * (s - target));
        }
      },
      "bce_with_logits");
}

// mean |a - b|; composed from primitives.
template <typename T>
Var<T> l1_mean(Var<T> a, Var<T> b) {
  return mean_all(abs_op(sub(a, b)));
}

// mean of x over a binary mask region: sum(x .* mask) / sum(mask).
template <typename T>
Var<T> masked_mean(Var<T> x, const Tensor<T>& mask) {
  double m = 0.0;
  for (const auto& v : mask.vec()) m += static_cast<double>(v);
  if (m <= 0.0) throw ValidationError("masked_mean: empty mask");
  Var<T> mk = x.tape()->constant(mask);
  return scale(sum_all(mul(x, mk)), 1.0 / m);
}

}  // namespace geogan
