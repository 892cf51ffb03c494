#include <algorithm>
#include <cmath>
#include <limits>

#include "phantom/error.hpp"
#include "phantom/tape.hpp"

namespace phantom::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

}  // namespace

Var add(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return tape.record(std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad.data());
    t.accumulate(n.inputs[1], n.grad.data());
  });
}

Var sub(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return tape.record(std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad.data());
    auto g = t.node(n.inputs[1]).grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
  });
}

Var mul(Tape& tape, Var a, Var b) {
  const Tensor& x = tape.value(a);
  const Tensor& y = tape.value(b);
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return tape.record(std::move(out), {a, b}, [](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    const Tensor& xv = t.node(n.inputs[0]).value;
    const Tensor& yv = t.node(n.inputs[1]).value;
    auto gx = t.node(n.inputs[0]).grad.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += n.grad[i] * yv[i];
    auto gy = t.node(n.inputs[1]).grad.data();
    for (std::size_t i = 0; i < gy.size(); ++i) gy[i] += n.grad[i] * xv[i];
  });
}

Var scale(Tape& tape, Var a, double factor) {
  Tensor out = tape.value(a);
  for (auto& v : out.data()) v *= factor;
  return tape.record(std::move(out), {a}, [factor](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * n.grad[i];
  });
}

Var sum(Tape& tape, Var a) {
  double s = 0.0;
  for (double v : tape.value(a).data()) s += v;
  return tape.record(Tensor::scalar(s), {a}, [](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    const double up = n.grad[0];
    for (auto& g : t.node(n.inputs[0]).grad.data()) g += up;
  });
}

Var reshape(Tape& tape, Var a, Shape shape) {
  Tensor out = tape.value(a).reshaped(std::move(shape));
  return tape.record(std::move(out), {a}, [](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    t.accumulate(n.inputs[0], n.grad.data());
  });
}

Var dense(Tape& tape, Var input, Var weights, Var bias) {
  const Tensor& x = tape.value(input);
  const Tensor& w = tape.value(weights);
  const Tensor& b = tape.value(bias);
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1 || x.dim(1) != w.dim(0) || b.dim(0) != w.dim(1)) {
    throw ShapeError("dense: incompatible shapes input " + shape_to_string(x.shape()) + ", weights " +
                     shape_to_string(w.shape()) + ", bias " + shape_to_string(b.shape()));
  }
  const std::size_t batch = x.dim(0), in = w.dim(0), out_dim = w.dim(1);
  Tensor out({batch, out_dim});
  for (std::size_t r = 0; r < batch; ++r) {
    double* o = &out[r * out_dim];
    for (std::size_t j = 0; j < out_dim; ++j) o[j] = b[j];
    for (std::size_t i = 0; i < in; ++i) {
      const double xi = x[r * in + i];
      const double* wi = &w[i * out_dim];
      for (std::size_t j = 0; j < out_dim; ++j) o[j] += xi * wi[j];
    }
  }
  return tape.record(std::move(out), {input, weights, bias},
                     [batch, in, out_dim](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    const Tensor& xv = t.node(n.inputs[0]).value;
    const Tensor& wv = t.node(n.inputs[1]).value;
    auto gx = t.node(n.inputs[0]).grad.data();
    auto gw = t.node(n.inputs[1]).grad.data();
    auto gb = t.node(n.inputs[2]).grad.data();
    for (std::size_t r = 0; r < batch; ++r) {
      const double* dy = &n.grad[r * out_dim];
      for (std::size_t j = 0; j < out_dim; ++j) gb[j] += dy[j];
      for (std::size_t i = 0; i < in; ++i) {
        const double* wi = &wv[i * out_dim];
        double* gwi = &gw[i * out_dim];
        const double xi = xv[r * in + i];
        double acc = 0.0;
        for (std::size_t j = 0; j < out_dim; ++j) {
          acc += dy[j] * wi[j];
          gwi[j] += xi * dy[j];
        }
        gx[r * in + i] += acc;
      }
    }
  });
}

Var conv2d(Tape& tape, Var input, Var kernels, Var bias, std::size_t padding) {
  const Tensor& x = tape.value(input);
  const Tensor& k = tape.value(kernels);
  const Tensor& b = tape.value(bias);
  if (x.rank() != 4 || k.rank() != 4 || b.rank() != 1 || x.dim(1) != k.dim(1) || b.dim(0) != k.dim(0)) {
    throw ShapeError("conv2d: incompatible shapes input " + shape_to_string(x.shape()) + ", kernels " +
                     shape_to_string(k.shape()) + ", bias " + shape_to_string(b.shape()));
  }
  const std::size_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  if (kh > h + 2 * padding || kw > w + 2 * padding) {
    throw ShapeError("conv2d: kernel " + shape_to_string(k.shape()) + " larger than padded input " +
                     shape_to_string(x.shape()) + " with padding " + std::to_string(padding));
  }
  const std::size_t oh = h + 2 * padding - kh + 1, ow = w + 2 * padding - kw + 1;
  const auto p = static_cast<std::ptrdiff_t>(padding);

  // Visits every (input, output) pixel pair touched by kernel tap (ky, kx).
  auto for_each_tap = [=](std::size_t ky, std::size_t kx, auto&& body) {
    const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - p;
    const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - p;
    const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
    const std::ptrdiff_t y1 = std::min<std::ptrdiff_t>(oh, static_cast<std::ptrdiff_t>(h) - dy);
    const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
    const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(ow, static_cast<std::ptrdiff_t>(w) - dx);
    for (std::ptrdiff_t oy = y0; oy < y1; ++oy) {
      body(static_cast<std::size_t>(oy) * ow, static_cast<std::size_t>(oy + dy) * w, x0, x1, dx);
    }
  };

  Tensor out({batch, cout, oh, ow});
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      double* o = &out[(n * cout + co) * oh * ow];
      std::fill(o, o + oh * ow, b[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const double* in = &x[(n * cin + ci) * h * w];
        const double* ker = &k[((co * cin + ci) * kh) * kw];
        for (std::size_t ky = 0; ky < kh; ++ky) {
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const double wt = ker[ky * kw + kx];
            for_each_tap(ky, kx, [&](std::size_t orow, std::size_t irow, std::ptrdiff_t x0, std::ptrdiff_t x1,
                                     std::ptrdiff_t dx) {
              for (std::ptrdiff_t ox = x0; ox < x1; ++ox) o[orow + ox] += wt * in[irow + ox + dx];
            });
          }
        }
      }
    }
  }

  return tape.record(std::move(out), {input, kernels, bias}, [=](Tape& t, std::size_t self) {
    const auto& node = t.node(self);
    const Tensor& xv = t.node(node.inputs[0]).value;
    const Tensor& kv = t.node(node.inputs[1]).value;
    auto gx = t.node(node.inputs[0]).grad.data();
    auto gk = t.node(node.inputs[1]).grad.data();
    auto gb = t.node(node.inputs[2]).grad.data();
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t co = 0; co < cout; ++co) {
        const double* dy = &node.grad[(n * cout + co) * oh * ow];
        for (std::size_t i = 0; i < oh * ow; ++i) gb[co] += dy[i];
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double* in = &xv[(n * cin + ci) * h * w];
          double* gin = &gx[(n * cin + ci) * h * w];
          const std::size_t kbase = ((co * cin + ci) * kh) * kw;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const double wt = kv[kbase + ky * kw + kx];
              double acc = 0.0;
              for_each_tap(ky, kx, [&](std::size_t orow, std::size_t irow, std::ptrdiff_t x0, std::ptrdiff_t x1,
                                       std::ptrdiff_t dx) {
                for (std::ptrdiff_t ox = x0; ox < x1; ++ox) {
                  acc += dy[orow + ox] * in[irow + ox + dx];
                  gin[irow + ox + dx] += wt * dy[orow + ox];
                }
              });
              gk[kbase + ky * kw + kx] += acc;
            }
          }
        }
      }
    }
  });
}

Var maxpool2x2(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  if (x.rank() != 4) throw ShapeError("maxpool2x2: expected rank-4 input, got " + shape_to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial dims must be even, got " + shape_to_string(x.shape()));
  }
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({x.dim(0), x.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const double* in = &x[pl * h * w];
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t cells[4] = {(2 * oy) * w + 2 * ox, (2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                      (2 * oy + 1) * w + 2 * ox + 1};
        std::size_t best = cells[0];
        for (int c = 1; c < 4; ++c) {
          if (in[cells[c]] > in[best]) best = cells[c];
        }
        const std::size_t o = (pl * oh + oy) * ow + ox;
        out[o] = in[best];
        argmax[o] = pl * h * w + best;
      }
    }
  }
  return tape.record(std::move(out), {input}, [argmax = std::move(argmax)](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += n.grad[o];
  });
}

Var relu(Tape& tape, Var input) {
  Tensor out = tape.value(input);
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return tape.record(std::move(out), {input}, [](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    const Tensor& xv = t.node(n.inputs[0]).value;
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > 0.0) g[i] += n.grad[i];
    }
  });
}

Var dropout(Tape& tape, Var input, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return input;
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor out = tape.value(input);
  std::vector<double> mask(out.size());
  std::bernoulli_distribution drop(rate);
  for (std::size_t i = 0; i < out.size(); ++i) {
    mask[i] = drop(rng) ? 0.0 : keep_scale;
    out[i] *= mask[i];
  }
  return tape.record(std::move(out), {input}, [mask = std::move(mask)](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * n.grad[i];
  });
}

namespace {

// Splits [batch, k, rest...] into (batch, k, rest-size, rest-shape).
struct MemberLayout {
  std::size_t batch, members, inner;
  Shape out_shape;
};

MemberLayout member_layout(const Tensor& x, const char* op) {
  if (x.rank() < 3) {
    throw ShapeError(std::string(op) + ": expected [batch, k, ...] input, got " + shape_to_string(x.shape()));
  }
  MemberLayout l{x.dim(0), x.dim(1), 1, {x.dim(0)}};
  for (std::size_t a = 2; a < x.rank(); ++a) {
    l.inner *= x.dim(a);
    l.out_shape.push_back(x.dim(a));
  }
  return l;
}

}  // namespace

Var mean_members(Tape& tape, Var input) {
  const Tensor& x = tape.value(input);
  const MemberLayout l = member_layout(x, "mean_members");
  const double inv = 1.0 / static_cast<double>(l.members);
  Tensor out(l.out_shape);
  for (std::size_t b = 0; b < l.batch; ++b) {
    for (std::size_t i = 0; i < l.inner; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < l.members; ++k) s += x[(b * l.members + k) * l.inner + i];
      out[b * l.inner + i] = s / static_cast<double>(l.members);
    }
  }
  return tape.record(std::move(out), {input}, [l, inv](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t b = 0; b < l.batch; ++b) {
      for (std::size_t k = 0; k < l.members; ++k) {
        for (std::size_t i = 0; i < l.inner; ++i) g[(b * l.members + k) * l.inner + i] += inv * n.grad[b * l.inner + i];
      }
    }
  });
}

Var select_member(Tape& tape, Var input, std::size_t index) {
  const Tensor& x = tape.value(input);
  const MemberLayout l = member_layout(x, "select_member");
  if (index >= l.members) {
    throw ShapeError("select_member: index " + std::to_string(index) + " out of range for " +
                     shape_to_string(x.shape()));
  }
  Tensor out(l.out_shape);
  for (std::size_t b = 0; b < l.batch; ++b) {
    std::copy_n(&x[(b * l.members + index) * l.inner], l.inner, &out[b * l.inner]);
  }
  return tape.record(std::move(out), {input}, [l, index](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t b = 0; b < l.batch; ++b) {
      for (std::size_t i = 0; i < l.inner; ++i) g[(b * l.members + index) * l.inner + i] += n.grad[b * l.inner + i];
    }
  });
}

Var softmax_cross_entropy(Tape& tape, Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = tape.value(logits);
  if (z.rank() != 2) throw ShapeError("softmax_cross_entropy: logits must be [batch, L], got " + shape_to_string(z.shape()));
  const std::size_t batch = z.dim(0), classes = z.dim(1);
  if (labels.size() != batch) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(batch));
  }
  std::vector<double> probs(z.size());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (labels[r] >= classes) {
      throw Error("softmax_cross_entropy: label " + std::to_string(labels[r]) + " out of range [0, " +
                  std::to_string(classes) + ")");
    }
    const double* row = &z[r * classes];
    const double m = *std::max_element(row, row + classes);
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += std::exp(row[c] - m);
    const double log_denom = std::log(denom);
    for (std::size_t c = 0; c < classes; ++c) probs[r * classes + c] = std::exp(row[c] - m - log_denom);
    total += log_denom - (row[labels[r]] - m);
  }
  const double inv_batch = 1.0 / static_cast<double>(batch);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return tape.record(Tensor::scalar(total * inv_batch), {logits},
                     [probs = std::move(probs), lab = std::move(lab), classes, inv_batch](Tape& t, std::size_t self) {
    const auto& n = t.node(self);
    const double up = n.grad[0] * inv_batch;
    auto g = t.node(n.inputs[0]).grad.data();
    for (std::size_t r = 0; r < lab.size(); ++r) {
      for (std::size_t c = 0; c < classes; ++c) {
        const double target = c == lab[r] ? 1.0 : 0.0;
        g[r * classes + c] += up * (probs[r * classes + c] - target);
      }
    }
  });
}

}  // namespace phantom::ops
