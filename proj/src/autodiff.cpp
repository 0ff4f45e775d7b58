#include "cyclelife/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyclelife::ad {

std::string shape_str(const Shape& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

int Tape::watch(Tensor& t) {
  t.requires_grad = true;
  t.node = record(t.shape, t.values, {}, nullptr);
  return t.node;
}

int Tape::record(Shape shape, std::vector<double> values, std::vector<int> inputs, BackFn back) {
  nodes_.push_back(Node{std::move(shape), std::move(values), std::move(inputs), std::move(back), {}});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node) {
  auto& n = nodes_[static_cast<std::size_t>(node)];
  if (n.grad.empty()) n.grad.assign(shape_size(n.shape), 0.0);
  return n.grad;
}

void Tape::backward(const Tensor& loss) {
  if (loss.node < 0) throw std::invalid_argument("backward: loss is not recorded on this tape");
  if (!loss.is_scalar())
    throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape));
  for (auto& n : nodes_) n.grad.clear();
  grad_buffer(loss.node)[0] = 1.0;
  for (int id = loss.node; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.back) continue;
    n.back(*this, id);
  }
}

std::vector<double> Tape::grad(const Tensor& t) const {
  if (t.node < 0) throw std::invalid_argument("grad: tensor is not recorded on this tape");
  const auto& g = nodes_[static_cast<std::size_t>(t.node)].grad;
  if (g.empty()) return std::vector<double>(t.size(), 0.0);
  return g;
}

Saved save(const Tensor& t) {
  if (t.node >= 0) return Saved{t.node, {}};
  return Saved{-1, t.values};
}

namespace {

bool recorded(const Tensor& t) { return t.node >= 0; }

Tensor finish(Tape& tape, Shape shape, std::vector<double> values, bool needs_grad,
              std::vector<int> inputs, Tape::BackFn back) {
  Tensor out(std::move(shape), std::move(values));
  if (needs_grad) {
    out.requires_grad = true;
    out.node = tape.record(out.shape, out.values, std::move(inputs), std::move(back));
  }
  return out;
}

void check_binary_shapes(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape || a.is_scalar() || b.is_scalar()) return;
  throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                              shape_str(b.shape));
}

// Shared body for add/sub/mul with scalar broadcast on either side.
template <typename Fwd, typename BackA, typename BackB>
Tensor binary_op(const char* name, Tape& tape, const Tensor& a, const Tensor& b, Fwd fwd,
                 BackA back_a, BackB back_b) {
  check_binary_shapes(name, a, b);
  const bool a_scalar = a.is_scalar() && !b.is_scalar();
  const bool b_scalar = b.is_scalar() && !a.is_scalar();
  const Tensor& big = a_scalar ? b : a;

  std::vector<double> out(big.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double av = a_scalar ? a.values[0] : a.values[i];
    const double bv = b_scalar ? b.values[0] : b.values[i];
    out[i] = fwd(av, bv);
  }

  const bool needs = recorded(a) || recorded(b);
  if (!needs) return Tensor(big.shape, std::move(out));

  Saved sa = save(a), sb = save(b);
  const int na = a.node, nb = b.node;
  auto back = [sa, sb, na, nb, a_scalar, b_scalar, back_a, back_b](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    const auto& av = sa.get(tp);
    const auto& bv = sb.get(tp);
    if (na >= 0) {
      auto& ga = tp.grad_buffer(na);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = back_a(a_scalar ? av[0] : av[i], b_scalar ? bv[0] : bv[i]) * g[i];
        ga[a_scalar ? 0 : i] += d;
      }
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = back_b(a_scalar ? av[0] : av[i], b_scalar ? bv[0] : bv[i]) * g[i];
        gb[b_scalar ? 0 : i] += d;
      }
    }
  };
  return finish(tape, big.shape, std::move(out), true, {na, nb}, back);
}

// Unary elementwise op whose derivative is a function of the *output*.
template <typename Fwd, typename DerivFromOut>
Tensor unary_from_output(Tape& tape, const Tensor& x, Fwd fwd, DerivFromOut deriv) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x.values[i]);
  if (!recorded(x)) return Tensor(x.shape, std::move(out));
  const int nx = x.node;
  auto back = [nx, deriv](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    const auto& y = tp.values(self);
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += deriv(y[i]) * g[i];
  };
  return finish(tape, x.shape, std::move(out), true, {nx}, back);
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", tape, a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", tape, a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", tape, a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(Tape& tape, const Tensor& x, double c) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x.values[i];
  if (!recorded(x)) return Tensor(x.shape, std::move(out));
  const int nx = x.node;
  auto back = [nx, c](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  };
  return finish(tape, x.shape, std::move(out), true, {nx}, back);
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  return unary_from_output(
      tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary_from_output(
      tape, x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double negative_slope) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x.values[i] > 0.0 ? x.values[i] : negative_slope * x.values[i];
  if (!recorded(x)) return Tensor(x.shape, std::move(out));
  Saved sx = save(x);
  const int nx = x.node;
  auto back = [sx, nx, negative_slope](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    const auto& xv = sx.get(tp);
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx[i] += (xv[i] > 0.0 ? 1.0 : negative_slope) * g[i];
  };
  return finish(tape, x.shape, std::move(out), true, {nx}, back);
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape.size() != 2 || b.shape.size() != 2)
    throw std::invalid_argument("matmul: expects 2-d operands, got " + shape_str(a.shape) +
                                " and " + shape_str(b.shape));
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  if (b.shape[0] != k)
    throw std::invalid_argument("matmul: inner dimensions differ, " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));

  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.values[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b.values[p * n + j];
    }

  if (!recorded(a) && !recorded(b)) return Tensor({m, n}, std::move(out));
  Saved sa = save(a), sb = save(b);
  const int na = a.node, nb = b.node;
  auto back = [sa, sb, na, nb, m, k, n](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    if (na >= 0) {  // dA = G * B^T
      const auto& bv = sb.get(tp);
      auto& ga = tp.grad_buffer(na);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (nb >= 0) {  // dB = A^T * G
      const auto& av = sa.get(tp);
      auto& gb = tp.grad_buffer(nb);
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t i = 0; i < m; ++i) {
          const double a_ip = av[i * k + p];
          if (a_ip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += a_ip * g[i * n + j];
        }
    }
  };
  return finish(tape, {m, n}, std::move(out), true, {na, nb}, back);
}

Tensor transpose(Tape& tape, const Tensor& x) {
  if (x.shape.size() != 2)
    throw std::invalid_argument("transpose: expects 2-d operand, got " + shape_str(x.shape));
  const std::size_t r = x.shape[0], c = x.shape[1];
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.values[i * c + j];
  if (!recorded(x)) return Tensor({c, r}, std::move(out));
  const int nx = x.node;
  auto back = [nx, r, c](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  };
  return finish(tape, {c, r}, std::move(out), true, {nx}, back);
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& kernels, const Tensor& bias, int stride) {
  if (x.shape.size() != 2) throw std::invalid_argument("conv1d: input must be L x C");
  if (kernels.shape.size() != 3) throw std::invalid_argument("conv1d: kernels must be {F, K, C}");
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  const std::size_t len = x.shape[0], ch = x.shape[1];
  const std::size_t f = kernels.shape[0], k = kernels.shape[1];
  if (kernels.shape[2] != ch)
    throw std::invalid_argument("conv1d: kernel channels " + std::to_string(kernels.shape[2]) +
                                " != input channels " + std::to_string(ch));
  if (bias.size() != f) throw std::invalid_argument("conv1d: bias size != filter count");
  if (len < k) throw std::invalid_argument("conv1d: sequence shorter than kernel");

  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t l_out = (len - k) / s + 1;
  std::vector<double> out(l_out * f);
  for (std::size_t t = 0; t < l_out; ++t)
    for (std::size_t fi = 0; fi < f; ++fi) {
      double acc = bias.values[fi];
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t c = 0; c < ch; ++c)
          acc += x.values[(t * s + ki) * ch + c] * kernels.values[(fi * k + ki) * ch + c];
      out[t * f + fi] = acc;
    }

  if (!recorded(x) && !recorded(kernels) && !recorded(bias))
    return Tensor({l_out, f}, std::move(out));
  Saved sx = save(x), sk = save(kernels);
  const int nx = x.node, nk = kernels.node, nb = bias.node;
  auto back = [sx, sk, nx, nk, nb, l_out, f, k, ch, s](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    if (nx >= 0) {
      const auto& kv = sk.get(tp);
      auto& gx = tp.grad_buffer(nx);
      for (std::size_t t = 0; t < l_out; ++t)
        for (std::size_t fi = 0; fi < f; ++fi) {
          const double go = g[t * f + fi];
          if (go == 0.0) continue;
          for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t c = 0; c < ch; ++c)
              gx[(t * s + ki) * ch + c] += go * kv[(fi * k + ki) * ch + c];
        }
    }
    if (nk >= 0) {
      const auto& xv = sx.get(tp);
      auto& gk = tp.grad_buffer(nk);
      for (std::size_t t = 0; t < l_out; ++t)
        for (std::size_t fi = 0; fi < f; ++fi) {
          const double go = g[t * f + fi];
          if (go == 0.0) continue;
          for (std::size_t ki = 0; ki < k; ++ki)
            for (std::size_t c = 0; c < ch; ++c)
              gk[(fi * k + ki) * ch + c] += go * xv[(t * s + ki) * ch + c];
        }
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::size_t t = 0; t < l_out; ++t)
        for (std::size_t fi = 0; fi < f; ++fi) gb[fi] += g[t * f + fi];
    }
  };
  return finish(tape, {l_out, f}, std::move(out), true, {nx, nk, nb}, back);
}

Tensor dropout(Tape& tape, const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    throw std::invalid_argument("dropout: p must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;

  const double keep = 1.0 - p;
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : 1.0 / keep;

  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values[i] * mask[i];
  if (!recorded(x)) return Tensor(x.shape, std::move(out));
  const int nx = x.node;
  auto back = [nx, mask](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += mask[i] * g[i];
  };
  return finish(tape, x.shape, std::move(out), true, {nx}, back);
}

Tensor row(Tape& tape, const Tensor& x, std::size_t r) {
  if (x.shape.size() != 2) throw std::invalid_argument("row: expects 2-d operand");
  if (r >= x.shape[0]) throw std::invalid_argument("row: index out of range");
  const std::size_t c = x.shape[1];
  std::vector<double> out(x.values.begin() + static_cast<std::ptrdiff_t>(r * c),
                          x.values.begin() + static_cast<std::ptrdiff_t>((r + 1) * c));
  if (!recorded(x)) return Tensor({1, c}, std::move(out));
  const int nx = x.node;
  auto back = [nx, r, c](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t j = 0; j < c; ++j) gx[r * c + j] += g[j];
  };
  return finish(tape, {1, c}, std::move(out), true, {nx}, back);
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> columns) {
  if (columns.empty()) throw std::invalid_argument("stack_rows: empty input");
  const std::size_t h = columns[0].size();
  std::vector<double> out;
  out.reserve(columns.size() * h);
  std::vector<int> inputs;
  inputs.reserve(columns.size());
  bool needs = false;
  for (const auto& col : columns) {
    if (col.size() != h) throw std::invalid_argument("stack_rows: inconsistent sizes");
    out.insert(out.end(), col.values.begin(), col.values.end());
    inputs.push_back(col.node);
    needs = needs || recorded(col);
  }
  const std::size_t t = columns.size();
  if (!needs) return Tensor({t, h}, std::move(out));
  auto ins = inputs;
  auto back = [ins, h](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    for (std::size_t r = 0; r < ins.size(); ++r) {
      if (ins[r] < 0) continue;
      auto& gi = tp.grad_buffer(ins[r]);
      for (std::size_t j = 0; j < h; ++j) gi[j] += g[r * h + j];
    }
  };
  return finish(tape, {t, h}, std::move(out), true, std::move(inputs), back);
}

Tensor concat(Tape& tape, const Tensor& a, const Tensor& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.values.begin(), a.values.end());
  out.insert(out.end(), b.values.begin(), b.values.end());
  const std::size_t na_sz = a.size();
  if (!recorded(a) && !recorded(b)) return Tensor({out.size(), 1}, std::move(out));
  const int na = a.node, nb = b.node;
  auto back = [na, nb, na_sz](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    if (na >= 0) {
      auto& ga = tp.grad_buffer(na);
      for (std::size_t i = 0; i < na_sz; ++i) ga[i] += g[i];
    }
    if (nb >= 0) {
      auto& gb = tp.grad_buffer(nb);
      for (std::size_t i = na_sz; i < g.size(); ++i) gb[i - na_sz] += g[i];
    }
  };
  const std::size_t total = out.size();
  return finish(tape, {total, 1}, std::move(out), true, {na, nb}, back);
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values) acc += v;
  if (!recorded(x)) return Tensor::scalar(acc);
  const int nx = x.node;
  auto back = [nx](Tape& tp, int self) {
    const double g = tp.grad_buffer(self)[0];
    auto& gx = tp.grad_buffer(nx);
    for (auto& v : gx) v += g;
  };
  return finish(tape, {1}, {acc}, true, {nx}, back);
}

Tensor mean(Tape& tape, const Tensor& x) {
  return scale(tape, sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor softmax(Tape& tape, const Tensor& x) {
  const double mx = *std::max_element(x.values.begin(), x.values.end());
  std::vector<double> out(x.size());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(x.values[i] - mx);
    z += out[i];
  }
  for (auto& v : out) v /= z;
  if (!recorded(x)) return Tensor(x.shape, std::move(out));
  const int nx = x.node;
  auto back = [nx](Tape& tp, int self) {
    const auto& g = tp.grad_buffer(self);
    const auto& y = tp.values(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    auto& gx = tp.grad_buffer(nx);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - dot);
  };
  return finish(tape, x.shape, std::move(out), true, {nx}, back);
}

namespace {

double eval_scalar(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x) {
  Tape tape;
  const Tensor y = f(tape, x);
  if (!y.is_scalar()) throw std::invalid_argument("gradient_check: f must return a scalar");
  return y.values[0];
}

double check_coord(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                   double analytic, std::size_t i, double step) {
  Tensor xp = x;
  xp.node = -1;
  xp.requires_grad = false;
  xp.values[i] = x.values[i] + step;
  const double fp = eval_scalar(f, xp);
  xp.values[i] = x.values[i] - step;
  const double fm = eval_scalar(f, xp);
  const double numeric = (fp - fm) / (2.0 * step);
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

}  // namespace

double gradient_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
                      double step) {
  if (step <= 0.0) throw std::invalid_argument("gradient_check: step must be positive");
  Tape tape;
  Tensor watched = x;
  watched.node = -1;
  tape.watch(watched);
  const Tensor y = f(tape, watched);
  if (!y.is_scalar()) throw std::invalid_argument("gradient_check: f must return a scalar");
  tape.backward(y);
  const std::vector<double> analytic = tape.grad(watched);

  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    worst = std::max(worst, check_coord(f, x, analytic[i], i, step));
  return worst;
}

double gradient_check_sampled(const std::function<Tensor(Tape&, const Tensor&)>& f,
                              const Tensor& x, double step, std::size_t max_coords, Rng& rng) {
  if (x.size() <= max_coords) return gradient_check(f, x, step);
  Tape tape;
  Tensor watched = x;
  watched.node = -1;
  tape.watch(watched);
  const Tensor y = f(tape, watched);
  tape.backward(y);
  const std::vector<double> analytic = tape.grad(watched);

  double worst = 0.0;
  for (std::size_t draw = 0; draw < max_coords; ++draw) {
    const std::size_t i = static_cast<std::size_t>(rng.below(x.size()));
    worst = std::max(worst, check_coord(f, x, analytic[i], i, step));
  }
  return worst;
}

}  // namespace cyclelife::ad
