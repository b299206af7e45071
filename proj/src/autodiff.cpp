#include "wattnet/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "wattnet/errors.hpp"
#include "wattnet/rng.hpp"
#include "wattnet/simd/kernels.hpp"

namespace wattnet::ad {

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + ")";
}

namespace {

Var leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != values.size())
    throw ShapeError("leaf of shape " + shape_str(shape) + " given " + std::to_string(values.size()) + " values");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Var(std::move(n));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

inline double sigmoid1(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Var Var::constant(Shape shape, std::vector<double> values) { return leaf(std::move(shape), std::move(values), false); }
Var Var::parameter(Shape shape, std::vector<double> values) { return leaf(std::move(shape), std::move(values), true); }

double Var::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

Var make_op(std::string_view op, Shape shape, std::vector<double> value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->shape = std::move(shape);
  n->value = std::move(value);
  for (const Var& p : parents) n->requires_grad = n->requires_grad || p.requires_grad();
  if (n->requires_grad) {
    for (Var& p : parents) n->parents.push_back(p.shared());
    n->backward = std::move(backward_fn);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.size() != 1) throw ShapeError("backward() needs a scalar root, got " + shape_str(root.shape()));
  if (!root.requires_grad()) return;
  // Iterative post-order DFS gives a topological order; parents are pushed
  // in declaration order so the traversal is deterministic.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  std::vector<double> v(a.value().begin(), a.value().end());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += b.value()[i];
  return make_op("add", a.shape(), std::move(v), {a, b}, [](Node& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) simd::axpy(1.0, n.grad.data(), p->grad_buffer().data(), n.grad.size());
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.value()[i] * b.value()[i];
  return make_op("mul", a.shape(), std::move(v), {a, b}, [](Node& n) {
    Node& pa = *n.parents[0];
    Node& pb = *n.parents[1];
    if (pa.requires_grad) simd::mul_add(n.grad.data(), pb.value.data(), pa.grad_buffer().data(), n.grad.size());
    if (pb.requires_grad) simd::mul_add(n.grad.data(), pa.value.data(), pb.grad_buffer().data(), n.grad.size());
  });
}

Var scale(const Var& a, double c) {
  std::vector<double> v(a.value().begin(), a.value().end());
  for (double& x : v) x *= c;
  return make_op("scale", a.shape(), std::move(v), {a}, [c](Node& n) {
    simd::axpy(c, n.grad.data(), n.parents[0]->grad_buffer().data(), n.grad.size());
  });
}

Var sigmoid(const Var& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sigmoid1(a.value()[i]);
  return make_op("sigmoid", a.shape(), std::move(v), {a}, [](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Var tanh(const Var& a) {
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.value()[i]);
  return make_op("tanh", a.shape(), std::move(v), {a}, [](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  return make_op("sum", {1}, {s}, {a}, [](Node& n) {
    auto& g = n.parents[0]->grad_buffer();
    for (double& x : g) x += n.grad[0];
  });
}

Var reshape(const Var& a, Shape shape) {
  if (numel(shape) != a.size())
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return make_op("reshape", std::move(shape), std::vector<double>(a.value().begin(), a.value().end()), {a},
                 [](Node& n) { simd::axpy(1.0, n.grad.data(), n.parents[0]->grad_buffer().data(), n.grad.size()); });
}

// ---------------------------------------------------------------------- dense

namespace {
constexpr std::size_t kRowChunk = 32;
}

Var dense(const Var& x, const Var& w, const Var& b) {
  if (x.shape().empty() || w.shape().size() != 2 || x.shape().back() != w.shape()[0])
    throw ShapeError("dense: x " + shape_str(x.shape()) + " w " + shape_str(w.shape()));
  const std::size_t in = w.shape()[0], out = w.shape()[1], rows = x.size() / in;
  if (b && (b.shape().size() != 1 || b.shape()[0] != out))
    throw ShapeError("dense: bias " + shape_str(b.shape()) + " for " + std::to_string(out) + " outputs");
  Shape shape = x.shape();
  shape.back() = out;
  std::vector<double> y(rows * out, 0.0);
  const double* xv = x.value().data();
  const double* wv = w.value().data();
  if (b)
    for (std::size_t r = 0; r < rows; ++r) std::copy(b.value().begin(), b.value().end(), y.begin() + r * out);
  for (std::size_t r0 = 0; r0 < rows; r0 += kRowChunk) {
    const std::size_t r1 = std::min(rows, r0 + kRowChunk);
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t r = r0; r < r1; ++r) simd::axpy(xv[r * in + i], wv + i * out, y.data() + r * out, out);
  }
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return make_op("dense", std::move(shape), std::move(y), std::move(parents), [in, out, rows](Node& n) {
    Node& px = *n.parents[0];
    Node& pw = *n.parents[1];
    const double* g = n.grad.data();
    double* dx = px.requires_grad ? px.grad_buffer().data() : nullptr;
    double* dw = pw.requires_grad ? pw.grad_buffer().data() : nullptr;
    for (std::size_t r0 = 0; r0 < rows; r0 += kRowChunk) {
      const std::size_t r1 = std::min(rows, r0 + kRowChunk);
      for (std::size_t i = 0; i < in; ++i) {
        const double* wi = pw.value.data() + i * out;
        for (std::size_t r = r0; r < r1; ++r) {
          if (dx) dx[r * in + i] += simd::dot(g + r * out, wi, out);
          if (dw) simd::axpy(px.value[r * in + i], g + r * out, dw + i * out, out);
        }
      }
    }
    if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
      double* db = n.parents[2]->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) simd::axpy(1.0, g + r * out, db, out);
    }
  });
}

// ----------------------------------------------------------------------- conv

long conv_output_length(long t, const ConvSpec& spec) {
  return t - static_cast<long>(spec.kernel_size) * static_cast<long>(spec.dilation);
}

Var grouped_dilated_conv(const Var& x, const Var& w, const ConvSpec& spec) {
  if (spec.kernel_size < 1 || spec.dilation < 1) throw ConfigError("conv: kernel_size and dilation must be >= 1");
  if (x.shape().size() != 3) throw ShapeError("conv: x must be [N, T, M], got " + shape_str(x.shape()));
  const std::size_t batch = x.shape()[0], t_in = x.shape()[1], m = x.shape()[2];
  const auto k = static_cast<std::size_t>(spec.kernel_size), d = static_cast<std::size_t>(spec.dilation);
  if (spec.groups != 0 && static_cast<std::size_t>(spec.groups) != m)
    throw ConfigError("conv: groups must equal the number of series");
  if (w.shape() != Shape{m, k}) throw ShapeError("conv: w must be " + shape_str({m, k}) + ", got " + shape_str(w.shape()));
  const long t_out_l = conv_output_length(static_cast<long>(t_in), spec);
  if (t_out_l < 1)
    throw ShapeError("conv: T = " + std::to_string(t_in) + " too short for k = " + std::to_string(k) +
                     ", d = " + std::to_string(d));
  const auto t_out = static_cast<std::size_t>(t_out_l);

  // Tap-major copy of the weights so each tap is a contiguous M-vector.
  auto taps = std::make_shared<std::vector<double>>(k * m);
  for (std::size_t s = 0; s < m; ++s)
    for (std::size_t i = 0; i < k; ++i) (*taps)[i * m + s] = w.value()[s * k + i];

  std::vector<double> y(batch * t_out * m, 0.0);
  const double* xv = x.value().data();
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t t = 0; t < t_out; ++t) {
      double* yr = y.data() + (n * t_out + t) * m;
      for (std::size_t i = 1; i <= k; ++i) {
        const std::size_t src = t + k * d - i * d;
        simd::mul_add(taps->data() + (i - 1) * m, xv + (n * t_in + src) * m, yr, m);
      }
    }
  return make_op("grouped_dilated_conv", {batch, t_out, m}, std::move(y), {x, w},
                 [=](Node& nd) {
                   Node& px = *nd.parents[0];
                   Node& pw = *nd.parents[1];
                   double* dx = px.requires_grad ? px.grad_buffer().data() : nullptr;
                   std::vector<double> dtaps(pw.requires_grad ? k * m : 0, 0.0);
                   for (std::size_t n = 0; n < batch; ++n)
                     for (std::size_t t = 0; t < t_out; ++t) {
                       const double* g = nd.grad.data() + (n * t_out + t) * m;
                       for (std::size_t i = 1; i <= k; ++i) {
                         const std::size_t row = (n * t_in + t + k * d - i * d) * m;
                         if (dx) simd::mul_add(taps->data() + (i - 1) * m, g, dx + row, m);
                         if (!dtaps.empty()) simd::mul_add(px.value.data() + row, g, dtaps.data() + (i - 1) * m, m);
                       }
                     }
                   if (!dtaps.empty()) {
                     auto& dw = pw.grad_buffer();
                     for (std::size_t s = 0; s < m; ++s)
                       for (std::size_t i = 0; i < k; ++i) dw[s * k + i] += dtaps[i * m + s];
                   }
                 });
}

Var gated_activation(const Var& z_alpha, const Var& z_beta) {
  require_same_shape(z_alpha, z_beta, "gated_activation");
  const std::size_t n = z_alpha.size();
  auto gate = std::make_shared<std::vector<double>>(n);
  auto act = std::make_shared<std::vector<double>>(n);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    (*gate)[i] = sigmoid1(z_alpha.value()[i]);
    (*act)[i] = std::tanh(z_beta.value()[i]);
    y[i] = (*gate)[i] * (*act)[i];
  }
  return make_op("gated_activation", z_alpha.shape(), std::move(y), {z_alpha, z_beta}, [gate, act](Node& nd) {
    Node& pa = *nd.parents[0];
    Node& pb = *nd.parents[1];
    const auto& g = nd.grad;
    if (pa.requires_grad) {
      auto& da = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (*act)[i] * (*gate)[i] * (1.0 - (*gate)[i]);
    }
    if (pb.requires_grad) {
      auto& db = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * (*gate)[i] * (1.0 - (*act)[i] * (*act)[i]);
    }
  });
}

// ------------------------------------------------------------------ attention

namespace {

// Projections collapse to a handful of vectors because every token is a
// scalar times a shared lift: q = z*qa + qb, k = z*ka + kb, v = z*va + vb.
struct Projections {
  std::size_t dk;
  std::vector<double> qa, qb, ka, kb;
  double va, vb;
  double inv_sqrt_dk;
  double qaka, qakb, qbka;  // dot products scaled by 1/sqrt(d_k)
};

Projections project(const AttentionWeights& w) {
  Projections p;
  p.dk = w.d_k();
  const std::size_t dk = p.dk;
  const double* e = w.lift_w.value().data();
  const double* c = w.lift_b.value().data();
  p.qa.assign(dk, 0.0);
  p.qb.assign(dk, 0.0);
  p.ka.assign(dk, 0.0);
  p.kb.assign(dk, 0.0);
  for (std::size_t i = 0; i < dk; ++i)
    for (std::size_t j = 0; j < dk; ++j) {
      p.qa[j] += e[i] * w.wq.value()[i * dk + j];
      p.qb[j] += c[i] * w.wq.value()[i * dk + j];
      p.ka[j] += e[i] * w.wk.value()[i * dk + j];
      p.kb[j] += c[i] * w.wk.value()[i * dk + j];
    }
  p.va = p.vb = 0.0;
  for (std::size_t i = 0; i < dk; ++i) {
    p.va += e[i] * w.wv.value()[i];
    p.vb += c[i] * w.wv.value()[i];
  }
  p.inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  auto dotv = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  p.qaka = dotv(p.qa, p.ka) * p.inv_sqrt_dk;
  p.qakb = dotv(p.qa, p.kb) * p.inv_sqrt_dk;
  p.qbka = dotv(p.qb, p.ka) * p.inv_sqrt_dk;
  return p;
}

// Softmax row m of one slice: logits z[n] * beta_m up to a row constant.
struct RowContext {
  double zmin, zmax;
};

inline double row_beta(const Projections& p, double zm) { return zm * p.qaka + p.qbka; }

inline double row_shift(double beta, const RowContext& rc) { return beta >= 0.0 ? beta * rc.zmax : beta * rc.zmin; }

}  // namespace

Var slice_attention(const Var& z, const AttentionWeights& w) {
  if (z.shape().size() != 3) throw ShapeError("attention: z must be [N, T, M], got " + shape_str(z.shape()));
  const std::size_t dk = w.d_k();
  if (dk < 1) throw ConfigError("attention: d_k must be >= 1");
  if (w.lift_b.shape() != Shape{dk} || w.wq.shape() != Shape{dk, dk} || w.wk.shape() != Shape{dk, dk} ||
      w.wv.shape() != Shape{dk})
    throw ShapeError("attention: inconsistent projection shapes for d_k = " + std::to_string(dk));
  const std::size_t m = z.shape()[2], slices = z.shape()[0] * z.shape()[1];
  auto proj = std::make_shared<Projections>(project(w));

  std::vector<double> y(z.size());
  std::vector<double> v(m), e(m);
  const double* zv = z.value().data();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* zs = zv + s * m;
    RowContext rc{*std::min_element(zs, zs + m), *std::max_element(zs, zs + m)};
    for (std::size_t n = 0; n < m; ++n) v[n] = zs[n] * proj->va + proj->vb;
    for (std::size_t r = 0; r < m; ++r) {
      const double beta = row_beta(*proj, zs[r]);
      simd::scaled_exp(zs, beta, row_shift(beta, rc), e.data(), m);
      y[s * m + r] = simd::accurate_dot(e.data(), v.data(), m) / simd::accurate_sum(e.data(), m);
    }
  }

  return make_op(
      "slice_attention", z.shape(), std::move(y), {z, w.lift_w, w.lift_b, w.wq, w.wk, w.wv},
      [proj, m, slices, dk](Node& nd) {
        const Projections& p = *proj;
        Node& pz = *nd.parents[0];
        const double* zv = pz.value.data();
        std::vector<double> dz(m), v(m), e(m), wrow(m), cacc(m), dacc(m), dv(m), a_row(m), b_row(m);
        double s1 = 0, s2 = 0, s3 = 0, s4 = 0, dva = 0, dvb = 0;
        double* dzv = pz.requires_grad ? pz.grad_buffer().data() : nullptr;
        for (std::size_t s = 0; s < slices; ++s) {
          const double* zs = zv + s * m;
          const double* g = nd.grad.data() + s * m;
          const double* out = nd.value.data() + s * m;
          RowContext rc{*std::min_element(zs, zs + m), *std::max_element(zs, zs + m)};
          for (std::size_t n = 0; n < m; ++n) v[n] = zs[n] * p.va + p.vb;
          std::fill(cacc.begin(), cacc.end(), 0.0);
          std::fill(dacc.begin(), dacc.end(), 0.0);
          std::fill(dv.begin(), dv.end(), 0.0);
          for (std::size_t r = 0; r < m; ++r) {
            const double beta = row_beta(p, zs[r]);
            simd::scaled_exp(zs, beta, row_shift(beta, rc), e.data(), m);
            const double coef = g[r] / simd::accurate_sum(e.data(), m);
            // dS[r, n] = coef * e[n] * (v[n] - out[r])
            std::fill(wrow.begin(), wrow.end(), 0.0);
            simd::axpy(-out[r], e.data(), wrow.data(), m);
            simd::mul_add(e.data(), v.data(), wrow.data(), m);
            double wsum = 0.0;
            for (double x : wrow) wsum += x;
            a_row[r] = coef * simd::dot(wrow.data(), zs, m);
            b_row[r] = coef * wsum;
            simd::axpy(coef, wrow.data(), dacc.data(), m);
            simd::axpy(coef * zs[r], wrow.data(), cacc.data(), m);
            simd::axpy(coef, e.data(), dv.data(), m);
          }
          for (std::size_t n = 0; n < m; ++n) {
            s1 += zs[n] * a_row[n];
            s2 += zs[n] * b_row[n];
            s3 += a_row[n];
            s4 += b_row[n];
            dva += zs[n] * dv[n];
            dvb += dv[n];
            dz[n] = (a_row[n] + cacc[n]) * p.qaka + b_row[n] * p.qakb + dacc[n] * p.qbka + dv[n] * p.va;
          }
          if (dzv) simd::axpy(1.0, dz.data(), dzv + s * m, m);
        }

        const double c = p.inv_sqrt_dk;
        std::vector<double> dqa(dk), dqb(dk), dka(dk), dkb(dk);
        for (std::size_t j = 0; j < dk; ++j) {
          dqa[j] = (s1 * p.ka[j] + s2 * p.kb[j]) * c;
          dqb[j] = (s3 * p.ka[j] + s4 * p.kb[j]) * c;
          dka[j] = (s1 * p.qa[j] + s3 * p.qb[j]) * c;
          dkb[j] = (s2 * p.qa[j] + s4 * p.qb[j]) * c;
        }
        Node& lw = *nd.parents[1];
        Node& lb = *nd.parents[2];
        Node& wq = *nd.parents[3];
        Node& wk = *nd.parents[4];
        Node& wvn = *nd.parents[5];
        const double* ev = lw.value.data();
        const double* cv = lb.value.data();
        if (wq.requires_grad) {
          auto& gq = wq.grad_buffer();
          for (std::size_t i = 0; i < dk; ++i)
            for (std::size_t j = 0; j < dk; ++j) gq[i * dk + j] += ev[i] * dqa[j] + cv[i] * dqb[j];
        }
        if (wk.requires_grad) {
          auto& gk = wk.grad_buffer();
          for (std::size_t i = 0; i < dk; ++i)
            for (std::size_t j = 0; j < dk; ++j) gk[i * dk + j] += ev[i] * dka[j] + cv[i] * dkb[j];
        }
        if (wvn.requires_grad) {
          auto& gv = wvn.grad_buffer();
          for (std::size_t i = 0; i < dk; ++i) gv[i] += dva * ev[i] + dvb * cv[i];
        }
        if (lw.requires_grad || lb.requires_grad) {
          std::vector<double> de(dk, 0.0), dc(dk, 0.0);
          for (std::size_t i = 0; i < dk; ++i) {
            for (std::size_t j = 0; j < dk; ++j) {
              const double q = wq.value[i * dk + j], k = wk.value[i * dk + j];
              de[i] += q * dqa[j] + k * dka[j];
              dc[i] += q * dqb[j] + k * dkb[j];
            }
            de[i] += dva * wvn.value[i];
            dc[i] += dvb * wvn.value[i];
          }
          if (lw.requires_grad) simd::axpy(1.0, de.data(), lw.grad_buffer().data(), dk);
          if (lb.requires_grad) simd::axpy(1.0, dc.data(), lb.grad_buffer().data(), dk);
        }
      });
}

std::vector<double> attention_matrix(std::span<const double> slice, const AttentionWeights& w) {
  const std::size_t m = slice.size();
  const Projections p = project(w);
  const RowContext rc{*std::min_element(slice.begin(), slice.end()), *std::max_element(slice.begin(), slice.end())};
  std::vector<double> a(m * m);
  for (std::size_t r = 0; r < m; ++r) {
    double* row = a.data() + r * m;
    const double beta = row_beta(p, slice[r]);
    simd::scaled_exp(slice.data(), beta, row_shift(beta, rc), row, m);
    const double z = simd::accurate_sum(row, m);
    for (std::size_t n = 0; n < m; ++n) row[n] /= z;
  }
  return a;
}

// ---------------------------------------------------------------------- loss

Var softmax_cross_entropy(const Var& logits, std::span<const int> labels, Reduction reduction) {
  if (logits.shape().size() != 2) throw ShapeError("cross entropy: logits must be [N, C]");
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n) throw ShapeError("cross entropy: label count does not match batch");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= c)
      throw ValidationError("cross entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(c) + ")");
  auto probs = std::make_shared<std::vector<double>>(n * c);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* x = logits.value().data() + r * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    total += lse - x[labels[r]];
    for (std::size_t j = 0; j < c; ++j) (*probs)[r * c + j] = std::exp(x[j] - lse);
  }
  const double norm = reduction == Reduction::mean ? 1.0 / static_cast<double>(n) : 1.0;
  std::vector<int> lab(labels.begin(), labels.end());
  return make_op("softmax_cross_entropy", {1}, {total * norm}, {logits},
                 [probs, lab = std::move(lab), n, c, norm](Node& nd) {
                   auto& g = nd.parents[0]->grad_buffer();
                   const double up = nd.grad[0] * norm;
                   for (std::size_t r = 0; r < n; ++r) {
                     for (std::size_t j = 0; j < c; ++j) g[r * c + j] += up * (*probs)[r * c + j];
                     g[r * c + static_cast<std::size_t>(lab[r])] -= up;
                   }
                 });
}

// --------------------------------------------------------------- grad check

GradCheckResult grad_check(const std::function<Var()>& f, std::span<Var> params, const GradCheckOptions& opts) {
  for (Var& p : params) p.zero_grad();
  const Var root = f();
  if (!std::isfinite(root.item())) throw ComputeError("grad_check: non-finite function value");
  backward(root);

  std::vector<std::pair<std::size_t, std::size_t>> coords;
  std::size_t total = 0;
  for (const Var& p : params) total += p.size();
  const std::size_t budget = std::max<std::size_t>(opts.max_coords, 200);
  if (total <= budget) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t j = 0; j < params[i].size(); ++j) coords.emplace_back(i, j);
  } else {
    Rng rng(opts.seed);
    std::vector<std::size_t> flat(total);
    for (std::size_t i = 0; i < total; ++i) flat[i] = i;
    rng.shuffle(flat);
    flat.resize(budget);
    std::sort(flat.begin(), flat.end());
    std::size_t base = 0, pi = 0;
    for (std::size_t idx : flat) {
      while (idx >= base + params[pi].size()) base += params[pi++].size();
      coords.emplace_back(pi, idx - base);
    }
  }

  GradCheckResult res;
  for (auto [pi, j] : coords) {
    Var& p = params[pi];
    const auto g = p.grad();
    const double analytic = g.empty() ? 0.0 : g[j];
    double& slot = p.mutable_value()[j];
    const double saved = slot;
    const double h = opts.h;
    auto at = [&](double shift) {
      slot = saved + shift;
      return f().item();
    };
    const double f2 = at(2 * h), f1 = at(h), m1 = at(-h), m2 = at(-2 * h);
    slot = saved;
    if (!std::isfinite(f2) || !std::isfinite(f1) || !std::isfinite(m1) || !std::isfinite(m2) ||
        !std::isfinite(analytic))
      throw ComputeError("grad_check: non-finite value at parameter " + std::to_string(pi) + "[" +
                         std::to_string(j) + "]");
    // Five-point stencil: truncation error O(h^4).
    const double numeric = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h);
    const double err = std::abs(analytic - numeric);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opts.abs_floor});
    res.max_abs_error = std::max(res.max_abs_error, err);
    res.max_rel_error = std::max(res.max_rel_error, err / denom);
    ++res.coords_checked;
  }
  return res;
}

}  // namespace wattnet::ad
