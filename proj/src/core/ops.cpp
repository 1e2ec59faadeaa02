// Copyright 2026 The carat Authors
// Licensed under the Apache License, Version 2.0

#include "carat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "carat/error.hpp"
#include "carat/kernels.hpp"

CARAT_NS_BEGIN

namespace {

using detail::Node;

// Gradient buffer of parent i, or nullptr when it does not need one.
Real* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  return p.requires_grad ? p.ensure_grad().data() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InputError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw InputError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

std::size_t last_dim(const Tensor& x) { return x.rank() == 0 ? 1 : x.shape().back(); }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (Real* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (Real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (Real* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Tensor scale(const Tensor& a, Real s) {
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * s;
  return make_result(a.shape(), std::move(out), {a}, [s](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * s;
    }
  });
}

Tensor add_const(const Tensor& a, std::span<const Real> c) {
  if (c.size() != a.numel()) throw InputError("add_const: size mismatch");
  std::vector<Real> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + c[i];
  return make_result(a.shape(), std::move(out), {a}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1);
  const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
  if ((trans_b ? b.dim(1) : b.dim(0)) != k) {
    throw InputError("matmul: inner dimensions differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<Real> out(m * n);
  kernels::gemm(false, trans_b, m, n, k, a.values().data(), b.values().data(), out.data(), false);
  return make_result({m, n}, std::move(out), {a, b}, [m, n, k, trans_b](Node& self) {
    const Real* av = self.parents[0]->value.data();
    const Real* bv = self.parents[1]->value.data();
    const Real* g = self.grad.data();
    if (Real* ga = parent_grad(self, 0)) {
      // dA = dC * op(B)^T
      kernels::gemm(false, !trans_b, m, k, n, g, bv, ga, true);
    }
    if (Real* gb = parent_grad(self, 1)) {
      if (trans_b) {
        kernels::gemm(true, false, n, k, m, g, av, gb, true);  // dB = dC^T * A
      } else {
        kernels::gemm(true, false, k, n, m, av, g, gb, true);  // dB = A^T * dC
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t r = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in) throw InputError("linear: weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  if (bias.numel() != out_dim) throw InputError("linear: bias size mismatch");
  std::vector<Real> out(r * out_dim);
  for (std::size_t i = 0; i < r; ++i) std::copy(bias.values().begin(), bias.values().end(), out.begin() + i * out_dim);
  kernels::gemm(false, false, r, out_dim, in, x.values().data(), w.values().data(), out.data(), true);
  return make_result({r, out_dim}, std::move(out), {x, w, bias}, [r, in, out_dim](Node& self) {
    const Real* g = self.grad.data();
    if (Real* gx = parent_grad(self, 0)) {
      kernels::gemm(false, true, r, in, out_dim, g, self.parents[1]->value.data(), gx, true);
    }
    if (Real* gw = parent_grad(self, 1)) {
      kernels::gemm(true, false, in, out_dim, r, self.parents[0]->value.data(), g, gw, true);
    }
    if (Real* gb = parent_grad(self, 2)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < out_dim; ++j) gb[j] += g[i * out_dim + j];
      }
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real z = x[i];
    out[i] = z >= 0 ? Real(1) / (Real(1) + std::exp(-z)) : std::exp(z) / (Real(1) + std::exp(z));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const Real s = self.value[i];
        g[i] += self.grad[i] * s * (Real(1) - s);
      }
    }
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const Real t = self.value[i];
        g[i] += self.grad[i] * (Real(1) - t * t);
      }
    }
  });
}

namespace {
constexpr Real kGeluC = Real(0.7978845608028654);  // sqrt(2 / pi)
constexpr Real kGeluA = Real(0.044715);
}  // namespace

Tensor gelu(const Tensor& x) {
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const Real v = x[i];
    out[i] = Real(0.5) * v * (Real(1) + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        const Real v = xv[i];
        const Real t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
        const Real dt = (Real(1) - t * t) * kGeluC * (Real(1) + Real(3) * kGeluA * v * v);
        g[i] += self.grad[i] * (Real(0.5) * (Real(1) + t) + Real(0.5) * v * dt);
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps) {
  require_matrix(x, "layer_norm");
  const std::size_t r = x.dim(0), c = x.dim(1);
  if (gamma.numel() != c || beta.numel() != c) throw InputError("layer_norm: affine size mismatch");
  std::vector<Real> out(r * c);
  auto xhat = std::make_shared<std::vector<Real>>(r * c);
  auto inv_std = std::make_shared<std::vector<Real>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = x.values().data() + i * c;
    Real mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<Real>(c);
    Real var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(c);
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const Real h = (row[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      out[i * c + j] = h * gamma[j] + beta[j];
    }
  }
  return make_result({r, c}, std::move(out), {x, gamma, beta}, [r, c, xhat, inv_std](Node& self) {
    const Real* g = self.grad.data();
    const auto& gam = self.parents[1]->value;
    if (Real* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        Real mean_d = 0, mean_dh = 0;
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = g[i * c + j] * gam[j];
          mean_d += d;
          mean_dh += d * (*xhat)[i * c + j];
        }
        mean_d /= static_cast<Real>(c);
        mean_dh /= static_cast<Real>(c);
        for (std::size_t j = 0; j < c; ++j) {
          const Real d = g[i * c + j] * gam[j];
          gx[i * c + j] += (*inv_std)[i] * (d - mean_d - (*xhat)[i * c + j] * mean_dh);
        }
      }
    }
    if (Real* gg = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * (*xhat)[i * c + j];
      }
    }
    if (Real* gb = parent_grad(self, 2)) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
    }
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t c = last_dim(x);
  if (c == 0) throw InputError("softmax: empty axis");
  const std::size_t r = x.numel() / c;
  std::vector<Real> out(x.numel());
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = x.values().data() + i * c;
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!std::isfinite(row[j])) throw NumericError("softmax: non-finite input");
      mx = std::max(mx, row[j]);
    }
    Real total = 0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(row[j] - mx);
      total += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= total;
  }
  return make_result(x.shape(), std::move(out), {x}, [r, c](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < r; ++i) {
        Real dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.value[i * c + j] * (self.grad[i * c + j] - dot);
      }
    }
  });
}

Tensor l2_normalize(const Tensor& x) {
  const std::size_t c = last_dim(x);
  const std::size_t r = c ? x.numel() / c : 0;
  std::vector<Real> out(x.numel());
  auto norms = std::make_shared<std::vector<Real>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    const Real* row = x.values().data() + i * c;
    double sq = 0;
    for (std::size_t j = 0; j < c; ++j) sq += static_cast<double>(row[j]) * row[j];
    const double nrm = std::sqrt(sq);
    if (!(nrm > kNormEpsilon)) throw DegenerateVectorError("l2_normalize: row norm at or below 1e-12");
    (*norms)[i] = static_cast<Real>(nrm);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = static_cast<Real>(row[j] / nrm);
  }
  return make_result(x.shape(), std::move(out), {x}, [r, c, norms](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      // d(x/|x|) = (I - y y^T) / |x|
      for (std::size_t i = 0; i < r; ++i) {
        Real dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          g[i * c + j] += (self.grad[i * c + j] - dot * self.value[i * c + j]) / (*norms)[i];
        }
      }
    }
  });
}

MaxPoolResult maxpool_stack(const Tensor& stack) {
  if (stack.rank() < 1 || stack.dim(0) == 0) throw InputError("maxpool_stack: empty stack");
  const std::size_t m = stack.dim(0);
  const std::size_t width = stack.numel() / m;
  Shape out_shape(stack.shape().begin() + 1, stack.shape().end());
  std::vector<Real> out(width);
  auto arg = std::make_shared<std::vector<int>>(width, 0);
  for (std::size_t j = 0; j < width; ++j) {
    Real best = stack[j];
    int who = 0;
    for (std::size_t k = 1; k < m; ++k) {
      if (stack[k * width + j] > best) {  // strict: ties keep the lowest index
        best = stack[k * width + j];
        who = static_cast<int>(k);
      }
    }
    out[j] = best;
    (*arg)[j] = who;
  }
  MaxPoolResult res;
  res.argmax = *arg;
  res.values = make_result(std::move(out_shape), std::move(out), {stack}, [width, arg](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t j = 0; j < width; ++j) g[static_cast<std::size_t>((*arg)[j]) * width + j] += self.grad[j];
    }
  });
  return res;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_cols: nothing to concatenate");
  const std::size_t r = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.dim(0) != r) throw InputError("concat_cols: row counts differ");
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<Real> out(r * total);
  for (std::size_t i = 0; i < r; ++i) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      std::copy_n(parts[k].values().data() + i * widths[k], widths[k], out.data() + i * total + off);
      off += widths[k];
    }
  }
  return make_result({r, total}, std::move(out), parts, [r, total, widths](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (Real* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) g[i * widths[k] + j] += self.grad[i * total + off + j];
        }
      }
      off += widths[k];
    }
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw InputError("concat_rows: nothing to concatenate");
  const std::size_t c = parts[0].dim(1);
  std::size_t rows = 0;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.dim(1) != c) throw InputError("concat_rows: column counts differ");
    rows += p.dim(0);
    sizes.push_back(p.numel());
  }
  std::vector<Real> out;
  out.reserve(rows * c);
  for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
  return make_result({rows, c}, std::move(out), parts, [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      if (Real* g = parent_grad(self, k)) {
        for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += self.grad[off + i];
      }
      off += sizes[k];
    }
  });
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  require_matrix(x, "gather_rows");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<Real> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= r) throw InputError("gather_rows: index out of range");
    std::copy_n(x.values().data() + index[i] * c, c, out.data() + i * c);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_result({index.size(), c}, std::move(out), {x}, [c, idx = std::move(idx)](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < idx.size(); ++i) {
        for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw InputError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<Real> out(x.values().begin(), x.values().end());
  return make_result(std::move(shape), std::move(out), {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sum(const Tensor& x) {
  Real s = 0;
  for (Real v : x.values()) s += v;
  return make_result({}, {s}, {x}, [](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      const Real up = self.grad[0];
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += up;
    }
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw InputError("mean: empty tensor");
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

Tensor bce_with_logits(const Tensor& logits, std::span<const Real> targets) {
  if (targets.size() != logits.numel()) throw InputError("bce_with_logits: target count mismatch");
  if (logits.numel() == 0) throw InputError("bce_with_logits: empty input");
  Real total = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Real t = targets[i];
    if (t != Real(0) && t != Real(1)) throw InputError("bce_with_logits: targets must be 0 or 1");
    const Real z = logits[i];
    if (!std::isfinite(z)) throw NumericError("bce_with_logits: non-finite logit");
    total += std::max(z, Real(0)) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  const Real n = static_cast<Real>(targets.size());
  std::vector<Real> tgt(targets.begin(), targets.end());
  return make_result({}, {total / n}, {logits}, [n, tgt = std::move(tgt)](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      const auto& z = self.parents[0]->value;
      const Real up = self.grad[0] / n;
      for (std::size_t i = 0; i < tgt.size(); ++i) {
        const Real s = z[i] >= 0 ? Real(1) / (Real(1) + std::exp(-z[i])) : std::exp(z[i]) / (Real(1) + std::exp(z[i]));
        g[i] += up * (s - tgt[i]);
      }
    }
  });
}

Tensor group_frobenius(const Tensor& x, std::size_t groups, bool squared) {
  if (groups == 0 || x.numel() % groups != 0) throw InputError("group_frobenius: rows do not split into groups");
  const std::size_t block = x.numel() / groups;
  std::vector<Real> out(groups);
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    Real sq = 0;
    for (std::size_t i = 0; i < block; ++i) sq += x[gidx * block + i] * x[gidx * block + i];
    out[gidx] = squared ? sq : std::sqrt(sq);
  }
  return make_result({groups}, std::move(out), {x}, [groups, block, squared](Node& self) {
    if (Real* g = parent_grad(self, 0)) {
      const auto& xv = self.parents[0]->value;
      for (std::size_t gidx = 0; gidx < groups; ++gidx) {
        Real factor;
        if (squared) {
          factor = Real(2) * self.grad[gidx];
        } else {
          if (self.value[gidx] == Real(0)) continue;
          factor = self.grad[gidx] / self.value[gidx];
        }
        for (std::size_t i = 0; i < block; ++i) g[gidx * block + i] += factor * xv[gidx * block + i];
      }
    }
  });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  const Tensor d = sub(a, b);
  return mean(mul(d, d));
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v, std::span<const std::uint8_t> mask,
                            std::size_t batch, std::size_t seq, std::size_t heads) {
  require_matrix(q, "attention");
  require_same_shape(q, k, "attention");
  require_same_shape(q, v, "attention");
  const std::size_t d = q.dim(1);
  if (q.dim(0) != batch * seq || mask.size() != batch * seq) throw InputError("attention: batch/seq mismatch");
  if (heads == 0 || d % heads != 0) throw InputError("attention: heads must divide the model width");
  for (std::size_t b = 0; b < batch; ++b) {
    if (std::none_of(mask.begin() + b * seq, mask.begin() + (b + 1) * seq, [](std::uint8_t x) { return x != 0; })) {
      throw InputError("attention: sequence " + std::to_string(b) + " has no valid positions");
    }
  }
  const std::size_t dh = d / heads;
  const Real inv_scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  auto probs = std::make_shared<std::vector<Real>>(batch * heads * seq * seq, Real(0));
  std::vector<std::uint8_t> msk(mask.begin(), mask.end());
  std::vector<Real> out(batch * seq * d, Real(0));
  const Real* qv = q.values().data();
  const Real* kv = k.values().data();
  const Real* vv = v.values().data();

#pragma omp parallel for schedule(static) if (batch * heads > 1 && batch * seq * seq * d >= (1u << 15))
  for (std::size_t bh = 0; bh < batch * heads; ++bh) {
    const std::size_t b = bh / heads, h = bh % heads;
    Real* P = probs->data() + bh * seq * seq;
    for (std::size_t i = 0; i < seq; ++i) {
      if (!msk[b * seq + i]) continue;
      const Real* qi = qv + (b * seq + i) * d + h * dh;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < seq; ++j) {
        if (!msk[b * seq + j]) continue;
        const Real* kj = kv + (b * seq + j) * d + h * dh;
        Real s = 0;
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        P[i * seq + j] = s * inv_scale;
        mx = std::max(mx, P[i * seq + j]);
      }
      Real total = 0;
      for (std::size_t j = 0; j < seq; ++j) {
        if (!msk[b * seq + j]) continue;
        P[i * seq + j] = std::exp(P[i * seq + j] - mx);
        total += P[i * seq + j];
      }
      Real* oi = out.data() + (b * seq + i) * d + h * dh;
      for (std::size_t j = 0; j < seq; ++j) {
        if (!msk[b * seq + j]) continue;
        P[i * seq + j] /= total;
        const Real* vj = vv + (b * seq + j) * d + h * dh;
        for (std::size_t c = 0; c < dh; ++c) oi[c] += P[i * seq + j] * vj[c];
      }
    }
  }

  return make_result(q.shape(), std::move(out), {q, k, v},
                     [batch, seq, heads, d, dh, inv_scale, probs, msk = std::move(msk)](Node& self) {
    Real* gq = parent_grad(self, 0);
    Real* gk = parent_grad(self, 1);
    Real* gv = parent_grad(self, 2);
    const Real* qv = self.parents[0]->value.data();
    const Real* kv = self.parents[1]->value.data();
    const Real* vv = self.parents[2]->value.data();
    const Real* go = self.grad.data();
#pragma omp parallel if (batch * heads > 1 && batch * seq * seq * d >= (1u << 15))
    {
      std::vector<Real> dp(seq);
#pragma omp for schedule(static)
      for (std::size_t bh = 0; bh < batch * heads; ++bh) {
        const std::size_t b = bh / heads, h = bh % heads;
        const Real* P = probs->data() + bh * seq * seq;
        for (std::size_t i = 0; i < seq; ++i) {
          if (!msk[b * seq + i]) continue;
          const Real* goi = go + (b * seq + i) * d + h * dh;
          Real row_dot = 0;
          for (std::size_t j = 0; j < seq; ++j) {
            dp[j] = 0;
            if (!msk[b * seq + j]) continue;
            const Real* vj = vv + (b * seq + j) * d + h * dh;
            for (std::size_t c = 0; c < dh; ++c) dp[j] += goi[c] * vj[c];
            row_dot += dp[j] * P[i * seq + j];
            if (gv) {
              Real* gvj = gv + (b * seq + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gvj[c] += P[i * seq + j] * goi[c];
            }
          }
          const Real* qi = qv + (b * seq + i) * d + h * dh;
          for (std::size_t j = 0; j < seq; ++j) {
            if (!msk[b * seq + j]) continue;
            const Real ds = P[i * seq + j] * (dp[j] - row_dot) * inv_scale;
            const Real* kj = kv + (b * seq + j) * d + h * dh;
            if (gq) {
              Real* gqi = gq + (b * seq + i) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gqi[c] += ds * kj[c];
            }
            if (gk) {
              Real* gkj = gk + (b * seq + j) * d + h * dh;
              for (std::size_t c = 0; c < dh; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    }
  });
}

CARAT_NS_END
