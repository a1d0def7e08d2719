#include "misstsm/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace misstsm {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_2d(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected 2D tensor, got " + t.shape_str());
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.shape[1] != b.shape[0]) {
    throw std::invalid_argument("matmul: inner dimensions disagree, " + a.shape_str() + " x " +
                                b.shape_str());
  }
  const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
  Tensor c({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data.data() + i * k;
    double* crow = c.data.data() + i * p;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b.data.data() + kk * p;
      for (std::size_t j = 0; j < p; ++j) crow[j] += av * brow[j];
    }
  }
  return c;
}

MatmulGrads matmul_backward(const Tensor& dc, const Tensor& a, const Tensor& b) {
  // dA = dC.B^T, dB = A^T.dC; written out to avoid materializing transposes.
  require_2d(dc, "matmul_backward");
  const std::size_t m = a.shape[0], k = a.shape[1], p = b.shape[1];
  if (dc.shape[0] != m || dc.shape[1] != p) {
    throw std::invalid_argument("matmul_backward: upstream shape " + dc.shape_str() +
                                " does not match product " + Tensor::shape_str({m, p}));
  }
  MatmulGrads g{Tensor({m, k}), Tensor({k, p})};
  for (std::size_t i = 0; i < m; ++i) {
    const double* dcrow = dc.data.data() + i * p;
    double* darow = g.da.data.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b.data.data() + kk * p;
      double acc = 0.0;
      for (std::size_t j = 0; j < p; ++j) acc += dcrow[j] * brow[j];
      darow[kk] = acc;
    }
    const double* arow = a.data.data() + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      double* dbrow = g.db.data.data() + kk * p;
      for (std::size_t j = 0; j < p; ++j) dbrow[j] += av * dcrow[j];
    }
  }
  return g;
}

SoftmaxResult softmax_with_bias(const Tensor& scores, const Tensor& bias) {
  if (scores.rank() == 0 || scores.size() == 0) {
    throw std::invalid_argument("softmax_with_bias: empty input");
  }
  const std::size_t n = scores.shape.back();
  const std::size_t rows = scores.size() / n;
  const bool full = bias.same_shape(scores);
  if (!full && !(bias.rank() == 1 && bias.shape[0] == n)) {
    throw std::invalid_argument("softmax_with_bias: bias " + bias.shape_str() +
                                " not broadcastable to " + scores.shape_str());
  }
  SoftmaxResult r;
  r.values = Tensor(scores.shape);
  r.degenerate_rows.assign(rows, 0);
  std::vector<double> buf(n);
  for (std::size_t row = 0; row < rows; ++row) {
    const double* s = scores.data.data() + row * n;
    const double* b = full ? bias.data.data() + row * n : bias.data.data();
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      buf[j] = s[j] + b[j];
      mx = std::max(mx, buf[j]);
    }
    double* out = r.values.data.data() + row * n;
    if (mx <= kMaskedRowThreshold) {
      r.degenerate_rows[row] = 1;
      r.any_degenerate = true;
      std::fill(out, out + n, 0.0);
      continue;
    }
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = std::exp(buf[j] - mx);
      z += out[j];
    }
    for (std::size_t j = 0; j < n; ++j) out[j] /= z;
  }
  return r;
}

Tensor softmax_backward(const Tensor& dout, const SoftmaxResult& fw) {
  require_same_shape(dout, fw.values, "softmax_backward");
  const std::size_t n = fw.values.shape.back();
  const std::size_t rows = fw.values.size() / n;
  Tensor ds(fw.values.shape);
  for (std::size_t row = 0; row < rows; ++row) {
    if (fw.degenerate_rows[row]) continue;  // zero row, zero gradient
    const double* y = fw.values.data.data() + row * n;
    const double* dy = dout.data.data() + row * n;
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
    double* d = ds.data.data() + row * n;
    for (std::size_t j = 0; j < n; ++j) d[j] = y[j] * (dy[j] - dot);
  }
  return ds;
}

Tensor softmax(const Tensor& scores) {
  Tensor zero({scores.shape.back()});
  return softmax_with_bias(scores, zero).values;
}

double mse_masked(const Tensor& pred, const Tensor& target, const Tensor& observed) {
  require_same_shape(pred, target, "mse_masked");
  require_same_shape(pred, observed, "mse_masked");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.data[i] - target.data[i];
    num += observed.data[i] * d * d;
    den += observed.data[i];
  }
  if (den <= 0.0) {
    throw std::runtime_error("mse_masked: no observed entries, metric undefined");
  }
  return num / den;
}

Tensor mse_masked_backward(const Tensor& pred, const Tensor& target, const Tensor& observed,
                           double upstream) {
  double den = 0.0;
  for (double v : observed.data) den += v;
  if (den <= 0.0) {
    throw std::runtime_error("mse_masked_backward: no observed entries");
  }
  Tensor dpred(pred.shape);
  const double c = 2.0 * upstream / den;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    dpred.data[i] = c * observed.data[i] * (pred.data[i] - target.data[i]);
  }
  return dpred;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] + b.data[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] - b.data[i];
  return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor c(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] * b.data[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c(a.shape);
  for (std::size_t i = 0; i < a.size(); ++i) c.data[i] = a.data[i] * s;
  return c;
}

MulGrads mul_backward(const Tensor& dc, const Tensor& a, const Tensor& b) {
  return MulGrads{mul(dc, b), mul(dc, a)};
}

Tensor relu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& dy, const Tensor& x) {
  require_same_shape(dy, x, "relu_backward");
  Tensor dx(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = x.data[i] > 0.0 ? dy.data[i] : 0.0;
  return dx;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data[i];
    y.data[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  }
  return y;
}

Tensor gelu_backward(const Tensor& dy, const Tensor& x) {
  require_same_shape(dy, x, "gelu_backward");
  Tensor dx(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    dx.data[i] = dy.data[i] * (cdf + v * pdf);
  }
  return dx;
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  const std::size_t p = w.shape[1];
  if (!(b.rank() == 1 && b.shape[0] == p)) {
    throw std::invalid_argument("affine: bias " + b.shape_str() + " does not match output width " +
                                std::to_string(p));
  }
  for (std::size_t i = 0; i < y.shape[0]; ++i)
    for (std::size_t j = 0; j < p; ++j) y.at(i, j) += b.data[j];
  return y;
}

AffineGrads affine_backward(const Tensor& dy, const Tensor& x, const Tensor& w) {
  MatmulGrads mg = matmul_backward(dy, x, w);
  Tensor db({w.shape[1]});
  for (std::size_t i = 0; i < dy.shape[0]; ++i)
    for (std::size_t j = 0; j < dy.shape[1]; ++j) db.data[j] += dy.at(i, j);
  return AffineGrads{std::move(mg.da), std::move(mg.db), std::move(db)};
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  LayerNormCache* cache, double eps) {
  const std::size_t n = x.shape.back();
  if (gamma.size() != n || beta.size() != n) {
    throw std::invalid_argument("layer_norm: gain/shift width " + gamma.shape_str() +
                                " does not match last axis of " + x.shape_str());
  }
  const std::size_t rows = x.size() / n;
  Tensor y(x.shape);
  Tensor xhat(x.shape);
  std::vector<double> inv_std(rows);
  for (std::size_t row = 0; row < rows; ++row) {
    const double* xr = x.data.data() + row * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xr[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double istd = 1.0 / std::sqrt(var + eps);
    inv_std[row] = istd;
    double* xh = xhat.data.data() + row * n;
    double* yr = y.data.data() + row * n;
    for (std::size_t j = 0; j < n; ++j) {
      xh[j] = (xr[j] - mu) * istd;
      yr[j] = xh[j] * gamma.data[j] + beta.data[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

LayerNormGrads layer_norm_backward(const Tensor& dy, const LayerNormCache& cache,
                                   const Tensor& gamma) {
  const Tensor& xhat = cache.xhat;
  require_same_shape(dy, xhat, "layer_norm_backward");
  const std::size_t n = xhat.shape.back();
  const std::size_t rows = xhat.size() / n;
  LayerNormGrads g{Tensor(xhat.shape), Tensor({n}), Tensor({n})};
  for (std::size_t row = 0; row < rows; ++row) {
    const double* dyr = dy.data.data() + row * n;
    const double* xh = xhat.data.data() + row * n;
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dxh = dyr[j] * gamma.data[j];
      sum_dxhat += dxh;
      sum_dxhat_xhat += dxh * xh[j];
      g.dgamma.data[j] += dyr[j] * xh[j];
      g.dbeta.data[j] += dyr[j];
    }
    const double istd = cache.inv_std[row];
    double* dx = g.dx.data.data() + row * n;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double dxh = dyr[j] * gamma.data[j];
      dx[j] = istd * (dxh - inv_n * sum_dxhat - xh[j] * inv_n * sum_dxhat_xhat);
    }
  }
  return g;
}

Tensor concat_last(const std::vector<const Tensor*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_last: nothing to concatenate");
  std::vector<std::size_t> lead(parts[0]->shape.begin(), parts[0]->shape.end() - 1);
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    std::vector<std::size_t> pl(p->shape.begin(), p->shape.end() - 1);
    if (pl != lead) {
      throw std::invalid_argument("concat_last: leading dims mismatch " + p->shape_str());
    }
    total += p->shape.back();
  }
  std::vector<std::size_t> out_shape = lead;
  out_shape.push_back(total);
  Tensor out(out_shape);
  const std::size_t rows = out.size() / total;
  std::size_t offset = 0;
  for (const Tensor* p : parts) {
    const std::size_t w = p->shape.back();
    for (std::size_t row = 0; row < rows; ++row) {
      std::copy_n(p->data.data() + row * w, w, out.data.data() + row * total + offset);
    }
    offset += w;
  }
  return out;
}

std::vector<Tensor> split_last(const Tensor& x, const std::vector<std::size_t>& widths) {
  std::size_t total = 0;
  for (std::size_t w : widths) total += w;
  if (total != x.shape.back()) {
    throw std::invalid_argument("split_last: widths do not cover last axis of " + x.shape_str());
  }
  std::vector<std::size_t> lead(x.shape.begin(), x.shape.end() - 1);
  const std::size_t rows = x.size() / total;
  std::vector<Tensor> parts;
  parts.reserve(widths.size());
  std::size_t offset = 0;
  for (std::size_t w : widths) {
    std::vector<std::size_t> shp = lead;
    shp.push_back(w);
    Tensor p(shp);
    for (std::size_t row = 0; row < rows; ++row) {
      std::copy_n(x.data.data() + row * total + offset, w, p.data.data() + row * w);
    }
    offset += w;
    parts.push_back(std::move(p));
  }
  return parts;
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  Tensor y({x.shape[1], x.shape[0]});
  for (std::size_t i = 0; i < x.shape[0]; ++i)
    for (std::size_t j = 0; j < x.shape[1]; ++j) y.at(j, i) = x.at(i, j);
  return y;
}

Tensor slice_rows(const Tensor& x, std::size_t lo, std::size_t hi) {
  if (x.rank() < 1 || lo > hi || hi > x.shape[0]) {
    throw std::invalid_argument("slice_rows: range [" + std::to_string(lo) + ", " +
                                std::to_string(hi) + ") out of bounds for " + x.shape_str());
  }
  std::vector<std::size_t> shp = x.shape;
  shp[0] = hi - lo;
  const std::size_t row_size = x.size() / x.shape[0];
  Tensor y(shp);
  std::copy_n(x.data.data() + lo * row_size, (hi - lo) * row_size, y.data.data());
  return y;
}

double sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data) s += v;
  return s;
}

double mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean: empty tensor");
  return sum(x) / static_cast<double>(x.size());
}

Tensor sum_backward(double dy, const std::vector<std::size_t>& shape) {
  return Tensor::full(shape, dy);
}

Tensor mean_backward(double dy, const std::vector<std::size_t>& shape) {
  return Tensor::full(shape, dy / static_cast<double>(Tensor::count(shape)));
}

Tensor mean_rows(const Tensor& x) {
  require_2d(x, "mean_rows");
  const std::size_t t = x.shape[0], d = x.shape[1];
  Tensor y({d});
  for (std::size_t i = 0; i < t; ++i)
    for (std::size_t j = 0; j < d; ++j) y.data[j] += x.at(i, j);
  for (std::size_t j = 0; j < d; ++j) y.data[j] /= static_cast<double>(t);
  return y;
}

Tensor mean_rows_backward(const Tensor& dy, std::size_t rows) {
  const std::size_t d = dy.size();
  Tensor dx({rows, d});
  const double inv = 1.0 / static_cast<double>(rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < d; ++j) dx.at(i, j) = dy.data[j] * inv;
  return dx;
}

double cross_entropy_with_logits(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw std::invalid_argument("cross_entropy_with_logits: label " + std::to_string(label) +
                                " out of range for " + logits.shape_str());
  }
  double mx = logits.data[0];
  for (double v : logits.data) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits.data) z += std::exp(v - mx);
  return std::log(z) + mx - logits.data[label];
}

Tensor cross_entropy_with_logits_backward(const Tensor& logits, std::size_t label,
                                          double upstream) {
  Tensor g = softmax(logits);
  g.data[label] -= 1.0;
  for (double& v : g.data) v *= upstream;
  return g;
}

}  // namespace misstsm
