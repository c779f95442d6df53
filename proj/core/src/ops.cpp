#include "fedali/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace fedali {

using autograd::Node;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapCM = Eigen::Map<const MatRM>;
using MapV = Eigen::Map<Eigen::VectorXd>;
using MapCV = Eigen::Map<const Eigen::VectorXd>;

namespace {

Tensor make_op(Shape shape, std::vector<Tensor> inputs,
               std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::make_shared<std::vector<double>>(numel(node->shape), 0.0);
  node->leaf = false;
  for (const Tensor& t : inputs) {
    node->parents.push_back(t.node());
    node->requires_grad = node->requires_grad || t.requires_grad();
  }
  if (node->requires_grad) node->backward_fn = std::move(backward_fn);
  return Tensor::wrap(std::move(node));
}

void accumulate(const std::shared_ptr<Node>& p, const double* g,
                std::size_t n) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  MapV(p->grad.data(), n) += MapCV(g, n);
}

// Flattens [..., f] into rows x f.
std::size_t leading_rows(const Shape& s) {
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
  return r;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  FEDALI_CHECK(a.shape() == b.shape(), op, ": shape mismatch ",
               shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const std::size_t n = a.size();
  Tensor out = make_op(a.shape(), {a, b}, [n](Node& self) {
    accumulate(self.parents[0], self.grad.data(), n);
    accumulate(self.parents[1], self.grad.data(), n);
  });
  MapV(out.data(), n) = MapCV(a.data(), n) + MapCV(b.data(), n);
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const std::size_t n = a.size();
  Tensor out = make_op(a.shape(), {a, b}, [n](Node& self) {
    accumulate(self.parents[0], self.grad.data(), n);
    auto& p = self.parents[1];
    if (p->requires_grad) {
      p->ensure_grad();
      MapV(p->grad.data(), n) -= MapCV(self.grad.data(), n);
    }
  });
  MapV(out.data(), n) = MapCV(a.data(), n) - MapCV(b.data(), n);
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const std::size_t n = a.size();
  Tensor out = make_op(a.shape(), {a, b}, [n](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapV(pa->grad.data(), n).array() +=
          MapCV(self.grad.data(), n).array() * MapCV(pb->data->data(), n).array();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapV(pb->grad.data(), n).array() +=
          MapCV(self.grad.data(), n).array() * MapCV(pa->data->data(), n).array();
    }
  });
  MapV(out.data(), n) =
      MapCV(a.data(), n).cwiseProduct(MapCV(b.data(), n));
  return out;
}

Tensor scale(const Tensor& a, double c) {
  const std::size_t n = a.size();
  Tensor out = make_op(a.shape(), {a}, [n, c](Node& self) {
    auto& p = self.parents[0];
    if (p->requires_grad) {
      p->ensure_grad();
      MapV(p->grad.data(), n) += c * MapCV(self.grad.data(), n);
    }
  });
  MapV(out.data(), n) = c * MapCV(a.data(), n);
  return out;
}

Tensor blend(const Tensor& a, const Tensor& b, double beta) {
  check_same_shape(a, b, "blend");
  const std::size_t n = a.size();
  Tensor out = make_op(a.shape(), {a, b}, [n, beta](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapV(pa->grad.data(), n) += beta * MapCV(self.grad.data(), n);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapV(pb->grad.data(), n) += (1.0 - beta) * MapCV(self.grad.data(), n);
    }
  });
  MapV(out.data(), n) =
      beta * MapCV(a.data(), n) + (1.0 - beta) * MapCV(b.data(), n);
  return out;
}

Tensor sigmoid(const Tensor& a) {
  const std::size_t n = a.size();
  Tensor out = make_op(a.shape(), {a}, [n](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* y = self.data->data();
    const double* g = self.grad.data();
    double* d = p->grad.data();
    for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return out;
}

Tensor gelu(const Tensor& a) {
  const std::size_t n = a.size();
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  Tensor out = make_op(a.shape(), {a}, [n](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double* x = p->data->data();
    const double* g = self.grad.data();
    double* d = p->grad.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
      const double pdf = inv_sqrt2pi * std::exp(-0.5 * x[i] * x[i]);
      d[i] += g[i] * (cdf + x[i] * pdf);
    }
  });
  const double* x = a.data();
  double* y = out.data();
  for (std::size_t i = 0; i < n; ++i)
    y[i] = x[i] * 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  FEDALI_CHECK(a.ndim() == 2 && b.ndim() == 2, "matmul: expects 2-D inputs");
  FEDALI_CHECK(a.dim(1) == b.dim(0), "matmul: inner dims differ, ",
               shape_str(a.shape()), " x ", shape_str(b.shape()));
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor out = make_op({n, m}, {a, b}, [n, k, m](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    MapCM G(self.grad.data(), n, m);
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapCM B(pb->data->data(), k, m);
      MapM(pa->grad.data(), n, k).noalias() += G * B.transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapCM A(pa->data->data(), n, k);
      MapM(pb->grad.data(), k, m).noalias() += A.transpose() * G;
    }
  });
  MapM(out.data(), n, m).noalias() =
      MapCM(a.data(), n, k) * MapCM(b.data(), k, m);
  return out;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  FEDALI_CHECK(x.ndim() >= 1 && W.ndim() == 2 && b.ndim() == 1,
               "linear: bad ranks");
  const std::size_t in = W.dim(0), outf = W.dim(1);
  FEDALI_CHECK(x.shape().back() == in, "linear: input width ",
               x.shape().back(), " != W rows ", in);
  FEDALI_CHECK(b.dim(0) == outf, "linear: bias width ", b.dim(0),
               " != W cols ", outf);
  const std::size_t rows = leading_rows(x.shape()) * 1;
  Shape out_shape = x.shape();
  out_shape.back() = outf;

  Tensor out = make_op(out_shape, {x, W, b}, [rows, in, outf](Node& self) {
    auto& px = self.parents[0];
    auto& pw = self.parents[1];
    auto& pb = self.parents[2];
    MapCM G(self.grad.data(), rows, outf);
    if (px->requires_grad) {
      px->ensure_grad();
      MapCM Wm(pw->data->data(), in, outf);
      MapM(px->grad.data(), rows, in).noalias() += G * Wm.transpose();
    }
    if (pw->requires_grad) {
      pw->ensure_grad();
      MapCM X(px->data->data(), rows, in);
      MapM(pw->grad.data(), in, outf).noalias() += X.transpose() * G;
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapV(pb->grad.data(), outf) += G.colwise().sum().transpose();
    }
  });
  MapM(out.data(), rows, outf).noalias() =
      MapCM(x.data(), rows, in) * MapCM(W.data(), in, outf);
  MapM(out.data(), rows, outf).rowwise() +=
      MapCV(b.data(), outf).transpose();
  return out;
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  FEDALI_CHECK(a.ndim() == 3 && b.ndim() == 3, "bmm: expects 3-D inputs");
  FEDALI_CHECK(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1),
               "bmm: incompatible shapes ", shape_str(a.shape()), " x ",
               shape_str(b.shape()));
  const std::size_t B = a.dim(0), n = a.dim(1), k = a.dim(2), m = b.dim(2);
  Tensor out = make_op({B, n, m}, {a, b}, [B, n, k, m](Node& self) {
    auto& pa = self.parents[0];
    auto& pb = self.parents[1];
    for (std::size_t i = 0; i < B; ++i) {
      MapCM G(self.grad.data() + i * n * m, n, m);
      if (pa->requires_grad) {
        pa->ensure_grad();
        MapCM Bm(pb->data->data() + i * k * m, k, m);
        MapM(pa->grad.data() + i * n * k, n, k).noalias() += G * Bm.transpose();
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        MapCM A(pa->data->data() + i * n * k, n, k);
        MapM(pb->grad.data() + i * k * m, k, m).noalias() += A.transpose() * G;
      }
    }
  });
  for (std::size_t i = 0; i < B; ++i) {
    MapM(out.data() + i * n * m, n, m).noalias() =
        MapCM(a.data() + i * n * k, n, k) * MapCM(b.data() + i * k * m, k, m);
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  FEDALI_CHECK(numel(shape) == a.size(), "reshape: ", shape_str(a.shape()),
               " -> ", shape_str(shape), " changes element count");
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = a.node()->data;  // view: same storage
  node->leaf = false;
  node->parents.push_back(a.node());
  node->requires_grad = a.requires_grad();
  const std::size_t n = a.size();
  if (node->requires_grad)
    node->backward_fn = [n](Node& self) {
      accumulate(self.parents[0], self.grad.data(), n);
    };
  return Tensor::wrap(std::move(node));
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& dims) {
  const std::size_t r = a.ndim();
  FEDALI_CHECK(dims.size() == r, "permute: rank mismatch");
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = a.dim(dims[i]);

  // strides of input, and for each output axis the matching input stride
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r - 1; i > 0; --i)
    in_stride[i - 1] = in_stride[i] * a.dim(i);
  std::vector<std::size_t> gather_stride(r);
  for (std::size_t i = 0; i < r; ++i) gather_stride[i] = in_stride[dims[i]];

  const std::size_t n = a.size();
  auto copy_permuted = [r, n](const double* src, double* dst,
                              const Shape& oshape,
                              const std::vector<std::size_t>& gstride,
                              bool scatter_add) {
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
      std::size_t src_off = 0;
      for (std::size_t i = 0; i < r; ++i) src_off += idx[i] * gstride[i];
      if (scatter_add)
        dst[src_off] += src[flat];
      else
        dst[flat] = src[src_off];
      for (std::size_t i = r; i-- > 0;) {
        if (++idx[i] < oshape[i]) break;
        idx[i] = 0;
      }
    }
  };

  Tensor out = make_op(
      out_shape, {a},
      [copy_permuted, out_shape, gather_stride](Node& self) {
        auto& p = self.parents[0];
        if (!p->requires_grad) return;
        p->ensure_grad();
        copy_permuted(self.grad.data(), p->grad.data(), out_shape,
                      gather_stride, /*scatter_add=*/true);
      });
  copy_permuted(a.data(), out.data(), out_shape, gather_stride, false);
  return out;
}

Tensor slice_last(const Tensor& a, std::size_t start, std::size_t len) {
  const std::size_t f = a.shape().back();
  FEDALI_CHECK(start + len <= f, "slice_last: [", start, ",", start + len,
               ") out of width ", f);
  const std::size_t rows = leading_rows(a.shape());
  Shape out_shape = a.shape();
  out_shape.back() = len;
  Tensor out = make_op(out_shape, {a}, [rows, f, start, len](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r)
      MapV(p->grad.data() + r * f + start, len) +=
          MapCV(self.grad.data() + r * len, len);
  });
  for (std::size_t r = 0; r < rows; ++r)
    MapV(out.data() + r * len, len) = MapCV(a.data() + r * f + start, len);
  return out;
}

Tensor mean_tokens(const Tensor& x) {
  FEDALI_CHECK(x.ndim() == 3, "mean_tokens: expects [B,Z,d]");
  const std::size_t B = x.dim(0), Z = x.dim(1), d = x.dim(2);
  Tensor out = make_op({B, d}, {x}, [B, Z, d](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double invZ = 1.0 / static_cast<double>(Z);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t z = 0; z < Z; ++z)
        MapV(p->grad.data() + (b * Z + z) * d, d) +=
            invZ * MapCV(self.grad.data() + b * d, d);
  });
  for (std::size_t b = 0; b < B; ++b) {
    MapV acc(out.data() + b * d, d);
    acc.setZero();
    for (std::size_t z = 0; z < Z; ++z)
      acc += MapCV(x.data() + (b * Z + z) * d, d);
    acc /= static_cast<double>(Z);
  }
  return out;
}

Tensor sum_all(const Tensor& a) {
  const std::size_t n = a.size();
  Tensor out = make_op({1}, {a}, [n](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0];
    MapV(p->grad.data(), n).array() += g;
  });
  out.data()[0] = MapCV(a.data(), n).sum();
  return out;
}

Tensor mean_all(const Tensor& a) {
  const std::size_t n = a.size();
  Tensor out = make_op({1}, {a}, [n](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(n);
    MapV(p->grad.data(), n).array() += g;
  });
  out.data()[0] = MapCV(a.data(), n).mean();
  return out;
}

Tensor softmax_last(const Tensor& a) {
  const std::size_t f = a.shape().back();
  const std::size_t rows = leading_rows(a.shape());
  Tensor out = make_op(a.shape(), {a}, [rows, f](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      MapCV y(self.data->data() + r * f, f);
      MapCV g(self.grad.data() + r * f, f);
      const double dot = y.dot(g);
      MapV(p->grad.data() + r * f, f).array() +=
          y.array() * (g.array() - dot);
    }
  });
  for (std::size_t r = 0; r < rows; ++r) {
    MapCV x(a.data() + r * f, f);
    MapV y(out.data() + r * f, f);
    const double mx = x.maxCoeff();
    y = (x.array() - mx).exp();
    y /= y.sum();
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t f = x.shape().back();
  FEDALI_CHECK(gamma.ndim() == 1 && gamma.dim(0) == f && beta.ndim() == 1 &&
                   beta.dim(0) == f,
               "layer_norm: gamma/beta must be [", f, "]");
  const std::size_t rows = leading_rows(x.shape());

  // saved for backward: normalized activations and per-row inverse sigma
  auto xhat = std::make_shared<std::vector<double>>(rows * f);
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);

  Tensor out =
      make_op(x.shape(), {x, gamma, beta}, [rows, f, xhat, inv_sigma](Node& self) {
        auto& px = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const double* gm = pg->data->data();
        for (std::size_t r = 0; r < rows; ++r) {
          MapCV g(self.grad.data() + r * f, f);
          MapCV xh(xhat->data() + r * f, f);
          if (pg->requires_grad) {
            pg->ensure_grad();
            MapV(pg->grad.data(), f).array() += g.array() * xh.array();
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            MapV(pb->grad.data(), f) += g;
          }
          if (px->requires_grad) {
            px->ensure_grad();
            Eigen::VectorXd gg =
                g.cwiseProduct(MapCV(gm, f));  // dL/dxhat
            const double m1 = gg.mean();
            const double m2 = gg.cwiseProduct(xh).mean();
            MapV(px->grad.data() + r * f, f).array() +=
                (*inv_sigma)[r] * (gg.array() - m1 - xh.array() * m2);
          }
        }
      });

  for (std::size_t r = 0; r < rows; ++r) {
    MapCV xr(x.data() + r * f, f);
    const double mu = xr.mean();
    const double var = (xr.array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    MapV xh(xhat->data() + r * f, f);
    xh = (xr.array() - mu) * is;
    MapV(out.data() + r * f, f) =
        xh.cwiseProduct(MapCV(gamma.data(), f)) + MapCV(beta.data(), f);
  }
  return out;
}

Tensor l2_normalize(const Tensor& x, double floor) {
  FEDALI_CHECK(x.all_finite(), "l2_normalize: non-finite input");
  const std::size_t f = x.shape().back();
  const std::size_t rows = leading_rows(x.shape());
  auto norms = std::make_shared<std::vector<double>>(rows);

  Tensor out = make_op(x.shape(), {x}, [rows, f, norms, floor](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      MapCV g(self.grad.data() + r * f, f);
      MapCV y(self.data->data() + r * f, f);
      MapV d(p->grad.data() + r * f, f);
      const double n = (*norms)[r];
      if (n > floor) {
        d.array() += (g.array() - y.array() * y.dot(g)) / n;
      } else {
        d += g / floor;  // constant-denominator branch of the guard
      }
    }
  });
  for (std::size_t r = 0; r < rows; ++r) {
    MapCV xr(x.data() + r * f, f);
    const double n = xr.norm();
    (*norms)[r] = n;
    MapV(out.data() + r * f, f) = xr / std::max(n, floor);
  }
  return out;
}

void l2_normalize_rows_inplace(double* data, std::size_t rows,
                               std::size_t cols, double floor) {
  for (std::size_t r = 0; r < rows; ++r) {
    MapV row(data + r * cols, cols);
    row /= std::max(row.norm(), floor);
  }
}

Tensor cross_entropy_logits(const Tensor& logits,
                            std::span<const int> labels) {
  FEDALI_CHECK(logits.ndim() == 2, "cross_entropy: logits must be [B,C]");
  const std::size_t B = logits.dim(0), C = logits.dim(1);
  FEDALI_CHECK(labels.size() == B, "cross_entropy: ", labels.size(),
               " labels for batch of ", B);
  for (std::size_t b = 0; b < B; ++b)
    FEDALI_CHECK(labels[b] >= 0 && static_cast<std::size_t>(labels[b]) < C,
                 "cross_entropy: label ", labels[b], " outside [0,", C, ")");

  auto probs = std::make_shared<std::vector<double>>(B * C);
  auto labels_copy =
      std::make_shared<std::vector<int>>(labels.begin(), labels.end());

  Tensor out = make_op({1}, {logits}, [B, C, probs, labels_copy](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    const double g = self.grad[0] / static_cast<double>(B);
    for (std::size_t b = 0; b < B; ++b) {
      MapV d(p->grad.data() + b * C, C);
      d += g * MapCV(probs->data() + b * C, C);
      d[(*labels_copy)[b]] -= g;
    }
  });

  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    MapCV x(logits.data() + b * C, C);
    const double mx = x.maxCoeff();
    MapV pr(probs->data() + b * C, C);
    pr = (x.array() - mx).exp();
    const double s = pr.sum();
    pr /= s;
    loss -= (x[labels[b]] - mx - std::log(s));
  }
  out.data()[0] = loss / static_cast<double>(B);
  return out;
}

Tensor dropout(const Tensor& x, double rate, Rng& rng) {
  FEDALI_CHECK(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1)");
  if (rate == 0.0) return scale(x, 1.0);
  const std::size_t n = x.size();
  auto mask = std::make_shared<std::vector<double>>(n);
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < n; ++i)
    (*mask)[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;

  Tensor out = make_op(x.shape(), {x}, [n, mask](Node& self) {
    auto& p = self.parents[0];
    if (!p->requires_grad) return;
    p->ensure_grad();
    MapV(p->grad.data(), n).array() +=
        MapCV(self.grad.data(), n).array() * MapCV(mask->data(), n).array();
  });
  MapV(out.data(), n) = MapCV(x.data(), n).cwiseProduct(MapCV(mask->data(), n));
  return out;
}

}  // namespace fedali
