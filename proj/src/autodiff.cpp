// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/autodiff.hpp"

#include <cmath>
#include <cstring>
#include <memory>
#include <utility>

#include "stdnet/errors.hpp"

namespace stdnet::ad {

namespace {

void axpy(Tensor& dst, const Tensor& src, double k = 1.0) {
  for (int64_t i = 0; i < dst.size(); ++i) dst[i] += k * src[i];
}

Tensor transpose2(const Tensor& x) {
  Tensor out({x.cols(), x.rows()});
  for (int r = 0; r < x.rows(); ++r)
    for (int c = 0; c < x.cols(); ++c) out.at(c, r) = x.at(r, c);
  return out;
}

// softplus(z) = log(1 + e^z), overflow-safe.
double softplus(double z) {
  if (z > 0) return z + std::log1p(std::exp(-z));
  return std::log1p(std::exp(z));
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInputError(msg);
}

}  // namespace

Var Tape::push(Tensor value, std::function<void(Tape&, int)> back) {
  nodes_.push_back(Node{std::move(value), std::move(back)});
  return Var{int(nodes_.size()) - 1};
}

const Tensor& Tape::v(Var a) const {
  if (!a.valid() || a.id >= int(nodes_.size()))
    throw InvalidInputError("autodiff: variable not on this tape");
  return nodes_[size_t(a.id)].value;
}

const Tensor& Tape::val(Var a) const { return v(a); }

Tensor& Tape::gbuf(int id) {
  if (grads_[size_t(id)].empty())
    grads_[size_t(id)] = Tensor::zeros(nodes_[size_t(id)].value.shape());
  return grads_[size_t(id)];
}

Var Tape::leaf(Tensor v) { return push(std::move(v)); }

const Tensor& Tape::grad(Var a) {
  v(a);  // bounds check
  if (grads_.size() != nodes_.size())
    throw InvalidInputError("autodiff: grad() before backward()");
  return gbuf(a.id);
}

void Tape::backward(Var loss) {
  const Tensor& lv = v(loss);
  if (lv.size() != 1)
    throw InvalidInputError("autodiff: backward() target must be scalar, got " +
                            lv.shape_str());
  if (!lv.all_finite()) throw NumericError("autodiff: loss is not finite");
  grads_.assign(nodes_.size(), Tensor());
  gbuf(loss.id)[0] = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    if (grads_[size_t(i)].empty()) continue;
    if (nodes_[size_t(i)].back) nodes_[size_t(i)].back(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Elementwise.

Var Tape::add(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.same_shape(vb), "add: shape mismatch " + va.shape_str() + " vs " +
                                 vb.shape_str());
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    axpy(t.gbuf(ia), g);
    axpy(t.gbuf(ib), g);
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.same_shape(vb), "sub: shape mismatch");
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    axpy(t.gbuf(ia), g);
    axpy(t.gbuf(ib), g, -1.0);
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.same_shape(vb), "mul: shape mismatch");
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor &va2 = t.nodes_[size_t(ia)].value,
                 &vb2 = t.nodes_[size_t(ib)].value;
    Tensor &ga = t.gbuf(ia), &gb = t.gbuf(ib);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] * vb2[i];
      gb[i] += g[i] * va2[i];
    }
  });
}

Var Tape::div(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.same_shape(vb), "div: shape mismatch");
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] / vb[i];
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vb2 = t.nodes_[size_t(ib)].value;
    const Tensor& vo = t.nodes_[size_t(self)].value;
    Tensor &ga = t.gbuf(ia), &gb = t.gbuf(ib);
    for (int64_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i] / vb2[i];
      gb[i] -= g[i] * vo[i] / vb2[i];
    }
  });
}

Var Tape::neg(Var a) { return affine(a, -1.0, 0.0); }

Var Tape::affine(Var a, double k, double c) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = k * va[i] + c;
  int ia = a.id;
  return push(std::move(out), [ia, k](Tape& t, int self) {
    axpy(t.gbuf(ia), t.grads_[size_t(self)], k);
  });
}

Var Tape::affine(Var a, Tensor scale, Tensor shift) {
  const Tensor& va = v(a);
  require(va.same_shape(scale) && va.same_shape(shift),
          "affine: constant shape mismatch");
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = scale[i] * va[i] + shift[i];
  int ia = a.id;
  auto sc = std::make_shared<Tensor>(std::move(scale));
  return push(std::move(out), [ia, sc](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += (*sc)[i] * g[i];
  });
}

Var Tape::exp(Var a) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(va[i]);
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vo = t.nodes_[size_t(self)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vo[i];
  });
}

Var Tape::log(Var a) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(va[i]);
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& va2 = t.nodes_[size_t(ia)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va2[i];
  });
}

Var Tape::sqrt(Var a) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(va[i]);
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vo = t.nodes_[size_t(self)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i) ga[i] += 0.5 * g[i] / vo[i];
  });
}

Var Tape::abs(Var a) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(va[i]);
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& va2 = t.nodes_[size_t(ia)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * (va2[i] > 0 ? 1.0 : (va2[i] < 0 ? -1.0 : 0.0));
  });
}

Var Tape::relu(Var a) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = va[i] > 0 ? va[i] : 0.0;
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& va2 = t.nodes_[size_t(ia)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i)
      if (va2[i] > 0) ga[i] += g[i];
  });
}

Var Tape::sigmoid(Var a) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    double z = va[i];
    out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z))
                    : std::exp(z) / (1.0 + std::exp(z));
  }
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vo = t.nodes_[size_t(self)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i)
      ga[i] += g[i] * vo[i] * (1.0 - vo[i]);
  });
}

Var Tape::logit(Var a, double eps) {
  const Tensor& va = v(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i) {
    double x = va[i];
    if (x < eps) x = eps;
    if (x > 1.0 - eps) x = 1.0 - eps;
    out[i] = std::log(x) - std::log1p(-x);
  }
  int ia = a.id;
  return push(std::move(out), [ia, eps](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& va2 = t.nodes_[size_t(ia)].value;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < g.size(); ++i) {
      double x = va2[i];
      if (x < eps || x > 1.0 - eps) continue;  // clamped: flat
      ga[i] += g[i] / (x * (1.0 - x));
    }
  });
}

Var Tape::minimum(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.same_shape(vb), "minimum: shape mismatch");
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = va[i] <= vb[i] ? va[i] : vb[i];
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor &va2 = t.nodes_[size_t(ia)].value,
                 &vb2 = t.nodes_[size_t(ib)].value;
    Tensor &ga = t.gbuf(ia), &gb = t.gbuf(ib);
    for (int64_t i = 0; i < g.size(); ++i) {
      if (va2[i] <= vb2[i])
        ga[i] += g[i];
      else
        gb[i] += g[i];
    }
  });
}

Var Tape::maximum(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.same_shape(vb), "maximum: shape mismatch");
  Tensor out(va.shape());
  for (int64_t i = 0; i < out.size(); ++i)
    out[i] = va[i] >= vb[i] ? va[i] : vb[i];
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor &va2 = t.nodes_[size_t(ia)].value,
                 &vb2 = t.nodes_[size_t(ib)].value;
    Tensor &ga = t.gbuf(ia), &gb = t.gbuf(ib);
    for (int64_t i = 0; i < g.size(); ++i) {
      if (va2[i] >= vb2[i])
        ga[i] += g[i];
      else
        gb[i] += g[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions.

Var Tape::sum(Var a) {
  const Tensor& va = v(a);
  double s = 0.0;
  for (int64_t i = 0; i < va.size(); ++i) s += va[i];
  int ia = a.id;
  return push(Tensor::scalar(s), [ia](Tape& t, int self) {
    double g = t.grads_[size_t(self)][0];
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::mean(Var a) {
  const Tensor& va = v(a);
  require(va.size() > 0, "mean: empty tensor");
  double s = 0.0;
  for (int64_t i = 0; i < va.size(); ++i) s += va[i];
  double n = double(va.size());
  int ia = a.id;
  return push(Tensor::scalar(s / n), [ia, n](Tape& t, int self) {
    double g = t.grads_[size_t(self)][0] / n;
    Tensor& ga = t.gbuf(ia);
    for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var Tape::mean_rows(Var a) {
  const Tensor& va = v(a);
  require(va.ndim() == 2, "mean_rows: need 2-D input");
  int n = va.rows(), c = va.cols();
  Tensor out({c});
  for (int j = 0; j < c; ++j) {
    double s = 0.0;
    for (int r = 0; r < n; ++r) s += va.at(r, j);
    out[j] = s / n;
  }
  int ia = a.id;
  return push(std::move(out), [ia, n, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < c; ++j) ga.at(r, j) += g[j] / n;
  });
}

Var Tape::logsumexp_rows(Var a) {
  const Tensor& va = v(a);
  require(va.ndim() == 2, "logsumexp_rows: need 2-D input");
  int n = va.rows(), c = va.cols();
  Tensor out({n});
  for (int r = 0; r < n; ++r) {
    double m = va.at(r, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, va.at(r, j));
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(va.at(r, j) - m);
    out[r] = m + std::log(s);
  }
  int ia = a.id;
  return push(std::move(out), [ia, n, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& va2 = t.nodes_[size_t(ia)].value;
    const Tensor& vo = t.nodes_[size_t(self)].value;
    Tensor& ga = t.gbuf(ia);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < c; ++j)
        ga.at(r, j) += g[r] * std::exp(va2.at(r, j) - vo[r]);
  });
}

// ---------------------------------------------------------------------------
// Shape and indexing.

Var Tape::reshape(Var a, std::vector<int> shape) {
  const Tensor& va = v(a);
  Tensor out = va.reshaped(shape);
  int ia = a.id;
  return push(std::move(out), [ia](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    axpy(t.gbuf(ia), g);
  });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
  const Tensor& va = v(a);
  require(va.ndim() == 2 && 0 <= r0 && r0 < r1 && r1 <= va.rows(),
          "slice_rows: bad range");
  int c = va.cols();
  Tensor out({r1 - r0, c});
  std::memcpy(out.data(), va.data() + int64_t(r0) * c,
              sizeof(double) * size_t(r1 - r0) * c);
  int ia = a.id;
  return push(std::move(out), [ia, r0, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (int r = 0; r < g.rows(); ++r)
      for (int j = 0; j < c; ++j) ga.at(r0 + r, j) += g.at(r, j);
  });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Tensor& va = v(a);
  require(va.ndim() == 2 && 0 <= c0 && c0 < c1 && c1 <= va.cols(),
          "slice_cols: bad range");
  int n = va.rows();
  Tensor out({n, c1 - c0});
  for (int r = 0; r < n; ++r)
    for (int j = c0; j < c1; ++j) out.at(r, j - c0) = va.at(r, j);
  int ia = a.id;
  return push(std::move(out), [ia, c0](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (int r = 0; r < g.rows(); ++r)
      for (int j = 0; j < g.cols(); ++j) ga.at(r, c0 + j) += g.at(r, j);
  });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: no parts");
  int c = v(parts[0]).cols(), n = 0;
  for (Var p : parts) {
    const Tensor& vp = v(p);
    require(vp.ndim() == 2 && vp.cols() == c, "concat_rows: column mismatch");
    n += vp.rows();
  }
  Tensor out({n, c});
  std::vector<int> ids, offs;
  int off = 0;
  for (Var p : parts) {
    const Tensor& vp = v(p);
    std::memcpy(out.data() + int64_t(off) * c, vp.data(),
                sizeof(double) * size_t(vp.size()));
    ids.push_back(p.id);
    offs.push_back(off);
    off += vp.rows();
  }
  return push(std::move(out), [ids, offs, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    for (size_t k = 0; k < ids.size(); ++k) {
      Tensor& ga = t.gbuf(ids[k]);
      for (int r = 0; r < ga.rows(); ++r)
        for (int j = 0; j < c; ++j) ga.at(r, j) += g.at(offs[k] + r, j);
    }
  });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  int n = v(parts[0]).rows(), c = 0;
  for (Var p : parts) {
    const Tensor& vp = v(p);
    require(vp.ndim() == 2 && vp.rows() == n, "concat_cols: row mismatch");
    c += vp.cols();
  }
  Tensor out({n, c});
  std::vector<int> ids, offs;
  int off = 0;
  for (Var p : parts) {
    const Tensor& vp = v(p);
    for (int r = 0; r < n; ++r)
      for (int j = 0; j < vp.cols(); ++j) out.at(r, off + j) = vp.at(r, j);
    ids.push_back(p.id);
    offs.push_back(off);
    off += vp.cols();
  }
  return push(std::move(out), [ids, offs](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    for (size_t k = 0; k < ids.size(); ++k) {
      Tensor& ga = t.gbuf(ids[k]);
      for (int r = 0; r < ga.rows(); ++r)
        for (int j = 0; j < ga.cols(); ++j)
          ga.at(r, j) += g.at(r, offs[k] + j);
    }
  });
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
  const Tensor& va = v(a);
  require(va.ndim() == 2, "gather_rows: need 2-D input");
  int c = va.cols();
  Tensor out({int(idx.size()), c});
  for (size_t i = 0; i < idx.size(); ++i) {
    require(0 <= idx[i] && idx[i] < va.rows(), "gather_rows: index range");
    std::memcpy(out.data() + int64_t(i) * c, va.data() + int64_t(idx[i]) * c,
                sizeof(double) * size_t(c));
  }
  int ia = a.id;
  auto ix = std::make_shared<std::vector<int>>(std::move(idx));
  return push(std::move(out), [ia, ix, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (size_t i = 0; i < ix->size(); ++i)
      for (int j = 0; j < c; ++j) ga.at((*ix)[i], j) += g.at(int(i), j);
  });
}

Var Tape::gather_flat(Var a, std::vector<int> idx) {
  const Tensor& va = v(a);
  Tensor out({int(idx.size())});
  for (size_t i = 0; i < idx.size(); ++i) {
    require(0 <= idx[i] && idx[i] < va.size(), "gather_flat: index range");
    out[int64_t(i)] = va[idx[i]];
  }
  int ia = a.id;
  auto ix = std::make_shared<std::vector<int>>(std::move(idx));
  return push(std::move(out), [ia, ix](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (size_t i = 0; i < ix->size(); ++i) ga[(*ix)[i]] += g[int64_t(i)];
  });
}

Var Tape::chw_to_rows(Var a) {
  const Tensor& va = v(a);
  require(va.ndim() == 3, "chw_to_rows: need 3-D input");
  int c = va.dim(0), h = va.dim(1), w = va.dim(2);
  Tensor out({h * w, c});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(y * w + x, ch) = va.at3(ch, y, x);
  int ia = a.id;
  return push(std::move(out), [ia, c, h, w](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor& ga = t.gbuf(ia);
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) ga.at3(ch, y, x) += g.at(y * w + x, ch);
  });
}

// ---------------------------------------------------------------------------
// Linear algebra.

Var Tape::matmul(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.ndim() == 2 && vb.ndim() == 2 && va.cols() == vb.rows(),
          "matmul: " + va.shape_str() + " x " + vb.shape_str());
  int n = va.rows(), k = va.cols(), m = vb.cols();
  Tensor out({n, m});
  kernels::gemm(va.data(), vb.data(), out.data(), n, k, m);
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib, n, k, m](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor &va2 = t.nodes_[size_t(ia)].value,
                 &vb2 = t.nodes_[size_t(ib)].value;
    Tensor bt = transpose2(vb2);  // [m,k]
    Tensor da({n, k});
    kernels::gemm(g.data(), bt.data(), da.data(), n, m, k);
    axpy(t.gbuf(ia), da);
    Tensor at = transpose2(va2);  // [k,n]
    Tensor db({k, m});
    kernels::gemm(at.data(), g.data(), db.data(), k, n, m);
    axpy(t.gbuf(ib), db);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Tensor &va = v(a), &vb = v(b);
  require(va.ndim() == 2 && vb.ndim() == 2 && va.cols() == vb.cols(),
          "matmul_nt: " + va.shape_str() + " x " + vb.shape_str() + "^T");
  int n = va.rows(), k = va.cols(), m = vb.rows();
  Tensor bt = transpose2(vb);  // [k,m]
  Tensor out({n, m});
  kernels::gemm(va.data(), bt.data(), out.data(), n, k, m);
  int ia = a.id, ib = b.id;
  return push(std::move(out), [ia, ib, n, k, m](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor &va2 = t.nodes_[size_t(ia)].value,
                 &vb2 = t.nodes_[size_t(ib)].value;
    Tensor da({n, k});  // g [n,m] * b [m,k]
    kernels::gemm(g.data(), vb2.data(), da.data(), n, m, k);
    axpy(t.gbuf(ia), da);
    Tensor gt = transpose2(g);  // [m,n]
    Tensor db({m, k});          // g^T [m,n] * a [n,k]
    kernels::gemm(gt.data(), va2.data(), db.data(), m, n, k);
    axpy(t.gbuf(ib), db);
  });
}

Var Tape::add_rowvec(Var a, Var vvec) {
  const Tensor &va = v(a), &vv = v(vvec);
  require(va.ndim() == 2 && vv.ndim() == 1 && vv.dim(0) == va.cols(),
          "add_rowvec: shape mismatch");
  Tensor out(va.shape());
  for (int r = 0; r < va.rows(); ++r)
    for (int c = 0; c < va.cols(); ++c) out.at(r, c) = va.at(r, c) + vv[c];
  int ia = a.id, iv = vvec.id;
  return push(std::move(out), [ia, iv](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    Tensor &ga = t.gbuf(ia), &gv = t.gbuf(iv);
    axpy(ga, g);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) gv[c] += g.at(r, c);
  });
}

Var Tape::mul_rowvec(Var a, Var vvec) {
  const Tensor &va = v(a), &vv = v(vvec);
  require(va.ndim() == 2 && vv.ndim() == 1 && vv.dim(0) == va.cols(),
          "mul_rowvec: shape mismatch");
  Tensor out(va.shape());
  for (int r = 0; r < va.rows(); ++r)
    for (int c = 0; c < va.cols(); ++c) out.at(r, c) = va.at(r, c) * vv[c];
  int ia = a.id, iv = vvec.id;
  return push(std::move(out), [ia, iv](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor &va2 = t.nodes_[size_t(ia)].value,
                 &vv2 = t.nodes_[size_t(iv)].value;
    Tensor &ga = t.gbuf(ia), &gv = t.gbuf(iv);
    for (int r = 0; r < g.rows(); ++r)
      for (int c = 0; c < g.cols(); ++c) {
        ga.at(r, c) += g.at(r, c) * vv2[c];
        gv[c] += g.at(r, c) * va2.at(r, c);
      }
  });
}

Var Tape::linear(Var x, Var w, Var b) { return add_rowvec(matmul(x, w), b); }

// ---------------------------------------------------------------------------
// Blocks.

Var Tape::softmax_rows(Var a) {
  const Tensor& va = v(a);
  require(va.ndim() == 2, "softmax_rows: need 2-D input");
  int n = va.rows(), c = va.cols();
  Tensor out({n, c});
  for (int r = 0; r < n; ++r) {
    double m = va.at(r, 0);
    for (int j = 1; j < c; ++j) m = std::max(m, va.at(r, j));
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      double e = std::exp(va.at(r, j) - m);
      out.at(r, j) = e;
      s += e;
    }
    for (int j = 0; j < c; ++j) out.at(r, j) /= s;
  }
  int ia = a.id;
  return push(std::move(out), [ia, n, c](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vo = t.nodes_[size_t(self)].value;
    Tensor& ga = t.gbuf(ia);
    for (int r = 0; r < n; ++r) {
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += g.at(r, j) * vo.at(r, j);
      for (int j = 0; j < c; ++j)
        ga.at(r, j) += vo.at(r, j) * (g.at(r, j) - dot);
    }
  });
}

Var Tape::layernorm(Var x, Var gamma, Var beta, double eps) {
  const Tensor &vx = v(x), &vg = v(gamma), &vb = v(beta);
  require(vx.ndim() == 2 && vg.ndim() == 1 && vb.ndim() == 1 &&
              vg.dim(0) == vx.cols() && vb.dim(0) == vx.cols(),
          "layernorm: shape mismatch");
  int n = vx.rows(), c = vx.cols();
  Tensor out({n, c});
  Tensor xhat({n, c});
  Tensor istd({n});
  for (int r = 0; r < n; ++r) {
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += vx.at(r, j);
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) {
      double d = vx.at(r, j) - mu;
      var += d * d;
    }
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    istd[r] = is;
    for (int j = 0; j < c; ++j) {
      double xh = (vx.at(r, j) - mu) * is;
      xhat.at(r, j) = xh;
      out.at(r, j) = vg[j] * xh + vb[j];
    }
  }
  int ix = x.id, ig = gamma.id, ib = beta.id;
  auto sxhat = std::make_shared<Tensor>(std::move(xhat));
  auto sistd = std::make_shared<Tensor>(std::move(istd));
  return push(std::move(out), [ix, ig, ib, n, c, sxhat, sistd](Tape& t,
                                                              int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vg2 = t.nodes_[size_t(ig)].value;
    Tensor &gx = t.gbuf(ix), &gg = t.gbuf(ig), &gb = t.gbuf(ib);
    for (int r = 0; r < n; ++r) {
      double mean_dxh = 0.0, mean_dxh_xh = 0.0;
      for (int j = 0; j < c; ++j) {
        double dxh = g.at(r, j) * vg2[j];
        mean_dxh += dxh;
        mean_dxh_xh += dxh * sxhat->at(r, j);
        gg[j] += g.at(r, j) * sxhat->at(r, j);
        gb[j] += g.at(r, j);
      }
      mean_dxh /= c;
      mean_dxh_xh /= c;
      for (int j = 0; j < c; ++j) {
        double dxh = g.at(r, j) * vg2[j];
        gx.at(r, j) +=
            (*sistd)[r] * (dxh - mean_dxh - sxhat->at(r, j) * mean_dxh_xh);
      }
    }
  });
}

Var Tape::l2_normalize_rows(Var x, double eps) {
  const Tensor& vx = v(x);
  require(vx.ndim() == 2, "l2_normalize_rows: need 2-D input");
  int n = vx.rows(), c = vx.cols();
  Tensor out({n, c});
  Tensor denom({n});
  for (int r = 0; r < n; ++r) {
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += vx.at(r, j) * vx.at(r, j);
    double nr = std::sqrt(s);
    double d = nr > eps ? nr : eps;
    denom[r] = d;
    for (int j = 0; j < c; ++j) out.at(r, j) = vx.at(r, j) / d;
  }
  int ix = x.id;
  auto sden = std::make_shared<Tensor>(std::move(denom));
  return push(std::move(out), [ix, n, c, sden, eps](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vx2 = t.nodes_[size_t(ix)].value;
    Tensor& gx = t.gbuf(ix);
    for (int r = 0; r < n; ++r) {
      double d = (*sden)[r];
      if (d <= eps) {  // norm below floor: out = x / eps, a plain scaling
        for (int j = 0; j < c; ++j) gx.at(r, j) += g.at(r, j) / eps;
        continue;
      }
      double dot = 0.0;
      for (int j = 0; j < c; ++j) dot += g.at(r, j) * vx2.at(r, j);
      for (int j = 0; j < c; ++j)
        gx.at(r, j) += g.at(r, j) / d - vx2.at(r, j) * dot / (d * d * d);
    }
  });
}

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor &vx = v(x), &vw = v(w), &vb = v(b);
  require(vx.ndim() == 3 && vw.ndim() == 4 && vb.ndim() == 1,
          "conv2d: need x[C,H,W], w[Co,Ci,kh,kw], b[Co]");
  int ci = vx.dim(0), h = vx.dim(1), wd = vx.dim(2);
  int co = vw.dim(0), kh = vw.dim(2), kw = vw.dim(3);
  require(vw.dim(1) == ci && vb.dim(0) == co, "conv2d: channel mismatch");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  int ho = (h + 2 * pad - kh) / stride + 1;
  int wo = (wd + 2 * pad - kw) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: output would be empty");

  int np = ho * wo, kk = ci * kh * kw;
  // im2col patches [np, kk], zero where the window leaves the input.
  Tensor patches({np, kk});
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int p = oy * wo + ox;
      int col = 0;
      for (int c = 0; c < ci; ++c)
        for (int dy = 0; dy < kh; ++dy)
          for (int dx = 0; dx < kw; ++dx, ++col) {
            int iy = oy * stride - pad + dy;
            int ix2 = ox * stride - pad + dx;
            patches.at(p, col) =
                (iy >= 0 && iy < h && ix2 >= 0 && ix2 < wd) ? vx.at3(c, iy, ix2)
                                                            : 0.0;
          }
    }
  // weight [co, kk] -> transpose to [kk, co] for patches * w^T.
  Tensor wmat = vw.reshaped({co, kk});
  Tensor wt = transpose2(wmat);
  Tensor prod({np, co});
  kernels::gemm(patches.data(), wt.data(), prod.data(), np, kk, co);
  Tensor out({co, ho, wo});
  for (int p = 0; p < np; ++p)
    for (int c = 0; c < co; ++c)
      out.at3(c, p / wo, p % wo) = prod.at(p, c) + vb[c];

  int ix = x.id, iw = w.id, ib = b.id;
  auto spat = std::make_shared<Tensor>(std::move(patches));
  return push(std::move(out), [ix, iw, ib, ci, h, wd, co, kh, kw, ho, wo,
                               stride, pad, spat](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];  // [co,ho,wo]
    int np = ho * wo, kk = ci * kh * kw;
    Tensor g2({np, co});
    for (int p = 0; p < np; ++p)
      for (int c = 0; c < co; ++c) g2.at(p, c) = g.at3(c, p / wo, p % wo);

    Tensor& gb = t.gbuf(ib);
    for (int p = 0; p < np; ++p)
      for (int c = 0; c < co; ++c) gb[c] += g2.at(p, c);

    // dW = (patches^T * g2)^T, reshaped to [co,ci,kh,kw].
    Tensor pt = transpose2(*spat);  // [kk,np]
    Tensor dwt({kk, co});
    kernels::gemm(pt.data(), g2.data(), dwt.data(), kk, np, co);
    Tensor& gw = t.gbuf(iw);
    for (int c = 0; c < co; ++c)
      for (int q = 0; q < kk; ++q)
        gw[int64_t(c) * kk + q] += dwt.at(q, c);

    // dPatches = g2 * wmat, then scatter back (col2im).
    const Tensor& vw2 = t.nodes_[size_t(iw)].value;
    Tensor wmat2 = vw2.reshaped({co, kk});
    Tensor dpat({np, kk});
    kernels::gemm(g2.data(), wmat2.data(), dpat.data(), np, co, kk);
    Tensor& gx = t.gbuf(ix);
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        int p = oy * wo + ox;
        int col = 0;
        for (int c = 0; c < ci; ++c)
          for (int dy = 0; dy < kh; ++dy)
            for (int dx = 0; dx < kw; ++dx, ++col) {
              int iy = oy * stride - pad + dy;
              int ix2 = ox * stride - pad + dx;
              if (iy >= 0 && iy < h && ix2 >= 0 && ix2 < wd)
                gx.at3(c, iy, ix2) += dpat.at(p, col);
            }
      }
  });
}

// ---------------------------------------------------------------------------
// Deformable sampling.

Var Tape::ms_deform_sample(Var value, Var locs, Var wts,
                           std::vector<kernels::DeformCell> cells,
                           std::vector<int> cell_of_slot, int num_queries,
                           int heads, int head_ch) {
  const Tensor &vv = v(value), &vl = v(locs), &vw = v(wts);
  int slots = int(cell_of_slot.size());
  require(slots > 0 && num_queries > 0 && heads > 0 && head_ch > 0,
          "ms_deform_sample: empty geometry");
  require(vv.ndim() == 2 && vv.cols() == heads * head_ch,
          "ms_deform_sample: value must be [R, heads*head_ch]");
  int64_t ns = int64_t(num_queries) * heads * slots;
  require(vl.ndim() == 2 && vl.rows() == ns && vl.cols() == 2,
          "ms_deform_sample: locs must be [Q*M*S, 2]");
  require(vw.size() == ns, "ms_deform_sample: wts must be [Q*M*S]");
  for (int s = 0; s < slots; ++s) {
    int ci = cell_of_slot[size_t(s)];
    require(0 <= ci && ci < int(cells.size()), "ms_deform_sample: slot cell");
    const auto& cell = cells[size_t(ci)];
    require(cell.h >= 2 && cell.w >= 2 &&
                cell.row0 + cell.h * cell.w <= vv.rows(),
            "ms_deform_sample: cell out of value range");
  }

  Tensor out({num_queries, heads * head_ch});
  for (int q = 0; q < num_queries; ++q)
    for (int m = 0; m < heads; ++m) {
      int64_t base = (int64_t(q) * heads + m) * slots;
      kernels::deform_head(vv.data(), vv.cols(), cells.data(),
                           cell_of_slot.data(), slots, vl.data() + 2 * base,
                           vw.data() + base, m * head_ch, head_ch,
                           out.data() + int64_t(q) * heads * head_ch +
                               int64_t(m) * head_ch);
    }

  int iv = value.id, il = locs.id, iw = wts.id;
  auto scells = std::make_shared<std::vector<kernels::DeformCell>>(
      std::move(cells));
  auto sslots = std::make_shared<std::vector<int>>(std::move(cell_of_slot));
  return push(std::move(out), [iv, il, iw, num_queries, heads, head_ch, slots,
                               scells, sslots](Tape& t, int self) {
    const Tensor& g = t.grads_[size_t(self)];
    const Tensor& vv2 = t.nodes_[size_t(iv)].value;
    const Tensor& vl2 = t.nodes_[size_t(il)].value;
    const Tensor& vw2 = t.nodes_[size_t(iw)].value;
    Tensor& gv = t.gbuf(iv);
    Tensor& gl = t.gbuf(il);
    Tensor& gw = t.gbuf(iw);
    int vc = vv2.cols();
    for (int q = 0; q < num_queries; ++q)
      for (int m = 0; m < heads; ++m) {
        int c0 = m * head_ch;
        const double* grow = g.data() + int64_t(q) * heads * head_ch + c0;
        for (int s = 0; s < slots; ++s) {
          int64_t p = (int64_t(q) * heads + m) * slots + s;
          const auto& cell = (*scells)[size_t((*sslots)[size_t(s)])];
          double x = vl2[2 * p], y = vl2[2 * p + 1];
          double w = vw2[p];
          int x0 = int(std::floor(x)), y0 = int(std::floor(y));
          double fx = x - x0, fy = y - y0;
          // Corner (xi, yi): row pointer or null when outside the grid.
          auto row = [&](int xi, int yi) -> const double* {
            if (xi < 0 || xi >= cell.w || yi < 0 || yi >= cell.h)
              return nullptr;
            return vv2.data() +
                   int64_t(cell.row0 + yi * cell.w + xi) * vc + c0;
          };
          auto grow_at = [&](int xi, int yi) -> double* {
            return gv.data() + int64_t(cell.row0 + yi * cell.w + xi) * vc + c0;
          };
          const double* r00 = row(x0, y0);
          const double* r10 = row(x0 + 1, y0);
          const double* r01 = row(x0, y0 + 1);
          const double* r11 = row(x0 + 1, y0 + 1);
          double c00 = (1 - fx) * (1 - fy), c10 = fx * (1 - fy);
          double c01 = (1 - fx) * fy, c11 = fx * fy;
          double dw = 0.0, dx = 0.0, dy = 0.0;
          for (int c = 0; c < head_ch; ++c) {
            double v00 = r00 ? r00[c] : 0.0, v10 = r10 ? r10[c] : 0.0;
            double v01 = r01 ? r01[c] : 0.0, v11 = r11 ? r11[c] : 0.0;
            double sample = c00 * v00 + c10 * v10 + c01 * v01 + c11 * v11;
            double gc = grow[c];
            dw += gc * sample;
            // d sample / dx and / dy with out-of-grid corners pinned to 0.
            dx += gc * (-(1 - fy) * v00 + (1 - fy) * v10 - fy * v01 + fy * v11);
            dy += gc * (-(1 - fx) * v00 - fx * v10 + (1 - fx) * v01 +
                        fx * v11);
          }
          gw[p] += dw;
          gl[2 * p] += w * dx;
          gl[2 * p + 1] += w * dy;
          double wcoef[4] = {c00, c10, c01, c11};
          const double* rows[4] = {r00, r10, r01, r11};
          int xi[4] = {x0, x0 + 1, x0, x0 + 1};
          int yi[4] = {y0, y0, y0 + 1, y0 + 1};
          for (int corner = 0; corner < 4; ++corner) {
            if (!rows[corner]) continue;
            double* gr = grow_at(xi[corner], yi[corner]);
            for (int c = 0; c < head_ch; ++c)
              gr[c] += w * wcoef[corner] * grow[c];
          }
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Focal loss.

Var Tape::focal_loss_binary(Var logits, Tensor targets, double alpha,
                            double gamma) {
  const Tensor& vz = v(logits);
  require(vz.same_shape(targets), "focal_loss_binary: target shape mismatch");
  require(vz.size() > 0, "focal_loss_binary: empty input");
  require(gamma >= 0.0, "focal_loss_binary: gamma must be >= 0");
  int64_t n = vz.size();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double z = vz[i], y = targets[i];
    require(y == 0.0 || y == 1.0, "focal_loss_binary: targets must be 0/1");
    // log p_t: -softplus(-z) for y=1, -softplus(z) for y=0.
    double log_pt = y > 0.5 ? -softplus(-z) : -softplus(z);
    double pt = std::exp(log_pt);
    double at = alpha < 0 ? 1.0 : (y > 0.5 ? alpha : 1.0 - alpha);
    double mod = gamma == 0.0 ? 1.0 : std::pow(1.0 - pt, gamma);
    total += -at * mod * log_pt;
  }
  int iz = logits.id;
  auto ty = std::make_shared<Tensor>(std::move(targets));
  return push(Tensor::scalar(total / double(n)),
              [iz, ty, alpha, gamma, n](Tape& t, int self) {
                double gs = t.grads_[size_t(self)][0] / double(n);
                const Tensor& vz2 = t.nodes_[size_t(iz)].value;
                Tensor& gz = t.gbuf(iz);
                for (int64_t i = 0; i < n; ++i) {
                  double z = vz2[i], y = (*ty)[i];
                  double log_pt = y > 0.5 ? -softplus(-z) : -softplus(z);
                  double pt = std::exp(log_pt);
                  double at = alpha < 0 ? 1.0 : (y > 0.5 ? alpha : 1.0 - alpha);
                  double u = 1.0 - pt;
                  // d loss_i / d p_t.
                  double dpt;
                  if (gamma == 0.0) {
                    dpt = -at / std::max(pt, 1e-300);
                  } else {
                    dpt = -at * (-gamma * std::pow(u, gamma - 1.0) * log_pt +
                                 std::pow(u, gamma) / std::max(pt, 1e-300));
                  }
                  // d p_t / d z = (2y-1) p (1-p); p_t(1-p_t) equals p(1-p)
                  // for y in {0,1}.
                  double dz = dpt * (2.0 * y - 1.0) * pt * u;
                  gz[i] += gs * dz;
                }
              });
}

// ---------------------------------------------------------------------------
// Parameters.

Tensor& ParamStore::create(const std::string& name, Tensor init) {
  if (params_.count(name))
    throw InvalidInputError("parameter already exists: " + name);
  return params_.emplace(name, std::move(init)).first->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw InvalidInputError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw InvalidInputError("unknown parameter: " + name);
  return it->second;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& [k, v] : params_) n += v.size();
  return n;
}

Var ParamBind::operator()(const std::string& name) {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  Var var = tape_->leaf(store_->get(name));
  cache_.emplace(name, var);
  return var;
}

}  // namespace stdnet::ad
