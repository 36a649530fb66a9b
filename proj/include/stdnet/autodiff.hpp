// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stdnet/kernels.hpp"
#include "stdnet/tensor.hpp"

// Reverse-mode automatic differentiation on a linear tape. Every op records a
// backward closure; backward() replays them newest-first, accumulating into
// per-node gradient buffers. Double precision throughout so the analytic
// gradients can be pinned against central finite differences.

namespace stdnet::ad {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  // Leaves. Gradients are available for every node after backward(); leaves
  // are just nodes without a backward closure.
  Var leaf(Tensor v);

  const Tensor& val(Var v) const;
  // Gradient of the last backward() target w.r.t. v (zeros if v does not
  // influence it).
  const Tensor& grad(Var v);
  void backward(Var scalar_loss);
  size_t size() const { return nodes_.size(); }

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var neg(Var a);
  Var affine(Var a, double k, double c);  // k*x + c
  Var affine(Var a, Tensor scale, Tensor shift);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var abs(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var logit(Var a, double eps = 1e-12);  // inverse sigmoid, input clamped
  Var minimum(Var a, Var b);             // ties favor a
  Var maximum(Var a, Var b);

  // Reductions.
  Var sum(Var a);        // -> [1]
  Var mean(Var a);       // -> [1]
  Var mean_rows(Var a);  // [N,C] -> [C], mean over rows
  Var logsumexp_rows(Var a);  // [N,C] -> [N]

  // Shape and indexing. Gathers accumulate on duplicate indices in backward.
  Var reshape(Var a, std::vector<int> shape);
  Var slice_rows(Var a, int r0, int r1);
  Var slice_cols(Var a, int c0, int c1);
  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var gather_rows(Var a, std::vector<int> idx);
  Var gather_flat(Var a, std::vector<int> idx);  // -> [K]
  Var chw_to_rows(Var a);                        // [C,H,W] -> [H*W, C]

  // Linear algebra (forward products run through the kernel dispatcher).
  Var matmul(Var a, Var b);      // [n,k]*[k,m]
  Var matmul_nt(Var a, Var b);   // [n,k]*[m,k]^T -> [n,m]
  Var add_rowvec(Var a, Var v);  // [N,M] + [M] broadcast over rows
  Var mul_rowvec(Var a, Var v);  // [N,M] * [M] broadcast over rows
  Var linear(Var x, Var w, Var b);  // x[N,K]*w[K,M] + b[M]

  // Neural blocks.
  Var softmax_rows(Var a);
  Var layernorm(Var x, Var gamma, Var beta, double eps = 1e-5);
  Var l2_normalize_rows(Var x, double eps = 1e-12);
  // x [Cin,H,W], w [Cout,Cin,kh,kw], b [Cout], zero padding.
  Var conv2d(Var x, Var w, Var b, int stride, int pad);

  // Deformable aggregation per query and head:
  //   out[q, m*head_ch + c] =
  //     sum_s wts[(q*M+m)*S+s] * bilinear(value, slot s, locs[(q*M+m)*S+s])[c]
  // value [R, M*head_ch] (already head-projected), locs [NQ*M*S, 2] in texel
  // coordinates of each slot's grid, wts [NQ*M*S]. cell_of_slot maps the S
  // per-head slots to entries of cells. Out-of-grid samples contribute zero.
  // Differentiable in value, locs and wts.
  Var ms_deform_sample(Var value, Var locs, Var wts,
                       std::vector<kernels::DeformCell> cells,
                       std::vector<int> cell_of_slot, int num_queries,
                       int heads, int head_ch);

  // Mean over elements of the sigmoid focal loss on logits with {0,1}
  // targets. alpha < 0 disables the alpha weighting entirely (so gamma = 0,
  // alpha < 0 is exactly mean binary cross-entropy).
  Var focal_loss_binary(Var logits, Tensor targets, double alpha,
                        double gamma);

 private:
  struct Node {
    Tensor value;
    std::function<void(Tape&, int)> back;
  };

  Var push(Tensor value, std::function<void(Tape&, int)> back = nullptr);
  Tensor& gbuf(int id);
  const Tensor& v(Var a) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

// Named model parameters. std::map keeps iteration order deterministic, which
// the optimizer and the checkpoint format rely on.
class ParamStore {
 public:
  Tensor& create(const std::string& name, Tensor init);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }
  int64_t total_size() const;

 private:
  std::map<std::string, Tensor> params_;
};

// Binds parameters into a tape as leaves, one node per distinct name, so a
// parameter used twice in a forward pass accumulates both gradient paths.
class ParamBind {
 public:
  ParamBind(Tape& tape, const ParamStore& store)
      : tape_(&tape), store_(&store) {}
  Var operator()(const std::string& name);
  const std::map<std::string, Var>& bound() const { return cache_; }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::map<std::string, Var> cache_;
};

}  // namespace stdnet::ad
