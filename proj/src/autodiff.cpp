/*
 * Copyright 2026 The dbvqa Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "dbvqa/autodiff.hpp"

#include <cmath>

#include "dbvqa/errors.hpp"

namespace dbvqa {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw ShapeMismatch(what);
}

}  // namespace

void Tape::backward(const DiffValue& root) {
  require(root.tape == this, "backward: root from another tape");
  require(value(root.id).numel() == 1, "backward: root must be scalar");
  for (auto& n : nodes_) {
    n.grad.shape = n.value.shape;
    n.grad.v.assign(n.value.v.size(), 0.0);
  }
  nodes_[static_cast<size_t>(root.id)].grad.v[0] = 1.0;
  for (int id = root.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.backward) n.backward(*this, id);
  }
}

DiffValue Tape::linear(DiffValue x, DiffValue w, DiffValue b) {
  const Tensor& xv = value(x.id);
  const Tensor& wv = value(w.id);
  const Tensor& bv = value(b.id);
  require(wv.shape.size() == 2, "linear: W must be 2-d");
  const int out = wv.shape[0];
  const int in = wv.shape[1];
  require(static_cast<int>(xv.numel()) == in, "linear: input size mismatch");
  require(static_cast<int>(bv.numel()) == out, "linear: bias size mismatch");

  Tensor y({out});
  for (int o = 0; o < out; ++o) {
    const double* wr = &wv.v[static_cast<size_t>(o) * in];
    double acc = bv.v[static_cast<size_t>(o)];
    for (int i = 0; i < in; ++i) acc += wr[i] * xv.v[static_cast<size_t>(i)];
    y.v[static_cast<size_t>(o)] = acc;
  }
  return make_node(std::move(y), {x.id, w.id, b.id},
                   [xid = x.id, wid = w.id, bid = b.id, out, in](Tape& t, int self) {
                     const Tensor& g = t.grad(self);
                     const Tensor& xv = t.value(xid);
                     const Tensor& wv = t.value(wid);
                     Tensor& gx = t.grad(xid);
                     Tensor& gw = t.grad(wid);
                     Tensor& gb = t.grad(bid);
                     for (int o = 0; o < out; ++o) {
                       const double go = g.v[static_cast<size_t>(o)];
                       const double* wr = &wv.v[static_cast<size_t>(o) * in];
                       double* gwr = &gw.v[static_cast<size_t>(o) * in];
                       for (int i = 0; i < in; ++i) {
                         gwr[i] += go * xv.v[static_cast<size_t>(i)];
                         gx.v[static_cast<size_t>(i)] += go * wr[i];
                       }
                       gb.v[static_cast<size_t>(o)] += go;
                     }
                   });
}

DiffValue Tape::matvec(DiffValue x, DiffValue w) {
  const Tensor& xv = value(x.id);
  const Tensor& wv = value(w.id);
  require(wv.shape.size() == 2, "matvec: W must be 2-d");
  const int out = wv.shape[0];
  const int in = wv.shape[1];
  require(static_cast<int>(xv.numel()) == in, "matvec: input size mismatch");

  Tensor y({out});
  for (int o = 0; o < out; ++o) {
    const double* wr = &wv.v[static_cast<size_t>(o) * in];
    double acc = 0.0;
    for (int i = 0; i < in; ++i) acc += wr[i] * xv.v[static_cast<size_t>(i)];
    y.v[static_cast<size_t>(o)] = acc;
  }
  return make_node(std::move(y), {x.id, w.id},
                   [xid = x.id, wid = w.id, out, in](Tape& t, int self) {
                     const Tensor& g = t.grad(self);
                     const Tensor& xv = t.value(xid);
                     const Tensor& wv = t.value(wid);
                     Tensor& gx = t.grad(xid);
                     Tensor& gw = t.grad(wid);
                     for (int o = 0; o < out; ++o) {
                       const double go = g.v[static_cast<size_t>(o)];
                       const double* wr = &wv.v[static_cast<size_t>(o) * in];
                       double* gwr = &gw.v[static_cast<size_t>(o) * in];
                       for (int i = 0; i < in; ++i) {
                         gwr[i] += go * xv.v[static_cast<size_t>(i)];
                         gx.v[static_cast<size_t>(i)] += go * wr[i];
                       }
                     }
                   });
}

DiffValue Tape::conv2d_3x3(DiffValue x, DiffValue w, DiffValue b) {
  const Tensor& xv = value(x.id);
  const Tensor& wv = value(w.id);
  const Tensor& bv = value(b.id);
  require(xv.shape.size() == 3, "conv2d: input must be [C,H,W]");
  require(wv.shape.size() == 4 && wv.shape[2] == 3 && wv.shape[3] == 3,
          "conv2d: weight must be [O,C,3,3]");
  const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  const int O = wv.shape[0];
  require(wv.shape[1] == C, "conv2d: channel mismatch");
  require(static_cast<int>(bv.numel()) == O, "conv2d: bias size mismatch");

  Tensor y({O, H, W});
  for (int o = 0; o < O; ++o) {
    double* yp = &y.v[static_cast<size_t>(o) * H * W];
    const double bias = bv.v[static_cast<size_t>(o)];
    for (int i = 0; i < H * W; ++i) yp[i] = bias;
    for (int c = 0; c < C; ++c) {
      const double* xp = &xv.v[static_cast<size_t>(c) * H * W];
      const double* wp = &wv.v[(static_cast<size_t>(o) * C + c) * 9];
      for (int ky = 0; ky < 3; ++ky) {
        for (int kx = 0; kx < 3; ++kx) {
          const double wk = wp[ky * 3 + kx];
          const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
          const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
          for (int yy = y0; yy < y1; ++yy) {
            const double* xr = xp + static_cast<size_t>(yy + ky - 1) * W + (kx - 1);
            double* yr = yp + static_cast<size_t>(yy) * W;
            for (int xx = x0; xx < x1; ++xx) yr[xx] += wk * xr[xx];
          }
        }
      }
    }
  }
  return make_node(
      std::move(y), {x.id, w.id, b.id},
      [xid = x.id, wid = w.id, bid = b.id, C, H, W, O](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& xv = t.value(xid);
        const Tensor& wv = t.value(wid);
        Tensor& gx = t.grad(xid);
        Tensor& gw = t.grad(wid);
        Tensor& gb = t.grad(bid);
        for (int o = 0; o < O; ++o) {
          const double* gp = &g.v[static_cast<size_t>(o) * H * W];
          double acc_b = 0.0;
          for (int i = 0; i < H * W; ++i) acc_b += gp[i];
          gb.v[static_cast<size_t>(o)] += acc_b;
          for (int c = 0; c < C; ++c) {
            const double* xp = &xv.v[static_cast<size_t>(c) * H * W];
            const double* wp = &wv.v[(static_cast<size_t>(o) * C + c) * 9];
            double* gxp = &gx.v[static_cast<size_t>(c) * H * W];
            double* gwp = &gw.v[(static_cast<size_t>(o) * C + c) * 9];
            for (int ky = 0; ky < 3; ++ky) {
              for (int kx = 0; kx < 3; ++kx) {
                const double wk = wp[ky * 3 + kx];
                double acc_w = 0.0;
                const int y0 = std::max(0, 1 - ky), y1 = std::min(H, H + 1 - ky);
                const int x0 = std::max(0, 1 - kx), x1 = std::min(W, W + 1 - kx);
                for (int yy = y0; yy < y1; ++yy) {
                  const double* xr = xp + static_cast<size_t>(yy + ky - 1) * W + (kx - 1);
                  double* gxr = gxp + static_cast<size_t>(yy + ky - 1) * W + (kx - 1);
                  const double* gr = gp + static_cast<size_t>(yy) * W;
                  for (int xx = x0; xx < x1; ++xx) {
                    acc_w += gr[xx] * xr[xx];
                    gxr[xx] += gr[xx] * wk;
                  }
                }
                gwp[ky * 3 + kx] += acc_w;
              }
            }
          }
        }
      });
}

DiffValue Tape::avgpool2(DiffValue x) {
  const Tensor& xv = value(x.id);
  require(xv.shape.size() == 3, "avgpool2: input must be [C,H,W]");
  const int C = xv.shape[0], H = xv.shape[1], W = xv.shape[2];
  require(H % 2 == 0 && W % 2 == 0, "avgpool2: dims must be even");
  const int HO = H / 2, WO = W / 2;

  Tensor y({C, HO, WO});
  for (int c = 0; c < C; ++c) {
    const double* xp = &xv.v[static_cast<size_t>(c) * H * W];
    double* yp = &y.v[static_cast<size_t>(c) * HO * WO];
    for (int yy = 0; yy < HO; ++yy) {
      for (int xx = 0; xx < WO; ++xx) {
        const double* r0 = xp + static_cast<size_t>(2 * yy) * W + 2 * xx;
        const double* r1 = r0 + W;
        yp[static_cast<size_t>(yy) * WO + xx] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
  return make_node(std::move(y), {x.id},
                   [xid = x.id, C, H, W, HO, WO](Tape& t, int self) {
                     const Tensor& g = t.grad(self);
                     Tensor& gx = t.grad(xid);
                     for (int c = 0; c < C; ++c) {
                       const double* gp = &g.v[static_cast<size_t>(c) * HO * WO];
                       double* gxp = &gx.v[static_cast<size_t>(c) * H * W];
                       for (int yy = 0; yy < HO; ++yy) {
                         for (int xx = 0; xx < WO; ++xx) {
                           const double gv = 0.25 * gp[static_cast<size_t>(yy) * WO + xx];
                           double* r0 = gxp + static_cast<size_t>(2 * yy) * W + 2 * xx;
                           double* r1 = r0 + W;
                           r0[0] += gv;
                           r0[1] += gv;
                           r1[0] += gv;
                           r1[1] += gv;
                         }
                       }
                     }
                   });
}

DiffValue Tape::flatten(DiffValue x) {
  const Tensor& xv = value(x.id);
  Tensor y({static_cast<int>(xv.numel())}, xv.v);
  return make_node(std::move(y), {x.id}, [xid = x.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xid);
    for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += g.v[i];
  });
}

DiffValue Tape::tanh_op(DiffValue x) {
  const Tensor& xv = value(x.id);
  Tensor y(xv.shape);
  for (size_t i = 0; i < xv.v.size(); ++i) y.v[i] = std::tanh(xv.v[i]);
  return make_node(std::move(y), {x.id}, [xid = x.id](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    const Tensor& yv = t.value(self);
    Tensor& gx = t.grad(xid);
    for (size_t i = 0; i < g.v.size(); ++i)
      gx.v[i] += g.v[i] * (1.0 - yv.v[i] * yv.v[i]);
  });
}

DiffValue Tape::mul(DiffValue a, DiffValue b) {
  const Tensor& av = value(a.id);
  const Tensor& bv = value(b.id);
  require(av.same_shape(bv), "mul: shape mismatch");
  Tensor y(av.shape);
  for (size_t i = 0; i < av.v.size(); ++i) y.v[i] = av.v[i] * bv.v[i];
  return make_node(std::move(y), {a.id, b.id},
                   [aid = a.id, bid = b.id](Tape& t, int self) {
                     const Tensor& g = t.grad(self);
                     const Tensor& av = t.value(aid);
                     const Tensor& bv = t.value(bid);
                     Tensor& ga = t.grad(aid);
                     Tensor& gb = t.grad(bid);
                     for (size_t i = 0; i < g.v.size(); ++i) {
                       ga.v[i] += g.v[i] * bv.v[i];
                       gb.v[i] += g.v[i] * av.v[i];
                     }
                   });
}

DiffValue Tape::rnn_step(DiffValue e, DiffValue h_prev, DiffValue wx, DiffValue wh,
                         DiffValue b) {
  const Tensor& ev = value(e.id);
  const Tensor& hv = value(h_prev.id);
  const Tensor& wxv = value(wx.id);
  const Tensor& whv = value(wh.id);
  const Tensor& bv = value(b.id);
  const int hidden = wxv.shape[0];
  const int embed = wxv.shape[1];
  require(static_cast<int>(ev.numel()) == embed, "rnn_step: embed size mismatch");
  require(static_cast<int>(hv.numel()) == hidden, "rnn_step: state size mismatch");
  require(whv.shape[0] == hidden && whv.shape[1] == hidden, "rnn_step: Wh shape");
  require(static_cast<int>(bv.numel()) == hidden, "rnn_step: bias size mismatch");

  Tensor y({hidden});
  for (int o = 0; o < hidden; ++o) {
    double acc = bv.v[static_cast<size_t>(o)];
    const double* wxr = &wxv.v[static_cast<size_t>(o) * embed];
    for (int i = 0; i < embed; ++i) acc += wxr[i] * ev.v[static_cast<size_t>(i)];
    const double* whr = &whv.v[static_cast<size_t>(o) * hidden];
    for (int i = 0; i < hidden; ++i) acc += whr[i] * hv.v[static_cast<size_t>(i)];
    y.v[static_cast<size_t>(o)] = std::tanh(acc);
  }
  return make_node(
      std::move(y), {e.id, h_prev.id, wx.id, wh.id, b.id},
      [eid = e.id, hid = h_prev.id, wxid = wx.id, whid = wh.id, bid = b.id, hidden,
       embed](Tape& t, int self) {
        const Tensor& g = t.grad(self);
        const Tensor& yv = t.value(self);
        const Tensor& ev = t.value(eid);
        const Tensor& hv = t.value(hid);
        const Tensor& wxv = t.value(wxid);
        const Tensor& whv = t.value(whid);
        Tensor& ge = t.grad(eid);
        Tensor& gh = t.grad(hid);
        Tensor& gwx = t.grad(wxid);
        Tensor& gwh = t.grad(whid);
        Tensor& gb = t.grad(bid);
        for (int o = 0; o < hidden; ++o) {
          const double u =
              g.v[static_cast<size_t>(o)] *
              (1.0 - yv.v[static_cast<size_t>(o)] * yv.v[static_cast<size_t>(o)]);
          gb.v[static_cast<size_t>(o)] += u;
          const double* wxr = &wxv.v[static_cast<size_t>(o) * embed];
          double* gwxr = &gwx.v[static_cast<size_t>(o) * embed];
          for (int i = 0; i < embed; ++i) {
            gwxr[i] += u * ev.v[static_cast<size_t>(i)];
            ge.v[static_cast<size_t>(i)] += u * wxr[i];
          }
          const double* whr = &whv.v[static_cast<size_t>(o) * hidden];
          double* gwhr = &gwh.v[static_cast<size_t>(o) * hidden];
          for (int i = 0; i < hidden; ++i) {
            gwhr[i] += u * hv.v[static_cast<size_t>(i)];
            gh.v[static_cast<size_t>(i)] += u * whr[i];
          }
        }
      });
}

DiffValue Tape::embed_row(DiffValue table, int row) {
  const Tensor& tv = value(table.id);
  require(tv.shape.size() == 2, "embed_row: table must be 2-d");
  const int V = tv.shape[0], E = tv.shape[1];
  require(row >= 0 && row < V, "embed_row: row out of range");
  Tensor y({E});
  const double* src = &tv.v[static_cast<size_t>(row) * E];
  for (int i = 0; i < E; ++i) y.v[static_cast<size_t>(i)] = src[i];
  return make_node(std::move(y), {table.id},
                   [tid = table.id, row, E](Tape& t, int self) {
                     const Tensor& g = t.grad(self);
                     Tensor& gt = t.grad(tid);
                     double* dst = &gt.v[static_cast<size_t>(row) * E];
                     for (int i = 0; i < E; ++i) dst[i] += g.v[static_cast<size_t>(i)];
                   });
}

DiffValue Tape::grad_reverse(DiffValue x, double alpha) {
  const Tensor& xv = value(x.id);
  Tensor y(xv.shape, xv.v);
  return make_node(std::move(y), {x.id}, [xid = x.id, alpha](Tape& t, int self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xid);
    for (size_t i = 0; i < g.v.size(); ++i) gx.v[i] += -alpha * g.v[i];
  });
}

DiffValue Tape::scalar_combine(std::span<const DiffValue> xs,
                               std::span<const double> coeffs) {
  require(xs.size() == coeffs.size(), "scalar_combine: arity mismatch");
  double acc = 0.0;
  std::vector<int> parents;
  parents.reserve(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) {
    require(value(xs[i].id).numel() == 1, "scalar_combine: non-scalar input");
    acc += coeffs[i] * value(xs[i].id).v[0];
    parents.push_back(xs[i].id);
  }
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return make_node(Tensor::scalar(acc), std::move(parents),
                   [cs](Tape& t, int self) {
                     const double g = t.grad(self).v[0];
                     const auto& parents = t.node(self).parents;
                     for (size_t i = 0; i < parents.size(); ++i)
                       t.grad(parents[i]).v[0] += cs[i] * g;
                   });
}

DiffValue Tape::scalar_mean(std::span<const DiffValue> xs) {
  require(!xs.empty(), "scalar_mean: empty input");
  const double inv = 1.0 / static_cast<double>(xs.size());
  double acc = 0.0;
  std::vector<int> parents;
  parents.reserve(xs.size());
  for (const DiffValue& x : xs) {
    require(value(x.id).numel() == 1, "scalar_mean: non-scalar input");
    acc += value(x.id).v[0];
    parents.push_back(x.id);
  }
  return make_node(Tensor::scalar(acc * inv), std::move(parents),
                   [inv](Tape& t, int self) {
                     const double g = t.grad(self).v[0] * inv;
                     for (int p : t.node(self).parents) t.grad(p).v[0] += g;
                   });
}

}  // namespace dbvqa
