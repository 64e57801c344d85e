#include "lamar/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "lamar/error.hpp"
#include "lamar/kernels.hpp"
#include "lamar/rng.hpp"

namespace lamar {

using kernels::Trans;

const Tensor& Var::value() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(ParamStore& store, const std::string& name) {
  auto& e = store.entry(name);
  Node n;
  n.view = &e.value;
  if (!e.frozen && record_) {
    if (!e.grad.same_shape(e.value)) e.grad = Tensor(e.value.rows(), e.value.cols());
    n.sink = &e.grad;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.view ? *n.view : n.value;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  return n.sink ? *n.sink : n.grad;
}

Tensor& Graph::grad_buffer(Var v) {
  Node& n = nodes_[v.id()];
  if (n.sink) return *n.sink;
  if (n.grad.empty()) {
    const Tensor& val = n.view ? *n.view : n.value;
    n.grad = Tensor(val.rows(), val.cols());
  }
  return n.grad;
}

Var Graph::emit(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
  if (!value.all_finite()) {
    throw Error(ErrorCode::kInvariant,
                "graph: op produced non-finite values " + value.shape_string());
  }
  Node n;
  n.value = std::move(value);
  if (record_) {
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                  [this](Var in) { return nodes_[in.id()].requires_grad; });
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  if (!record_) {
    throw Error(ErrorCode::kInvalidArgument, "backward: graph was built without recording");
  }
  const Tensor& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw Error(ErrorCode::kShapeMismatch,
                "backward: loss must be a 1x1 scalar, got " + lv.shape_string());
  }
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss)[0] += 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, Var(this, id));
  }
}

namespace ops {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
  throw Error(ErrorCode::kShapeMismatch,
              op + ": incompatible shapes " + a.shape_string() + " and " + b.shape_string());
}

[[noreturn]] void arg_error(const std::string& op, const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, op + ": " + what);
}

void require_same(const char* op, Var a, Var b) {
  if (!a.value().same_shape(b.value())) shape_error(op, a.value(), b.value());
}

Var emit(Var like, Tensor value, std::initializer_list<Var> inputs, Graph::BackwardFn fn) {
  return like.graph().emit(std::move(value),
                           std::span<const Var>(inputs.begin(), inputs.size()), std::move(fn));
}

// Adds `scale * src` into dst elementwise.
void axpy(Tensor& dst, const Tensor& src, Real scale = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

Real stable_sigmoid(Real x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const Real e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  kernels::gemm(av, Trans::kNo, bv, Trans::kNo, out, false);
  return emit(a, std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) kernels::gemm(go, Trans::kNo, b.value(), Trans::kYes, g.grad_buffer(a), true);
    if (g.needs_grad(b)) kernels::gemm(a.value(), Trans::kYes, go, Trans::kNo, g.grad_buffer(b), true);
  });
}

Var linear(Var x, Var w) { return matmul(x, w); }

Var linear(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.cols() != wv.rows()) shape_error("linear", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("linear(bias)", wv, bv);
  Tensor out(xv.rows(), wv.cols());
  for (std::size_t r = 0; r < out.rows(); ++r) {
    std::copy(bv.data().begin(), bv.data().end(), out.row_span(r).begin());
  }
  kernels::gemm(xv, Trans::kNo, wv, Trans::kNo, out, true);
  return emit(x, std::move(out), {x, w, b}, [x, w, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(x)) kernels::gemm(go, Trans::kNo, w.value(), Trans::kYes, g.grad_buffer(x), true);
    if (g.needs_grad(w)) kernels::gemm(x.value(), Trans::kYes, go, Trans::kNo, g.grad_buffer(w), true);
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (std::size_t r = 0; r < go.rows(); ++r) {
        for (std::size_t c = 0; c < go.cols(); ++c) gb[c] += go(r, c);
      }
    }
  });
}

Var add(Var a, Var b) {
  require_same("add", a, b);
  Tensor out = a.value();
  axpy(out, b.value());
  return emit(a, std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) axpy(g.grad_buffer(a), go);
    if (g.needs_grad(b)) axpy(g.grad_buffer(b), go);
  });
}

Var sub(Var a, Var b) {
  require_same("sub", a, b);
  Tensor out = a.value();
  axpy(out, b.value(), -1.0);
  return emit(a, std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) axpy(g.grad_buffer(a), go);
    if (g.needs_grad(b)) axpy(g.grad_buffer(b), go, -1.0);
  });
}

Var mul(Var a, Var b) {
  require_same("mul", a, b);
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return emit(a, std::move(out), {a, b}, [a, b](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * b.value()[i];
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * a.value()[i];
    }
  });
}

Var scale(Var x, Real factor) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= factor;
  return emit(x, std::move(out), {x}, [x, factor](Graph& g, Var self) {
    axpy(g.grad_buffer(x), g.grad(self), factor);
  });
}

Var add_row(Var x, Var row) {
  const Tensor& xv = x.value();
  const Tensor& rv = row.value();
  if (rv.rows() != 1 || rv.cols() != xv.cols()) shape_error("add_row", xv, rv);
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += rv[c];
  }
  return emit(x, std::move(out), {x, row}, [x, row](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(x)) axpy(g.grad_buffer(x), go);
    if (g.needs_grad(row)) {
      Tensor& gr = g.grad_buffer(row);
      for (std::size_t r = 0; r < go.rows(); ++r) {
        for (std::size_t c = 0; c < go.cols(); ++c) gr[c] += go(r, c);
      }
    }
  });
}

Var add_periodic(Var x, Var table) {
  const Tensor& xv = x.value();
  const Tensor& tv = table.value();
  if (tv.rows() == 0 || tv.cols() != xv.cols() || xv.rows() % tv.rows() != 0) {
    shape_error("add_periodic", xv, tv);
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    const std::size_t p = r % tv.rows();
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += tv(p, c);
  }
  return emit(x, std::move(out), {x, table}, [x, table](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(x)) axpy(g.grad_buffer(x), go);
    if (g.needs_grad(table)) {
      Tensor& gt = g.grad_buffer(table);
      for (std::size_t r = 0; r < go.rows(); ++r) {
        const std::size_t p = r % gt.rows();
        for (std::size_t c = 0; c < go.cols(); ++c) gt(p, c) += go(r, c);
      }
    }
  });
}

Var repeat_row(Var row, std::size_t times) {
  const Tensor& rv = row.value();
  if (rv.rows() != 1) arg_error("repeat_row", "expected a single row, got " + rv.shape_string());
  Tensor out(times, rv.cols());
  for (std::size_t r = 0; r < times; ++r) {
    std::copy(rv.data().begin(), rv.data().end(), out.row_span(r).begin());
  }
  return emit(row, std::move(out), {row}, [row](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gr = g.grad_buffer(row);
    for (std::size_t r = 0; r < go.rows(); ++r) {
      for (std::size_t c = 0; c < go.cols(); ++c) gr[c] += go(r, c);
    }
  });
}

Var interleave(std::span<const Var> parts, std::span<const std::size_t> group) {
  if (parts.empty() || parts.size() != group.size()) {
    arg_error("interleave", "need one group size per part");
  }
  const std::size_t cols = parts[0].cols();
  std::size_t samples = 0;
  std::size_t stride = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const Tensor& pv = parts[i].value();
    if (group[i] == 0 || pv.cols() != cols || pv.rows() % group[i] != 0) {
      shape_error("interleave", parts[0].value(), pv);
    }
    const std::size_t s = pv.rows() / group[i];
    if (i == 0) samples = s;
    if (s != samples) shape_error("interleave", parts[0].value(), pv);
    stride += group[i];
  }
  Tensor out(samples * stride, cols);
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t row = s * stride;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      const Tensor& pv = parts[i].value();
      for (std::size_t k = 0; k < group[i]; ++k, ++row) {
        auto src = pv.row_span(s * group[i] + k);
        std::copy(src.begin(), src.end(), out.row_span(row).begin());
      }
    }
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  std::vector<std::size_t> grp(group.begin(), group.end());
  return parts[0].graph().emit(
      std::move(out), parts, [ins, grp, samples, stride](Graph& g, Var self) {
        const Tensor& go = g.grad(self);
        for (std::size_t s = 0; s < samples; ++s) {
          std::size_t row = s * stride;
          for (std::size_t i = 0; i < ins.size(); ++i) {
            if (!g.needs_grad(ins[i])) {
              row += grp[i];
              continue;
            }
            Tensor& gi = g.grad_buffer(ins[i]);
            for (std::size_t k = 0; k < grp[i]; ++k, ++row) {
              auto src = go.row_span(row);
              auto dst = gi.row_span(s * grp[i] + k);
              for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
          }
        }
      });
}

Var take_rows(Var x, std::size_t group, std::size_t index) {
  const Tensor& xv = x.value();
  if (group == 0 || index >= group || xv.rows() % group != 0) {
    arg_error("take_rows", "invalid group/index for " + xv.shape_string());
  }
  const std::size_t n = xv.rows() / group;
  Tensor out(n, xv.cols());
  for (std::size_t s = 0; s < n; ++s) {
    auto src = xv.row_span(s * group + index);
    std::copy(src.begin(), src.end(), out.row_span(s).begin());
  }
  return emit(x, std::move(out), {x}, [x, group, index](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t s = 0; s < go.rows(); ++s) {
      auto src = go.row_span(s);
      auto dst = gx.row_span(s * group + index);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var group_mean(Var x, std::size_t group) {
  const Tensor& xv = x.value();
  if (group == 0 || xv.rows() % group != 0) {
    arg_error("group_mean", "rows of " + xv.shape_string() + " not divisible by group");
  }
  const std::size_t n = xv.rows() / group;
  const Real inv = 1.0 / static_cast<Real>(group);
  Tensor out(n, xv.cols());
  for (std::size_t s = 0; s < n; ++s) {
    auto dst = out.row_span(s);
    for (std::size_t k = 0; k < group; ++k) {
      auto src = xv.row_span(s * group + k);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
    }
    for (auto& v : dst) v *= inv;
  }
  return emit(x, std::move(out), {x}, [x, group, inv](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t s = 0; s < go.rows(); ++s) {
      auto src = go.row_span(s);
      for (std::size_t k = 0; k < group; ++k) {
        auto dst = gx.row_span(s * group + k);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += inv * src[c];
      }
    }
  });
}

Var reshape(Var x, std::size_t rows, std::size_t cols) {
  Tensor out = x.value().reshaped(rows, cols);
  return emit(x, std::move(out), {x}, [x](Graph& g, Var self) {
    axpy(g.grad_buffer(x), g.grad(self));
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t end) {
  const Tensor& xv = x.value();
  if (begin >= end || end > xv.cols()) {
    arg_error("slice_cols", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") outside " + xv.shape_string());
  }
  Tensor out(xv.rows(), end - begin);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = xv(r, c);
  }
  return emit(x, std::move(out), {x}, [x, begin](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t r = 0; r < go.rows(); ++r) {
      for (std::size_t c = 0; c < go.cols(); ++c) gx(r, c + begin) += go(r, c);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) arg_error("concat_cols", "no inputs");
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Tensor out(rows, cols);
  std::size_t offset = 0;
  for (Var p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    }
    offset += pv.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].graph().emit(std::move(out), parts, [ins](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    std::size_t offset = 0;
    for (Var p : ins) {
      const std::size_t pc = p.cols();
      if (g.needs_grad(p)) {
        Tensor& gp = g.grad_buffer(p);
        for (std::size_t r = 0; r < go.rows(); ++r) {
          for (std::size_t c = 0; c < pc; ++c) gp(r, c) += go(r, offset + c);
        }
      }
      offset += pc;
    }
  });
}

Var batched_matmul_nt(Var a, Var b, std::size_t group) {
  require_same("batched_matmul_nt", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (group == 0 || av.rows() % group != 0) {
    arg_error("batched_matmul_nt", "rows of " + av.shape_string() + " not divisible by group");
  }
  const std::int64_t blocks = static_cast<std::int64_t>(av.rows() / group);
  const std::size_t k = av.cols();
  Tensor out(av.rows(), group);
#pragma omp parallel for schedule(static) if (blocks > 64)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t base = static_cast<std::size_t>(blk) * group;
    for (std::size_t i = 0; i < group; ++i) {
      for (std::size_t j = 0; j < group; ++j) {
        Real sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += av(base + i, c) * bv(base + j, c);
        out(base + i, j) = sum;
      }
    }
  }
  return emit(a, std::move(out), {a, b}, [a, b, group, blocks, k](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool need_a = g.needs_grad(a);
    const bool need_b = g.needs_grad(b);
    Tensor* ga = need_a ? &g.grad_buffer(a) : nullptr;
    Tensor* gb = need_b ? &g.grad_buffer(b) : nullptr;
#pragma omp parallel for schedule(static) if (blocks > 64)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
      const std::size_t base = static_cast<std::size_t>(blk) * group;
      for (std::size_t i = 0; i < group; ++i) {
        for (std::size_t j = 0; j < group; ++j) {
          const Real gij = go(base + i, j);
          if (ga) {
            for (std::size_t c = 0; c < k; ++c) (*ga)(base + i, c) += gij * bv(base + j, c);
          }
          if (gb) {
            for (std::size_t c = 0; c < k; ++c) (*gb)(base + j, c) += gij * av(base + i, c);
          }
        }
      }
    }
  });
}

Var batched_matmul(Var p, Var v, std::size_t group) {
  const Tensor& pv = p.value();
  const Tensor& vv = v.value();
  if (group == 0 || pv.cols() != group || pv.rows() != vv.rows() || pv.rows() % group != 0) {
    shape_error("batched_matmul", pv, vv);
  }
  const std::int64_t blocks = static_cast<std::int64_t>(pv.rows() / group);
  const std::size_t k = vv.cols();
  Tensor out(pv.rows(), k);
#pragma omp parallel for schedule(static) if (blocks > 64)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t base = static_cast<std::size_t>(blk) * group;
    for (std::size_t i = 0; i < group; ++i) {
      for (std::size_t j = 0; j < group; ++j) {
        const Real w = pv(base + i, j);
        for (std::size_t c = 0; c < k; ++c) out(base + i, c) += w * vv(base + j, c);
      }
    }
  }
  return emit(p, std::move(out), {p, v}, [p, v, group, blocks, k](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    const Tensor& pv = p.value();
    const Tensor& vv = v.value();
    Tensor* gp = g.needs_grad(p) ? &g.grad_buffer(p) : nullptr;
    Tensor* gv = g.needs_grad(v) ? &g.grad_buffer(v) : nullptr;
#pragma omp parallel for schedule(static) if (blocks > 64)
    for (std::int64_t blk = 0; blk < blocks; ++blk) {
      const std::size_t base = static_cast<std::size_t>(blk) * group;
      for (std::size_t i = 0; i < group; ++i) {
        for (std::size_t j = 0; j < group; ++j) {
          if (gp) {
            Real dot = 0.0;
            for (std::size_t c = 0; c < k; ++c) dot += go(base + i, c) * vv(base + j, c);
            (*gp)(base + i, j) += dot;
          }
          if (gv) {
            const Real w = pv(base + i, j);
            for (std::size_t c = 0; c < k; ++c) (*gv)(base + j, c) += w * go(base + i, c);
          }
        }
      }
    }
  });
}

Var softmax_rows(Var x) {
  Tensor out(x.rows(), x.cols());
  kernels::softmax_rows(x.value(), out);
  return emit(x, std::move(out), {x}, [x](Graph& g, Var self) {
    kernels::softmax_rows_backward(self.value(), g.grad(self), g.grad_buffer(x));
  });
}

Var layer_norm(Var x, Var gamma, Var beta) {
  const Tensor& xv = x.value();
  if (gamma.rows() != 1 || gamma.cols() != xv.cols()) shape_error("layer_norm", xv, gamma.value());
  if (!gamma.value().same_shape(beta.value())) shape_error("layer_norm", gamma.value(), beta.value());
  Tensor out(xv.rows(), xv.cols());
  Tensor mean(xv.rows(), 1);
  Tensor rstd(xv.rows(), 1);
  kernels::layer_norm_rows(xv, gamma.value(), beta.value(), out, mean, rstd);
  return emit(x, std::move(out), {x, gamma, beta},
              [x, gamma, beta, mean = std::move(mean), rstd = std::move(rstd)](Graph& g, Var self) {
                Tensor none;
                Tensor& gx = g.needs_grad(x) ? g.grad_buffer(x) : none;
                Tensor none_g;
                Tensor& gg = g.needs_grad(gamma) ? g.grad_buffer(gamma) : none_g;
                Tensor none_b;
                Tensor& gb = g.needs_grad(beta) ? g.grad_buffer(beta) : none_b;
                kernels::layer_norm_rows_backward(x.value(), gamma.value(), mean, rstd,
                                                  g.grad(self), gx, gg, gb);
              });
}

Var gelu(Var x) {
  Tensor out(x.rows(), x.cols());
  kernels::gelu(x.value(), out);
  return emit(x, std::move(out), {x}, [x](Graph& g, Var self) {
    kernels::gelu_backward(x.value(), g.grad(self), g.grad_buffer(x));
  });
}

Var sigmoid(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = stable_sigmoid(v);
  return emit(x, std::move(out), {x}, [x](Graph& g, Var self) {
    const Tensor& y = self.value();
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += go[i] * y[i] * (1.0 - y[i]);
  });
}

Var dropout(Var x, Real p, Rng* rng, bool train) {
  if (!(p >= 0.0 && p < 1.0)) arg_error("dropout", "probability must lie in [0,1)");
  if (!train || p == 0.0) return x;
  if (rng == nullptr) arg_error("dropout", "training-mode dropout needs an rng");
  const Real keep = 1.0 / (1.0 - p);
  Tensor mask(x.rows(), x.cols());
  for (auto& m : mask.data()) m = rng->bernoulli(p) ? 0.0 : keep;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return emit(x, std::move(out), {x}, [x, mask = std::move(mask)](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t i = 0; i < go.size(); ++i) gx[i] += go[i] * mask[i];
  });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor out = xv;
  Tensor norms(xv.rows(), 1);
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    Real sq = 0.0;
    for (Real v : xv.row_span(r)) sq += v * v;
    const Real n = std::sqrt(sq);
    if (!(n > 0.0)) {
      throw Error(ErrorCode::kZeroNorm,
                  "l2_normalize: row " + std::to_string(r) + " has zero norm");
    }
    norms[r] = n;
    for (auto& v : out.row_span(r)) v /= n;
  }
  return emit(x, std::move(out), {x}, [x, norms = std::move(norms)](Graph& g, Var self) {
    const Tensor& y = self.value();
    const Tensor& go = g.grad(self);
    Tensor& gx = g.grad_buffer(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row_span(r);
      auto gr = go.row_span(r);
      Real dot = 0.0;
      for (std::size_t c = 0; c < yr.size(); ++c) dot += yr[c] * gr[c];
      const Real inv = 1.0 / norms[r];
      for (std::size_t c = 0; c < yr.size(); ++c) gx(r, c) += (gr[c] - yr[c] * dot) * inv;
    }
  });
}

Var straight_through_mask(Var p, Var c, const Tensor& mask) {
  require_same("straight_through_mask", p, c);
  if (!mask.same_shape(c.value())) shape_error("straight_through_mask", c.value(), mask);
  Tensor out = c.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return emit(p, std::move(out), {p, c}, [p, c, mask](Graph& g, Var self) {
    const Tensor& go = g.grad(self);
    if (g.needs_grad(p)) {
      Tensor& gp = g.grad_buffer(p);
      for (std::size_t i = 0; i < go.size(); ++i) gp[i] += go[i] * c.value()[i];
    }
    if (g.needs_grad(c)) {
      Tensor& gc = g.grad_buffer(c);
      for (std::size_t i = 0; i < go.size(); ++i) gc[i] += go[i] * mask[i];
    }
  });
}

Var mse(Var a, Var b) {
  require_same("mse", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.empty()) arg_error("mse", "empty input");
  Real sum = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) sum += (av[i] - bv[i]) * (av[i] - bv[i]);
  const Real inv_n = 1.0 / static_cast<Real>(av.size());
  Tensor out(1, 1, sum * inv_n);
  return emit(a, std::move(out), {a, b}, [a, b, inv_n](Graph& g, Var self) {
    const Real go = g.grad(self)[0];
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (g.needs_grad(a)) {
      Tensor& ga = g.grad_buffer(a);
      for (std::size_t i = 0; i < av.size(); ++i) ga[i] += go * 2.0 * (av[i] - bv[i]) * inv_n;
    }
    if (g.needs_grad(b)) {
      Tensor& gb = g.grad_buffer(b);
      for (std::size_t i = 0; i < av.size(); ++i) gb[i] -= go * 2.0 * (av[i] - bv[i]) * inv_n;
    }
  });
}

Var bce_with_logits(Var logits, std::span<const int> targets) {
  const Tensor& z = logits.value();
  if (z.cols() != 1 || z.rows() != targets.size() || z.rows() == 0) {
    arg_error("bce_with_logits", "expected n x 1 logits matching " +
                                     std::to_string(targets.size()) + " targets, got " +
                                     z.shape_string());
  }
  Real sum = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (targets[i] != 0 && targets[i] != 1) {
      arg_error("bce_with_logits", "target " + std::to_string(targets[i]) + " outside {0,1}");
    }
    const Real x = z[i];
    sum += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  const Real inv_n = 1.0 / static_cast<Real>(z.rows());
  std::vector<int> t(targets.begin(), targets.end());
  return emit(logits, Tensor(1, 1, sum * inv_n), {logits},
              [logits, t = std::move(t), inv_n](Graph& g, Var self) {
                const Real go = g.grad(self)[0];
                const Tensor& z = logits.value();
                Tensor& gz = g.grad_buffer(logits);
                for (std::size_t i = 0; i < z.rows(); ++i) {
                  gz[i] += go * (stable_sigmoid(z[i]) - t[i]) * inv_n;
                }
              });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& z = logits.value();
  if (z.rows() != targets.size() || z.rows() == 0 || z.cols() < 2) {
    arg_error("cross_entropy", "expected n x k logits matching " +
                                   std::to_string(targets.size()) + " targets, got " +
                                   z.shape_string());
  }
  Tensor probs(z.rows(), z.cols());
  kernels::softmax_rows(z, probs);
  Real sum = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= z.cols()) {
      arg_error("cross_entropy", "target " + std::to_string(targets[i]) + " out of range");
    }
    auto row = z.row_span(i);
    const Real mx = *std::max_element(row.begin(), row.end());
    Real se = 0.0;
    for (Real v : row) se += std::exp(v - mx);
    sum += mx + std::log(se) - row[targets[i]];
  }
  const Real inv_n = 1.0 / static_cast<Real>(z.rows());
  std::vector<int> t(targets.begin(), targets.end());
  return emit(logits, Tensor(1, 1, sum * inv_n), {logits},
              [logits, t = std::move(t), probs = std::move(probs), inv_n](Graph& g, Var self) {
                const Real go = g.grad(self)[0];
                Tensor& gz = g.grad_buffer(logits);
                for (std::size_t i = 0; i < probs.rows(); ++i) {
                  for (std::size_t c = 0; c < probs.cols(); ++c) {
                    const Real onehot = static_cast<std::size_t>(t[i]) == c ? 1.0 : 0.0;
                    gz(i, c) += go * (probs(i, c) - onehot) * inv_n;
                  }
                }
              });
}

}  // namespace ops
}  // namespace lamar
