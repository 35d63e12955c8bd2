// Copyright 2026 The compodiff authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Dense 64-bit tensors with reverse-mode automatic differentiation.
// Every op records its parents and a backprop closure; backward() walks the
// resulting DAG once in reverse topological order. Graphs are per-thread by
// construction (no shared tape), so distinct graphs may live on distinct
// threads.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "compodiff/rng.hpp"

#if defined(COMPODIFF_FORCE_FINITE_CHECKS) || !defined(NDEBUG)
#define COMPODIFF_FINITE_CHECKS 1
#else
#define COMPODIFF_FINITE_CHECKS 0
#endif

namespace compodiff {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until needed; same length as value after
  bool requires_grad = false;
  const char* op = nullptr;  // null for leaves
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;

  bool needs_grad() const { return requires_grad || static_cast<bool>(backprop); }

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

// Thread-local switch; ops built while disabled record no graph.
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev; }
};

class Tensor {
 public:
  Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {
    impl_->shape = {0};
  }

  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false)
      : impl_(std::make_shared<detail::TensorImpl>()) {
    if (numel(shape) != static_cast<std::int64_t>(data.size()))
      throw std::invalid_argument("Tensor: shape " + shape_str(shape) + " needs " +
                                  std::to_string(numel(shape)) + " values, got " +
                                  std::to_string(data.size()));
    impl_->shape = std::move(shape);
    impl_->value = std::move(data);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), 0.0);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor full(Shape shape, double fill, bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)), fill);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor scalar(double x, bool requires_grad = false) {
    return Tensor({1}, {x}, requires_grad);
  }

  static Tensor randn(Shape shape, Rng& rng, bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (double& x : v) x = rng.normal();
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, double lo, double hi,
                             bool requires_grad = false) {
    std::vector<double> v(static_cast<std::size_t>(numel(shape)));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int i) const { return impl_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(impl_->value.size()); }

  std::span<const double> data() const { return impl_->value; }
  // Raw writable access; only sane for leaves outside any recorded graph
  // (parameter init, optimizer updates).
  std::span<double> raw() { return impl_->value; }

  double item() const {
    if (size() != 1)
      throw std::invalid_argument("item: tensor " + shape_str(shape()) + " is not scalar");
    return impl_->value[0];
  }

  double at(std::int64_t i) const { return impl_->value[static_cast<std::size_t>(i)]; }
  double at(int r, int c) const {
    return impl_->value[static_cast<std::size_t>(r) * dim(1) + c];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool b) { impl_->requires_grad = b; }
  bool is_leaf() const { return impl_->op == nullptr; }
  const char* op() const { return impl_->op; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  std::span<double> grad_mut() {
    impl_->ensure_grad();
    return impl_->grad;
  }
  void zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }

  // leaf clone sharing nothing (used by optimizers/tests)
  Tensor detached_copy(bool requires_grad = false) const {
    return Tensor(impl_->shape, impl_->value, requires_grad);
  }

  void backward() const;

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                        std::vector<Tensor> parents,
                        std::function<void(detail::TensorImpl&)> backprop);
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Ordered list of operation records; inputs precede consumers.
struct Graph {
  std::vector<detail::TensorImpl*> nodes;
};

inline Graph build_graph(const Tensor& root) {
  Graph g;
  std::unordered_set<detail::TensorImpl*> seen;
  // iterative post-order DFS over parents
  struct Frame {
    detail::TensorImpl* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  detail::TensorImpl* r = root.impl().get();
  if (!r->needs_grad()) return g;
  stack.push_back({r, 0});
  seen.insert(r);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorImpl* p = f.node->parents[f.next_parent++].get();
      if (p->needs_grad() && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      g.nodes.push_back(f.node);
      stack.pop_back();
    }
  }
  return g;
}

inline void Tensor::backward() const {
  if (size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(shape()));
  Graph g = build_graph(*this);
  // interior grads are scratch for this pass; leaf grads accumulate
  for (detail::TensorImpl* n : g.nodes) {
    n->ensure_grad();
    if (n->op != nullptr) std::fill(n->grad.begin(), n->grad.end(), 0.0);
  }
  impl_->ensure_grad();
  impl_->grad[0] += 1.0;
  for (auto it = g.nodes.rbegin(); it != g.nodes.rend(); ++it) {
    if ((*it)->backprop) (*it)->backprop(**it);
  }
}

inline Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> parents,
                      std::function<void(detail::TensorImpl&)> backprop) {
#if COMPODIFF_FINITE_CHECKS
  for (double v : value) {
    if (!std::isfinite(v))
      throw std::domain_error(std::string("non-finite value produced by op '") + op + "'");
  }
#endif
  Tensor out(std::move(shape), std::move(value), false);
  bool wire = false;
  if (GradMode::enabled()) {
    for (const Tensor& p : parents)
      if (p.impl()->needs_grad()) {
        wire = true;
        break;
      }
  }
  if (wire) {
    out.impl_->op = op;
    out.impl_->parents.reserve(parents.size());
    for (const Tensor& p : parents) out.impl_->parents.push_back(p.impl());
    out.impl_->backprop = std::move(backprop);
  }
  return out;
}

namespace detail {

inline void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

inline void accumulate(TensorImpl& dst, std::span<const double> g) {
  dst.ensure_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst.grad[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise ops

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("add", a, b);
  std::vector<double> v(a.data().begin(), a.data().end());
  for (std::int64_t i = 0; i < b.size(); ++i) v[static_cast<std::size_t>(i)] += b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op("add", a.shape(), std::move(v), {a, b}, [ai, bi](detail::TensorImpl& self) {
    if (ai->needs_grad()) detail::accumulate(*ai, self.grad);
    if (bi->needs_grad()) detail::accumulate(*bi, self.grad);
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<double> v(a.data().begin(), a.data().end());
  for (std::int64_t i = 0; i < b.size(); ++i) v[static_cast<std::size_t>(i)] -= b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op("sub", a.shape(), std::move(v), {a, b}, [ai, bi](detail::TensorImpl& self) {
    if (ai->needs_grad()) detail::accumulate(*ai, self.grad);
    if (bi->needs_grad()) {
      bi->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) bi->grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i)
    v[static_cast<std::size_t>(i)] = a.at(i) * b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op("mul", a.shape(), std::move(v), {a, b}, [ai, bi](detail::TensorImpl& self) {
    if (ai->needs_grad()) {
      ai->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        ai->grad[i] += self.grad[i] * bi->value[i];
    }
    if (bi->needs_grad()) {
      bi->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        bi->grad[i] += self.grad[i] * ai->value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i) v[static_cast<std::size_t>(i)] = a.at(i) * c;
  auto ai = a.impl();
  return make_op("scale", a.shape(), std::move(v), {a}, [ai, c](detail::TensorImpl& self) {
    ai->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ai->grad[i] += self.grad[i] * c;
  });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i) v[static_cast<std::size_t>(i)] = a.at(i) + c;
  auto ai = a.impl();
  return make_op("add_scalar", a.shape(), std::move(v), {a}, [ai](detail::TensorImpl& self) {
    detail::accumulate(*ai, self.grad);
  });
}

// convex combination (1-alpha)*a + alpha*b; shared by every blend in the codebase
inline Tensor lerp(const Tensor& a, const Tensor& b, double alpha) {
  detail::check_same_shape("lerp", a, b);
  const double w0 = 1.0 - alpha;
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i)
    v[static_cast<std::size_t>(i)] = w0 * a.at(i) + alpha * b.at(i);
  auto ai = a.impl(), bi = b.impl();
  return make_op("lerp", a.shape(), std::move(v), {a, b},
                 [ai, bi, w0, alpha](detail::TensorImpl& self) {
                   if (ai->needs_grad()) {
                     ai->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       ai->grad[i] += self.grad[i] * w0;
                   }
                   if (bi->needs_grad()) {
                     bi->ensure_grad();
                     for (std::size_t i = 0; i < self.grad.size(); ++i)
                       bi->grad[i] += self.grad[i] * alpha;
                   }
                 });
}

inline Tensor minimum(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("minimum", a, b);
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i)
    v[static_cast<std::size_t>(i)] = std::min(a.at(i), b.at(i));
  auto ai = a.impl(), bi = b.impl();
  // subgradient: ties route to the first argument
  return make_op("minimum", a.shape(), std::move(v), {a, b}, [ai, bi](detail::TensorImpl& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (ai->value[i] <= bi->value[i]) {
        if (ai->needs_grad()) {
          ai->ensure_grad();
          ai->grad[i] += self.grad[i];
        }
      } else if (bi->needs_grad()) {
        bi->ensure_grad();
        bi->grad[i] += self.grad[i];
      }
    }
  });
}

inline Tensor maximum(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("maximum", a, b);
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i)
    v[static_cast<std::size_t>(i)] = std::max(a.at(i), b.at(i));
  auto ai = a.impl(), bi = b.impl();
  return make_op("maximum", a.shape(), std::move(v), {a, b}, [ai, bi](detail::TensorImpl& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (ai->value[i] >= bi->value[i]) {
        if (ai->needs_grad()) {
          ai->ensure_grad();
          ai->grad[i] += self.grad[i];
        }
      } else if (bi->needs_grad()) {
        bi->ensure_grad();
        bi->grad[i] += self.grad[i];
      }
    }
  });
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Tensor silu(const Tensor& a) {
  std::vector<double> v(static_cast<std::size_t>(a.size()));
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double x = a.at(i);
    v[static_cast<std::size_t>(i)] = x * stable_sigmoid(x);
  }
  auto ai = a.impl();
  return make_op("silu", a.shape(), std::move(v), {a}, [ai](detail::TensorImpl& self) {
    ai->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double x = ai->value[i];
      const double s = stable_sigmoid(x);
      ai->grad[i] += self.grad[i] * (s * (1.0 + x * (1.0 - s)));
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

inline Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.at(i);
  auto ai = a.impl();
  return make_op("sum", {1}, {acc}, {a}, [ai](detail::TensorImpl& self) {
    ai->ensure_grad();
    const double g = self.grad[0];
    for (double& x : ai->grad) x += g;
  });
}

inline Tensor mean_all(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.at(i);
  auto ai = a.impl();
  return make_op("mean_all", {1}, {acc * inv}, {a}, [ai, inv](detail::TensorImpl& self) {
    ai->ensure_grad();
    const double g = self.grad[0] * inv;
    for (double& x : ai->grad) x += g;
  });
}

// sum of squared differences; the ||.||^2 of every objective
inline Tensor sum_squared_error(const Tensor& a, const Tensor& b) {
  detail::check_same_shape("sum_squared_error", a, b);
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a.at(i) - b.at(i);
    acc += d * d;
  }
  auto ai = a.impl(), bi = b.impl();
  return make_op("sum_squared_error", {1}, {acc}, {a, b}, [ai, bi](detail::TensorImpl& self) {
    const double g = self.grad[0];
    if (ai->needs_grad()) ai->ensure_grad();
    if (bi->needs_grad()) bi->ensure_grad();
    for (std::size_t i = 0; i < ai->value.size(); ++i) {
      const double d = 2.0 * g * (ai->value[i] - bi->value[i]);
      if (ai->needs_grad()) ai->grad[i] += d;
      if (bi->needs_grad()) bi->grad[i] -= d;
    }
  });
}

// ---------------------------------------------------------------------------
// structural ops (rows == channels of a CxL tensor)

inline void check_2d(const char* op, const Tensor& t) {
  if (t.ndim() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " +
                                shape_str(t.shape()));
}

inline Tensor concat_rows(const Tensor& a, const Tensor& b) {
  check_2d("concat_rows", a);
  check_2d("concat_rows", b);
  if (a.dim(1) != b.dim(1))
    throw std::invalid_argument("concat_rows: length mismatch " + std::to_string(a.dim(1)) +
                                " vs " + std::to_string(b.dim(1)));
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(a.size() + b.size()));
  v.insert(v.end(), a.data().begin(), a.data().end());
  v.insert(v.end(), b.data().begin(), b.data().end());
  auto ai = a.impl(), bi = b.impl();
  const std::size_t na = static_cast<std::size_t>(a.size());
  return make_op("concat_rows", {a.dim(0) + b.dim(0), a.dim(1)}, std::move(v), {a, b},
                 [ai, bi, na](detail::TensorImpl& self) {
                   if (ai->needs_grad()) {
                     ai->ensure_grad();
                     for (std::size_t i = 0; i < na; ++i) ai->grad[i] += self.grad[i];
                   }
                   if (bi->needs_grad()) {
                     bi->ensure_grad();
                     for (std::size_t i = na; i < self.grad.size(); ++i)
                       bi->grad[i - na] += self.grad[i];
                   }
                 });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  Tensor out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out = concat_rows(out, parts[i]);
  return out;
}

inline Tensor slice_rows(const Tensor& a, int r0, int r1) {
  check_2d("slice_rows", a);
  if (r0 < 0 || r1 > a.dim(0) || r0 >= r1)
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," +
                                std::to_string(r1) + ") for " + shape_str(a.shape()));
  const int L = a.dim(1);
  std::vector<double> v(a.data().begin() + static_cast<std::ptrdiff_t>(r0) * L,
                        a.data().begin() + static_cast<std::ptrdiff_t>(r1) * L);
  auto ai = a.impl();
  return make_op("slice_rows", {r1 - r0, L}, std::move(v), {a},
                 [ai, r0, L](detail::TensorImpl& self) {
                   ai->ensure_grad();
                   const std::size_t off = static_cast<std::size_t>(r0) * L;
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     ai->grad[off + i] += self.grad[i];
                 });
}

// nearest-neighbour column repetition to a new length (upsampling and the
// latent length-matching used for conditioning)
inline Tensor repeat_cols(const Tensor& a, int new_len) {
  check_2d("repeat_cols", a);
  const int C = a.dim(0), L = a.dim(1);
  if (new_len < L)
    throw std::invalid_argument("repeat_cols: new length " + std::to_string(new_len) +
                                " < source length " + std::to_string(L));
  std::vector<double> v(static_cast<std::size_t>(C) * new_len);
  std::vector<int> src(static_cast<std::size_t>(new_len));
  for (int j = 0; j < new_len; ++j)
    src[static_cast<std::size_t>(j)] =
        static_cast<int>((static_cast<std::int64_t>(j) * L) / new_len);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < new_len; ++j)
      v[static_cast<std::size_t>(c) * new_len + j] = a.at(c, src[static_cast<std::size_t>(j)]);
  auto ai = a.impl();
  return make_op("repeat_cols", {C, new_len}, std::move(v), {a},
                 [ai, C, L, new_len, src](detail::TensorImpl& self) {
                   ai->ensure_grad();
                   for (int c = 0; c < C; ++c)
                     for (int j = 0; j < new_len; ++j)
                       ai->grad[static_cast<std::size_t>(c) * L + src[static_cast<std::size_t>(j)]] +=
                           self.grad[static_cast<std::size_t>(c) * new_len + j];
                 });
}

// per-row scale / bias against a length-C vector
inline Tensor scale_rows(const Tensor& x, const Tensor& s) {
  check_2d("scale_rows", x);
  if (s.size() != x.dim(0))
    throw std::invalid_argument("scale_rows: scale length " + std::to_string(s.size()) +
                                " != channels " + std::to_string(x.dim(0)));
  const int C = x.dim(0), L = x.dim(1);
  std::vector<double> v(static_cast<std::size_t>(C) * L);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < L; ++j)
      v[static_cast<std::size_t>(c) * L + j] = x.at(c, j) * s.at(c);
  auto xi = x.impl(), si = s.impl();
  return make_op("scale_rows", x.shape(), std::move(v), {x, s},
                 [xi, si, C, L](detail::TensorImpl& self) {
                   if (xi->needs_grad()) {
                     xi->ensure_grad();
                     for (int c = 0; c < C; ++c) {
                       const double sc = si->value[static_cast<std::size_t>(c)];
                       for (int j = 0; j < L; ++j) {
                         const std::size_t k = static_cast<std::size_t>(c) * L + j;
                         xi->grad[k] += self.grad[k] * sc;
                       }
                     }
                   }
                   if (si->needs_grad()) {
                     si->ensure_grad();
                     for (int c = 0; c < C; ++c) {
                       double acc = 0.0;
                       for (int j = 0; j < L; ++j) {
                         const std::size_t k = static_cast<std::size_t>(c) * L + j;
                         acc += self.grad[k] * xi->value[k];
                       }
                       si->grad[static_cast<std::size_t>(c)] += acc;
                     }
                   }
                 });
}

inline Tensor bias_rows(const Tensor& x, const Tensor& b) {
  check_2d("bias_rows", x);
  if (b.size() != x.dim(0))
    throw std::invalid_argument("bias_rows: bias length " + std::to_string(b.size()) +
                                " != channels " + std::to_string(x.dim(0)));
  const int C = x.dim(0), L = x.dim(1);
  std::vector<double> v(static_cast<std::size_t>(C) * L);
  for (int c = 0; c < C; ++c)
    for (int j = 0; j < L; ++j)
      v[static_cast<std::size_t>(c) * L + j] = x.at(c, j) + b.at(c);
  auto xi = x.impl(), bi = b.impl();
  return make_op("bias_rows", x.shape(), std::move(v), {x, b},
                 [xi, bi, C, L](detail::TensorImpl& self) {
                   if (xi->needs_grad()) detail::accumulate(*xi, self.grad);
                   if (bi->needs_grad()) {
                     bi->ensure_grad();
                     for (int c = 0; c < C; ++c) {
                       double acc = 0.0;
                       for (int j = 0; j < L; ++j)
                         acc += self.grad[static_cast<std::size_t>(c) * L + j];
                       bi->grad[static_cast<std::size_t>(c)] += acc;
                     }
                   }
                 });
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                shape_str(shape));
  std::vector<double> v(a.data().begin(), a.data().end());
  auto ai = a.impl();
  return make_op("reshape", std::move(shape), std::move(v), {a},
                 [ai](detail::TensorImpl& self) { detail::accumulate(*ai, self.grad); });
}

// ---------------------------------------------------------------------------
// linear maps

// out = input . weight^T + bias, applied over the trailing dimension
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.ndim() != 2)
    throw std::invalid_argument("affine: weight must be 2-D, got " + shape_str(w.shape()));
  const int f_out = w.dim(0), f_in = w.dim(1);
  if (x.ndim() < 1 || x.dim(x.ndim() - 1) != f_in)
    throw std::invalid_argument("affine: trailing dim of input " + shape_str(x.shape()) +
                                " != F_in " + std::to_string(f_in));
  if (b.size() != f_out)
    throw std::invalid_argument("affine: bias length " + std::to_string(b.size()) +
                                " != F_out " + std::to_string(f_out));
  const std::int64_t batch = x.size() / f_in;
  std::vector<double> v(static_cast<std::size_t>(batch) * f_out);
  for (std::int64_t n = 0; n < batch; ++n) {
    const double* xb = &x.data()[static_cast<std::size_t>(n) * f_in];
    for (int o = 0; o < f_out; ++o) {
      const double* wr = &w.data()[static_cast<std::size_t>(o) * f_in];
      double acc = b.at(o);
      for (int i = 0; i < f_in; ++i) acc += xb[i] * wr[i];
      v[static_cast<std::size_t>(n) * f_out + o] = acc;
    }
  }
  Shape out_shape = x.shape();
  out_shape.back() = f_out;
  auto xi = x.impl(), wi = w.impl(), bi = b.impl();
  return make_op(
      "affine", std::move(out_shape), std::move(v), {x, w, b},
      [xi, wi, bi, batch, f_in, f_out](detail::TensorImpl& self) {
        if (xi->needs_grad()) {
          xi->ensure_grad();
          for (std::int64_t n = 0; n < batch; ++n)
            for (int o = 0; o < f_out; ++o) {
              const double g = self.grad[static_cast<std::size_t>(n) * f_out + o];
              const double* wr = &wi->value[static_cast<std::size_t>(o) * f_in];
              double* gx = &xi->grad[static_cast<std::size_t>(n) * f_in];
              for (int i = 0; i < f_in; ++i) gx[i] += g * wr[i];
            }
        }
        if (wi->needs_grad()) {
          wi->ensure_grad();
          for (std::int64_t n = 0; n < batch; ++n) {
            const double* xb = &xi->value[static_cast<std::size_t>(n) * f_in];
            for (int o = 0; o < f_out; ++o) {
              const double g = self.grad[static_cast<std::size_t>(n) * f_out + o];
              double* gw = &wi->grad[static_cast<std::size_t>(o) * f_in];
              for (int i = 0; i < f_in; ++i) gw[i] += g * xb[i];
            }
          }
        }
        if (bi->needs_grad()) {
          bi->ensure_grad();
          for (std::int64_t n = 0; n < batch; ++n)
            for (int o = 0; o < f_out; ++o)
              bi->grad[static_cast<std::size_t>(o)] +=
                  self.grad[static_cast<std::size_t>(n) * f_out + o];
        }
      });
}

// input [C_in x L], kernels [C_out x C_in x K]
inline Tensor conv1d(const Tensor& x, const Tensor& k, int stride, int padding) {
  check_2d("conv1d", x);
  if (k.ndim() != 3)
    throw std::invalid_argument("conv1d: kernels must be 3-D [C_out x C_in x K], got " +
                                shape_str(k.shape()));
  const int c_in = x.dim(0), L = x.dim(1);
  const int c_out = k.dim(0), kc_in = k.dim(1), K = k.dim(2);
  if (kc_in != c_in)
    throw std::invalid_argument("conv1d: input channels " + std::to_string(c_in) +
                                " != kernel input channels " + std::to_string(kc_in));
  if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv1d: padding must be >= 0");
  if (K > L + 2 * padding)
    throw std::invalid_argument("conv1d: kernel size " + std::to_string(K) +
                                " exceeds padded length " + std::to_string(L + 2 * padding));
  const int l_out = (L + 2 * padding - K) / stride + 1;
  std::vector<double> v(static_cast<std::size_t>(c_out) * l_out, 0.0);
  for (int co = 0; co < c_out; ++co) {
    double* out = &v[static_cast<std::size_t>(co) * l_out];
    for (int ci = 0; ci < c_in; ++ci) {
      const double* xx = &x.data()[static_cast<std::size_t>(ci) * L];
      const double* kk = &k.data()[(static_cast<std::size_t>(co) * c_in + ci) * K];
      if (stride == 1) {
        // contiguous per-tap accumulation, vectorizes
        for (int j = 0; j < K; ++j) {
          const double kj = kk[j];
          const int off = j - padding;
          const int t_lo = std::max(0, -off);
          const int t_hi = std::min(l_out, L - off);
          for (int t = t_lo; t < t_hi; ++t) out[t] += xx[t + off] * kj;
        }
      } else {
        for (int t = 0; t < l_out; ++t) {
          const int base = t * stride - padding;
          const int jlo = std::max(0, -base);
          const int jhi = std::min(K, L - base);
          double acc = 0.0;
          for (int j = jlo; j < jhi; ++j) acc += xx[base + j] * kk[j];
          out[t] += acc;
        }
      }
    }
  }
  auto xi = x.impl(), ki = k.impl();
  return make_op(
      "conv1d", {c_out, l_out}, std::move(v), {x, k},
      [xi, ki, c_in, c_out, L, K, l_out, stride, padding](detail::TensorImpl& self) {
        if (xi->needs_grad()) {
          xi->ensure_grad();
          for (int co = 0; co < c_out; ++co) {
            const double* g = &self.grad[static_cast<std::size_t>(co) * l_out];
            for (int ci = 0; ci < c_in; ++ci) {
              double* gx = &xi->grad[static_cast<std::size_t>(ci) * L];
              const double* kk = &ki->value[(static_cast<std::size_t>(co) * c_in + ci) * K];
              if (stride == 1) {
                for (int j = 0; j < K; ++j) {
                  const double kj = kk[j];
                  const int off = j - padding;
                  const int t_lo = std::max(0, -off);
                  const int t_hi = std::min(l_out, L - off);
                  for (int t = t_lo; t < t_hi; ++t) gx[t + off] += g[t] * kj;
                }
              } else {
                for (int t = 0; t < l_out; ++t) {
                  const int base = t * stride - padding;
                  const int jlo = std::max(0, -base);
                  const int jhi = std::min(K, L - base);
                  const double gt = g[t];
                  for (int j = jlo; j < jhi; ++j) gx[base + j] += gt * kk[j];
                }
              }
            }
          }
        }
        if (ki->needs_grad()) {
          ki->ensure_grad();
          for (int co = 0; co < c_out; ++co) {
            const double* g = &self.grad[static_cast<std::size_t>(co) * l_out];
            for (int ci = 0; ci < c_in; ++ci) {
              const double* xx = &xi->value[static_cast<std::size_t>(ci) * L];
              double* gk = &ki->grad[(static_cast<std::size_t>(co) * c_in + ci) * K];
              if (stride == 1) {
                for (int j = 0; j < K; ++j) {
                  const int off = j - padding;
                  const int t_lo = std::max(0, -off);
                  const int t_hi = std::min(l_out, L - off);
                  double acc = 0.0;
                  for (int t = t_lo; t < t_hi; ++t) acc += g[t] * xx[t + off];
                  gk[j] += acc;
                }
              } else {
                for (int t = 0; t < l_out; ++t) {
                  const int base = t * stride - padding;
                  const int jlo = std::max(0, -base);
                  const int jhi = std::min(K, L - base);
                  const double gt = g[t];
                  for (int j = jlo; j < jhi; ++j) gk[j] += gt * xx[base + j];
                }
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// normalization

inline Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                         double eps) {
  check_2d("group_norm", x);
  const int C = x.dim(0), L = x.dim(1);
  if (groups < 1 || C % groups != 0)
    throw std::invalid_argument("group_norm: channels " + std::to_string(C) +
                                " not divisible by groups " + std::to_string(groups));
  if (gamma.size() != C || beta.size() != C)
    throw std::invalid_argument("group_norm: gamma/beta must have length " + std::to_string(C));
  if (!(eps > 0.0)) throw std::invalid_argument("group_norm: eps must be > 0");
  const int cpg = C / groups;
  const std::int64_t m = static_cast<std::int64_t>(cpg) * L;
  std::vector<double> mu(static_cast<std::size_t>(groups));
  std::vector<double> inv_std(static_cast<std::size_t>(groups));
  std::vector<double> v(static_cast<std::size_t>(C) * L);
  for (int g = 0; g < groups; ++g) {
    const double* base = &x.data()[static_cast<std::size_t>(g) * m];
    double s = 0.0;
    for (std::int64_t i = 0; i < m; ++i) s += base[i];
    const double mean = s / static_cast<double>(m);
    double var = 0.0;
    for (std::int64_t i = 0; i < m; ++i) {
      const double d = base[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    mu[static_cast<std::size_t>(g)] = mean;
    inv_std[static_cast<std::size_t>(g)] = 1.0 / std::sqrt(var + eps);
  }
  for (int c = 0; c < C; ++c) {
    const int g = c / cpg;
    const double is = inv_std[static_cast<std::size_t>(g)];
    const double mean = mu[static_cast<std::size_t>(g)];
    const double ga = gamma.at(c), be = beta.at(c);
    for (int j = 0; j < L; ++j)
      v[static_cast<std::size_t>(c) * L + j] = (x.at(c, j) - mean) * is * ga + be;
  }
  auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl();
  return make_op(
      "group_norm", x.shape(), std::move(v), {x, gamma, beta},
      [xi, gi, bi, groups, cpg, C, L, m, mu, inv_std](detail::TensorImpl& self) {
        // dxhat = g * gamma; dx = (dxhat - mean(dxhat) - xhat * mean(dxhat*xhat)) * inv_std
        std::vector<double> xhat(static_cast<std::size_t>(C) * L);
        for (int c = 0; c < C; ++c) {
          const int g = c / cpg;
          for (int j = 0; j < L; ++j) {
            const std::size_t k = static_cast<std::size_t>(c) * L + j;
            xhat[k] = (xi->value[k] - mu[static_cast<std::size_t>(g)]) *
                      inv_std[static_cast<std::size_t>(g)];
          }
        }
        if (gi->needs_grad()) {
          gi->ensure_grad();
          for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int j = 0; j < L; ++j) {
              const std::size_t k = static_cast<std::size_t>(c) * L + j;
              acc += self.grad[k] * xhat[k];
            }
            gi->grad[static_cast<std::size_t>(c)] += acc;
          }
        }
        if (bi->needs_grad()) {
          bi->ensure_grad();
          for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int j = 0; j < L; ++j)
              acc += self.grad[static_cast<std::size_t>(c) * L + j];
            bi->grad[static_cast<std::size_t>(c)] += acc;
          }
        }
        if (xi->needs_grad()) {
          xi->ensure_grad();
          const double inv_m = 1.0 / static_cast<double>(m);
          for (int g = 0; g < groups; ++g) {
            double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
              const double ga = gi->value[static_cast<std::size_t>(c)];
              for (int j = 0; j < L; ++j) {
                const std::size_t k = static_cast<std::size_t>(c) * L + j;
                const double dxh = self.grad[k] * ga;
                sum_dxhat += dxh;
                sum_dxhat_xhat += dxh * xhat[k];
              }
            }
            sum_dxhat *= inv_m;
            sum_dxhat_xhat *= inv_m;
            const double is = inv_std[static_cast<std::size_t>(g)];
            for (int c = g * cpg; c < (g + 1) * cpg; ++c) {
              const double ga = gi->value[static_cast<std::size_t>(c)];
              for (int j = 0; j < L; ++j) {
                const std::size_t k = static_cast<std::size_t>(c) * L + j;
                const double dxh = self.grad[k] * ga;
                xi->grad[k] += (dxh - sum_dxhat - xhat[k] * sum_dxhat_xhat) * is;
              }
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// attention building blocks

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d("matmul", a);
  check_2d("matmul", b);
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw std::invalid_argument("matmul: inner dims " + std::to_string(k) + " vs " +
                                std::to_string(k2));
  std::vector<double> v(static_cast<std::size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* ar = &a.data()[static_cast<std::size_t>(i) * k];
    double* out = &v[static_cast<std::size_t>(i) * n];
    for (int p = 0; p < k; ++p) {
      const double av = ar[p];
      const double* br = &b.data()[static_cast<std::size_t>(p) * n];
      for (int j = 0; j < n; ++j) out[j] += av * br[j];
    }
  }
  auto ai = a.impl(), bi = b.impl();
  return make_op("matmul", {m, n}, std::move(v), {a, b},
                 [ai, bi, m, k, n](detail::TensorImpl& self) {
                   if (ai->needs_grad()) {
                     ai->ensure_grad();
                     for (int i = 0; i < m; ++i)
                       for (int p = 0; p < k; ++p) {
                         double acc = 0.0;
                         const double* g = &self.grad[static_cast<std::size_t>(i) * n];
                         const double* br = &bi->value[static_cast<std::size_t>(p) * n];
                         for (int j = 0; j < n; ++j) acc += g[j] * br[j];
                         ai->grad[static_cast<std::size_t>(i) * k + p] += acc;
                       }
                   }
                   if (bi->needs_grad()) {
                     bi->ensure_grad();
                     for (int p = 0; p < k; ++p)
                       for (int i = 0; i < m; ++i) {
                         const double av = ai->value[static_cast<std::size_t>(i) * k + p];
                         const double* g = &self.grad[static_cast<std::size_t>(i) * n];
                         double* gb = &bi->grad[static_cast<std::size_t>(p) * n];
                         for (int j = 0; j < n; ++j) gb[j] += av * g[j];
                       }
                   }
                 });
}

inline Tensor transpose2d(const Tensor& a) {
  check_2d("transpose2d", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<std::size_t>(j) * m + i] = a.at(i, j);
  auto ai = a.impl();
  return make_op("transpose2d", {n, m}, std::move(v), {a},
                 [ai, m, n](detail::TensorImpl& self) {
                   ai->ensure_grad();
                   for (int i = 0; i < m; ++i)
                     for (int j = 0; j < n; ++j)
                       ai->grad[static_cast<std::size_t>(i) * n + j] +=
                           self.grad[static_cast<std::size_t>(j) * m + i];
                 });
}

inline Tensor softmax_rows(const Tensor& a) {
  check_2d("softmax_rows", a);
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> v(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const double* row = &a.data()[static_cast<std::size_t>(i) * n];
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      const double e = std::exp(row[j] - mx);
      v[static_cast<std::size_t>(i) * n + j] = e;
      z += e;
    }
    const double inv = 1.0 / z;
    for (int j = 0; j < n; ++j) v[static_cast<std::size_t>(i) * n + j] *= inv;
  }
  auto ai = a.impl();
  return make_op("softmax_rows", a.shape(), std::move(v), {a},
                 [ai, m, n](detail::TensorImpl& self) {
                   ai->ensure_grad();
                   for (int i = 0; i < m; ++i) {
                     const double* y = &self.value[static_cast<std::size_t>(i) * n];
                     const double* g = &self.grad[static_cast<std::size_t>(i) * n];
                     double dot = 0.0;
                     for (int j = 0; j < n; ++j) dot += y[j] * g[j];
                     for (int j = 0; j < n; ++j)
                       ai->grad[static_cast<std::size_t>(i) * n + j] += y[j] * (g[j] - dot);
                   }
                 });
}

// ---------------------------------------------------------------------------
// gradient checking

// max over coordinates of |analytic - central difference| / max(1, |analytic|)
template <class F>
double grad_check(F&& f, const Tensor& point, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be > 0");
  Tensor x = point.detached_copy(/*requires_grad=*/true);
  Tensor loss = f(x);
  if (loss.size() != 1) throw std::invalid_argument("grad_check: function must be scalar-valued");
  loss.backward();
  std::vector<double> analytic(static_cast<std::size_t>(x.size()), 0.0);
  if (x.has_grad()) analytic.assign(x.grad().begin(), x.grad().end());
  double worst = 0.0;
  NoGradGuard ng;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    const double keep = x.raw()[static_cast<std::size_t>(i)];
    x.raw()[static_cast<std::size_t>(i)] = keep + h;
    const double fp = f(x).item();
    x.raw()[static_cast<std::size_t>(i)] = keep - h;
    const double fm = f(x).item();
    x.raw()[static_cast<std::size_t>(i)] = keep;
    const double fd = (fp - fm) / (2.0 * h);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double err = std::abs(a - fd) / std::max(1.0, std::abs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace compodiff
