#pragma once

// Dense-tensor engine with reverse-mode differentiation.
//
// A Tape records primitive operations in construction order; because the
// fixed model architectures contain no data-dependent control flow, reverse
// creation order is a valid topological order for the backward sweep, and
// replaying it yields bit-identical gradients across runs in a given
// precision mode. Scatter-style reductions accumulate in sorted-by-target
// order so parallel edge/particle construction cannot perturb sums.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "corgi/common.hpp"

namespace corgi::tc {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
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

inline void check_shapes(bool ok, const std::string& op, const Shape& a, const Shape& b) {
    if (!ok)
        throw ValidationError(op + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// ---------------------------------------------------------------------------
// Persistent learnable parameters (live across tapes; gradients accumulate).
// ---------------------------------------------------------------------------

template <class T>
struct Param {
    std::string name;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
class ParamStore {
  public:
    Param<T>& create(const std::string& name, Shape shape) {
        if (find(name)) throw ValidationError("param '" + name + "' already exists");
        auto p = std::make_unique<Param<T>>();
        p->name = name;
        p->shape = std::move(shape);
        p->value.assign(numel(p->shape), T(0));
        p->grad.assign(p->value.size(), T(0));
        params_.push_back(std::move(p));
        return *params_.back();
    }

    Param<T>* find(const std::string& name) {
        for (auto& p : params_)
            if (p->name == name) return p.get();
        return nullptr;
    }

    const std::vector<std::unique_ptr<Param<T>>>& all() const { return params_; }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (auto& p : params_) n += p->size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p->zero_grad();
    }

  private:
    std::vector<std::unique_ptr<Param<T>>> params_;
};

// ---------------------------------------------------------------------------
// Tape and tensor handles
// ---------------------------------------------------------------------------

template <class T>
class Tape;

template <class T>
class Tensor {
  public:
    Tensor() = default;
    Tensor(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape<T>* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool valid() const { return tape_ != nullptr; }

    const Shape& shape() const;
    std::size_t rows() const { return shape()[0]; }
    std::size_t cols() const { return shape().size() > 1 ? shape()[1] : 1; }
    const std::vector<T>& value() const;
    const std::vector<T>& grad() const;
    bool requires_grad() const;

  private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = 0;
};

template <class T>
struct TapeNode {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // sized lazily during backward
    bool requires_grad = false;
    Param<T>* param = nullptr;       // leaf bound to a persistent parameter
    std::function<void()> backward;  // empty for leaves/constants
};

template <class T>
class Tape {
  public:
    Tensor<T> constant(Shape shape, std::vector<T> value) {
        if (numel(shape) != value.size())
            throw ValidationError("tensor: data length " + std::to_string(value.size()) +
                                  " does not match shape " + shape_str(shape));
        return push(std::move(shape), std::move(value), false, nullptr);
    }

    Tensor<T> zeros(Shape shape) {
        std::vector<T> v(numel(shape), T(0));
        return push(std::move(shape), std::move(v), false, nullptr);
    }

    // Stage a parameter as a differentiable leaf. Values are copied; after
    // backward(), the leaf gradient is accumulated into the parameter.
    Tensor<T> leaf(Param<T>& p) {
        Tensor<T> t = push(p.shape, p.value, true, &p);
        return t;
    }

    Tensor<T> push(Shape shape, std::vector<T> value, bool requires_grad, Param<T>* param) {
        TapeNode<T> n;
        n.shape = std::move(shape);
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        n.param = param;
        nodes_.push_back(std::move(n));
        return Tensor<T>(this, nodes_.size() - 1);
    }

    void set_backward(const Tensor<T>& t, std::function<void()> fn) {
        nodes_[t.id()].backward = std::move(fn);
    }

    TapeNode<T>& node(std::size_t id) { return nodes_[id]; }
    const TapeNode<T>& node(std::size_t id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    std::vector<T>& grad_buf(std::size_t id) {
        auto& n = nodes_[id];
        if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
        return n.grad;
    }

    // Reverse sweep from a scalar output; seeds d(out)/d(out) = 1, replays
    // recorded adjoints in reverse creation order, then flushes leaf
    // gradients into their bound parameters in creation order.
    void backward(const Tensor<T>& out) {
        if (numel(nodes_[out.id()].shape) != 1)
            throw ValidationError("backward: output must be scalar, got " +
                                  shape_str(nodes_[out.id()].shape));
        grad_buf(out.id())[0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
            n.backward();
        }
        for (auto& n : nodes_) {
            if (n.param && !n.grad.empty()) {
                for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
            }
        }
    }

  private:
    std::vector<TapeNode<T>> nodes_;
};

template <class T>
const Shape& Tensor<T>::shape() const {
    return tape_->node(id_).shape;
}
template <class T>
const std::vector<T>& Tensor<T>::value() const {
    return tape_->node(id_).value;
}
template <class T>
const std::vector<T>& Tensor<T>::grad() const {
    return tape_->node(id_).grad;
}
template <class T>
bool Tensor<T>::requires_grad() const {
    return tape_->node(id_).requires_grad;
}

// ---------------------------------------------------------------------------
// Indexed-transfer tables (shared by graph aggregation and grid deposition)
// ---------------------------------------------------------------------------

// One entry moves w * source_row(row) into slot (scatter) or w * slot value
// into row (gather). Permutations fix the accumulation order: scatter sums
// by ascending slot, gather sums by ascending row, ties broken by entry
// index, so results do not depend on entry construction order.
template <class T>
struct LinkTable {
    std::vector<std::int64_t> row;
    std::vector<std::int64_t> slot;
    std::vector<T> weight;
    std::vector<std::size_t> by_slot;
    std::vector<std::size_t> by_row;

    std::size_t size() const { return row.size(); }

    void finalize() {
        by_slot.resize(row.size());
        by_row.resize(row.size());
        std::iota(by_slot.begin(), by_slot.end(), std::size_t(0));
        std::iota(by_row.begin(), by_row.end(), std::size_t(0));
        std::stable_sort(by_slot.begin(), by_slot.end(),
                         [&](std::size_t a, std::size_t b) { return slot[a] < slot[b]; });
        std::stable_sort(by_row.begin(), by_row.end(),
                         [&](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    }

    void check(std::size_t n_rows, std::size_t n_slots, const char* op) const {
        for (std::size_t m = 0; m < row.size(); ++m) {
            if (row[m] < 0 || static_cast<std::size_t>(row[m]) >= n_rows)
                throw ValidationError(std::string(op) + ": row index " +
                                      std::to_string(row[m]) + " out of range [0," +
                                      std::to_string(n_rows) + ")");
            if (slot[m] < 0 || static_cast<std::size_t>(slot[m]) >= n_slots)
                throw ValidationError(std::string(op) + ": slot index " +
                                      std::to_string(slot[m]) + " out of range [0," +
                                      std::to_string(n_slots) + ")");
        }
    }
};

template <class T>
using LinkTablePtr = std::shared_ptr<const LinkTable<T>>;

template <class T>
LinkTablePtr<T> make_link_table(std::vector<std::int64_t> rows, std::vector<std::int64_t> slots,
                                std::vector<T> weights) {
    auto t = std::make_shared<LinkTable<T>>();
    t->row = std::move(rows);
    t->slot = std::move(slots);
    t->weight = std::move(weights);
    if (t->row.size() != t->slot.size() || t->row.size() != t->weight.size())
        throw ValidationError("link table: entry arrays differ in length");
    t->finalize();
    return t;
}

// Row-gather table: out[m] = x[index[m]], unit weights.
template <class T>
LinkTablePtr<T> make_index_table(const std::vector<std::int64_t>& index) {
    std::vector<std::int64_t> rows(index.size());
    std::iota(rows.begin(), rows.end(), std::int64_t(0));
    return make_link_table<T>(std::move(rows), std::vector<std::int64_t>(index),
                              std::vector<T>(index.size(), T(1)));
}

// ---------------------------------------------------------------------------
// Primitive operations
// ---------------------------------------------------------------------------

// y = x W + b. x: [N,Fi], W: [Fi,Fo], b: [Fo] (optional).
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>* b = nullptr) {
    Tape<T>* tp = x.tape();
    const Shape& xs = x.shape();
    const Shape& ws = W.shape();
    check_shapes(xs.size() == 2 && ws.size() == 2 && xs[1] == ws[0], "linear", xs, ws);
    const std::size_t n = xs[0], fi = xs[1], fo = ws[1];
    if (b) check_shapes(b->shape() == Shape{fo}, "linear(bias)", b->shape(), ws);

    std::vector<T> y(n * fo, T(0));
    {
        const T* xv = x.value().data();
        const T* wv = W.value().data();
        for (std::size_t i = 0; i < n; ++i) {
            T* yr = y.data() + i * fo;
            if (b) {
                const T* bv = b->value().data();
                for (std::size_t j = 0; j < fo; ++j) yr[j] = bv[j];
            }
            const T* xr = xv + i * fi;
            for (std::size_t k = 0; k < fi; ++k) {
                const T xk = xr[k];
                const T* wr = wv + k * fo;
                for (std::size_t j = 0; j < fo; ++j) yr[j] += xk * wr[j];
            }
        }
    }

    const bool rg = x.requires_grad() || W.requires_grad() || (b && b->requires_grad());
    Tensor<T> out = tp->push({n, fo}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), wi = W.id(), oi = out.id();
        const std::int64_t bi = b ? static_cast<std::int64_t>(b->id()) : -1;
        tp->set_backward(out, [tp, xi, wi, bi, oi, n, fi, fo]() {
            const auto& dy = tp->node(oi).grad;
            const auto& xv = tp->node(xi).value;
            const auto& wv = tp->node(wi).value;
            if (tp->node(xi).requires_grad) {
                auto& dx = tp->grad_buf(xi);
                for (std::size_t i = 0; i < n; ++i) {
                    const T* dyr = dy.data() + i * fo;
                    T* dxr = dx.data() + i * fi;
                    for (std::size_t k = 0; k < fi; ++k) {
                        const T* wr = wv.data() + k * fo;
                        T acc = T(0);
                        for (std::size_t j = 0; j < fo; ++j) acc += dyr[j] * wr[j];
                        dxr[k] += acc;
                    }
                }
            }
            if (tp->node(wi).requires_grad) {
                auto& dw = tp->grad_buf(wi);
                for (std::size_t i = 0; i < n; ++i) {
                    const T* xr = xv.data() + i * fi;
                    const T* dyr = dy.data() + i * fo;
                    for (std::size_t k = 0; k < fi; ++k) {
                        const T xk = xr[k];
                        T* dwr = dw.data() + k * fo;
                        for (std::size_t j = 0; j < fo; ++j) dwr[j] += xk * dyr[j];
                    }
                }
            }
            if (bi >= 0 && tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(static_cast<std::size_t>(bi));
                for (std::size_t i = 0; i < n; ++i) {
                    const T* dyr = dy.data() + i * fo;
                    for (std::size_t j = 0; j < fo; ++j) db[j] += dyr[j];
                }
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    Tape<T>* tp = x.tape();
    std::vector<T> y(x.value());
    for (T& v : y) v = v > T(0) ? v : T(0);
    const bool rg = x.requires_grad();
    Tensor<T> out = tp->push(x.shape(), std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, oi]() {
            const auto& dy = tp->node(oi).grad;
            const auto& xv = tp->node(xi).value;
            auto& dx = tp->grad_buf(xi);
            for (std::size_t k = 0; k < xv.size(); ++k)
                if (xv[k] > T(0)) dx[k] += dy[k];
        });
    }
    return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    check_shapes(a.shape() == b.shape(), "add", a.shape(), b.shape());
    Tape<T>* tp = a.tape();
    std::vector<T> y(a.value());
    const auto& bv = b.value();
    for (std::size_t k = 0; k < y.size(); ++k) y[k] += bv[k];
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor<T> out = tp->push(a.shape(), std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t ai = a.id(), bi = b.id(), oi = out.id();
        tp->set_backward(out, [tp, ai, bi, oi]() {
            const auto& dy = tp->node(oi).grad;
            if (tp->node(ai).requires_grad) {
                auto& da = tp->grad_buf(ai);
                for (std::size_t k = 0; k < dy.size(); ++k) da[k] += dy[k];
            }
            if (tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(bi);
                for (std::size_t k = 0; k < dy.size(); ++k) db[k] += dy[k];
            }
        });
    }
    return out;
}

// Column-wise concatenation of [N,Fa] and [N,Fb] into [N,Fa+Fb].
template <class T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    check_shapes(a.shape().size() == 2 && b.shape().size() == 2 && a.shape()[0] == b.shape()[0],
                 "concat", a.shape(), b.shape());
    Tape<T>* tp = a.tape();
    const std::size_t n = a.shape()[0], fa = a.shape()[1], fb = b.shape()[1];
    std::vector<T> y(n * (fa + fb));
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.value().data() + i * fa, fa, y.data() + i * (fa + fb));
        std::copy_n(b.value().data() + i * fb, fb, y.data() + i * (fa + fb) + fa);
    }
    const bool rg = a.requires_grad() || b.requires_grad();
    Tensor<T> out = tp->push({n, fa + fb}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t ai = a.id(), bi = b.id(), oi = out.id();
        tp->set_backward(out, [tp, ai, bi, oi, n, fa, fb]() {
            const auto& dy = tp->node(oi).grad;
            if (tp->node(ai).requires_grad) {
                auto& da = tp->grad_buf(ai);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < fa; ++k) da[i * fa + k] += dy[i * (fa + fb) + k];
            }
            if (tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(bi);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < fb; ++k)
                        db[i * fb + k] += dy[i * (fa + fb) + fa + k];
            }
        });
    }
    return out;
}

// Row-wise LayerNorm with learned affine: y = gamma * (x - mu) / sigma + beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-6)) {
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2, "layer_norm", xs, xs);
    const std::size_t n = xs[0], f = xs[1];
    check_shapes(gamma.shape() == Shape{f} && beta.shape() == Shape{f}, "layer_norm(affine)",
                 gamma.shape(), xs);
    Tape<T>* tp = x.tape();

    std::vector<T> y(n * f);
    auto xhat = std::make_shared<std::vector<T>>(n * f);
    auto inv_sigma = std::make_shared<std::vector<T>>(n);
    {
        const T* xv = x.value().data();
        const T* gv = gamma.value().data();
        const T* bv = beta.value().data();
        for (std::size_t i = 0; i < n; ++i) {
            const T* xr = xv + i * f;
            T mu = T(0);
            for (std::size_t k = 0; k < f; ++k) mu += xr[k];
            mu /= static_cast<T>(f);
            T var = T(0);
            for (std::size_t k = 0; k < f; ++k) {
                const T dmu = xr[k] - mu;
                var += dmu * dmu;
            }
            var /= static_cast<T>(f);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_sigma)[i] = is;
            for (std::size_t k = 0; k < f; ++k) {
                const T xh = (xr[k] - mu) * is;
                (*xhat)[i * f + k] = xh;
                y[i * f + k] = gv[k] * xh + bv[k];
            }
        }
    }

    const bool rg = x.requires_grad() || gamma.requires_grad() || beta.requires_grad();
    Tensor<T> out = tp->push(xs, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), gi = gamma.id(), bi = beta.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, gi, bi, oi, n, f, xhat, inv_sigma]() {
            const auto& dy = tp->node(oi).grad;
            const auto& gv = tp->node(gi).value;
            if (tp->node(gi).requires_grad) {
                auto& dg = tp->grad_buf(gi);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < f; ++k)
                        dg[k] += dy[i * f + k] * (*xhat)[i * f + k];
            }
            if (tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(bi);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t k = 0; k < f; ++k) db[k] += dy[i * f + k];
            }
            if (tp->node(xi).requires_grad) {
                auto& dx = tp->grad_buf(xi);
                for (std::size_t i = 0; i < n; ++i) {
                    T mean_dxh = T(0), mean_dxh_xh = T(0);
                    for (std::size_t k = 0; k < f; ++k) {
                        const T dxh = dy[i * f + k] * gv[k];
                        mean_dxh += dxh;
                        mean_dxh_xh += dxh * (*xhat)[i * f + k];
                    }
                    mean_dxh /= static_cast<T>(f);
                    mean_dxh_xh /= static_cast<T>(f);
                    const T is = (*inv_sigma)[i];
                    for (std::size_t k = 0; k < f; ++k) {
                        const T dxh = dy[i * f + k] * gv[k];
                        dx[i * f + k] +=
                            is * (dxh - mean_dxh - (*xhat)[i * f + k] * mean_dxh_xh);
                    }
                }
            }
        });
    }
    return out;
}

// InstanceNorm over a [S,C] grid tensor: each channel is normalized across
// all S spatial cells. No learned affine.
template <class T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-6)) {
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2, "instance_norm", xs, xs);
    const std::size_t s = xs[0], c = xs[1];
    if (s == 0) throw ValidationError("instance_norm: empty spatial extent");
    Tape<T>* tp = x.tape();

    std::vector<T> y(s * c);
    auto xhat = std::make_shared<std::vector<T>>(s * c);
    auto inv_sigma = std::make_shared<std::vector<T>>(c);
    {
        const T* xv = x.value().data();
        for (std::size_t ch = 0; ch < c; ++ch) {
            T mu = T(0);
            for (std::size_t i = 0; i < s; ++i) mu += xv[i * c + ch];
            mu /= static_cast<T>(s);
            T var = T(0);
            for (std::size_t i = 0; i < s; ++i) {
                const T d = xv[i * c + ch] - mu;
                var += d * d;
            }
            var /= static_cast<T>(s);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_sigma)[ch] = is;
            for (std::size_t i = 0; i < s; ++i) {
                const T xh = (xv[i * c + ch] - mu) * is;
                (*xhat)[i * c + ch] = xh;
                y[i * c + ch] = xh;
            }
        }
    }

    const bool rg = x.requires_grad();
    Tensor<T> out = tp->push(xs, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, oi, s, c, xhat, inv_sigma]() {
            const auto& dy = tp->node(oi).grad;
            auto& dx = tp->grad_buf(xi);
            for (std::size_t ch = 0; ch < c; ++ch) {
                T mean_dy = T(0), mean_dy_xh = T(0);
                for (std::size_t i = 0; i < s; ++i) {
                    mean_dy += dy[i * c + ch];
                    mean_dy_xh += dy[i * c + ch] * (*xhat)[i * c + ch];
                }
                mean_dy /= static_cast<T>(s);
                mean_dy_xh /= static_cast<T>(s);
                const T is = (*inv_sigma)[ch];
                for (std::size_t i = 0; i < s; ++i)
                    dx[i * c + ch] += is * (dy[i * c + ch] - mean_dy -
                                            (*xhat)[i * c + ch] * mean_dy_xh);
            }
        });
    }
    return out;
}

// out[slot[m]] += w[m] * src[row[m]] over n_slots slots; the differentiable
// half of grid deposition and of graph message aggregation.
template <class T>
Tensor<T> scatter_add(const Tensor<T>& src, const LinkTablePtr<T>& table, std::size_t n_slots) {
    const Shape& xs = src.shape();
    check_shapes(xs.size() == 2, "scatter_add", xs, xs);
    const std::size_t c = xs[1];
    table->check(xs[0], n_slots, "scatter_add");
    Tape<T>* tp = src.tape();

    std::vector<T> y(n_slots * c, T(0));
    {
        const T* xv = src.value().data();
        for (std::size_t idx : table->by_slot) {
            const T w = table->weight[idx];
            const T* xr = xv + static_cast<std::size_t>(table->row[idx]) * c;
            T* yr = y.data() + static_cast<std::size_t>(table->slot[idx]) * c;
            for (std::size_t k = 0; k < c; ++k) yr[k] += w * xr[k];
        }
    }

    const bool rg = src.requires_grad();
    Tensor<T> out = tp->push({n_slots, c}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = src.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, oi, c, table]() {
            const auto& dy = tp->node(oi).grad;
            auto& dx = tp->grad_buf(xi);
            for (std::size_t idx : table->by_row) {
                const T w = table->weight[idx];
                const T* dyr = dy.data() + static_cast<std::size_t>(table->slot[idx]) * c;
                T* dxr = dx.data() + static_cast<std::size_t>(table->row[idx]) * c;
                for (std::size_t k = 0; k < c; ++k) dxr[k] += w * dyr[k];
            }
        });
    }
    return out;
}

// out[row[m]] += w[m] * grid[slot[m]] over n_rows rows; linear adjoint of
// scatter_add under the same table.
template <class T>
Tensor<T> gather_weighted(const Tensor<T>& grid, const LinkTablePtr<T>& table,
                          std::size_t n_rows) {
    const Shape& gs = grid.shape();
    check_shapes(gs.size() == 2, "gather_weighted", gs, gs);
    const std::size_t c = gs[1];
    table->check(n_rows, gs[0], "gather_weighted");
    Tape<T>* tp = grid.tape();

    std::vector<T> y(n_rows * c, T(0));
    {
        const T* gv = grid.value().data();
        for (std::size_t idx : table->by_row) {
            const T w = table->weight[idx];
            const T* gr = gv + static_cast<std::size_t>(table->slot[idx]) * c;
            T* yr = y.data() + static_cast<std::size_t>(table->row[idx]) * c;
            for (std::size_t k = 0; k < c; ++k) yr[k] += w * gr[k];
        }
    }

    const bool rg = grid.requires_grad();
    Tensor<T> out = tp->push({n_rows, c}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t gi = grid.id(), oi = out.id();
        tp->set_backward(out, [tp, gi, oi, c, table]() {
            const auto& dy = tp->node(oi).grad;
            auto& dg = tp->grad_buf(gi);
            for (std::size_t idx : table->by_slot) {
                const T w = table->weight[idx];
                const T* dyr = dy.data() + static_cast<std::size_t>(table->row[idx]) * c;
                T* dgr = dg.data() + static_cast<std::size_t>(table->slot[idx]) * c;
                for (std::size_t k = 0; k < c; ++k) dgr[k] += w * dyr[k];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Grid convolutions. Grid tensors are [S,C] with S = prod(res) cells in
// row-major axis order; per-axis padding is zero or circular.
// ---------------------------------------------------------------------------

namespace detail {

// Per-axis index resolution table for one kernel offset: maps cell index to
// source index, or -1 where zero padding falls outside the grid.
inline std::vector<std::vector<std::vector<int>>> make_offset_maps(
    const std::vector<int>& res, const std::vector<std::uint8_t>& circular, int ksize) {
    const int half = ksize / 2;
    std::vector<std::vector<std::vector<int>>> maps(res.size());
    for (std::size_t a = 0; a < res.size(); ++a) {
        maps[a].resize(ksize);
        for (int t = 0; t < ksize; ++t) {
            maps[a][t].resize(res[a]);
            for (int i = 0; i < res[a]; ++i) {
                int src = i + t - half;
                if (circular[a]) {
                    src %= res[a];
                    if (src < 0) src += res[a];
                } else if (src < 0 || src >= res[a]) {
                    src = -1;
                }
                maps[a][t][i] = src;
            }
        }
    }
    return maps;
}

inline std::vector<std::size_t> spatial_strides(const std::vector<int>& res) {
    std::vector<std::size_t> strides(res.size());
    std::size_t s = 1;
    for (std::size_t a = res.size(); a-- > 0;) {
        strides[a] = s;
        s *= static_cast<std::size_t>(res[a]);
    }
    return strides;
}

inline bool advance_index(std::vector<int>& idx, const std::vector<int>& res) {
    for (std::size_t a = res.size(); a-- > 0;) {
        if (++idx[a] < res[a]) return true;
        idx[a] = 0;
    }
    return false;
}

}  // namespace detail

// Cross-correlation with odd kernel size, stride 1, same-size output.
// x: [S,Ci], w: [Co,Ci,ksize^d], b: [Co].
template <class T>
Tensor<T> conv_nd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                  const std::vector<int>& res, const std::vector<std::uint8_t>& circular,
                  int ksize) {
    const std::size_t d = res.size();
    if (d < 1 || d > 3) throw ValidationError("conv_nd: dimension must be 1..3");
    if (ksize % 2 == 0) throw ValidationError("conv_nd: kernel size must be odd");
    std::size_t cells = 1;
    std::size_t taps = 1;
    for (std::size_t a = 0; a < d; ++a) {
        if (ksize > 2 * res[a] + 1)
            throw ValidationError("conv_nd: kernel size " + std::to_string(ksize) +
                                  " exceeds padded extent on axis " + std::to_string(a));
        cells *= static_cast<std::size_t>(res[a]);
        taps *= static_cast<std::size_t>(ksize);
    }
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2 && xs[0] == cells, "conv_nd(input)", xs, {cells, xs[1]});
    const std::size_t ci = xs[1];
    const Shape& ws = w.shape();
    check_shapes(ws.size() == 3 && ws[1] == ci && ws[2] == taps, "conv_nd(kernel)", ws,
                 {ws[0], ci, taps});
    const std::size_t co = ws[0];
    check_shapes(b.shape() == Shape{co}, "conv_nd(bias)", b.shape(), {co});

    Tape<T>* tp = x.tape();
    const auto maps = detail::make_offset_maps(res, circular, ksize);
    const auto strides = detail::spatial_strides(res);

    // Repack kernel to [taps][Co][Ci] so the channel dot is contiguous.
    auto wre = std::make_shared<std::vector<T>>(taps * co * ci);
    {
        const T* wv = w.value().data();
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i < ci; ++i)
                for (std::size_t t = 0; t < taps; ++t)
                    (*wre)[(t * co + o) * ci + i] = wv[(o * ci + i) * taps + t];
    }

    // Resolved source cell per (cell, tap); -1 marks zero padding.
    auto srcs = std::make_shared<std::vector<std::int64_t>>(cells * taps);
    {
        std::vector<int> idx(d, 0);
        std::size_t cell = 0;
        do {
            for (std::size_t t = 0; t < taps; ++t) {
                std::size_t rem = t;
                std::int64_t flat = 0;
                bool ok = true;
                for (std::size_t a = d; a-- > 0;) {
                    const int ta = static_cast<int>(rem % ksize);
                    rem /= ksize;
                    const int src = maps[a][ta][idx[a]];
                    if (src < 0) {
                        ok = false;
                        break;
                    }
                    flat += static_cast<std::int64_t>(src) *
                            static_cast<std::int64_t>(strides[a]);
                }
                (*srcs)[cell * taps + t] = ok ? flat : -1;
            }
            ++cell;
        } while (detail::advance_index(idx, res));
    }

    std::vector<T> y(cells * co);
    {
        const T* xv = x.value().data();
        const T* bv = b.value().data();
        for (std::size_t cell = 0; cell < cells; ++cell) {
            T* yr = y.data() + cell * co;
            for (std::size_t o = 0; o < co; ++o) yr[o] = bv[o];
            for (std::size_t t = 0; t < taps; ++t) {
                const std::int64_t src = (*srcs)[cell * taps + t];
                if (src < 0) continue;
                const T* xr = xv + static_cast<std::size_t>(src) * ci;
                const T* wt = wre->data() + t * co * ci;
                for (std::size_t o = 0; o < co; ++o) {
                    const T* wr = wt + o * ci;
                    T acc = T(0);
                    for (std::size_t i = 0; i < ci; ++i) acc += wr[i] * xr[i];
                    yr[o] += acc;
                }
            }
        }
    }

    const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
    Tensor<T> out = tp->push({cells, co}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), wi = w.id(), bi = b.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, wi, bi, oi, cells, taps, ci, co, wre, srcs]() {
            const auto& dy = tp->node(oi).grad;
            const auto& xv = tp->node(xi).value;
            const bool need_dx = tp->node(xi).requires_grad;
            const bool need_dw = tp->node(wi).requires_grad;
            std::vector<T> dwre;
            if (need_dw) dwre.assign(taps * co * ci, T(0));
            if (need_dx || need_dw) {
                T* dxp = need_dx ? tp->grad_buf(xi).data() : nullptr;
                for (std::size_t cell = 0; cell < cells; ++cell) {
                    const T* dyr = dy.data() + cell * co;
                    for (std::size_t t = 0; t < taps; ++t) {
                        const std::int64_t src = (*srcs)[cell * taps + t];
                        if (src < 0) continue;
                        const T* xr = xv.data() + static_cast<std::size_t>(src) * ci;
                        if (need_dx) {
                            const T* wt = wre->data() + t * co * ci;
                            T* dxr = dxp + static_cast<std::size_t>(src) * ci;
                            for (std::size_t o = 0; o < co; ++o) {
                                const T g = dyr[o];
                                const T* wr = wt + o * ci;
                                for (std::size_t i = 0; i < ci; ++i) dxr[i] += g * wr[i];
                            }
                        }
                        if (need_dw) {
                            T* dwt = dwre.data() + t * co * ci;
                            for (std::size_t o = 0; o < co; ++o) {
                                const T g = dyr[o];
                                T* dwr = dwt + o * ci;
                                for (std::size_t i = 0; i < ci; ++i) dwr[i] += g * xr[i];
                            }
                        }
                    }
                }
            }
            if (need_dw) {
                auto& dw = tp->grad_buf(wi);
                for (std::size_t o = 0; o < co; ++o)
                    for (std::size_t i = 0; i < ci; ++i)
                        for (std::size_t t = 0; t < taps; ++t)
                            dw[(o * ci + i) * taps + t] += dwre[(t * co + o) * ci + i];
            }
            if (tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(bi);
                for (std::size_t cell = 0; cell < cells; ++cell)
                    for (std::size_t o = 0; o < co; ++o) db[o] += dy[cell * co + o];
            }
        });
    }
    return out;
}

// Transposed convolution, kernel 2, stride 2: doubles every axis.
// x: [S,Ci], w: [Co,Ci,2^d], b: [Co]. Each output cell receives exactly one
// kernel tap plus bias.
template <class T>
Tensor<T> conv_transpose_nd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                            const std::vector<int>& res) {
    const std::size_t d = res.size();
    std::size_t cells = 1, taps = 1;
    for (std::size_t a = 0; a < d; ++a) {
        cells *= static_cast<std::size_t>(res[a]);
        taps *= 2;
    }
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2 && xs[0] == cells, "conv_transpose(input)", xs, {cells, xs[1]});
    const std::size_t ci = xs[1];
    const Shape& ws = w.shape();
    check_shapes(ws.size() == 3 && ws[1] == ci && ws[2] == taps, "conv_transpose(kernel)", ws,
                 {ws[0], ci, taps});
    const std::size_t co = ws[0];
    check_shapes(b.shape() == Shape{co}, "conv_transpose(bias)", b.shape(), {co});

    Tape<T>* tp = x.tape();
    std::vector<int> res2(d);
    for (std::size_t a = 0; a < d; ++a) res2[a] = 2 * res[a];
    const auto in_strides = detail::spatial_strides(res);
    const auto out_strides = detail::spatial_strides(res2);
    const std::size_t out_cells = cells * taps;

    // Flat output index for input cell `cell` and tap t.
    auto out_index = std::make_shared<std::vector<std::size_t>>(cells * taps);
    {
        std::vector<int> idx(d, 0);
        std::size_t cell = 0;
        do {
            for (std::size_t t = 0; t < taps; ++t) {
                std::size_t rem = t, flat = 0;
                for (std::size_t a = d; a-- > 0;) {
                    const int ta = static_cast<int>(rem % 2);
                    rem /= 2;
                    flat += static_cast<std::size_t>(2 * idx[a] + ta) * out_strides[a];
                }
                (*out_index)[cell * taps + t] = flat;
            }
            ++cell;
        } while (detail::advance_index(idx, res));
    }

    std::vector<T> y(out_cells * co);
    {
        const T* bv = b.value().data();
        for (std::size_t cell = 0; cell < out_cells; ++cell)
            for (std::size_t o = 0; o < co; ++o) y[cell * co + o] = bv[o];
        const T* xv = x.value().data();
        const T* wv = w.value().data();
        for (std::size_t cell = 0; cell < cells; ++cell) {
            const T* xr = xv + cell * ci;
            for (std::size_t t = 0; t < taps; ++t) {
                T* yr = y.data() + (*out_index)[cell * taps + t] * co;
                for (std::size_t o = 0; o < co; ++o) {
                    T acc = T(0);
                    for (std::size_t i = 0; i < ci; ++i) acc += wv[(o * ci + i) * taps + t] * xr[i];
                    yr[o] += acc;
                }
            }
        }
    }

    const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
    Tensor<T> out = tp->push({out_cells, co}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), wi = w.id(), bi = b.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, wi, bi, oi, cells, taps, ci, co, out_index]() {
            const auto& dy = tp->node(oi).grad;
            const auto& xv = tp->node(xi).value;
            const auto& wv = tp->node(wi).value;
            const bool need_dx = tp->node(xi).requires_grad;
            const bool need_dw = tp->node(wi).requires_grad;
            for (std::size_t cell = 0; cell < cells; ++cell) {
                const T* xr = xv.data() + cell * ci;
                for (std::size_t t = 0; t < taps; ++t) {
                    const T* dyr = dy.data() + (*out_index)[cell * taps + t] * co;
                    if (need_dx) {
                        T* dxr = tp->grad_buf(xi).data() + cell * ci;
                        for (std::size_t o = 0; o < co; ++o) {
                            const T g = dyr[o];
                            for (std::size_t i = 0; i < ci; ++i)
                                dxr[i] += g * wv[(o * ci + i) * taps + t];
                        }
                    }
                    if (need_dw) {
                        T* dwp = tp->grad_buf(wi).data();
                        for (std::size_t o = 0; o < co; ++o) {
                            const T g = dyr[o];
                            for (std::size_t i = 0; i < ci; ++i)
                                dwp[(o * ci + i) * taps + t] += g * xr[i];
                        }
                    }
                }
            }
            if (tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(bi);
                const std::size_t out_cells2 = cells * taps;
                for (std::size_t cell = 0; cell < out_cells2; ++cell)
                    for (std::size_t o = 0; o < co; ++o) db[o] += dy[cell * co + o];
            }
        });
    }
    return out;
}

// Stride-2 average pooling over non-overlapping 2^d windows.
template <class T>
Tensor<T> avg_pool_nd(const Tensor<T>& x, const std::vector<int>& res) {
    const std::size_t d = res.size();
    std::size_t cells = 1, taps = 1;
    std::vector<int> res2(d);
    for (std::size_t a = 0; a < d; ++a) {
        if (res[a] % 2 != 0)
            throw ValidationError("avg_pool: axis " + std::to_string(a) + " extent " +
                                  std::to_string(res[a]) + " not divisible by 2");
        cells *= static_cast<std::size_t>(res[a]);
        taps *= 2;
        res2[a] = res[a] / 2;
    }
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2 && xs[0] == cells, "avg_pool(input)", xs, {cells, xs[1]});
    const std::size_t c = xs[1];
    Tape<T>* tp = x.tape();
    const auto in_strides = detail::spatial_strides(res);
    const auto out_strides = detail::spatial_strides(res2);
    const std::size_t out_cells = cells / taps;

    auto src_index = std::make_shared<std::vector<std::size_t>>(out_cells * taps);
    {
        std::vector<int> idx(d, 0);
        std::size_t ocell = 0;
        do {
            for (std::size_t t = 0; t < taps; ++t) {
                std::size_t rem = t, flat = 0;
                for (std::size_t a = d; a-- > 0;) {
                    const int ta = static_cast<int>(rem % 2);
                    rem /= 2;
                    flat += static_cast<std::size_t>(2 * idx[a] + ta) * in_strides[a];
                }
                (*src_index)[ocell * taps + t] = flat;
            }
            ++ocell;
        } while (detail::advance_index(idx, res2));
    }

    const T inv = T(1) / static_cast<T>(taps);
    std::vector<T> y(out_cells * c, T(0));
    {
        const T* xv = x.value().data();
        for (std::size_t ocell = 0; ocell < out_cells; ++ocell) {
            T* yr = y.data() + ocell * c;
            for (std::size_t t = 0; t < taps; ++t) {
                const T* xr = xv + (*src_index)[ocell * taps + t] * c;
                for (std::size_t k = 0; k < c; ++k) yr[k] += xr[k];
            }
            for (std::size_t k = 0; k < c; ++k) yr[k] *= inv;
        }
    }

    const bool rg = x.requires_grad();
    Tensor<T> out = tp->push({out_cells, c}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, oi, out_cells, taps, c, inv, src_index]() {
            const auto& dy = tp->node(oi).grad;
            auto& dx = tp->grad_buf(xi);
            for (std::size_t ocell = 0; ocell < out_cells; ++ocell) {
                const T* dyr = dy.data() + ocell * c;
                for (std::size_t t = 0; t < taps; ++t) {
                    T* dxr = dx.data() + (*src_index)[ocell * taps + t] * c;
                    for (std::size_t k = 0; k < c; ++k) dxr[k] += inv * dyr[k];
                }
            }
        });
    }
    return out;
}

// Strided (kernel 2, stride 2) convolution; learned alternative to avg_pool
// on the downsampling path. x: [S,Ci], w: [Co,Ci,2^d], b: [Co].
template <class T>
Tensor<T> conv_stride2_nd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                          const std::vector<int>& res) {
    const std::size_t d = res.size();
    std::size_t cells = 1, taps = 1;
    std::vector<int> res2(d);
    for (std::size_t a = 0; a < d; ++a) {
        if (res[a] % 2 != 0)
            throw ValidationError("conv_stride2: axis extent not divisible by 2");
        cells *= static_cast<std::size_t>(res[a]);
        taps *= 2;
        res2[a] = res[a] / 2;
    }
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2 && xs[0] == cells, "conv_stride2(input)", xs, {cells, xs[1]});
    const std::size_t ci = xs[1];
    const Shape& ws = w.shape();
    check_shapes(ws.size() == 3 && ws[1] == ci && ws[2] == taps, "conv_stride2(kernel)", ws,
                 {ws[0], ci, taps});
    const std::size_t co = ws[0];
    check_shapes(b.shape() == Shape{co}, "conv_stride2(bias)", b.shape(), {co});
    Tape<T>* tp = x.tape();

    const auto in_strides = detail::spatial_strides(res);
    const auto out_strides = detail::spatial_strides(res2);
    const std::size_t out_cells = cells / taps;
    auto src_index = std::make_shared<std::vector<std::size_t>>(out_cells * taps);
    {
        std::vector<int> idx(d, 0);
        std::size_t ocell = 0;
        do {
            for (std::size_t t = 0; t < taps; ++t) {
                std::size_t rem = t, flat = 0;
                for (std::size_t a = d; a-- > 0;) {
                    const int ta = static_cast<int>(rem % 2);
                    rem /= 2;
                    flat += static_cast<std::size_t>(2 * idx[a] + ta) * in_strides[a];
                }
                (*src_index)[ocell * taps + t] = flat;
            }
            ++ocell;
        } while (detail::advance_index(idx, res2));
    }

    std::vector<T> y(out_cells * co);
    {
        const T* xv = x.value().data();
        const T* wv = w.value().data();
        const T* bv = b.value().data();
        for (std::size_t ocell = 0; ocell < out_cells; ++ocell) {
            T* yr = y.data() + ocell * co;
            for (std::size_t o = 0; o < co; ++o) yr[o] = bv[o];
            for (std::size_t t = 0; t < taps; ++t) {
                const T* xr = xv + (*src_index)[ocell * taps + t] * ci;
                for (std::size_t o = 0; o < co; ++o) {
                    T acc = T(0);
                    for (std::size_t i = 0; i < ci; ++i) acc += wv[(o * ci + i) * taps + t] * xr[i];
                    yr[o] += acc;
                }
            }
        }
    }

    const bool rg = x.requires_grad() || w.requires_grad() || b.requires_grad();
    Tensor<T> out = tp->push({out_cells, co}, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), wi = w.id(), bi = b.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, wi, bi, oi, out_cells, taps, ci, co, src_index]() {
            const auto& dy = tp->node(oi).grad;
            const auto& xv = tp->node(xi).value;
            const auto& wv = tp->node(wi).value;
            const bool need_dx = tp->node(xi).requires_grad;
            const bool need_dw = tp->node(wi).requires_grad;
            for (std::size_t ocell = 0; ocell < out_cells; ++ocell) {
                const T* dyr = dy.data() + ocell * co;
                for (std::size_t t = 0; t < taps; ++t) {
                    const std::size_t src = (*src_index)[ocell * taps + t];
                    if (need_dx) {
                        T* dxr = tp->grad_buf(xi).data() + src * ci;
                        for (std::size_t o = 0; o < co; ++o) {
                            const T g = dyr[o];
                            for (std::size_t i = 0; i < ci; ++i)
                                dxr[i] += g * wv[(o * ci + i) * taps + t];
                        }
                    }
                    if (need_dw) {
                        const T* xr = xv.data() + src * ci;
                        T* dwp = tp->grad_buf(wi).data();
                        for (std::size_t o = 0; o < co; ++o) {
                            const T g = dyr[o];
                            for (std::size_t i = 0; i < ci; ++i)
                                dwp[(o * ci + i) * taps + t] += g * xr[i];
                        }
                    }
                }
            }
            if (tp->node(bi).requires_grad) {
                auto& db = tp->grad_buf(bi);
                for (std::size_t ocell = 0; ocell < out_cells; ++ocell)
                    for (std::size_t o = 0; o < co; ++o) db[o] += dy[ocell * co + o];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loss-side helpers
// ---------------------------------------------------------------------------

// y = x * scale[col] + shift[col] with constant per-column factors;
// denormalizes standardized predictions.
template <class T>
Tensor<T> scale_shift_cols(const Tensor<T>& x, const std::vector<T>& scale,
                           const std::vector<T>& shift) {
    const Shape& xs = x.shape();
    check_shapes(xs.size() == 2 && xs[1] == scale.size() && xs[1] == shift.size(),
                 "scale_shift_cols", xs, {xs[0], scale.size()});
    Tape<T>* tp = x.tape();
    const std::size_t n = xs[0], f = xs[1];
    std::vector<T> y(n * f);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < f; ++k) y[i * f + k] = x.value()[i * f + k] * scale[k] + shift[k];
    const bool rg = x.requires_grad();
    Tensor<T> out = tp->push(xs, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), oi = out.id();
        auto sc = std::make_shared<std::vector<T>>(scale);
        tp->set_backward(out, [tp, xi, oi, n, f, sc]() {
            const auto& dy = tp->node(oi).grad;
            auto& dx = tp->grad_buf(xi);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < f; ++k) dx[i * f + k] += dy[i * f + k] * (*sc)[k];
        });
    }
    return out;
}

// y = alpha * x + base with a constant base matrix.
template <class T>
Tensor<T> scale_add_const(const Tensor<T>& x, T alpha, const std::vector<T>& base) {
    const Shape& xs = x.shape();
    if (base.size() != x.value().size())
        throw ValidationError("scale_add_const: base size mismatch");
    Tape<T>* tp = x.tape();
    std::vector<T> y(x.value().size());
    for (std::size_t k = 0; k < y.size(); ++k) y[k] = alpha * x.value()[k] + base[k];
    const bool rg = x.requires_grad();
    Tensor<T> out = tp->push(xs, std::move(y), rg, nullptr);
    if (rg) {
        const std::size_t xi = x.id(), oi = out.id();
        tp->set_backward(out, [tp, xi, oi, alpha]() {
            const auto& dy = tp->node(oi).grad;
            auto& dx = tp->grad_buf(xi);
            for (std::size_t k = 0; k < dy.size(); ++k) dx[k] += alpha * dy[k];
        });
    }
    return out;
}

// Mean over rows of the squared row-difference norm, with minimum-image
// wrapping per column where wrap_len[col] > 0. NaN inputs are rejected (a
// diverging rollout is a caller bug, not a quiet large loss).
template <class T>
Tensor<T> mse_rows(const Tensor<T>& pred, const std::vector<T>& target,
                   const std::vector<T>& wrap_len) {
    const Shape& ps = pred.shape();
    check_shapes(ps.size() == 2, "mse_rows", ps, ps);
    const std::size_t n = ps[0], f = ps[1];
    if (target.size() != n * f || wrap_len.size() != f)
        throw ValidationError("mse_rows: target/wrap length mismatch");
    if (n == 0) throw ValidationError("mse_rows: empty input");
    Tape<T>* tp = pred.tape();

    auto diff = std::make_shared<std::vector<T>>(n * f);
    T acc = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < f; ++k) {
            T dlt = pred.value()[i * f + k] - target[i * f + k];
            if (wrap_len[k] > T(0)) {
                const T len = wrap_len[k];
                dlt = static_cast<T>(
                    std::remainder(static_cast<double>(dlt), static_cast<double>(len)));
                if (dlt <= T(-0.5) * len) dlt += len;
            }
            if (!std::isfinite(static_cast<double>(dlt)))
                throw Error("mse_rows: non-finite difference at row " + std::to_string(i));
            (*diff)[i * f + k] = dlt;
            acc += dlt * dlt;
        }
    }
    acc /= static_cast<T>(n);

    const bool rg = pred.requires_grad();
    Tensor<T> out = tp->push({1}, {acc}, rg, nullptr);
    if (rg) {
        const std::size_t pi = pred.id(), oi = out.id();
        tp->set_backward(out, [tp, pi, oi, n, diff]() {
            const T g = tp->node(oi).grad[0];
            auto& dp = tp->grad_buf(pi);
            const T c = T(2) / static_cast<T>(n);
            for (std::size_t k = 0; k < dp.size(); ++k) dp[k] += g * c * (*diff)[k];
        });
    }
    return out;
}

}  // namespace corgi::tc
