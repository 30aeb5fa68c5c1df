#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "mta/errors.hpp"
#include "mta/tensor.hpp"

namespace mta::ad {

namespace detail {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

constexpr double kBceClamp = 1e-12;

} // namespace detail

enum class Op : std::uint8_t {
    leaf,
    matmul,
    add,
    mul,
    tanh_fn,
    sigmoid_fn,
    relu_fn,
    exp_fn,
    neg_fn,
    log_fn,
    softplus_fn,
    softmax_offsets,
    column,
    pick,
    stack,
    slice,
    sum,
    scale,
    dot,
    weighted_sum,
    bce,
};

class Tape;

// Handle to a node on a tape. Plain value type; the tape owns the storage.
struct Value {
    Tape* tape{nullptr};
    std::uint32_t idx{0};
};

struct Node {
    Tensor value;
    Tensor grad; // same shape, zero until backward touches it
    std::vector<std::uint32_t> parents;
    Op op{Op::leaf};
    double aux{0.0};     // bce label, scale factor
    std::uint32_t a0{0}; // column/pick index, slice offset
    std::uint32_t a1{0}; // slice length
};

// Reverse-mode tape over dense tensors. Nodes are appended in evaluation
// order, so reverse index order is a valid topological order for backward.
// Single-threaded per instance; independent tapes may run on independent
// threads.
class Tape {
public:
    Value leaf(Tensor t) {
        Node n;
        n.value = std::move(t);
        return push_(std::move(n));
    }

    Value leaf_scalar(double v) { return leaf(Tensor::scalar(v)); }

    const Tensor& val(Value v) const { return nodes_[v.idx].value; }
    const Tensor& grad(Value v) const { return nodes_[v.idx].grad; }
    Tensor& grad_mut(Value v) { return nodes_[v.idx].grad; }
    std::size_t size() const { return nodes_.size(); }

    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

    // ---- operations ------------------------------------------------------

    Value matmul(Value a, Value b) {
        const Tensor& ta = v_(a);
        const Tensor& tb = v_(b);
        if (ta.rank() != 2 || (tb.rank() != 2 && tb.rank() != 1) || ta.dim(1) != tb.rows())
            throw DimensionError("matmul shape mismatch: " + ta.shape_string() + " vs " +
                                 tb.shape_string());
        const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.cols();
        Node out;
        out.op = Op::matmul;
        out.parents = {a.idx, b.idx};
        out.value = tb.rank() == 1 ? Tensor({m}) : Tensor({m, n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += ta[i * k + p] * tb[p * n + j];
                out.value[i * n + j] = acc;
            }
        return push_(std::move(out));
    }

    Value add(Value a, Value b) { return binary_(Op::add, a, b); }
    Value mul(Value a, Value b) { return binary_(Op::mul, a, b); }

    Value tanh(Value a) { return unary_(Op::tanh_fn, a, [](double x) { return std::tanh(x); }); }
    Value sigmoid(Value a) { return unary_(Op::sigmoid_fn, a, detail::sigmoid); }
    Value relu(Value a) {
        return unary_(Op::relu_fn, a, [](double x) { return x > 0.0 ? x : 0.0; });
    }
    Value exp(Value a) { return unary_(Op::exp_fn, a, [](double x) { return std::exp(x); }); }
    Value neg(Value a) { return unary_(Op::neg_fn, a, [](double x) { return -x; }); }
    Value log(Value a) { return unary_(Op::log_fn, a, [](double x) { return std::log(x); }); }
    Value softplus(Value a) { return unary_(Op::softplus_fn, a, detail::softplus); }

    // softmax(logits - offsets) with max-subtraction; plain softmax is
    // offsets = 0. Output entries are strictly positive and sum to 1.
    Value softmax_offsets(Value logits, Value offsets) {
        const Tensor& l = v_(logits);
        const Tensor& o = v_(offsets);
        if (l.numel() == 0) throw std::domain_error("softmax_offsets: empty input");
        if (l.rank() != 1 || !l.same_shape(o))
            throw DimensionError("softmax_offsets shape mismatch: " + l.shape_string() + " vs " +
                                 o.shape_string());
        if (!o.all_finite()) throw std::domain_error("softmax_offsets: non-finite offsets");
        const std::size_t n = l.numel();
        Node out;
        out.op = Op::softmax_offsets;
        out.parents = {logits.idx, offsets.idx};
        out.value = Tensor({n});
        double mx = l[0] - o[0];
        for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, l[i] - o[i]);
        double denom = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out.value[i] = std::exp(l[i] - o[i] - mx);
            denom += out.value[i];
        }
        for (std::size_t i = 0; i < n; ++i) out.value[i] /= denom;
        return push_(std::move(out));
    }

    Value softmax(Value logits) {
        Value zeros = leaf(Tensor(v_(logits).shape()));
        return softmax_offsets(logits, zeros);
    }

    // Column j of a matrix; backward accumulates into that column only.
    Value column(Value m, std::size_t j) {
        const Tensor& t = v_(m);
        if (t.rank() != 2 || j >= t.dim(1))
            throw DimensionError("column " + std::to_string(j) + " out of range for " +
                                 t.shape_string());
        const std::size_t rows = t.dim(0), cols = t.dim(1);
        Node out;
        out.op = Op::column;
        out.parents = {m.idx};
        out.a0 = static_cast<std::uint32_t>(j);
        out.value = Tensor({rows});
        for (std::size_t r = 0; r < rows; ++r) out.value[r] = t[r * cols + j];
        return push_(std::move(out));
    }

    Value pick(Value v, std::size_t i) {
        const Tensor& t = v_(v);
        if (i >= t.numel())
            throw DimensionError("pick index " + std::to_string(i) + " out of range for " +
                                 t.shape_string());
        Node out;
        out.op = Op::pick;
        out.parents = {v.idx};
        out.a0 = static_cast<std::uint32_t>(i);
        out.value = Tensor::scalar(t[i]);
        return push_(std::move(out));
    }

    Value stack(std::span<const Value> scalars) {
        Node out;
        out.op = Op::stack;
        out.value = Tensor({scalars.size()});
        out.parents.reserve(scalars.size());
        for (std::size_t i = 0; i < scalars.size(); ++i) {
            const Tensor& t = v_(scalars[i]);
            if (t.numel() != 1)
                throw DimensionError("stack expects scalars, got " + t.shape_string());
            out.value[i] = t[0];
            out.parents.push_back(scalars[i].idx);
        }
        return push_(std::move(out));
    }

    Value slice(Value v, std::size_t off, std::size_t len) {
        const Tensor& t = v_(v);
        if (t.rank() != 1 || off + len > t.numel())
            throw DimensionError("slice [" + std::to_string(off) + "," +
                                 std::to_string(off + len) + ") out of range for " +
                                 t.shape_string());
        Node out;
        out.op = Op::slice;
        out.parents = {v.idx};
        out.a0 = static_cast<std::uint32_t>(off);
        out.a1 = static_cast<std::uint32_t>(len);
        out.value = Tensor({len});
        for (std::size_t i = 0; i < len; ++i) out.value[i] = t[off + i];
        return push_(std::move(out));
    }

    Value sum(Value v) {
        const Tensor& t = v_(v);
        Node out;
        out.op = Op::sum;
        out.parents = {v.idx};
        double acc = 0.0;
        for (std::size_t i = 0; i < t.numel(); ++i) acc += t[i];
        out.value = Tensor::scalar(acc);
        return push_(std::move(out));
    }

    Value scale(Value v, double c) {
        const Tensor& t = v_(v);
        Node out;
        out.op = Op::scale;
        out.parents = {v.idx};
        out.aux = c;
        out.value = t;
        out.value.scale(c);
        return push_(std::move(out));
    }

    Value dot(Value a, Value b) {
        const Tensor& ta = v_(a);
        const Tensor& tb = v_(b);
        if (ta.numel() != tb.numel())
            throw DimensionError("dot shape mismatch: " + ta.shape_string() + " vs " +
                                 tb.shape_string());
        double acc = 0.0;
        for (std::size_t i = 0; i < ta.numel(); ++i) acc += ta[i] * tb[i];
        Node out;
        out.op = Op::dot;
        out.parents = {a.idx, b.idx};
        out.value = Tensor::scalar(acc);
        return push_(std::move(out));
    }

    // sum_t w[t] * items[t]; one node instead of T pick/scale/add chains.
    Value weighted_sum(Value w, std::span<const Value> items) {
        const Tensor& tw = v_(w);
        if (tw.rank() != 1 || tw.numel() != items.size())
            throw DimensionError("weighted_sum: " + std::to_string(items.size()) +
                                 " items vs weights " + tw.shape_string());
        if (items.empty()) throw std::domain_error("weighted_sum: empty input");
        Node out;
        out.op = Op::weighted_sum;
        out.parents.reserve(items.size() + 1);
        out.parents.push_back(w.idx);
        out.value = Tensor(v_(items[0]).shape());
        for (std::size_t t = 0; t < items.size(); ++t) {
            const Tensor& h = v_(items[t]);
            if (!h.same_shape(out.value))
                throw DimensionError("weighted_sum item shape mismatch: " + h.shape_string() +
                                     " vs " + out.value.shape_string());
            out.value.add_scaled(h, tw[t]);
            out.parents.push_back(items[t].idx);
        }
        return push_(std::move(out));
    }

    // -[y log p + (1-y) log(1-p)] with p clamped to [1e-12, 1-1e-12]
    Value bce(Value p, double label) {
        const Tensor& tp = v_(p);
        if (tp.numel() != 1) throw std::domain_error("bce expects a scalar probability");
        const double pc = std::clamp(tp[0], detail::kBceClamp, 1.0 - detail::kBceClamp);
        Node out;
        out.op = Op::bce;
        out.parents = {p.idx};
        out.aux = label;
        out.value = Tensor::scalar(-(label * std::log(pc) + (1.0 - label) * std::log(1.0 - pc)));
        return push_(std::move(out));
    }

    // ---- backward --------------------------------------------------------

    // Adds d(root)/d(node) into every reachable node's gradient. Each call
    // propagates through scratch buffers, so repeated calls accumulate
    // exact per-call gradients rather than re-propagating old ones.
    void backward(Value root) {
        if (nodes_[root.idx].value.numel() != 1)
            throw std::domain_error("backward: root must be scalar");
        std::vector<Tensor> work(root.idx + 1);
        std::vector<char> touched(root.idx + 1, 0);
        work[root.idx] = Tensor::scalar(1.0);
        touched[root.idx] = 1;
        for (std::uint32_t i = root.idx + 1; i-- > 0;) {
            if (!touched[i] || nodes_[i].op == Op::leaf) continue;
            propagate_(i, work, touched);
        }
        for (std::uint32_t i = 0; i <= root.idx; ++i)
            if (touched[i]) nodes_[i].grad.add_scaled(work[i], 1.0);
    }

private:
    const Tensor& v_(Value v) const { return nodes_[v.idx].value; }

    Value push_(Node&& n) {
        n.grad = Tensor(n.value.shape());
        nodes_.push_back(std::move(n));
        return Value{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    Value binary_(Op op, Value a, Value b) {
        const Tensor& ta = v_(a);
        const Tensor& tb = v_(b);
        const bool broadcast = op == Op::mul && (ta.numel() == 1 || tb.numel() == 1);
        if (!broadcast && !ta.same_shape(tb))
            throw DimensionError(std::string(op == Op::add ? "add" : "mul") +
                                 " shape mismatch: " + ta.shape_string() + " vs " +
                                 tb.shape_string());
        Node out;
        out.op = op;
        out.parents = {a.idx, b.idx};
        if (op == Op::add) {
            out.value = ta;
            out.value.add_scaled(tb, 1.0);
        } else if (ta.numel() == 1) {
            out.value = tb;
            out.value.scale(ta[0]);
        } else if (tb.numel() == 1) {
            out.value = ta;
            out.value.scale(tb[0]);
        } else {
            out.value = ta;
            for (std::size_t i = 0; i < out.value.numel(); ++i) out.value[i] *= tb[i];
        }
        return push_(std::move(out));
    }

    template <typename F>
    Value unary_(Op op, Value a, F f) {
        const Tensor& t = v_(a);
        Node out;
        out.op = op;
        out.parents = {a.idx};
        out.value = Tensor(t.shape());
        for (std::size_t i = 0; i < t.numel(); ++i) out.value[i] = f(t[i]);
        return push_(std::move(out));
    }

    Tensor& wgrad_(std::uint32_t idx, std::vector<Tensor>& work, std::vector<char>& touched) {
        if (!touched[idx]) {
            work[idx] = Tensor(nodes_[idx].value.shape());
            touched[idx] = 1;
        }
        return work[idx];
    }

    void propagate_(std::uint32_t i, std::vector<Tensor>& work, std::vector<char>& touched) {
        Node& nd = nodes_[i];
        const Tensor& g = work[i];
        auto pval = [&](std::size_t which) -> const Tensor& {
            return nodes_[nd.parents[which]].value;
        };
        auto pgrad = [&](std::size_t which) -> Tensor& {
            return wgrad_(nd.parents[which], work, touched);
        };
        switch (nd.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            const Tensor& a = pval(0);
            const Tensor& b = pval(1);
            Tensor& ga = pgrad(0);
            Tensor& gb = pgrad(1);
            const std::size_t m = a.dim(0), k = a.dim(1), n = b.cols();
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[r * n + j] * b[p * n + j];
                    ga[r * k + p] += acc;
                }
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < m; ++r) acc += a[r * k + p] * g[r * n + j];
                    gb[p * n + j] += acc;
                }
            break;
        }
        case Op::add: {
            pgrad(0).add_scaled(g, 1.0);
            pgrad(1).add_scaled(g, 1.0);
            break;
        }
        case Op::mul: {
            const Tensor& a = pval(0);
            const Tensor& b = pval(1);
            if (a.numel() == 1 && b.numel() != 1) {
                double acc = 0.0;
                Tensor& gb = pgrad(1);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    acc += g[j] * b[j];
                    gb[j] += g[j] * a[0];
                }
                pgrad(0)[0] += acc;
            } else if (b.numel() == 1 && a.numel() != 1) {
                double acc = 0.0;
                Tensor& ga = pgrad(0);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    acc += g[j] * a[j];
                    ga[j] += g[j] * b[0];
                }
                pgrad(1)[0] += acc;
            } else {
                Tensor& ga = pgrad(0);
                Tensor& gb = pgrad(1);
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    ga[j] += g[j] * b[j];
                    gb[j] += g[j] * a[j];
                }
            }
            break;
        }
        case Op::tanh_fn: {
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < g.numel(); ++j)
                gp[j] += g[j] * (1.0 - nd.value[j] * nd.value[j]);
            break;
        }
        case Op::sigmoid_fn: {
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < g.numel(); ++j)
                gp[j] += g[j] * nd.value[j] * (1.0 - nd.value[j]);
            break;
        }
        case Op::relu_fn: {
            // subgradient 0 at the kink
            const Tensor& x = pval(0);
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < g.numel(); ++j)
                if (x[j] > 0.0) gp[j] += g[j];
            break;
        }
        case Op::exp_fn: {
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < g.numel(); ++j) gp[j] += g[j] * nd.value[j];
            break;
        }
        case Op::neg_fn: {
            pgrad(0).add_scaled(g, -1.0);
            break;
        }
        case Op::log_fn: {
            const Tensor& x = pval(0);
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < g.numel(); ++j) gp[j] += g[j] / x[j];
            break;
        }
        case Op::softplus_fn: {
            const Tensor& x = pval(0);
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < g.numel(); ++j) gp[j] += g[j] * detail::sigmoid(x[j]);
            break;
        }
        case Op::softmax_offsets: {
            const Tensor& a = nd.value;
            Tensor& gl = pgrad(0);
            Tensor& go = pgrad(1);
            double gdot = 0.0;
            for (std::size_t j = 0; j < g.numel(); ++j) gdot += g[j] * a[j];
            for (std::size_t j = 0; j < g.numel(); ++j) {
                const double d = a[j] * (g[j] - gdot);
                gl[j] += d;
                go[j] -= d;
            }
            break;
        }
        case Op::column: {
            const std::size_t cols = pval(0).dim(1);
            Tensor& gp = pgrad(0);
            for (std::size_t r = 0; r < g.numel(); ++r) gp[r * cols + nd.a0] += g[r];
            break;
        }
        case Op::pick: {
            pgrad(0)[nd.a0] += g[0];
            break;
        }
        case Op::stack: {
            for (std::size_t t = 0; t < nd.parents.size(); ++t)
                wgrad_(nd.parents[t], work, touched)[0] += g[t];
            break;
        }
        case Op::slice: {
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < nd.a1; ++j) gp[nd.a0 + j] += g[j];
            break;
        }
        case Op::sum: {
            Tensor& gp = pgrad(0);
            for (std::size_t j = 0; j < gp.numel(); ++j) gp[j] += g[0];
            break;
        }
        case Op::scale: {
            pgrad(0).add_scaled(g, nd.aux);
            break;
        }
        case Op::dot: {
            pgrad(0).add_scaled(pval(1), g[0]);
            pgrad(1).add_scaled(pval(0), g[0]);
            break;
        }
        case Op::weighted_sum: {
            const Tensor& w = pval(0);
            Tensor& gw = pgrad(0);
            for (std::size_t t = 0; t + 1 < nd.parents.size(); ++t) {
                const Tensor& h = nodes_[nd.parents[t + 1]].value;
                Tensor& gh = wgrad_(nd.parents[t + 1], work, touched);
                double acc = 0.0;
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    acc += g[j] * h[j];
                    gh[j] += g[j] * w[t];
                }
                gw[t] += acc;
            }
            break;
        }
        case Op::bce: {
            const double pv = pval(0)[0];
            Tensor& gp = pgrad(0);
            if (pv > detail::kBceClamp && pv < 1.0 - detail::kBceClamp) {
                const double y = nd.aux;
                gp[0] += g[0] * (pv - y) / (pv * (1.0 - pv));
            }
            break;
        }
        }
    }

    std::vector<Node> nodes_;
};

} // namespace mta::ad
