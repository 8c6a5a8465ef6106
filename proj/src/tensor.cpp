#include "reidkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "reidkit/kernels.hpp"

namespace reidkit {

std::string format_shape(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

void check_positive_extents(const std::vector<std::size_t>& shape, const char* who) {
    for (std::size_t d : shape)
        if (d == 0) throw ShapeError(std::string(who) + ": zero extent in shape " + format_shape(shape));
}

}  // namespace

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(std::vector<std::size_t> shape, double fill, bool requires_grad) {
    check_positive_extents(shape, "Tensor");
    Tensor t;
    t.node_->value.assign(shape_numel(shape), fill);
    t.node_->shape = std::move(shape);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad) {
    check_positive_extents(shape, "Tensor");
    if (shape_numel(shape) != values.size())
        throw ShapeError("Tensor: shape " + format_shape(shape) + " requires " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    Tensor t;
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(values);
    t.node_->requires_grad = requires_grad;
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return from({1}, {v}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ShapeError("item: tensor has shape " + format_shape(shape()) + ", expected one element");
    return node_->value[0];
}

const std::vector<double>& Tensor::grad() const { return node_->grad; }

// ---- Graph ---------------------------------------------------------------

namespace {
thread_local Graph* g_current_graph = nullptr;
}

Graph* Graph::current() { return g_current_graph; }

Graph::Scope::Scope(Graph& g) : previous_(g_current_graph) { g_current_graph = &g; }
Graph::Scope::~Scope() { g_current_graph = previous_; }

void Graph::record(std::vector<std::shared_ptr<detail::TensorNode>> touched,
                   std::function<void()> backward_rule) {
    steps_.push_back(Step{std::move(touched), std::move(backward_rule)});
}

void Graph::zero_grads() {
    for (auto& step : steps_)
        for (auto& node : step.touched) {
            node->ensure_grad();
            std::fill(node->grad.begin(), node->grad.end(), 0.0);
        }
}

void Graph::backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward: loss must be a scalar, got shape " + format_shape(loss.shape()));
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->backward_rule();
}

// ---- Op plumbing ----------------------------------------------------------

namespace {

using NodePtr = std::shared_ptr<detail::TensorNode>;

bool tracking(std::initializer_list<const Tensor*> inputs) {
    for (const Tensor* t : inputs)
        if (t->requires_grad()) return true;
    return false;
}

// Marks the output as gradient-tracking and registers the backward rule on
// the current graph, if any input tracks gradients and a graph is current.
void finish_op(std::initializer_list<const Tensor*> inputs, Tensor& out,
               std::function<void()> rule) {
    if (!tracking(inputs)) return;
    out.set_requires_grad(true);
    Graph* g = Graph::current();
    if (!g) return;
    std::vector<NodePtr> touched;
    touched.reserve(inputs.size() + 1);
    for (const Tensor* t : inputs) touched.push_back(t->node());
    touched.push_back(out.node());
    g->record(std::move(touched), std::move(rule));
}

}  // namespace

// ---- Primitives ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + format_shape(a.shape()) + " and " +
                         format_shape(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul(a.values().data(), b.values().data(), out.values().data(), m, k, n);

    auto an = a.node(), bn = b.node(), on = out.node();
    finish_op({&a, &b}, out, [an, bn, on, m, k, n]() {
        const auto& g = on->grad;
        if (an->requires_grad) {
            an->ensure_grad();
            std::vector<double> bt(n * k);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = bn->value[p * n + j];
            std::vector<double> da(m * k);
            kernels::matmul(g.data(), bt.data(), da.data(), m, n, k);
            for (std::size_t i = 0; i < m * k; ++i) an->grad[i] += da[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            std::vector<double> at(k * m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) at[p * m + i] = an->value[i * k + p];
            std::vector<double> db(k * n);
            kernels::matmul(at.data(), g.data(), db.data(), k, m, n);
            for (std::size_t i = 0; i < k * n; ++i) bn->grad[i] += db[i];
        }
    });
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    if (stride != 1 && stride != 2)
        throw ShapeError("conv2d: stride must be 1 or 2, got " + std::to_string(stride));
    if (padding < 0)
        throw ShapeError("conv2d: padding must be non-negative, got " + std::to_string(padding));
    if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: incompatible shapes " + format_shape(x.shape()) + " and " +
                         format_shape(w.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t oc = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t pad = static_cast<std::size_t>(padding);
    const std::size_t st = static_cast<std::size_t>(stride);
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw ShapeError("conv2d: kernel " + format_shape(w.shape()) + " larger than padded input " +
                         format_shape(x.shape()));
    const std::size_t oh = (h + 2 * pad - kh) / st + 1;
    const std::size_t ow = (wd + 2 * pad - kw) / st + 1;

    Tensor out = Tensor::zeros({n, oc, oh, ow});
    kernels::conv2d(x.values().data(), w.values().data(), out.values().data(),
                    n, c, h, wd, oc, kh, kw, st, pad);

    auto xn = x.node(), wn = w.node(), on = out.node();
    finish_op({&x, &w}, out, [xn, wn, on, n, c, h, wd, oc, kh, kw, st, pad]() {
        const auto& g = on->grad;
        if (xn->requires_grad) {
            xn->ensure_grad();
            kernels::conv2d_grad_input(g.data(), wn->value.data(), xn->grad.data(),
                                       n, c, h, wd, oc, kh, kw, st, pad);
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            kernels::conv2d_grad_weight(xn->value.data(), g.data(), wn->grad.data(),
                                        n, c, h, wd, oc, kh, kw, st, pad);
        }
    });
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    const auto& v = x.values();
    auto& o = out.values();
    for (std::size_t i = 0; i < v.size(); ++i) o[i] = v[i] > 0.0 ? v[i] : 0.0;

    auto xn = x.node(), on = out.node();
    finish_op({&x}, out, [xn, on]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->value.size(); ++i)
            if (xn->value[i] > 0.0) xn->grad[i] += on->grad[i];
    });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape mismatch " + format_shape(a.shape()) + " vs " +
                         format_shape(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] + b.values()[i];

    auto an = a.node(), bn = b.node(), on = out.node();
    finish_op({&a, &b}, out, [an, bn, on]() {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
        }
    });
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = c * x.values()[i];

    auto xn = x.node(), on = out.node();
    finish_op({&x}, out, [xn, on, c]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += c * on->grad[i];
    });
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("mul: shape mismatch " + format_shape(a.shape()) + " vs " +
                         format_shape(b.shape()));
    Tensor out = Tensor::zeros(a.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out.values()[i] = a.values()[i] * b.values()[i];

    auto an = a.node(), bn = b.node(), on = out.node();
    finish_op({&a, &b}, out, [an, bn, on]() {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i)
                an->grad[i] += bn->value[i] * on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i)
                bn->grad[i] += an->value[i] * on->grad[i];
        }
    });
    return out;
}

Tensor sum(const Tensor& x) {
    double acc = 0.0;
    for (double v : x.values()) acc += v;
    Tensor out = Tensor::scalar(acc);

    auto xn = x.node(), on = out.node();
    finish_op({&x}, out, [xn, on]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[0];
    });
    return out;
}

Tensor bias_add(const Tensor& x, const Tensor& b) {
    if (b.rank() != 1 || x.rank() < 2 ||
        !((x.rank() == 2 && x.dim(1) == b.dim(0)) || (x.rank() == 4 && x.dim(1) == b.dim(0))))
        throw ShapeError("bias_add: cannot broadcast bias " + format_shape(b.shape()) + " over " +
                         format_shape(x.shape()));
    const std::size_t channels = b.dim(0);
    const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    const std::size_t outer = x.dim(0);

    Tensor out = Tensor::zeros(x.shape());
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t ch = 0; ch < channels; ++ch) {
            const double bv = b.values()[ch];
            const std::size_t base = (o * channels + ch) * inner;
            for (std::size_t i = 0; i < inner; ++i)
                out.values()[base + i] = x.values()[base + i] + bv;
        }

    auto xn = x.node(), bn = b.node(), on = out.node();
    finish_op({&x, &b}, out, [xn, bn, on, outer, channels, inner]() {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t ch = 0; ch < channels; ++ch) {
                double acc = 0.0;
                for (std::size_t o = 0; o < outer; ++o) {
                    const std::size_t base = (o * channels + ch) * inner;
                    for (std::size_t i = 0; i < inner; ++i) acc += on->grad[base + i];
                }
                bn->grad[ch] += acc;
            }
        }
    });
    return out;
}

Tensor global_avg_pool(const Tensor& x) {
    if (x.rank() != 4)
        throw ShapeError("global_avg_pool: expected (N,C,H,W), got " + format_shape(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
    Tensor out = Tensor::zeros({n, c});
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        for (std::size_t p = 0; p < area; ++p) acc += x.values()[i * area + p];
        out.values()[i] = acc / static_cast<double>(area);
    }

    auto xn = x.node(), on = out.node();
    finish_op({&x}, out, [xn, on, n, c, area]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        const double inv = 1.0 / static_cast<double>(area);
        for (std::size_t i = 0; i < n * c; ++i)
            for (std::size_t p = 0; p < area; ++p) xn->grad[i * area + p] += on->grad[i] * inv;
    });
    return out;
}

Tensor max_pool2d(const Tensor& x, int k, int stride) {
    if (x.rank() != 4)
        throw ShapeError("max_pool2d: expected (N,C,H,W), got " + format_shape(x.shape()));
    if (k < 1 || stride < 1)
        throw ShapeError("max_pool2d: window and stride must be positive");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t kk = static_cast<std::size_t>(k), st = static_cast<std::size_t>(stride);
    if (kk > h || kk > w)
        throw ShapeError("max_pool2d: window " + std::to_string(k) + " exceeds input " +
                         format_shape(x.shape()));
    const std::size_t oh = (h - kk) / st + 1, ow = (w - kk) / st + 1;

    Tensor out = Tensor::zeros({n, c, oh, ow});
    // Ties pick the first maximum in scan order, so backward is deterministic.
    std::vector<std::size_t> argmax(n * c * oh * ow);
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const double* plane = x.values().data() + nc * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (oy * st) * w + ox * st;
                double bv = plane[best];
                for (std::size_t ky = 0; ky < kk; ++ky)
                    for (std::size_t kx = 0; kx < kk; ++kx) {
                        const std::size_t idx = (oy * st + ky) * w + (ox * st + kx);
                        if (plane[idx] > bv) {
                            bv = plane[idx];
                            best = idx;
                        }
                    }
                const std::size_t oidx = (nc * oh + oy) * ow + ox;
                out.values()[oidx] = bv;
                argmax[oidx] = nc * h * w + best;
            }
    }

    auto xn = x.node(), on = out.node();
    finish_op({&x}, out, [xn, on, argmax = std::move(argmax)]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < argmax.size(); ++i) xn->grad[argmax[i]] += on->grad[i];
    });
    return out;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    check_positive_extents(shape, "reshape");
    if (shape_numel(shape) != x.numel())
        throw ShapeError("reshape: cannot view " + format_shape(x.shape()) + " as " +
                         format_shape(shape));
    Tensor out = Tensor::from(std::move(shape), x.values());

    auto xn = x.node(), on = out.node();
    finish_op({&x}, out, [xn, on]() {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[i] += on->grad[i];
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    if (xs.empty()) throw ShapeError("concat: no inputs");
    const auto& first = xs.front().shape();
    if (axis >= first.size())
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                         format_shape(first));
    std::vector<std::size_t> out_shape = first;
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const auto& s = xs[i].shape();
        if (s.size() != first.size())
            throw ShapeError("concat: rank mismatch " + format_shape(first) + " vs " + format_shape(s));
        for (std::size_t d = 0; d < s.size(); ++d)
            if (d != axis && s[d] != first[d])
                throw ShapeError("concat: shape mismatch " + format_shape(first) + " vs " +
                                 format_shape(s));
        out_shape[axis] += s[axis];
    }

    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    Tensor out = Tensor::zeros(out_shape);
    const std::size_t out_row = out_shape[axis] * inner;
    std::size_t offset = 0;  // in units of inner, within one outer row
    std::vector<std::size_t> offsets(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        offsets[i] = offset;
        const std::size_t len = xs[i].shape()[axis] * inner;
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(xs[i].values().data() + o * len, len,
                        out.values().data() + o * out_row + offset);
        offset += len;
    }

    std::vector<NodePtr> nodes;
    for (const auto& t : xs) nodes.push_back(t.node());
    auto on = out.node();
    bool any = false;
    for (const auto& t : xs) any = any || t.requires_grad();
    if (any) {
        out.set_requires_grad(true);
        if (Graph* g = Graph::current()) {
            std::vector<NodePtr> touched = nodes;
            touched.push_back(on);
            g->record(std::move(touched),
                      [nodes, on, offsets, outer, inner, out_row, axis]() {
                          for (std::size_t i = 0; i < nodes.size(); ++i) {
                              if (!nodes[i]->requires_grad) continue;
                              nodes[i]->ensure_grad();
                              const std::size_t len = nodes[i]->shape[axis] * inner;
                              for (std::size_t o = 0; o < outer; ++o)
                                  for (std::size_t p = 0; p < len; ++p)
                                      nodes[i]->grad[o * len + p] +=
                                          on->grad[o * out_row + offsets[i] + p];
                          }
                      });
        }
    }
    return out;
}

// ---- Batch normalization ---------------------------------------------------

BNState::BNState(std::size_t dim)
    : gamma(Tensor::full({dim}, 1.0, true)),
      beta(Tensor::zeros({dim}, true)),
      running_mean(dim, 0.0),
      running_var(dim, 1.0) {}

Tensor batch_norm(const Tensor& x, BNState& state, BNMode mode) {
    if (x.rank() != 2 || x.dim(1) != state.dim())
        throw ShapeError("batch_norm: input " + format_shape(x.shape()) +
                         " does not match parameter length " + std::to_string(state.dim()));
    const std::size_t n = x.dim(0), d = x.dim(1);
    if (mode == BNMode::Train && n < 2)
        throw ShapeError("batch_norm: train mode requires batch size >= 2, got " + std::to_string(n));

    std::vector<double> mean(d), inv_std(d);
    if (mode == BNMode::Train) {
        std::vector<double> var(d);
        for (std::size_t j = 0; j < d; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += x.values()[i * d + j];
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double diff = x.values()[i * d + j] - m;
                v += diff * diff;
            }
            v /= static_cast<double>(n);  // biased estimator, matching the running update
            mean[j] = m;
            var[j] = v;
            inv_std[j] = 1.0 / std::sqrt(v + state.eps);
        }
        const double m0 = state.momentum;
        for (std::size_t j = 0; j < d; ++j) {
            state.running_mean[j] = (1.0 - m0) * state.running_mean[j] + m0 * mean[j];
            state.running_var[j] = (1.0 - m0) * state.running_var[j] + m0 * var[j];
        }
    } else {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] = state.running_mean[j];
            inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
        }
    }

    Tensor out = Tensor::zeros(x.shape());
    std::vector<double> xhat(n * d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double h = (x.values()[i * d + j] - mean[j]) * inv_std[j];
            xhat[i * d + j] = h;
            out.values()[i * d + j] = state.gamma.values()[j] * h + state.beta.values()[j];
        }

    auto xn = x.node(), gn = state.gamma.node(), bn = state.beta.node(), on = out.node();
    const bool train = mode == BNMode::Train;
    finish_op({&x, &state.gamma, &state.beta}, out,
              [xn, gn, bn, on, xhat = std::move(xhat), inv_std = std::move(inv_std), n, d, train]() {
                  const auto& g = on->grad;
                  if (gn->requires_grad) {
                      gn->ensure_grad();
                      for (std::size_t j = 0; j < d; ++j) {
                          double acc = 0.0;
                          for (std::size_t i = 0; i < n; ++i) acc += g[i * d + j] * xhat[i * d + j];
                          gn->grad[j] += acc;
                      }
                  }
                  if (bn->requires_grad) {
                      bn->ensure_grad();
                      for (std::size_t j = 0; j < d; ++j) {
                          double acc = 0.0;
                          for (std::size_t i = 0; i < n; ++i) acc += g[i * d + j];
                          bn->grad[j] += acc;
                      }
                  }
                  if (!xn->requires_grad) return;
                  xn->ensure_grad();
                  if (train) {
                      // d/dx of batch-statistic normalization (biased variance).
                      const double invn = 1.0 / static_cast<double>(n);
                      for (std::size_t j = 0; j < d; ++j) {
                          double sum_g = 0.0, sum_gh = 0.0;
                          for (std::size_t i = 0; i < n; ++i) {
                              sum_g += g[i * d + j];
                              sum_gh += g[i * d + j] * xhat[i * d + j];
                          }
                          const double scale = gn->value[j] * inv_std[j];
                          for (std::size_t i = 0; i < n; ++i)
                              xn->grad[i * d + j] +=
                                  scale * (g[i * d + j] - invn * sum_g -
                                           xhat[i * d + j] * invn * sum_gh);
                      }
                  } else {
                      for (std::size_t j = 0; j < d; ++j) {
                          const double scale = gn->value[j] * inv_std[j];
                          for (std::size_t i = 0; i < n; ++i)
                              xn->grad[i * d + j] += scale * g[i * d + j];
                      }
                  }
              });
    return out;
}

}  // namespace reidkit
