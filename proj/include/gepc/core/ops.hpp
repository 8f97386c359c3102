#pragma once

// Differentiable operations over Var. Activations use the [N, C, T, V]
// layout: batch, channels, frames, joints.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "gepc/core/autograd.hpp"

namespace gepc::ops {

namespace detail {

using gepc::detail::make_result;
using gepc::detail::Node;

inline Tensor* grad_of(Node& self, std::size_t i) {
    auto& p = self.parents[i];
    return p->requires_grad ? &p->grad_buffer() : nullptr;
}

inline void require_rank(const Var& x, std::size_t r, const char* op) {
    if (x.value().rank() != r)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " +
                         shape_str(x.shape()));
}

}  // namespace detail

inline Var constant(Tensor t) { return Var(std::move(t)); }

inline Var add(const Var& a, const Var& b) {
    a.value().require_same_shape(b.value(), "add");
    Tensor out = a.value();
    out += b.value();
    return detail::make_result("add", std::move(out), {a, b}, [](detail::Node& self) {
        for (std::size_t i = 0; i < 2; ++i)
            if (Tensor* g = detail::grad_of(self, i)) *g += self.grad;
    });
}

inline Var sub(const Var& a, const Var& b) {
    a.value().require_same_shape(b.value(), "sub");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    return detail::make_result("sub", std::move(out), {a, b}, [](detail::Node& self) {
        if (Tensor* g = detail::grad_of(self, 0)) *g += self.grad;
        if (Tensor* g = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    });
}

inline Var mul(const Var& a, const Var& b) {
    a.value().require_same_shape(b.value(), "mul");
    Tensor out = a.value();
    const auto& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    return detail::make_result("mul", std::move(out), {a, b}, [](detail::Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        if (Tensor* g = detail::grad_of(self, 0))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * bv[i];
        if (Tensor* g = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * av[i];
    });
}

inline Var scale(const Var& a, real s) {
    Tensor out = a.value();
    out *= s;
    return detail::make_result("scale", std::move(out), {a}, [s](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * self.grad[i];
    });
}

inline Var sum(const Var& a) {
    return detail::make_result("sum", Tensor::scalar(a.value().sum()), {a}, [](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        const real d = self.grad[0];
        for (auto& v : g->vec()) v += d;
    });
}

inline Var mean(const Var& a) {
    const real n = static_cast<real>(a.value().size());
    return scale(sum(a), real{1} / n);
}

inline Var relu(const Var& a) {
    Tensor out = a.value();
    for (auto& v : out.vec()) v = v > 0 ? v : real{0};
    return detail::make_result("relu", std::move(out), {a}, [](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        const Tensor& x = self.parents[0]->value;
        for (std::size_t i = 0; i < g->size(); ++i)
            if (x[i] > 0) (*g)[i] += self.grad[i];
    });
}

inline Var reshape(const Var& a, Shape shape) {
    Tensor out = a.value().reshaped(std::move(shape));
    return detail::make_result("reshape", std::move(out), {a}, [](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    });
}

/// [m,k] x [k,n] -> [m,n].
inline Var matmul(const Var& a, const Var& b) {
    detail::require_rank(a, 2, "matmul");
    detail::require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Tensor out({m, n});
    const real* A = a.value().data();
    const real* B = b.value().data();
    real* C = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const real av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) C[i * n + j] += av * B[p * n + j];
        }
    return detail::make_result("matmul", std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        const real* A = self.parents[0]->value.data();
        const real* B = self.parents[1]->value.data();
        const real* G = self.grad.data();
        if (Tensor* ga = detail::grad_of(self, 0)) {
            real* dA = ga->data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    real s = 0;
                    for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * B[p * n + j];
                    dA[i * k + p] += s;
                }
        }
        if (Tensor* gb = detail::grad_of(self, 1)) {
            real* dB = gb->data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const real av = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) dB[p * n + j] += av * G[i * n + j];
                }
        }
    });
}

/// Adds a per-channel bias b[C] along axis 1 of x (any rank >= 2).
inline Var add_bias(const Var& x, const Var& b) {
    if (x.value().rank() < 2 || b.value().rank() != 1 || b.dim(0) != x.dim(1))
        throw ShapeError("add_bias: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.value().size() / (n * c);
    Tensor out = x.value();
    const real* bv = b.value().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            real* row = out.data() + (i * c + j) * inner;
            for (std::size_t k = 0; k < inner; ++k) row[k] += bv[j];
        }
    return detail::make_result("add_bias", std::move(out), {x, b}, [n, c, inner](detail::Node& self) {
        if (Tensor* g = detail::grad_of(self, 0)) *g += self.grad;
        if (Tensor* g = detail::grad_of(self, 1))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const real* row = self.grad.data() + (i * c + j) * inner;
                    real s = 0;
                    for (std::size_t k = 0; k < inner; ++k) s += row[k];
                    (*g)[j] += s;
                }
    });
}

/// Softmax along `axis` with max subtraction.
inline Var softmax(const Var& x, std::size_t axis) {
    const Shape& s = x.shape();
    if (axis >= s.size()) throw ShapeError("softmax: axis out of range for " + shape_str(s));
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t len = s[axis];
    Tensor out(s);
    const real* in = x.value().data();
    real* o = out.data();
    for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t b = 0; b < inner; ++b) {
            const std::size_t base = a * len * inner + b;
            real mx = -std::numeric_limits<real>::infinity();
            for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, in[base + k * inner]);
            real z = 0;
            for (std::size_t k = 0; k < len; ++k) {
                o[base + k * inner] = std::exp(in[base + k * inner] - mx);
                z += o[base + k * inner];
            }
            for (std::size_t k = 0; k < len; ++k) o[base + k * inner] /= z;
        }
    return detail::make_result("softmax", std::move(out), {x}, [outer, inner, len](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        const real* y = self.value.data();
        const real* gy = self.grad.data();
        for (std::size_t a = 0; a < outer; ++a)
            for (std::size_t b = 0; b < inner; ++b) {
                const std::size_t base = a * len * inner + b;
                real dot = 0;
                for (std::size_t k = 0; k < len; ++k) dot += gy[base + k * inner] * y[base + k * inner];
                for (std::size_t k = 0; k < len; ++k)
                    (*g)[base + k * inner] += y[base + k * inner] * (gy[base + k * inner] - dot);
            }
    });
}

/// Mean squared error between a prediction and a constant target.
inline Var mse(const Var& pred, const Tensor& target) {
    pred.value().require_same_shape(target, "mse");
    const std::size_t n = target.size();
    real s = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const real d = pred.value()[i] - target[i];
        s += d * d;
    }
    return detail::make_result("mse", Tensor::scalar(s / static_cast<real>(n)), {pred},
                               [target, n](detail::Node& self) {
                                   Tensor* g = detail::grad_of(self, 0);
                                   const Tensor& p = self.parents[0]->value;
                                   const real c = 2 * self.grad[0] / static_cast<real>(n);
                                   for (std::size_t i = 0; i < n; ++i) (*g)[i] += c * (p[i] - target[i]);
                               });
}

/// sum_ik q_ik log(q_ik / p_ik) with Q constant; p is floored at `p_floor`.
inline Var kl_divergence(const Tensor& q, const Var& p, real p_floor = real(1e-12)) {
    q.require_same_shape(p.value(), "kl_divergence");
    real s = 0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i] <= 0) continue;
        s += q[i] * std::log(q[i] / std::max(p.value()[i], p_floor));
    }
    return detail::make_result("kl_divergence", Tensor::scalar(s), {p},
                               [q, p_floor](detail::Node& self) {
                                   Tensor* g = detail::grad_of(self, 0);
                                   const Tensor& pv = self.parents[0]->value;
                                   const real d = self.grad[0];
                                   for (std::size_t i = 0; i < q.size(); ++i)
                                       if (q[i] > 0 && pv[i] > p_floor) (*g)[i] -= d * q[i] / pv[i];
                               });
}

/// 1x1 convolution: y[n,o,t,v] = sum_c W[c,o] x[n,c,t,v]. W is [C_in, C_out].
inline Var channel_mix(const Var& x, const Var& w) {
    detail::require_rank(x, 4, "channel_mix");
    detail::require_rank(w, 2, "channel_mix");
    const std::size_t n = x.dim(0), ci = x.dim(1), tv = x.dim(2) * x.dim(3), co = w.dim(1);
    if (w.dim(0) != ci)
        throw ShapeError("channel_mix: weight " + shape_str(w.shape()) + " for input " +
                         shape_str(x.shape()));
    Tensor out({n, co, x.dim(2), x.dim(3)});
    const real* X = x.value().data();
    const real* W = w.value().data();
    real* Y = out.data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t c = 0; c < ci; ++c) {
            const real* xs = X + (b * ci + c) * tv;
            for (std::size_t o = 0; o < co; ++o) {
                const real wv = W[c * co + o];
                if (wv == 0) continue;
                real* ys = Y + (b * co + o) * tv;
                for (std::size_t k = 0; k < tv; ++k) ys[k] += wv * xs[k];
            }
        }
    return detail::make_result("channel_mix", std::move(out), {x, w}, [n, ci, co, tv](detail::Node& self) {
        const real* X = self.parents[0]->value.data();
        const real* W = self.parents[1]->value.data();
        const real* G = self.grad.data();
        Tensor* gx = detail::grad_of(self, 0);
        Tensor* gw = detail::grad_of(self, 1);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t c = 0; c < ci; ++c) {
                const real* xs = X + (b * ci + c) * tv;
                real* dx = gx ? gx->data() + (b * ci + c) * tv : nullptr;
                for (std::size_t o = 0; o < co; ++o) {
                    const real* gs = G + (b * co + o) * tv;
                    if (gw) {
                        real s = 0;
                        for (std::size_t k = 0; k < tv; ++k) s += gs[k] * xs[k];
                        (*gw)[c * co + o] += s;
                    }
                    if (dx) {
                        const real wv = W[c * co + o];
                        for (std::size_t k = 0; k < tv; ++k) dx[k] += wv * gs[k];
                    }
                }
            }
    });
}

/// Spatial propagation over joints: y[n,c,t,w] = sum_v A[w,v] x[n,c,t,v].
/// A is either shared [V,V] or per-sample [N,V,V].
inline Var graph_propagate(const Var& x, const Var& adj) {
    detail::require_rank(x, 4, "graph_propagate");
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), nv = x.dim(3);
    const bool per_sample = adj.value().rank() == 3;
    if (per_sample) {
        if (adj.dim(0) != n || adj.dim(1) != nv || adj.dim(2) != nv)
            throw ShapeError("graph_propagate: adjacency " + shape_str(adj.shape()) +
                             " for input " + shape_str(x.shape()));
    } else if (adj.value().rank() != 2 || adj.dim(0) != nv || adj.dim(1) != nv) {
        throw ShapeError("graph_propagate: adjacency " + shape_str(adj.shape()) + " for input " +
                         shape_str(x.shape()));
    }
    Tensor out(x.shape());
    const real* X = x.value().data();
    const real* A = adj.value().data();
    real* Y = out.data();
    for (std::size_t b = 0; b < n; ++b) {
        const real* Ab = per_sample ? A + b * nv * nv : A;
        for (std::size_t r = 0; r < c * t; ++r) {
            const real* xs = X + (b * c * t + r) * nv;
            real* ys = Y + (b * c * t + r) * nv;
            for (std::size_t w = 0; w < nv; ++w) {
                real s = 0;
                for (std::size_t v = 0; v < nv; ++v) s += Ab[w * nv + v] * xs[v];
                ys[w] = s;
            }
        }
    }
    return detail::make_result(
        "graph_propagate", std::move(out), {x, adj}, [n, c, t, nv, per_sample](detail::Node& self) {
            const real* X = self.parents[0]->value.data();
            const real* A = self.parents[1]->value.data();
            const real* G = self.grad.data();
            Tensor* gx = detail::grad_of(self, 0);
            Tensor* ga = detail::grad_of(self, 1);
            for (std::size_t b = 0; b < n; ++b) {
                const real* Ab = per_sample ? A + b * nv * nv : A;
                real* dA = ga ? ga->data() + (per_sample ? b * nv * nv : 0) : nullptr;
                for (std::size_t r = 0; r < c * t; ++r) {
                    const real* xs = X + (b * c * t + r) * nv;
                    const real* gs = G + (b * c * t + r) * nv;
                    real* dx = gx ? gx->data() + (b * c * t + r) * nv : nullptr;
                    for (std::size_t w = 0; w < nv; ++w) {
                        const real gw = gs[w];
                        for (std::size_t v = 0; v < nv; ++v) {
                            if (dx) dx[v] += Ab[w * nv + v] * gw;
                            if (dA) dA[w * nv + v] += gw * xs[v];
                        }
                    }
                }
            }
        });
}

/// Per-joint 1-D convolution along time. kernel is [C_out, C_in, k], k odd,
/// zero padding (k-1)/2 each side, output length ceil(T / stride).
inline Var temporal_conv(const Var& x, const Var& kernel, std::size_t stride) {
    detail::require_rank(x, 4, "temporal_conv");
    detail::require_rank(kernel, 3, "temporal_conv");
    const std::size_t k = kernel.dim(2);
    if (k % 2 == 0) throw ConfigError("temporal_conv: kernel size must be odd, got " + std::to_string(k));
    if (stride == 0) throw ConfigError("temporal_conv: stride must be positive");
    const std::size_t n = x.dim(0), ci = x.dim(1), t = x.dim(2), nv = x.dim(3), co = kernel.dim(0);
    if (kernel.dim(1) != ci)
        throw ShapeError("temporal_conv: kernel " + shape_str(kernel.shape()) + " for input " +
                         shape_str(x.shape()));
    const std::size_t to = (t + stride - 1) / stride;
    const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(k / 2);
    Tensor out({n, co, to, nv});
    const real* X = x.value().data();
    const real* K = kernel.value().data();
    real* Y = out.data();
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < co; ++o) {
            real* yo = Y + (b * co + o) * to * nv;
            for (std::size_t c = 0; c < ci; ++c) {
                const real* xc = X + (b * ci + c) * t * nv;
                for (std::size_t j = 0; j < k; ++j) {
                    const real kv = K[(o * ci + c) * k + j];
                    if (kv == 0) continue;
                    for (std::size_t tt = 0; tt < to; ++tt) {
                        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(tt * stride + j) - pad;
                        if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
                        const real* xs = xc + static_cast<std::size_t>(src) * nv;
                        real* ys = yo + tt * nv;
                        for (std::size_t v = 0; v < nv; ++v) ys[v] += kv * xs[v];
                    }
                }
            }
        }
    return detail::make_result(
        "temporal_conv", std::move(out), {x, kernel},
        [n, ci, co, t, to, nv, k, stride, pad](detail::Node& self) {
            const real* X = self.parents[0]->value.data();
            const real* K = self.parents[1]->value.data();
            const real* G = self.grad.data();
            Tensor* gx = detail::grad_of(self, 0);
            Tensor* gk = detail::grad_of(self, 1);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t o = 0; o < co; ++o) {
                    const real* go = G + (b * co + o) * to * nv;
                    for (std::size_t c = 0; c < ci; ++c) {
                        const real* xc = X + (b * ci + c) * t * nv;
                        real* dxc = gx ? gx->data() + (b * ci + c) * t * nv : nullptr;
                        for (std::size_t j = 0; j < k; ++j) {
                            const real kv = K[(o * ci + c) * k + j];
                            real acc = 0;
                            for (std::size_t tt = 0; tt < to; ++tt) {
                                const std::ptrdiff_t src =
                                    static_cast<std::ptrdiff_t>(tt * stride + j) - pad;
                                if (src < 0 || src >= static_cast<std::ptrdiff_t>(t)) continue;
                                const real* gs = go + tt * nv;
                                const std::size_t off = static_cast<std::size_t>(src) * nv;
                                for (std::size_t v = 0; v < nv; ++v) {
                                    acc += gs[v] * xc[off + v];
                                    if (dxc) dxc[off + v] += kv * gs[v];
                                }
                            }
                            if (gk) (*gk)[(o * ci + c) * k + j] += acc;
                        }
                    }
                }
        });
}

/// Concatenates rank-4 tensors along the channel axis.
inline Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    const std::size_t n = xs[0].dim(0), t = xs[0].dim(2), nv = xs[0].dim(3);
    std::size_t ctot = 0;
    for (const auto& x : xs) {
        detail::require_rank(x, 4, "concat_channels");
        if (x.dim(0) != n || x.dim(2) != t || x.dim(3) != nv)
            throw ShapeError("concat_channels: mismatched input " + shape_str(x.shape()));
        ctot += x.dim(1);
    }
    Tensor out({n, ctot, t, nv});
    const std::size_t tv = t * nv;
    std::vector<std::size_t> widths;
    for (std::size_t b = 0; b < n; ++b) {
        std::size_t off = 0;
        for (const auto& x : xs) {
            const std::size_t c = x.dim(1);
            std::copy_n(x.value().data() + b * c * tv, c * tv, out.data() + (b * ctot + off) * tv);
            off += c;
        }
    }
    for (const auto& x : xs) widths.push_back(x.dim(1));
    return detail::make_result("concat_channels", std::move(out), xs,
                               [n, ctot, tv, widths](detail::Node& self) {
                                   std::size_t off = 0;
                                   for (std::size_t i = 0; i < widths.size(); ++i) {
                                       const std::size_t c = widths[i];
                                       if (Tensor* g = detail::grad_of(self, i))
                                           for (std::size_t b = 0; b < n; ++b) {
                                               const real* src = self.grad.data() + (b * ctot + off) * tv;
                                               real* dst = g->data() + b * c * tv;
                                               for (std::size_t k = 0; k < c * tv; ++k) dst[k] += src[k];
                                           }
                                       off += c;
                                   }
                               });
}

/// Non-overlapping temporal average pooling with window = stride;
/// the last window averages whatever frames remain.
inline Var temporal_avg_pool(const Var& x, std::size_t stride) {
    detail::require_rank(x, 4, "temporal_avg_pool");
    if (stride <= 1) return x;
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), nv = x.dim(3);
    const std::size_t to = (t + stride - 1) / stride;
    Tensor out({n, c, to, nv});
    for (std::size_t r = 0; r < n * c; ++r)
        for (std::size_t tt = 0; tt < to; ++tt) {
            const std::size_t lo = tt * stride, hi = std::min(t, lo + stride);
            const real inv = real{1} / static_cast<real>(hi - lo);
            real* ys = out.data() + (r * to + tt) * nv;
            for (std::size_t s = lo; s < hi; ++s) {
                const real* xs = x.value().data() + (r * t + s) * nv;
                for (std::size_t v = 0; v < nv; ++v) ys[v] += inv * xs[v];
            }
        }
    return detail::make_result("temporal_avg_pool", std::move(out), {x},
                               [n, c, t, to, nv, stride](detail::Node& self) {
                                   Tensor* g = detail::grad_of(self, 0);
                                   for (std::size_t r = 0; r < n * c; ++r)
                                       for (std::size_t tt = 0; tt < to; ++tt) {
                                           const std::size_t lo = tt * stride, hi = std::min(t, lo + stride);
                                           const real inv = real{1} / static_cast<real>(hi - lo);
                                           const real* gs = self.grad.data() + (r * to + tt) * nv;
                                           for (std::size_t s = lo; s < hi; ++s) {
                                               real* d = g->data() + (r * t + s) * nv;
                                               for (std::size_t v = 0; v < nv; ++v) d[v] += inv * gs[v];
                                           }
                                       }
                               });
}

/// Nearest-neighbour repetition along time: each frame repeated `factor` times.
inline Var temporal_upsample(const Var& x, std::size_t factor) {
    detail::require_rank(x, 4, "temporal_upsample");
    if (factor == 0) throw ConfigError("temporal_upsample: factor must be >= 1");
    if (factor == 1) return x;
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), nv = x.dim(3), to = t * factor;
    Tensor out({n, c, to, nv});
    for (std::size_t r = 0; r < n * c; ++r)
        for (std::size_t tt = 0; tt < to; ++tt)
            std::copy_n(x.value().data() + (r * t + tt / factor) * nv, nv,
                        out.data() + (r * to + tt) * nv);
    return detail::make_result("temporal_upsample", std::move(out), {x},
                               [n, c, t, to, nv, factor](detail::Node& self) {
                                   Tensor* g = detail::grad_of(self, 0);
                                   for (std::size_t r = 0; r < n * c; ++r)
                                       for (std::size_t tt = 0; tt < to; ++tt) {
                                           const real* gs = self.grad.data() + (r * to + tt) * nv;
                                           real* d = g->data() + (r * t + tt / factor) * nv;
                                           for (std::size_t v = 0; v < nv; ++v) d[v] += gs[v];
                                       }
                               });
}

/// Mean over frames and joints: [N,C,T,V] -> [N,C].
inline Var global_avg_pool(const Var& x) {
    detail::require_rank(x, 4, "global_avg_pool");
    const std::size_t n = x.dim(0), c = x.dim(1), tv = x.dim(2) * x.dim(3);
    Tensor out({n, c});
    const real inv = real{1} / static_cast<real>(tv);
    for (std::size_t r = 0; r < n * c; ++r) {
        const real* xs = x.value().data() + r * tv;
        real s = 0;
        for (std::size_t k = 0; k < tv; ++k) s += xs[k];
        out[r] = s * inv;
    }
    return detail::make_result("global_avg_pool", std::move(out), {x}, [n, c, tv, inv](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        for (std::size_t r = 0; r < n * c; ++r) {
            const real d = self.grad[r] * inv;
            real* gs = g->data() + r * tv;
            for (std::size_t k = 0; k < tv; ++k) gs[k] += d;
        }
    });
}

/// Mean over frames: [N,C,T,V] -> [N,C,V].
inline Var time_mean(const Var& x) {
    detail::require_rank(x, 4, "time_mean");
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), nv = x.dim(3);
    Tensor out({n, c, nv});
    const real inv = real{1} / static_cast<real>(t);
    for (std::size_t r = 0; r < n * c; ++r)
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t v = 0; v < nv; ++v) out[r * nv + v] += inv * x.value()[(r * t + s) * nv + v];
    return detail::make_result("time_mean", std::move(out), {x}, [n, c, t, nv, inv](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        for (std::size_t r = 0; r < n * c; ++r)
            for (std::size_t s = 0; s < t; ++s)
                for (std::size_t v = 0; v < nv; ++v) (*g)[(r * t + s) * nv + v] += inv * self.grad[r * nv + v];
    });
}

/// Per-sample node embedding: E[n,v,a] = sum_c X[n,c,v] W[c,a].
inline Var node_embed(const Var& x, const Var& w) {
    detail::require_rank(x, 3, "node_embed");
    detail::require_rank(w, 2, "node_embed");
    const std::size_t n = x.dim(0), c = x.dim(1), nv = x.dim(2), a = w.dim(1);
    if (w.dim(0) != c)
        throw ShapeError("node_embed: weight " + shape_str(w.shape()) + " for " + shape_str(x.shape()));
    Tensor out({n, nv, a});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t v = 0; v < nv; ++v) {
                const real xv = x.value()[(b * c + ch) * nv + v];
                for (std::size_t j = 0; j < a; ++j) out[(b * nv + v) * a + j] += xv * w.value()[ch * a + j];
            }
    return detail::make_result("node_embed", std::move(out), {x, w}, [n, c, nv, a](detail::Node& self) {
        const Tensor& X = self.parents[0]->value;
        const Tensor& W = self.parents[1]->value;
        Tensor* gx = detail::grad_of(self, 0);
        Tensor* gw = detail::grad_of(self, 1);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t v = 0; v < nv; ++v) {
                    const real* gs = self.grad.data() + (b * nv + v) * a;
                    const real xv = X[(b * c + ch) * nv + v];
                    real s = 0;
                    for (std::size_t j = 0; j < a; ++j) {
                        s += gs[j] * W[ch * a + j];
                        if (gw) (*gw)[ch * a + j] += xv * gs[j];
                    }
                    if (gx) (*gx)[(b * c + ch) * nv + v] += s;
                }
    });
}

/// Batched A·Bᵀ: [N,V,K] x [N,U,K] -> [N,V,U].
inline Var batched_abt(const Var& a, const Var& b) {
    detail::require_rank(a, 3, "batched_abt");
    detail::require_rank(b, 3, "batched_abt");
    const std::size_t n = a.dim(0), rv = a.dim(1), k = a.dim(2), ru = b.dim(1);
    if (b.dim(0) != n || b.dim(2) != k)
        throw ShapeError("batched_abt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor out({n, rv, ru});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t i = 0; i < rv; ++i)
            for (std::size_t j = 0; j < ru; ++j) {
                real acc = 0;
                for (std::size_t p = 0; p < k; ++p) acc += a.value()[(s * rv + i) * k + p] * b.value()[(s * ru + j) * k + p];
                out[(s * rv + i) * ru + j] = acc;
            }
    return detail::make_result("batched_abt", std::move(out), {a, b}, [n, rv, ru, k](detail::Node& self) {
        const Tensor& A = self.parents[0]->value;
        const Tensor& B = self.parents[1]->value;
        Tensor* ga = detail::grad_of(self, 0);
        Tensor* gb = detail::grad_of(self, 1);
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t i = 0; i < rv; ++i)
                for (std::size_t j = 0; j < ru; ++j) {
                    const real g = self.grad[(s * rv + i) * ru + j];
                    for (std::size_t p = 0; p < k; ++p) {
                        if (ga) (*ga)[(s * rv + i) * k + p] += g * B[(s * ru + j) * k + p];
                        if (gb) (*gb)[(s * ru + j) * k + p] += g * A[(s * rv + i) * k + p];
                    }
                }
    });
}

}  // namespace gepc::ops

namespace gepc::ops {

/// [N,C,T,V] -> [N*T,C,1,V]: every frame becomes its own sample.
inline Var fold_time(const Var& x) {
    detail::require_rank(x, 4, "fold_time");
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), nv = x.dim(3);
    Tensor out({n * t, c, 1, nv});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t s = 0; s < t; ++s)
                std::copy_n(x.value().data() + ((b * c + ch) * t + s) * nv, nv,
                            out.data() + ((b * t + s) * c + ch) * nv);
    return detail::make_result("fold_time", std::move(out), {x}, [n, c, t, nv](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t s = 0; s < t; ++s)
                    for (std::size_t v = 0; v < nv; ++v)
                        (*g)[((b * c + ch) * t + s) * nv + v] += self.grad[((b * t + s) * c + ch) * nv + v];
    });
}

/// Inverse of fold_time: [N*T,C,1,V] -> [N,C,T,V].
inline Var unfold_time(const Var& x, std::size_t t) {
    detail::require_rank(x, 4, "unfold_time");
    if (t == 0 || x.dim(0) % t != 0 || x.dim(2) != 1)
        throw ShapeError("unfold_time: cannot unfold " + shape_str(x.shape()) + " into T=" + std::to_string(t));
    const std::size_t n = x.dim(0) / t, c = x.dim(1), nv = x.dim(3);
    Tensor out({n, c, t, nv});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t s = 0; s < t; ++s)
                std::copy_n(x.value().data() + ((b * t + s) * c + ch) * nv, nv,
                            out.data() + ((b * c + ch) * t + s) * nv);
    return detail::make_result("unfold_time", std::move(out), {x}, [n, c, t, nv](detail::Node& self) {
        Tensor* g = detail::grad_of(self, 0);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t s = 0; s < t; ++s)
                    for (std::size_t v = 0; v < nv; ++v)
                        (*g)[((b * t + s) * c + ch) * nv + v] += self.grad[((b * c + ch) * t + s) * nv + v];
    });
}

}  // namespace gepc::ops
