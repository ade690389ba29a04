#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rulkit/errors.hpp"
#include "rulkit/tensor.hpp"

namespace rulkit {

namespace detail {

// C = A * B, row-major, i-k-j order so the inner loop runs along rows.
template <typename T>
Tensor<T> mm(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c = Tensor<T>::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        T* ci = c.ptr() + i * n;
        const T* ai = a.ptr() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T aip = ai[p];
            const T* bp = b.ptr() + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

// C = A * B^T  (rows of A dotted with rows of B).
template <typename T>
Tensor<T> mm_nt(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor<T> c = Tensor<T>::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a.ptr() + i * k;
        T* ci = c.ptr() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const T* bj = b.ptr() + j * k;
            T s = 0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
    return c;
}

// C = A^T * B  (rank-1 updates per shared row index).
template <typename T>
Tensor<T> mm_tn(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor<T> c = Tensor<T>::zeros({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const T* ap = a.ptr() + p * m;
        const T* bp = b.ptr() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T api = ap[i];
            if (api == T(0)) continue;
            T* ci = c.ptr() + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
    return c;
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
    T* d = dst.ptr();
    const T* s = src.ptr();
    for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename T>
T gauss_cdf(T x) {
    return T(0.5) * (T(1) + T(std::erf(x / std::numbers::sqrt2_v<double>)));
}

template <typename T>
T gauss_pdf(T x) {
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    return T(inv_sqrt_2pi * std::exp(-0.5 * double(x) * double(x)));
}

} // namespace detail

/// Reverse-mode autodiff over a closed set of dense-tensor primitives.
///
/// Each operation appends one node holding the computed value and, when any
/// input requires a gradient, a closure that routes the output adjoint back
/// to the inputs.  Nodes are appended in evaluation order, so backward() is a
/// single reverse sweep.  A tape is built per forward pass and discarded.
///
/// Every primitive checks its result for NaN/Inf and raises NumericsError
/// instead of letting a non-finite value propagate.
template <typename T>
class Tape {
public:
    struct Var {
        std::size_t id = npos;
        bool valid() const { return id != npos; }
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input (a trainable parameter).
    Var leaf(Tensor<T> v) { return push("leaf", std::move(v), true, nullptr); }

    /// Non-differentiable input (data, or a frozen parameter).
    Var constant(Tensor<T> v) {
        return push("constant", std::move(v), false, nullptr);
    }

    const Tensor<T>& val(Var v) const { return node(v).value; }
    std::size_t size() const { return nodes_.size(); }
    bool wants_grad(Var v) const { return node(v).requires_grad; }

    /// Elementwise sum.  Also accepts matrix + row vector (bias broadcast
    /// over rows) — the one broadcast the model needs.
    Var add(Var a, Var b) {
        const Tensor<T>&va = val(a), &vb = val(b);
        if (va.same_shape(vb)) {
            Tensor<T> out = va;
            detail::add_into(out, vb);
            return push("add", std::move(out), needs(a, b),
                        [a, b](Tape& t, std::size_t self) {
                            t.accum(a, t.grads_[self]);
                            t.accum(b, t.grads_[self]);
                        });
        }
        if (va.rank() == 2 && vb.rank() == 1 && va.dim(1) == vb.dim(0)) {
            const std::size_t m = va.dim(0), n = va.dim(1);
            Tensor<T> out = va;
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) out(i, j) += vb(j);
            return push("add", std::move(out), needs(a, b),
                        [a, b, m, n](Tape& t, std::size_t self) {
                            const Tensor<T>& g = t.grads_[self];
                            t.accum(a, g);
                            if (t.wants_grad(b)) {
                                Tensor<T> db = Tensor<T>::zeros({n});
                                for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t j = 0; j < n; ++j)
                                        db(j) += g(i, j);
                                t.accum(b, std::move(db));
                            }
                        });
        }
        throw ShapeError("add: incompatible shapes " + va.shape_str() + " and " +
                         vb.shape_str());
    }

    Var sub(Var a, Var b) { return add(a, scale(b, T(-1))); }

    /// Multiply by a compile-time-known scalar constant.
    Var scale(Var a, T c) {
        Tensor<T> out = val(a);
        for (auto& x : out.data()) x *= c;
        return push("scale", std::move(out), needs(a),
                    [a, c](Tape& t, std::size_t self) {
                        Tensor<T> da = t.grads_[self];
                        for (auto& x : da.data()) x *= c;
                        t.accum(a, std::move(da));
                    });
    }

    /// Elementwise product, same shapes.
    Var mul(Var a, Var b) {
        const Tensor<T>&va = val(a), &vb = val(b);
        if (!va.same_shape(vb))
            throw ShapeError("mul: shape mismatch " + va.shape_str() + " vs " +
                             vb.shape_str());
        Tensor<T> out = va;
        {
            T* o = out.ptr();
            const T* p = vb.ptr();
            for (std::size_t i = 0; i < out.size(); ++i) o[i] *= p[i];
        }
        return push("mul", std::move(out), needs(a, b),
                    [a, b](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        if (t.wants_grad(a)) {
                            Tensor<T> da = g;
                            const T* p = t.val(b).ptr();
                            T* d = da.ptr();
                            for (std::size_t i = 0; i < da.size(); ++i) d[i] *= p[i];
                            t.accum(a, std::move(da));
                        }
                        if (t.wants_grad(b)) {
                            Tensor<T> db = g;
                            const T* p = t.val(a).ptr();
                            T* d = db.ptr();
                            for (std::size_t i = 0; i < db.size(); ++i) d[i] *= p[i];
                            t.accum(b, std::move(db));
                        }
                    });
    }

    /// Matrix product.  Shapes: {m,k}x{k,n}, {m,k}x{k} and {k}x{k,n}.
    Var matmul(Var a, Var b) {
        const Tensor<T>&va = val(a), &vb = val(b);
        if (va.rank() == 2 && vb.rank() == 2) {
            if (va.dim(1) != vb.dim(0))
                throw ShapeError("matmul: inner dims disagree " + va.shape_str() +
                                 " vs " + vb.shape_str());
            return push("matmul", detail::mm(va, vb), needs(a, b),
                        [a, b](Tape& t, std::size_t self) {
                            const Tensor<T>& g = t.grads_[self];
                            if (t.wants_grad(a)) t.accum(a, detail::mm_nt(g, t.val(b)));
                            if (t.wants_grad(b)) t.accum(b, detail::mm_tn(t.val(a), g));
                        });
        }
        if (va.rank() == 2 && vb.rank() == 1) {
            if (va.dim(1) != vb.dim(0))
                throw ShapeError("matmul: inner dims disagree " + va.shape_str() +
                                 " vs " + vb.shape_str());
            const std::size_t m = va.dim(0), k = va.dim(1);
            Tensor<T> out = Tensor<T>::zeros({m});
            for (std::size_t i = 0; i < m; ++i) {
                const T* ai = va.ptr() + i * k;
                T s = 0;
                for (std::size_t p = 0; p < k; ++p) s += ai[p] * vb(p);
                out(i) = s;
            }
            return push("matmul", std::move(out), needs(a, b),
                        [a, b, m, k](Tape& t, std::size_t self) {
                            const Tensor<T>& g = t.grads_[self];
                            if (t.wants_grad(a)) {
                                const Tensor<T>& v = t.val(b);
                                Tensor<T> da = Tensor<T>::zeros({m, k});
                                for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t p = 0; p < k; ++p)
                                        da(i, p) = g(i) * v(p);
                                t.accum(a, std::move(da));
                            }
                            if (t.wants_grad(b)) {
                                const Tensor<T>& av = t.val(a);
                                Tensor<T> db = Tensor<T>::zeros({k});
                                for (std::size_t i = 0; i < m; ++i)
                                    for (std::size_t p = 0; p < k; ++p)
                                        db(p) += g(i) * av(i, p);
                                t.accum(b, std::move(db));
                            }
                        });
        }
        if (va.rank() == 1 && vb.rank() == 2) {
            if (va.dim(0) != vb.dim(0))
                throw ShapeError("matmul: inner dims disagree " + va.shape_str() +
                                 " vs " + vb.shape_str());
            const std::size_t k = vb.dim(0), n = vb.dim(1);
            Tensor<T> out = Tensor<T>::zeros({n});
            for (std::size_t p = 0; p < k; ++p) {
                const T vp = va(p);
                const T* bp = vb.ptr() + p * n;
                for (std::size_t j = 0; j < n; ++j) out(j) += vp * bp[j];
            }
            return push("matmul", std::move(out), needs(a, b),
                        [a, b, k, n](Tape& t, std::size_t self) {
                            const Tensor<T>& g = t.grads_[self];
                            if (t.wants_grad(a)) {
                                const Tensor<T>& bm = t.val(b);
                                Tensor<T> da = Tensor<T>::zeros({k});
                                for (std::size_t p = 0; p < k; ++p) {
                                    const T* bp = bm.ptr() + p * n;
                                    T s = 0;
                                    for (std::size_t j = 0; j < n; ++j)
                                        s += bp[j] * g(j);
                                    da(p) = s;
                                }
                                t.accum(a, std::move(da));
                            }
                            if (t.wants_grad(b)) {
                                const Tensor<T>& av = t.val(a);
                                Tensor<T> db = Tensor<T>::zeros({k, n});
                                for (std::size_t p = 0; p < k; ++p)
                                    for (std::size_t j = 0; j < n; ++j)
                                        db(p, j) = av(p) * g(j);
                                t.accum(b, std::move(db));
                            }
                        });
        }
        throw ShapeError("matmul: unsupported ranks " + va.shape_str() + " x " +
                         vb.shape_str());
    }

    Var transpose(Var a) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 2) throw ShapeError("transpose requires a matrix");
        const std::size_t m = va.dim(0), n = va.dim(1);
        Tensor<T> out = Tensor<T>::zeros({n, m});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out(j, i) = va(i, j);
        return push("transpose", std::move(out), needs(a),
                    [a, m, n](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        Tensor<T> da = Tensor<T>::zeros({m, n});
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j) da(i, j) = g(j, i);
                        t.accum(a, std::move(da));
                    });
    }

    Var relu(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.data()) x = x > T(0) ? x : T(0);
        return push("relu", std::move(out), needs(a),
                    [a](Tape& t, std::size_t self) {
                        Tensor<T> da = t.grads_[self];
                        const T* x = t.val(a).ptr();
                        T* d = da.ptr();
                        for (std::size_t i = 0; i < da.size(); ++i)
                            if (x[i] <= T(0)) d[i] = T(0);
                        t.accum(a, std::move(da));
                    });
    }

    /// Exact (erf-based) GELU.
    Var gelu(Var a) {
        Tensor<T> out = val(a);
        for (auto& x : out.data()) x = x * detail::gauss_cdf(x);
        return push("gelu", std::move(out), needs(a),
                    [a](Tape& t, std::size_t self) {
                        Tensor<T> da = t.grads_[self];
                        const T* x = t.val(a).ptr();
                        T* d = da.ptr();
                        for (std::size_t i = 0; i < da.size(); ++i)
                            d[i] *= detail::gauss_cdf(x[i]) +
                                    x[i] * detail::gauss_pdf(x[i]);
                        t.accum(a, std::move(da));
                    });
    }

    /// Softmax over the last dimension, computed with max-subtraction.
    /// With `causal` set (square matrices only), row i is a distribution over
    /// columns 0..i and exactly zero beyond.
    Var softmax_lastdim(Var a, bool causal = false) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 1 && va.rank() != 2)
            throw ShapeError("softmax_lastdim requires rank 1 or 2");
        const std::size_t rows = va.rank() == 2 ? va.dim(0) : 1;
        const std::size_t n = va.rank() == 2 ? va.dim(1) : va.dim(0);
        if (n == 0) throw ShapeError("softmax_lastdim: empty last dim");
        if (causal && (va.rank() != 2 || rows != n))
            throw ShapeError("causal softmax requires a square matrix");
        Tensor<T> out = Tensor<T>::zeros(va.shape());
        for (std::size_t i = 0; i < rows; ++i) {
            const T* x = va.ptr() + i * n;
            T* y = out.ptr() + i * n;
            const std::size_t lim = causal ? i + 1 : n;
            T mx = x[0];
            for (std::size_t j = 1; j < lim; ++j) mx = std::max(mx, x[j]);
            T denom = 0;
            for (std::size_t j = 0; j < lim; ++j) {
                y[j] = std::exp(x[j] - mx);
                denom += y[j];
            }
            for (std::size_t j = 0; j < lim; ++j) y[j] /= denom;
        }
        return push("softmax", std::move(out), needs(a),
                    [a, rows, n](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        const Tensor<T>& y = t.nodes_[self].value;
                        Tensor<T> da = Tensor<T>::zeros(y.shape());
                        for (std::size_t i = 0; i < rows; ++i) {
                            const T* gi = g.ptr() + i * n;
                            const T* yi = y.ptr() + i * n;
                            T dot = 0;
                            for (std::size_t j = 0; j < n; ++j) dot += gi[j] * yi[j];
                            T* di = da.ptr() + i * n;
                            for (std::size_t j = 0; j < n; ++j)
                                di[j] = yi[j] * (gi[j] - dot);
                        }
                        t.accum(a, std::move(da));
                    });
    }

    /// Per-row normalization over the feature (last) dim:
    /// (x - mean) / sqrt(var + eps) * gamma + beta, population variance.
    Var layer_norm(Var a, Var gamma, Var beta, T eps) {
        if (eps <= T(0)) throw NumericsError("layer_norm: eps must be positive");
        const Tensor<T>& va = val(a);
        if (va.rank() != 1 && va.rank() != 2)
            throw ShapeError("layer_norm requires rank 1 or 2");
        const std::size_t rows = va.rank() == 2 ? va.dim(0) : 1;
        const std::size_t n = va.rank() == 2 ? va.dim(1) : va.dim(0);
        const Tensor<T>&vg = val(gamma), &vb = val(beta);
        if (vg.rank() != 1 || vg.dim(0) != n || vb.rank() != 1 || vb.dim(0) != n)
            throw ShapeError("layer_norm: gamma/beta must be length-" +
                             std::to_string(n) + " vectors");
        Tensor<T> out = Tensor<T>::zeros(va.shape());
        Tensor<T> xhat = Tensor<T>::zeros(va.shape());
        Tensor<T> inv_std = Tensor<T>::zeros({rows});
        for (std::size_t i = 0; i < rows; ++i) {
            const T* x = va.ptr() + i * n;
            T mean = 0;
            for (std::size_t j = 0; j < n; ++j) mean += x[j];
            mean /= T(n);
            T var = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const T d = x[j] - mean;
                var += d * d;
            }
            var /= T(n);
            const T istd = T(1) / std::sqrt(var + eps);
            inv_std(i) = istd;
            T* xh = xhat.ptr() + i * n;
            T* y = out.ptr() + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                xh[j] = (x[j] - mean) * istd;
                y[j] = xh[j] * vg(j) + vb(j);
            }
        }
        return push(
            "layer_norm", std::move(out), needs(a, gamma) || needs(beta),
            [a, gamma, beta, rows, n, xhat = std::move(xhat),
             inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
                const Tensor<T>& g = t.grads_[self];
                const Tensor<T>& vg = t.val(gamma);
                if (t.wants_grad(gamma)) {
                    Tensor<T> dg = Tensor<T>::zeros({n});
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            dg(j) += g.ptr()[i * n + j] * xhat.ptr()[i * n + j];
                    t.accum(gamma, std::move(dg));
                }
                if (t.wants_grad(beta)) {
                    Tensor<T> db = Tensor<T>::zeros({n});
                    for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < n; ++j)
                            db(j) += g.ptr()[i * n + j];
                    t.accum(beta, std::move(db));
                }
                if (t.wants_grad(a)) {
                    Tensor<T> da = Tensor<T>::zeros(t.val(a).shape());
                    for (std::size_t i = 0; i < rows; ++i) {
                        const T* gi = g.ptr() + i * n;
                        const T* xh = xhat.ptr() + i * n;
                        T* di = da.ptr() + i * n;
                        T mean_dxhat = 0, mean_dxhat_xhat = 0;
                        for (std::size_t j = 0; j < n; ++j) {
                            const T dxh = gi[j] * vg(j);
                            mean_dxhat += dxh;
                            mean_dxhat_xhat += dxh * xh[j];
                        }
                        mean_dxhat /= T(n);
                        mean_dxhat_xhat /= T(n);
                        for (std::size_t j = 0; j < n; ++j) {
                            const T dxh = gi[j] * vg(j);
                            di[j] = inv_std(i) *
                                    (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
                        }
                    }
                    t.accum(a, std::move(da));
                }
            });
    }

    /// Column means of a matrix: {m,n} -> {n}.
    Var mean_rows(Var a) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 2) throw ShapeError("mean_rows requires a matrix");
        const std::size_t m = va.dim(0), n = va.dim(1);
        if (m == 0) throw ShapeError("mean_rows: empty matrix");
        Tensor<T> out = Tensor<T>::zeros({n});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out(j) += va(i, j);
        for (std::size_t j = 0; j < n; ++j) out(j) /= T(m);
        return push("mean_rows", std::move(out), needs(a),
                    [a, m, n](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        Tensor<T> da = Tensor<T>::zeros({m, n});
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < n; ++j)
                                da(i, j) = g(j) / T(m);
                        t.accum(a, std::move(da));
                    });
    }

    /// Mean of a vector: {n} -> {1}.
    Var mean_all(Var a) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 1 || va.size() == 0)
            throw ShapeError("mean_all requires a non-empty vector");
        const std::size_t n = va.dim(0);
        T s = 0;
        for (std::size_t i = 0; i < n; ++i) s += va(i);
        return push("mean_all", Tensor<T>::scalar(s / T(n)), needs(a),
                    [a, n](Tape& t, std::size_t self) {
                        const T g = t.grads_[self](0) / T(n);
                        t.accum(a, Tensor<T>::full({n}, g));
                    });
    }

    /// Concatenate along the last dimension.  Vectors chain end to end;
    /// matrices must share their row count.
    Var concat_lastdim(std::span<const Var> parts) {
        if (parts.empty()) throw ShapeError("concat_lastdim: no inputs");
        const std::size_t rk = val(parts[0]).rank();
        if (rk != 1 && rk != 2)
            throw ShapeError("concat_lastdim requires rank 1 or 2");
        const std::size_t m = rk == 2 ? val(parts[0]).dim(0) : 1;
        std::size_t total = 0;
        bool req = false;
        for (Var p : parts) {
            const Tensor<T>& v = val(p);
            if (v.rank() != rk || (rk == 2 && v.dim(0) != m))
                throw ShapeError("concat_lastdim: incompatible part shapes");
            total += rk == 2 ? v.dim(1) : v.dim(0);
            req = req || wants_grad(p);
        }
        Tensor<T> out = rk == 2 ? Tensor<T>::zeros({m, total})
                                : Tensor<T>::zeros({total});
        std::size_t off = 0;
        std::vector<std::pair<Var, std::size_t>> layout;  // (part, col offset)
        for (Var p : parts) {
            const Tensor<T>& v = val(p);
            const std::size_t w = rk == 2 ? v.dim(1) : v.dim(0);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    out.ptr()[i * total + off + j] = v.ptr()[i * w + j];
            layout.emplace_back(p, off);
            off += w;
        }
        return push("concat", std::move(out), req,
                    [layout = std::move(layout), m, total, rk](Tape& t,
                                                               std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        for (const auto& [p, o] : layout) {
                            if (!t.wants_grad(p)) continue;
                            const Tensor<T>& v = t.val(p);
                            const std::size_t w = rk == 2 ? v.dim(1) : v.dim(0);
                            Tensor<T> dp = Tensor<T>::zeros(v.shape());
                            for (std::size_t i = 0; i < m; ++i)
                                for (std::size_t j = 0; j < w; ++j)
                                    dp.ptr()[i * w + j] = g.ptr()[i * total + o + j];
                            t.accum(p, std::move(dp));
                        }
                    });
    }

    Var concat_lastdim(std::initializer_list<Var> parts) {
        return concat_lastdim(std::span<const Var>(parts.begin(), parts.size()));
    }

    /// Columns [start, start+count) of a matrix, or that span of a vector.
    Var slice_cols(Var a, std::size_t start, std::size_t count) {
        const Tensor<T>& va = val(a);
        if (va.rank() != 1 && va.rank() != 2)
            throw ShapeError("slice_cols requires rank 1 or 2");
        const std::size_t m = va.rank() == 2 ? va.dim(0) : 1;
        const std::size_t n = va.rank() == 2 ? va.dim(1) : va.dim(0);
        if (start + count > n) throw ShapeError("slice_cols: range out of bounds");
        Tensor<T> out = va.rank() == 2 ? Tensor<T>::zeros({m, count})
                                       : Tensor<T>::zeros({count});
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j)
                out.ptr()[i * count + j] = va.ptr()[i * n + start + j];
        return push("slice_cols", std::move(out), needs(a),
                    [a, start, count, m, n](Tape& t, std::size_t self) {
                        const Tensor<T>& g = t.grads_[self];
                        Tensor<T> da = Tensor<T>::zeros(t.val(a).shape());
                        for (std::size_t i = 0; i < m; ++i)
                            for (std::size_t j = 0; j < count; ++j)
                                da.ptr()[i * n + start + j] = g.ptr()[i * count + j];
                        t.accum(a, std::move(da));
                    });
    }

    /// Reverse sweep from a scalar loss.  May run once per tape.
    void backward(Var loss) {
        if (backward_done_)
            throw UsageError("backward already ran on this tape");
        const Tensor<T>& lv = val(loss);
        if (lv.size() != 1)
            throw UsageError("backward requires a scalar loss, got shape " +
                             lv.shape_str());
        backward_done_ = true;
        grads_.assign(nodes_.size(), Tensor<T>{});
        grads_[loss.id] = Tensor<T>::full(lv.shape(), T(1));
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& nd = nodes_[i];
            if (!nd.requires_grad || grads_[i].size() == 0 || !nd.backprop)
                continue;
            nd.backprop(*this, i);
        }
    }

    /// Gradient computed by the last backward() for a leaf; zeros if the
    /// leaf never influenced the loss.
    Tensor<T> grad(Var v) const {
        if (!backward_done_) throw UsageError("backward has not run");
        const Node& nd = node(v);
        if (!nd.requires_grad)
            throw UsageError("gradient requested for a non-differentiable node");
        if (v.id < grads_.size() && grads_[v.id].size() != 0) return grads_[v.id];
        return Tensor<T>::zeros(nd.value.shape());
    }

private:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    struct Node {
        const char* op;
        Tensor<T> value;
        bool requires_grad = false;
        std::function<void(Tape&, std::size_t)> backprop;
    };

    const Node& node(Var v) const {
        if (!v.valid() || v.id >= nodes_.size())
            throw UsageError("invalid tape variable");
        return nodes_[v.id];
    }

    bool needs(Var a) const { return wants_grad(a); }
    bool needs(Var a, Var b) const { return wants_grad(a) || wants_grad(b); }

    Var push(const char* op, Tensor<T> value, bool requires_grad,
             std::function<void(Tape&, std::size_t)> backprop) {
        if (!value.all_finite())
            throw NumericsError(std::string(op) + " produced a non-finite value");
        Node n;
        n.op = op;
        n.value = std::move(value);
        n.requires_grad = requires_grad;
        if (requires_grad) n.backprop = std::move(backprop);
        nodes_.push_back(std::move(n));
        return Var{nodes_.size() - 1};
    }

    void accum(Var v, const Tensor<T>& delta) {
        if (!wants_grad(v)) return;
        Tensor<T>& g = grads_[v.id];
        if (g.size() == 0)
            g = delta;
        else
            detail::add_into(g, delta);
    }

    void accum(Var v, Tensor<T>&& delta) {
        if (!wants_grad(v)) return;
        Tensor<T>& g = grads_[v.id];
        if (g.size() == 0)
            g = std::move(delta);
        else
            detail::add_into(g, delta);
    }

    std::deque<Node> nodes_;  // deque: references from val() stay valid across pushes
    std::vector<Tensor<T>> grads_;
    bool backward_done_ = false;
};

} // namespace rulkit
