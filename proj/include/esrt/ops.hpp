#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "esrt/kernels.hpp"
#include "esrt/tape.hpp"
#include "esrt/tensor.hpp"

// Differentiable operations over Tensor<T>. Every op takes an optional tape;
// with tape == nullptr (or no tracked input) it is a plain forward function.
// Inputs are never mutated.

namespace esrt {

namespace detail {

// Finiteness checking after each forward op. On by default in debug builds.
inline bool& finite_checks() {
#ifndef NDEBUG
    static bool on = true;
#else
    static bool on = false;
#endif
    return on;
}

template <typename T>
inline void checked(const Tensor<T>& t, const char* op) {
    if (finite_checks() && !t.all_finite())
        throw ArgError(std::string(op) + " produced non-finite values");
}

}  // namespace detail

inline void set_finite_checks(bool on) { detail::finite_checks() = on; }

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(GradTape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (!same_shape(a, b)) throw ShapeError("add " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    detail::checked(out, "add");
    if (tape)
        tape->record_result(out, {&a, &b}, [] {
            return [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g, g}; };
        });
    return out;
}

template <typename T>
Tensor<T> sub(GradTape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (!same_shape(a, b)) throw ShapeError("sub " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] - pb[i];
    detail::checked(out, "sub");
    if (tape)
        tape->record_result(out, {&a, &b}, [] {
            return [](const Tensor<T>& g) {
                Tensor<T> gb(g.shape());
                const T* pg = g.data();
                T* p = gb.data();
                for (int64_t i = 0; i < gb.size(); ++i) p[i] = -pg[i];
                return std::vector<Tensor<T>>{g, gb};
            };
        });
    return out;
}

template <typename T>
Tensor<T> mul(GradTape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    if (!same_shape(a, b)) throw ShapeError("mul " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * pb[i];
    detail::checked(out, "mul");
    if (tape)
        tape->record_result(out, {&a, &b}, [&] {
            bool need_a = tape->tracked(a), need_b = tape->tracked(b);
            return [a, b, need_a, need_b](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(2);
                const T* pg = g.data();
                if (need_a) {
                    gs[0] = Tensor<T>(g.shape());
                    T* p = gs[0].data();
                    const T* pb2 = b.data();
                    for (int64_t i = 0; i < g.size(); ++i) p[i] = pg[i] * pb2[i];
                }
                if (need_b) {
                    gs[1] = Tensor<T>(g.shape());
                    T* p = gs[1].data();
                    const T* pa2 = a.data();
                    for (int64_t i = 0; i < g.size(); ++i) p[i] = pg[i] * pa2[i];
                }
                return gs;
            };
        });
    return out;
}

template <typename T>
Tensor<T> add_scalar(GradTape<T>* tape, const Tensor<T>& a, double c) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] + T(c);
    if (tape)
        tape->record_result(out, {&a}, [] {
            return [](const Tensor<T>& g) { return std::vector<Tensor<T>>{g}; };
        });
    return out;
}

template <typename T>
Tensor<T> mul_scalar(GradTape<T>* tape, const Tensor<T>& a, double c) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = pa[i] * T(c);
    detail::checked(out, "mul_scalar");
    if (tape)
        tape->record_result(out, {&a}, [c] {
            return [c](const Tensor<T>& g) {
                Tensor<T> ga(g.shape());
                const T* pg = g.data();
                T* p = ga.data();
                for (int64_t i = 0; i < g.size(); ++i) p[i] = pg[i] * T(c);
                return std::vector<Tensor<T>>{ga};
            };
        });
    return out;
}

// x scaled by a trainable one-element tensor (the lambda weights in RU).
template <typename T>
Tensor<T> scale_by(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& s) {
    if (s.size() != 1) throw ShapeError("scale_by expects a one-element scale");
    const T sv = s.data()[0];
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = px[i] * sv;
    detail::checked(out, "scale_by");
    if (tape)
        tape->record_result(out, {&x, &s}, [&] {
            bool need_x = tape->tracked(x), need_s = tape->tracked(s);
            return [x, sv, need_x, need_s, sshape = s.shape()](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(2);
                const T* pg = g.data();
                if (need_x) {
                    gs[0] = Tensor<T>(g.shape());
                    T* p = gs[0].data();
                    for (int64_t i = 0; i < g.size(); ++i) p[i] = pg[i] * sv;
                }
                if (need_s) {
                    const T* px2 = x.data();
                    T acc = 0;
                    for (int64_t i = 0; i < g.size(); ++i) acc += pg[i] * px2[i];
                    gs[1] = Tensor<T>(sshape);
                    gs[1].data()[0] = acc;
                }
                return gs;
            };
        });
    return out;
}

// Per-channel bias over B x C x H x W (b has shape [C]).
template <typename T>
Tensor<T> add_channel(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& b) {
    require_rank(x, 4, "add_channel input");
    if (b.rank() != 1 || b.dim(0) != x.dim(1))
        throw ShapeError("add_channel bias " + shape_str(b.shape()) + " vs input " + shape_str(x.shape()));
    Tensor<T> out(x.shape());
    const int64_t bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    const T* px = x.data();
    const T* pb = b.data();
    T* po = out.data();
    for (int64_t n = 0; n < bsz; ++n)
        for (int64_t ch = 0; ch < c; ++ch) {
            const T bias = pb[ch];
            const int64_t base = (n * c + ch) * hw;
            for (int64_t i = 0; i < hw; ++i) po[base + i] = px[base + i] + bias;
        }
    if (tape)
        tape->record_result(out, {&x, &b}, [&] {
            bool need_x = tape->tracked(x), need_b = tape->tracked(b);
            return [bsz, c, hw, need_x, need_b, bshape = b.shape()](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(2);
                if (need_x) gs[0] = g;
                if (need_b) {
                    gs[1] = Tensor<T>(bshape);
                    const T* pg = g.data();
                    T* p = gs[1].data();
                    for (int64_t n = 0; n < bsz; ++n)
                        for (int64_t ch = 0; ch < c; ++ch) {
                            T acc = 0;
                            const int64_t base = (n * c + ch) * hw;
                            for (int64_t i = 0; i < hw; ++i) acc += pg[base + i];
                            p[ch] += acc;
                        }
                }
                return gs;
            };
        });
    return out;
}

// Per-channel gate: x[B,C,H,W] * m[B,C,1,1] (channel attention).
template <typename T>
Tensor<T> mul_channel(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& m) {
    require_rank(x, 4, "mul_channel input");
    if (m.rank() != 4 || m.dim(0) != x.dim(0) || m.dim(1) != x.dim(1) || m.dim(2) != 1 || m.dim(3) != 1)
        throw ShapeError("mul_channel gate " + shape_str(m.shape()) + " vs input " + shape_str(x.shape()));
    Tensor<T> out(x.shape());
    const int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    const T* px = x.data();
    const T* pm = m.data();
    T* po = out.data();
    for (int64_t n = 0; n < bc; ++n) {
        const T gate = pm[n];
        for (int64_t i = 0; i < hw; ++i) po[n * hw + i] = px[n * hw + i] * gate;
    }
    detail::checked(out, "mul_channel");
    if (tape)
        tape->record_result(out, {&x, &m}, [&] {
            bool need_x = tape->tracked(x), need_m = tape->tracked(m);
            return [x, m, bc, hw, need_x, need_m](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(2);
                const T* pg = g.data();
                if (need_x) {
                    gs[0] = Tensor<T>(x.shape());
                    T* p = gs[0].data();
                    const T* pm2 = m.data();
                    for (int64_t n = 0; n < bc; ++n)
                        for (int64_t i = 0; i < hw; ++i) p[n * hw + i] = pg[n * hw + i] * pm2[n];
                }
                if (need_m) {
                    gs[1] = Tensor<T>(m.shape());
                    T* p = gs[1].data();
                    const T* px2 = x.data();
                    for (int64_t n = 0; n < bc; ++n) {
                        T acc = 0;
                        for (int64_t i = 0; i < hw; ++i) acc += pg[n * hw + i] * px2[n * hw + i];
                        p[n] = acc;
                    }
                }
                return gs;
            };
        });
    return out;
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(GradTape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = px[i] > T(0) ? px[i] : T(0);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [x](const Tensor<T>& g) {
                Tensor<T> gx(g.shape());
                const T* pg = g.data();
                const T* px2 = x.data();
                T* p = gx.data();
                for (int64_t i = 0; i < g.size(); ++i) p[i] = px2[i] > T(0) ? pg[i] : T(0);
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

template <typename T>
Tensor<T> sigmoid(GradTape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = T(1) / (T(1) + std::exp(-px[i]));
    detail::checked(out, "sigmoid");
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [y = out](const Tensor<T>& g) {
                Tensor<T> gx(g.shape());
                const T* pg = g.data();
                const T* py = y.data();
                T* p = gx.data();
                for (int64_t i = 0; i < g.size(); ++i) p[i] = pg[i] * py[i] * (T(1) - py[i]);
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(GradTape<T>* tape, const Tensor<T>& x) {
    constexpr double inv_sqrt2 = 0.7071067811865475244;
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) {
        const double v = double(px[i]);
        po[i] = T(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
    }
    detail::checked(out, "gelu");
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [x](const Tensor<T>& g) {
                constexpr double inv_sqrt_2pi = 0.3989422804014326779;
                Tensor<T> gx(g.shape());
                const T* pg = g.data();
                const T* px2 = x.data();
                T* p = gx.data();
                for (int64_t i = 0; i < g.size(); ++i) {
                    const double v = double(px2[i]);
                    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                    const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                    p[i] = pg[i] * T(cdf + v * pdf);
                }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// |x| with subgradient 0 at x == 0.
template <typename T>
Tensor<T> abs_val(GradTape<T>* tape, const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (int64_t i = 0; i < out.size(); ++i) po[i] = std::abs(px[i]);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [x](const Tensor<T>& g) {
                Tensor<T> gx(g.shape());
                const T* pg = g.data();
                const T* px2 = x.data();
                T* p = gx.data();
                for (int64_t i = 0; i < g.size(); ++i)
                    p[i] = px2[i] > T(0) ? pg[i] : (px2[i] < T(0) ? -pg[i] : T(0));
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(GradTape<T>* tape, const Tensor<T>& x) {
    T acc = 0;
    const T* px = x.data();
    for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
    Tensor<T> out = Tensor<T>::scalar(acc);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape()](const Tensor<T>& g) {
                return std::vector<Tensor<T>>{Tensor<T>::full(shape, g.data()[0])};
            };
        });
    return out;
}

template <typename T>
Tensor<T> mean_all(GradTape<T>* tape, const Tensor<T>& x) {
    T acc = 0;
    const T* px = x.data();
    for (int64_t i = 0; i < x.size(); ++i) acc += px[i];
    const T n = T(x.size());
    Tensor<T> out = Tensor<T>::scalar(acc / n);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), n](const Tensor<T>& g) {
                return std::vector<Tensor<T>>{Tensor<T>::full(shape, g.data()[0] / n)};
            };
        });
    return out;
}

// B x C x H x W -> B x C x 1 x 1 spatial mean (squeeze step of channel attention).
template <typename T>
Tensor<T> global_avg_pool(GradTape<T>* tape, const Tensor<T>& x) {
    require_rank(x, 4, "global_avg_pool");
    const int64_t bc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> out(Shape{x.dim(0), x.dim(1), 1, 1});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t n = 0; n < bc; ++n) {
        T acc = 0;
        for (int64_t i = 0; i < hw; ++i) acc += px[n * hw + i];
        po[n] = acc / T(hw);
    }
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bc, hw](const Tensor<T>& g) {
                Tensor<T> gx(shape);
                const T* pg = g.data();
                T* p = gx.data();
                for (int64_t n = 0; n < bc; ++n) {
                    const T v = pg[n] / T(hw);
                    for (int64_t i = 0; i < hw; ++i) p[n * hw + i] = v;
                }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(GradTape<T>* tape, const Tensor<T>& x, Shape shape) {
    Tensor<T> out = x.reshaped(std::move(shape));
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [orig = x.shape()](const Tensor<T>& g) {
                return std::vector<Tensor<T>>{g.reshaped(orig)};
            };
        });
    return out;
}

namespace detail {

template <typename T>
Tensor<T> permute_copy(const Tensor<T>& x, const std::vector<int>& perm) {
    const int r = x.rank();
    Shape out_shape(size_t(r), 0);
    for (int i = 0; i < r; ++i) out_shape[size_t(i)] = x.dim(perm[size_t(i)]);
    Tensor<T> out(out_shape);

    std::vector<int64_t> in_strides(size_t(r), 1);
    for (int i = r - 2; i >= 0; --i) in_strides[size_t(i)] = in_strides[size_t(i + 1)] * x.dim(i + 1);
    std::vector<int64_t> src_stride(size_t(r), 0);
    for (int i = 0; i < r; ++i) src_stride[size_t(i)] = in_strides[size_t(perm[size_t(i)])];

    const T* px = x.data();
    T* po = out.data();
    std::vector<int64_t> idx(size_t(r), 0);
    const int64_t total = out.size();
    int64_t src = 0;
    for (int64_t flat = 0; flat < total; ++flat) {
        po[flat] = px[src];
        for (int i = r - 1; i >= 0; --i) {
            idx[size_t(i)]++;
            src += src_stride[size_t(i)];
            if (idx[size_t(i)] < out_shape[size_t(i)]) break;
            src -= src_stride[size_t(i)] * out_shape[size_t(i)];
            idx[size_t(i)] = 0;
        }
    }
    return out;
}

}  // namespace detail

template <typename T>
Tensor<T> permute(GradTape<T>* tape, const Tensor<T>& x, std::vector<int> perm) {
    if (int(perm.size()) != x.rank()) throw ShapeError("permute rank mismatch");
    Tensor<T> out = detail::permute_copy(x, perm);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            std::vector<int> inv(perm.size());
            for (size_t i = 0; i < perm.size(); ++i) inv[size_t(perm[i])] = int(i);
            return [inv](const Tensor<T>& g) {
                return std::vector<Tensor<T>>{detail::permute_copy(g, inv)};
            };
        });
    return out;
}

// Swap two axes (thin wrapper over permute).
template <typename T>
Tensor<T> transpose(GradTape<T>* tape, const Tensor<T>& x, int a, int b) {
    std::vector<int> perm(size_t(x.rank()));
    for (int i = 0; i < x.rank(); ++i) perm[size_t(i)] = i;
    std::swap(perm[size_t(a)], perm[size_t(b)]);
    return permute(tape, x, perm);
}

template <typename T>
Tensor<T> slice(GradTape<T>* tape, const Tensor<T>& x, int axis, int64_t start, int64_t len) {
    if (axis < 0 || axis >= x.rank()) throw ArgError("slice axis out of range");
    if (start < 0 || len < 1 || start + len > x.dim(axis)) throw ShapeError("slice range out of bounds");
    Shape out_shape = x.shape();
    out_shape[size_t(axis)] = len;
    Tensor<T> out(out_shape);

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int64_t n = x.dim(axis);
    const T* px = x.data();
    T* po = out.data();
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(po + o * len * inner, px + (o * n + start) * inner, size_t(len * inner) * sizeof(T));

    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), outer, inner, n, start, len](const Tensor<T>& g) {
                Tensor<T> gx(shape);  // zero-filled
                const T* pg = g.data();
                T* p = gx.data();
                for (int64_t o = 0; o < outer; ++o)
                    std::memcpy(p + (o * n + start) * inner, pg + o * len * inner,
                                size_t(len * inner) * sizeof(T));
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

template <typename T>
Tensor<T> concat(GradTape<T>* tape, const std::vector<Tensor<T>>& parts, int axis) {
    if (parts.empty()) throw ArgError("concat of nothing");
    const int r = parts[0].rank();
    if (axis < 0 || axis >= r) throw ArgError("concat axis out of range");
    int64_t total_axis = 0;
    for (const auto& p : parts) {
        if (p.rank() != r) throw ShapeError("concat rank mismatch");
        for (int i = 0; i < r; ++i)
            if (i != axis && p.dim(i) != parts[0].dim(i))
                throw ShapeError("concat shape mismatch on axis " + std::to_string(i));
        total_axis += p.dim(axis);
    }
    Shape out_shape = parts[0].shape();
    out_shape[size_t(axis)] = total_axis;
    Tensor<T> out(out_shape);

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= out_shape[size_t(i)];
    for (int i = axis + 1; i < r; ++i) inner *= out_shape[size_t(i)];

    T* po = out.data();
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t n = p.dim(axis);
        const T* pp = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + (o * total_axis + offset) * inner, pp + o * n * inner,
                        size_t(n * inner) * sizeof(T));
        offset += n;
    }

    if (tape) {
        bool any = false;
        for (const auto& p : parts) any = any || tape->tracked(p);
        if (any) {
            std::vector<int> ids;
            std::vector<bool> need;
            std::vector<Shape> shapes;
            for (const auto& p : parts) {
                ids.push_back(tape->node_of(p));
                need.push_back(tape->tracked(p));
                shapes.push_back(p.shape());
            }
            out.node = tape->record(
                ids, [outer, inner, total_axis, axis, need, shapes](const Tensor<T>& g) {
                    std::vector<Tensor<T>> gs(shapes.size());
                    const T* pg = g.data();
                    int64_t offset = 0;
                    for (size_t pi = 0; pi < shapes.size(); ++pi) {
                        const int64_t n = shapes[pi][size_t(axis)];
                        if (need[pi]) {
                            gs[pi] = Tensor<T>(shapes[pi]);
                            T* p = gs[pi].data();
                            for (int64_t o = 0; o < outer; ++o)
                                std::memcpy(p + o * n * inner,
                                            pg + (o * total_axis + offset) * inner,
                                            size_t(n * inner) * sizeof(T));
                        }
                        offset += n;
                    }
                    return gs;
                });
            out.tape_id = tape->id();
            out.requires_grad = true;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

// Batched matmul: [..., M, K] x [..., K, N] with identical leading dims.
template <typename T>
Tensor<T> matmul(GradTape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
    const int r = a.rank();
    if (r < 2 || b.rank() != r) throw ShapeError("matmul needs equal-rank inputs >= 2");
    for (int i = 0; i < r - 2; ++i)
        if (a.dim(i) != b.dim(i)) throw ShapeError("matmul batch dims differ");
    const int64_t m = a.dim(r - 2), k = a.dim(r - 1), k2 = b.dim(r - 2), n = b.dim(r - 1);
    if (k != k2)
        throw ShapeError("matmul inner dims " + std::to_string(k) + " vs " + std::to_string(k2));
    int64_t batch = 1;
    for (int i = 0; i < r - 2; ++i) batch *= a.dim(i);

    Shape out_shape = a.shape();
    out_shape[size_t(r - 1)] = n;
    Tensor<T> out(out_shape);
    for (int64_t bi = 0; bi < batch; ++bi)
        detail::gemm_nn(m, n, k, a.data() + bi * m * k, b.data() + bi * k * n,
                        out.data() + bi * m * n);
    detail::checked(out, "matmul");

    if (tape)
        tape->record_result(out, {&a, &b}, [&] {
            bool need_a = tape->tracked(a), need_b = tape->tracked(b);
            return [a, b, batch, m, n, k, need_a, need_b](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(2);
                if (need_a) {
                    gs[0] = Tensor<T>(a.shape());
                    for (int64_t bi = 0; bi < batch; ++bi)
                        detail::gemm_nt(m, k, n, g.data() + bi * m * n, b.data() + bi * k * n,
                                        gs[0].data() + bi * m * k);
                }
                if (need_b) {
                    gs[1] = Tensor<T>(b.shape());
                    for (int64_t bi = 0; bi < batch; ++bi)
                        detail::gemm_tn(k, n, m, a.data() + bi * m * k, g.data() + bi * m * n,
                                        gs[1].data() + bi * k * n);
                }
                return gs;
            };
        });
    return out;
}

// Affine map over the last axis: y = x . w^T + b, w is [Dout, Din].
template <typename T>
Tensor<T> linear(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require_rank(w, 2, "linear weight");
    const int64_t din = w.dim(1), dout = w.dim(0);
    if (x.dim(x.rank() - 1) != din)
        throw ShapeError("linear: input feature dim " + std::to_string(x.dim(x.rank() - 1)) +
                         " vs weight " + shape_str(w.shape()));
    if (b.rank() != 1 || b.dim(0) != dout) throw ShapeError("linear bias shape");
    const int64_t rows = x.size() / din;

    Shape out_shape = x.shape();
    out_shape.back() = dout;
    Tensor<T> out(out_shape);
    detail::gemm_nt(rows, dout, din, x.data(), w.data(), out.data());
    T* po = out.data();
    const T* pb = b.data();
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < dout; ++j) po[r * dout + j] += pb[j];
    detail::checked(out, "linear");

    if (tape)
        tape->record_result(out, {&x, &w, &b}, [&] {
            bool need_x = tape->tracked(x), need_w = tape->tracked(w), need_b = tape->tracked(b);
            return [x, w, rows, din, dout, need_x, need_w, need_b,
                    bshape = b.shape()](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(3);
                if (need_x) {
                    gs[0] = Tensor<T>(x.shape());
                    detail::gemm_nn(rows, din, dout, g.data(), w.data(), gs[0].data());
                }
                if (need_w) {
                    gs[1] = Tensor<T>(w.shape());
                    detail::gemm_tn(dout, din, rows, g.data(), x.data(), gs[1].data());
                }
                if (need_b) {
                    gs[2] = Tensor<T>(bshape);
                    const T* pg = g.data();
                    T* p = gs[2].data();
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t j = 0; j < dout; ++j) p[j] += pg[r * dout + j];
                }
                return gs;
            };
        });
    return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax(GradTape<T>* tape, const Tensor<T>& x, int axis) {
    if (axis < 0 || axis >= x.rank()) throw ArgError("softmax axis out of range");
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
    const int64_t n = x.dim(axis);

    Tensor<T> out(x.shape());
    const T* px = x.data();
    T* po = out.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t in = 0; in < inner; ++in) {
            const int64_t base = o * n * inner + in;
            T mx = px[base];
            for (int64_t j = 1; j < n; ++j) mx = std::max(mx, px[base + j * inner]);
            T denom = 0;
            for (int64_t j = 0; j < n; ++j) {
                const T e = std::exp(px[base + j * inner] - mx);
                po[base + j * inner] = e;
                denom += e;
            }
            const T inv = T(1) / denom;
            for (int64_t j = 0; j < n; ++j) po[base + j * inner] *= inv;
        }
    detail::checked(out, "softmax");

    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [y = out, outer, inner, n](const Tensor<T>& g) {
                Tensor<T> gx(y.shape());
                const T* pg = g.data();
                const T* py = y.data();
                T* p = gx.data();
                for (int64_t o = 0; o < outer; ++o)
                    for (int64_t in = 0; in < inner; ++in) {
                        const int64_t base = o * n * inner + in;
                        T dot = 0;
                        for (int64_t j = 0; j < n; ++j)
                            dot += pg[base + j * inner] * py[base + j * inner];
                        for (int64_t j = 0; j < n; ++j)
                            p[base + j * inner] =
                                py[base + j * inner] * (pg[base + j * inner] - dot);
                    }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// Normalization over the last axis with affine parameters.
template <typename T>
Tensor<T> layer_norm(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, double eps = 1e-5) {
    const int64_t c = x.dim(x.rank() - 1);
    if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c)
        throw ShapeError("layer_norm affine params must be length " + std::to_string(c));
    const int64_t rows = x.size() / c;

    Tensor<T> out(x.shape());
    Tensor<T> xhat(x.shape());
    Tensor<T> invstd(Shape{rows});
    const T* px = x.data();
    const T* pg = gamma.data();
    const T* pb = beta.data();
    T* po = out.data();
    T* ph = xhat.data();
    T* ps = invstd.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* row = px + r * c;
        T mean = 0;
        for (int64_t j = 0; j < c; ++j) mean += row[j];
        mean /= T(c);
        T var = 0;
        for (int64_t j = 0; j < c; ++j) {
            const T d = row[j] - mean;
            var += d * d;
        }
        var /= T(c);
        const T inv = T(1) / std::sqrt(var + T(eps));
        ps[r] = inv;
        for (int64_t j = 0; j < c; ++j) {
            const T h = (row[j] - mean) * inv;
            ph[r * c + j] = h;
            po[r * c + j] = h * pg[j] + pb[j];
        }
    }
    detail::checked(out, "layer_norm");

    if (tape)
        tape->record_result(out, {&x, &gamma, &beta}, [&] {
            bool need_x = tape->tracked(x), need_g = tape->tracked(gamma), need_b = tape->tracked(beta);
            return [xhat, invstd, gamma, rows, c, need_x, need_g, need_b](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(3);
                const T* pgo = g.data();
                const T* ph2 = xhat.data();
                const T* ps2 = invstd.data();
                const T* pgm = gamma.data();
                if (need_x) {
                    gs[0] = Tensor<T>(xhat.shape());
                    T* p = gs[0].data();
                    for (int64_t r = 0; r < rows; ++r) {
                        T sum_dh = 0, sum_dh_h = 0;
                        for (int64_t j = 0; j < c; ++j) {
                            const T dh = pgo[r * c + j] * pgm[j];
                            sum_dh += dh;
                            sum_dh_h += dh * ph2[r * c + j];
                        }
                        const T m1 = sum_dh / T(c), m2 = sum_dh_h / T(c);
                        for (int64_t j = 0; j < c; ++j) {
                            const T dh = pgo[r * c + j] * pgm[j];
                            p[r * c + j] = ps2[r] * (dh - m1 - ph2[r * c + j] * m2);
                        }
                    }
                }
                if (need_g) {
                    gs[1] = Tensor<T>(Shape{c});
                    T* p = gs[1].data();
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t j = 0; j < c; ++j) p[j] += pgo[r * c + j] * ph2[r * c + j];
                }
                if (need_b) {
                    gs[2] = Tensor<T>(Shape{c});
                    T* p = gs[2].data();
                    for (int64_t r = 0; r < rows; ++r)
                        for (int64_t j = 0; j < c; ++j) p[j] += pgo[r * c + j];
                }
                return gs;
            };
        });
    return out;
}

}  // namespace esrt
