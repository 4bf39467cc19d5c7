#pragma once

#include "esrt/ops.hpp"

// Spatial primitives for the SR pipeline. All feature maps are B x C x H x W.

namespace esrt {

// Same-padding stride-1 cross-correlation, odd kernel. w is [Cout, Cin, k, k].
template <typename T>
Tensor<T> conv2d(GradTape<T>* tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d weight");
    const int64_t bsz = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const int64_t cout = w.dim(0), k = w.dim(2);
    if (w.dim(1) != cin)
        throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) +
                         " input channels, got " + std::to_string(cin));
    if (w.dim(3) != k || k % 2 == 0) throw ArgError("conv2d kernel must be square and odd");
    if (b.rank() != 1 || b.dim(0) != cout) throw ShapeError("conv2d bias shape");

    const int64_t n = h * wd;
    const int64_t ck2 = cin * k * k;
    Tensor<T> out(Shape{bsz, cout, h, wd});
    std::vector<T> col(size_t(ck2 * n));
    for (int64_t bi = 0; bi < bsz; ++bi) {
        detail::im2col(x.data() + bi * cin * n, cin, h, wd, k, col.data());
        detail::gemm_nn(cout, n, ck2, w.data(), col.data(), out.data() + bi * cout * n);
        T* po = out.data() + bi * cout * n;
        const T* pb = b.data();
        for (int64_t co = 0; co < cout; ++co) {
            const T bias = pb[co];
            for (int64_t i = 0; i < n; ++i) po[co * n + i] += bias;
        }
    }
    detail::checked(out, "conv2d");

    if (tape)
        tape->record_result(out, {&x, &w, &b}, [&] {
            bool need_x = tape->tracked(x), need_w = tape->tracked(w), need_b = tape->tracked(b);
            return [x, w, bsz, cin, cout, h, wd, k, n, ck2, need_x, need_w, need_b,
                    bshape = b.shape()](const Tensor<T>& g) {
                std::vector<Tensor<T>> gs(3);
                std::vector<T> col(size_t(ck2 * n));
                if (need_w) gs[1] = Tensor<T>(w.shape());
                if (need_x) gs[0] = Tensor<T>(x.shape());
                std::vector<T> dcol(need_x ? size_t(ck2 * n) : 0);
                for (int64_t bi = 0; bi < bsz; ++bi) {
                    const T* pg = g.data() + bi * cout * n;
                    if (need_w || need_x) {
                        if (need_w) {
                            detail::im2col(x.data() + bi * cin * n, cin, h, wd, k, col.data());
                            // dW[cout, ck2] += g[cout, n] . col[ck2, n]^T
                            detail::gemm_nt(cout, ck2, n, pg, col.data(), gs[1].data(), true);
                        }
                        if (need_x) {
                            // dcol[ck2, n] = w[cout, ck2]^T . g[cout, n]
                            detail::gemm_tn(ck2, n, cout, w.data(), pg, dcol.data());
                            detail::col2im(dcol.data(), cin, h, wd, k, gs[0].data() + bi * cin * n);
                        }
                    }
                }
                if (need_b) {
                    gs[2] = Tensor<T>(bshape);
                    T* p = gs[2].data();
                    const T* pg = g.data();
                    for (int64_t bi = 0; bi < bsz; ++bi)
                        for (int64_t co = 0; co < cout; ++co) {
                            T acc = 0;
                            const int64_t base = (bi * cout + co) * n;
                            for (int64_t i = 0; i < n; ++i) acc += pg[base + i];
                            p[co] += acc;
                        }
                }
                return gs;
            };
        });
    return out;
}

// k x k mean pooling with stride k. Spatial dims must divide by k.
template <typename T>
Tensor<T> avg_pool2d(GradTape<T>* tape, const Tensor<T>& x, int64_t k) {
    require_rank(x, 4, "avg_pool2d");
    if (k < 1) throw ArgError("avg_pool2d k must be >= 1");
    const int64_t h = x.dim(2), w = x.dim(3);
    if (h % k != 0 || w % k != 0)
        throw ShapeError("avg_pool2d: " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by " + std::to_string(k));
    const int64_t bc = x.dim(0) * x.dim(1), oh = h / k, ow = w / k;
    Tensor<T> out(Shape{x.dim(0), x.dim(1), oh, ow});
    const T* px = x.data();
    T* po = out.data();
    const T inv = T(1) / T(k * k);
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t oy = 0; oy < oh; ++oy)
            for (int64_t ox = 0; ox < ow; ++ox) {
                T acc = 0;
                for (int64_t i = 0; i < k; ++i)
                    for (int64_t j = 0; j < k; ++j)
                        acc += px[(p * h + oy * k + i) * w + ox * k + j];
                po[(p * oh + oy) * ow + ox] = acc * inv;
            }
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bc, h, w, oh, ow, k, inv](const Tensor<T>& g) {
                Tensor<T> gx(shape);
                const T* pg = g.data();
                T* p = gx.data();
                for (int64_t pc = 0; pc < bc; ++pc)
                    for (int64_t oy = 0; oy < oh; ++oy)
                        for (int64_t ox = 0; ox < ow; ++ox) {
                            const T v = pg[(pc * oh + oy) * ow + ox] * inv;
                            for (int64_t i = 0; i < k; ++i)
                                for (int64_t j = 0; j < k; ++j)
                                    p[(pc * h + oy * k + i) * w + ox * k + j] = v;
                        }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// Nearest-neighbour (blockwise replication) upsampling by integer factor k.
template <typename T>
Tensor<T> upsample_nearest(GradTape<T>* tape, const Tensor<T>& x, int64_t k) {
    require_rank(x, 4, "upsample_nearest");
    if (k < 1) throw ArgError("upsample_nearest k must be >= 1");
    const int64_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t oh = h * k, ow = w * k;
    Tensor<T> out(Shape{x.dim(0), x.dim(1), oh, ow});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t oy = 0; oy < oh; ++oy) {
            const T* src = px + (p * h + oy / k) * w;
            T* dst = po + (p * oh + oy) * ow;
            for (int64_t ox = 0; ox < ow; ++ox) dst[ox] = src[ox / k];
        }
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bc, h, w, oh, ow, k](const Tensor<T>& g) {
                Tensor<T> gx(shape);
                const T* pg = g.data();
                T* p = gx.data();
                for (int64_t pc = 0; pc < bc; ++pc)
                    for (int64_t oy = 0; oy < oh; ++oy) {
                        const T* src = pg + (pc * oh + oy) * ow;
                        T* dst = p + (pc * h + oy / k) * w;
                        for (int64_t ox = 0; ox < ow; ++ox) dst[ox / k] += src[ox];
                    }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

namespace detail {

// Half-pixel source coordinates, clamped at the borders (align_corners=false).
struct LerpAxis {
    std::vector<int64_t> lo, hi;
    std::vector<double> w1;  // weight of hi
    LerpAxis(int64_t in, int64_t out) : lo(size_t(out)), hi(size_t(out)), w1(size_t(out)) {
        const double scale = double(in) / double(out);
        for (int64_t i = 0; i < out; ++i) {
            double src = (double(i) + 0.5) * scale - 0.5;
            if (src < 0) src = 0;
            int64_t l = int64_t(src);
            if (l > in - 1) l = in - 1;
            int64_t h = std::min(l + 1, in - 1);
            lo[size_t(i)] = l;
            hi[size_t(i)] = h;
            w1[size_t(i)] = src - double(l);
        }
    }
};

}  // namespace detail

template <typename T>
Tensor<T> resize_bilinear(GradTape<T>* tape, const Tensor<T>& x, int64_t oh, int64_t ow) {
    require_rank(x, 4, "resize_bilinear");
    if (oh < 1 || ow < 1) throw ArgError("resize_bilinear output dims must be >= 1");
    const int64_t bc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    detail::LerpAxis ay(h, oh), ax(w, ow);
    Tensor<T> out(Shape{x.dim(0), x.dim(1), oh, ow});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t oy = 0; oy < oh; ++oy) {
            const T* r0 = px + (p * h + ay.lo[size_t(oy)]) * w;
            const T* r1 = px + (p * h + ay.hi[size_t(oy)]) * w;
            const T fy = T(ay.w1[size_t(oy)]);
            T* dst = po + (p * oh + oy) * ow;
            for (int64_t ox = 0; ox < ow; ++ox) {
                const int64_t x0 = ax.lo[size_t(ox)], x1 = ax.hi[size_t(ox)];
                const T fx = T(ax.w1[size_t(ox)]);
                const T top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                const T bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                dst[ox] = top + (bot - top) * fy;
            }
        }
    detail::checked(out, "resize_bilinear");
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bc, h, w, oh, ow](const Tensor<T>& g) {
                detail::LerpAxis ay(h, oh), ax(w, ow);
                Tensor<T> gx(shape);
                const T* pg = g.data();
                T* p = gx.data();
                for (int64_t pc = 0; pc < bc; ++pc)
                    for (int64_t oy = 0; oy < oh; ++oy) {
                        const int64_t y0 = ay.lo[size_t(oy)], y1 = ay.hi[size_t(oy)];
                        const T fy = T(ay.w1[size_t(oy)]);
                        const T* src = pg + (pc * oh + oy) * ow;
                        for (int64_t ox = 0; ox < ow; ++ox) {
                            const int64_t x0 = ax.lo[size_t(ox)], x1 = ax.hi[size_t(ox)];
                            const T fx = T(ax.w1[size_t(ox)]);
                            const T gv = src[ox];
                            p[(pc * h + y0) * w + x0] += gv * (T(1) - fy) * (T(1) - fx);
                            p[(pc * h + y0) * w + x1] += gv * (T(1) - fy) * fx;
                            p[(pc * h + y1) * w + x0] += gv * fy * (T(1) - fx);
                            p[(pc * h + y1) * w + x1] += gv * fy * fx;
                        }
                    }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

namespace detail {

template <typename T>
void shuffle_kernel(const T* in, T* out, int64_t bsz, int64_t c_out, int64_t r, int64_t h,
                    int64_t w, bool inverse) {
    // forward: out[b, c, y*r+i, x*r+j] = in[b, c*r*r + i*r + j, y, x]
    const int64_t oh = h * r, ow = w * r;
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t c = 0; c < c_out; ++c)
            for (int64_t i = 0; i < r; ++i)
                for (int64_t j = 0; j < r; ++j) {
                    const int64_t ci = (c * r + i) * r + j;
                    for (int64_t y = 0; y < h; ++y) {
                        const int64_t src = ((b * c_out * r * r + ci) * h + y) * w;
                        const int64_t dst = ((b * c_out + c) * oh + y * r + i) * ow + j;
                        if (!inverse)
                            for (int64_t x = 0; x < w; ++x) out[dst + x * r] = in[src + x];
                        else
                            for (int64_t x = 0; x < w; ++x) out[src + x] = in[dst + x * r];
                    }
                }
}

}  // namespace detail

// Channel-to-space rearrangement: [B, C*r^2, H, W] -> [B, C, rH, rW].
template <typename T>
Tensor<T> pixel_shuffle(GradTape<T>* tape, const Tensor<T>& x, int64_t r) {
    require_rank(x, 4, "pixel_shuffle");
    if (r < 1) throw ArgError("pixel_shuffle r must be >= 1");
    if (x.dim(1) % (r * r) != 0)
        throw ShapeError("pixel_shuffle: " + std::to_string(x.dim(1)) +
                         " channels not divisible by r^2");
    const int64_t bsz = x.dim(0), c_out = x.dim(1) / (r * r), h = x.dim(2), w = x.dim(3);
    Tensor<T> out(Shape{bsz, c_out, h * r, w * r});
    detail::shuffle_kernel(x.data(), out.data(), bsz, c_out, r, h, w, false);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bsz, c_out, r, h, w](const Tensor<T>& g) {
                Tensor<T> gx(shape);
                detail::shuffle_kernel(g.data(), gx.data(), bsz, c_out, r, h, w, true);
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// Space-to-channel inverse of pixel_shuffle: [B, C, rH, rW] -> [B, C*r^2, H, W].
template <typename T>
Tensor<T> pixel_unshuffle(GradTape<T>* tape, const Tensor<T>& x, int64_t r) {
    require_rank(x, 4, "pixel_unshuffle");
    if (r < 1) throw ArgError("pixel_unshuffle r must be >= 1");
    if (x.dim(2) % r != 0 || x.dim(3) % r != 0)
        throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
    const int64_t bsz = x.dim(0), c = x.dim(1), h = x.dim(2) / r, w = x.dim(3) / r;
    Tensor<T> out(Shape{bsz, c * r * r, h, w});
    detail::shuffle_kernel(x.data(), out.data(), bsz, c, r, h, w, true);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [bsz, c, r, h, w](const Tensor<T>& g) {
                Tensor<T> gx(Shape{bsz, c, h * r, w * r});
                detail::shuffle_kernel(g.data(), gx.data(), bsz, c, r, h, w, false);
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// Patch extraction: [B, C, H, W] -> [B, C*k^2, H*W]; stride 1, zero padding,
// so every pixel owns one column and position is implicit in column order.
template <typename T>
Tensor<T> unfold(GradTape<T>* tape, const Tensor<T>& x, int64_t k) {
    require_rank(x, 4, "unfold");
    if (k < 1 || k % 2 == 0) throw ArgError("unfold kernel must be odd (center undefined otherwise)");
    const int64_t bsz = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int64_t n = h * w;
    Tensor<T> out(Shape{bsz, c * k * k, n});
    for (int64_t b = 0; b < bsz; ++b)
        detail::im2col(x.data() + b * c * n, c, h, w, k, out.data() + b * c * k * k * n);
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bsz, c, h, w, k, n](const Tensor<T>& g) {
                Tensor<T> gx(shape);
                for (int64_t b = 0; b < bsz; ++b)
                    detail::col2im(g.data() + b * c * k * k * n, c, h, w, k,
                                   gx.data() + b * c * n);
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

namespace detail {

// Overlap count per pixel for stride-1 same-padded k x k patches.
template <typename T>
Tensor<T> fold_counts(int64_t h, int64_t w, int64_t k) {
    Tensor<T> counts(Shape{h, w});
    const int64_t pad = (k - 1) / 2;
    for (int64_t y = 0; y < h; ++y) {
        int64_t cy = 0;
        for (int64_t ki = 0; ki < k; ++ki) {
            const int64_t sy = y - (ki - pad);
            if (sy >= 0 && sy < h) ++cy;
        }
        for (int64_t x = 0; x < w; ++x) {
            int64_t cx = 0;
            for (int64_t kj = 0; kj < k; ++kj) {
                const int64_t sx = x - (kj - pad);
                if (sx >= 0 && sx < w) ++cx;
            }
            counts.at(y, x) = T(cy * cx);
        }
    }
    return counts;
}

}  // namespace detail

// Overlap-add inverse of unfold, normalized by per-pixel overlap counts so
// fold(unfold(x)) == x.
template <typename T>
Tensor<T> fold(GradTape<T>* tape, const Tensor<T>& cols, int64_t k, int64_t h, int64_t w) {
    require_rank(cols, 3, "fold");
    if (k < 1 || k % 2 == 0) throw ArgError("fold kernel must be odd");
    const int64_t n = h * w;
    if (cols.dim(2) != n)
        throw ShapeError("fold: got " + std::to_string(cols.dim(2)) + " columns for " +
                         std::to_string(h) + "x" + std::to_string(w));
    if (cols.dim(1) % (k * k) != 0) throw ShapeError("fold: channel dim not divisible by k^2");
    const int64_t bsz = cols.dim(0), c = cols.dim(1) / (k * k);

    Tensor<T> counts = detail::fold_counts<T>(h, w, k);
    Tensor<T> out(Shape{bsz, c, h, w});
    for (int64_t b = 0; b < bsz; ++b)
        detail::col2im(cols.data() + b * c * k * k * n, c, h, w, k, out.data() + b * c * n);
    T* po = out.data();
    const T* pc = counts.data();
    for (int64_t b = 0; b < bsz; ++b)
        for (int64_t ch = 0; ch < c; ++ch)
            for (int64_t i = 0; i < n; ++i) po[(b * c + ch) * n + i] /= pc[i];

    if (tape)
        tape->record_result(out, {&cols}, [&] {
            return [counts, shape = cols.shape(), bsz, c, h, w, k, n](const Tensor<T>& g) {
                // adjoint of (overlap-add then divide) = divide then unfold
                Tensor<T> scaled(g.shape());
                const T* pg = g.data();
                const T* pc2 = counts.data();
                T* ps = scaled.data();
                for (int64_t b = 0; b < bsz; ++b)
                    for (int64_t ch = 0; ch < c; ++ch)
                        for (int64_t i = 0; i < n; ++i) {
                            const int64_t off = (b * c + ch) * n + i;
                            ps[off] = pg[off] / pc2[i];
                        }
                Tensor<T> gc(shape);
                for (int64_t b = 0; b < bsz; ++b)
                    detail::im2col(scaled.data() + b * c * n, c, h, w, k,
                                   gc.data() + b * c * k * k * n);
                return std::vector<Tensor<T>>{gc};
            };
        });
    return out;
}

// Reflection padding (mirror without repeating the edge sample). Pads must be
// smaller than the corresponding input extent.
template <typename T>
Tensor<T> reflect_pad2d(GradTape<T>* tape, const Tensor<T>& x, int64_t top, int64_t bottom,
                        int64_t left, int64_t right) {
    require_rank(x, 4, "reflect_pad2d");
    const int64_t h = x.dim(2), w = x.dim(3);
    if (top >= h || bottom >= h || left >= w || right >= w || top < 0 || bottom < 0 || left < 0 ||
        right < 0)
        throw ShapeError("reflect_pad2d: pad too large for input");
    const int64_t bc = x.dim(0) * x.dim(1), oh = h + top + bottom, ow = w + left + right;
    auto mirror = [](int64_t i, int64_t n) {
        if (i < 0) return -i;
        if (i >= n) return 2 * n - 2 - i;
        return i;
    };
    Tensor<T> out(Shape{x.dim(0), x.dim(1), oh, ow});
    const T* px = x.data();
    T* po = out.data();
    for (int64_t p = 0; p < bc; ++p)
        for (int64_t oy = 0; oy < oh; ++oy) {
            const int64_t sy = mirror(oy - top, h);
            const T* src = px + (p * h + sy) * w;
            T* dst = po + (p * oh + oy) * ow;
            for (int64_t ox = 0; ox < ow; ++ox) dst[ox] = src[mirror(ox - left, w)];
        }
    if (tape)
        tape->record_result(out, {&x}, [&] {
            return [shape = x.shape(), bc, h, w, oh, ow, top, left, mirror](const Tensor<T>& g) {
                Tensor<T> gx(shape);
                const T* pg = g.data();
                T* p = gx.data();
                for (int64_t pc = 0; pc < bc; ++pc)
                    for (int64_t oy = 0; oy < oh; ++oy) {
                        const int64_t sy = mirror(oy - top, h);
                        const T* src = pg + (pc * oh + oy) * ow;
                        T* dst = p + (pc * h + sy) * w;
                        for (int64_t ox = 0; ox < ow; ++ox) dst[mirror(ox - left, w)] += src[ox];
                    }
                return std::vector<Tensor<T>>{gx};
            };
        });
    return out;
}

// Top-left crop of the spatial dims.
template <typename T>
Tensor<T> crop2d(GradTape<T>* tape, const Tensor<T>& x, int64_t h, int64_t w) {
    Tensor<T> tmp = slice(tape, x, 2, 0, h);
    return slice(tape, tmp, 3, 0, w);
}

}  // namespace esrt
