#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

// Minimal dense-array engine with reverse-mode gradients: only the
// operations the auto-encoder topologies need, on row-major tensors
// shaped {batch, channels, rows, cols}.
//
// Gradient protocol: ops called with a Tape record a backward step and
// allocate the output's grad buffer. Backward steps accumulate into an
// input's grad only when that input already has one (leaf parameters get
// theirs from ensure_grad/zero_grad; intermediates get theirs by being
// some op's output). Tape::backward seeds the scalar loss grad with 1 and
// replays the steps in reverse.

namespace binkit::nn {

template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> v;
    std::vector<T> g;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(numel(shape), T(0)) {}

    static size_t numel(const std::vector<int>& s) {
        size_t n = 1;
        for (const int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    size_t size() const { return v.size(); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    void ensure_grad() {
        if (g.empty()) g.assign(v.size(), T(0));
    }
    void zero_grad() { g.assign(v.size(), T(0)); }
    bool has_grad() const { return !g.empty(); }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape) {
    return std::make_shared<Tensor<T>>(std::move(shape));
}

template <typename T>
class Tape {
  public:
    void record(std::function<void()> step) { steps_.push_back(std::move(step)); }

    /// Seeds d(loss)/d(loss) = 1 and replays recorded steps in reverse.
    void backward(Tensor<T>& loss) {
        if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
        loss.ensure_grad();
        loss.g[0] += T(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    void clear() { steps_.clear(); }
    size_t step_count() const { return steps_.size(); }

  private:
    std::vector<std::function<void()>> steps_;
};

/// Arg-max positions recorded by 2x2 pooling: one region-local flat index
/// (0..3, row-major) per pooled element. Shape matches the pooled output.
struct Switches {
    std::vector<int> shape;
    std::vector<uint8_t> idx;
};

enum class Padding { same, valid };

namespace detail {

inline void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// First output index whose source index k*stride + offset is >= 0.
inline int out_lo(int offset, int stride) {
    return offset >= 0 ? 0 : ceil_div(-offset, stride);
}
// One past the last output index whose source stays < limit.
inline int out_hi(int offset, int stride, int limit, int count) {
    if (limit - 1 - offset < 0) return 0;
    return std::min(count, (limit - 1 - offset) / stride + 1);
}

template <typename T>
TensorPtr<T> clone_values(const TensorPtr<T>& x) {
    auto y = std::make_shared<Tensor<T>>();
    y->shape = x->shape;
    y->v = x->v;
    return y;
}

}  // namespace detail

/// 2-D cross-correlation plus bias. x: {N,Ci,H,W}, w: {Co,Ci,k,k} (odd k),
/// b: {Co}. Same-padding output is {N,Co,ceil(H/s),ceil(W/s)} with zero
/// padding split floor-top / rest-bottom.
template <typename T>
TensorPtr<T> conv2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                    const TensorPtr<T>& b, int stride, Padding pad) {
    using detail::require;
    require(x->shape.size() == 4, "conv2d: input must be 4-D");
    require(w->shape.size() == 4, "conv2d: kernel must be 4-D");
    const int N = x->dim(0), Ci = x->dim(1), H = x->dim(2), W = x->dim(3);
    const int Co = w->dim(0), kh = w->dim(2), kw = w->dim(3);
    require(w->dim(1) == Ci, "conv2d: channel counts disagree");
    require(kh == kw && kh % 2 == 1, "conv2d: kernel side must be odd and square");
    require(b->shape.size() == 1 && b->dim(0) == Co, "conv2d: bias must be {Co}");
    require(stride >= 1, "conv2d: stride must be positive");

    int Ho, Wo, pt, pl;
    if (pad == Padding::same) {
        Ho = detail::ceil_div(H, stride);
        Wo = detail::ceil_div(W, stride);
        pt = std::max((Ho - 1) * stride + kh - H, 0) / 2;
        pl = std::max((Wo - 1) * stride + kw - W, 0) / 2;
    } else {
        require(H >= kh && W >= kw, "conv2d: input smaller than kernel under valid padding");
        Ho = (H - kh) / stride + 1;
        Wo = (W - kw) / stride + 1;
        pt = pl = 0;
    }

    auto y = make_tensor<T>({N, Co, Ho, Wo});
    const T* xv = x->v.data();
    const T* wv = w->v.data();
    T* yv = y->v.data();
    const size_t x_plane = static_cast<size_t>(H) * W;
    const size_t y_plane = static_cast<size_t>(Ho) * Wo;

    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            T* yp = yv + (static_cast<size_t>(n) * Co + co) * y_plane;
            std::fill(yp, yp + y_plane, b->v[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const T* xp = xv + (static_cast<size_t>(n) * Ci + ci) * x_plane;
                const T* wp = wv + (static_cast<size_t>(co) * Ci + ci) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const int oh_lo = detail::out_lo(ky - pt, stride);
                    const int oh_hi = detail::out_hi(ky - pt, stride, H, Ho);
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wval = wp[ky * kw + kx];
                        const int off = kx - pl;
                        const int ow_lo = detail::out_lo(off, stride);
                        const int ow_hi = detail::out_hi(off, stride, W, Wo);
                        for (int oh = oh_lo; oh < oh_hi; ++oh) {
                            const T* xrow = xp + static_cast<size_t>(oh * stride + ky - pt) * W;
                            T* yrow = yp + static_cast<size_t>(oh) * Wo;
                            if (stride == 1) {
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    yrow[ow] += wval * xrow[ow + off];
                            } else {
                                for (int ow = ow_lo; ow < ow_hi; ++ow)
                                    yrow[ow] += wval * xrow[ow * stride + off];
                            }
                        }
                    }
                }
            }
        }
    }

    if (tape) {
        y->ensure_grad();
        tape->record([x, w, b, y, N, Ci, Co, H, W, Ho, Wo, kh, kw, stride, pt, pl] {
            const T* dyv = y->g.data();
            const T* xv2 = x->v.data();
            const T* wv2 = w->v.data();
            const size_t x_pl = static_cast<size_t>(H) * W;
            const size_t y_pl = static_cast<size_t>(Ho) * Wo;
            const bool want_dx = x->has_grad();
            if (b->has_grad()) {
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const T* dyp = dyv + (static_cast<size_t>(n) * Co + co) * y_pl;
                        T acc = T(0);
                        for (size_t i = 0; i < y_pl; ++i) acc += dyp[i];
                        b->g[co] += acc;
                    }
            }
            for (int n = 0; n < N; ++n) {
                for (int co = 0; co < Co; ++co) {
                    const T* dyp = dyv + (static_cast<size_t>(n) * Co + co) * y_pl;
                    for (int ci = 0; ci < Ci; ++ci) {
                        const T* xp = xv2 + (static_cast<size_t>(n) * Ci + ci) * x_pl;
                        T* dxp = want_dx ? x->g.data() + (static_cast<size_t>(n) * Ci + ci) * x_pl
                                         : nullptr;
                        const T* wp = wv2 + (static_cast<size_t>(co) * Ci + ci) * kh * kw;
                        T* dwp = w->has_grad()
                                     ? w->g.data() + (static_cast<size_t>(co) * Ci + ci) * kh * kw
                                     : nullptr;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int oh_lo = detail::out_lo(ky - pt, stride);
                            const int oh_hi = detail::out_hi(ky - pt, stride, H, Ho);
                            for (int kx = 0; kx < kw; ++kx) {
                                const T wval = wp[ky * kw + kx];
                                const int off = kx - pl;
                                const int ow_lo = detail::out_lo(off, stride);
                                const int ow_hi = detail::out_hi(off, stride, W, Wo);
                                T wacc = T(0);
                                for (int oh = oh_lo; oh < oh_hi; ++oh) {
                                    const size_t xbase = static_cast<size_t>(oh * stride + ky - pt) * W;
                                    const T* dyrow = dyp + static_cast<size_t>(oh) * Wo;
                                    const T* xrow = xp + xbase;
                                    if (dwp) {
                                        if (stride == 1) {
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                wacc += dyrow[ow] * xrow[ow + off];
                                        } else {
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                wacc += dyrow[ow] * xrow[ow * stride + off];
                                        }
                                    }
                                    if (want_dx) {
                                        T* dxrow = dxp + xbase;
                                        if (stride == 1) {
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                dxrow[ow + off] += wval * dyrow[ow];
                                        } else {
                                            for (int ow = ow_lo; ow < ow_hi; ++ow)
                                                dxrow[ow * stride + off] += wval * dyrow[ow];
                                        }
                                    }
                                }
                                if (dwp) dwp[ky * kw + kx] += wacc;
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

/// Transposed convolution: exact adjoint of same-padded conv2d with the
/// same kernel and stride. x: {N,Ci,H,W}, w: {Ci,Co,k,k} (odd k, k > s),
/// output {N,Co,H*s,W*s}.
template <typename T>
TensorPtr<T> deconv2d(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& w,
                      const TensorPtr<T>& b, int stride) {
    using detail::require;
    require(x->shape.size() == 4, "deconv2d: input must be 4-D");
    require(w->shape.size() == 4, "deconv2d: kernel must be 4-D");
    const int N = x->dim(0), Ci = x->dim(1), H = x->dim(2), W = x->dim(3);
    const int Co = w->dim(1), kh = w->dim(2), kw = w->dim(3);
    require(w->dim(0) == Ci, "deconv2d: channel counts disagree");
    require(kh == kw && kh % 2 == 1, "deconv2d: kernel side must be odd and square");
    require(b->shape.size() == 1 && b->dim(0) == Co, "deconv2d: bias must be {Co}");
    require(stride >= 1 && kh >= stride, "deconv2d: kernel side must be >= stride");

    const int Ho = H * stride, Wo = W * stride;
    const int pt = (kh - stride) / 2;
    const int pl = (kw - stride) / 2;

    auto y = make_tensor<T>({N, Co, Ho, Wo});
    const T* xv = x->v.data();
    const T* wv = w->v.data();
    T* yv = y->v.data();
    const size_t x_plane = static_cast<size_t>(H) * W;
    const size_t y_plane = static_cast<size_t>(Ho) * Wo;

    for (int n = 0; n < N; ++n) {
        for (int co = 0; co < Co; ++co) {
            T* yp = yv + (static_cast<size_t>(n) * Co + co) * y_plane;
            std::fill(yp, yp + y_plane, b->v[co]);
            for (int ci = 0; ci < Ci; ++ci) {
                const T* xp = xv + (static_cast<size_t>(n) * Ci + ci) * x_plane;
                const T* wp = wv + (static_cast<size_t>(ci) * Co + co) * kh * kw;
                for (int ky = 0; ky < kh; ++ky) {
                    const int ih_lo = detail::out_lo(ky - pt, stride);
                    const int ih_hi = detail::out_hi(ky - pt, stride, Ho, H);
                    for (int kx = 0; kx < kw; ++kx) {
                        const T wval = wp[ky * kw + kx];
                        const int off = kx - pl;
                        const int iw_lo = detail::out_lo(off, stride);
                        const int iw_hi = detail::out_hi(off, stride, Wo, W);
                        for (int ih = ih_lo; ih < ih_hi; ++ih) {
                            const T* xrow = xp + static_cast<size_t>(ih) * W;
                            T* yrow = yp + static_cast<size_t>(ih * stride + ky - pt) * Wo;
                            if (stride == 1) {
                                for (int iw = iw_lo; iw < iw_hi; ++iw)
                                    yrow[iw + off] += wval * xrow[iw];
                            } else {
                                for (int iw = iw_lo; iw < iw_hi; ++iw)
                                    yrow[iw * stride + off] += wval * xrow[iw];
                            }
                        }
                    }
                }
            }
        }
    }

    if (tape) {
        y->ensure_grad();
        tape->record([x, w, b, y, N, Ci, Co, H, W, Ho, Wo, kh, kw, stride, pt, pl] {
            const T* dyv = y->g.data();
            const T* xv2 = x->v.data();
            const T* wv2 = w->v.data();
            const size_t x_pl = static_cast<size_t>(H) * W;
            const size_t y_pl = static_cast<size_t>(Ho) * Wo;
            const bool want_dx = x->has_grad();
            if (b->has_grad()) {
                for (int n = 0; n < N; ++n)
                    for (int co = 0; co < Co; ++co) {
                        const T* dyp = dyv + (static_cast<size_t>(n) * Co + co) * y_pl;
                        T acc = T(0);
                        for (size_t i = 0; i < y_pl; ++i) acc += dyp[i];
                        b->g[co] += acc;
                    }
            }
            for (int n = 0; n < N; ++n) {
                for (int ci = 0; ci < Ci; ++ci) {
                    const T* xp = xv2 + (static_cast<size_t>(n) * Ci + ci) * x_pl;
                    T* dxp = want_dx ? x->g.data() + (static_cast<size_t>(n) * Ci + ci) * x_pl
                                     : nullptr;
                    for (int co = 0; co < Co; ++co) {
                        const T* dyp = dyv + (static_cast<size_t>(n) * Co + co) * y_pl;
                        const T* wp = wv2 + (static_cast<size_t>(ci) * Co + co) * kh * kw;
                        T* dwp = w->has_grad()
                                     ? w->g.data() + (static_cast<size_t>(ci) * Co + co) * kh * kw
                                     : nullptr;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int ih_lo = detail::out_lo(ky - pt, stride);
                            const int ih_hi = detail::out_hi(ky - pt, stride, Ho, H);
                            for (int kx = 0; kx < kw; ++kx) {
                                const T wval = wp[ky * kw + kx];
                                const int off = kx - pl;
                                const int iw_lo = detail::out_lo(off, stride);
                                const int iw_hi = detail::out_hi(off, stride, Wo, W);
                                T wacc = T(0);
                                for (int ih = ih_lo; ih < ih_hi; ++ih) {
                                    const T* xrow = xp + static_cast<size_t>(ih) * W;
                                    const T* dyrow = dyp + static_cast<size_t>(ih * stride + ky - pt) * Wo;
                                    T* dxrow = want_dx ? dxp + static_cast<size_t>(ih) * W : nullptr;
                                    if (stride == 1) {
                                        for (int iw = iw_lo; iw < iw_hi; ++iw) {
                                            const T dyval = dyrow[iw + off];
                                            if (dwp) wacc += dyval * xrow[iw];
                                            if (dxrow) dxrow[iw] += wval * dyval;
                                        }
                                    } else {
                                        for (int iw = iw_lo; iw < iw_hi; ++iw) {
                                            const T dyval = dyrow[iw * stride + off];
                                            if (dwp) wacc += dyval * xrow[iw];
                                            if (dxrow) dxrow[iw] += wval * dyval;
                                        }
                                    }
                                }
                                if (dwp) dwp[ky * kw + kx] += wacc;
                            }
                        }
                    }
                }
            }
        });
    }
    return y;
}

/// 2x2 non-overlapping max pooling; switches record the winning region
/// cell (first occurrence on ties). Requires even spatial dims.
template <typename T>
std::pair<TensorPtr<T>, Switches> maxpool2(Tape<T>* tape, const TensorPtr<T>& x) {
    using detail::require;
    require(x->shape.size() == 4, "maxpool2: input must be 4-D");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    require(H % 2 == 0 && W % 2 == 0, "maxpool2: spatial dims must be even");

    const int Ho = H / 2, Wo = W / 2;
    auto y = make_tensor<T>({N, C, Ho, Wo});
    Switches sw;
    sw.shape = y->shape;
    sw.idx.resize(y->size());

    const T* xv = x->v.data();
    for (int nc = 0; nc < N * C; ++nc) {
        const T* xp = xv + static_cast<size_t>(nc) * H * W;
        T* yp = y->v.data() + static_cast<size_t>(nc) * Ho * Wo;
        uint8_t* sp = sw.idx.data() + static_cast<size_t>(nc) * Ho * Wo;
        for (int oh = 0; oh < Ho; ++oh) {
            for (int ow = 0; ow < Wo; ++ow) {
                const T* cell = xp + static_cast<size_t>(2 * oh) * W + 2 * ow;
                const T cand[4] = {cell[0], cell[1], cell[W], cell[W + 1]};
                int best = 0;
                for (int i = 1; i < 4; ++i)
                    if (cand[i] > cand[best]) best = i;
                yp[static_cast<size_t>(oh) * Wo + ow] = cand[best];
                sp[static_cast<size_t>(oh) * Wo + ow] = static_cast<uint8_t>(best);
            }
        }
    }

    if (tape) {
        y->ensure_grad();
        const Switches sw_copy = sw;
        tape->record([x, y, sw_copy, N, C, H, W, Ho, Wo] {
            if (!x->has_grad()) return;
            for (int nc = 0; nc < N * C; ++nc) {
                T* dxp = x->g.data() + static_cast<size_t>(nc) * H * W;
                const T* dyp = y->g.data() + static_cast<size_t>(nc) * Ho * Wo;
                const uint8_t* sp = sw_copy.idx.data() + static_cast<size_t>(nc) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh)
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int s = sp[static_cast<size_t>(oh) * Wo + ow];
                        const size_t base = static_cast<size_t>(2 * oh + s / 2) * W + 2 * ow + s % 2;
                        dxp[base] += dyp[static_cast<size_t>(oh) * Wo + ow];
                    }
            }
        });
    }
    return {y, sw};
}

/// Inverse of maxpool2: doubles spatial dims, writing each value at its
/// recorded switch position and zeros elsewhere.
template <typename T>
TensorPtr<T> unpool2(Tape<T>* tape, const TensorPtr<T>& x, const Switches& sw) {
    using detail::require;
    require(x->shape.size() == 4, "unpool2: input must be 4-D");
    require(sw.shape == x->shape, "unpool2: switch shape does not match input");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    const int Ho = H * 2, Wo = W * 2;

    auto y = make_tensor<T>({N, C, Ho, Wo});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* xp = x->v.data() + static_cast<size_t>(nc) * H * W;
        T* yp = y->v.data() + static_cast<size_t>(nc) * Ho * Wo;
        const uint8_t* sp = sw.idx.data() + static_cast<size_t>(nc) * H * W;
        for (int ih = 0; ih < H; ++ih)
            for (int iw = 0; iw < W; ++iw) {
                const int s = sp[static_cast<size_t>(ih) * W + iw];
                yp[static_cast<size_t>(2 * ih + s / 2) * Wo + 2 * iw + s % 2] =
                    xp[static_cast<size_t>(ih) * W + iw];
            }
    }

    if (tape) {
        y->ensure_grad();
        const Switches sw_copy = sw;
        tape->record([x, y, sw_copy, N, C, H, W, Wo] {
            if (!x->has_grad()) return;
            for (int nc = 0; nc < N * C; ++nc) {
                T* dxp = x->g.data() + static_cast<size_t>(nc) * H * W;
                const T* dyp = y->g.data() + static_cast<size_t>(nc) * (2 * H) * Wo;
                const uint8_t* sp = sw_copy.idx.data() + static_cast<size_t>(nc) * H * W;
                for (int ih = 0; ih < H; ++ih)
                    for (int iw = 0; iw < W; ++iw) {
                        const int s = sp[static_cast<size_t>(ih) * W + iw];
                        dxp[static_cast<size_t>(ih) * W + iw] +=
                            dyp[static_cast<size_t>(2 * ih + s / 2) * Wo + 2 * iw + s % 2];
                    }
            }
        });
    }
    return y;
}

/// Nearest-neighbor 2x upsampling; backward sums over each 2x2 block.
template <typename T>
TensorPtr<T> upsample2(Tape<T>* tape, const TensorPtr<T>& x) {
    detail::require(x->shape.size() == 4, "upsample2: input must be 4-D");
    const int N = x->dim(0), C = x->dim(1), H = x->dim(2), W = x->dim(3);
    const int Ho = H * 2, Wo = W * 2;

    auto y = make_tensor<T>({N, C, Ho, Wo});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* xp = x->v.data() + static_cast<size_t>(nc) * H * W;
        T* yp = y->v.data() + static_cast<size_t>(nc) * Ho * Wo;
        for (int ih = 0; ih < H; ++ih)
            for (int iw = 0; iw < W; ++iw) {
                const T val = xp[static_cast<size_t>(ih) * W + iw];
                T* cell = yp + static_cast<size_t>(2 * ih) * Wo + 2 * iw;
                cell[0] = cell[1] = cell[Wo] = cell[Wo + 1] = val;
            }
    }

    if (tape) {
        y->ensure_grad();
        tape->record([x, y, N, C, H, W, Wo] {
            if (!x->has_grad()) return;
            for (int nc = 0; nc < N * C; ++nc) {
                T* dxp = x->g.data() + static_cast<size_t>(nc) * H * W;
                const T* dyp = y->g.data() + static_cast<size_t>(nc) * (2 * H) * Wo;
                for (int ih = 0; ih < H; ++ih)
                    for (int iw = 0; iw < W; ++iw) {
                        const T* cell = dyp + static_cast<size_t>(2 * ih) * Wo + 2 * iw;
                        dxp[static_cast<size_t>(ih) * W + iw] +=
                            cell[0] + cell[1] + cell[Wo] + cell[Wo + 1];
                    }
            }
        });
    }
    return y;
}

/// Logistic activation, clamped one ULP inside (0,1) so downstream strict
/// comparisons stay well defined even under float saturation.
template <typename T>
TensorPtr<T> sigmoid(Tape<T>* tape, const TensorPtr<T>& x) {
    auto y = detail::clone_values(x);
    const T lo = std::numeric_limits<T>::min();
    const T hi = std::nextafter(T(1), T(0));
    for (auto& v : y->v) {
        const T s = T(1) / (T(1) + std::exp(-v));
        v = std::clamp(s, lo, hi);
    }
    if (tape) {
        y->ensure_grad();
        tape->record([x, y] {
            if (!x->has_grad()) return;
            for (size_t i = 0; i < x->size(); ++i) {
                const T s = y->v[i];
                x->g[i] += y->g[i] * s * (T(1) - s);
            }
        });
    }
    return y;
}

template <typename T>
TensorPtr<T> relu(Tape<T>* tape, const TensorPtr<T>& x) {
    auto y = detail::clone_values(x);
    for (auto& v : y->v) v = v > T(0) ? v : T(0);
    if (tape) {
        y->ensure_grad();
        tape->record([x, y] {
            if (!x->has_grad()) return;
            for (size_t i = 0; i < x->size(); ++i)
                if (x->v[i] > T(0)) x->g[i] += y->g[i];
        });
    }
    return y;
}

template <typename T>
TensorPtr<T> add(Tape<T>* tape, const TensorPtr<T>& x, const TensorPtr<T>& y) {
    detail::require(x->shape == y->shape, "add: shape mismatch");
    auto z = detail::clone_values(x);
    for (size_t i = 0; i < z->size(); ++i) z->v[i] += y->v[i];
    if (tape) {
        z->ensure_grad();
        tape->record([x, y, z] {
            if (x->has_grad())
                for (size_t i = 0; i < x->size(); ++i) x->g[i] += z->g[i];
            if (y->has_grad())
                for (size_t i = 0; i < y->size(); ++i) y->g[i] += z->g[i];
        });
    }
    return z;
}

/// Differentiable relaxation of 1 - F-measure over soft counts:
/// TP = sum p*y, FP = sum p*(1-y), FN = sum (1-p)*y,
/// loss = 1 - 2TP / (2TP + FP + FN + eps). Ground truth must be binary.
template <typename T>
TensorPtr<T> soft_fmeasure_loss(Tape<T>* tape, const TensorPtr<T>& pred, const TensorPtr<T>& gt) {
    detail::require(pred->shape == gt->shape, "soft_fmeasure_loss: shape mismatch");
    constexpr double kEps = 1e-7;
    double tp = 0.0, fp = 0.0, fn = 0.0;
    for (size_t i = 0; i < pred->size(); ++i) {
        const double p = static_cast<double>(pred->v[i]);
        const double y = static_cast<double>(gt->v[i]);
        if (y != 0.0 && y != 1.0)
            throw std::invalid_argument("soft_fmeasure_loss: ground truth must be binary");
        tp += p * y;
        fp += p * (1.0 - y);
        fn += (1.0 - p) * y;
    }
    const double numer = 2.0 * tp;
    const double denom = 2.0 * tp + fp + fn + kEps;

    auto loss = make_tensor<T>({1});
    loss->v[0] = static_cast<T>(1.0 - numer / denom);
    if (tape) {
        loss->ensure_grad();
        tape->record([pred, gt, loss, numer, denom] {
            if (!pred->has_grad()) return;
            const double gout = static_cast<double>(loss->g[0]);
            const double inv_d2 = 1.0 / (denom * denom);
            for (size_t i = 0; i < pred->size(); ++i) {
                const double y = static_cast<double>(gt->v[i]);
                // d(loss)/dp = -(2y*D - N) / D^2, using dD/dp = 1.
                pred->g[i] += static_cast<T>(gout * (numer - 2.0 * y * denom) * inv_d2);
            }
        });
    }
    return loss;
}

}  // namespace binkit::nn
