/*
#include <type_traits>
 * Copyright 2026 The bihalf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/tensor.hpp"

namespace bihalf {

// ---------------------------------------------------------------------------
// Dense affine: y = scale * (x . W), x [N x I], W [I x O].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> affine_forward(const TensorT<T>& x, const TensorT<T>& w, T scale) {
    if (x.shape.size() != 2 || w.shape.size() != 2) throw DimensionError("affine: expects 2-D x and W");
    if (x.shape[1] != w.shape[0]) {
        throw DimensionError("affine: inner dimensions disagree " + x.shape_str() + " vs " + w.shape_str());
    }
    if (!(scale > T(0))) throw InputError("affine: scale must be positive");
    const std::size_t n = x.shape[0], in = x.shape[1], out = w.shape[1];
    TensorT<T> y({n, out});
    for (std::size_t r = 0; r < n; ++r) {
        const T* xr = x.data.data() + r * in;
        T* yr = y.data.data() + r * out;
        for (std::size_t i = 0; i < in; ++i) {
            const T xv = xr[i];
            const T* wrow = w.data.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wrow[o];
        }
        for (std::size_t o = 0; o < out; ++o) yr[o] *= scale;
    }
    return y;
}

template <typename T>
void affine_backward(const TensorT<T>& x, const TensorT<T>& w, T scale, const TensorT<T>& gy,
                     TensorT<T>* gx, TensorT<T>* gw) {
    const std::size_t n = x.shape[0], in = x.shape[1], out = w.shape[1];
    if (gy.shape != std::vector<std::size_t>{n, out}) throw DimensionError("affine backward: bad gy shape");
    if (gx) {
        *gx = TensorT<T>({n, in});
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t i = 0; i < in; ++i) {
                T acc = 0;
                const T* wrow = w.data.data() + i * out;
                const T* gr = gy.data.data() + r * out;
                for (std::size_t o = 0; o < out; ++o) acc += gr[o] * wrow[o];
                gx->data[r * in + i] = scale * acc;
            }
        }
    }
    if (gw) {
        *gw = TensorT<T>({in, out});
        for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.data.data() + r * in;
            const T* gr = gy.data.data() + r * out;
            for (std::size_t i = 0; i < in; ++i) {
                T* grow = gw->data.data() + i * out;
                const T xv = scale * xr[i];
                for (std::size_t o = 0; o < out; ++o) grow[o] += xv * gr[o];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Row-major linear used by the layers: weights stored [O x I] (one fan-in
// slice per output unit, contiguous, which is also the per-filter
// quantization granularity).
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> linear_forward(const TensorT<T>& x, const TensorT<T>& w_rows, T scale) {
    if (x.shape.size() != 2 || w_rows.shape.size() != 2) throw DimensionError("linear: expects 2-D x and W");
    if (x.shape[1] != w_rows.shape[1]) {
        throw DimensionError("linear: fan-in disagrees " + x.shape_str() + " vs " + w_rows.shape_str());
    }
    const std::size_t n = x.shape[0], in = x.shape[1], out = w_rows.shape[0];
    TensorT<T> y({n, out});
    for (std::size_t r = 0; r < n; ++r) {
        const T* xr = x.data.data() + r * in;
        T* yr = y.data.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
            const T* wrow = w_rows.data.data() + o * in;
            T acc = 0;
            for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wrow[i];
            yr[o] = scale * acc;
        }
    }
    return y;
}

template <typename T>
void linear_backward(const TensorT<T>& x, const TensorT<T>& w_rows, T scale, const TensorT<T>& gy,
                     TensorT<T>* gx, TensorT<T>* gw) {
    const std::size_t n = x.shape[0], in = x.shape[1], out = w_rows.shape[0];
    if (gy.shape != std::vector<std::size_t>{n, out}) throw DimensionError("linear backward: bad gy shape");
    if (gx) {
        *gx = TensorT<T>({n, in});
        for (std::size_t r = 0; r < n; ++r) {
            const T* gr = gy.data.data() + r * out;
            T* gxr = gx->data.data() + r * in;
            for (std::size_t o = 0; o < out; ++o) {
                const T g = scale * gr[o];
                const T* wrow = w_rows.data.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) gxr[i] += g * wrow[i];
            }
        }
    }
    if (gw) {
        *gw = TensorT<T>({out, in});
        for (std::size_t r = 0; r < n; ++r) {
            const T* xr = x.data.data() + r * in;
            const T* gr = gy.data.data() + r * out;
            for (std::size_t o = 0; o < out; ++o) {
                const T g = scale * gr[o];
                T* grow = gw->data.data() + o * in;
                for (std::size_t i = 0; i < in; ++i) grow[i] += g * xr[i];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 2-D cross-correlation: x [N x C x H x W], K [F x C x k x k].
// Output extent per axis: floor((H + 2*pad - k) / stride) + 1.
// ---------------------------------------------------------------------------

inline std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
    if (k > in + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
    return (in + 2 * pad - k) / stride + 1;
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& kern, T scale, std::size_t stride,
                          std::size_t pad) {
    if (x.shape.size() != 4 || kern.shape.size() != 4) throw DimensionError("conv2d: expects 4-D x and K");
    if (stride < 1) throw InputError("conv2d: stride must be >= 1");
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t f = kern.shape[0], kc = kern.shape[1], kh = kern.shape[2], kw = kern.shape[3];
    if (kc != c) throw DimensionError("conv2d: channel count disagrees");
    const std::size_t oh = conv_extent(h, kh, stride, pad);
    const std::size_t ow = conv_extent(w, kw, stride, pad);

    TensorT<T> y({n, f, oh, ow});
    const std::int64_t ih_lim = static_cast<std::int64_t>(h), iw_lim = static_cast<std::int64_t>(w);
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t fi = 0; fi < f; ++fi) {
            T* yplane = y.data.data() + (ni * f + fi) * oh * ow;
            for (std::size_t ci = 0; ci < c; ++ci) {
                const T* xplane = x.data.data() + (ni * c + ci) * h * w;
                const T* kplane = kern.data.data() + (fi * c + ci) * kh * kw;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        T acc = 0;
                        for (std::size_t u = 0; u < kh; ++u) {
                            const std::int64_t iy =
                                static_cast<std::int64_t>(oy * stride + u) - static_cast<std::int64_t>(pad);
                            if (iy < 0 || iy >= ih_lim) continue;
                            for (std::size_t v = 0; v < kw; ++v) {
                                const std::int64_t ix =
                                    static_cast<std::int64_t>(ox * stride + v) - static_cast<std::int64_t>(pad);
                                if (ix < 0 || ix >= iw_lim) continue;
                                acc += xplane[iy * iw_lim + ix] * kplane[u * kw + v];
                            }
                        }
                        yplane[oy * ow + ox] += acc;
                    }
                }
            }
            for (std::size_t p = 0; p < oh * ow; ++p) yplane[p] *= scale;
        }
    }
    return y;
}

template <typename T>
void conv2d_backward(const TensorT<T>& x, const TensorT<T>& kern, T scale, std::size_t stride, std::size_t pad,
                     const TensorT<T>& gy, TensorT<T>* gx, TensorT<T>* gk) {
    const std::size_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    const std::size_t f = kern.shape[0], kh = kern.shape[2], kw = kern.shape[3];
    const std::size_t oh = gy.shape[2], ow = gy.shape[3];
    if (gy.shape[0] != n || gy.shape[1] != f) throw DimensionError("conv2d backward: bad gy shape");

    if (gx) *gx = TensorT<T>({n, c, h, w});
    if (gk) *gk = TensorT<T>({f, c, kh, kw});
    const std::int64_t ih_lim = static_cast<std::int64_t>(h), iw_lim = static_cast<std::int64_t>(w);
    for (std::size_t ni = 0; ni < n; ++ni) {
        for (std::size_t fi = 0; fi < f; ++fi) {
            const T* gplane = gy.data.data() + (ni * f + fi) * oh * ow;
            for (std::size_t ci = 0; ci < c; ++ci) {
                const T* xplane = x.data.data() + (ni * c + ci) * h * w;
                const T* kplane = kern.data.data() + (fi * c + ci) * kh * kw;
                T* gxplane = gx ? gx->data.data() + (ni * c + ci) * h * w : nullptr;
                T* gkplane = gk ? gk->data.data() + (fi * c + ci) * kh * kw : nullptr;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const T g = scale * gplane[oy * ow + ox];
                        if (g == T(0)) continue;
                        for (std::size_t u = 0; u < kh; ++u) {
                            const std::int64_t iy =
                                static_cast<std::int64_t>(oy * stride + u) - static_cast<std::int64_t>(pad);
                            if (iy < 0 || iy >= ih_lim) continue;
                            for (std::size_t v = 0; v < kw; ++v) {
                                const std::int64_t ix =
                                    static_cast<std::int64_t>(ox * stride + v) - static_cast<std::int64_t>(pad);
                                if (ix < 0 || ix >= iw_lim) continue;
                                if (gxplane) gxplane[iy * iw_lim + ix] += g * kplane[u * kw + v];
                                if (gkplane) gkplane[u * kw + v] += g * xplane[iy * iw_lim + ix];
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Batch normalization over channel axis 1 (2-D [N,F] or 4-D [N,C,H,W]).
// ---------------------------------------------------------------------------

template <typename T>
struct BatchNorm {
    std::size_t channels = 0;
    T eps = T(1e-5);
    T momentum = T(0.1);

    TensorT<T> gamma, beta;
    std::vector<T> running_mean, running_var;

    // backward cache
    TensorT<T> xhat_;
    std::vector<T> inv_std_;
    bool has_cache_ = false;

    BatchNorm() = default;
    BatchNorm(std::size_t ch, T eps_ = T(1e-5), T momentum_ = T(0.1))
        : channels(ch), eps(eps_), momentum(momentum_), gamma({ch}, T(1)), beta({ch}, T(0)),
          running_mean(ch, T(0)), running_var(ch, T(1)) {
        if (!(eps > T(0))) throw InputError("batchnorm: eps must be positive");
    }

    static std::size_t check_shape(const TensorT<T>& x, std::size_t channels) {
        if (x.shape.size() != 2 && x.shape.size() != 4) throw DimensionError("batchnorm: expects 2-D or 4-D input");
        if (x.shape[1] != channels) throw DimensionError("batchnorm: channel count disagrees");
        std::size_t spatial = 1;
        for (std::size_t a = 2; a < x.shape.size(); ++a) spatial *= x.shape[a];
        return spatial;
    }

    TensorT<T> forward(const TensorT<T>& x, bool training) {
        const std::size_t spatial = check_shape(x, channels);
        const std::size_t n = x.shape[0];
        if (training && n < 2) throw InputError("batchnorm: training needs batch size >= 2");
        const std::size_t per_channel = n * spatial;

        TensorT<T> y(x.shape);
        xhat_ = TensorT<T>(x.shape);
        inv_std_.assign(channels, T(0));

        for (std::size_t ch = 0; ch < channels; ++ch) {
            T mean, var;
            if (training) {
                double m = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const T* base = x.data.data() + (i * channels + ch) * spatial;
                    for (std::size_t s = 0; s < spatial; ++s) m += base[s];
                }
                m /= static_cast<double>(per_channel);
                double v = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const T* base = x.data.data() + (i * channels + ch) * spatial;
                    for (std::size_t s = 0; s < spatial; ++s) {
                        const double d = base[s] - m;
                        v += d * d;
                    }
                }
                v /= static_cast<double>(per_channel);
                mean = static_cast<T>(m);
                var = static_cast<T>(v);
                running_mean[ch] = (T(1) - momentum) * running_mean[ch] + momentum * mean;
                running_var[ch] = (T(1) - momentum) * running_var[ch] + momentum * var;
            } else {
                mean = running_mean[ch];
                var = running_var[ch];
            }
            const T istd = T(1) / std::sqrt(var + eps);
            inv_std_[ch] = istd;
            const T g = gamma.data[ch], b = beta.data[ch];
            for (std::size_t i = 0; i < n; ++i) {
                const T* xb = x.data.data() + (i * channels + ch) * spatial;
                T* hb = xhat_.data.data() + (i * channels + ch) * spatial;
                T* yb = y.data.data() + (i * channels + ch) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    hb[s] = (xb[s] - mean) * istd;
                    yb[s] = g * hb[s] + b;
                }
            }
        }
        has_cache_ = training;
        return y;
    }

    /// Training-mode backward. Accumulates into gamma.grad / beta.grad.
    TensorT<T> backward(const TensorT<T>& gy) {
        if (!has_cache_) throw StateError("batchnorm: backward before training forward");
        require_same_shape(gy, xhat_, "batchnorm backward");
        const std::size_t n = gy.shape[0];
        std::size_t spatial = 1;
        for (std::size_t a = 2; a < gy.shape.size(); ++a) spatial *= gy.shape[a];
        const double count = static_cast<double>(n * spatial);

        gamma.ensure_grad();
        beta.ensure_grad();
        TensorT<T> gx(gy.shape);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            double sum_g = 0.0, sum_gx = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const T* gb = gy.data.data() + (i * channels + ch) * spatial;
                const T* hb = xhat_.data.data() + (i * channels + ch) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    sum_g += gb[s];
                    sum_gx += gb[s] * hb[s];
                }
            }
            gamma.grad[ch] += static_cast<T>(sum_gx);
            beta.grad[ch] += static_cast<T>(sum_g);

            const T g = gamma.data[ch], istd = inv_std_[ch];
            const T mean_g = static_cast<T>(sum_g / count);
            const T mean_gx = static_cast<T>(sum_gx / count);
            for (std::size_t i = 0; i < n; ++i) {
                const T* gb = gy.data.data() + (i * channels + ch) * spatial;
                const T* hb = xhat_.data.data() + (i * channels + ch) * spatial;
                T* ob = gx.data.data() + (i * channels + ch) * spatial;
                for (std::size_t s = 0; s < spatial; ++s) {
                    ob[s] = g * istd * (gb[s] - mean_g - hb[s] * mean_gx);
                }
            }
        }
        return gx;
    }
};

// ---------------------------------------------------------------------------
// Pointwise nonlinearities.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& x, const TensorT<T>& gy) {
    require_same_shape(x, gy, "relu backward");
    TensorT<T> gx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) gx.data[i] = x.data[i] > T(0) ? gy.data[i] : T(0);
    return gx;
}

/// sign(x) with sign(0) := +1; paired with the hard-tanh gradient gate.
template <typename T>
TensorT<T> sign_forward(const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] >= T(0) ? T(1) : T(-1);
    return y;
}

/// Straight-through gate for the sign activation: pass gradient iff |x| <= 1.
template <typename T>
TensorT<T> hardtanh_gate_backward(const TensorT<T>& x, const TensorT<T>& gy) {
    require_same_shape(x, gy, "hardtanh gate");
    TensorT<T> gx(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) {
        gx.data[i] = (x.data[i] >= T(-1) && x.data[i] <= T(1)) ? gy.data[i] : T(0);
    }
    return gx;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy: mean loss over the batch, gradient
// (softmax - onehot) / N.
// ---------------------------------------------------------------------------

template <typename T>
double softmax_xent(const TensorT<T>& logits, std::span<const std::int32_t> labels,
                    std::type_identity_t<TensorT<T>>* glogits = nullptr) {
    if (logits.shape.size() != 2) throw DimensionError("softmax_xent: expects 2-D logits");
    const std::size_t n = logits.shape[0], k = logits.shape[1];
    if (labels.size() != n) throw DimensionError("softmax_xent: label count disagrees");
    if (glogits) *glogits = TensorT<T>({n, k});

    double loss = 0.0;
    std::vector<double> probs(k);
    for (std::size_t r = 0; r < n; ++r) {
        const std::int32_t label = labels[r];
        if (label < 0 || static_cast<std::size_t>(label) >= k) {
            throw InputError("softmax_xent: label out of range");
        }
        const T* row = logits.data.data() + r * k;
        double rowmax = row[0];
        for (std::size_t j = 1; j < k; ++j) rowmax = std::max<double>(rowmax, row[j]);
        double denom = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            probs[j] = std::exp(static_cast<double>(row[j]) - rowmax);
            denom += probs[j];
        }
        loss -= std::log(probs[static_cast<std::size_t>(label)] / denom);
        if (glogits) {
            T* grow = glogits->data.data() + r * k;
            for (std::size_t j = 0; j < k; ++j) {
                const double p = probs[j] / denom;
                const double onehot = (static_cast<std::size_t>(label) == j) ? 1.0 : 0.0;
                grow[j] = static_cast<T>((p - onehot) / static_cast<double>(n));
            }
        }
    }
    return loss / static_cast<double>(n);
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
template <typename T>
double accuracy(const TensorT<T>& logits, std::span<const std::int32_t> labels) {
    const std::size_t n = logits.shape[0], k = logits.shape[1];
    std::size_t hits = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = logits.data.data() + r * k;
        std::size_t best = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (row[j] > row[best]) best = j;
        }
        if (static_cast<std::int32_t>(best) == labels[r]) ++hits;
    }
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
}

}  // namespace bihalf
