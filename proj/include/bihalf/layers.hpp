/*
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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/ops.hpp"
#include "bihalf/prune.hpp"
#include "bihalf/quantize.hpp"
#include "bihalf/rng.hpp"
#include "bihalf/tensor.hpp"

namespace bihalf {

enum class BinarizerKind { OT, Sign, IRNet };
enum class Granularity { PerFilter, PerLayer };

inline const char* to_string(BinarizerKind k) {
    switch (k) {
        case BinarizerKind::OT: return "bihalf-ot";
        case BinarizerKind::Sign: return "sign";
        case BinarizerKind::IRNet: return "irnet";
    }
    return "?";
}

struct ParamRef {
    Tensor* tensor;
    bool weight_decay;
    std::string name;
};

class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor forward(const Tensor& x, bool training) = 0;
    virtual Tensor backward(const Tensor& gy) = 0;
    virtual std::vector<ParamRef> params() { return {}; }
    virtual void init(Rng&) {}
    virtual std::string name() const = 0;
};

struct BinaryLayerOptions {
    BinarizerKind binarizer = BinarizerKind::OT;
    double p_pos = 0.5;
    Granularity granularity = Granularity::PerFilter;
    bool unit_scale = false;  // alpha = 1 instead of sqrt(2/D)
    double prune_ratio = 0.0;
    bool learned_mask = false;
    bool bop = false;  // codes are persistent state flipped by gradient sign
};

/// Shared machinery of the binary linear / conv layers: latent weights, an
/// optional prune mask, the quantizer, and the per-layer scale
/// alpha = sqrt(2/D) with D the fan-in connection count per output unit.
class BinaryLayerBase : public Layer {
public:
    Tensor w;                       // latent weights, one contiguous fan-in slice per filter
    std::optional<PruneMask> mask;  // element-aligned with w
    BernoulliPrior prior;
    BinaryLayerOptions opts;
    float alpha = 1.0f;

    std::vector<std::int8_t> codes;  // derived {-1,0,+1}, refreshed every forward
    Tensor w_grad_binary;            // gradient assigned to the effective binary weights
    std::vector<float> grad_ema;     // only used by the bop update rule

    std::size_t filters = 0;
    std::size_t fan_in = 0;

    BinaryLayerBase(std::vector<std::size_t> w_shape, std::size_t n_filters, std::size_t fan,
                    const BinaryLayerOptions& o)
        : w(std::move(w_shape)), prior(o.p_pos), opts(o), filters(n_filters), fan_in(fan) {
        alpha = opts.unit_scale ? 1.0f : std::sqrt(2.0f / static_cast<float>(fan_in));
        codes.assign(w.size(), 0);
        if (opts.bop && opts.learned_mask) throw InputError("bop rule does not support a learned mask");
        if (opts.prune_ratio > 0.0 || opts.learned_mask) rebuild_mask();
        if (opts.bop) grad_ema.assign(w.size(), 0.0f);
    }

    /// Kaiming-normal latent init, std = sqrt(2/D). The first quantization
    /// then yields an exactly balanced code per filter under the bi-half
    /// prior, so the equal-distribution init holds by construction.
    void kaiming_init(Rng& rng) {
        const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
        for (auto& v : w.data) v = static_cast<float>(rng.gaussian(0.0, stddev));
        if (mask) rebuild_mask();
        bop_initialized_ = false;
        refresh_codes();
    }

    void init(Rng& rng) override { kaiming_init(rng); }

    std::span<const float> filter_weights(std::size_t f) const {
        return {w.data.data() + f * fan_in, fan_in};
    }
    std::span<const std::int8_t> filter_codes(std::size_t f) const { return {codes.data() + f * fan_in, fan_in}; }
    std::span<const std::uint8_t> filter_mask(std::size_t f) const {
        if (!mask) return {};
        return {mask->m.data() + f * fan_in, fan_in};
    }

    /// Re-derive the codes from the latent weights (and mask). Under the bop
    /// rule the codes are persistent state and are left untouched.
    void refresh_codes() {
        if (opts.bop && bop_initialized_) return;
        if (mask && mask->learned) mask->recompute();
        if (opts.granularity == Granularity::PerLayer) {
            quantize_span(std::span<const float>(w.data.data(), w.size()),
                          mask ? std::span<const std::uint8_t>(mask->m.data(), mask->m.size())
                               : std::span<const std::uint8_t>{},
                          codes.data());
        } else {
            for (std::size_t f = 0; f < filters; ++f) {
                quantize_span(filter_weights(f), filter_mask(f), codes.data() + f * fan_in);
            }
        }
        bop_initialized_ = opts.bop;
        sync_code_tensor();
    }

    Tensor forward(const Tensor& x, bool training) override {
        refresh_codes();
        x_cache_ = x;
        has_cache_ = true;
        (void)training;
        return forward_with_codes(x);
    }

    Tensor backward(const Tensor& gy) override {
        if (!has_cache_) throw StateError(name() + ": backward before forward");
        Tensor gx = backward_with_codes(x_cache_, gy, &w_grad_binary);
        // Identity straight-through: the latent weights receive exactly the
        // gradient the loss assigned to the binary weights; pruned positions
        // receive zero.
        w.ensure_grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const bool alive = !mask || mask->m[i];
            if (alive) w.grad[i] += w_grad_binary.data[i];
        }
        if (mask && mask->learned) {
            BinaryCode code_view;
            code_view.values.assign(codes.begin(), codes.end());
            score_backward(*mask, std::span<const float>(w_grad_binary.data.data(), w_grad_binary.size()),
                           code_view, std::span<const float>(w.data.data(), w.size()));
        }
        return gx;
    }

    std::vector<ParamRef> params() override {
        if (opts.bop) return {};  // no latent weights to descend on
        std::vector<ParamRef> p{{&w, true, name() + ".w"}};
        return p;
    }

    /// Bop update (Table-style row (d)): maintain an EMA of the binary-weight
    /// gradient and flip codes where the EMA is confidently aligned with the
    /// current code. Returns (up, down) flip counts.
    std::pair<long, long> bop_step(float ema_decay, float threshold) {
        if (!opts.bop) throw StateError("bop_step on a latent-rule layer");
        if (w_grad_binary.size() != w.size()) return {0, 0};
        long up = 0, down = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            grad_ema[i] = ema_decay * grad_ema[i] + (1.0f - ema_decay) * w_grad_binary.data[i];
            if (codes[i] == 0) continue;
            const float g = grad_ema[i];
            if (std::abs(g) > threshold && sign_of(g) == codes[i]) {
                codes[i] = static_cast<std::int8_t>(-codes[i]);
                (codes[i] > 0 ? up : down)++;
            }
        }
        if (up + down > 0) sync_code_tensor();
        return {up, down};
    }

    std::string name() const override { return layer_name_; }

protected:
    virtual Tensor forward_with_codes(const Tensor& x) = 0;
    virtual Tensor backward_with_codes(const Tensor& x, const Tensor& gy, Tensor* gw) = 0;

    void rebuild_mask() {
        if (opts.learned_mask) {
            mask = PruneMask::learned_from(std::span<const float>(w.data.data(), w.size()), opts.prune_ratio);
        } else {
            std::vector<float> mag(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) mag[i] = std::abs(w.data[i]);
            mask = PruneMask::frozen(topk_mask(std::span<const float>(mag.data(), mag.size()), opts.prune_ratio),
                                     opts.prune_ratio);
        }
    }

    void sync_code_tensor() {
        if (b_float_.shape != w.shape) b_float_ = Tensor(w.shape);
        for (std::size_t i = 0; i < w.size(); ++i) b_float_.data[i] = static_cast<float>(codes[i]);
    }

    /// Effective binary weights as floats ({-1,0,+1}), for the dense kernels.
    const Tensor& codes_as_tensor() const { return b_float_; }

    void quantize_span(std::span<const float> wspan, std::span<const std::uint8_t> mspan, std::int8_t* out) {
        BinaryCode code;
        switch (opts.binarizer) {
            case BinarizerKind::OT: code = ot_binarize(wspan, prior, mspan); break;
            case BinarizerKind::Sign: code = sign_binarize(wspan); break;
            case BinarizerKind::IRNet: code = irnet_binarize(wspan); break;
        }
        if (opts.binarizer != BinarizerKind::OT && !mspan.empty()) {
            for (std::size_t i = 0; i < mspan.size(); ++i) {
                if (!mspan[i]) code.values[i] = 0;
            }
        }
        std::copy(code.values.begin(), code.values.end(), out);
    }

    std::string layer_name_;
    Tensor x_cache_;
    Tensor b_float_;
    bool has_cache_ = false;
    bool bop_initialized_ = false;
};

class BinaryLinear : public BinaryLayerBase {
public:
    BinaryLinear(std::size_t in_features, std::size_t out_features, const BinaryLayerOptions& o)
        : BinaryLayerBase({out_features, in_features}, out_features, in_features, o) {
        layer_name_ = "linear" + std::to_string(in_features) + "x" + std::to_string(out_features);
    }

protected:
    Tensor forward_with_codes(const Tensor& x) override {
        return linear_forward(x, codes_as_tensor(), alpha);
    }
    Tensor backward_with_codes(const Tensor& x, const Tensor& gy, Tensor* gw) override {
        Tensor gx;
        linear_backward(x, codes_as_tensor(), alpha, gy, &gx, gw);
        return gx;
    }
};

class BinaryConv2d : public BinaryLayerBase {
public:
    BinaryConv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                 std::size_t pad, const BinaryLayerOptions& o)
        : BinaryLayerBase({out_channels, in_channels, kernel, kernel}, out_channels,
                          in_channels * kernel * kernel, o),
          stride_(stride), pad_(pad) {
        layer_name_ = "conv" + std::to_string(in_channels) + "x" + std::to_string(out_channels) + "k" +
                      std::to_string(kernel);
    }

protected:
    Tensor forward_with_codes(const Tensor& x) override {
        return conv2d_forward(x, codes_as_tensor(), alpha, stride_, pad_);
    }
    Tensor backward_with_codes(const Tensor& x, const Tensor& gy, Tensor* gw) override {
        Tensor gx;
        conv2d_backward(x, codes_as_tensor(), alpha, stride_, pad_, gy, &gx, gw);
        return gx;
    }

private:
    std::size_t stride_, pad_;
};

/// Plain real-valued dense layer (used when the first/last layers of a
/// deeper net are exempted from binarization).
class RealLinear : public Layer {
public:
    Tensor w;  // [out, in]
    std::size_t fan_in = 0;

    RealLinear(std::size_t in_features, std::size_t out_features)
        : w({out_features, in_features}), fan_in(in_features) {}

    void init(Rng& rng) override {
        const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
        for (auto& v : w.data) v = static_cast<float>(rng.gaussian(0.0, stddev));
    }

    Tensor forward(const Tensor& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return linear_forward(x, w, 1.0f);
    }
    Tensor backward(const Tensor& gy) override {
        if (!has_cache_) throw StateError("real-linear: backward before forward");
        Tensor gx, gw;
        linear_backward(x_, w, 1.0f, gy, &gx, &gw);
        w.ensure_grad();
        for (std::size_t i = 0; i < w.size(); ++i) w.grad[i] += gw.data[i];
        return gx;
    }
    std::vector<ParamRef> params() override { return {{&w, true, "real-linear.w"}}; }
    std::string name() const override { return "real-linear"; }

private:
    Tensor x_;
    bool has_cache_ = false;
};

class RealConv2d : public Layer {
public:
    Tensor w;  // [out_c, in_c, k, k]
    std::size_t fan_in = 0;

    RealConv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t pad)
        : w({out_channels, in_channels, kernel, kernel}), fan_in(in_channels * kernel * kernel),
          stride_(stride), pad_(pad) {}

    void init(Rng& rng) override {
        const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
        for (auto& v : w.data) v = static_cast<float>(rng.gaussian(0.0, stddev));
    }

    Tensor forward(const Tensor& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return conv2d_forward(x, w, 1.0f, stride_, pad_);
    }
    Tensor backward(const Tensor& gy) override {
        if (!has_cache_) throw StateError("real-conv: backward before forward");
        Tensor gx, gw;
        conv2d_backward(x_, w, 1.0f, stride_, pad_, gy, &gx, &gw);
        w.ensure_grad();
        for (std::size_t i = 0; i < w.size(); ++i) w.grad[i] += gw.data[i];
        return gx;
    }
    std::vector<ParamRef> params() override { return {{&w, true, "real-conv.w"}}; }
    std::string name() const override { return "real-conv"; }

private:
    Tensor x_;
    bool has_cache_ = false;
    std::size_t stride_, pad_;
};

class ReluLayer : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return relu_forward(x);
    }
    Tensor backward(const Tensor& gy) override {
        if (!has_cache_) throw StateError("relu: backward before forward");
        return relu_backward(x_, gy);
    }
    std::string name() const override { return "relu"; }

private:
    Tensor x_;
    bool has_cache_ = false;
};

/// Activation binarization: sign in the forward pass, hard-tanh gate in the
/// backward pass (gradient passes iff |x| <= 1).
class SignActLayer : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        x_ = x;
        has_cache_ = true;
        return sign_forward(x);
    }
    Tensor backward(const Tensor& gy) override {
        if (!has_cache_) throw StateError("sign-act: backward before forward");
        return hardtanh_gate_backward(x_, gy);
    }
    std::string name() const override { return "sign-act"; }

private:
    Tensor x_;
    bool has_cache_ = false;
};

class BatchNormLayer : public Layer {
public:
    explicit BatchNormLayer(std::size_t channels, float eps = 1e-5f, float momentum = 0.1f)
        : bn_(channels, eps, momentum) {}

    Tensor forward(const Tensor& x, bool training) override { return bn_.forward(x, training); }
    Tensor backward(const Tensor& gy) override { return bn_.backward(gy); }
    std::vector<ParamRef> params() override {
        return {{&bn_.gamma, false, "bn.gamma"}, {&bn_.beta, false, "bn.beta"}};
    }
    std::string name() const override { return "batchnorm"; }

    BatchNorm<float>& impl() { return bn_; }

private:
    BatchNorm<float> bn_;
};

class FlattenLayer : public Layer {
public:
    Tensor forward(const Tensor& x, bool) override {
        in_shape_ = x.shape;
        Tensor y = x;
        std::size_t rest = 1;
        for (std::size_t a = 1; a < x.shape.size(); ++a) rest *= x.shape[a];
        y.shape = {x.shape[0], rest};
        return y;
    }
    Tensor backward(const Tensor& gy) override {
        Tensor gx = gy;
        gx.shape = in_shape_;
        return gx;
    }
    std::string name() const override { return "flatten"; }

private:
    std::vector<std::size_t> in_shape_;
};

}  // namespace bihalf
