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

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/layers.hpp"

namespace bihalf {

enum class ActMode { Real, Binary };

/// Plain layer stack. Forward caches live inside the layers, so one Net
/// instance serves one training stream at a time; distinct instances are
/// independent.
class Net {
public:
    std::vector<std::unique_ptr<Layer>> layers;

    template <typename L, typename... Args>
    L* add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers.push_back(std::move(layer));
        return raw;
    }

    Tensor forward(const Tensor& x, bool training) {
        Tensor h = x;
        for (auto& l : layers) h = l->forward(h, training);
        return h;
    }

    Tensor backward(const Tensor& gloss) {
        Tensor g = gloss;
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) g = (*it)->backward(g);
        return g;
    }

    std::vector<ParamRef> params() {
        std::vector<ParamRef> all;
        for (auto& l : layers) {
            for (auto& p : l->params()) all.push_back(p);
        }
        return all;
    }

    std::vector<BinaryLayerBase*> binary_layers() {
        std::vector<BinaryLayerBase*> out;
        for (auto& l : layers) {
            if (auto* b = dynamic_cast<BinaryLayerBase*>(l.get())) out.push_back(b);
        }
        return out;
    }

    std::vector<BatchNormLayer*> batchnorm_layers() {
        std::vector<BatchNormLayer*> out;
        for (auto& l : layers) {
            if (auto* b = dynamic_cast<BatchNormLayer*>(l.get())) out.push_back(b);
        }
        return out;
    }

    void init(Rng& rng) {
        for (auto& l : layers) l->init(rng);
    }

    void zero_grad() {
        for (auto& p : params()) p.tensor->zero_grad();
        for (auto* b : binary_layers()) {
            if (b->mask && b->mask->learned) {
                std::fill(b->mask->score_grad.begin(), b->mask->score_grad.end(), 0.0f);
            }
        }
    }

    /// Final-state dump: every parameter tensor plus BatchNorm running
    /// statistics, in layer order. (Resume-from-checkpoint is out of scope;
    /// this is a terminal snapshot.)
    void save_state(const std::string& path) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw FormatError("save_state: cannot open " + path);
        const char magic[4] = {'B', 'H', 'F', '1'};
        out.write(magic, 4);
        auto write_block = [&](const float* data, std::size_t n) {
            const std::uint64_t count = n;
            out.write(reinterpret_cast<const char*>(&count), sizeof(count));
            out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
        };
        for (auto& p : params()) write_block(p.tensor->data.data(), p.tensor->size());
        for (auto* bn : batchnorm_layers()) {
            write_block(bn->impl().running_mean.data(), bn->impl().running_mean.size());
            write_block(bn->impl().running_var.data(), bn->impl().running_var.size());
        }
    }
};

struct ModelOptions {
    BinarizerKind binarizer = BinarizerKind::OT;
    double p_pos = 0.5;
    Granularity granularity = Granularity::PerFilter;
    bool unit_scale = false;
    double prune_ratio = 0.0;
    bool learned_mask = false;
    bool bop = false;
    ActMode act = ActMode::Real;
    // Shallow nets binarize every layer; deeper stacks conventionally keep
    // the first and last layers real-valued. Exemption is a policy switch.
    bool exempt_edges = false;

    BinaryLayerOptions layer_opts() const {
        BinaryLayerOptions o;
        o.binarizer = binarizer;
        o.p_pos = p_pos;
        o.granularity = granularity;
        o.unit_scale = unit_scale;
        o.prune_ratio = prune_ratio;
        o.learned_mask = learned_mask;
        o.bop = bop;
        return o;
    }
};

namespace detail {

inline void add_act(Net& net, const ModelOptions& mo) {
    if (mo.act == ActMode::Binary) {
        net.add<SignActLayer>();
    } else {
        net.add<ReluLayer>();
    }
}

}  // namespace detail

/// MLP: flatten -> [binary linear -> BN -> act]* -> binary linear classifier.
/// Every layer is binarized (the shallow-net policy); the classifier gets no
/// BN because nothing consumes its activations.
inline Net build_mlp(std::size_t in_features, const std::vector<std::size_t>& hidden, std::size_t classes,
                     const ModelOptions& mo) {
    Net net;
    net.add<FlattenLayer>();
    std::size_t prev = in_features;
    bool first = true;
    for (const std::size_t h : hidden) {
        if (first && mo.exempt_edges) {
            net.add<RealLinear>(prev, h);
        } else {
            net.add<BinaryLinear>(prev, h, mo.layer_opts());
        }
        first = false;
        net.add<BatchNormLayer>(h);
        detail::add_act(net, mo);
        prev = h;
    }
    if (mo.exempt_edges) {
        net.add<RealLinear>(prev, classes);
    } else {
        net.add<BinaryLinear>(prev, classes, mo.layer_opts());
    }
    return net;
}

/// Shallow conv family (depths 2/4/6/8), desk-scale widths.
///
/// Stages double the width and halve the resolution on their last conv
/// (stride 2, no pooling layer). The first conv uses a 4x4 kernel so every
/// fan-in count C*k*k is even, which the exact-ratio and entropy invariants
/// rely on; all remaining convs are 3x3. All layers are binarized.
inline Net build_convnet(int depth, std::size_t in_channels, std::size_t in_h, std::size_t in_w,
                         std::size_t classes, std::size_t width, const ModelOptions& mo) {
    if (depth != 2 && depth != 4 && depth != 6 && depth != 8) {
        throw InputError("conv depth must be one of 2/4/6/8");
    }
    Net net;
    const auto opts = mo.layer_opts();
    std::size_t c = in_channels, h = in_h, w = in_w;
    bool first = true;

    auto add_conv = [&](std::size_t out_c, std::size_t k, std::size_t stride) {
        if (first && mo.exempt_edges) {
            net.add<RealConv2d>(c, out_c, k, stride, std::size_t{1});
        } else {
            net.add<BinaryConv2d>(c, out_c, k, stride, std::size_t{1}, opts);
        }
        first = false;
        h = conv_extent(h, k, stride, 1);
        w = conv_extent(w, k, stride, 1);
        c = out_c;
        net.add<BatchNormLayer>(out_c);
        detail::add_act(net, mo);
    };

    const int stages = depth / 2;
    for (int s = 0; s < stages; ++s) {
        const std::size_t stage_width = width << s;
        const std::size_t k_first = (s == 0 && (c * 3 * 3) % 2 != 0) ? 6 : 3;
        if (depth == 2) {
            add_conv(stage_width, k_first, 2);  // wide stem: balanced 1-channel filters need fan-in room
            add_conv(stage_width * 2, 3, 2);
        } else {
            add_conv(stage_width, k_first, 1);
            add_conv(stage_width, 3, 2);
        }
    }
    net.add<FlattenLayer>();
    if (mo.exempt_edges) {
        net.add<RealLinear>(c * h * w, classes);
    } else {
        net.add<BinaryLinear>(c * h * w, classes, mo.layer_opts());
    }
    return net;
}

}  // namespace bihalf
