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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/quantize.hpp"

namespace bihalf {

/// Survivors after pruning a fraction rho of D weights. Shares the
/// round-half-up convention of positive_count, so ratio enforcement and
/// pruning agree on integer handling.
inline std::size_t keep_count(double rho, std::size_t d) {
    if (!(rho >= 0.0 && rho < 1.0)) throw InputError("prune ratio must lie in [0,1)");
    const std::size_t pruned = positive_count(rho, d);
    return d - pruned;
}

/// Keep the keep_count(rho, D) largest scores; ties keep the lower index.
inline std::vector<std::uint8_t> topk_mask(std::span<const float> scores, double rho) {
    const std::size_t d = scores.size();
    if (d == 0) throw InputError("topk_mask: empty score vector");
    const std::size_t keep = keep_count(rho, d);

    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::vector<std::uint8_t> mask(d, 0);
    for (std::size_t r = 0; r < keep; ++r) mask[idx[r]] = 1;
    return mask;
}

/// {0,1} mask with an exact keep count. Frozen masks stay constant; learned
/// masks are re-derived from the scores before every forward pass.
struct PruneMask {
    std::vector<std::uint8_t> m;
    double rho = 0.0;
    std::vector<float> scores;  // latent, only meaningful in learned mode
    std::vector<float> score_grad;
    bool learned = false;

    PruneMask() = default;

    static PruneMask frozen(std::vector<std::uint8_t> mask, double rho_) {
        PruneMask p;
        p.m = std::move(mask);
        p.rho = rho_;
        return p;
    }

    /// Learned mask with scores seeded from |w|, so the initial mask prunes
    /// the small-magnitude weights and frozen/learned modes start identical.
    static PruneMask learned_from(std::span<const float> w, double rho_) {
        PruneMask p;
        p.learned = true;
        p.rho = rho_;
        p.scores.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) p.scores[i] = std::abs(w[i]);
        p.score_grad.assign(w.size(), 0.0f);
        p.m = topk_mask(p.scores, rho_);
        return p;
    }

    std::size_t size() const { return m.size(); }
    std::size_t kept() const { return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1})); }

    void recompute() {
        if (learned) m = topk_mask(std::span<const float>(scores.data(), scores.size()), rho);
    }
};

/// Straight-through gradient into the mask scores: the top-k selection is
/// treated as identity, so d/ds_i = (gradient at the effective weight) * B_i.
/// Pruned positions use the code the weight would contribute on re-entry
/// (its latent sign), so they keep receiving signal and can re-enter.
inline void score_backward(PruneMask& mask, std::span<const float> effective_weight_grad,
                           const BinaryCode& code, std::span<const float> latent_w) {
    if (!mask.learned) return;  // frozen mode: no-op
    if (effective_weight_grad.size() != mask.size() || code.size() != mask.size()) {
        throw DimensionError("score_backward: size mismatch");
    }
    if (mask.score_grad.size() != mask.size()) mask.score_grad.assign(mask.size(), 0.0f);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const float b = code[i] != 0 ? static_cast<float>(code[i])
                                     : static_cast<float>(sign_of(static_cast<double>(latent_w[i])));
        mask.score_grad[i] += effective_weight_grad[i] * b;
    }
}

struct RatioReport {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t zeros = 0;
};

inline RatioReport masked_ratio_report(const BinaryCode& code) {
    RatioReport r;
    for (const std::int8_t v : code.values) {
        if (v > 0) {
            ++r.positives;
        } else if (v < 0) {
            ++r.negatives;
        } else {
            ++r.zeros;
        }
    }
    return r;
}

}  // namespace bihalf
