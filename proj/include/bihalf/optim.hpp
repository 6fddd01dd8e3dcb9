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
#include <span>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/layers.hpp"
#include "bihalf/quantize.hpp"

namespace bihalf {

// ---------------------------------------------------------------------------
// SGD with momentum and coupled L2 weight decay:
//   v <- momentum * v + grad + weight_decay * w
//   w <- w - lr * v
// Weight decay applies only to params flagged for it (latent weights; never
// BatchNorm affine parameters or mask scores).
// ---------------------------------------------------------------------------

inline void sgd_step(std::span<float> w, std::span<const float> grad, std::span<float> velocity, float lr,
                     float momentum, float weight_decay) {
    if (w.size() != grad.size() || w.size() != velocity.size()) throw DimensionError("sgd_step: size mismatch");
    for (std::size_t i = 0; i < w.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * w[i];
        w[i] -= lr * velocity[i];
    }
}

class Sgd {
public:
    Sgd(float momentum, float weight_decay) : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(const std::vector<ParamRef>& params, float lr) {
        if (velocity_.size() != params.size()) {
            velocity_.clear();
            for (const auto& p : params) velocity_.emplace_back(p.tensor->size(), 0.0f);
        }
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Tensor* t = params[pi].tensor;
            if (t->grad.empty()) continue;
            const float wd = params[pi].weight_decay ? weight_decay_ : 0.0f;
            sgd_step({t->data.data(), t->size()}, {t->grad.data(), t->size()},
                     {velocity_[pi].data(), velocity_[pi].size()}, lr, momentum_, wd);
        }
    }

private:
    float momentum_, weight_decay_;
    std::vector<std::vector<float>> velocity_;
};

// ---------------------------------------------------------------------------
// Learning-rate schedules.
// ---------------------------------------------------------------------------

enum class ScheduleKind { Cosine, Constant, Step };

struct Schedule {
    ScheduleKind kind = ScheduleKind::Cosine;
    std::vector<int> milestones;  // epochs, strictly increasing (Step only)
    double factor = 0.1;

    static Schedule cosine() { return Schedule{}; }
    static Schedule constant() { return Schedule{ScheduleKind::Constant, {}, 1.0}; }
    static Schedule step(std::vector<int> ms, double f) {
        for (std::size_t i = 1; i < ms.size(); ++i) {
            if (ms[i] <= ms[i - 1]) throw InputError("schedule milestones must be strictly increasing");
        }
        return Schedule{ScheduleKind::Step, std::move(ms), f};
    }
};

/// Cosine decay over a horizon of T steps: lr0 * (1 + cos(pi*t/T)) / 2.
inline double cosine_lr(long t, long total, double lr0) {
    if (t < 0 || t > total) throw InputError("cosine_lr: t outside [0, T]");
    if (total == 0) return lr0;
    return lr0 * (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(t) / static_cast<double>(total))) /
           2.0;
}

inline double lr_at(const Schedule& s, long step_index, long total_steps, int epoch, double lr0) {
    switch (s.kind) {
        case ScheduleKind::Cosine: return cosine_lr(step_index, total_steps, lr0);
        case ScheduleKind::Constant: return lr0;
        case ScheduleKind::Step: {
            double lr = lr0;
            for (const int m : s.milestones) {
                if (epoch >= m) lr *= s.factor;
            }
            return lr;
        }
    }
    return lr0;
}

// ---------------------------------------------------------------------------
// Flip accounting.
// ---------------------------------------------------------------------------

struct FlipCount {
    long up = 0;            // -1 -> +1
    long down = 0;          // +1 -> -1
    long mask_changed = 0;  // positions entering/leaving the mask, not counted as flips
};

/// Count sign transitions between two code snapshots of equal length.
/// Positions where exactly one side is 0 changed mask membership; they are
/// excluded from the flip counts and reported separately.
inline FlipCount flip_account(std::span<const std::int8_t> prev, std::span<const std::int8_t> next) {
    if (prev.size() != next.size()) throw DimensionError("flip_account: length mismatch");
    FlipCount fc;
    for (std::size_t i = 0; i < prev.size(); ++i) {
        if (prev[i] == 0 || next[i] == 0) {
            if (prev[i] != next[i]) ++fc.mask_changed;
            continue;
        }
        if (prev[i] < 0 && next[i] > 0) ++fc.up;
        if (prev[i] > 0 && next[i] < 0) ++fc.down;
    }
    return fc;
}

inline FlipCount flip_account(const BinaryCode& prev, const BinaryCode& next) {
    return flip_account(std::span<const std::int8_t>(prev.values.data(), prev.values.size()),
                        std::span<const std::int8_t>(next.values.data(), next.values.size()));
}

/// Running per-iteration totals of up/down flips with the cumulative
/// difference sum(down - up).
struct FlipLedger {
    long total_up = 0;
    long total_down = 0;
    long cumulative_difference = 0;
    std::vector<FlipCount> per_iteration;

    void record(const FlipCount& fc) {
        total_up += fc.up;
        total_down += fc.down;
        cumulative_difference += fc.down - fc.up;
        per_iteration.push_back(fc);
    }
};

/// Latent-free flip rule: flip b_i iff tau < |g_i| and sign(g_i) = sign(b_i),
/// with g an exponential moving average of the binary-weight gradient.
/// Masked (zero) entries never flip.
inline FlipCount bop_flip_rule(BinaryCode& code, std::span<const float> grad_ema, float tau) {
    if (code.size() != grad_ema.size()) throw DimensionError("bop_flip_rule: length mismatch");
    if (!(tau > 0.0f)) throw InputError("bop_flip_rule: tau must be positive");
    FlipCount fc;
    for (std::size_t i = 0; i < code.size(); ++i) {
        if (code.values[i] == 0) continue;
        const float g = grad_ema[i];
        if (std::abs(g) > tau && sign_of(g) == code.values[i]) {
            code.values[i] = static_cast<std::int8_t>(-code.values[i]);
            (code.values[i] > 0 ? fc.up : fc.down)++;
        }
    }
    return fc;
}

}  // namespace bihalf
