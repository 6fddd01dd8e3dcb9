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
#include <limits>
#include <string>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/data.hpp"
#include "bihalf/model.hpp"
#include "bihalf/optim.hpp"
#include "bihalf/quantize.hpp"

namespace bihalf {

enum class UpdateRule { Latent, Bop };

struct TrainConfig {
    int epochs = 2;
    std::size_t batch_size = 128;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    Schedule schedule = Schedule::cosine();
    UpdateRule rule = UpdateRule::Latent;
    float bop_ema_decay = 0.99f;  // Table-row (d) constants come from its
    float bop_threshold = 1e-6f;  // source method, not from this work
    std::uint64_t seed = 1;
    bool diagnostics = true;
    bool shuffle = true;
    bool augment = false;

    void validate() const {
        if (!(lr0 >= 0.0)) throw InputError("lr0 must be >= 0");
        if (batch_size == 0) throw InputError("batch_size must be positive");
        if (epochs < 0) throw InputError("epochs must be >= 0");
    }
};

struct MetricsRow {
    long iteration = 0;
    int epoch = 0;
    std::string split;  // "train" (per iteration) or "test" (per epoch)
    double loss = 0.0;
    double accuracy = 0.0;
    long flips_up = 0;
    long flips_down = 0;
    double weight_entropy = 0.0;  // minimum over filters at this step
    double lr = 0.0;
};

struct DiagnosticsRow {
    long iteration = 0;
    double latent_abs_mean = 0.0;
    double grad_abs_mean = 0.0;
    long flips = 0;
};

/// Everything a run emits: CSV-able rows, the hyper-parameter diagnostics
/// series, invariant violation counters, and final metrics.
struct MetricsLog {
    std::vector<MetricsRow> rows;
    std::vector<DiagnosticsRow> diagnostics;
    FlipLedger flips;

    // invariant counters, checked by the acceptance suite
    long ratio_violations = 0;      // count(+1) != k(p_pos, |M|) on some filter
    long flip_imbalance_events = 0; // up != down within a filter (fixed mask)
    double min_weight_entropy = std::numeric_limits<double>::infinity();

    double final_train_loss = 0.0, final_train_acc = 0.0;
    double final_test_loss = 0.0, final_test_acc = 0.0;
    long iterations = 0;
};

namespace detail {

struct FilterSnapshot {
    // codes per binary layer, flattened; compared filter by filter
    std::vector<std::vector<std::int8_t>> codes;
};

inline FilterSnapshot snapshot_codes(const std::vector<BinaryLayerBase*>& layers) {
    FilterSnapshot s;
    s.codes.reserve(layers.size());
    for (const auto* l : layers) s.codes.push_back(l->codes);
    return s;
}

}  // namespace detail

inline std::pair<double, double> evaluate(Net& net, const LabeledDataset& data, std::size_t batch_size) {
    double loss_sum = 0.0;
    std::size_t hit = 0, seen = 0;
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < data.n; start += batch_size) {
        const std::size_t take = std::min(batch_size, data.n - start);
        idx.resize(take);
        for (std::size_t i = 0; i < take; ++i) idx[i] = start + i;
        const Tensor x = data.batch_images(idx);
        const auto labels = data.batch_labels(idx);
        Tensor logits = net.forward(x, /*training=*/false);
        loss_sum += softmax_xent(logits, std::span<const std::int32_t>(labels.data(), labels.size()), nullptr) *
                    static_cast<double>(take);
        const std::size_t k = logits.shape[1];
        for (std::size_t r = 0; r < take; ++r) {
            const float* row = logits.data.data() + r * k;
            std::size_t best = 0;
            for (std::size_t j = 1; j < k; ++j) {
                if (row[j] > row[best]) best = j;
            }
            if (static_cast<std::int32_t>(best) == labels[r]) ++hit;
        }
        seen += take;
    }
    if (seen == 0) return {0.0, 0.0};
    return {loss_sum / static_cast<double>(seen), static_cast<double>(hit) / static_cast<double>(seen)};
}

/// SGD training loop with per-step flip accounting, entropy tracking and the
/// exact-ratio audit. Fully reproducible from the config seed.
inline MetricsLog train_epochs(Net& net, const LabeledDataset& train, const LabeledDataset& test,
                               const TrainConfig& cfg) {
    cfg.validate();
    MetricsLog log;

    Rng init_rng(cfg.seed);
    net.init(init_rng);
    Batcher batcher(train.n, cfg.batch_size, cfg.seed ^ 0x5b4d0f7e2c91a3ULL);
    Rng augment_rng(cfg.seed ^ 0xa46c11d904b7ULL);

    Sgd sgd(static_cast<float>(cfg.momentum), static_cast<float>(cfg.weight_decay));
    const auto binary = net.binary_layers();
    auto prev = detail::snapshot_codes(binary);

    const long total_steps = static_cast<long>(batcher.batches_per_epoch()) * cfg.epochs;
    long iter = 0;
    std::vector<std::size_t> idx;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batcher.start_epoch(cfg.shuffle);
        while (batcher.next(idx)) {
            const double lr = lr_at(cfg.schedule, iter, total_steps, epoch, cfg.lr0);
            const Tensor x = train.batch_images(idx, cfg.augment ? &augment_rng : nullptr);
            const auto labels = train.batch_labels(idx);

            Tensor logits = net.forward(x, /*training=*/true);
            Tensor glogits;
            const double loss =
                softmax_xent(logits, std::span<const std::int32_t>(labels.data(), labels.size()), &glogits);
            const double acc = accuracy(logits, std::span<const std::int32_t>(labels.data(), labels.size()));
            if (!std::isfinite(loss)) {
                throw TrainAbort(
                    "loss is not finite at iteration " + std::to_string(iter) +
                    "; likely exploding activations. Each unscaled binary layer multiplies the forward "
                    "variance by D/2; the sqrt(2/D) layer scale keeps it near 1. Check scale settings "
                    "and the learning rate.");
            }

            net.zero_grad();
            net.backward(glogits);

            double grad_abs = 0.0;
            std::size_t grad_n = 0;
            if (cfg.diagnostics) {
                for (auto* b : binary) {
                    for (const float g : b->w_grad_binary.data) grad_abs += std::abs(g);
                    grad_n += b->w_grad_binary.size();
                }
            }

            if (cfg.rule == UpdateRule::Latent) {
                sgd.step(net.params(), static_cast<float>(lr));
                // mask scores learn with plain SGD (no momentum, no decay)
                for (auto* b : binary) {
                    if (b->mask && b->mask->learned) {
                        for (std::size_t i = 0; i < b->mask->scores.size(); ++i) {
                            b->mask->scores[i] -= static_cast<float>(lr) * b->mask->score_grad[i];
                        }
                    }
                }
                for (auto* b : binary) b->refresh_codes();  // snapshot point: post-step quantization
            } else {
                sgd.step(net.params(), static_cast<float>(lr));  // BN affine params only
                for (auto* b : binary) b->bop_step(cfg.bop_ema_decay, cfg.bop_threshold);
            }

            // flip accounting + ratio/entropy audit, per ratio-enforcement slice
            // (one slice per filter, or the whole tensor under per-layer mode)
            FlipCount step_flips;
            double min_entropy = std::numeric_limits<double>::infinity();
            for (std::size_t li = 0; li < binary.size(); ++li) {
                BinaryLayerBase* b = binary[li];
                const bool per_filter = b->opts.granularity == Granularity::PerFilter;
                const std::size_t slices = per_filter ? b->filters : 1;
                const std::size_t slice_len = per_filter ? b->fan_in : b->w.size();
                for (std::size_t f = 0; f < slices; ++f) {
                    const std::span<const std::int8_t> cur(b->codes.data() + f * slice_len, slice_len);
                    const std::span<const std::int8_t> old(prev.codes[li].data() + f * slice_len, slice_len);
                    const FlipCount fc = flip_account(old, cur);
                    step_flips.up += fc.up;
                    step_flips.down += fc.down;
                    step_flips.mask_changed += fc.mask_changed;
                    const bool ratio_enforced = b->opts.binarizer == BinarizerKind::OT && !b->opts.bop;
                    if (fc.mask_changed == 0 && fc.up != fc.down && ratio_enforced) {
                        ++log.flip_imbalance_events;
                    }

                    std::size_t pos = 0, alive = 0;
                    for (const std::int8_t v : cur) {
                        if (v != 0) ++alive;
                        if (v > 0) ++pos;
                    }
                    if (alive > 0) {
                        const double ent = binary_entropy_bits(static_cast<double>(pos) / alive);
                        min_entropy = std::min(min_entropy, ent);
                        if (ratio_enforced && pos != positive_count(b->prior.p_pos, alive)) {
                            ++log.ratio_violations;
                        }
                    }
                }
                prev.codes[li] = b->codes;
            }
            if (!std::isfinite(min_entropy)) min_entropy = 0.0;  // no binary layers
            log.flips.record(step_flips);
            log.min_weight_entropy = std::min(log.min_weight_entropy, min_entropy);

            MetricsRow row;
            row.iteration = iter;
            row.epoch = epoch;
            row.split = "train";
            row.loss = loss;
            row.accuracy = acc;
            row.flips_up = step_flips.up;
            row.flips_down = step_flips.down;
            row.weight_entropy = min_entropy;
            row.lr = lr;
            log.rows.push_back(row);
            log.final_train_loss = loss;
            log.final_train_acc = acc;

            if (cfg.diagnostics) {
                DiagnosticsRow d;
                d.iteration = iter;
                double wsum = 0.0;
                std::size_t wn = 0;
                for (auto* b : binary) {
                    for (const float v : b->w.data) wsum += std::abs(v);
                    wn += b->w.size();
                }
                d.latent_abs_mean = wn ? wsum / static_cast<double>(wn) : 0.0;
                d.grad_abs_mean = grad_n ? grad_abs / static_cast<double>(grad_n) : 0.0;
                d.flips = step_flips.up + step_flips.down;
                log.diagnostics.push_back(d);
            }
            ++iter;
        }

        if (test.n > 0) {
            const auto [tloss, tacc] = evaluate(net, test, cfg.batch_size);
            MetricsRow row;
            row.iteration = iter;
            row.epoch = epoch;
            row.split = "test";
            row.loss = tloss;
            row.accuracy = tacc;
            row.weight_entropy = log.rows.empty() ? 0.0 : log.rows.back().weight_entropy;
            row.lr = log.rows.empty() ? cfg.lr0 : log.rows.back().lr;
            log.rows.push_back(row);
            log.final_test_loss = tloss;
            log.final_test_acc = tacc;
        }
    }
    log.iterations = iter;
    if (!std::isfinite(log.min_weight_entropy)) log.min_weight_entropy = 0.0;
    return log;
}

}  // namespace bihalf
