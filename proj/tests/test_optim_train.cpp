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

#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "bihalf/bihalf.hpp"

using namespace bihalf;

TEST_CASE("sgd update rule") {
    // vanilla: w <- w - lr * g
    std::vector<float> w{1.0f}, g{0.5f}, v{0.0f};
    sgd_step(std::span<float>(w), std::span<const float>(g.data(), 1), std::span<float>(v), 0.1f, 0.0f, 0.0f);
    CHECK(w[0] == doctest::Approx(0.95f));

    // zero grad with weight decay shrinks by (1 - lr*wd) per step
    std::vector<float> w2{2.0f}, g2{0.0f}, v2{0.0f};
    sgd_step(std::span<float>(w2), std::span<const float>(g2.data(), 1), std::span<float>(v2), 0.1f, 0.0f, 0.01f);
    CHECK(w2[0] == doctest::Approx(2.0f * (1.0f - 0.1f * 0.01f)));

    // two steps, momentum 0.9, constant gradient: displacement lr*g*(1 + 1.9)
    std::vector<float> w3{0.0f}, g3{1.0f}, v3{0.0f};
    sgd_step(std::span<float>(w3), std::span<const float>(g3.data(), 1), std::span<float>(v3), 0.1f, 0.9f, 0.0f);
    sgd_step(std::span<float>(w3), std::span<const float>(g3.data(), 1), std::span<float>(v3), 0.1f, 0.9f, 0.0f);
    CHECK(w3[0] == doctest::Approx(-0.1f * (1.0f + 1.9f)));
}

TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.1) == doctest::Approx(0.1));
    CHECK(cosine_lr(100, 100, 0.1) == doctest::Approx(0.0));
    CHECK(cosine_lr(50, 100, 0.1) == doctest::Approx(0.05));
    CHECK_THROWS_AS(cosine_lr(-1, 100, 0.1), InputError);

    const Schedule st = Schedule::step({2, 5}, 0.1);
    CHECK(lr_at(st, 0, 100, 0, 1.0) == doctest::Approx(1.0));
    CHECK(lr_at(st, 0, 100, 3, 1.0) == doctest::Approx(0.1));
    CHECK(lr_at(st, 0, 100, 7, 1.0) == doctest::Approx(0.01));
    CHECK_THROWS_AS(Schedule::step({5, 2}, 0.1), InputError);
}

TEST_CASE("flip accounting") {
    const std::vector<std::int8_t> a{1, -1, 1, -1};
    const std::vector<std::int8_t> b{-1, 1, 1, -1};
    const auto fc = flip_account(std::span<const std::int8_t>(a.data(), 4),
                                 std::span<const std::int8_t>(b.data(), 4));
    CHECK(fc.up == 1);
    CHECK(fc.down == 1);
    CHECK(fc.mask_changed == 0);

    const auto same = flip_account(std::span<const std::int8_t>(a.data(), 4),
                                   std::span<const std::int8_t>(a.data(), 4));
    CHECK(same.up == 0);
    CHECK(same.down == 0);

    // a position entering/leaving the mask is excluded and reported apart
    const std::vector<std::int8_t> c{1, 0, 1, -1};
    const auto masked = flip_account(std::span<const std::int8_t>(a.data(), 4),
                                     std::span<const std::int8_t>(c.data(), 4));
    CHECK(masked.mask_changed == 1);
    CHECK(masked.up == 0);
    CHECK(masked.down == 0);
}

TEST_CASE("bi-half steps always flip in pairs") {
    Rng rng(55);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t d = 2 + rng.below(30);
        std::vector<float> w(d);
        for (auto& v : w) v = static_cast<float>(rng.gaussian());
        const auto before = ot_binarize(w, BernoulliPrior(0.5));
        for (auto& v : w) v += static_cast<float>(rng.gaussian(0.0, 0.3));  // a gradient step
        const auto after = ot_binarize(w, BernoulliPrior(0.5));
        const auto fc = flip_account(before, after);
        CHECK(fc.up == fc.down);  // positive count is conserved, so flips pair up
    }
}

TEST_CASE("bop flip rule") {
    BinaryCode b;
    b.values = {1, 1, -1, 1, 0};
    const float tau = 0.5f;
    const std::vector<float> ema{2 * tau, -2 * tau, -2 * tau, 0.1f * tau, 2 * tau};
    const auto fc = bop_flip_rule(b, std::span<const float>(ema.data(), ema.size()), tau);
    CHECK(b.values == std::vector<std::int8_t>{-1, 1, 1, 1, 0});  // aligned & confident flip; mask holds
    CHECK(fc.down == 1);
    CHECK(fc.up == 1);

    BinaryCode quiet;
    quiet.values = {1, -1};
    const std::vector<float> small{0.1f, -0.1f};
    const auto none = bop_flip_rule(quiet, std::span<const float>(small.data(), 2), 1.0f);
    CHECK(none.up + none.down == 0);
    CHECK(quiet.values == std::vector<std::int8_t>{1, -1});
}

namespace {

TrainConfig quick_config(std::uint64_t seed, double lr0 = 0.1, int epochs = 1) {
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = 32;
    cfg.lr0 = lr0;
    cfg.momentum = 0.9;
    cfg.weight_decay = 1e-4;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("one epoch on separable blobs reaches > 0.9 train accuracy") {
    Rng data_rng(2024);
    const LabeledDataset blobs = make_blobs(512, 2, 10.0, data_rng);
    ModelOptions mo;
    Net net = build_mlp(2, {}, 2, mo);  // single binary layer
    const MetricsLog log = train_epochs(net, blobs, LabeledDataset{}, quick_config(1));
    double last_acc = 0.0;
    for (const auto& r : log.rows) {
        if (r.split == "train") last_acc = r.accuracy;
    }
    CHECK(last_acc > 0.9);
}

TEST_CASE("lr0 = 0 leaves weights untouched and produces zero flips") {
    Rng data_rng(2024);
    const LabeledDataset blobs = make_blobs(128, 2, 10.0, data_rng);
    ModelOptions mo;
    Net net = build_mlp(2, {4}, 2, mo);
    const MetricsLog log = train_epochs(net, blobs, LabeledDataset{}, quick_config(3, 0.0, 2));
    CHECK(log.flips.total_up == 0);
    CHECK(log.flips.total_down == 0);
    for (const auto& d : log.diagnostics) {
        CHECK(d.latent_abs_mean == doctest::Approx(log.diagnostics.front().latent_abs_mean));
    }
}

TEST_CASE("identical config implies identical metrics, bit for bit") {
    Rng data_rng(9);
    const LabeledDataset blobs = make_blobs(256, 3, 6.0, data_rng);
    ModelOptions mo;
    auto run = [&]() {
        Net net = build_mlp(2, {8}, 3, mo);
        return train_epochs(net, blobs, blobs, quick_config(42, 0.1, 2));
    };
    const MetricsLog a = run();
    const MetricsLog b = run();
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].loss == b.rows[i].loss);
        CHECK(a.rows[i].accuracy == b.rows[i].accuracy);
        CHECK(a.rows[i].flips_up == b.rows[i].flips_up);
        CHECK(a.rows[i].flips_down == b.rows[i].flips_down);
        CHECK(a.rows[i].weight_entropy == b.rows[i].weight_entropy);
        CHECK(a.rows[i].lr == b.rows[i].lr);
    }
}

TEST_CASE("all-positive prior degenerates to chance-level accuracy") {
    Rng data_rng(90);
    const LabeledDataset blobs = make_blobs(512, 4, 6.0, data_rng);
    ModelOptions mo;
    mo.p_pos = 1.0;  // every code is +1: all filters compute the same function
    Net net = build_mlp(2, {16}, 4, mo);
    const MetricsLog log = train_epochs(net, blobs, blobs, quick_config(2, 0.1, 3));
    CHECK(log.final_test_acc < 0.45);  // chance is 0.25
}

TEST_CASE("ratio persistence and balanced flips on a real training run") {
    Rng data_rng(77);
    const LabeledDataset blobs = make_blobs(512, 3, 4.0, data_rng);
    ModelOptions mo;
    Net net = build_mlp(2, {16, 16}, 3, mo);
    const MetricsLog log = train_epochs(net, blobs, LabeledDataset{}, quick_config(5, 0.1, 3));
    CHECK(log.ratio_violations == 0);
    CHECK(log.flip_imbalance_events == 0);
    CHECK(log.min_weight_entropy == 1.0);
}

TEST_CASE("sign-binarized training drifts away from maximum entropy") {
    Rng data_rng(78);
    const LabeledDataset blobs = make_blobs(512, 3, 4.0, data_rng);
    ModelOptions mo;
    mo.binarizer = BinarizerKind::Sign;
    Net net = build_mlp(2, {16, 16}, 3, mo);
    const MetricsLog log = train_epochs(net, blobs, LabeledDataset{}, quick_config(5, 0.1, 3));
    CHECK(log.min_weight_entropy < 0.999);
}

namespace {

/// Test-only layer: emits NaN after a fixed number of forwards.
class PoisonLayer : public Layer {
public:
    explicit PoisonLayer(int after) : after_(after) {}
    Tensor forward(const Tensor& x, bool) override {
        Tensor y = x;
        if (++calls_ > after_) y.data[0] = std::numeric_limits<float>::quiet_NaN();
        return y;
    }
    Tensor backward(const Tensor& gy) override { return gy; }
    std::string name() const override { return "poison"; }

private:
    int after_, calls_ = 0;
};

}  // namespace

TEST_CASE("non-finite loss aborts with a diagnostic") {
    Rng data_rng(80);
    const LabeledDataset blobs = make_blobs(128, 2, 6.0, data_rng);
    ModelOptions mo;
    Net net = build_mlp(2, {}, 2, mo);
    net.layers.insert(net.layers.begin(), std::make_unique<PoisonLayer>(2));
    CHECK_THROWS_AS(train_epochs(net, blobs, LabeledDataset{}, quick_config(6, 0.1, 2)), TrainAbort);
}

TEST_CASE("weight decay lowers the latent magnitude by run end") {
    Rng data_rng(81);
    const LabeledDataset blobs = make_blobs(512, 3, 4.0, data_rng);
    ModelOptions mo;
    auto run = [&](double wd) {
        Net net = build_mlp(2, {16}, 3, mo);
        TrainConfig cfg = quick_config(7, 0.1, 4);
        cfg.weight_decay = wd;
        return train_epochs(net, blobs, LabeledDataset{}, cfg);
    };
    const MetricsLog no_decay = run(0.0);
    const MetricsLog strong_decay = run(5e-2);
    CHECK(strong_decay.diagnostics.back().latent_abs_mean < no_decay.diagnostics.back().latent_abs_mean);
}

TEST_CASE("cosine decay quiets the flips by the final decile") {
    Rng data_rng(82);
    const LabeledDataset blobs = make_blobs(1024, 3, 4.0, data_rng);
    ModelOptions mo;
    auto run = [&](Schedule s) {
        Net net = build_mlp(2, {16, 16}, 3, mo);
        TrainConfig cfg = quick_config(8, 0.1, 5);
        cfg.schedule = s;
        return train_epochs(net, blobs, LabeledDataset{}, cfg);
    };
    const MetricsLog cosine = run(Schedule::cosine());
    const MetricsLog constant = run(Schedule::constant());

    auto decile_mean = [](const MetricsLog& log, bool first) {
        const std::size_t n = log.diagnostics.size();
        const std::size_t k = std::max<std::size_t>(1, n / 10);
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            s += static_cast<double>(log.diagnostics[first ? i : n - 1 - i].flips);
        }
        return s / static_cast<double>(k);
    };
    const double cosine_head = decile_mean(cosine, true);
    const double cosine_tail = decile_mean(cosine, false);
    const double constant_tail = decile_mean(constant, false);
    CHECK(cosine_tail < 0.25 * std::max(cosine_head, 4.0));  // decays toward zero
    CHECK(cosine_tail <= constant_tail);                     // constant lr keeps flipping
}
