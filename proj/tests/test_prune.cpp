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
#include <vector>

#include "bihalf/gradcheck.hpp"
#include "bihalf/prune.hpp"
#include "bihalf/quantize.hpp"
#include "bihalf/rng.hpp"

using namespace bihalf;

TEST_CASE("topk_mask keeps the exact count") {
    const std::vector<float> scores{0.9f, 0.1f, 0.5f, 0.3f};
    CHECK(topk_mask(scores, 0.5) == std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(topk_mask(scores, 0.0) == std::vector<std::uint8_t>{1, 1, 1, 1});
    CHECK(topk_mask(scores, 0.75) == std::vector<std::uint8_t>{1, 0, 0, 0});  // keep 4-3=1, the max
    CHECK_THROWS_AS(topk_mask(scores, 1.0), InputError);

    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 1 + rng.below(50);
        std::vector<float> s(d);
        for (auto& v : s) v = static_cast<float>(rng.gaussian());
        const double rho = rng.uniform(0.0, 0.999);
        const auto m = topk_mask(s, rho);
        std::size_t kept = 0;
        for (const auto b : m) kept += b;
        CHECK(kept == keep_count(rho, d));
        CHECK(kept == d - positive_count(rho, d));  // one shared rounding rule
    }
}

TEST_CASE("learned mask recomputes from scores, frozen stays put") {
    std::vector<float> w{0.4f, -0.9f, 0.1f, 0.7f};
    auto learned = PruneMask::learned_from(std::span<const float>(w.data(), w.size()), 0.5);
    CHECK(learned.m == std::vector<std::uint8_t>{0, 1, 0, 1});  // |w| top-2
    learned.scores = {5.0f, 0.1f, 4.0f, 0.2f};
    learned.recompute();
    CHECK(learned.m == std::vector<std::uint8_t>{1, 0, 1, 0});

    auto frozen = PruneMask::frozen({1, 1, 0, 0}, 0.5);
    frozen.recompute();
    CHECK(frozen.m == std::vector<std::uint8_t>{1, 1, 0, 0});
}

TEST_CASE("score gradients pass straight through the selection") {
    std::vector<float> w{0.5f, -0.3f, 0.2f, -0.8f};
    auto mask = PruneMask::learned_from(std::span<const float>(w.data(), w.size()), 0.5);
    // kept: |0.5| and |-0.8| -> m = {1,0,0,1}
    REQUIRE(mask.m == std::vector<std::uint8_t>{1, 0, 0, 1});

    BinaryCode code;
    code.values = {1, 0, 0, -1};
    const std::vector<float> gw{0.25f, -0.5f, 0.0f, 1.5f};
    score_backward(mask, std::span<const float>(gw.data(), gw.size()), code,
                   std::span<const float>(w.data(), w.size()));

    CHECK(mask.score_grad[0] == doctest::Approx(0.25f));   // B=+1
    CHECK(mask.score_grad[3] == doctest::Approx(-1.5f));   // B=-1
    // pruned positions still receive a gradient (sign of the latent weight)
    CHECK(mask.score_grad[1] == doctest::Approx(0.5f));    // sign(-0.3) = -1, g=-0.5
    CHECK(mask.score_grad[2] == doctest::Approx(0.0f));    // zero upstream -> zero

    // frozen mode is a no-op
    auto frozen = PruneMask::frozen({1, 1, 1, 1}, 0.0);
    score_backward(frozen, std::span<const float>(gw.data(), gw.size()), code,
                   std::span<const float>(w.data(), w.size()));
    CHECK(frozen.score_grad.empty());
}

TEST_CASE("score gradient matches finite differences of the soft relaxation") {
    // single unit: y = (s * b) * x, L = y^2 / 2, at a non-boundary point.
    // The straight-through rule gives dL/ds = dL/d(effective weight) * b.
    const double b = -1.0, x = 0.7, s = 0.9;
    auto loss = [&](const std::vector<double>& p) {
        const double y = (p[0] * b) * x;
        return 0.5 * y * y;
    };
    const double y = (s * b) * x;
    const double g_eff = y * x;  // dL/d(s*b)
    const std::vector<double> analytic{g_eff * b};
    std::vector<double> point{s};
    CHECK(finite_diff_check(loss, point, std::span<const double>(analytic.data(), 1), 1e-6, 1e-7).pass);
}

TEST_CASE("masked ratio report") {
    BinaryCode c;
    c.values = {1, -1, 0, 0, -1, 1};
    const auto r = masked_ratio_report(c);
    CHECK(r.positives == 2);
    CHECK(r.negatives == 2);
    CHECK(r.zeros == 2);

    BinaryCode balanced;
    balanced.values.assign(64, 1);
    for (std::size_t i = 0; i < 32; ++i) balanced.values[i] = -1;
    const auto r64 = masked_ratio_report(balanced);
    CHECK(r64.positives == 32);
    CHECK(r64.negatives == 32);
    CHECK(r64.zeros == 0);
}

TEST_CASE("bi-half through an 80 percent mask on 100 weights") {
    Rng rng(17);
    std::vector<float> w(100);
    for (auto& v : w) v = static_cast<float>(rng.gaussian());
    const auto mask = topk_mask(w, 0.8);  // any scores; keep 20
    const auto code = ot_binarize(std::span<const float>(w.data(), w.size()), BernoulliPrior(0.5),
                                  std::span<const std::uint8_t>(mask.data(), mask.size()));
    const auto r = masked_ratio_report(code);
    CHECK(r.positives == 10);
    CHECK(r.negatives == 10);
    CHECK(r.zeros == 80);
}

TEST_CASE("composition invariant: quantize-then-mask equals mask-then-quantize") {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t d = 4 + rng.below(40);
        std::vector<float> w(d);
        for (auto& v : w) v = static_cast<float>(rng.gaussian());
        std::vector<std::uint8_t> mask(d);
        std::size_t alive = 0;
        for (auto& m : mask) alive += (m = rng.uniform() < 0.6 ? 1 : 0);
        if (alive == 0) continue;
        const double p = rng.uniform();

        // route A: direct masked quantization
        const auto direct = ot_binarize(std::span<const float>(w.data(), w.size()), BernoulliPrior(p),
                                        std::span<const std::uint8_t>(mask.data(), mask.size()));

        // route B: gather survivors, quantize the short vector, scatter back
        std::vector<float> survivors;
        std::vector<std::size_t> where;
        for (std::size_t i = 0; i < d; ++i) {
            if (mask[i]) {
                survivors.push_back(w[i]);
                where.push_back(i);
            }
        }
        const auto sub = ot_binarize(survivors, BernoulliPrior(p));
        std::vector<int> scattered(d, 0);
        for (std::size_t j = 0; j < where.size(); ++j) scattered[where[j]] = sub[j];

        for (std::size_t i = 0; i < d; ++i) CHECK(static_cast<int>(direct[i]) == scattered[i]);
    }
}
