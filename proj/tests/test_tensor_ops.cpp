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
#include "bihalf/ops.hpp"
#include "bihalf/rng.hpp"
#include "bihalf/tensor.hpp"

using namespace bihalf;

TEST_CASE("affine forward hand examples") {
    Tensor x({1, 2}, {1.0f, 2.0f});
    Tensor w({2, 1}, {1.0f, -1.0f});
    const Tensor y = affine_forward(x, w, 1.0f);
    CHECK(y.shape == std::vector<std::size_t>{1, 1});
    CHECK(y.data[0] == -1.0f);

    Tensor eye({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    Tensor w2({2, 2}, {0.3f, -0.2f, 0.7f, 1.5f});
    const Tensor y2 = affine_forward(eye, w2, 1.0f);
    CHECK(y2.data == w2.data);

    Tensor x3({1, 2}, {1.0f, 1.0f});
    Tensor w3({2, 1}, {0.5f, 0.5f});
    CHECK(affine_forward(x3, w3, 2.0f).data[0] == doctest::Approx(2.0f));
}

TEST_CASE("affine rejects bad shapes and scale") {
    Tensor x({1, 3});
    Tensor w({2, 1});
    CHECK_THROWS_AS(affine_forward(x, w, 1.0f), DimensionError);
    Tensor ok({3, 1});
    CHECK_THROWS_AS(affine_forward(x, ok, 0.0f), InputError);
}

TEST_CASE("conv2d hand examples") {
    // 3x3 ones through a 3x3 ones kernel, no padding -> single 9
    Tensor x({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
    Tensor k({1, 1, 3, 3}, std::vector<float>(9, 1.0f));
    const Tensor y = conv2d_forward(x, k, 1.0f, 1, 0);
    CHECK(y.shape == std::vector<std::size_t>{1, 1, 1, 1});
    CHECK(y.data[0] == doctest::Approx(9.0f));

    // delta impulse at (1,1), 2x2 kernel, pad = k-1: correlation writes the
    // flipped kernel into the 2x2 block at (1..2, 1..2)
    Tensor xi({1, 1, 3, 3});
    xi.data[1 * 3 + 1] = 1.0f;
    Tensor k2({1, 1, 2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});  // [[a,b],[c,d]]
    const Tensor yi = conv2d_forward(xi, k2, 1.0f, 1, 1);
    CHECK(yi.shape == std::vector<std::size_t>{1, 1, 4, 4});
    CHECK(yi.data[1 * 4 + 1] == doctest::Approx(4.0f));  // d
    CHECK(yi.data[1 * 4 + 2] == doctest::Approx(3.0f));  // c
    CHECK(yi.data[2 * 4 + 1] == doctest::Approx(2.0f));  // b
    CHECK(yi.data[2 * 4 + 2] == doctest::Approx(1.0f));  // a
    float total = 0.0f;
    for (float v : yi.data) total += v;
    CHECK(total == doctest::Approx(10.0f));  // each kernel tap appears once

    // stride-2 extent
    Tensor x4({1, 1, 4, 4});
    Tensor k4({1, 1, 2, 2});
    const Tensor y4 = conv2d_forward(x4, k4, 1.0f, 2, 0);
    CHECK(y4.shape == std::vector<std::size_t>{1, 1, 2, 2});

    // kernel larger than padded input
    Tensor k9({1, 1, 9, 9});
    CHECK_THROWS_AS(conv2d_forward(x4, k9, 1.0f, 1, 0), DimensionError);
}

TEST_CASE("conv2d with 1x1 kernel equals per-pixel affine") {
    Rng rng(11);
    const std::size_t c = 3, f = 4, h = 5, w = 5;
    Tensor x({1, c, h, w});
    for (auto& v : x.data) v = static_cast<float>(rng.gaussian());
    Tensor k({f, c, 1, 1});
    for (auto& v : k.data) v = static_cast<float>(rng.gaussian());

    const Tensor y = conv2d_forward(x, k, 1.0f, 1, 0);

    // same thing as [h*w, c] rows through W[c, f]
    Tensor rows({h * w, c});
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t p = 0; p < h * w; ++p) rows.data[p * c + ci] = x.data[ci * h * w + p];
    }
    Tensor wm({c, f});
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t fi = 0; fi < f; ++fi) wm.data[ci * f + fi] = k.data[fi * c + ci];
    }
    const Tensor ref = affine_forward(rows, wm, 1.0f);
    for (std::size_t fi = 0; fi < f; ++fi) {
        for (std::size_t p = 0; p < h * w; ++p) {
            CHECK(y.data[fi * h * w + p] == doctest::Approx(ref.data[p * f + fi]).epsilon(1e-6));
        }
    }
}

TEST_CASE("batchnorm hand examples") {
    BatchNorm<float> bn(1, 1e-12f);
    Tensor x({2, 1}, {1.0f, 3.0f});
    const Tensor y = bn.forward(x, true);
    CHECK(y.data[0] == doctest::Approx(-1.0f).epsilon(1e-4));
    CHECK(y.data[1] == doctest::Approx(1.0f).epsilon(1e-4));

    BatchNorm<float> bn2(1);
    Tensor cx({3, 1}, {5.0f, 5.0f, 5.0f});
    const Tensor cy = bn2.forward(cx, true);
    for (float v : cy.data) CHECK(v == doctest::Approx(0.0f));

    BatchNorm<float> bn3(1, 1e-12f);
    bn3.gamma.data[0] = 2.0f;
    bn3.beta.data[0] = 5.0f;
    const Tensor ay = bn3.forward(x, true);
    CHECK(ay.data[0] == doctest::Approx(3.0f).epsilon(1e-4));
    CHECK(ay.data[1] == doctest::Approx(7.0f).epsilon(1e-4));

    Tensor single({1, 1}, {2.0f});
    CHECK_THROWS_AS(bn.forward(single, true), InputError);
    CHECK_THROWS_AS(BatchNorm<float>(1, 0.0f), InputError);
}

TEST_CASE("relu and the hard-tanh gate") {
    Tensor x({1, 3}, {-1.0f, 0.0f, 2.0f});
    CHECK(relu_forward(x).data == std::vector<float>{0.0f, 0.0f, 2.0f});

    Tensor g({1, 3}, {1.0f, 1.0f, 1.0f});
    Tensor xin({1, 3}, {0.5f, 1.5f, -0.9f});
    const Tensor gated = hardtanh_gate_backward(xin, g);
    CHECK(gated.data == std::vector<float>{1.0f, 0.0f, 1.0f});

    CHECK(sign_forward(Tensor({1, 3}, {-0.2f, 0.0f, 3.0f})).data == std::vector<float>{-1.0f, 1.0f, 1.0f});
}

TEST_CASE("softmax cross-entropy values") {
    Tensor uniform({1, 4}, {0.7f, 0.7f, 0.7f, 0.7f});
    std::vector<std::int32_t> l0{0};
    CHECK(softmax_xent(uniform, std::span<const std::int32_t>(l0.data(), 1), nullptr) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-6));

    Tensor confident({1, 3}, {100.0f, 0.0f, 0.0f});
    CHECK(softmax_xent(confident, std::span<const std::int32_t>(l0.data(), 1), nullptr) ==
          doctest::Approx(0.0).epsilon(1e-8));

    Tensor two({1, 2}, {0.0f, std::log(3.0f)});
    CHECK(softmax_xent(two, std::span<const std::int32_t>(l0.data(), 1), nullptr) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-6));

    std::vector<std::int32_t> bad{7};
    CHECK_THROWS_AS(softmax_xent(two, std::span<const std::int32_t>(bad.data(), 1), nullptr), InputError);
}

namespace {

/// Pack x-tensor values into a flat point, rebuild and evaluate a scalar
/// objective sum(R * f(x)) so gradients have a single well-defined value.
template <typename Forward>
double weighted_sum_objective(const std::vector<double>& point, std::vector<std::size_t> shape,
                              const std::vector<double>& r, Forward&& fwd) {
    Tensor64 x(std::move(shape), point);
    const Tensor64 y = fwd(x);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y.data[i];
    return s;
}

}  // namespace

TEST_CASE("finite differences: affine gradients at 1e-5 relative tolerance") {
    Rng rng(21);
    const std::size_t n = 3, in = 4, out = 2;
    Tensor64 x({n, in}), w({in, out});
    for (auto& v : x.data) v = rng.gaussian();
    for (auto& v : w.data) v = rng.gaussian();
    std::vector<double> r(n * out);
    for (auto& v : r) v = rng.gaussian();

    Tensor64 gy({n, out}, r);
    Tensor64 gx, gw;
    affine_backward(x, w, 2.0, gy, &gx, &gw);

    std::vector<double> px = x.data;
    auto fx = [&](const std::vector<double>& p) {
        return weighted_sum_objective(p, {n, in}, r, [&](const Tensor64& t) { return affine_forward(t, w, 2.0); });
    };
    auto rep = finite_diff_check(fx, px, std::span<const double>(gx.data.data(), gx.size()), 1e-5, 1e-6);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err < 1e-6);

    std::vector<double> pw = w.data;
    auto fw = [&](const std::vector<double>& p) {
        return weighted_sum_objective(p, {in, out}, r, [&](const Tensor64& t) { return affine_forward(x, t, 2.0); });
    };
    CHECK(finite_diff_check(fw, pw, std::span<const double>(gw.data.data(), gw.size()), 1e-5, 1e-6).pass);
}

TEST_CASE("finite differences: conv2d gradients") {
    Rng rng(22);
    Tensor64 x({2, 2, 4, 4}), k({3, 2, 2, 2});
    for (auto& v : x.data) v = rng.gaussian();
    for (auto& v : k.data) v = rng.gaussian();
    const Tensor64 y0 = conv2d_forward(x, k, 1.5, 2, 1);
    std::vector<double> r(y0.size());
    for (auto& v : r) v = rng.gaussian();

    Tensor64 gy(y0.shape, r);
    Tensor64 gx, gk;
    conv2d_backward(x, k, 1.5, 2, 1, gy, &gx, &gk);

    std::vector<double> px = x.data;
    auto fx = [&](const std::vector<double>& p) {
        return weighted_sum_objective(p, {2, 2, 4, 4}, r,
                                      [&](const Tensor64& t) { return conv2d_forward(t, k, 1.5, 2, 1); });
    };
    CHECK(finite_diff_check(fx, px, std::span<const double>(gx.data.data(), gx.size()), 1e-5, 1e-5).pass);

    std::vector<double> pk = k.data;
    auto fk = [&](const std::vector<double>& p) {
        return weighted_sum_objective(p, {3, 2, 2, 2}, r,
                                      [&](const Tensor64& t) { return conv2d_forward(x, t, 1.5, 2, 1); });
    };
    CHECK(finite_diff_check(fk, pk, std::span<const double>(gk.data.data(), gk.size()), 1e-5, 1e-5).pass);
}

TEST_CASE("finite differences: batchnorm input and affine-parameter gradients") {
    Rng rng(23);
    const std::size_t n = 6, c = 3;
    Tensor64 x({n, c});
    for (auto& v : x.data) v = rng.gaussian();
    std::vector<double> r(n * c);
    for (auto& v : r) v = rng.gaussian();

    BatchNorm<double> bn(c);
    bn.gamma.data = {1.3, 0.8, -0.4};
    bn.beta.data = {0.1, -0.2, 0.3};
    (void)bn.forward(x, true);
    Tensor64 gy({n, c}, r);
    const Tensor64 gx = bn.backward(gy);

    std::vector<double> px = x.data;
    auto fx = [&](const std::vector<double>& p) {
        BatchNorm<double> fresh(c);
        fresh.gamma.data = bn.gamma.data;
        fresh.beta.data = bn.beta.data;
        return weighted_sum_objective(p, {n, c}, r, [&](const Tensor64& t) { return fresh.forward(t, true); });
    };
    CHECK(finite_diff_check(fx, px, std::span<const double>(gx.data.data(), gx.size()), 1e-5, 1e-5).pass);

    std::vector<double> pg = bn.gamma.data;
    auto fg = [&](const std::vector<double>& p) {
        BatchNorm<double> fresh(c);
        fresh.gamma.data = p;
        fresh.beta.data = bn.beta.data;
        return weighted_sum_objective(x.data, {n, c}, r, [&](const Tensor64& t) { return fresh.forward(t, true); });
    };
    CHECK(finite_diff_check(fg, pg, std::span<const double>(bn.gamma.grad.data(), c), 1e-5, 1e-5).pass);
}

TEST_CASE("finite differences: softmax loss and relu away from the kink") {
    Rng rng(24);
    Tensor64 logits({4, 5});
    for (auto& v : logits.data) v = rng.gaussian();
    std::vector<std::int32_t> labels{0, 3, 2, 4};

    Tensor64 glogits;
    (void)softmax_xent(logits, std::span<const std::int32_t>(labels.data(), labels.size()), &glogits);
    std::vector<double> pl = logits.data;
    auto fl = [&](const std::vector<double>& p) {
        Tensor64 t({4, 5}, p);
        return softmax_xent(t, std::span<const std::int32_t>(labels.data(), labels.size()), nullptr);
    };
    CHECK(finite_diff_check(fl, pl, std::span<const double>(glogits.data.data(), glogits.size()), 1e-6, 1e-5).pass);

    // relu: keep every coordinate at least 0.3 away from the kink
    Tensor64 xr({1, 6});
    double boundary_gap = 1e9;
    for (auto& v : xr.data) {
        v = rng.gaussian();
        if (std::abs(v) < 0.3) v = v < 0 ? v - 0.3 : v + 0.3;
        boundary_gap = std::min(boundary_gap, std::abs(v));
    }
    std::vector<double> rr(6);
    for (auto& v : rr) v = rng.gaussian();
    Tensor64 gyr({1, 6}, rr);
    const Tensor64 gxr = relu_backward(xr, gyr);
    std::vector<double> pr = xr.data;
    auto fr = [&](const std::vector<double>& p) {
        return weighted_sum_objective(p, {1, 6}, rr, [&](const Tensor64& t) { return relu_forward(t); });
    };
    const auto rep =
        finite_diff_check(fr, pr, std::span<const double>(gxr.data.data(), gxr.size()), 1e-5, 1e-6, boundary_gap);
    CHECK(rep.pass);
    CHECK_FALSE(rep.near_boundary);
}

TEST_CASE("finite differences: constant objective has zero gradients") {
    std::vector<double> p{0.4, -0.2, 1.1};
    std::vector<double> zero(3, 0.0);
    auto f = [](const std::vector<double>&) { return 42.0; };
    const auto rep = finite_diff_check(f, p, std::span<const double>(zero.data(), 3), 1e-5, 1e-9);
    CHECK(rep.pass);
    CHECK(rep.max_rel_err == 0.0);
}

TEST_CASE("finite-diff report flags boundary proximity") {
    std::vector<double> p{1e-7};
    std::vector<double> g{1.0};
    auto f = [](const std::vector<double>& q) { return q[0] > 0 ? q[0] : 0.0; };
    const auto rep = finite_diff_check(f, p, std::span<const double>(g.data(), 1), 1e-5, 1e-6, 1e-7);
    CHECK(rep.near_boundary);
}

TEST_CASE("tensor invariants") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.all_finite());
    t.data[4] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1.0f}), DimensionError);

    Rng a(123), b(123);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}
