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
#include "bihalf/tensor.hpp"

namespace bihalf {

/// Target two-point distribution over {-1,+1}: P(+1) = p_pos, P(-1) = 1 - p_pos.
struct BernoulliPrior {
    double p_pos = 0.5;

    BernoulliPrior() = default;
    explicit BernoulliPrior(double p) : p_pos(p) {
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("p_pos must lie in [0,1]");
    }

    double p_neg() const { return 1.0 - p_pos; }
};

/// Code vector over {-1,+1}, or {-1,0,+1} once a prune mask has zeroed entries.
/// Always derived from latent weights; never trained on its own.
struct BinaryCode {
    std::vector<std::int8_t> values;

    std::size_t size() const { return values.size(); }
    std::int8_t operator[](std::size_t i) const { return values[i]; }

    std::size_t count(std::int8_t symbol) const {
        return static_cast<std::size_t>(std::count(values.begin(), values.end(), symbol));
    }
};

/// sign with the shared zero convention sign(0) := +1.
inline std::int8_t sign_of(double x) { return x >= 0.0 ? std::int8_t{1} : std::int8_t{-1}; }

/// Number of +1 symbols a prior implies for a code of length D:
/// round-half-up of p_pos * D, clamped to [0, D].
inline std::size_t positive_count(double p_pos, std::size_t d) {
    if (!(p_pos >= 0.0 && p_pos <= 1.0)) throw InputError("p_pos must lie in [0,1]");
    const double k = std::floor(p_pos * static_cast<double>(d) + 0.5);
    if (k <= 0.0) return 0;
    if (k >= static_cast<double>(d)) return d;
    return static_cast<std::size_t>(k);
}

namespace detail {

/// Indices of w sorted by descending value; equal values keep ascending
/// index order, so the assignment (and therefore flip accounting) is
/// deterministic.
template <typename T>
std::vector<std::size_t> descending_order(std::span<const T> w) {
    std::vector<std::size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (w[a] != w[b]) return w[a] > w[b];
        return a < b;
    });
    return idx;
}

}  // namespace detail

/// 1-Wasserstein alignment of a latent weight vector with a Bernoulli prior.
///
/// The minimizer of the transport cost between the empirical weight
/// distribution and the two-point target has a closed form: sort the weights
/// and assign +1 to the top positive_count(p_pos, D) of them, -1 to the rest.
/// With a mask, only unmasked positions participate and D becomes the mask
/// popcount; masked positions code to 0.
///
/// Depends only on the rank order of w, so any strictly increasing transform
/// of the weights leaves the code unchanged.
template <typename T>
BinaryCode ot_binarize(std::span<const T> w, const BernoulliPrior& prior,
                       std::span<const std::uint8_t> mask = {}) {
    const std::size_t d = w.size();
    if (d == 0) throw InputError("ot_binarize: empty weight vector");
    if (!mask.empty() && mask.size() != d) throw DimensionError("ot_binarize: mask length mismatch");

    BinaryCode code;
    code.values.assign(d, std::int8_t{-1});

    if (mask.empty()) {
        const std::size_t k = positive_count(prior.p_pos, d);
        const auto order = detail::descending_order(w);
        for (std::size_t r = 0; r < k; ++r) code.values[order[r]] = 1;
        return code;
    }

    std::vector<std::size_t> alive;
    alive.reserve(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (mask[i]) {
            alive.push_back(i);
        } else {
            code.values[i] = 0;
        }
    }
    if (alive.empty()) throw InputError("ot_binarize: mask leaves no weights");

    const std::size_t k = positive_count(prior.p_pos, alive.size());
    std::sort(alive.begin(), alive.end(), [&](std::size_t a, std::size_t b) {
        if (w[a] != w[b]) return w[a] > w[b];
        return a < b;
    });
    for (std::size_t r = 0; r < k; ++r) code.values[alive[r]] = 1;
    for (std::size_t r = k; r < alive.size(); ++r) code.values[alive[r]] = -1;
    return code;
}

template <typename T>
BinaryCode ot_binarize(const std::vector<T>& w, const BernoulliPrior& prior,
                       std::span<const std::uint8_t> mask = {}) {
    return ot_binarize(std::span<const T>(w.data(), w.size()), prior, mask);
}

/// Elementwise sign binarization (the classical baseline).
template <typename T>
BinaryCode sign_binarize(std::span<const T> w) {
    BinaryCode code;
    code.values.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) code.values[i] = sign_of(static_cast<double>(w[i]));
    return code;
}

template <typename T>
BinaryCode sign_binarize(const std::vector<T>& w) {
    return sign_binarize(std::span<const T>(w.data(), w.size()));
}

/// Mean-centered, std-normalized sign (IR-Net-style filter statistics).
/// The positive std never changes a sign, so only the mean shift matters for
/// the code. A constant filter has zero std; the zero convention then yields
/// all +1 and `constant_filter`, when given, is set.
template <typename T>
BinaryCode irnet_binarize(std::span<const T> w, bool* constant_filter = nullptr) {
    const std::size_t d = w.size();
    if (d < 2) throw InputError("irnet_binarize: needs at least 2 weights");
    double mean = 0.0;
    for (const T v : w) mean += static_cast<double>(v);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (const T v : w) {
        const double c = static_cast<double>(v) - mean;
        var += c * c;
    }
    if (constant_filter) *constant_filter = (var == 0.0);

    BinaryCode code;
    code.values.resize(d);
    for (std::size_t i = 0; i < d; ++i) code.values[i] = sign_of(static_cast<double>(w[i]) - mean);
    return code;
}

template <typename T>
BinaryCode irnet_binarize(const std::vector<T>& w, bool* constant_filter = nullptr) {
    return irnet_binarize(std::span<const T>(w.data(), w.size()), constant_filter);
}

/// Binary entropy in bits of the empirical +1 fraction, with 0*log0 := 0.
inline double binary_entropy_bits(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Entropy (bits) of the +1/-1 split among the nonzero entries of a code.
/// Pruned (zero) entries are excluded; a fully pruned code has no
/// distribution to measure.
inline double weight_entropy(const BinaryCode& code) {
    if (code.values.empty()) throw InputError("weight_entropy: empty code");
    std::size_t pos = 0, nonzero = 0;
    for (const std::int8_t v : code.values) {
        if (v == 0) continue;
        ++nonzero;
        if (v > 0) ++pos;
    }
    if (nonzero == 0) throw InputError("weight_entropy: all entries pruned");
    return binary_entropy_bits(static_cast<double>(pos) / static_cast<double>(nonzero));
}

/// Per-channel entropy (bits) of sign-binarized activations: the +1 fraction
/// is taken over batch x spatial positions of each channel. Channel axis is
/// axis 1 for both NxF and NxCxHxW tensors.
template <typename T>
std::vector<double> activation_entropy(const TensorT<T>& a) {
    if (a.shape.size() < 2) throw DimensionError("activation_entropy: needs a batched tensor");
    const std::size_t n = a.shape[0];
    const std::size_t c = a.shape[1];
    std::size_t spatial = 1;
    for (std::size_t axis = 2; axis < a.shape.size(); ++axis) spatial *= a.shape[axis];

    std::vector<double> out(c, 0.0);
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* base = a.data.data() + (i * c + ch) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
                if (base[s] > T(0)) ++pos;
            }
        }
        out[ch] = binary_entropy_bits(static_cast<double>(pos) / static_cast<double>(n * spatial));
    }
    return out;
}

}  // namespace bihalf
