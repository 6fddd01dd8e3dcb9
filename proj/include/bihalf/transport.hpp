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
#include "bihalf/quantize.hpp"

namespace bihalf {

/// The two empirical distributions the quantizer aligns: uniform mass 1/D on
/// the latent weights, and (p_neg, p_pos) mass on the two code locations.
struct EmpiricalPair {
    std::vector<double> source;  // latent weights, each with mass 1/D
    BernoulliPrior target;       // masses (1 - p_pos, p_pos) at {-1, +1}

    EmpiricalPair(std::vector<double> w, BernoulliPrior prior) : source(std::move(w)), target(prior) {
        if (source.empty()) throw InputError("EmpiricalPair: empty source");
    }
};

/// Result of the exhaustive transport search: the minimum cost and every
/// assignment attaining it, each encoded as a bitmask of the positions that
/// receive +1.
struct TransportSolution {
    double min_cost = 0.0;
    std::size_t positives = 0;              // k, the enforced +1 count
    std::vector<std::uint32_t> minimizers;  // bit i set <=> position i -> +1
};

/// Cost of one assignment under the absolute-difference ground cost,
/// sum_i |w_i - b_i| / D, accumulated in ascending index order so equal
/// assignments always produce bitwise-equal doubles.
///
/// The ground cost is |.|; for the 1-D two-point target the squared cost
/// selects the same assignments, so certifying against |.| certifies both.
inline double transport_cost(std::span<const double> w, std::uint32_t positive_mask) {
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double b = (positive_mask >> i) & 1u ? 1.0 : -1.0;
        total += std::abs(w[i] - b);
    }
    return total / static_cast<double>(w.size());
}

inline double transport_cost(std::span<const double> w, const BinaryCode& code) {
    if (code.size() != w.size()) throw DimensionError("transport_cost: code length mismatch");
    std::uint32_t mask = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (code[i] > 0) mask |= (1u << i);
    }
    return transport_cost(w, mask);
}

/// Exact minimizer of the 1-Wasserstein alignment by exhaustive enumeration
/// of every assignment with exactly k = positive_count(p_pos, D) positives.
/// Exists to certify the sorting closed form; capped at D <= 16.
inline TransportSolution wasserstein_oracle(std::span<const double> w, const BernoulliPrior& prior) {
    const std::size_t d = w.size();
    if (d == 0) throw InputError("wasserstein_oracle: empty weight vector");
    if (d > 16) throw CapacityError("wasserstein_oracle: D > 16 is not enumerable here");

    TransportSolution sol;
    sol.positives = positive_count(prior.p_pos, d);

    // Gosper's hack over all k-subsets of d bits (k = 0 handled separately).
    bool first = true;
    auto consider = [&](std::uint32_t subset) {
        const double cost = transport_cost(w, subset);
        if (first || cost < sol.min_cost) {
            first = false;
            sol.min_cost = cost;
            sol.minimizers.assign(1, subset);
        } else if (cost == sol.min_cost) {
            sol.minimizers.push_back(subset);
        }
    };

    if (sol.positives == 0) {
        consider(0u);
        return sol;
    }
    const std::uint32_t limit = 1u << d;
    std::uint32_t subset = (1u << sol.positives) - 1u;
    while (subset < limit) {
        consider(subset);
        const std::uint32_t c = subset & static_cast<std::uint32_t>(-static_cast<std::int32_t>(subset));
        const std::uint32_t r = subset + c;
        if (r >= limit) break;
        subset = (((r ^ subset) >> 2) / c) | r;
    }
    return sol;
}

inline TransportSolution wasserstein_oracle(const std::vector<double>& w, const BernoulliPrior& prior) {
    return wasserstein_oracle(std::span<const double>(w.data(), w.size()), prior);
}

inline TransportSolution wasserstein_oracle(const EmpiricalPair& pair) {
    return wasserstein_oracle(std::span<const double>(pair.source.data(), pair.source.size()), pair.target);
}

}  // namespace bihalf
