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
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "bihalf/common.hpp"

namespace bihalf {

/// 12-parameter binary toy net sigma(w2^T sigma(w1^T x + b1)) on 2-D inputs,
/// with every parameter in {-1,+1}. Packed into 12 bits: bit i*3+j is
/// w1[i][j] (i input, j hidden unit), bits 6..8 are b1, bits 9..11 are w2.
/// A set bit means +1.
struct ToyNet {
    std::uint16_t bits = 0;

    static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

    static double pm(std::uint16_t bits, int bit) { return (bits >> bit) & 1 ? 1.0 : -1.0; }

    double output(double x1, double x2) const {
        double z = 0.0;
        for (int j = 0; j < 3; ++j) {
            const double pre = pm(bits, 0 * 3 + j) * x1 + pm(bits, 1 * 3 + j) * x2 + pm(bits, 6 + j);
            z += pm(bits, 9 + j) * sigmoid(pre);
        }
        return sigmoid(z);
    }

    /// Class decision: output >= 1/2.
    bool decide(double x1, double x2) const { return output(x1, x2) >= 0.5; }

    int n_neg() const { return 12 - std::popcount(static_cast<unsigned>(bits & 0x0FFF)); }
};

/// Raster of cell centers over [-1,1]^2.
struct ToyGrid {
    int resolution = 64;
    double lo = -1.0, hi = 1.0;

    double coord(int i) const {
        return lo + (static_cast<double>(i) + 0.5) * (hi - lo) / static_cast<double>(resolution);
    }
    std::size_t cells() const { return static_cast<std::size_t>(resolution) * resolution; }
};

/// The labeling a net induces on the grid, packed as a bitset. Two parameter
/// vectors describe the same decision boundary iff their fingerprints are
/// equal up to global complement (swapping which side is called class 1
/// leaves the boundary untouched); raw labeling equality is also tracked.
using Fingerprint = std::vector<std::uint64_t>;

/// Boundary-canonical form: the lexicographically smaller of the labeling
/// and its complement (padding bits cleared).
inline Fingerprint canonical_boundary(Fingerprint fp, std::size_t cells) {
    Fingerprint neg = fp;
    for (auto& word : neg) word = ~word;
    const std::size_t padding = neg.size() * 64 - cells;
    if (padding) neg.back() &= (~std::uint64_t{0}) >> padding;
    return fp < neg ? fp : neg;
}

namespace toy_detail {

/// Per grid point, sigma(s1*x1 + s2*x2 + s3) for all 8 sign combinations
/// (s1,s2,s3 indexed by bits 0,1,2). Shared across all 4096 nets.
inline std::vector<std::array<double, 8>> hidden_tables(const ToyGrid& grid) {
    std::vector<std::array<double, 8>> tab(grid.cells());
    std::size_t p = 0;
    for (int iy = 0; iy < grid.resolution; ++iy) {
        const double y = grid.coord(iy);
        for (int ix = 0; ix < grid.resolution; ++ix, ++p) {
            const double x = grid.coord(ix);
            for (int combo = 0; combo < 8; ++combo) {
                const double s1 = (combo & 1) ? 1.0 : -1.0;
                const double s2 = (combo & 2) ? 1.0 : -1.0;
                const double s3 = (combo & 4) ? 1.0 : -1.0;
                tab[p][combo] = ToyNet::sigmoid(s1 * x + s2 * y + s3);
            }
        }
    }
    return tab;
}

}  // namespace toy_detail

/// Fingerprint of one net; grid cells are scanned row-major (y outer).
inline Fingerprint fingerprint(const ToyNet& net, const ToyGrid& grid) {
    const auto tab = toy_detail::hidden_tables(grid);
    Fingerprint fp((grid.cells() + 63) / 64, 0);
    for (std::size_t p = 0; p < tab.size(); ++p) {
        double z = 0.0;
        for (int j = 0; j < 3; ++j) {
            const int combo = ((net.bits >> (0 + j)) & 1) | (((net.bits >> (3 + j)) & 1) << 1) |
                              (((net.bits >> (6 + j)) & 1) << 2);
            z += ToyNet::pm(net.bits, 9 + j) * tab[p][combo];
        }
        if (ToyNet::sigmoid(z) >= 0.5) fp[p / 64] |= (std::uint64_t{1} << (p % 64));
    }
    return fp;
}

/// Fingerprints of all 4096 parameter vectors, indexed by the packed bits.
inline std::vector<Fingerprint> all_fingerprints(const ToyGrid& grid) {
    const auto tab = toy_detail::hidden_tables(grid);
    const std::size_t words = (grid.cells() + 63) / 64;
    std::vector<Fingerprint> fps(4096, Fingerprint(words, 0));
    for (std::uint32_t bits = 0; bits < 4096; ++bits) {
        int combo[3];
        double w2[3];
        for (int j = 0; j < 3; ++j) {
            combo[j] = ((bits >> (0 + j)) & 1) | (((bits >> (3 + j)) & 1) << 1) | (((bits >> (6 + j)) & 1) << 2);
            w2[j] = (bits >> (9 + j)) & 1 ? 1.0 : -1.0;
        }
        Fingerprint& fp = fps[bits];
        for (std::size_t p = 0; p < tab.size(); ++p) {
            const double z = w2[0] * tab[p][combo[0]] + w2[1] * tab[p][combo[1]] + w2[2] * tab[p][combo[2]];
            if (ToyNet::sigmoid(z) >= 0.5) fp[p / 64] |= (std::uint64_t{1} << (p % 64));
        }
    }
    return fps;
}

struct EnumerationResult {
    std::size_t combinations = 0;
    std::size_t unique_solutions = 0;  // distinct decision boundaries
    std::size_t unique_labelings = 0;  // distinct raw labelings
};

inline std::size_t count_unique(std::vector<Fingerprint> fps) {
    std::sort(fps.begin(), fps.end());
    return static_cast<std::size_t>(std::unique(fps.begin(), fps.end()) - fps.begin());
}

namespace toy_detail {

inline EnumerationResult summarize(const std::vector<Fingerprint>& slice, std::size_t cells) {
    EnumerationResult r;
    r.combinations = slice.size();
    std::vector<Fingerprint> canon;
    canon.reserve(slice.size());
    for (const auto& fp : slice) canon.push_back(canonical_boundary(fp, cells));
    r.unique_solutions = count_unique(std::move(canon));
    r.unique_labelings = count_unique(slice);
    return r;
}

}  // namespace toy_detail

/// Full enumeration of all 2^12 parameter vectors.
inline EnumerationResult enumerate_all(const ToyGrid& grid) {
    return toy_detail::summarize(all_fingerprints(grid), grid.cells());
}

/// Enumeration restricted to parameter vectors with exactly n_neg negative
/// weights; the combination count is the binomial C(12, n_neg).
inline EnumerationResult enumerate_ratio(int n_neg, const ToyGrid& grid) {
    if (n_neg < 0 || n_neg > 12) throw InputError("n_neg must lie in [0,12]");
    const auto fps = all_fingerprints(grid);
    std::vector<Fingerprint> slice;
    for (std::uint32_t bits = 0; bits < 4096; ++bits) {
        if (ToyNet{static_cast<std::uint16_t>(bits)}.n_neg() == n_neg) slice.push_back(fps[bits]);
    }
    return toy_detail::summarize(slice, grid.cells());
}

struct SolutionSpaceRow {
    int n_neg = 0;
    std::size_t combinations = 0;
    std::size_t unique_solutions = 0;
    std::size_t unique_labelings = 0;
};

/// One row per n_neg in 0..12, computed from a single enumeration pass.
inline std::vector<SolutionSpaceRow> solution_space(const ToyGrid& grid) {
    const auto fps = all_fingerprints(grid);
    std::vector<std::vector<Fingerprint>> slices(13);
    for (std::uint32_t bits = 0; bits < 4096; ++bits) {
        slices[static_cast<std::size_t>(ToyNet{static_cast<std::uint16_t>(bits)}.n_neg())].push_back(fps[bits]);
    }
    std::vector<SolutionSpaceRow> rows(13);
    for (int n = 0; n <= 12; ++n) {
        const auto r = toy_detail::summarize(slices[static_cast<std::size_t>(n)], grid.cells());
        rows[static_cast<std::size_t>(n)] = {n, r.combinations, r.unique_solutions, r.unique_labelings};
    }
    return rows;
}

inline void emit_solution_space_csv(const std::vector<SolutionSpaceRow>& rows, std::ostream& out) {
    out << "n_neg,combinations,unique_solutions,unique_labelings\n";
    for (const auto& r : rows) {
        out << r.n_neg << ',' << r.combinations << ',' << r.unique_solutions << ',' << r.unique_labelings << '\n';
    }
    if (!out) throw FormatError("solution space CSV write failed");
}

/// Binary PGM (P5) raster of a fingerprint for eyeballing a decision region.
inline void write_fingerprint_pgm(const Fingerprint& fp, const ToyGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out << "P5\n" << grid.resolution << ' ' << grid.resolution << "\n255\n";
    for (std::size_t p = 0; p < grid.cells(); ++p) {
        const bool on = (fp[p / 64] >> (p % 64)) & 1;
        out.put(on ? static_cast<char>(255) : static_cast<char>(0));
    }
}

}  // namespace bihalf
