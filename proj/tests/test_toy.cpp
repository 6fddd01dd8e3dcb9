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
#include <fstream>
#include <sstream>

#include "bihalf/toy.hpp"

using namespace bihalf;

namespace {

std::size_t binomial_12(int k) {
    static const std::size_t c[13] = {1, 12, 66, 220, 495, 792, 924, 792, 495, 220, 66, 12, 1};
    return c[k];
}

}  // namespace

TEST_CASE("toy net evaluates the stated formula") {
    ToyNet all_pos{0x0FFF};
    // at the origin every hidden unit sees bias +1: z = 3*sigmoid(1)
    const double h = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(all_pos.output(0.0, 0.0) == doctest::Approx(1.0 / (1.0 + std::exp(-3.0 * h))));
    CHECK(all_pos.decide(0.0, 0.0));
    CHECK(all_pos.n_neg() == 0);

    ToyNet all_neg{0x0000};
    CHECK(all_neg.n_neg() == 12);
    CHECK_FALSE(all_neg.decide(0.0, 0.0));
}

TEST_CASE("full enumeration covers 4096 combinations") {
    const ToyGrid grid{16};  // small grid keeps this test quick
    const auto full = enumerate_all(grid);
    CHECK(full.combinations == 4096);
    CHECK(full.unique_solutions > 1);
    CHECK(full.unique_labelings >= full.unique_solutions);
}

TEST_CASE("per-ratio combination counts are exact binomials") {
    const ToyGrid grid{16};
    const auto rows = solution_space(grid);
    REQUIRE(rows.size() == 13);
    std::size_t total = 0;
    for (int n = 0; n <= 12; ++n) {
        CHECK(rows[static_cast<std::size_t>(n)].combinations == binomial_12(n));
        total += rows[static_cast<std::size_t>(n)].combinations;
    }
    CHECK(total == 4096);
    CHECK(rows[6].combinations == 924);
    CHECK(rows[0].combinations == 1);
    CHECK(rows[0].unique_solutions == 1);
}

TEST_CASE("equal bit ratio has the most unique boundaries; retention >= 80%") {
    const ToyGrid grid{64};  // the default resolution
    const auto rows = solution_space(grid);
    const auto full = enumerate_all(grid);
    std::size_t best_n = 0, best_u = 0;
    for (const auto& r : rows) {
        if (r.unique_solutions > best_u) {
            best_u = r.unique_solutions;
            best_n = static_cast<std::size_t>(r.n_neg);
        }
    }
    CHECK(best_n == 6);
    CHECK(static_cast<double>(rows[6].unique_solutions) >= 0.8 * static_cast<double>(full.unique_solutions));
}

TEST_CASE("unique counts are monotone non-decreasing in grid resolution") {
    std::size_t prev_full = 0, prev_half = 0;
    for (const int res : {32, 64, 128}) {
        const ToyGrid grid{res};
        const auto full = enumerate_all(grid);
        const auto half = enumerate_ratio(6, grid);
        CHECK(full.unique_solutions >= prev_full);
        CHECK(half.unique_solutions >= prev_half);
        prev_full = full.unique_solutions;
        prev_half = half.unique_solutions;
    }
}

TEST_CASE("enumerate_ratio agrees with the batched solution space") {
    const ToyGrid grid{32};
    const auto rows = solution_space(grid);
    for (const int n : {0, 3, 6, 9, 12}) {
        const auto r = enumerate_ratio(n, grid);
        CHECK(r.combinations == rows[static_cast<std::size_t>(n)].combinations);
        CHECK(r.unique_solutions == rows[static_cast<std::size_t>(n)].unique_solutions);
    }
    CHECK_THROWS_AS(enumerate_ratio(13, grid), InputError);
}

TEST_CASE("solution space CSV has 13 rows and a header") {
    const ToyGrid grid{16};
    const auto rows = solution_space(grid);
    std::ostringstream out;
    emit_solution_space_csv(rows, out);
    const std::string text = out.str();
    std::size_t lines = 0;
    for (const char ch : text) lines += ch == '\n';
    CHECK(lines == 14);  // header + 13 data rows
    CHECK(text.rfind("n_neg,combinations,unique_solutions,unique_labelings\n", 0) == 0);
}

TEST_CASE("fingerprint basics and PGM dump") {
    const ToyGrid grid{32};
    const ToyNet net{0x0FFF};
    const Fingerprint fp = fingerprint(net, grid);
    CHECK(fp.size() == (grid.cells() + 63) / 64);

    // the all-positive net labels the whole grid as class 1
    std::size_t ones = 0;
    for (std::size_t p = 0; p < grid.cells(); ++p) ones += (fp[p / 64] >> (p % 64)) & 1;
    CHECK(ones == grid.cells());

    // canonical boundary form identifies a labeling with its complement
    Fingerprint flipped = fp;
    for (auto& w : flipped) w = ~w;
    const std::size_t pad = flipped.size() * 64 - grid.cells();
    if (pad) flipped.back() &= (~std::uint64_t{0}) >> pad;
    CHECK(canonical_boundary(fp, grid.cells()) == canonical_boundary(flipped, grid.cells()));

    const std::string path = "/tmp/bihalf_test_fp.pgm";
    write_fingerprint_pgm(fp, grid, path);
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    REQUIRE(in.good());
    CHECK(static_cast<std::size_t>(in.tellg()) > grid.cells());  // header + payload
}
