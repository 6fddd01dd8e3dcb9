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
#include <limits>
#include <span>
#include <vector>

namespace bihalf {

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    bool pass = false;
    /// Set when the evaluation point sits within 2h of a stated
    /// non-differentiability boundary; the comparison is then unreliable.
    bool near_boundary = false;
};

/// Compare an analytic gradient against central finite differences of a
/// scalar objective. Runs in f64 regardless of the training precision.
///
/// `objective` is any callable double-vector -> double; `point` is perturbed
/// in place and restored. `boundary_gap`, when finite, is the caller-known
/// distance to the nearest kink (e.g. a quantizer rank boundary).
template <typename Objective>
FiniteDiffReport finite_diff_check(Objective&& objective, std::vector<double>& point,
                                   std::span<const double> analytic_grad, double h, double tol,
                                   double boundary_gap = std::numeric_limits<double>::infinity()) {
    FiniteDiffReport report;
    report.near_boundary = boundary_gap <= 2.0 * h;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + h;
        const double fp = objective(point);
        point[i] = saved - h;
        const double fm = objective(point);
        point[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = analytic_grad[i];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        const double rel = std::abs(numeric - analytic) / scale;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_index = i;
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace bihalf
