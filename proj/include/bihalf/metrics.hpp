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

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/train.hpp"

namespace bihalf {

/// Stable float formatting so identical runs emit byte-identical files.
inline std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline void write_metrics_csv(const MetricsLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "iteration,epoch,split,loss,accuracy,flips_up,flips_down,weight_entropy,lr\n";
    for (const auto& r : log.rows) {
        out << r.iteration << ',' << r.epoch << ',' << r.split << ',' << fmt_g(r.loss) << ',' << fmt_g(r.accuracy)
            << ',' << r.flips_up << ',' << r.flips_down << ',' << fmt_g(r.weight_entropy) << ',' << fmt_g(r.lr)
            << '\n';
    }
}

inline void write_diagnostics_csv(const MetricsLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << "iteration,latent_abs_mean,grad_abs_mean,flips\n";
    for (const auto& d : log.diagnostics) {
        out << d.iteration << ',' << fmt_g(d.latent_abs_mean) << ',' << fmt_g(d.grad_abs_mean) << ',' << d.flips
            << '\n';
    }
}

}  // namespace bihalf
