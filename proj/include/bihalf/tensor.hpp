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
#include <cstddef>
#include <numeric>
#include <sstream>
#include <vector>

#include "bihalf/common.hpp"

namespace bihalf {

/// Dense row-major tensor with a lazily allocated gradient buffer.
///
/// Training buffers use the f32 alias `Tensor`; verification code (the
/// finite-difference checker and the transport oracle) instantiates the
/// f64 variant.
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until ensure_grad()

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(count(shape), fill);
    }

    TensorT(std::vector<std::size_t> s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != count(shape)) {
            throw DimensionError("tensor data length does not match shape product");
        }
    }

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const { return data.size(); }

    std::size_t extent(std::size_t axis) const { return axis < shape.size() ? shape[axis] : 1; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }

    /// NaN/Inf anywhere in the value buffer counts as corruption.
    bool all_finite() const {
        for (const T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* where) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(where) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace bihalf
