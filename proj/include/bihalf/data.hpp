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
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <span>
#include <string>
#include <vector>

#include "bihalf/common.hpp"
#include "bihalf/rng.hpp"
#include "bihalf/tensor.hpp"

namespace bihalf {

/// u8 image payload (N x C x H x W, row-major) with integer labels.
/// Normalization constants are in [0,1] pixel units and applied lazily when
/// a batch is materialized as floats.
struct LabeledDataset {
    std::size_t n = 0, c = 1, h = 0, w = 0;
    std::vector<std::uint8_t> images;  // n*c*h*w bytes
    std::vector<std::int32_t> labels;
    int num_classes = 0;
    std::vector<double> mean{0.5};  // per channel
    std::vector<double> stdev{0.5};

    std::size_t image_size() const { return c * h * w; }

    void validate() const {
        if (labels.size() != n) throw LengthError("dataset: label count != image count");
        if (images.size() != n * image_size()) throw LengthError("dataset: image payload size mismatch");
        for (const auto l : labels) {
            if (l < 0 || l >= num_classes) throw FormatError("dataset: label out of range");
        }
    }

    /// Materialize the indexed subset as a normalized float batch. When an
    /// augmentation rng is supplied, each image is randomly shifted within
    /// +-pad (zero-filled) and horizontally flipped with probability 1/2.
    Tensor batch_images(std::span<const std::size_t> idx, Rng* augment_rng = nullptr, int pad = 2) const {
        Tensor x({idx.size(), c, h, w});
        const std::size_t isz = image_size();
        for (std::size_t bi = 0; bi < idx.size(); ++bi) {
            const std::uint8_t* src = images.data() + idx[bi] * isz;
            float* dst = x.data.data() + bi * isz;
            int dx = 0, dy = 0;
            bool flip = false;
            if (augment_rng) {
                dx = static_cast<int>(augment_rng->below(2 * pad + 1)) - pad;
                dy = static_cast<int>(augment_rng->below(2 * pad + 1)) - pad;
                flip = augment_rng->below(2) != 0;
            }
            for (std::size_t ch = 0; ch < c; ++ch) {
                const float m = static_cast<float>(mean[ch % mean.size()]);
                const float s = static_cast<float>(stdev[ch % stdev.size()]);
                for (std::size_t y = 0; y < h; ++y) {
                    for (std::size_t xx = 0; xx < w; ++xx) {
                        const std::int64_t sy = static_cast<std::int64_t>(y) + dy;
                        std::int64_t sx = static_cast<std::int64_t>(xx) + dx;
                        if (flip) sx = static_cast<std::int64_t>(w) - 1 - sx;
                        float v = 0.0f;
                        if (sy >= 0 && sy < static_cast<std::int64_t>(h) && sx >= 0 &&
                            sx < static_cast<std::int64_t>(w)) {
                            v = static_cast<float>(src[ch * h * w + static_cast<std::size_t>(sy) * w +
                                                       static_cast<std::size_t>(sx)]) /
                                255.0f;
                        }
                        dst[ch * h * w + y * w + xx] = (v - m) / s;
                    }
                }
            }
        }
        return x;
    }

    std::vector<std::int32_t> batch_labels(std::span<const std::size_t> idx) const {
        std::vector<std::int32_t> out(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
        return out;
    }

    LabeledDataset subset(std::size_t count) const {
        LabeledDataset d = *this;
        d.n = std::min(count, n);
        d.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(d.n * image_size()));
        d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(d.n));
        return d;
    }
};

// ---------------------------------------------------------------------------
// IDX (big-endian) format. Image files carry magic 0x00000803 and dimensions
// (count, rows, cols); label files carry magic 0x00000801 and a count.
// ---------------------------------------------------------------------------

namespace idx {

constexpr std::uint32_t kImageMagic = 0x00000803;  // 2051
constexpr std::uint32_t kLabelMagic = 0x00000801;  // 2049

inline std::uint32_t read_be32(std::istream& in) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw LengthError("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                               static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

struct Images {
    std::uint32_t count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels;
};

inline Images load_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("idx: cannot open " + path);
    const std::uint32_t magic = read_be32(in);
    if (magic != kImageMagic) throw FormatError("idx: bad image magic in " + path);
    Images img;
    img.count = read_be32(in);
    img.rows = read_be32(in);
    img.cols = read_be32(in);
    const std::size_t want = std::size_t(img.count) * img.rows * img.cols;
    img.pixels.resize(want);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(want));
    if (static_cast<std::size_t>(in.gcount()) != want) throw LengthError("idx: truncated image payload in " + path);
    return img;
}

inline std::vector<std::uint8_t> load_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("idx: cannot open " + path);
    const std::uint32_t magic = read_be32(in);
    if (magic != kLabelMagic) throw FormatError("idx: bad label magic in " + path);
    const std::uint32_t count = read_be32(in);
    std::vector<std::uint8_t> labels(count);
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in.gcount()) != count) throw LengthError("idx: truncated label payload in " + path);
    return labels;
}

inline void save_images(const std::string& path, const Images& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("idx: cannot write " + path);
    write_be32(out, kImageMagic);
    write_be32(out, img.count);
    write_be32(out, img.rows);
    write_be32(out, img.cols);
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

inline void save_labels(const std::string& path, std::span<const std::uint8_t> labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("idx: cannot write " + path);
    write_be32(out, kLabelMagic);
    write_be32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace idx

/// Pair of IDX files -> dataset. Conventional MNIST normalization by default.
inline LabeledDataset load_idx_dataset(const std::string& image_path, const std::string& label_path,
                                       int num_classes = 10) {
    const idx::Images img = idx::load_images(image_path);
    const std::vector<std::uint8_t> raw_labels = idx::load_labels(label_path);
    if (raw_labels.size() != img.count) throw LengthError("idx: image/label counts disagree");

    LabeledDataset d;
    d.n = img.count;
    d.c = 1;
    d.h = img.rows;
    d.w = img.cols;
    d.images = img.pixels;
    d.labels.assign(raw_labels.begin(), raw_labels.end());
    d.num_classes = num_classes;
    d.mean = {0.1307};
    d.stdev = {0.3081};
    d.validate();
    return d;
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches: whole 3073-byte records, 1 label byte followed by
// 3x32x32 channel-planar pixels.
// ---------------------------------------------------------------------------

inline LabeledDataset load_cifar10_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw FormatError("cifar10: cannot open " + path);
    const std::streamsize size = in.tellg();
    in.seekg(0);
    constexpr std::streamsize record = 3073;
    if (size % record != 0) throw LengthError("cifar10: file size is not a multiple of 3073 bytes");
    const std::size_t n = static_cast<std::size_t>(size / record);

    LabeledDataset d;
    d.n = n;
    d.c = 3;
    d.h = 32;
    d.w = 32;
    d.num_classes = 10;
    d.mean = {0.4914, 0.4822, 0.4465};
    d.stdev = {0.2470, 0.2435, 0.2616};
    d.images.resize(n * 3072);
    d.labels.resize(n);
    if (n == 0) {
        std::cerr << "warning: cifar10 file " << path << " is empty\n";
        return d;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::uint8_t label;
        in.read(reinterpret_cast<char*>(&label), 1);
        if (label > 9) throw FormatError("cifar10: label byte > 9 in record " + std::to_string(i));
        d.labels[i] = label;
        in.read(reinterpret_cast<char*>(d.images.data() + i * 3072), 3072);
        if (!in) throw LengthError("cifar10: truncated record " + std::to_string(i));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Synthetic generators.
// ---------------------------------------------------------------------------

/// Gaussian class clusters on a circle of radius `separation` in 2-D.
/// Stored as 1x1x2 "images": coordinate = 32 * (pixel/255 - 0.5), i.e. the
/// usable range is [-16, 16] at a resolution of ~0.125.
inline LabeledDataset make_blobs(std::size_t n, int classes, double separation, Rng& rng) {
    if (n < static_cast<std::size_t>(classes)) throw InputError("make_blobs: need at least one point per class");
    LabeledDataset d;
    d.n = n;
    d.c = 1;
    d.h = 1;
    d.w = 2;
    d.num_classes = classes;
    d.mean = {0.5};
    d.stdev = {1.0 / 32.0};
    d.images.resize(n * 2);
    d.labels.resize(n);
    const double tau = 2.0 * 3.14159265358979323846;
    auto quantize = [](double coord) {
        const double v = std::round((coord / 32.0 + 0.5) * 255.0);
        return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    };
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(classes));  // round-robin: balanced +-1
        const double angle = tau * cls / classes;
        const double cx = separation * std::cos(angle);
        const double cy = separation * std::sin(angle);
        d.images[i * 2 + 0] = quantize(cx + rng.gaussian());
        d.images[i * 2 + 1] = quantize(cy + rng.gaussian());
        d.labels[i] = cls;
    }
    return d;
}

/// Class-conditional oriented-bar images: class k draws a bar through the
/// center at angle pi*k/classes plus an offset dot, on a mid-gray background.
/// Feature contrast is sign-symmetric (bright or dark with equal chance, as
/// in normalized natural images), each sample adds a random distractor bar,
/// position jitter, contrast jitter and strong pixel noise. A small conv net
/// has to work for its accuracy here, so capacity differences between
/// configurations stay visible instead of saturating.
inline LabeledDataset make_synthetic_images(std::size_t n, int classes, std::size_t hw, Rng& rng,
                                            std::size_t channels = 1) {
    LabeledDataset d;
    d.n = n;
    d.c = channels;
    d.h = hw;
    d.w = hw;
    d.num_classes = classes;
    d.mean.assign(channels, 0.5);
    d.stdev.assign(channels, 0.25);
    d.images.resize(n * channels * hw * hw);
    d.labels.resize(n);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        d.labels[i] = cls;
        const double theta = pi * cls / classes;
        const double nx = -std::sin(theta), ny = std::cos(theta);  // bar normal
        const double phi = rng.uniform(0.0, pi);                   // distractor orientation
        const double dnx = -std::sin(phi), dny = std::cos(phi);
        const double dist_off = rng.uniform(-6.0, 6.0);
        const double dot_angle = 2.0 * pi * cls / classes;
        const double cx0 = hw / 2.0 + rng.uniform(-4.0, 4.0);
        const double cy0 = hw / 2.0 + rng.uniform(-4.0, 4.0);
        const double dot_x = cx0 + 0.30 * hw * std::cos(dot_angle);
        const double dot_y = cy0 + 0.30 * hw * std::sin(dot_angle);
        for (std::size_t ch = 0; ch < channels; ++ch) {
            // contrast polarity is drawn per channel, as in color images
            // whose edges flip sign across channels
            const double contrast = rng.below(2) ? 1.0 : -1.0;
            const double amp = contrast * rng.uniform(0.26, 0.44);
            const double distractor_amp = (rng.below(2) ? 1.0 : -1.0) * 0.35 * std::abs(amp);
            std::uint8_t* img = d.images.data() + (i * channels + ch) * hw * hw;
            for (std::size_t y = 0; y < hw; ++y) {
                for (std::size_t x = 0; x < hw; ++x) {
                    const double px = static_cast<double>(x) - cx0;
                    const double py = static_cast<double>(y) - cy0;
                    const double bar_dist = px * nx + py * ny;
                    double v = 0.5 + amp * std::exp(-(bar_dist * bar_dist) / (2.0 * 1.2 * 1.2));
                    const double ddx = static_cast<double>(x) - dot_x;
                    const double ddy = static_cast<double>(y) - dot_y;
                    v += 0.9 * amp * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * 1.8 * 1.8));
                    const double distractor = px * dnx + py * dny - dist_off;
                    v += distractor_amp * std::exp(-(distractor * distractor) / (2.0 * 1.2 * 1.2));
                    v += rng.gaussian(0.0, 0.16);
                    img[y * hw + x] = static_cast<std::uint8_t>(std::clamp(v * 255.0, 0.0, 255.0));
                }
            }
        }
    }
    return d;
}

/// Class-conditional texture images: each class owns a smooth zero-mean
/// random field (blurred white noise, cyclic), and a sample is that field
/// cyclically shifted, scaled by a random signed gain, and drowned in pixel
/// noise. Discriminative structure is dense and sign-symmetric, the regime
/// natural images occupy after normalization.
inline LabeledDataset make_texture_images(std::size_t n, int classes, std::size_t hw, Rng& rng,
                                          std::uint64_t template_seed = 99) {
    LabeledDataset d;
    d.n = n;
    d.c = 1;
    d.h = hw;
    d.w = hw;
    d.num_classes = classes;
    d.mean = {0.5};
    d.stdev = {0.25};
    d.images.resize(n * hw * hw);
    d.labels.resize(n);

    // Per-class texture: white noise filtered by an anisotropic (oriented)
    // Gaussian, so each class has a characteristic local orientation that a
    // small conv filter can pick up anywhere in the image. Standardized to
    // zero mean, unit variance; cyclic so shifted crops look alike.
    const double pi = 3.14159265358979323846;
    const int radius = 6;
    std::vector<std::vector<double>> templates;
    for (int cls = 0; cls < classes; ++cls) {
        const double theta = pi * cls / classes;
        const double ct = std::cos(theta), st = std::sin(theta);
        const double sigma_along = 3.6, sigma_across = 0.9;
        std::vector<double> kernel((2 * radius + 1) * (2 * radius + 1));
        for (int v = -radius; v <= radius; ++v) {
            for (int u = -radius; u <= radius; ++u) {
                const double a = u * ct + v * st;
                const double b = -u * st + v * ct;
                kernel[static_cast<std::size_t>(v + radius) * (2 * radius + 1) +
                       static_cast<std::size_t>(u + radius)] =
                    std::exp(-(a * a) / (2.0 * sigma_along * sigma_along) -
                             (b * b) / (2.0 * sigma_across * sigma_across));
            }
        }

        Rng trng(template_seed * 1000003ULL + static_cast<std::uint64_t>(cls));
        std::vector<double> noise(hw * hw), field(hw * hw, 0.0);
        for (auto& v : noise) v = trng.gaussian();
        for (std::size_t y = 0; y < hw; ++y) {
            for (std::size_t x = 0; x < hw; ++x) {
                double acc = 0.0;
                for (int v = -radius; v <= radius; ++v) {
                    for (int u = -radius; u <= radius; ++u) {
                        acc += kernel[static_cast<std::size_t>(v + radius) * (2 * radius + 1) +
                                      static_cast<std::size_t>(u + radius)] *
                               noise[((y + hw + static_cast<std::size_t>(v + radius) - radius) % hw) * hw +
                                     (x + hw + static_cast<std::size_t>(u + radius) - radius) % hw];
                    }
                }
                field[y * hw + x] = acc;
            }
        }
        double mean = 0.0, var = 0.0;
        for (const double v : field) mean += v;
        mean /= static_cast<double>(field.size());
        for (const double v : field) var += (v - mean) * (v - mean);
        var /= static_cast<double>(field.size());
        const double inv = 1.0 / std::sqrt(var + 1e-12);
        for (auto& v : field) v = (v - mean) * inv;
        templates.push_back(std::move(field));
    }

    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
        d.labels[i] = cls;
        const std::size_t dx = rng.below(hw), dy = rng.below(hw);  // cyclic shift
        const double gain = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.20, 0.34);
        const std::vector<double>& tpl = templates[static_cast<std::size_t>(cls)];
        std::uint8_t* img = d.images.data() + i * hw * hw;
        for (std::size_t y = 0; y < hw; ++y) {
            for (std::size_t x = 0; x < hw; ++x) {
                double v = 0.5 + gain * tpl[((y + dy) % hw) * hw + (x + dx) % hw];
                v += rng.gaussian(0.0, 0.10);
                img[y * hw + x] = static_cast<std::uint8_t>(std::clamp(v * 255.0, 0.0, 255.0));
            }
        }
    }
    return d;
}

// ---------------------------------------------------------------------------
// Deterministic batching.
// ---------------------------------------------------------------------------

/// Epoch-shuffled index batches. The shuffle stream depends only on the seed
/// passed at construction, so the delivered batch sequence is reproducible.
class Batcher {
public:
    Batcher(std::size_t n, std::size_t batch_size, std::uint64_t seed)
        : n_(n), batch_(batch_size), rng_(seed) {
        order_.resize(n);
        for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    }

    void start_epoch(bool shuffle = true) {
        if (shuffle) rng_.shuffle(order_);
        cursor_ = 0;
    }

    bool next(std::vector<std::size_t>& out) {
        if (cursor_ >= n_) return false;
        const std::size_t take = std::min(batch_, n_ - cursor_);
        out.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                   order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + take));
        cursor_ += take;
        return true;
    }

    std::size_t batches_per_epoch() const { return (n_ + batch_ - 1) / batch_; }

private:
    std::size_t n_, batch_, cursor_ = 0;
    std::vector<std::size_t> order_;
    Rng rng_;
};

}  // namespace bihalf
