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

// Experiment plumbing shared by the CLI and the acceptance suite: the full
// run configuration (JSON round-trippable, fail-closed), dataset/model
// construction from it, and single-run execution.

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "bihalf/bihalf.hpp"

namespace bihalf {

struct ExperimentConfig {
    // model
    std::string model = "conv2";  // mlp | conv2 | conv4 | conv6 | conv8
    std::size_t width = 8;
    std::vector<std::size_t> hidden{64};
    std::string binarizer = "bihalf";  // bihalf | sign | irnet
    std::string rule = "latent";       // latent | bop
    std::string act = "real";          // real | binary
    std::string granularity = "filter";
    bool unit_scale = false;
    double p_pos = 0.5;
    double prune_ratio = 0.0;
    bool learned_mask = false;
    bool exempt_edges = false;  // keep first/last layers real-valued
    // data
    std::string dataset = "synth";  // mnist | cifar10 | synth | blobs
    std::string data_dir;
    std::size_t train_count = 5000;
    std::size_t test_count = 1000;
    std::uint64_t dataset_seed = 777;
    bool augment = false;
    std::string train_images, train_labels, test_images, test_labels;  // explicit IDX paths
    // training
    int epochs = 2;
    std::size_t batch_size = 128;
    double lr0 = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::string schedule = "cosine";  // cosine | constant | step
    std::vector<int> milestones;
    double factor = 0.1;
    std::uint64_t seed = 1;
    bool diagnostics = true;
    double bop_ema_decay = 0.99;
    double bop_threshold = 1e-6;
    // run
    std::string out_dir;
    int jobs = 1;

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["model"] = model;
        j["width"] = width;
        j["hidden"] = hidden;
        j["binarizer"] = binarizer;
        j["rule"] = rule;
        j["act"] = act;
        j["granularity"] = granularity;
        j["unit_scale"] = unit_scale;
        j["p_pos"] = p_pos;
        j["prune_ratio"] = prune_ratio;
        j["learned_mask"] = learned_mask;
        j["exempt_edges"] = exempt_edges;
        j["dataset"] = dataset;
        j["data_dir"] = data_dir;
        j["train_count"] = train_count;
        j["test_count"] = test_count;
        j["dataset_seed"] = dataset_seed;
        j["augment"] = augment;
        j["train_images"] = train_images;
        j["train_labels"] = train_labels;
        j["test_images"] = test_images;
        j["test_labels"] = test_labels;
        j["epochs"] = epochs;
        j["batch_size"] = batch_size;
        j["lr0"] = lr0;
        j["momentum"] = momentum;
        j["weight_decay"] = weight_decay;
        j["schedule"] = schedule;
        j["milestones"] = milestones;
        j["factor"] = factor;
        j["seed"] = seed;
        j["diagnostics"] = diagnostics;
        j["bop_ema_decay"] = bop_ema_decay;
        j["bop_threshold"] = bop_threshold;
        j["out_dir"] = out_dir;
        j["jobs"] = jobs;
        return j;
    }

    /// Fail-closed JSON intake: every key must be known.
    void apply_json(const nlohmann::ordered_json& j) {
        const nlohmann::ordered_json known = to_json();
        for (const auto& item : j.items()) {
            if (!known.contains(item.key())) throw InputError("unknown config key: " + item.key());
        }
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("model", model);
        get("width", width);
        get("hidden", hidden);
        get("binarizer", binarizer);
        get("rule", rule);
        get("act", act);
        get("granularity", granularity);
        get("unit_scale", unit_scale);
        get("p_pos", p_pos);
        get("prune_ratio", prune_ratio);
        get("learned_mask", learned_mask);
        get("exempt_edges", exempt_edges);
        get("dataset", dataset);
        get("data_dir", data_dir);
        get("train_count", train_count);
        get("test_count", test_count);
        get("dataset_seed", dataset_seed);
        get("augment", augment);
        get("train_images", train_images);
        get("train_labels", train_labels);
        get("test_images", test_images);
        get("test_labels", test_labels);
        get("epochs", epochs);
        get("batch_size", batch_size);
        get("lr0", lr0);
        get("momentum", momentum);
        get("weight_decay", weight_decay);
        get("schedule", schedule);
        get("milestones", milestones);
        get("factor", factor);
        get("seed", seed);
        get("diagnostics", diagnostics);
        get("bop_ema_decay", bop_ema_decay);
        get("bop_threshold", bop_threshold);
        get("out_dir", out_dir);
        get("jobs", jobs);
    }
};

inline BinarizerKind parse_binarizer(const std::string& s) {
    if (s == "bihalf" || s == "ot") return BinarizerKind::OT;
    if (s == "sign") return BinarizerKind::Sign;
    if (s == "irnet") return BinarizerKind::IRNet;
    throw InputError("binarizer must be bihalf|sign|irnet");
}

inline ModelOptions model_options(const ExperimentConfig& c) {
    ModelOptions mo;
    mo.binarizer = parse_binarizer(c.binarizer);
    mo.p_pos = c.p_pos;
    mo.granularity = c.granularity == "layer" ? Granularity::PerLayer : Granularity::PerFilter;
    mo.unit_scale = c.unit_scale;
    mo.prune_ratio = c.prune_ratio;
    mo.learned_mask = c.learned_mask;
    mo.exempt_edges = c.exempt_edges;
    mo.bop = c.rule == "bop";
    mo.act = c.act == "binary" ? ActMode::Binary : ActMode::Real;
    return mo;
}

inline TrainConfig train_config(const ExperimentConfig& c) {
    TrainConfig t;
    t.epochs = c.epochs;
    t.batch_size = c.batch_size;
    t.lr0 = c.lr0;
    t.momentum = c.momentum;
    t.weight_decay = c.weight_decay;
    if (c.schedule == "cosine") {
        t.schedule = Schedule::cosine();
    } else if (c.schedule == "constant") {
        t.schedule = Schedule::constant();
    } else if (c.schedule == "step") {
        t.schedule = Schedule::step(c.milestones, c.factor);
    } else {
        throw InputError("schedule must be cosine|constant|step");
    }
    t.rule = c.rule == "bop" ? UpdateRule::Bop : UpdateRule::Latent;
    t.bop_ema_decay = static_cast<float>(c.bop_ema_decay);
    t.bop_threshold = static_cast<float>(c.bop_threshold);
    t.seed = c.seed;
    t.diagnostics = c.diagnostics;
    t.augment = c.augment;
    return t;
}

inline std::string default_data_dir(const ExperimentConfig& c) {
    if (!c.data_dir.empty()) return c.data_dir;
    if (const char* env = std::getenv("BIHALF_DATA_DIR")) return env;
    return "./data";
}

struct DataPair {
    LabeledDataset train, test;
};

inline DataPair load_data(const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    DataPair d;
    if (!c.train_images.empty()) {
        d.train = load_idx_dataset(c.train_images, c.train_labels);
        if (!c.test_images.empty()) d.test = load_idx_dataset(c.test_images, c.test_labels);
    } else if (c.dataset == "mnist" || c.dataset == "mnist-subset") {
        const fs::path dir = default_data_dir(c);
        d.train = load_idx_dataset((dir / "train-images-idx3-ubyte").string(),
                                   (dir / "train-labels-idx1-ubyte").string());
        d.test = load_idx_dataset((dir / "t10k-images-idx3-ubyte").string(),
                                  (dir / "t10k-labels-idx1-ubyte").string());
    } else if (c.dataset == "cifar10") {
        const fs::path dir = default_data_dir(c);
        d.train = load_cifar10_bin((dir / "data_batch_1.bin").string());
        d.test = load_cifar10_bin((dir / "test_batch.bin").string());
    } else if (c.dataset == "textures") {
        Rng train_rng(c.dataset_seed);
        Rng test_rng(c.dataset_seed + 1);
        d.train = make_texture_images(c.train_count, 10, 28, train_rng, c.dataset_seed);
        d.test = make_texture_images(c.test_count, 10, 28, test_rng, c.dataset_seed);
    } else if (c.dataset == "synth" || c.dataset == "synth3") {
        const std::size_t channels = c.dataset == "synth3" ? 3 : 1;
        Rng train_rng(c.dataset_seed);
        Rng test_rng(c.dataset_seed + 1);
        d.train = make_synthetic_images(c.train_count, 10, 28, train_rng, channels);
        d.test = make_synthetic_images(c.test_count, 10, 28, test_rng, channels);
    } else if (c.dataset == "blobs") {
        Rng train_rng(c.dataset_seed);
        Rng test_rng(c.dataset_seed + 1);
        d.train = make_blobs(std::max<std::size_t>(c.train_count, 4), 4, 8.0, train_rng);
        d.test = make_blobs(std::max<std::size_t>(c.test_count, 4), 4, 8.0, test_rng);
    } else {
        throw InputError("dataset must be mnist|mnist-subset|cifar10|synth|synth3|textures|blobs");
    }
    if (d.train.n > c.train_count) d.train = d.train.subset(c.train_count);
    if (d.test.n > c.test_count) d.test = d.test.subset(c.test_count);
    return d;
}

inline Net build_model(const ExperimentConfig& c, const LabeledDataset& data) {
    const ModelOptions mo = model_options(c);
    if (c.model == "mlp") {
        return build_mlp(data.image_size(), c.hidden, static_cast<std::size_t>(data.num_classes), mo);
    }
    if (c.model == "conv2" || c.model == "conv4" || c.model == "conv6" || c.model == "conv8") {
        const int depth = c.model[4] - '0';
        return build_convnet(depth, data.c, data.h, data.w, static_cast<std::size_t>(data.num_classes), c.width,
                             mo);
    }
    throw InputError("model must be mlp|conv2|conv4|conv6|conv8");
}

struct RunResult {
    MetricsLog log;
    double seconds = 0.0;
};

inline RunResult run_once(const ExperimentConfig& c, const DataPair& data) {
    const auto t0 = std::chrono::steady_clock::now();
    Net net = build_model(c, data.train);
    RunResult r;
    r.log = train_epochs(net, data.train, data.test, train_config(c));
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Fan independent runs over a small worker pool; each result lands in its
/// own slot, so output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min<int>(jobs, static_cast<int>(count));
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace bihalf
