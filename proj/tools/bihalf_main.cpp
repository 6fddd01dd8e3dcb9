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

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "bihalf/experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace bihalf;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntimeAbort = 3;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const char ch : s) {
        h ^= static_cast<std::uint8_t>(ch);
        h *= 1099511628211ULL;
    }
    return h;
}

fs::path make_run_dir(const ExperimentConfig& c, const std::string& kind) {
    if (!c.out_dir.empty()) {
        fs::create_directories(c.out_dir);
        return c.out_dir;
    }
    const auto now = std::chrono::system_clock::now();
    const auto t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y%m%d-%H%M%S", std::gmtime(&t));
    char hash[16];
    std::snprintf(hash, sizeof(hash), "%08llx",
                  static_cast<unsigned long long>(fnv1a(c.to_json().dump()) & 0xffffffffULL));
    const fs::path dir =
        fs::path("runs") / (std::string(stamp) + "_" + kind + "_s" + std::to_string(c.seed) + "_" + hash);
    fs::create_directories(dir);
    return dir;
}

json results_json(const MetricsLog& log, double seconds) {
    json j;
    j["final_train_loss"] = log.final_train_loss;
    j["final_train_acc"] = log.final_train_acc;
    j["final_test_loss"] = log.final_test_loss;
    j["final_test_acc"] = log.final_test_acc;
    j["iterations"] = log.iterations;
    j["total_flips_up"] = log.flips.total_up;
    j["total_flips_down"] = log.flips.total_down;
    j["cumulative_flip_difference"] = log.flips.cumulative_difference;
    j["min_weight_entropy"] = log.min_weight_entropy;
    j["ratio_violations"] = log.ratio_violations;
    j["flip_imbalance_events"] = log.flip_imbalance_events;
    j["wall_seconds"] = seconds;
    return j;
}

void write_summary(const fs::path& dir, const ExperimentConfig& c, const json& results) {
    json j;
    j["config"] = c.to_json();
    j["results"] = results;
    std::ofstream out(dir / "summary.json");
    out << j.dump(2) << '\n';
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (const double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (const double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

int cmd_train(const ExperimentConfig& c) {
    const DataPair data = load_data(c);
    const fs::path dir = make_run_dir(c, "train");
    Net net = build_model(c, data.train);
    const auto t0 = std::chrono::steady_clock::now();
    const MetricsLog log = train_epochs(net, data.train, data.test, train_config(c));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_metrics_csv(log, (dir / "metrics.csv").string());
    if (c.diagnostics) write_diagnostics_csv(log, (dir / "diagnostics.csv").string());
    net.save_state((dir / "final_weights.bin").string());
    write_summary(dir, c, results_json(log, secs));
    std::cout << "run dir: " << dir.string() << "\n"
              << "final test acc " << fmt_g(log.final_test_acc) << ", loss " << fmt_g(log.final_test_loss)
              << "\n";
    return 0;
}

int cmd_sweep_ratio(const ExperimentConfig& c, const std::vector<double>& p_list, int seeds) {
    for (const double p : p_list) {
        if (!(p >= 0.0 && p <= 1.0)) throw InputError("p_pos values must lie in [0,1]");
    }
    const DataPair data = load_data(c);
    const fs::path dir = make_run_dir(c, "sweep-ratio");

    std::vector<double> acc(p_list.size() * static_cast<std::size_t>(seeds));
    parallel_for(acc.size(), c.jobs, [&](std::size_t i) {
        const std::size_t pi = i / static_cast<std::size_t>(seeds);
        const std::size_t si = i % static_cast<std::size_t>(seeds);
        ExperimentConfig rc = c;
        rc.binarizer = "bihalf";
        rc.p_pos = p_list[pi];
        rc.seed = c.seed + si;
        acc[i] = run_once(rc, data).log.final_test_acc;
    });

    std::ofstream out(dir / "ratio_sweep.csv");
    out << "p_pos,mean_acc,std_acc,seeds\n";
    json rows = json::array();
    for (std::size_t pi = 0; pi < p_list.size(); ++pi) {
        std::vector<double> accs;
        for (int s = 0; s < seeds; ++s) {
            accs.push_back(acc[pi * static_cast<std::size_t>(seeds) + static_cast<std::size_t>(s)]);
        }
        out << fmt_g(p_list[pi]) << ',' << fmt_g(mean_of(accs)) << ',' << fmt_g(std_of(accs)) << ',' << seeds
            << '\n';
        rows.push_back({{"p_pos", p_list[pi]}, {"mean_acc", mean_of(accs)}, {"std_acc", std_of(accs)}});
    }
    json results;
    results["rows"] = rows;
    results["seeds"] = seeds;
    write_summary(dir, c, results);
    std::cout << "sweep dir: " << dir.string() << "\n";
    return 0;
}

int cmd_prune_sweep(const ExperimentConfig& c, const std::vector<double>& rho_list, int seeds) {
    for (const double r : rho_list) {
        if (!(r >= 0.0 && r < 1.0)) throw InputError("prune ratios must lie in [0,1)");
    }
    const DataPair data = load_data(c);
    const fs::path dir = make_run_dir(c, "prune-sweep");
    const std::vector<std::string> methods{"bihalf", "sign"};

    std::vector<double> acc(rho_list.size() * methods.size() * static_cast<std::size_t>(seeds));
    parallel_for(acc.size(), c.jobs, [&](std::size_t i) {
        const std::size_t per_rho = methods.size() * static_cast<std::size_t>(seeds);
        const std::size_t ri = i / per_rho;
        const std::size_t mi = (i % per_rho) / static_cast<std::size_t>(seeds);
        const std::size_t si = i % static_cast<std::size_t>(seeds);
        ExperimentConfig rc = c;
        rc.prune_ratio = rho_list[ri];
        rc.learned_mask = rho_list[ri] > 0.0 && c.learned_mask;
        rc.binarizer = methods[mi];
        rc.seed = c.seed + si;
        acc[i] = run_once(rc, data).log.final_test_acc;
    });

    std::ofstream out(dir / "prune_sweep.csv");
    out << "rho,method,mean_acc,std_acc,seeds\n";
    json rows = json::array();
    for (std::size_t ri = 0; ri < rho_list.size(); ++ri) {
        for (std::size_t mi = 0; mi < methods.size(); ++mi) {
            std::vector<double> accs;
            for (int s = 0; s < seeds; ++s) {
                accs.push_back(acc[(ri * methods.size() + mi) * static_cast<std::size_t>(seeds) +
                                   static_cast<std::size_t>(s)]);
            }
            out << fmt_g(rho_list[ri]) << ',' << methods[mi] << ',' << fmt_g(mean_of(accs)) << ','
                << fmt_g(std_of(accs)) << ',' << seeds << '\n';
            rows.push_back({{"rho", rho_list[ri]},
                            {"method", methods[mi]},
                            {"mean_acc", mean_of(accs)},
                            {"std_acc", std_of(accs)}});
        }
    }
    json results;
    results["rows"] = rows;
    results["seeds"] = seeds;
    write_summary(dir, c, results);
    std::cout << "sweep dir: " << dir.string() << "\n";
    return 0;
}

int cmd_multi_seed(const ExperimentConfig& c, int runs) {
    const DataPair data = load_data(c);
    const fs::path dir = make_run_dir(c, "multi-seed");
    const std::vector<std::string> methods{"bihalf", "sign"};

    std::vector<double> loss(methods.size() * static_cast<std::size_t>(runs));
    std::vector<double> acc(loss.size());
    parallel_for(loss.size(), c.jobs, [&](std::size_t i) {
        const std::size_t mi = i / static_cast<std::size_t>(runs);
        const std::size_t si = i % static_cast<std::size_t>(runs);
        ExperimentConfig rc = c;
        rc.binarizer = methods[mi];
        rc.seed = c.seed + si;
        const auto r = run_once(rc, data);
        loss[i] = r.log.final_test_loss;
        acc[i] = r.log.final_test_acc;
    });

    auto column = [&](std::size_t mi, const std::vector<double>& src) {
        std::vector<double> v(
            src.begin() + static_cast<std::ptrdiff_t>(mi * static_cast<std::size_t>(runs)),
            src.begin() + static_cast<std::ptrdiff_t>((mi + 1) * static_cast<std::size_t>(runs)));
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto bihalf_loss = column(0, loss), sign_loss = column(1, loss);
    const auto bihalf_acc = column(0, acc), sign_acc = column(1, acc);

    std::ofstream out(dir / "multi_seed.csv");
    out << "rank,bihalf_test_loss,sign_test_loss,bihalf_test_acc,sign_test_acc\n";
    for (int r = 0; r < runs; ++r) {
        out << r << ',' << fmt_g(bihalf_loss[static_cast<std::size_t>(r)]) << ','
            << fmt_g(sign_loss[static_cast<std::size_t>(r)]) << ','
            << fmt_g(bihalf_acc[static_cast<std::size_t>(r)]) << ','
            << fmt_g(sign_acc[static_cast<std::size_t>(r)]) << '\n';
    }
    json results;
    results["runs"] = runs;
    results["bihalf_mean_test_loss"] = mean_of(bihalf_loss);
    results["sign_mean_test_loss"] = mean_of(sign_loss);
    results["bihalf_mean_test_acc"] = mean_of(bihalf_acc);
    results["sign_mean_test_acc"] = mean_of(sign_acc);
    write_summary(dir, c, results);
    std::cout << "multi-seed dir: " << dir.string() << "\n"
              << "bihalf mean test loss " << fmt_g(mean_of(bihalf_loss)) << " vs sign "
              << fmt_g(mean_of(sign_loss)) << "\n";
    return 0;
}

int cmd_enumerate_toy(const ExperimentConfig& c, const std::vector<int>& grids, int dump_bits) {
    const fs::path dir = make_run_dir(c, "enumerate-toy");
    json results;
    results["grids"] = json::array();
    for (const int g : grids) {
        const ToyGrid grid{g};
        const auto rows = solution_space(grid);
        std::ofstream out(dir / ("solution_space_g" + std::to_string(g) + ".csv"));
        emit_solution_space_csv(rows, out);

        const auto full = enumerate_all(grid);
        std::cout << "grid " << g << "x" << g << ": combinations " << full.combinations << ", unique boundaries "
                  << full.unique_solutions << " (labelings " << full.unique_labelings << "); bi-half slice "
                  << rows[6].combinations << " combinations, " << rows[6].unique_solutions << " boundaries\n";
        json jg;
        jg["grid"] = g;
        jg["combinations"] = full.combinations;
        jg["unique_boundaries"] = full.unique_solutions;
        jg["unique_labelings"] = full.unique_labelings;
        jg["bihalf_combinations"] = rows[6].combinations;
        jg["bihalf_unique_boundaries"] = rows[6].unique_solutions;
        results["grids"].push_back(jg);
    }
    if (dump_bits >= 0) {
        const ToyGrid grid{grids.empty() ? 64 : grids.front()};
        const Fingerprint fp = fingerprint(ToyNet{static_cast<std::uint16_t>(dump_bits)}, grid);
        write_fingerprint_pgm(fp, grid, (dir / ("fingerprint_" + std::to_string(dump_bits) + ".pgm")).string());
    }
    write_summary(dir, c, results);
    std::cout << "enumeration dir: " << dir.string() << "\n";
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto report = [&](const char* name, bool ok) {
        std::cout << (ok ? "PASS" : "FAIL") << "  " << name << "\n";
        if (!ok) ++failures;
    };

    {  // closed form vs exhaustive transport oracle
        Rng rng(101);
        bool ok = true;
        for (int t = 0; t < 300 && ok; ++t) {
            const std::size_t d = 2 + rng.below(11);
            std::vector<double> w(d);
            for (auto& v : w) v = rng.uniform(-1.0, 1.0);
            for (const double p : {0.25, 0.5, 0.75}) {
                const auto sol = wasserstein_oracle(w, BernoulliPrior(p));
                const auto code = ot_binarize(std::span<const double>(w.data(), w.size()), BernoulliPrior(p));
                ok = ok && transport_cost(std::span<const double>(w.data(), w.size()), code) == sol.min_cost;
            }
        }
        report("transport oracle certification", ok);
    }
    {  // exact ratios
        Rng rng(102);
        bool ok = true;
        for (int t = 0; t < 300 && ok; ++t) {
            const std::size_t d = 1 + rng.below(64);
            std::vector<float> w(d);
            for (auto& v : w) v = static_cast<float>(rng.gaussian());
            const double p = rng.uniform();
            ok = ok && ot_binarize(w, BernoulliPrior(p)).count(1) == positive_count(p, d);
        }
        report("exact bit-ratio invariant", ok);
    }
    {  // rank invariance
        Rng rng(103);
        bool ok = true;
        for (int t = 0; t < 100 && ok; ++t) {
            std::vector<float> w(16), f(16);
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = static_cast<float>(rng.gaussian());
                f[i] = w[i] * w[i] * w[i] + 5.0f * w[i];
            }
            ok = ok && ot_binarize(w, BernoulliPrior(0.5)).values == ot_binarize(f, BernoulliPrior(0.5)).values;
        }
        report("rank invariance", ok);
    }
    {  // bi-half entropy is exactly one bit
        Rng rng(104);
        bool ok = true;
        for (int t = 0; t < 100 && ok; ++t) {
            std::vector<float> w(2 * (1 + rng.below(32)));
            for (auto& v : w) v = static_cast<float>(rng.gaussian());
            ok = ok && weight_entropy(ot_binarize(w, BernoulliPrior(0.5))) == 1.0;
        }
        report("bi-half maximum entropy", ok);
    }
    {  // toy enumeration structure
        const ToyGrid grid{32};
        const auto rows = solution_space(grid);
        std::size_t total = 0, best_u = 0;
        int best_n = -1;
        for (const auto& r : rows) {
            total += r.combinations;
            if (r.unique_solutions > best_u) {
                best_u = r.unique_solutions;
                best_n = r.n_neg;
            }
        }
        report("toy enumeration counts", total == 4096 && rows[6].combinations == 924 && best_n == 6);
    }
    {  // balanced flips over random steps
        Rng rng(105);
        bool ok = true;
        for (int t = 0; t < 200 && ok; ++t) {
            std::vector<float> w(2 + rng.below(30));
            for (auto& v : w) v = static_cast<float>(rng.gaussian());
            const auto before = ot_binarize(w, BernoulliPrior(0.5));
            for (auto& v : w) v += static_cast<float>(rng.gaussian(0.0, 0.3));
            const auto fc = flip_account(before, ot_binarize(w, BernoulliPrior(0.5)));
            ok = ok && fc.up == fc.down;
        }
        report("balanced flips", ok);
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Binary-network training with exact bit-ratio control via 1-D optimal transport"};
    app.require_subcommand(1);

    ExperimentConfig cfg;
    std::string config_file;

    // pre-scan for --config so command-line flags override file values
    for (int i = 1; i < argc - 1; ++i) {
        if (std::string(argv[i]) == "--config") config_file = argv[i + 1];
    }
    if (!config_file.empty()) {
        try {
            std::ifstream in(config_file);
            if (!in) throw InputError("cannot open config file " + config_file);
            json j;
            in >> j;
            cfg.apply_json(j);
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitConfig;
        }
    }

    auto add_common = [&](CLI::App* cmd) {
        std::string sink;
        cmd->add_option("--config", sink, "JSON config file (flags override it)");
        cmd->add_option("--model", cfg.model, "mlp|conv2|conv4|conv6|conv8");
        cmd->add_option("--width", cfg.width, "conv base width");
        cmd->add_option("--hidden", cfg.hidden, "mlp hidden sizes");
        cmd->add_option("--binarizer", cfg.binarizer, "bihalf|sign|irnet");
        cmd->add_option("--rule", cfg.rule, "latent|bop");
        cmd->add_option("--act", cfg.act, "real|binary activations");
        cmd->add_option("--granularity", cfg.granularity, "filter|layer ratio granularity");
        cmd->add_flag("--unit-scale", cfg.unit_scale, "use alpha=1 instead of sqrt(2/D)");
        cmd->add_option("--p-pos", cfg.p_pos, "target +1 ratio");
        cmd->add_option("--prune-ratio", cfg.prune_ratio, "fraction of weights pruned");
        cmd->add_flag("--learned-mask", cfg.learned_mask, "learn the prune mask from scores");
        cmd->add_flag("--exempt-edges", cfg.exempt_edges, "keep the first and last layers real-valued");
        cmd->add_option("--dataset", cfg.dataset, "mnist|mnist-subset|cifar10|synth|synth3|textures|blobs");
        cmd->add_option("--data-dir", cfg.data_dir, "dataset directory (or $BIHALF_DATA_DIR)");
        cmd->add_option("--train-count", cfg.train_count, "training subset size");
        cmd->add_option("--test-count", cfg.test_count, "test subset size");
        cmd->add_option("--dataset-seed", cfg.dataset_seed, "synthetic dataset seed");
        cmd->add_flag("--augment", cfg.augment, "random shift/flip augmentation");
        cmd->add_option("--train-images", cfg.train_images, "explicit IDX image file");
        cmd->add_option("--train-labels", cfg.train_labels, "explicit IDX label file");
        cmd->add_option("--test-images", cfg.test_images, "explicit IDX image file");
        cmd->add_option("--test-labels", cfg.test_labels, "explicit IDX label file");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
        cmd->add_option("--batch-size", cfg.batch_size, "batch size");
        cmd->add_option("--lr0", cfg.lr0, "initial learning rate");
        cmd->add_option("--momentum", cfg.momentum, "SGD momentum");
        cmd->add_option("--weight-decay", cfg.weight_decay, "L2 weight decay on latent weights");
        cmd->add_option("--schedule", cfg.schedule, "cosine|constant|step");
        cmd->add_option("--milestones", cfg.milestones, "step schedule epochs");
        cmd->add_option("--factor", cfg.factor, "step schedule factor");
        cmd->add_option("--seed", cfg.seed, "run seed");
        cmd->add_option("--diagnostics", cfg.diagnostics, "emit per-iteration diagnostics");
        cmd->add_option("--bop-ema-decay", cfg.bop_ema_decay, "bop gradient EMA decay");
        cmd->add_option("--bop-threshold", cfg.bop_threshold, "bop flip threshold");
        cmd->add_option("--out", cfg.out_dir, "output directory (default: runs/<auto>)");
        cmd->add_option("--jobs", cfg.jobs, "parallel runs in sweeps");
    };

    CLI::App* train = app.add_subcommand("train", "single training run");
    add_common(train);

    CLI::App* sweep = app.add_subcommand("sweep-ratio", "accuracy across bit-ratio priors");
    std::vector<double> p_list{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    int sweep_seeds = 3;
    add_common(sweep);
    sweep->add_option("--p-list", p_list, "list of p_pos values");
    sweep->add_option("--seeds", sweep_seeds, "seeds per value");

    CLI::App* prune = app.add_subcommand("prune-sweep", "accuracy across prune ratios, bihalf vs sign");
    std::vector<double> rho_list{0.0, 0.2, 0.5, 0.8};
    int prune_seeds = 3;
    add_common(prune);
    prune->add_option("--rho-list", rho_list, "list of prune ratios");
    prune->add_option("--seeds", prune_seeds, "seeds per cell");

    CLI::App* multi = app.add_subcommand("multi-seed", "repeat training across seeds, bihalf vs sign");
    int runs = 20;
    add_common(multi);
    multi->add_option("--runs", runs, "number of seeds per method");

    CLI::App* toy = app.add_subcommand("enumerate-toy", "12-parameter exhaustive solution-space study");
    std::vector<int> grids{32, 64, 128};
    int dump_bits = -1;
    add_common(toy);
    toy->add_option("--grids", grids, "grid resolutions");
    toy->add_option("--dump-fingerprint", dump_bits, "write a PGM of this 12-bit parameter vector");

    CLI::App* selftest = app.add_subcommand("selftest", "run the core invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (train->parsed()) return cmd_train(cfg);
        if (sweep->parsed()) return cmd_sweep_ratio(cfg, p_list, sweep_seeds);
        if (prune->parsed()) return cmd_prune_sweep(cfg, rho_list, prune_seeds);
        if (multi->parsed()) return cmd_multi_seed(cfg, runs);
        if (toy->parsed()) return cmd_enumerate_toy(cfg, grids, dump_bits);
        if (selftest->parsed()) return cmd_selftest();
    } catch (const TrainAbort& e) {
        std::cerr << "training aborted: " << e.what() << "\n";
        return kExitRuntimeAbort;
    } catch (const InputError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
