// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "orsiflow/checkpoint.hpp"
#include "orsiflow/config.hpp"
#include "orsiflow/data.hpp"
#include "orsiflow/gradcheck_suite.hpp"
#include "orsiflow/metrics.hpp"
#include "orsiflow/optim.hpp"
#include "orsiflow/pipeline.hpp"

namespace orsiflow {

namespace fs = std::filesystem;

struct Sample {
    std::string stem;
    Tensor image; // [3,H,W]
    Tensor mask;  // [1,H,W] in [0,1]
};

inline std::vector<Sample> load_samples(const std::vector<ManifestEntry>& entries) {
    std::vector<Sample> out(entries.size());
    const int threads = std::min<int>(worker_threads(), std::max<size_t>(entries.size(), 1));
    auto work = [&](int t) {
        for (size_t i = static_cast<size_t>(t); i < entries.size(); i += static_cast<size_t>(threads)) {
            out[i].stem = fs::path(entries[i].image_path).stem().string();
            out[i].image = load_image(entries[i].image_path);
            out[i].mask = load_mask(entries[i].mask_path);
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    return out;
}

inline Manifest require_manifest(const fs::path& data_dir) {
    const fs::path path = data_dir / "manifest.csv";
    if (!fs::exists(path)) throw IoError("dataset manifest not found: " + path.string() + " (run gen-data first)");
    return load_manifest(path);
}

/// Per-image noise seed: stable in the filename stem so prediction is
/// deterministic and order-independent.
inline uint64_t image_noise_seed(uint64_t flow_seed, const std::string& stem) {
    return Rng::derive(flow_seed, Rng::hash(stem));
}

// ---------------------------------------------------------------------------
// gen-data
// ---------------------------------------------------------------------------

inline SceneSpec scene_spec_from(const RunConfig& cfg) {
    SceneSpec spec;
    spec.height = spec.width = cfg.canvas;
    spec.objects_min = cfg.objects_min;
    spec.objects_max = cfg.objects_max;
    spec.contrast = cfg.contrast;
    spec.clutter = cfg.clutter;
    return spec;
}

inline Manifest cmd_gen_data(const RunConfig& cfg) {
    const fs::path root(cfg.data_dir);
    Manifest m = build_dataset(scene_spec_from(cfg), cfg.n_train, cfg.n_test, cfg.data_seed, root);
    cfg.write_effective(root / "config.effective");
    return m;
}

// ---------------------------------------------------------------------------
// pretrain-vae
// ---------------------------------------------------------------------------

struct VaePretrainResult {
    std::vector<double> epoch_loss;
    std::vector<double> epoch_recon;
    double heldout_mae = 1.0;
    double latent_scale = 1.0;
    bool gate_passed = false;
    fs::path checkpoint;
};

/// Trains the VAE on the train-split masks and gates on held-out (test
/// split) posterior-mean reconstruction MAE < 0.05. The checkpoint carries
/// frozen=1: flow training never updates it.
inline VaePretrainResult cmd_pretrain_vae(const RunConfig& cfg, std::ostream& log = std::cout) {
    const Manifest manifest = require_manifest(cfg.data_dir);
    const auto train_entries = manifest.split("train");
    const auto test_entries = manifest.split("test");
    if (train_entries.empty() || test_entries.empty())
        throw IoError("manifest must contain train and test splits");

    std::vector<Sample> train = load_samples(train_entries);
    std::vector<Sample> heldout = load_samples(test_entries);

    ParamStore store;
    Rng init(Rng::derive(cfg.seed, 0x7a1));
    VaeConfig vc;
    vc.downsample = cfg.vae_downsample;
    vc.latent_channels = cfg.vae_latent_channels;
    vc.hidden = cfg.vae_hidden;
    vc.beta_kl = cfg.vae_beta_kl;
    TinyVae vae(store, vc, init);

    AdamW opt(store, {cfg.vae_lr, cfg.train_beta1, cfg.train_beta2, cfg.train_eps, cfg.train_weight_decay});
    Rng train_rng(Rng::derive(cfg.seed, 0x7a2));

    VaePretrainResult res;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 1; epoch <= cfg.vae_epochs; ++epoch) {
        Rng shuffle_rng(Rng::derive(cfg.seed, 0x7a3000 + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double ep_loss = 0.0, ep_recon = 0.0;
        size_t batches = 0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.vae_batch)) {
            const size_t end = std::min(order.size(), b + static_cast<size_t>(cfg.vae_batch));
            store.zero_grads();
            double batch_loss = 0.0;
            for (size_t i = b; i < end; ++i) {
                Tape tape;
                auto loss = vae.loss(train[order[i]].mask, train_rng);
                if (!all_finite(loss.total)) throw NonFiniteLoss("vae pretraining produced a non-finite loss");
                tape.backward(loss.total);
                batch_loss += loss.total.item();
                ep_recon += loss.recon.item();
            }
            opt.step(1.0 / static_cast<double>(end - b));
            ep_loss += batch_loss;
            ++batches;
        }
        res.epoch_loss.push_back(ep_loss / static_cast<double>(order.size()));
        res.epoch_recon.push_back(ep_recon / static_cast<double>(order.size()));
        log << "vae epoch " << epoch << "/" << cfg.vae_epochs << "  loss " << res.epoch_loss.back() << "  bce "
            << res.epoch_recon.back() << std::endl;
    }

    // Held-out gate: reconstruct from the posterior mean.
    double mae_sum = 0.0;
    {
        NoGrad ng;
        for (const auto& s : heldout) {
            auto [mu, logvar] = vae.encode(s.mask);
            (void)logvar;
            const Tensor rec = vae.decode(mu);
            double acc = 0.0;
            for (size_t i = 0; i < rec.values().size(); ++i) acc += std::abs(rec.data()[i] - s.mask.data()[i]);
            mae_sum += acc / static_cast<double>(rec.size());
        }
    }
    res.heldout_mae = mae_sum / static_cast<double>(heldout.size());
    res.gate_passed = res.heldout_mae < 0.05;
    log << "vae held-out recon MAE " << res.heldout_mae << " -> gate " << (res.gate_passed ? "PASS" : "FAIL")
        << " (threshold 0.05)\n";

    // Latent scale: RMS of the posterior means over the training masks. The
    // flow runs in mu / scale units so its data side is unit-RMS regardless
    // of how the KL weight shaped the posterior.
    double mu_sq = 0.0;
    int64_t mu_n = 0;
    {
        NoGrad ng;
        for (const auto& s : train) {
            auto [mu, logvar] = vae.encode(s.mask);
            (void)logvar;
            for (double v : mu.values()) mu_sq += v * v;
            mu_n += mu.size();
        }
    }
    res.latent_scale = std::sqrt(mu_sq / static_cast<double>(mu_n));
    log << "vae latent scale (RMS of mu) " << res.latent_scale << "\n";

    char scale_str[32];
    std::snprintf(scale_str, sizeof(scale_str), "%.17g", res.latent_scale);
    res.checkpoint = fs::path(cfg.vae_checkpoint);
    if (res.checkpoint.has_parent_path()) fs::create_directories(res.checkpoint.parent_path());
    save_checkpoint(store, res.checkpoint,
                    {{"frozen", "1"},
                     {"recon_mae", std::to_string(res.heldout_mae)},
                     {"latent_scale", scale_str},
                     {"kind", "vae"}});
    cfg.write_effective(res.checkpoint.string() + ".config");
    return res;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainResult {
    std::vector<double> epoch_rf_loss;
    std::vector<std::pair<int, double>> val_mae; // (epoch, mae)
    double best_val_mae = 1.0;
    fs::path checkpoint;
};

inline double mean_pixel_mae(const Tensor& a, const Tensor& b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.values().size(); ++i) acc += std::abs(a.data()[i] - b.data()[i]);
    return acc / static_cast<double>(a.size());
}

/// Rectified-flow training of encoder + guidance + velocity net on top of
/// the frozen VAE. Validation holds out the tail of the train split and
/// keeps the best-MAE checkpoint.
inline TrainResult cmd_train(const RunConfig& cfg, std::ostream& log = std::cout) {
    const Manifest manifest = require_manifest(cfg.data_dir);
    auto train_entries = manifest.split("train");
    if (train_entries.empty()) throw IoError("manifest has no train split");
    if (!fs::exists(cfg.vae_checkpoint))
        throw MissingVae("frozen VAE checkpoint not found: " + cfg.vae_checkpoint + " (run pretrain-vae first)");

    const int val_count = std::min<int>(cfg.train_val_count, static_cast<int>(train_entries.size()) / 4);
    std::vector<ManifestEntry> val_entries(train_entries.end() - val_count, train_entries.end());
    train_entries.resize(train_entries.size() - static_cast<size_t>(val_count));

    std::vector<Sample> train = load_samples(train_entries);
    std::vector<Sample> val = load_samples(val_entries);

    OrsiFlowModel model(model_config_from(cfg), cfg.seed);
    auto vae_meta = load_checkpoint(model.params(), cfg.vae_checkpoint, "vae.");
    if (vae_meta.count("frozen") == 0 || vae_meta["frozen"] != "1")
        throw MissingVae("checkpoint " + cfg.vae_checkpoint + " is not a frozen VAE checkpoint");
    model.freeze_vae();
    if (vae_meta.count("latent_scale")) model.set_latent_scale(std::stod(vae_meta["latent_scale"]));

    AdamW opt(model.params(), {cfg.train_lr, cfg.train_beta1, cfg.train_beta2, cfg.train_eps, cfg.train_weight_decay});
    Rng train_rng(Rng::derive(cfg.seed, 0x3f1));

    const fs::path out_dir(cfg.out_dir);
    fs::create_directories(out_dir);
    TrainResult res;
    res.checkpoint = fs::path(cfg.model_checkpoint);
    if (res.checkpoint.has_parent_path()) fs::create_directories(res.checkpoint.parent_path());

    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    auto validate = [&](int epoch) {
        if (val.empty()) { // no holdout: keep the latest state
            res.best_val_mae = 0.0;
            model.save(res.checkpoint, {{"kind", "model"}, {"epoch", std::to_string(epoch)}});
            return;
        }
        double acc = 0.0;
        for (const auto& s : val) {
            const Tensor pred = model.predict(s.image, cfg.flow_steps, image_noise_seed(cfg.flow_seed, s.stem),
                                              cfg.flow_condition_mode);
            acc += mean_pixel_mae(pred, s.mask);
        }
        const double v = acc / static_cast<double>(val.size());
        res.val_mae.emplace_back(epoch, v);
        if (v < res.best_val_mae) {
            res.best_val_mae = v;
            model.save(res.checkpoint, {{"kind", "model"}, {"epoch", std::to_string(epoch)}});
        }
        log << "  val MAE " << v << (v == res.best_val_mae ? "  (best, checkpoint saved)" : "") << std::endl;
    };

    for (int epoch = 1; epoch <= cfg.train_epochs; ++epoch) {
        // cosine decay from lr to lr * lr_min_frac over the run
        const double frac = cfg.train_epochs > 1 ? static_cast<double>(epoch - 1) / (cfg.train_epochs - 1) : 0.0;
        const double lr_min = cfg.train_lr * cfg.train_lr_min_frac;
        opt.config().lr = lr_min + 0.5 * (cfg.train_lr - lr_min) * (1.0 + std::cos(3.14159265358979323846 * frac));

        Rng shuffle_rng(Rng::derive(cfg.seed, 0x3f2000 + static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(order);
        double ep_loss = 0.0;
        for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg.train_batch)) {
            const size_t end = std::min(order.size(), b + static_cast<size_t>(cfg.train_batch));
            model.params().zero_grads();
            for (size_t i = b; i < end; ++i) {
                const Sample& s = train[order[i]];
                Tape tape;
                const Tensor loss = model.train_loss(s.image, s.mask, train_rng);
                if (!all_finite(loss))
                    throw NonFiniteLoss("rectified-flow loss is non-finite at epoch " + std::to_string(epoch) +
                                        ", sample '" + s.stem + "'");
                tape.backward(loss);
                ep_loss += loss.item();
            }
            opt.step(1.0 / static_cast<double>(end - b));
        }
        res.epoch_rf_loss.push_back(ep_loss / static_cast<double>(order.size()));
        log << "epoch " << epoch << "/" << cfg.train_epochs << "  L_RF " << res.epoch_rf_loss.back() << std::endl;
        if (epoch % cfg.train_val_every == 0 || epoch == cfg.train_epochs) validate(epoch);
    }

    cfg.write_effective(out_dir / "train.config.effective");
    {
        std::ofstream hist(out_dir / "train_history.jsonl");
        for (size_t i = 0; i < res.epoch_rf_loss.size(); ++i) {
            nlohmann::json j{{"epoch", i + 1}, {"rf_loss", res.epoch_rf_loss[i]}};
            hist << j.dump() << "\n";
        }
        for (const auto& [e, v] : res.val_mae) {
            nlohmann::json j{{"epoch", e}, {"val_mae", v}};
            hist << j.dump() << "\n";
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictResult {
    int images = 0;
    fs::path output_dir;
};

inline PredictResult cmd_predict(const RunConfig& cfg, const fs::path& input_dir, const fs::path& output_dir,
                                 int steps) {
    if (!fs::exists(cfg.model_checkpoint))
        throw MissingCheckpoint("model checkpoint not found: " + cfg.model_checkpoint);
    if (!fs::is_directory(input_dir)) throw UnreadableImage("input directory not found: " + input_dir.string());

    OrsiFlowModel model(model_config_from(cfg), cfg.seed);
    model.load(cfg.model_checkpoint);

    std::vector<fs::path> inputs;
    for (const auto& e : fs::directory_iterator(input_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
    if (inputs.empty()) throw UnreadableImage("no .png images in " + input_dir.string());

    fs::create_directories(output_dir);
    const int threads = std::min<int>(worker_threads(), static_cast<int>(inputs.size()));
    auto work = [&](int t) {
        for (size_t i = static_cast<size_t>(t); i < inputs.size(); i += static_cast<size_t>(threads)) {
            const std::string stem = inputs[i].stem().string();
            const Tensor image = load_image(inputs[i]);
            const Tensor pred =
                model.predict(image, steps, image_noise_seed(cfg.flow_seed, stem), cfg.flow_condition_mode);
            save_mask(output_dir / (stem + ".png"), pred);
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    RunConfig effective = cfg;
    effective.flow_steps = steps;
    effective.write_effective(output_dir / "predict.config.effective");
    return {static_cast<int>(inputs.size()), output_dir};
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline void print_metric_table(const sod::MetricReport& report, std::ostream& os) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-24s %10s %10s %10s %10s\n", "dataset", "S_alpha", "F_max", "E_max", "MAE");
    os << line;
    std::string note;
    if (report.f_excluded) note = ", " + std::to_string(report.f_excluded) + " excluded from F";
    std::snprintf(line, sizeof(line), "%-24s %10.4f %10.4f %10.4f %10.4f   (%d images%s)\n", "mean", report.mean_s,
                  report.mean_f, report.mean_e, report.mean_mae, report.count, note.c_str());
    os << line;
}

inline void write_metric_records(const sod::MetricReport& report, const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write metric records: " + path.string());
    for (const auto& im : report.per_image) {
        nlohmann::json j{{"image", im.name}, {"s_alpha", im.s_alpha}, {"f_max", im.f_max},
                         {"e_max", im.e_max},  {"mae", im.mae}};
        if (!im.f_valid) j["f_valid"] = false;
        os << j.dump() << "\n";
    }
    nlohmann::json agg{{"aggregate", true},      {"images", report.count},  {"s_alpha", report.mean_s},
                       {"f_max", report.mean_f}, {"e_max", report.mean_e},  {"mae", report.mean_mae},
                       {"f_excluded", report.f_excluded}};
    os << agg.dump() << "\n";
}

inline sod::MetricReport cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, const fs::path& out_dir,
                                  std::ostream& os = std::cout) {
    const sod::MetricReport report = sod::evaluate_dataset(pred_dir, gt_dir);
    print_metric_table(report, os);
    fs::create_directories(out_dir);
    write_metric_records(report, out_dir / "metrics.jsonl");
    return report;
}

/// In-memory evaluation of a model over loaded samples (used by ablation and
/// the acceptance suite; same scoring path as cmd_eval).
inline sod::MetricReport evaluate_model(const OrsiFlowModel& model, const std::vector<Sample>& samples, int steps,
                                        ConditionMode mode, uint64_t flow_seed) {
    sod::MetricReport report;
    report.per_image.resize(samples.size());
    const int threads = std::min<int>(worker_threads(), static_cast<int>(samples.size()));
    auto work = [&](int t) {
        for (size_t i = static_cast<size_t>(t); i < samples.size(); i += static_cast<size_t>(threads)) {
            const Sample& s = samples[i];
            const Tensor pred3 = model.predict(s.image, steps, image_noise_seed(flow_seed, s.stem), mode);
            const Tensor pred = Tensor::from({pred3.dim(1), pred3.dim(2)}, pred3.values());
            std::vector<double> gt_bin(s.mask.values().size());
            for (size_t j = 0; j < gt_bin.size(); ++j) gt_bin[j] = s.mask.data()[j] > 0.5 ? 1.0 : 0.0;
            const Tensor gt = Tensor::from({s.mask.dim(1), s.mask.dim(2)}, std::move(gt_bin));
            report.per_image[i] = sod::score_pair(s.stem, pred, gt);
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    report.finalize();
    return report;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

inline GradCheckReport cmd_gradcheck(std::ostream& os = std::cout, uint64_t seed = 7) {
    GradCheckReport report;
    report.results = run_gradcheck_suite(seed);
    for (const auto& r : report.results) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-26s rel %.3e  abs %.3e  (%lld elements)  %s\n", r.name.c_str(),
                      r.max_rel_err, r.max_abs_err, static_cast<long long>(r.checked), r.passed ? "ok" : "FAIL");
        os << line;
    }
    os << (report.all_passed() ? "gradcheck: all passed" : "gradcheck: FAILURES") << ", worst rel err "
       << report.worst_rel_err() << "\n";
    return report;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

struct AblateRow {
    std::string label;
    bool sfd = false;
    bool sfc = false;
    double s_alpha = 0.0, f_max = 0.0, e_max = 0.0, mae = 1.0;
};

struct AblateResult {
    std::vector<AblateRow> rows; // baseline, +SFD, +SFC, full
};

/// Trains the four guidance topologies with a shared seed and reduced epoch
/// budget, then scores each on the test split.
inline AblateResult cmd_ablate(const RunConfig& cfg, std::ostream& log = std::cout) {
    const Manifest manifest = require_manifest(cfg.data_dir);
    const auto test_entries = manifest.split("test");
    if (test_entries.empty()) throw IoError("manifest has no test split");
    std::vector<Sample> test = load_samples(test_entries);

    const std::array<std::tuple<const char*, bool, bool>, 4> topologies{
        std::tuple<const char*, bool, bool>{"(a) baseline", false, false},
        std::tuple<const char*, bool, bool>{"(c) +SFD", true, false},
        std::tuple<const char*, bool, bool>{"(d) +SFC", false, true},
        std::tuple<const char*, bool, bool>{"(h) +SFD+SFC", true, true},
    };

    AblateResult res;
    const fs::path out_dir = fs::path(cfg.out_dir) / "ablate";
    fs::create_directories(out_dir);
    for (const auto& [label, sfd, sfc] : topologies) {
        RunConfig sub = cfg;
        sub.sfd_enabled = sfd;
        sub.sfc_enabled = sfc;
        sub.train_epochs = cfg.ablate_epochs;
        std::string tag = sfd ? (sfc ? "full" : "sfd") : (sfc ? "sfc" : "baseline");
        sub.model_checkpoint = (out_dir / (tag + ".ckpt")).string();
        sub.out_dir = (out_dir / tag).string();
        log << "--- ablation " << label << " ---\n";
        TrainResult tr = cmd_train(sub, log);

        OrsiFlowModel model(model_config_from(sub), sub.seed);
        model.load(tr.checkpoint);
        const sod::MetricReport rep = evaluate_model(model, test, sub.flow_steps, sub.flow_condition_mode, sub.flow_seed);
        AblateRow row;
        row.label = label;
        row.sfd = sfd;
        row.sfc = sfc;
        row.s_alpha = rep.mean_s;
        row.f_max = rep.mean_f;
        row.e_max = rep.mean_e;
        row.mae = rep.mean_mae;
        res.rows.push_back(row);
    }

    char line[160];
    std::snprintf(line, sizeof(line), "%-14s %5s %5s %10s %10s %10s %10s\n", "setting", "SFD", "SFC", "S_alpha",
                  "F_max", "E_max", "MAE");
    log << line;
    std::ofstream records(out_dir / "ablate.jsonl");
    for (const auto& r : res.rows) {
        std::snprintf(line, sizeof(line), "%-14s %5s %5s %10.4f %10.4f %10.4f %10.4f\n", r.label.c_str(),
                      r.sfd ? "yes" : "-", r.sfc ? "yes" : "-", r.s_alpha, r.f_max, r.e_max, r.mae);
        log << line;
        nlohmann::json j{{"setting", r.label}, {"sfd", r.sfd},     {"sfc", r.sfc},  {"s_alpha", r.s_alpha},
                         {"f_max", r.f_max},   {"e_max", r.e_max}, {"mae", r.mae}};
        records << j.dump() << "\n";
    }
    cfg.write_effective(out_dir / "ablate.config.effective");
    return res;
}

} // namespace orsiflow
