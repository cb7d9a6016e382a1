// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Runs the full desk-scale pipeline (data generation, VAE pretraining, flow
// training, ablations) in a work directory, so the heavy criteria take tens
// of minutes of CPU time in total.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "orsiflow/commands.hpp"

#include "oracles/sod_reference.hpp"

using namespace orsiflow;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int id;
    std::string name;
    bool pass;
    bool skipped = false;
    std::string detail;
};

std::vector<Outcome> g_outcomes;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    g_outcomes.push_back({id, name, pass, false, detail});
    std::printf("[%d] %-28s %s  (%s)\n", id, name.c_str(), pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

void report_skip(int id, const std::string& name, const std::string& why) {
    g_outcomes.push_back({id, name, true, true, why});
    std::printf("[%d] %-28s SKIP  (%s)\n", id, name.c_str(), why.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Desk-scale profile shared by the heavy criteria.
RunConfig desk_config(const fs::path& work) {
    RunConfig cfg;
    cfg.data_dir = (work / "data").string();
    cfg.vae_checkpoint = (work / "vae.ckpt").string();
    cfg.model_checkpoint = (work / "model.ckpt").string();
    cfg.out_dir = (work / "out").string();
    return cfg;
}

// --- criterion 1: gradient suite ---
void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    auto results = run_gradcheck_suite(7);
    const double secs = seconds_since(t0);
    double worst = 0.0;
    int failed = 0;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.passed) ++failed;
    }
    std::ostringstream d;
    d << results.size() << " checks, worst rel err " << worst << ", " << secs << " s";
    report(1, "gradient suite", failed == 0 && worst < 1e-4 && secs < 120.0, d.str());
}

// --- criterion 2: metric oracle equivalence ---
void criterion_metric_oracles() {
    Rng rng(2026);
    double worst_se = 0.0, worst_fm = 0.0;
    bool ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int h = 32, w = 32;
        std::vector<double> pred(static_cast<size_t>(h) * w), gt(static_cast<size_t>(h) * w, 0.0);
        const double cy = rng.uniform(0.2, 0.8) * h, cx = rng.uniform(0.2, 0.8) * w;
        const double r = rng.uniform(0.1, 0.35) * h;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
                if (d2 <= r * r || rng.uniform() < 0.02) gt[i] = 1.0;
                pred[i] = std::clamp(0.4 + 0.5 * (rng.uniform() - 0.5) + (d2 <= r * r ? 0.25 : 0.0), 0.0, 1.0);
            }
        const Tensor tp = Tensor::from({h, w}, pred);
        const Tensor tg = Tensor::from({h, w}, gt);
        const oracle::Map mp{h, w, pred}, mg{h, w, gt};
        const double d_mae = std::abs(sod::mae(tp, tg) - oracle::ref_mae(mp, mg));
        const double ref_f = oracle::ref_f_measure_max(mp, mg);
        const double d_f = ref_f >= 0 ? std::abs(sod::f_measure_max(tp, tg) - ref_f) : 0.0;
        const double d_s = std::abs(sod::s_measure(tp, tg) - oracle::ref_s_measure(mp, mg));
        const double d_e = std::abs(sod::e_measure_max(tp, tg) - oracle::ref_e_measure_max(mp, mg));
        worst_fm = std::max({worst_fm, d_mae, d_f});
        worst_se = std::max({worst_se, d_s, d_e});
        if (d_mae > 1e-12 || d_f > 1e-12 || d_s > 1e-9 || d_e > 1e-9) ok = false;

        // perfect prediction scores exactly (1, 1, 1, 0)
        if (sod::mae(tg, tg) != 0.0 || sod::f_measure_max(tg, tg) != 1.0 || sod::s_measure(tg, tg) != 1.0 ||
            sod::e_measure_max(tg, tg) != 1.0)
            ok = false;
    }
    std::ostringstream d;
    d << "50 pairs, worst |d| mae/f " << worst_fm << ", s/e " << worst_se << ", perfect = (1,1,1,0) exact";
    report(2, "metric oracle equivalence", ok, d.str());
}

// --- criterion 3: flow exactness ---
void criterion_flow_exactness() {
    Rng rng(303);
    bool ok = true;
    double worst = 0.0;
    for (int K : {1, 3, 10}) {
        Tensor z0 = Tensor::randn({4, 8, 8}, rng);
        Tensor eps = Tensor::randn({4, 8, 8}, rng);
        Tensor field = sub(eps, z0);
        Tensor out = euler_sample(eps, K, [&](const Tensor&, double) { return field; });
        for (size_t i = 0; i < out.values().size(); ++i)
            worst = std::max(worst, std::abs(out.values()[i] - z0.values()[i]));
    }
    if (worst > 1e-12) ok = false;
    // endpoint identities are exact
    Tensor a = Tensor::randn({2, 4, 4}, rng), b = Tensor::randn({2, 4, 4}, rng);
    if (interpolate_state(a, b, 0.0).values() != a.values()) ok = false;
    if (interpolate_state(a, b, 1.0).values() != b.values()) ok = false;
    std::ostringstream d;
    d << "constant-field recovery worst |err| " << worst << " over K in {1,3,10}; endpoints exact";
    report(3, "flow exactness", ok, d.str());
}

// --- criterion 4: VAE gate ---
bool criterion_vae_gate(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    if (!fs::exists(fs::path(cfg.data_dir) / "manifest.csv")) cmd_gen_data(cfg);
    fs::create_directories(cfg.out_dir);
    std::ofstream log(fs::path(cfg.out_dir) / "vae_pretrain.log");
    auto res = cmd_pretrain_vae(cfg, log);
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << "held-out recon MAE " << res.heldout_mae << " < 0.05, " << secs << " s";
    const bool ok = res.gate_passed && secs < 900.0;
    report(4, "VAE gate", ok, d.str());

    if (ok) {
        // pretrained posterior separates distinct masks (disk vs empty)
        ParamStore store;
        Rng init(Rng::derive(cfg.seed, 0x7a1));
        VaeConfig vc;
        vc.downsample = cfg.vae_downsample;
        vc.latent_channels = cfg.vae_latent_channels;
        vc.hidden = cfg.vae_hidden;
        TinyVae vae(store, vc, init);
        load_checkpoint(store, cfg.vae_checkpoint);
        NoGrad ng;
        Tensor disk = Tensor::zeros({1, cfg.canvas, cfg.canvas});
        const double c = cfg.canvas / 2.0;
        for (int y = 0; y < cfg.canvas; ++y)
            for (int x = 0; x < cfg.canvas; ++x)
                if ((y - c) * (y - c) + (x - c) * (x - c) <= 64.0)
                    disk.values()[static_cast<size_t>(y) * cfg.canvas + x] = 1.0;
        const Tensor mu_disk = vae.encode(disk).first;
        const Tensor mu_empty = vae.encode(Tensor::zeros({1, cfg.canvas, cfg.canvas})).first;
        double dist = 0.0;
        for (size_t i = 0; i < mu_disk.values().size(); ++i) {
            const double dd = mu_disk.values()[i] - mu_empty.values()[i];
            dist += dd * dd;
        }
        std::ostringstream d2;
        d2 << "|mu(disk) - mu(empty)| " << std::sqrt(dist) << " > 0";
        report(4, "aux: posterior separates masks", dist > 1e-6, d2.str());
    }
    return ok;
}

struct TrainedEval {
    double mae = 1.0, s_alpha = 0.0;
    double train_secs = 0.0;
};

TrainedEval train_and_eval(RunConfig cfg, const std::vector<Sample>& test, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult tr = cmd_train(cfg, log);
    TrainedEval ev;
    ev.train_secs = seconds_since(t0);
    OrsiFlowModel model(model_config_from(cfg), cfg.seed);
    model.load(tr.checkpoint);
    const auto rep = evaluate_model(model, test, cfg.flow_steps, cfg.flow_condition_mode, cfg.flow_seed);
    ev.mae = rep.mean_mae;
    ev.s_alpha = rep.mean_s;
    return ev;
}

// --- criteria 5 + 6 + aux measurements ---
void criterion_training(const RunConfig& base, bool vae_ok) {
    if (!vae_ok) {
        report(5, "end-to-end training", false, "skipped: VAE gate failed");
        report(6, "few-step consistency", false, "skipped: VAE gate failed");
        return;
    }
    const Manifest manifest = require_manifest(base.data_dir);
    const std::vector<Sample> test = load_samples(manifest.split("test"));

    std::ofstream log(fs::path(base.out_dir) / "train_full.log");

    // untrained reference: fresh init + frozen VAE, no flow training
    double untrained_mae;
    {
        OrsiFlowModel model(model_config_from(base), base.seed);
        auto meta = load_checkpoint(model.params(), base.vae_checkpoint, "vae.");
        model.freeze_vae();
        if (meta.count("latent_scale")) model.set_latent_scale(std::stod(meta["latent_scale"]));
        untrained_mae = evaluate_model(model, test, base.flow_steps, base.flow_condition_mode, base.flow_seed).mean_mae;
    }

    // full model
    TrainedEval full = train_and_eval(base, test, log);

    // no-guidance baseline at the same profile and seed
    RunConfig bl = base;
    bl.sfd_enabled = false;
    bl.sfc_enabled = false;
    bl.model_checkpoint = (fs::path(base.out_dir) / "baseline.ckpt").string();
    bl.out_dir = (fs::path(base.out_dir) / "baseline").string();
    std::ofstream bl_log(fs::path(base.out_dir) / "train_baseline.log");
    TrainedEval baseline = train_and_eval(bl, test, bl_log);

    {
        std::ostringstream d;
        d << "test MAE " << full.mae << " (< 0.08), S_alpha " << full.s_alpha << " (> 0.80), untrained MAE "
          << untrained_mae << ", no-guidance MAE " << baseline.mae << ", train " << full.train_secs << " s";
        const bool ok = full.mae < 0.08 && full.s_alpha > 0.80 && full.mae < untrained_mae &&
                        full.mae < baseline.mae && full.train_secs < 2700.0;
        report(5, "end-to-end training", ok, d.str());
    }

    // criterion 6: K=3 vs K=25 predictions
    {
        OrsiFlowModel model(model_config_from(base), base.seed);
        model.load(base.model_checkpoint);
        double acc = 0.0;
        for (const auto& s : test) {
            const uint64_t seed = image_noise_seed(base.flow_seed, s.stem);
            const Tensor p3 = model.predict(s.image, 3, seed, base.flow_condition_mode);
            const Tensor p25 = model.predict(s.image, 25, seed, base.flow_condition_mode);
            acc += mean_pixel_mae(p3, p25);
        }
        const double few_step = acc / static_cast<double>(test.size());
        std::ostringstream d;
        d << "mean |K=3 - K=25| MAE " << few_step << " (< 0.01) over " << test.size() << " images";
        report(6, "few-step consistency", few_step < 0.01, d.str());

        // aux: trained trajectories are straighter than untrained ones. The
        // untrained output head is zero-initialized (exactly-zero field,
        // degenerate trajectory), so give it a live random head first.
        OrsiFlowModel fresh(model_config_from(base), base.seed);
        load_checkpoint(fresh.params(), base.vae_checkpoint, "vae.");
        fresh.freeze_vae();
        fresh.set_latent_scale(model.latent_scale());
        {
            Rng rnd(4242);
            Tensor out_w = fresh.params().get("vel.out.w");
            out_w.values() = kaiming_uniform(out_w.shape(), out_w.dim(1) * out_w.dim(2) * out_w.dim(3), rnd).values();
        }
        double trained_str = 0.0, untrained_str = 0.0;
        const int n_traj = std::min<int>(10, static_cast<int>(test.size()));
        for (int i = 0; i < n_traj; ++i) {
            const Sample& s = test[static_cast<size_t>(i)];
            const uint64_t seed = image_noise_seed(base.flow_seed, s.stem);
            std::vector<Tensor> tr_t, tr_u;
            model.predict(s.image, 8, seed, base.flow_condition_mode, &tr_t);
            fresh.predict(s.image, 8, seed, base.flow_condition_mode, &tr_u);
            trained_str += straightness(tr_t);
            untrained_str += straightness(tr_u);
        }
        std::ostringstream d2;
        d2 << "trained " << trained_str / n_traj << " < untrained " << untrained_str / n_traj;
        report(6, "aux: trajectory straightness", trained_str < untrained_str, d2.str());

        // aux: low-contrast scenes are measurably harder for the trained model
        auto contrast_set = [&](double contrast, uint64_t seed_base) {
            std::vector<Sample> out;
            SceneSpec spec = scene_spec_from(base);
            spec.contrast = contrast;
            for (int i = 0; i < 30; ++i) {
                spec.seed = seed_base + static_cast<uint64_t>(i);
                auto [img, mask] = generate_scene(spec);
                out.push_back({"c" + std::to_string(i), img, mask});
            }
            return out;
        };
        const auto hard = contrast_set(0.05, 900000);
        const auto easy = contrast_set(0.9, 900000);
        const double hard_mae =
            evaluate_model(model, hard, base.flow_steps, base.flow_condition_mode, base.flow_seed).mean_mae;
        const double easy_mae =
            evaluate_model(model, easy, base.flow_steps, base.flow_condition_mode, base.flow_seed).mean_mae;
        std::ostringstream d3;
        d3 << "MAE at contrast 0.05 " << hard_mae << " > at 0.9 " << easy_mae;
        report(6, "aux: contrast difficulty", hard_mae > easy_mae, d3.str());
    }
}

// --- criterion 7: ablation direction ---
void criterion_ablation(const RunConfig& base, bool vae_ok) {
    if (!vae_ok) {
        report(7, "ablation direction", false, "skipped: VAE gate failed");
        return;
    }
    RunConfig cfg = base;
    cfg.out_dir = (fs::path(base.out_dir) / "ablate_run").string();
    std::ofstream log(fs::path(base.out_dir) / "ablate.log");
    fs::create_directories(cfg.out_dir);
    auto res = cmd_ablate(cfg, log);
    double mae_a = 0, mae_c = 0, mae_d = 0, mae_h = 0;
    for (const auto& r : res.rows) {
        if (!r.sfd && !r.sfc) mae_a = r.mae;
        if (r.sfd && !r.sfc) mae_c = r.mae;
        if (!r.sfd && r.sfc) mae_d = r.mae;
        if (r.sfd && r.sfc) mae_h = r.mae;
    }
    const bool ok = mae_h < mae_c && mae_h < mae_d && mae_c < mae_a && mae_d < mae_a;
    std::ostringstream d;
    d << "MAE: baseline " << mae_a << ", +SFD " << mae_c << ", +SFC " << mae_d << ", full " << mae_h
      << "; need full < single < baseline";
    report(7, "ablation direction", ok, d.str());
}

// --- criterion 8: optional external Table-I style reproduction ---
void criterion_external_eval(const RunConfig& base) {
    const char* pred = std::getenv("ORSIFLOW_T1_PRED");
    const char* gt = std::getenv("ORSIFLOW_T1_GT");
    const char* expect = std::getenv("ORSIFLOW_T1_EXPECT");
    if (!pred || !gt || !expect) {
        report_skip(8, "published-method row", "set ORSIFLOW_T1_PRED/GT/EXPECT=s,f,e,mae to enable");
        return;
    }
    double es, ef, ee, emae;
    if (std::sscanf(expect, "%lf,%lf,%lf,%lf", &es, &ef, &ee, &emae) != 4) {
        report(8, "published-method row", false, "cannot parse ORSIFLOW_T1_EXPECT");
        return;
    }
    auto rep = cmd_eval(pred, gt, fs::path(base.out_dir) / "external_eval");
    const double ds = std::abs(rep.mean_s - es), df = std::abs(rep.mean_f - ef), de = std::abs(rep.mean_e - ee),
                 dm = std::abs(rep.mean_mae - emae);
    std::ostringstream d;
    d << "|dS| " << ds << ", |dF| " << df << ", |dE| " << de << ", |dMAE| " << dm << " (tolerance 0.002)";
    report(8, "published-method row", ds <= 0.002 && df <= 0.002 && de <= 0.002 && dm <= 0.002, d.str());
}

} // namespace

int main(int argc, char** argv) {
    fs::path work = "acceptance_work";
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--workdir") == 0 && i + 1 < argc) work = argv[++i];
    }
    fs::create_directories(work);
    std::printf("acceptance work directory: %s\n", fs::absolute(work).string().c_str());

    RunConfig cfg = desk_config(work);
    fs::create_directories(cfg.out_dir);

    criterion_gradients();
    criterion_metric_oracles();
    criterion_flow_exactness();
    const bool vae_ok = criterion_vae_gate(cfg);
    criterion_training(cfg, vae_ok);
    criterion_ablation(cfg, vae_ok);
    criterion_external_eval(cfg);

    int failed = 0, skipped = 0;
    for (const auto& o : g_outcomes) {
        if (o.skipped)
            ++skipped;
        else if (!o.pass)
            ++failed;
    }
    std::printf("ACCEPTANCE: %d passed, %d failed, %d skipped\n",
                static_cast<int>(g_outcomes.size()) - failed - skipped, failed, skipped);
    return failed == 0 ? 0 : 1;
}
