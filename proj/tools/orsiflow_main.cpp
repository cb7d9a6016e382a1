// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

// orsiflow command-line interface. Exit codes: 0 success, 1 usage error,
// 2 data error, 3 numeric failure.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "orsiflow/commands.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct GlobalArgs {
    std::string config_path;
    std::string out;
    uint64_t seed = 0;
    bool seed_set = false;
    bool out_set = false;
};

orsiflow::RunConfig resolve_config(const GlobalArgs& g) {
    orsiflow::RunConfig cfg = g.config_path.empty() ? orsiflow::RunConfig{}
                                                    : orsiflow::RunConfig::from_file(g.config_path);
    if (g.seed_set) {
        cfg.seed = g.seed;
        cfg.data_seed = g.seed;
        cfg.flow_seed = g.seed;
    }
    if (g.out_set) cfg.out_dir = g.out;
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"orsiflow: latent rectified-flow saliency mask generation, desk scale"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "key=value config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", g.seed, "override run/data/flow seeds");
    auto* out_opt = app.add_option("--out", g.out, "output directory");

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    std::string gen_dir;
    int gen_train = -1, gen_test = -1;
    gen->add_option("--dir", gen_dir, "dataset root directory");
    gen->add_option("--n-train", gen_train, "training scenes");
    gen->add_option("--n-test", gen_test, "test scenes");

    auto* pre = app.add_subcommand("pretrain-vae", "pretrain and freeze the mask VAE");
    std::string pre_data, pre_ckpt;
    pre->add_option("--data", pre_data, "dataset root (with manifest.csv)");
    pre->add_option("--checkpoint", pre_ckpt, "output VAE checkpoint path");

    auto* tr = app.add_subcommand("train", "train the rectified-flow model");
    std::string tr_data, tr_vae, tr_ckpt;
    tr->add_option("--data", tr_data, "dataset root (with manifest.csv)");
    tr->add_option("--vae", tr_vae, "frozen VAE checkpoint");
    tr->add_option("--checkpoint", tr_ckpt, "output model checkpoint path");

    auto* pr = app.add_subcommand("predict", "predict saliency masks for a directory of images");
    std::string pr_input, pr_output, pr_ckpt;
    int pr_steps = -1;
    pr->add_option("--input", pr_input, "input image directory")->required();
    pr->add_option("--output", pr_output, "output mask directory")->required();
    pr->add_option("--steps", pr_steps, "Euler steps (default from config, 3)");
    pr->add_option("--checkpoint", pr_ckpt, "model checkpoint");

    auto* ev = app.add_subcommand("eval", "evaluate predictions against ground truth");
    std::string ev_pred, ev_gt;
    ev->add_option("--pred", ev_pred, "prediction mask directory")->required();
    ev->add_option("--gt", ev_gt, "ground-truth mask directory")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference checks over all ops and modules");

    auto* ab = app.add_subcommand("ablate", "train and compare the four guidance topologies");
    std::string ab_data, ab_vae;
    ab->add_option("--data", ab_data, "dataset root (with manifest.csv)");
    ab->add_option("--vae", ab_vae, "frozen VAE checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    g.seed_set = seed_opt->count() > 0;
    g.out_set = out_opt->count() > 0;

    try {
        orsiflow::RunConfig cfg = resolve_config(g);

        if (gen->parsed()) {
            if (!gen_dir.empty()) cfg.data_dir = gen_dir;
            if (gen_train > 0) cfg.n_train = gen_train;
            if (gen_test > 0) cfg.n_test = gen_test;
            auto m = orsiflow::cmd_gen_data(cfg);
            std::cout << "wrote " << m.entries.size() << " scenes under " << cfg.data_dir << "\n";
            return kExitOk;
        }
        if (pre->parsed()) {
            if (!pre_data.empty()) cfg.data_dir = pre_data;
            if (!pre_ckpt.empty()) cfg.vae_checkpoint = pre_ckpt;
            auto res = orsiflow::cmd_pretrain_vae(cfg);
            std::cout << "checkpoint: " << res.checkpoint.string() << "\n";
            return res.gate_passed ? kExitOk : kExitNumeric;
        }
        if (tr->parsed()) {
            if (!tr_data.empty()) cfg.data_dir = tr_data;
            if (!tr_vae.empty()) cfg.vae_checkpoint = tr_vae;
            if (!tr_ckpt.empty()) cfg.model_checkpoint = tr_ckpt;
            auto res = orsiflow::cmd_train(cfg);
            std::cout << "best val MAE " << res.best_val_mae << ", checkpoint " << res.checkpoint.string() << "\n";
            return kExitOk;
        }
        if (pr->parsed()) {
            if (!pr_ckpt.empty()) cfg.model_checkpoint = pr_ckpt;
            const int steps = pr_steps > 0 ? pr_steps : cfg.flow_steps;
            auto res = orsiflow::cmd_predict(cfg, pr_input, pr_output, steps);
            std::cout << "predicted " << res.images << " masks into " << res.output_dir.string() << "\n";
            return kExitOk;
        }
        if (ev->parsed()) {
            orsiflow::cmd_eval(ev_pred, ev_gt, cfg.out_dir);
            return kExitOk;
        }
        if (gc->parsed()) {
            auto report = orsiflow::cmd_gradcheck();
            return report.all_passed() ? kExitOk : kExitNumeric;
        }
        if (ab->parsed()) {
            if (!ab_data.empty()) cfg.data_dir = ab_data;
            if (!ab_vae.empty()) cfg.vae_checkpoint = ab_vae;
            orsiflow::cmd_ablate(cfg);
            return kExitOk;
        }
        return kExitUsage;
    } catch (const orsiflow::NonFiniteLoss& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const orsiflow::NonFiniteState& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const orsiflow::ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
