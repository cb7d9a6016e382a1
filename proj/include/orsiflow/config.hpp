// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "orsiflow/errors.hpp"

namespace orsiflow {

/// Flat key=value configuration with optional [section] headers. Sections
/// only prefix keys, so `[flow]\nsteps = 3` and `flow.steps = 3` are the
/// same statement. `#` starts a comment.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig parse_file(const std::filesystem::path& path) {
        std::ifstream is(path);
        if (!is) throw ConfigError("cannot open config file: " + path.string());
        std::ostringstream ss;
        ss << is.rdbuf();
        return parse(ss.str(), path.string());
    }

    static KeyValueConfig parse(const std::string& text, const std::string& origin = "<string>") {
        KeyValueConfig cfg;
        std::istringstream is(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string t = trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']') throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section");
                section = trim(t.substr(1, t.size() - 2));
                continue;
            }
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(t.substr(0, eq));
            const std::string val = trim(t.substr(eq + 1));
            if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            if (!section.empty()) key = section + "." + key;
            cfg.values_[key] = val;
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    void set(const std::string& key, const std::string& val) { values_[key] = val; }

    std::string get_str(const std::string& key, const std::string& dflt) const {
        auto it = values_.find(key);
        return it == values_.end() ? dflt : it->second;
    }

    double get_double(const std::string& key, double dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            return std::stod(it->second);
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": cannot parse '" + it->second + "' as number");
        }
    }

    int get_int(const std::string& key, int dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            return std::stoi(it->second);
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": cannot parse '" + it->second + "' as integer");
        }
    }

    uint64_t get_u64(const std::string& key, uint64_t dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        try {
            return std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError("key " + key + ": cannot parse '" + it->second + "' as integer");
        }
    }

    bool get_bool(const std::string& key, bool dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("key " + key + ": cannot parse '" + v + "' as bool");
    }

    std::vector<int> get_int_list(const std::string& key, std::vector<int> dflt) const {
        auto it = values_.find(key);
        if (it == values_.end()) return dflt;
        std::vector<int> out;
        std::istringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            try {
                out.push_back(std::stoi(trim(tok)));
            } catch (const std::exception&) {
                throw ConfigError("key " + key + ": bad integer list '" + it->second + "'");
            }
        }
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

enum class ConditionMode { PerStep, Once };

/// Resolved run configuration: every tunable of the pipeline with the
/// desk-scale defaults baked in. All commands serialize the effective values
/// next to their outputs so a run can be reproduced from the archive.
struct RunConfig {
    // dataset generation
    std::string data_dir = "data";
    int canvas = 64;
    int n_train = 500;
    int n_test = 100;
    int objects_min = 1;
    int objects_max = 3;
    double contrast = 0.6;
    double clutter = 0.5;
    uint64_t data_seed = 1;

    // conditional encoder
    std::array<int, 4> enc_channels{16, 32, 64, 128};
    std::array<int, 4> enc_heads{1, 2, 4, 8};
    std::array<int, 4> enc_sr{4, 2, 1, 1};
    int enc_time_dim = 32;
    int enc_mlp_ratio = 2;

    // guidance
    bool sfd_enabled = true;
    bool sfc_enabled = true;
    bool sfc_strict_eq10 = false;

    // vae
    int vae_downsample = 8;
    int vae_latent_channels = 4;
    std::vector<int> vae_hidden{16, 32, 64};
    double vae_beta_kl = 1e-4;
    int vae_epochs = 30;
    int vae_batch = 8;
    double vae_lr = 1e-3;

    // velocity net
    int velocity_width = 64;
    int velocity_blocks = 4;

    // flow
    int flow_steps = 3;
    ConditionMode flow_condition_mode = ConditionMode::PerStep;
    uint64_t flow_seed = 7;

    // training
    int train_epochs = 60;
    int train_batch = 8;
    double train_lr = 1e-3;
    double train_beta1 = 0.9;
    double train_beta2 = 0.999;
    double train_eps = 1e-8;
    double train_weight_decay = 0.01;
    double train_lr_min_frac = 0.1; // cosine decay floor as a fraction of train_lr
    int train_val_every = 4;
    int train_val_count = 48;

    // ablation study
    int ablate_epochs = 20;

    uint64_t seed = 1234;

    // paths
    std::string vae_checkpoint = "vae.ckpt";
    std::string model_checkpoint = "model.ckpt";
    std::string out_dir = "out";

    static RunConfig from_kv(const KeyValueConfig& kv) {
        RunConfig c;
        c.data_dir = kv.get_str("data.dir", c.data_dir);
        c.canvas = kv.get_int("data.canvas", c.canvas);
        c.n_train = kv.get_int("data.n_train", c.n_train);
        c.n_test = kv.get_int("data.n_test", c.n_test);
        c.objects_min = kv.get_int("data.objects_min", c.objects_min);
        c.objects_max = kv.get_int("data.objects_max", c.objects_max);
        c.contrast = kv.get_double("data.contrast", c.contrast);
        c.clutter = kv.get_double("data.clutter", c.clutter);
        c.data_seed = kv.get_u64("data.seed", c.data_seed);

        auto list4 = [&](const std::string& key, std::array<int, 4> dflt) {
            auto v = kv.get_int_list(key, {dflt.begin(), dflt.end()});
            if (v.size() != 4) throw ConfigError(key + " must list exactly 4 integers");
            std::array<int, 4> a;
            std::copy(v.begin(), v.end(), a.begin());
            return a;
        };
        c.enc_channels = list4("enc.channels", c.enc_channels);
        c.enc_heads = list4("enc.heads", c.enc_heads);
        c.enc_sr = list4("enc.sr", c.enc_sr);
        c.enc_time_dim = kv.get_int("enc.time_dim", c.enc_time_dim);
        c.enc_mlp_ratio = kv.get_int("enc.mlp_ratio", c.enc_mlp_ratio);

        c.sfd_enabled = kv.get_bool("sfd.enabled", c.sfd_enabled);
        c.sfc_enabled = kv.get_bool("sfc.enabled", c.sfc_enabled);
        c.sfc_strict_eq10 = kv.get_bool("sfc.strict_eq10", c.sfc_strict_eq10);

        c.vae_downsample = kv.get_int("vae.downsample", c.vae_downsample);
        c.vae_latent_channels = kv.get_int("vae.latent_channels", c.vae_latent_channels);
        c.vae_hidden = kv.get_int_list("vae.hidden", c.vae_hidden);
        c.vae_beta_kl = kv.get_double("vae.beta_kl", c.vae_beta_kl);
        c.vae_epochs = kv.get_int("vae.epochs", c.vae_epochs);
        c.vae_batch = kv.get_int("vae.batch", c.vae_batch);
        c.vae_lr = kv.get_double("vae.lr", c.vae_lr);

        c.velocity_width = kv.get_int("velocity.width", c.velocity_width);
        c.velocity_blocks = kv.get_int("velocity.blocks", c.velocity_blocks);

        c.flow_steps = kv.get_int("flow.steps", c.flow_steps);
        const std::string mode = kv.get_str("flow.condition_mode", "per_step");
        if (mode == "per_step")
            c.flow_condition_mode = ConditionMode::PerStep;
        else if (mode == "once")
            c.flow_condition_mode = ConditionMode::Once;
        else
            throw ConfigError("flow.condition_mode must be per_step or once, got '" + mode + "'");
        c.flow_seed = kv.get_u64("flow.seed", c.flow_seed);

        c.train_epochs = kv.get_int("train.epochs", c.train_epochs);
        c.train_batch = kv.get_int("train.batch", c.train_batch);
        c.train_lr = kv.get_double("train.lr", c.train_lr);
        c.train_beta1 = kv.get_double("train.beta1", c.train_beta1);
        c.train_beta2 = kv.get_double("train.beta2", c.train_beta2);
        c.train_eps = kv.get_double("train.eps", c.train_eps);
        c.train_weight_decay = kv.get_double("train.weight_decay", c.train_weight_decay);
        c.train_lr_min_frac = kv.get_double("train.lr_min_frac", c.train_lr_min_frac);
        c.train_val_every = kv.get_int("train.val_every", c.train_val_every);
        c.train_val_count = kv.get_int("train.val_count", c.train_val_count);

        c.ablate_epochs = kv.get_int("ablate.epochs", c.ablate_epochs);

        c.seed = kv.get_u64("run.seed", c.seed);

        c.vae_checkpoint = kv.get_str("paths.vae_checkpoint", c.vae_checkpoint);
        c.model_checkpoint = kv.get_str("paths.model_checkpoint", c.model_checkpoint);
        c.out_dir = kv.get_str("paths.out", c.out_dir);
        return c;
    }

    static RunConfig from_file(const std::filesystem::path& path) {
        return from_kv(KeyValueConfig::parse_file(path));
    }

    KeyValueConfig to_kv() const {
        KeyValueConfig kv;
        auto join = [](const auto& v) {
            std::ostringstream os;
            for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
            return os.str();
        };
        auto num = [](double d) {
            std::ostringstream os;
            os.precision(17);
            os << d;
            return os.str();
        };
        kv.set("data.dir", data_dir);
        kv.set("data.canvas", std::to_string(canvas));
        kv.set("data.n_train", std::to_string(n_train));
        kv.set("data.n_test", std::to_string(n_test));
        kv.set("data.objects_min", std::to_string(objects_min));
        kv.set("data.objects_max", std::to_string(objects_max));
        kv.set("data.contrast", num(contrast));
        kv.set("data.clutter", num(clutter));
        kv.set("data.seed", std::to_string(data_seed));
        kv.set("enc.channels", join(enc_channels));
        kv.set("enc.heads", join(enc_heads));
        kv.set("enc.sr", join(enc_sr));
        kv.set("enc.time_dim", std::to_string(enc_time_dim));
        kv.set("enc.mlp_ratio", std::to_string(enc_mlp_ratio));
        kv.set("sfd.enabled", sfd_enabled ? "true" : "false");
        kv.set("sfc.enabled", sfc_enabled ? "true" : "false");
        kv.set("sfc.strict_eq10", sfc_strict_eq10 ? "true" : "false");
        kv.set("vae.downsample", std::to_string(vae_downsample));
        kv.set("vae.latent_channels", std::to_string(vae_latent_channels));
        kv.set("vae.hidden", join(vae_hidden));
        kv.set("vae.beta_kl", num(vae_beta_kl));
        kv.set("vae.epochs", std::to_string(vae_epochs));
        kv.set("vae.batch", std::to_string(vae_batch));
        kv.set("vae.lr", num(vae_lr));
        kv.set("velocity.width", std::to_string(velocity_width));
        kv.set("velocity.blocks", std::to_string(velocity_blocks));
        kv.set("flow.steps", std::to_string(flow_steps));
        kv.set("flow.condition_mode", flow_condition_mode == ConditionMode::PerStep ? "per_step" : "once");
        kv.set("flow.seed", std::to_string(flow_seed));
        kv.set("train.epochs", std::to_string(train_epochs));
        kv.set("train.batch", std::to_string(train_batch));
        kv.set("train.lr", num(train_lr));
        kv.set("train.beta1", num(train_beta1));
        kv.set("train.beta2", num(train_beta2));
        kv.set("train.eps", num(train_eps));
        kv.set("train.weight_decay", num(train_weight_decay));
        kv.set("train.lr_min_frac", num(train_lr_min_frac));
        kv.set("train.val_every", std::to_string(train_val_every));
        kv.set("train.val_count", std::to_string(train_val_count));
        kv.set("ablate.epochs", std::to_string(ablate_epochs));
        kv.set("run.seed", std::to_string(seed));
        kv.set("paths.vae_checkpoint", vae_checkpoint);
        kv.set("paths.model_checkpoint", model_checkpoint);
        kv.set("paths.out", out_dir);
        return kv;
    }

    void write_effective(const std::filesystem::path& path) const {
        std::ofstream os(path);
        if (!os) throw IoError("cannot write effective config: " + path.string());
        const KeyValueConfig kv = to_kv();
        for (const auto& [k, v] : kv.values()) os << k << " = " << v << "\n";
    }
};

/// Worker-pool width: min(ORSIFLOW_THREADS, hardware), at least 1.
inline int worker_threads() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("ORSIFLOW_THREADS")) {
        try {
            const int cap = std::stoi(env);
            if (cap >= 1) hw = std::min(hw, cap);
        } catch (const std::exception&) {
            // ignore malformed values, fall back to hardware width
        }
    }
    return hw;
}

} // namespace orsiflow
