// Copyright (C) 2026 the orsiflow authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "orsiflow/config.hpp"
#include "orsiflow/png_io.hpp"
#include "orsiflow/rng.hpp"
#include "orsiflow/tensor.hpp"

namespace orsiflow {

enum class ShapeKind { Disk, Rectangle, Bar, Cluster };

/// Parameters of one synthetic ORSI-like scene. Same spec + seed always
/// produces the identical (image, mask) pair.
struct SceneSpec {
    int height = 64;
    int width = 64;
    int objects_min = 1;
    int objects_max = 3;
    std::vector<ShapeKind> vocabulary{ShapeKind::Disk, ShapeKind::Rectangle, ShapeKind::Bar, ShapeKind::Cluster};
    double contrast = 0.6; // object-to-background luminance separation in [0,1]
    double clutter = 0.5;  // fine background texture amplitude in [0,1]
    uint64_t seed = 0;
};

/// Analytic support of one placed object, kept for alignment tests.
struct SceneObject {
    ShapeKind kind;
    // disk / cluster blobs: centers+radii; rectangle: bounds; bar: segment.
    std::vector<std::array<double, 3>> blobs; // (cy, cx, r)
    double y0 = 0, x0 = 0, y1 = 0, x1 = 0;    // rectangle bounds / bar endpoints
    double half_thickness = 0;

    bool contains(double py, double px) const {
        switch (kind) {
            case ShapeKind::Disk:
            case ShapeKind::Cluster:
                for (const auto& b : blobs) {
                    const double dy = py - b[0], dx = px - b[1];
                    if (dy * dy + dx * dx <= b[2] * b[2]) return true;
                }
                return false;
            case ShapeKind::Rectangle:
                return py >= y0 && py <= y1 && px >= x0 && px <= x1;
            case ShapeKind::Bar: {
                const double vy = y1 - y0, vx = x1 - x0;
                const double len2 = vy * vy + vx * vx;
                double t = len2 > 0 ? ((py - y0) * vy + (px - x0) * vx) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double dy = py - (y0 + t * vy), dx = px - (x0 + t * vx);
                return dy * dy + dx * dx <= half_thickness * half_thickness;
            }
        }
        return false;
    }
};

struct Scene {
    Tensor image; // [3,H,W]
    Tensor mask;  // [1,H,W], strictly {0,1}
    std::vector<SceneObject> objects;
};

namespace detail {

/// Value noise: random lattice bilinearly upsampled to the canvas.
inline std::vector<double> value_noise(int h, int w, int cell, Rng& rng) {
    const int gh = h / cell + 2, gw = w / cell + 2;
    std::vector<double> grid(static_cast<size_t>(gh) * gw);
    for (auto& v : grid) v = rng.uniform();
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        const double fy = static_cast<double>(y) / cell;
        const int y0 = static_cast<int>(fy);
        const double wy = fy - y0;
        for (int x = 0; x < w; ++x) {
            const double fx = static_cast<double>(x) / cell;
            const int x0 = static_cast<int>(fx);
            const double wx = fx - x0;
            const double a = grid[static_cast<size_t>(y0) * gw + x0];
            const double b = grid[static_cast<size_t>(y0) * gw + x0 + 1];
            const double c = grid[static_cast<size_t>(y0 + 1) * gw + x0];
            const double d = grid[static_cast<size_t>(y0 + 1) * gw + x0 + 1];
            out[static_cast<size_t>(y) * w + x] =
                (a * (1 - wx) + b * wx) * (1 - wy) + (c * (1 - wx) + d * wx) * wy;
        }
    }
    return out;
}

} // namespace detail

inline Scene generate_scene_detail(const SceneSpec& spec) {
    const int H = spec.height, W = spec.width;
    if (H < 8 || W < 8) throw InvalidSpec("scene canvas must be at least 8x8");
    if (spec.vocabulary.empty()) throw InvalidSpec("scene shape vocabulary is empty");
    if (spec.objects_min < 0 || spec.objects_max < spec.objects_min)
        throw InvalidSpec("invalid object count range");

    Rng rng(spec.seed);
    const double minhw = std::min(H, W);

    // Background: coarse + fine value noise around a mid luminance.
    const auto coarse = detail::value_noise(H, W, std::max(8, H / 4), rng);
    const auto fine = detail::value_noise(H, W, 4, rng);
    std::vector<double> bg(static_cast<size_t>(H) * W);
    double bg_mean = 0.0;
    for (size_t i = 0; i < bg.size(); ++i) {
        bg[i] = std::clamp(0.45 + 0.36 * (coarse[i] - 0.5) + 0.24 * spec.clutter * (fine[i] - 0.5), 0.04, 0.96);
        bg_mean += bg[i];
    }
    bg_mean /= static_cast<double>(bg.size());

    double tint[3];
    for (double& t : tint) t = rng.uniform(-0.06, 0.06);

    const int count = rng.uniform_int(spec.objects_min, spec.objects_max);
    std::vector<SceneObject> objects;
    std::vector<double> colors; // luminance per object
    objects.reserve(static_cast<size_t>(count));
    for (int k = 0; k < count; ++k) {
        SceneObject obj;
        obj.kind = spec.vocabulary[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(spec.vocabulary.size()) - 1))];
        switch (obj.kind) {
            case ShapeKind::Disk: {
                const double r = rng.uniform(2.5, 0.18 * minhw);
                const double cy = rng.uniform(r, H - 1 - r);
                const double cx = rng.uniform(r, W - 1 - r);
                obj.blobs.push_back({cy, cx, r});
                break;
            }
            case ShapeKind::Rectangle: {
                const double rw = rng.uniform(4.0, 0.35 * W);
                const double rh = rng.uniform(4.0, 0.35 * H);
                obj.y0 = rng.uniform(0.0, H - 1 - rh);
                obj.x0 = rng.uniform(0.0, W - 1 - rw);
                obj.y1 = obj.y0 + rh;
                obj.x1 = obj.x0 + rw;
                break;
            }
            case ShapeKind::Bar: {
                const double len = rng.uniform(0.3 * minhw, 0.75 * minhw);
                const double ang = rng.uniform(0.0, 3.14159265358979323846);
                const double cy = rng.uniform(0.15 * H, 0.85 * H);
                const double cx = rng.uniform(0.15 * W, 0.85 * W);
                obj.y0 = std::clamp(cy - 0.5 * len * std::sin(ang), 0.0, H - 1.0);
                obj.x0 = std::clamp(cx - 0.5 * len * std::cos(ang), 0.0, W - 1.0);
                obj.y1 = std::clamp(cy + 0.5 * len * std::sin(ang), 0.0, H - 1.0);
                obj.x1 = std::clamp(cx + 0.5 * len * std::cos(ang), 0.0, W - 1.0);
                obj.half_thickness = rng.uniform(0.6, 1.6);
                break;
            }
            case ShapeKind::Cluster: {
                const int blobs = rng.uniform_int(3, 7);
                const double spread = rng.uniform(4.0, 0.12 * minhw);
                const double cy = rng.uniform(spread + 2.0, H - 3.0 - spread);
                const double cx = rng.uniform(spread + 2.0, W - 3.0 - spread);
                for (int b = 0; b < blobs; ++b) {
                    const double r = rng.uniform(1.0, 2.2);
                    const double oy = rng.uniform(-spread, spread);
                    const double ox = rng.uniform(-spread, spread);
                    obj.blobs.push_back({cy + oy, cx + ox, r});
                }
                break;
            }
        }
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        colors.push_back(std::clamp(bg_mean + sign * spec.contrast, 0.02, 0.98));
        objects.push_back(std::move(obj));
    }

    double obj_tint[3];
    for (double& t : obj_tint) t = rng.uniform(-0.04, 0.04);

    Tensor image = Tensor::zeros({3, H, W});
    Tensor mask = Tensor::zeros({1, H, W});
    const size_t plane = static_cast<size_t>(H) * W;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const size_t i = static_cast<size_t>(y) * W + x;
            int hit = -1;
            for (size_t k = 0; k < objects.size(); ++k)
                if (objects[k].contains(y, x)) {
                    hit = static_cast<int>(k);
                    break;
                }
            if (hit >= 0) {
                mask.data()[i] = 1.0;
                const double lum = colors[static_cast<size_t>(hit)];
                for (int c = 0; c < 3; ++c)
                    image.data()[static_cast<size_t>(c) * plane + i] = std::clamp(lum + obj_tint[c], 0.0, 1.0);
            } else {
                for (int c = 0; c < 3; ++c)
                    image.data()[static_cast<size_t>(c) * plane + i] = std::clamp(bg[i] + tint[c], 0.0, 1.0);
            }
        }
    }
    return {std::move(image), std::move(mask), std::move(objects)};
}

inline std::pair<Tensor, Tensor> generate_scene(const SceneSpec& spec) {
    Scene s = generate_scene_detail(spec);
    return {std::move(s.image), std::move(s.mask)};
}

// ---------------------------------------------------------------------------
// dataset building and manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::string image_path;
    std::string mask_path;
    uint64_t seed = 0;
    std::string split; // "train" or "test"
};

struct Manifest {
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> split(const std::string& name) const {
        std::vector<ManifestEntry> out;
        for (const auto& e : entries)
            if (e.split == name) out.push_back(e);
        return out;
    }
};

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write manifest: " + path.string());
    os << "image_path,mask_path,seed,split\n";
    for (const auto& e : m.entries) os << e.image_path << "," << e.mask_path << "," << e.seed << "," << e.split << "\n";
    if (!os) throw IoError("write failure on manifest: " + path.string());
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open manifest: " + path.string());
    Manifest m;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line.rfind("image_path", 0) == 0) continue;
        ManifestEntry e;
        std::istringstream ss(line);
        std::string seed_str;
        if (!std::getline(ss, e.image_path, ',') || !std::getline(ss, e.mask_path, ',') ||
            !std::getline(ss, seed_str, ',') || !std::getline(ss, e.split))
            throw IoError("malformed manifest line: " + line);
        e.seed = std::stoull(seed_str);
        m.entries.push_back(std::move(e));
    }
    return m;
}

/// Generates a train/test dataset under `root` (images/, masks/, manifest.csv).
/// Scene seeds are the disjoint ranges [seed, seed+n_train) and
/// [seed+n_train, seed+n_train+n_test).
inline Manifest build_dataset(const SceneSpec& tmpl, int n_train, int n_test, uint64_t seed,
                              const std::filesystem::path& root) {
    if (n_train < 1 || n_test < 1) throw InvalidSpec("build_dataset requires n_train, n_test >= 1");
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "masks", ec);
    if (ec) throw IoError("cannot create dataset directories under " + root.string());

    Manifest m;
    const int total = n_train + n_test;
    m.entries.resize(static_cast<size_t>(total));
    auto entry_of = [&](int i) {
        const bool train = i < n_train;
        const int local = train ? i : i - n_train;
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%05d.png", train ? "train" : "test", local);
        ManifestEntry e;
        e.image_path = (root / "images" / name).string();
        e.mask_path = (root / "masks" / name).string();
        e.seed = seed + static_cast<uint64_t>(i);
        e.split = train ? "train" : "test";
        return e;
    };

    const int threads = std::min(worker_threads(), total);
    auto work = [&](int t) {
        for (int i = t; i < total; i += threads) {
            ManifestEntry e = entry_of(i);
            SceneSpec spec = tmpl;
            spec.seed = e.seed;
            auto [image, mask] = generate_scene(spec);
            save_image(e.image_path, image);
            save_mask(e.mask_path, mask);
            m.entries[static_cast<size_t>(i)] = std::move(e);
        }
    };
    if (threads <= 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
        for (auto& th : pool) th.join();
    }
    save_manifest(m, root / "manifest.csv");
    return m;
}

} // namespace orsiflow
