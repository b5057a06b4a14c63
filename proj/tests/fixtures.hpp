#pragma once

// Synthetic 9-task fixture: embeddings drawn from three latent geometry
// families (well separated in scale and shape), equal-size snapshots, and
// random prediction files. Everything is generated deterministically from a
// seed, so pipeline runs over the fixture are reproducible.

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "gwmerge/detail/numeric.hpp"
#include "gwmerge/tensor_io.hpp"

namespace fixtures {

namespace fs = std::filesystem;

inline double gaussian(gwmerge::detail::Rng& rng) {
    const double u1 = 1.0 - rng.unit();
    const double u2 = rng.unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Family 0: tight blob. Family 1: mid-scale ring. Family 2: two distant
/// lumps. All in 4 dimensions, n points each.
inline gwmerge::EmbeddingMatrix family_embeddings(int family, std::uint64_t seed, std::size_t n) {
    gwmerge::detail::Rng rng(seed);
    const double jitter = 0.9 + 0.2 * rng.unit(); // per-task scale wobble
    gwmerge::EmbeddingMatrix emb;
    emb.rows = n;
    emb.cols = 4;
    emb.data.reserve(n * 4);
    for (std::size_t i = 0; i < n; ++i) {
        double x[4] = {0, 0, 0, 0};
        switch (family) {
            case 0:
                for (double& v : x) v = 0.5 * jitter * gaussian(rng);
                break;
            case 1: {
                const double angle = 2.0 * M_PI * rng.unit();
                x[0] = 2.5 * jitter * std::cos(angle) + 0.1 * gaussian(rng);
                x[1] = 2.5 * jitter * std::sin(angle) + 0.1 * gaussian(rng);
                x[2] = 0.1 * gaussian(rng);
                x[3] = 0.1 * gaussian(rng);
                break;
            }
            default: {
                const double side = rng.below(2) ? 6.0 : -6.0;
                for (double& v : x) v = 0.4 * jitter * gaussian(rng);
                x[0] += side * jitter;
                break;
            }
        }
        for (double v : x) emb.data.push_back(v);
    }
    return emb;
}

/// Equal-size snapshot: two backbone tensors and one head, filled with
/// f32-representable values derived from the seed.
inline gwmerge::ModelSnapshot make_snapshot(std::uint64_t seed) {
    gwmerge::detail::Rng rng(seed);
    auto f32 = [&](double lo, double hi) {
        return static_cast<double>(static_cast<float>(rng.uniform(lo, hi)));
    };
    gwmerge::ModelSnapshot snap;
    gwmerge::NamedTensor w{"encoder.w", {8, 4}, {}, gwmerge::TensorRole::Backbone};
    for (int i = 0; i < 32; ++i) w.data.push_back(f32(-1.0, 1.0));
    gwmerge::NamedTensor b{"encoder.b", {8}, {}, gwmerge::TensorRole::Backbone};
    for (int i = 0; i < 8; ++i) b.data.push_back(f32(-0.5, 0.5));
    gwmerge::NamedTensor head{"classifier.w", {3, 8}, {}, gwmerge::TensorRole::Head};
    for (int i = 0; i < 24; ++i) head.data.push_back(f32(-1.0, 1.0));
    snap.tensors = {std::move(w), std::move(b), std::move(head)};
    return snap;
}

inline gwmerge::PredictionFile make_predictions(const std::string& task_id, std::uint64_t seed,
                                                std::size_t n, std::size_t labels) {
    gwmerge::detail::Rng rng(seed);
    gwmerge::PredictionFile p;
    p.task_id = task_id;
    p.n_samples = n;
    p.n_labels = labels;
    for (std::size_t i = 0; i < n * labels; ++i) {
        const std::uint8_t truth = static_cast<std::uint8_t>(rng.below(2));
        p.y_true.push_back(truth);
        // ~80% agreement
        p.y_pred.push_back(rng.unit() < 0.8 ? truth : static_cast<std::uint8_t>(1 - truth));
    }
    return p;
}

struct FixtureLayout {
    fs::path root;
    fs::path config;
    std::vector<int> family_of_task; // task index 1..9 -> family 0..2
};

/// Writes the full 9-task fixture tree plus a pipeline config. Tasks 1-3 are
/// family 0, tasks 4-6 family 1, tasks 7-9 family 2.
inline FixtureLayout write_fixture(const fs::path& root, std::uint64_t seed,
                                   const std::string& extra_config_lines = "",
                                   std::size_t points_per_task = 40) {
    fs::create_directories(root / "embeddings");
    fs::create_directories(root / "models");
    fs::create_directories(root / "predictions");

    FixtureLayout layout;
    layout.root = root;
    layout.config = root / "pipeline.toml";

    std::string cfg;
    cfg += "seed = " + std::to_string(seed) + "\n";
    cfg += "output_dir = \"out\"\n";
    cfg += "target_clusters = 3\n";
    cfg += "plan_method = \"exact\"\n";
    cfg += "merge_method = \"average\"\n";
    cfg += extra_config_lines;

    gwmerge::ModelSnapshot base = make_snapshot(gwmerge::detail::splitmix64(seed));
    gwmerge::write_snapshot(base, root / "models" / "base.gwm");
    cfg += "base_snapshot = \"models/base.gwm\"\n";

    for (int task = 1; task <= 9; ++task) {
        const int family = (task - 1) / 3;
        layout.family_of_task.push_back(family);
        const std::string id = std::to_string(task);
        const std::uint64_t task_seed =
            gwmerge::detail::splitmix64(seed ^ (0x1000 + static_cast<std::uint64_t>(task)));

        gwmerge::write_embeddings(family_embeddings(family, task_seed, points_per_task),
                                  root / "embeddings" / ("task" + id + ".gwe"));
        gwmerge::write_snapshot(make_snapshot(task_seed + 1),
                                root / "models" / ("task" + id + ".gwm"));
        gwmerge::write_predictions(make_predictions(id, task_seed + 2, 50, 3),
                                   root / "predictions" / ("task" + id + ".csv"));

        cfg += "\n[task." + id + "]\n";
        cfg += "embeddings = \"embeddings/task" + id + ".gwe\"\n";
        cfg += "snapshot = \"models/task" + id + ".gwm\"\n";
        cfg += "predictions = \"predictions/task" + id + ".csv\"\n";
    }
    gwmerge::detail::write_file_text(layout.config, cfg);
    return layout;
}

} // namespace fixtures
