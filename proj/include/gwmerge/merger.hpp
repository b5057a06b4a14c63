#pragma once

// Parameter-space merging: averaging, Fisher-weighted averaging, task
// arithmetic and TIES (trim / elect sign / disjoint merge), plus bundle
// assembly — one shared backbone per cluster, per-task heads kept verbatim.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gwmerge/error.hpp"
#include "gwmerge/tensor_io.hpp"
#include "json.hpp"

namespace gwmerge {

enum class MergeMethod { Average, Fisher, TaskArithmetic, Ties };

inline const char* to_string(MergeMethod m) {
    switch (m) {
        case MergeMethod::Average: return "average";
        case MergeMethod::Fisher: return "fisher";
        case MergeMethod::TaskArithmetic: return "task_arithmetic";
        case MergeMethod::Ties: return "ties";
    }
    return "average";
}

inline std::optional<MergeMethod> parse_merge_method(const std::string& name) {
    if (name == "average") return MergeMethod::Average;
    if (name == "fisher") return MergeMethod::Fisher;
    if (name == "task_arithmetic") return MergeMethod::TaskArithmetic;
    if (name == "ties") return MergeMethod::Ties;
    return std::nullopt;
}

/// Per-tensor deltas theta_t - theta_0 over backbone tensors only.
struct TaskVector {
    std::vector<NamedTensor> deltas;
};

/// Per-tensor nonnegative importance weights, shaped like the backbone.
struct FisherDiagonal {
    std::vector<NamedTensor> weights;

    void validate() const {
        for (const auto& t : weights)
            for (double v : t.data) {
                if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "Fisher weights must be finite");
                if (v < 0.0) fail(ErrorKind::NegativeFisher, "Fisher weights must be >= 0");
            }
    }
};

namespace detail {

/// Order-canonical reduction: summing in sorted order makes the result
/// independent of the order the contributions arrived in.
inline double canonical_sum(std::vector<double>& values) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += v;
    return s;
}

inline std::vector<NamedTensor> backbone_of(const ModelSnapshot& snap) {
    std::vector<NamedTensor> out;
    for (const auto& t : snap.tensors)
        if (t.role == TensorRole::Backbone) out.push_back(t);
    return out;
}

inline std::vector<NamedTensor> heads_of(const ModelSnapshot& snap) {
    std::vector<NamedTensor> out;
    for (const auto& t : snap.tensors)
        if (t.role == TensorRole::Head) out.push_back(t);
    return out;
}

/// Tensors aligned by name against a reference layout; shapes must agree.
inline std::vector<const NamedTensor*> align_by_name(const std::vector<NamedTensor>& reference,
                                                     const std::vector<NamedTensor>& candidates,
                                                     const char* what) {
    std::vector<const NamedTensor*> out;
    for (const auto& ref : reference) {
        const NamedTensor* found = nullptr;
        for (const auto& c : candidates)
            if (c.name == ref.name) { found = &c; break; }
        if (!found)
            fail(ErrorKind::ShapeMismatch, std::string(what) + ": missing tensor '" + ref.name + "'");
        if (found->shape != ref.shape)
            fail(ErrorKind::ShapeMismatch, std::string(what) + ": shape differs for tensor '" + ref.name + "'");
        out.push_back(found);
    }
    if (candidates.size() != reference.size())
        fail(ErrorKind::ShapeMismatch, std::string(what) + ": tensor sets differ");
    return out;
}

} // namespace detail

/// Elementwise arithmetic mean of the snapshots' backbone tensors. The
/// per-position reduction is order-canonical, so the result is bit-identical
/// under any reordering of the snapshots.
inline std::vector<NamedTensor> merge_average(const std::vector<const ModelSnapshot*>& snapshots) {
    if (snapshots.empty()) fail(ErrorKind::EmptyInput, "merge_average needs at least one snapshot");
    std::vector<NamedTensor> layout = detail::backbone_of(*snapshots.front());
    if (layout.empty()) fail(ErrorKind::EmptyInput, "snapshots have no backbone tensors");

    std::vector<std::vector<NamedTensor>> owned;
    for (const auto* snap : snapshots) owned.push_back(detail::backbone_of(*snap));
    std::vector<std::vector<const NamedTensor*>> aligned;
    for (const auto& backbone : owned)
        aligned.push_back(detail::align_by_name(layout, backbone, "merge_average"));

    std::vector<NamedTensor> out = layout;
    std::vector<double> buf(snapshots.size());
    for (std::size_t t = 0; t < out.size(); ++t)
        for (std::size_t i = 0; i < out[t].data.size(); ++i) {
            for (std::size_t s = 0; s < snapshots.size(); ++s) buf[s] = aligned[s][t]->data[i];
            out[t].data[i] = detail::canonical_sum(buf) / static_cast<double>(snapshots.size());
        }
    return out;
}

struct FisherMergeResult {
    std::vector<NamedTensor> tensors;
    /// Positions where sum F_t was zero and the plain average was used.
    std::size_t fallback_positions = 0;
};

/// Fisher-weighted mean: (sum F_t . theta_t) / (sum F_t), elementwise.
inline FisherMergeResult merge_fisher(const std::vector<const ModelSnapshot*>& snapshots,
                                      const std::vector<const FisherDiagonal*>& fishers) {
    if (snapshots.empty()) fail(ErrorKind::EmptyInput, "merge_fisher needs at least one snapshot");
    if (fishers.size() != snapshots.size())
        fail(ErrorKind::ShapeMismatch, "merge_fisher needs exactly one Fisher diagonal per snapshot");

    std::vector<NamedTensor> layout = detail::backbone_of(*snapshots.front());
    if (layout.empty()) fail(ErrorKind::EmptyInput, "snapshots have no backbone tensors");

    std::vector<std::vector<NamedTensor>> owned;
    for (const auto* snap : snapshots) owned.push_back(detail::backbone_of(*snap));
    std::vector<std::vector<const NamedTensor*>> thetas, weights;
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        fishers[s]->validate();
        thetas.push_back(detail::align_by_name(layout, owned[s], "merge_fisher"));
        weights.push_back(detail::align_by_name(layout, fishers[s]->weights, "merge_fisher fisher"));
    }

    FisherMergeResult res;
    res.tensors = layout;
    std::vector<double> nums(snapshots.size()), dens(snapshots.size());
    for (std::size_t t = 0; t < layout.size(); ++t)
        for (std::size_t i = 0; i < layout[t].data.size(); ++i) {
            for (std::size_t s = 0; s < snapshots.size(); ++s) {
                nums[s] = weights[s][t]->data[i] * thetas[s][t]->data[i];
                dens[s] = weights[s][t]->data[i];
            }
            std::vector<double> num_buf = nums, den_buf = dens;
            const double den = detail::canonical_sum(den_buf);
            if (den > 0.0) {
                res.tensors[t].data[i] = detail::canonical_sum(num_buf) / den;
            } else {
                for (std::size_t s = 0; s < snapshots.size(); ++s) num_buf[s] = thetas[s][t]->data[i];
                res.tensors[t].data[i] =
                    detail::canonical_sum(num_buf) / static_cast<double>(snapshots.size());
                ++res.fallback_positions;
            }
        }
    return res;
}

/// Backbone delta of a fine-tuned snapshot against the base checkpoint.
inline TaskVector make_task_vector(const ModelSnapshot& snapshot, const ModelSnapshot& base) {
    std::vector<NamedTensor> layout = detail::backbone_of(base);
    if (layout.empty()) fail(ErrorKind::EmptyInput, "base snapshot has no backbone tensors");
    const std::vector<NamedTensor> snap_backbone = detail::backbone_of(snapshot);
    auto aligned = detail::align_by_name(layout, snap_backbone, "make_task_vector");
    TaskVector tv;
    tv.deltas = layout;
    for (std::size_t t = 0; t < layout.size(); ++t)
        for (std::size_t i = 0; i < layout[t].data.size(); ++i)
            tv.deltas[t].data[i] = aligned[t]->data[i] - layout[t].data[i];
    return tv;
}

/// theta_0 + sum_t lambda_t tau_t over backbone tensors.
inline std::vector<NamedTensor> merge_task_arithmetic(const ModelSnapshot& base,
                                                      const std::vector<TaskVector>& task_vectors,
                                                      const std::vector<double>& lambdas) {
    if (task_vectors.size() != lambdas.size())
        fail(ErrorKind::LambdaCountMismatch, "need exactly one lambda per task vector");
    std::vector<NamedTensor> out = detail::backbone_of(base);
    if (out.empty()) fail(ErrorKind::EmptyInput, "base snapshot has no backbone tensors");
    for (std::size_t s = 0; s < task_vectors.size(); ++s) {
        auto aligned = detail::align_by_name(out, task_vectors[s].deltas, "merge_task_arithmetic");
        for (std::size_t t = 0; t < out.size(); ++t)
            for (std::size_t i = 0; i < out[t].data.size(); ++i)
                out[t].data[i] += lambdas[s] * aligned[t]->data[i];
    }
    return out;
}

/// TIES: per task vector keep the top ceil(density*N) entries by magnitude
/// over the concatenated backbone (threshold ties broken toward the lower
/// flat index), elect a per-position sign from the sum of kept values (zero
/// sums elect +), then average the kept values agreeing with the elected
/// sign. Result is theta_0 + lambda_scale * merged delta.
inline std::vector<NamedTensor> merge_ties(const ModelSnapshot& base,
                                           const std::vector<TaskVector>& task_vectors,
                                           double density, double lambda_scale) {
    if (!(density > 0.0) || density > 1.0)
        fail(ErrorKind::InvalidDensity, "density must lie in (0, 1]");
    if (task_vectors.empty()) fail(ErrorKind::EmptyInput, "merge_ties needs at least one task vector");

    std::vector<NamedTensor> layout = detail::backbone_of(base);
    if (layout.empty()) fail(ErrorKind::EmptyInput, "base snapshot has no backbone tensors");
    std::size_t total = 0;
    for (const auto& t : layout) total += t.data.size();
    const std::size_t keep =
        std::min(total, static_cast<std::size_t>(std::ceil(density * static_cast<double>(total))));

    // Flatten every task vector in the base layout order.
    std::vector<std::vector<double>> flat;
    for (const auto& tv : task_vectors) {
        auto aligned = detail::align_by_name(layout, tv.deltas, "merge_ties");
        std::vector<double> row;
        row.reserve(total);
        for (const auto* t : aligned) row.insert(row.end(), t->data.begin(), t->data.end());
        flat.push_back(std::move(row));
    }

    // TRIM: zero everything below the per-task magnitude threshold.
    std::vector<std::size_t> order(total);
    for (auto& row : flat) {
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            const double fa = std::abs(row[a]), fb = std::abs(row[b]);
            if (fa != fb) return fa > fb;
            return a < b;
        });
        std::vector<double> trimmed(total, 0.0);
        for (std::size_t k = 0; k < keep; ++k) trimmed[order[k]] = row[order[k]];
        row = std::move(trimmed);
    }

    // ELECT + MERGE (order-canonical sums keep the result independent of
    // the task-vector ordering).
    std::vector<double> delta(total, 0.0);
    std::vector<double> buf;
    for (std::size_t i = 0; i < total; ++i) {
        buf.clear();
        for (const auto& row : flat) buf.push_back(row[i]);
        const double elected = detail::canonical_sum(buf) >= 0.0 ? 1.0 : -1.0;
        buf.clear();
        for (const auto& row : flat)
            if (row[i] * elected > 0.0) buf.push_back(row[i]);
        if (!buf.empty()) delta[i] = detail::canonical_sum(buf) / static_cast<double>(buf.size());
    }

    std::vector<NamedTensor> out = layout;
    std::size_t cursor = 0;
    for (auto& t : out)
        for (double& v : t.data) v += lambda_scale * delta[cursor++];
    return out;
}

struct MergeParams {
    double ties_density = 0.2;
    double lambda_scale = 1.0;
    /// Fisher diagonals by task index (1-based), required for Fisher merging.
    std::map<int, FisherDiagonal> fishers;
};

struct ClusterBackbone {
    std::vector<int> tasks;
    std::vector<NamedTensor> tensors;
};

/// One merged backbone per cluster plus every task's original head.
struct MergedBundle {
    std::vector<ClusterBackbone> backbones; // plan cluster order
    std::map<int, std::vector<NamedTensor>> heads;
    MergePlan plan;
    MergeMethod method = MergeMethod::Average;
    double ties_density = 0.2;
    double lambda_scale = 1.0;
    std::size_t fisher_fallback_positions = 0;

    void validate() const {
        plan.validate();
        if (backbones.size() != plan.clusters.size())
            fail(ErrorKind::InvariantViolation, "bundle must hold one backbone per cluster");
        for (const auto& c : plan.clusters)
            for (int task : c)
                if (!heads.count(task))
                    fail(ErrorKind::InvariantViolation,
                         "bundle is missing the head for task " + std::to_string(task));
        for (std::size_t k = 1; k < backbones.size(); ++k) {
            if (backbones[k].tensors.size() != backbones[0].tensors.size())
                fail(ErrorKind::InvariantViolation, "bundle backbones must share tensor layout");
            for (std::size_t t = 0; t < backbones[k].tensors.size(); ++t)
                if (backbones[k].tensors[t].name != backbones[0].tensors[t].name ||
                    backbones[k].tensors[t].shape != backbones[0].tensors[t].shape)
                    fail(ErrorKind::InvariantViolation, "bundle backbones must share tensor layout");
        }
    }
};

/// Executes the plan: merges each cluster's backbones with the chosen method
/// (singleton clusters are copied verbatim) and carries every head through
/// untouched. `snapshots[i]` is task i+1; `base` is required for
/// task arithmetic and TIES.
inline MergedBundle assemble_bundle(const MergePlan& plan,
                                    const std::vector<const ModelSnapshot*>& snapshots,
                                    const ModelSnapshot* base, MergeMethod method,
                                    const MergeParams& params = {}) {
    plan.validate();
    if (static_cast<int>(snapshots.size()) != plan.n_tasks())
        fail(ErrorKind::MissingSnapshot, "need exactly one snapshot per task in the plan");
    for (std::size_t i = 0; i < snapshots.size(); ++i)
        if (!snapshots[i])
            fail(ErrorKind::MissingSnapshot, "snapshot for task " + std::to_string(i + 1) + " is missing");
    if ((method == MergeMethod::TaskArithmetic || method == MergeMethod::Ties) && !base)
        fail(ErrorKind::MethodRequiresBase,
             std::string(to_string(method)) + " merging requires the base snapshot");

    MergedBundle bundle;
    bundle.plan = plan;
    bundle.method = method;
    bundle.ties_density = params.ties_density;
    bundle.lambda_scale = params.lambda_scale;

    for (const auto& cluster : plan.clusters) {
        ClusterBackbone cb;
        cb.tasks = cluster;
        if (cluster.size() == 1) {
            cb.tensors = detail::backbone_of(*snapshots[static_cast<std::size_t>(cluster[0]) - 1]);
        } else {
            std::vector<const ModelSnapshot*> members;
            for (int task : cluster) members.push_back(snapshots[static_cast<std::size_t>(task) - 1]);
            switch (method) {
                case MergeMethod::Average:
                    cb.tensors = merge_average(members);
                    break;
                case MergeMethod::Fisher: {
                    std::vector<const FisherDiagonal*> fishers;
                    for (int task : cluster) {
                        auto it = params.fishers.find(task);
                        if (it == params.fishers.end())
                            fail(ErrorKind::MissingSnapshot,
                                 "Fisher diagonal for task " + std::to_string(task) + " is missing");
                        fishers.push_back(&it->second);
                    }
                    auto res = merge_fisher(members, fishers);
                    cb.tensors = std::move(res.tensors);
                    bundle.fisher_fallback_positions += res.fallback_positions;
                    break;
                }
                case MergeMethod::TaskArithmetic: {
                    std::vector<TaskVector> tvs;
                    for (const auto* snap : members) tvs.push_back(make_task_vector(*snap, *base));
                    std::vector<double> lambdas(members.size(), 1.0 / static_cast<double>(members.size()));
                    cb.tensors = merge_task_arithmetic(*base, tvs, lambdas);
                    break;
                }
                case MergeMethod::Ties: {
                    std::vector<TaskVector> tvs;
                    for (const auto* snap : members) tvs.push_back(make_task_vector(*snap, *base));
                    cb.tensors = merge_ties(*base, tvs, params.ties_density, params.lambda_scale);
                    break;
                }
            }
        }
        bundle.backbones.push_back(std::move(cb));
    }

    for (int task = 1; task <= plan.n_tasks(); ++task)
        bundle.heads[task] = detail::heads_of(*snapshots[static_cast<std::size_t>(task) - 1]);

    bundle.validate();
    return bundle;
}

// ---------------------------------------------------------------------------
// Storage accounting and on-disk bundle layout
// ---------------------------------------------------------------------------

/// On-disk payload bytes (f32) of a tensor list.
inline std::size_t payload_bytes(const std::vector<NamedTensor>& tensors) {
    std::size_t bytes = 0;
    for (const auto& t : tensors) bytes += 4 * t.numel();
    return bytes;
}

/// Pre-merge backbone bytes over all snapshots divided by the bundle's
/// backbone bytes.
inline double storage_reduction_ratio(const MergedBundle& bundle,
                                      const std::vector<const ModelSnapshot*>& snapshots) {
    std::size_t before = 0;
    for (const auto* snap : snapshots) before += payload_bytes(detail::backbone_of(*snap));
    std::size_t after = 0;
    for (const auto& cb : bundle.backbones) after += payload_bytes(cb.tensors);
    if (after == 0) fail(ErrorKind::EmptyInput, "bundle has no backbone payload");
    return static_cast<double>(before) / static_cast<double>(after);
}

/// Writes one GWM1 file per cluster backbone, one per task head, and a JSON
/// manifest tying them to the plan.
inline void write_bundle(const MergedBundle& bundle, const std::filesystem::path& dir) {
    bundle.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["method"] = to_string(bundle.method);
    manifest["method_params"] = {{"ties_density", bundle.ties_density},
                                 {"lambda_scale", bundle.lambda_scale}};
    manifest["plan"] = {{"target_clusters", bundle.plan.target_clusters},
                        {"clusters", bundle.plan.clusters}};
    nlohmann::json backbone_files = nlohmann::json::object();
    for (std::size_t k = 0; k < bundle.backbones.size(); ++k) {
        const std::string file = "backbone_c" + std::to_string(k + 1) + ".gwm";
        ModelSnapshot snap;
        snap.tensors = bundle.backbones[k].tensors;
        for (auto& t : snap.tensors) t.role = TensorRole::Backbone;
        write_snapshot(snap, dir / file);
        backbone_files[std::to_string(k + 1)] = file;
    }
    manifest["backbones"] = backbone_files;
    nlohmann::json head_files = nlohmann::json::object();
    for (const auto& [task, tensors] : bundle.heads) {
        const std::string file = "head_t" + std::to_string(task) + ".gwm";
        ModelSnapshot snap;
        snap.tensors = tensors;
        for (auto& t : snap.tensors) t.role = TensorRole::Head;
        write_snapshot(snap, dir / file);
        head_files[std::to_string(task)] = file;
    }
    manifest["heads"] = head_files;
    detail::write_file_text(dir / "bundle.json", manifest.dump(2) + "\n");
}

/// Reads a bundle directory written by write_bundle.
inline MergedBundle read_bundle(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(detail::read_file_text(dir / "bundle.json"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::MalformedManifest, std::string("bundle manifest is not valid JSON: ") + e.what());
    }
    MergedBundle bundle;
    auto method = parse_merge_method(manifest.at("method").get<std::string>());
    if (!method) fail(ErrorKind::MalformedManifest, "unknown merge method in bundle manifest");
    bundle.method = *method;
    bundle.ties_density = manifest.at("method_params").at("ties_density").get<double>();
    bundle.lambda_scale = manifest.at("method_params").at("lambda_scale").get<double>();
    bundle.plan.target_clusters = manifest.at("plan").at("target_clusters").get<int>();
    bundle.plan.clusters = manifest.at("plan").at("clusters").get<std::vector<std::vector<int>>>();
    bundle.plan.canonicalize();
    for (std::size_t k = 0; k < bundle.plan.clusters.size(); ++k) {
        const std::string file =
            manifest.at("backbones").at(std::to_string(k + 1)).get<std::string>();
        ClusterBackbone cb;
        cb.tasks = bundle.plan.clusters[k];
        cb.tensors = read_snapshot(dir / file).tensors;
        bundle.backbones.push_back(std::move(cb));
    }
    for (const auto& cluster : bundle.plan.clusters)
        for (int task : cluster) {
            const std::string file = manifest.at("heads").at(std::to_string(task)).get<std::string>();
            bundle.heads[task] = read_snapshot(dir / file).tensors;
        }
    bundle.validate();
    return bundle;
}

} // namespace gwmerge
