#pragma once

// End-to-end orchestration: embeddings -> pairwise GW distances ->
// similarity -> merge plan -> merged bundle (-> optional evaluation), driven
// by one key/value config file. All randomness (row subsampling) derives
// from the single seed, so a rerun with the same config reproduces the plan
// and bundle payloads byte for byte.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gwmerge/error.hpp"
#include "gwmerge/gw.hpp"
#include "gwmerge/merger.hpp"
#include "gwmerge/metrics.hpp"
#include "gwmerge/planner.hpp"
#include "gwmerge/similarity.hpp"
#include "gwmerge/tensor_io.hpp"
#include "json.hpp"

namespace gwmerge {

struct TaskSpec {
    std::string id;
    std::filesystem::path embeddings;
    std::filesystem::path snapshot;
    std::filesystem::path predictions; // optional (empty = unset)
    std::filesystem::path fisher;      // optional, needed for Fisher merging
};

struct PipelineConfig {
    std::vector<TaskSpec> tasks; // task index i+1 = tasks[i]
    std::filesystem::path base_snapshot;
    GwConfig gw;
    bool normalize_distances = false;
    std::size_t subsample_cap = 2000;
    int target_clusters = 1;
    double plan_lambda = 0.0;
    bool lambda_counts_singletons = false;
    std::string plan_method = "greedy";
    MergeMethod merge_method = MergeMethod::Average;
    double ties_density = 0.2;
    double lambda_scale = 1.0;
    std::vector<std::string> head_prefixes = {"classifier.", "head."};
    std::uint64_t seed = 0;
    std::filesystem::path output_dir = "out";

    /// Structural checks; with `check_paths` also requires every referenced
    /// input file to exist.
    void validate(bool check_paths = true) const {
        if (tasks.empty()) fail(ErrorKind::ConfigError, "config declares no tasks");
        for (std::size_t i = 0; i < tasks.size(); ++i) {
            for (std::size_t j = i + 1; j < tasks.size(); ++j)
                if (tasks[i].id == tasks[j].id)
                    fail(ErrorKind::ConfigError, "duplicate task id '" + tasks[i].id + "'");
            if (tasks[i].embeddings.empty())
                fail(ErrorKind::ConfigError, "task '" + tasks[i].id + "' has no embeddings path");
            if (tasks[i].snapshot.empty())
                fail(ErrorKind::ConfigError, "task '" + tasks[i].id + "' has no snapshot path");
        }
        if (target_clusters < 1 || target_clusters > static_cast<int>(tasks.size()))
            fail(ErrorKind::TargetOutOfRange, "target_clusters must lie in [1, T]");
        if (plan_method != "greedy" && plan_method != "exact")
            fail(ErrorKind::ConfigError, "plan_method must be 'greedy' or 'exact'");
        gw.validate();
        if (subsample_cap < 1) fail(ErrorKind::ConfigError, "subsample must be >= 1");
        if ((merge_method == MergeMethod::TaskArithmetic || merge_method == MergeMethod::Ties) &&
            base_snapshot.empty())
            fail(ErrorKind::ConfigError,
                 std::string(to_string(merge_method)) + " merging requires base_snapshot");
        if (merge_method == MergeMethod::Fisher)
            for (const auto& t : tasks)
                if (t.fisher.empty())
                    fail(ErrorKind::ConfigError,
                         "fisher merging requires a fisher path for task '" + t.id + "'");
        if (check_paths) {
            auto must_exist = [](const std::filesystem::path& p, const std::string& what) {
                if (!std::filesystem::exists(p))
                    fail(ErrorKind::ConfigError, what + " does not exist: " + p.string());
            };
            for (const auto& t : tasks) {
                must_exist(t.embeddings, "embeddings for task '" + t.id + "'");
                must_exist(t.snapshot, "snapshot for task '" + t.id + "'");
                if (!t.predictions.empty())
                    must_exist(t.predictions, "predictions for task '" + t.id + "'");
                if (!t.fisher.empty()) must_exist(t.fisher, "fisher for task '" + t.id + "'");
            }
            if (!base_snapshot.empty()) must_exist(base_snapshot, "base snapshot");
        }
    }
};

// ---------------------------------------------------------------------------
// Config file parsing (key = value lines, [task.<id>] sections, # comments)
// ---------------------------------------------------------------------------

namespace detail {

[[noreturn]] inline void config_fail(std::size_t line, const std::string& message) {
    fail(ErrorKind::ConfigError, "line " + std::to_string(line) + ": " + message);
}

inline std::string unquote(std::string_view v, std::size_t line) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return std::string(v.substr(1, v.size() - 2));
    if (!v.empty() && (v.front() == '"' || v.back() == '"'))
        config_fail(line, "unterminated string value");
    return std::string(v);
}

inline bool parse_bool_value(std::string_view v, const std::string& key, std::size_t line) {
    if (v == "true") return true;
    if (v == "false") return false;
    config_fail(line, "key '" + key + "' expects true or false");
}

inline double parse_number_value(std::string_view v, const std::string& key, std::size_t line) {
    double out;
    if (!try_parse_double(v, out)) config_fail(line, "key '" + key + "' expects a number");
    return out;
}

inline std::vector<std::string> split_csv_list(const std::string& v) {
    std::vector<std::string> out;
    for (auto piece : split(v, ','))
        if (auto t = trim(piece); !t.empty()) out.emplace_back(t);
    return out;
}

} // namespace detail

/// Parses config text. Relative paths are resolved against `base_dir`.
inline PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
    PipelineConfig cfg;
    std::map<std::string, std::size_t> task_index; // id -> tasks[] position

    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };

    std::string section; // "" = top level, otherwise task id
    auto lines = detail::split(text, '\n');
    for (std::size_t li = 0; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        std::string_view line = lines[li];
        if (auto hash = line.find('#'); hash != std::string_view::npos) {
            // comments start a '#' that is not inside a quoted value
            bool in_string = false;
            for (std::size_t k = 0; k < line.size(); ++k) {
                if (line[k] == '"') in_string = !in_string;
                if (line[k] == '#' && !in_string) {
                    line = line.substr(0, k);
                    break;
                }
            }
        }
        line = detail::trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') detail::config_fail(line_no, "unterminated section header");
            auto name = detail::trim(line.substr(1, line.size() - 2));
            if (name.substr(0, 5) != "task.")
                detail::config_fail(line_no, "unknown section '" + std::string(name) + "'");
            auto id = std::string(detail::trim(name.substr(5)));
            if (id.empty()) detail::config_fail(line_no, "task section needs an id");
            if (task_index.count(id)) detail::config_fail(line_no, "duplicate task section '" + id + "'");
            task_index[id] = cfg.tasks.size();
            cfg.tasks.push_back(TaskSpec{id, {}, {}, {}, {}});
            section = id;
            continue;
        }

        auto eq = line.find('=');
        if (eq == std::string_view::npos) detail::config_fail(line_no, "expected 'key = value'");
        const std::string key{detail::trim(line.substr(0, eq))};
        const std::string_view raw = detail::trim(line.substr(eq + 1));
        if (key.empty()) detail::config_fail(line_no, "empty key");
        if (raw.empty()) detail::config_fail(line_no, "key '" + key + "' has no value");

        if (!section.empty()) {
            TaskSpec& task = cfg.tasks[task_index[section]];
            const std::string value = detail::unquote(raw, line_no);
            if (key == "embeddings") task.embeddings = resolve(value);
            else if (key == "snapshot") task.snapshot = resolve(value);
            else if (key == "predictions") task.predictions = resolve(value);
            else if (key == "fisher") task.fisher = resolve(value);
            else detail::config_fail(line_no, "unknown task key '" + key + "'");
            continue;
        }

        if (key == "seed") {
            std::uint64_t v;
            if (!detail::try_parse_u64(raw, v)) detail::config_fail(line_no, "seed expects an integer");
            cfg.seed = v;
        } else if (key == "output_dir") {
            cfg.output_dir = resolve(detail::unquote(raw, line_no));
        } else if (key == "base_snapshot") {
            cfg.base_snapshot = resolve(detail::unquote(raw, line_no));
        } else if (key == "epsilon") {
            const double v = detail::parse_number_value(raw, key, line_no);
            if (v < 0.0) detail::config_fail(line_no, "epsilon must be >= 0 (0 = auto)");
            cfg.gw.epsilon = v == 0.0 ? std::nullopt : std::optional<double>(v);
        } else if (key == "epsilon_scale") {
            cfg.gw.epsilon_scale = detail::parse_number_value(raw, key, line_no);
        } else if (key == "gw_p") {
            cfg.gw.p = detail::parse_number_value(raw, key, line_no);
        } else if (key == "max_outer_iter") {
            cfg.gw.max_outer_iter = static_cast<int>(detail::parse_number_value(raw, key, line_no));
        } else if (key == "max_sinkhorn_iter") {
            cfg.gw.max_sinkhorn_iter = static_cast<int>(detail::parse_number_value(raw, key, line_no));
        } else if (key == "outer_tol") {
            cfg.gw.outer_tol = detail::parse_number_value(raw, key, line_no);
        } else if (key == "sinkhorn_tol") {
            cfg.gw.sinkhorn_tol = detail::parse_number_value(raw, key, line_no);
        } else if (key == "anneal") {
            cfg.gw.anneal = detail::parse_bool_value(raw, key, line_no);
        } else if (key == "subsample") {
            cfg.subsample_cap = static_cast<std::size_t>(detail::parse_number_value(raw, key, line_no));
        } else if (key == "normalize_distances") {
            cfg.normalize_distances = detail::parse_bool_value(raw, key, line_no);
        } else if (key == "target_clusters") {
            cfg.target_clusters = static_cast<int>(detail::parse_number_value(raw, key, line_no));
        } else if (key == "lambda") {
            cfg.plan_lambda = detail::parse_number_value(raw, key, line_no);
        } else if (key == "lambda_counts_singletons") {
            cfg.lambda_counts_singletons = detail::parse_bool_value(raw, key, line_no);
        } else if (key == "plan_method") {
            cfg.plan_method = detail::unquote(raw, line_no);
        } else if (key == "merge_method") {
            const std::string name = detail::unquote(raw, line_no);
            auto m = parse_merge_method(name);
            if (!m) detail::config_fail(line_no, "unknown merge_method '" + name + "'");
            cfg.merge_method = *m;
        } else if (key == "ties_density") {
            cfg.ties_density = detail::parse_number_value(raw, key, line_no);
        } else if (key == "lambda_scale") {
            cfg.lambda_scale = detail::parse_number_value(raw, key, line_no);
        } else if (key == "head_prefixes") {
            cfg.head_prefixes = detail::split_csv_list(detail::unquote(raw, line_no));
        } else {
            detail::config_fail(line_no, "unknown key '" + key + "'");
        }
    }
    return cfg;
}

inline PipelineConfig load_config(const std::filesystem::path& path) {
    return parse_config(detail::read_file_text(path), path.parent_path());
}

/// Parses and validates; the run entry point.
inline PipelineConfig validate_config(const std::filesystem::path& path, bool check_paths = true) {
    PipelineConfig cfg = load_config(path);
    cfg.validate(check_paths);
    return cfg;
}

/// Template written by the `init` subcommand.
inline std::string default_config_text() {
    return R"(# gwmerge pipeline configuration

seed = 42
output_dir = "out"

# --- GW solver ---
epsilon = 0            # explicit entropic regularization; 0 = auto
epsilon_scale = 0.05   # auto epsilon = scale * mean pairwise distance
gw_p = 2
max_outer_iter = 200
max_sinkhorn_iter = 1000
outer_tol = 1e-06
sinkhorn_tol = 1e-07
subsample = 2000
normalize_distances = false

# --- planner ---
target_clusters = 1
lambda = 0
plan_method = "greedy"           # greedy | exact
lambda_counts_singletons = false

# --- merger ---
merge_method = "average"         # average | fisher | task_arithmetic | ties
ties_density = 0.2
lambda_scale = 1
# base_snapshot = "base.gwm"     # required for task_arithmetic and ties
head_prefixes = "classifier.,head."

[task.1]
embeddings = "embeddings/task1.gwe"
snapshot = "models/task1.gwm"
# predictions = "predictions/task1.csv"
# fisher = "fisher/task1.gwm"
)";
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct PipelineReport {
    nlohmann::json json;
    bool ok = false;
    std::string failed_stage;
};

namespace detail {

class StageTimer {
public:
    explicit StageTimer(nlohmann::json& stages, std::string name)
        : stages_(stages), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        stages_.push_back(
            {{"name", name_},
             {"ms", std::chrono::duration<double, std::milli>(elapsed).count()}});
    }

private:
    nlohmann::json& stages_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

inline FisherDiagonal read_fisher(const std::filesystem::path& path,
                                  const SnapshotReadOptions& opts) {
    ModelSnapshot snap = read_snapshot(path, opts);
    FisherDiagonal fisher;
    for (auto& t : snap.tensors)
        if (t.role == TensorRole::Backbone) fisher.weights.push_back(std::move(t));
    fisher.validate();
    return fisher;
}

} // namespace detail

/// Runs all stages, writing distances.csv, similarity.csv, plan.json, the
/// bundle directory and report.json into cfg.output_dir. A stage failure
/// still writes the report (with a FAILED marker) before the error is
/// rethrown with the stage name attached.
inline PipelineReport run_pipeline(const PipelineConfig& cfg) {
    cfg.validate(true);
    std::filesystem::create_directories(cfg.output_dir);

    PipelineReport report;
    report.json["seed"] = cfg.seed;
    report.json["stages"] = nlohmann::json::array();
    report.json["status"] = "ok";
    SnapshotReadOptions snap_opts{cfg.head_prefixes};

    std::vector<std::string> ids;
    for (const auto& t : cfg.tasks) ids.push_back(t.id);

    std::string stage = "load";
    try {
        // load: embeddings -> (subsampled) metric spaces
        std::vector<MetricSpace> spaces;
        {
            detail::StageTimer timer(report.json["stages"], stage);
            for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
                EmbeddingMatrix emb = read_embeddings(cfg.tasks[i].embeddings);
                emb = subsample_rows(emb, cfg.subsample_cap, detail::splitmix64(cfg.seed + i + 1));
                spaces.push_back(build_metric_space(emb, cfg.normalize_distances));
            }
        }

        // gw: pairwise distance matrix
        stage = "gw";
        PairwiseGwResult pairwise;
        {
            detail::StageTimer timer(report.json["stages"], stage);
            pairwise = pairwise_gw(spaces, cfg.gw);
            write_matrix_csv(pairwise.distances, ids, cfg.output_dir / "distances.csv");
            nlohmann::json pairs = nlohmann::json::array();
            for (const auto& p : pairwise.solves)
                pairs.push_back({{"i", p.i},
                                 {"j", p.j},
                                 {"distance", p.distance},
                                 {"converged", p.converged},
                                 {"iterations", p.iterations}});
            report.json["gw"] = {{"pairs", pairs}, {"all_converged", pairwise.all_converged}};
        }

        // similarity: rescale distances
        stage = "similarity";
        SimilarityMatrix sim;
        {
            detail::StageTimer timer(report.json["stages"], stage);
            sim = to_similarity(pairwise.distances);
            write_matrix_csv(sim.scores, ids, cfg.output_dir / "similarity.csv");
            report.json["similarity"] = {{"d_min", sim.d_min},
                                         {"d_max", sim.d_max},
                                         {"degenerate_range", sim.degenerate_range}};
        }

        // plan
        stage = "plan";
        MergePlan plan;
        {
            detail::StageTimer timer(report.json["stages"], stage);
            PlannerOptions popts{cfg.lambda_counts_singletons};
            plan = cfg.plan_method == "exact"
                       ? plan_exact(sim, cfg.target_clusters, cfg.plan_lambda, popts)
                       : plan_greedy(sim, cfg.target_clusters, cfg.plan_lambda, popts);
            write_plan(plan, cfg.output_dir / "plan.json");
            report.json["plan"] = {{"clusters", plan.clusters},
                                   {"target_clusters", plan.target_clusters},
                                   {"loss", plan.loss},
                                   {"method", to_string(plan.provenance)}};
        }

        // merge
        stage = "merge";
        {
            detail::StageTimer timer(report.json["stages"], stage);
            std::vector<ModelSnapshot> snapshots;
            for (const auto& t : cfg.tasks) snapshots.push_back(read_snapshot(t.snapshot, snap_opts));
            std::vector<const ModelSnapshot*> snapshot_ptrs;
            for (const auto& s : snapshots) snapshot_ptrs.push_back(&s);

            std::optional<ModelSnapshot> base;
            if (!cfg.base_snapshot.empty()) base = read_snapshot(cfg.base_snapshot, snap_opts);

            MergeParams params;
            params.ties_density = cfg.ties_density;
            params.lambda_scale = cfg.lambda_scale;
            if (cfg.merge_method == MergeMethod::Fisher)
                for (std::size_t i = 0; i < cfg.tasks.size(); ++i)
                    params.fishers[static_cast<int>(i) + 1] =
                        detail::read_fisher(cfg.tasks[i].fisher, snap_opts);

            MergedBundle bundle = assemble_bundle(plan, snapshot_ptrs,
                                                  base ? &*base : nullptr, cfg.merge_method, params);
            write_bundle(bundle, cfg.output_dir / "bundle");

            std::size_t before = 0;
            for (const auto* s : snapshot_ptrs) before += payload_bytes(detail::backbone_of(*s));
            std::size_t after = 0;
            for (const auto& cb : bundle.backbones) after += payload_bytes(cb.tensors);
            report.json["merge"] = {{"method", to_string(bundle.method)},
                                    {"backbone_bytes_before", before},
                                    {"backbone_bytes_after", after},
                                    {"storage_reduction_ratio", storage_reduction_ratio(bundle, snapshot_ptrs)},
                                    {"fisher_fallback_positions", bundle.fisher_fallback_positions}};
        }

        // eval: only when every task carries predictions
        bool have_predictions = true;
        for (const auto& t : cfg.tasks) have_predictions = have_predictions && !t.predictions.empty();
        if (have_predictions) {
            stage = "eval";
            detail::StageTimer timer(report.json["stages"], stage);
            nlohmann::json tasks = nlohmann::json::array();
            std::vector<std::pair<TaskMetrics, double>> weighted;
            for (const auto& t : cfg.tasks) {
                TaskMetrics m = task_metrics(read_predictions(t.predictions, t.id));
                weighted.push_back({m, static_cast<double>(m.n_samples)});
                tasks.push_back({{"task_id", t.id},
                                 {"n_samples", m.n_samples},
                                 {"n_labels", m.n_labels},
                                 {"micro_f1", m.micro_f1},
                                 {"macro_f1", m.macro_f1},
                                 {"exact_match", m.exact_match},
                                 {"per_label_accuracy", m.per_label_accuracy}});
            }
            AggregateMetrics agg = weighted_mean(weighted);
            report.json["eval"] = {{"tasks", tasks},
                                   {"weighted_mean",
                                    {{"micro_f1", agg.micro_f1},
                                     {"macro_f1", agg.macro_f1},
                                     {"exact_match", agg.exact_match},
                                     {"per_label_accuracy", agg.per_label_accuracy}}}};
        }
    } catch (const Error& e) {
        report.json["status"] = "FAILED";
        report.json["failed_stage"] = stage;
        report.json["error"] = e.what();
        report.failed_stage = stage;
        detail::write_file_text(cfg.output_dir / "report.json", report.json.dump(2) + "\n");
        throw Error(e.kind(), "[stage " + stage + "] " + e.what());
    }

    report.ok = true;
    detail::write_file_text(cfg.output_dir / "report.json", report.json.dump(2) + "\n");
    return report;
}

} // namespace gwmerge
