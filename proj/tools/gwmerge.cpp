// gwmerge command line: GW-distance based merge planning and execution for
// collections of fine-tuned task models, plus the evaluation harness.

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gwmerge/gwmerge.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GwOverrides {
    std::optional<double> epsilon;
    std::optional<double> p;
    std::optional<int> max_iter;
    std::optional<std::size_t> subsample;
    std::optional<std::uint64_t> seed;
    std::optional<bool> normalize;

    void add_flags(CLI::App* cmd) {
        cmd->add_option("--epsilon", epsilon, "entropic regularization (0 = auto)");
        cmd->add_option("--gw-p", p, "loss exponent p >= 1");
        cmd->add_option("--max-iter", max_iter, "max outer GW iterations");
        cmd->add_option("--subsample", subsample, "row cap before distance construction");
        cmd->add_option("--seed", seed, "seed for subsampling");
        cmd->add_flag("--normalize-distances,!--no-normalize-distances", normalize,
                      "divide each distance matrix by its max entry");
    }

    void apply(gwmerge::PipelineConfig& cfg) const {
        if (epsilon) cfg.gw.epsilon = *epsilon == 0.0 ? std::nullopt : std::optional<double>(*epsilon);
        if (p) cfg.gw.p = *p;
        if (max_iter) cfg.gw.max_outer_iter = *max_iter;
        if (subsample) cfg.subsample_cap = *subsample;
        if (seed) cfg.seed = *seed;
        if (normalize) cfg.normalize_distances = *normalize;
    }
};

json eval_report_json(const std::vector<gwmerge::PredictionFile>& preds) {
    json tasks = json::array();
    std::vector<std::pair<gwmerge::TaskMetrics, double>> weighted;
    for (const auto& p : preds) {
        gwmerge::TaskMetrics m = gwmerge::task_metrics(p);
        weighted.push_back({m, static_cast<double>(m.n_samples)});
        tasks.push_back({{"task_id", p.task_id},
                         {"n_samples", m.n_samples},
                         {"n_labels", m.n_labels},
                         {"micro_f1", m.micro_f1},
                         {"macro_f1", m.macro_f1},
                         {"exact_match", m.exact_match},
                         {"per_label_accuracy", m.per_label_accuracy}});
    }
    gwmerge::AggregateMetrics agg = gwmerge::weighted_mean(weighted);
    return {{"tasks", tasks},
            {"weighted_mean",
             {{"micro_f1", agg.micro_f1},
              {"macro_f1", agg.macro_f1},
              {"exact_match", agg.exact_match},
              {"per_label_accuracy", agg.per_label_accuracy}}}};
}

// task_id -> metric -> value, from an eval report
std::map<std::string, std::map<std::string, double>> per_task_metrics(const json& report) {
    std::map<std::string, std::map<std::string, double>> out;
    const json& tasks = report.contains("eval") ? report["eval"]["tasks"] : report.at("tasks");
    for (const auto& t : tasks) {
        auto& slot = out[t.at("task_id").get<std::string>()];
        for (const char* key : {"micro_f1", "macro_f1", "exact_match", "per_label_accuracy"})
            slot[key] = t.at(key).get<double>();
    }
    return out;
}

int run_compare(const fs::path& before_path, const fs::path& after_path, const std::string& out) {
    auto before = per_task_metrics(json::parse(gwmerge::detail::read_file_text(before_path)));
    auto after = per_task_metrics(json::parse(gwmerge::detail::read_file_text(after_path)));

    std::vector<std::string> shared;
    for (const auto& [id, _] : before)
        if (after.count(id)) shared.push_back(id);
    if (shared.size() < 2)
        gwmerge::fail(gwmerge::ErrorKind::LengthMismatch,
                      "compare needs at least two tasks common to both reports");

    json result;
    result["n_pairs"] = shared.size();
    result["metrics"] = json::object();
    for (const char* key : {"micro_f1", "macro_f1", "exact_match", "per_label_accuracy"}) {
        std::vector<double> a, b;
        for (const auto& id : shared) {
            a.push_back(before[id][key]);
            b.push_back(after[id][key]);
        }
        gwmerge::PairedTestResult t = gwmerge::paired_t_test(a, b);
        result["metrics"][key] = {{"t_statistic", t.t_statistic},
                                  {"p_value", t.p_value},
                                  {"df", t.df},
                                  {"mean_diff", t.mean_diff},
                                  {"zero_variance", t.zero_variance}};
    }
    std::cout << result.dump(2) << "\n";
    if (!out.empty()) gwmerge::detail::write_file_text(out, result.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"GW-distance based merge planning and execution for task models"};
    app.require_subcommand(1);

    // init
    auto* init = app.add_subcommand("init", "write a template pipeline config");
    std::string init_out = "gwmerge.toml";
    init->add_option("--out", init_out, "config path to write");

    // gw-dist
    auto* gwdist = app.add_subcommand("gw-dist", "pairwise GW distance matrix from the config's embeddings");
    std::string gwdist_config;
    std::string gwdist_out;
    gwdist->add_option("--config", gwdist_config, "pipeline config")->required();
    gwdist->add_option("--out", gwdist_out, "distance CSV path (default: <output_dir>/distances.csv)");
    GwOverrides gwdist_over;
    gwdist_over.add_flags(gwdist);

    // similarity
    auto* simcmd = app.add_subcommand("similarity", "rescale a distance CSV into similarity scores");
    std::string sim_in, sim_out;
    simcmd->add_option("--distances", sim_in, "distance CSV")->required();
    simcmd->add_option("--out", sim_out, "similarity CSV path")->required();

    // plan
    auto* plancmd = app.add_subcommand("plan", "search for a merge plan on a similarity CSV");
    std::string plan_sim, plan_out, plan_method = "greedy";
    int plan_target = 0;
    double plan_lambda = 0.0;
    bool plan_lambda_singletons = false;
    plancmd->add_option("--similarity", plan_sim, "similarity CSV")->required();
    plancmd->add_option("--target", plan_target, "target cluster count T'")->required();
    plancmd->add_option("--lambda", plan_lambda, "cluster size penalty");
    plancmd->add_option("--method", plan_method, "greedy | exact");
    plancmd->add_flag("--lambda-counts-singletons", plan_lambda_singletons,
                      "count singleton clusters in the size penalty");
    plancmd->add_option("--out", plan_out, "plan JSON path")->required();

    // merge
    auto* mergecmd = app.add_subcommand("merge", "execute a merge plan over snapshot files");
    std::string merge_plan, merge_snapshots, merge_base, merge_fishers, merge_out;
    std::string merge_method = "average", merge_head_prefixes = "classifier.,head.";
    double merge_density = 0.2, merge_lambda = 1.0;
    mergecmd->add_option("--plan", merge_plan, "plan JSON")->required();
    mergecmd->add_option("--snapshots", merge_snapshots, "directory with task<i>.gwm files")->required();
    mergecmd->add_option("--base", merge_base, "base snapshot (task_arithmetic / ties)");
    mergecmd->add_option("--fishers", merge_fishers, "directory with task<i>.gwm Fisher diagonals");
    mergecmd->add_option("--method", merge_method, "average | fisher | task_arithmetic | ties");
    mergecmd->add_option("--density", merge_density, "TIES trim density in (0,1]");
    mergecmd->add_option("--lambda", merge_lambda, "TIES scaling of the merged delta");
    mergecmd->add_option("--head-prefixes", merge_head_prefixes,
                         "comma list of head tensor name prefixes");
    mergecmd->add_option("--out", merge_out, "bundle output directory")->required();

    // eval
    auto* evalcmd = app.add_subcommand("eval", "evaluate prediction CSVs");
    std::string eval_pred, eval_report;
    evalcmd->add_option("--pred", eval_pred, "directory of prediction CSVs")->required();
    evalcmd->add_option("--report", eval_report, "report JSON path")->required();

    // compare
    auto* comparecmd = app.add_subcommand("compare", "paired t-tests between two eval reports");
    std::string cmp_before, cmp_after, cmp_out;
    comparecmd->add_option("--before", cmp_before, "eval report JSON")->required();
    comparecmd->add_option("--after", cmp_after, "eval report JSON")->required();
    comparecmd->add_option("--out", cmp_out, "also write the result JSON here");

    // run
    auto* runcmd = app.add_subcommand("run", "full pipeline from a config file");
    std::string run_config, run_out_dir, run_plan_method, run_merge_method;
    std::optional<int> run_target;
    std::optional<double> run_lambda, run_density, run_lambda_scale;
    runcmd->add_option("--config", run_config, "pipeline config")->required();
    runcmd->add_option("--out-dir", run_out_dir, "override output_dir");
    runcmd->add_option("--target", run_target, "override target_clusters");
    runcmd->add_option("--lambda", run_lambda, "override plan lambda");
    runcmd->add_option("--plan-method", run_plan_method, "override plan method");
    runcmd->add_option("--merge-method", run_merge_method, "override merge method");
    runcmd->add_option("--density", run_density, "override TIES density");
    runcmd->add_option("--lambda-scale", run_lambda_scale, "override TIES lambda scale");
    GwOverrides run_over;
    run_over.add_flags(runcmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*init) {
            gwmerge::detail::write_file_text(init_out, gwmerge::default_config_text());
            std::cout << "wrote " << init_out << "\n";
            return 0;
        }

        if (*gwdist) {
            gwmerge::PipelineConfig cfg = gwmerge::load_config(gwdist_config);
            gwdist_over.apply(cfg);
            cfg.validate(true);
            std::vector<gwmerge::MetricSpace> spaces;
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < cfg.tasks.size(); ++i) {
                gwmerge::EmbeddingMatrix emb = gwmerge::read_embeddings(cfg.tasks[i].embeddings);
                emb = gwmerge::subsample_rows(emb, cfg.subsample_cap,
                                              gwmerge::detail::splitmix64(cfg.seed + i + 1));
                spaces.push_back(gwmerge::build_metric_space(emb, cfg.normalize_distances));
                ids.push_back(cfg.tasks[i].id);
            }
            auto pairwise = gwmerge::pairwise_gw(spaces, cfg.gw);
            fs::path out = gwdist_out.empty() ? cfg.output_dir / "distances.csv" : fs::path(gwdist_out);
            fs::create_directories(out.parent_path().empty() ? "." : out.parent_path());
            gwmerge::write_matrix_csv(pairwise.distances, ids, out);
            std::cout << "wrote " << out.string()
                      << (pairwise.all_converged ? "" : " (warning: some pairs did not converge)") << "\n";
            return 0;
        }

        if (*simcmd) {
            gwmerge::LabeledMatrix lm = gwmerge::read_matrix_csv(sim_in);
            gwmerge::SimilarityMatrix sim = gwmerge::to_similarity(lm.matrix);
            gwmerge::write_matrix_csv(sim.scores, lm.ids, sim_out);
            if (sim.degenerate_range)
                std::cerr << "warning: all pairwise distances equal; scores pinned to 1\n";
            std::cout << "wrote " << sim_out << "\n";
            return 0;
        }

        if (*plancmd) {
            gwmerge::LabeledMatrix lm = gwmerge::read_matrix_csv(plan_sim);
            gwmerge::SimilarityMatrix sim = gwmerge::similarity_from_scores(lm.matrix);
            gwmerge::PlannerOptions opts{plan_lambda_singletons};
            gwmerge::MergePlan plan;
            if (plan_method == "greedy") plan = gwmerge::plan_greedy(sim, plan_target, plan_lambda, opts);
            else if (plan_method == "exact") plan = gwmerge::plan_exact(sim, plan_target, plan_lambda, opts);
            else gwmerge::fail(gwmerge::ErrorKind::ConfigError, "method must be greedy or exact");
            gwmerge::write_plan(plan, plan_out);
            std::cout << "wrote " << plan_out << " (loss " << gwmerge::detail::format_double(plan.loss)
                      << ")\n";
            return 0;
        }

        if (*mergecmd) {
            auto method = gwmerge::parse_merge_method(merge_method);
            if (!method) gwmerge::fail(gwmerge::ErrorKind::ConfigError,
                                       "unknown merge method '" + merge_method + "'");
            gwmerge::MergePlan plan = gwmerge::read_plan(merge_plan);
            gwmerge::SnapshotReadOptions snap_opts{
                gwmerge::detail::split_csv_list(merge_head_prefixes)};

            std::vector<gwmerge::ModelSnapshot> snapshots;
            for (int i = 1; i <= plan.n_tasks(); ++i) {
                fs::path p = fs::path(merge_snapshots) / ("task" + std::to_string(i) + ".gwm");
                if (!fs::exists(p))
                    gwmerge::fail(gwmerge::ErrorKind::MissingSnapshot,
                                  "snapshot not found: " + p.string());
                snapshots.push_back(gwmerge::read_snapshot(p, snap_opts));
            }
            std::vector<const gwmerge::ModelSnapshot*> ptrs;
            for (const auto& s : snapshots) ptrs.push_back(&s);

            std::optional<gwmerge::ModelSnapshot> base;
            if (!merge_base.empty()) base = gwmerge::read_snapshot(merge_base, snap_opts);

            gwmerge::MergeParams params;
            params.ties_density = merge_density;
            params.lambda_scale = merge_lambda;
            if (*method == gwmerge::MergeMethod::Fisher) {
                if (merge_fishers.empty())
                    gwmerge::fail(gwmerge::ErrorKind::ConfigError,
                                  "fisher merging requires --fishers");
                for (int i = 1; i <= plan.n_tasks(); ++i)
                    params.fishers[i] = gwmerge::detail::read_fisher(
                        fs::path(merge_fishers) / ("task" + std::to_string(i) + ".gwm"), snap_opts);
            }

            gwmerge::MergedBundle bundle =
                gwmerge::assemble_bundle(plan, ptrs, base ? &*base : nullptr, *method, params);
            gwmerge::write_bundle(bundle, merge_out);
            std::cout << "wrote bundle to " << merge_out << " (storage ratio "
                      << gwmerge::detail::format_double(gwmerge::storage_reduction_ratio(bundle, ptrs))
                      << ")\n";
            return 0;
        }

        if (*evalcmd) {
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(eval_pred))
                if (entry.is_regular_file() && entry.path().extension() == ".csv")
                    files.push_back(entry.path());
            std::sort(files.begin(), files.end());
            if (files.empty())
                gwmerge::fail(gwmerge::ErrorKind::EmptyInput, "no .csv files in " + eval_pred);
            std::vector<gwmerge::PredictionFile> preds;
            for (const auto& f : files) preds.push_back(gwmerge::read_predictions(f));
            gwmerge::detail::write_file_text(eval_report, eval_report_json(preds).dump(2) + "\n");
            std::cout << "wrote " << eval_report << "\n";
            return 0;
        }

        if (*comparecmd) return run_compare(cmp_before, cmp_after, cmp_out);

        if (*runcmd) {
            gwmerge::PipelineConfig cfg = gwmerge::load_config(run_config);
            run_over.apply(cfg);
            if (!run_out_dir.empty()) cfg.output_dir = run_out_dir;
            if (run_target) cfg.target_clusters = *run_target;
            if (run_lambda) cfg.plan_lambda = *run_lambda;
            if (!run_plan_method.empty()) cfg.plan_method = run_plan_method;
            if (!run_merge_method.empty()) {
                auto m = gwmerge::parse_merge_method(run_merge_method);
                if (!m) gwmerge::fail(gwmerge::ErrorKind::ConfigError,
                                      "unknown merge method '" + run_merge_method + "'");
                cfg.merge_method = *m;
            }
            if (run_density) cfg.ties_density = *run_density;
            if (run_lambda_scale) cfg.lambda_scale = *run_lambda_scale;
            gwmerge::PipelineReport report = gwmerge::run_pipeline(cfg);
            std::cout << "pipeline ok; report at " << (cfg.output_dir / "report.json").string() << "\n";
            return report.ok ? 0 : 1;
        }
    } catch (const gwmerge::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
