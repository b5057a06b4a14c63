#include <catch_amalgamated.hpp>

#include <algorithm>

#include "gwmerge/metrics.hpp"
#include "gwmerge/detail/numeric.hpp"
#include "oracles.hpp"

using namespace gwmerge;

namespace {

PredictionFile make_pred(const std::vector<std::vector<int>>& truth,
                         const std::vector<std::vector<int>>& pred) {
    PredictionFile p;
    p.task_id = "t";
    p.n_samples = truth.size();
    p.n_labels = truth[0].size();
    for (const auto& row : truth)
        for (int v : row) p.y_true.push_back(static_cast<std::uint8_t>(v));
    for (const auto& row : pred)
        for (int v : row) p.y_pred.push_back(static_cast<std::uint8_t>(v));
    return p;
}

std::vector<std::vector<int>> random_labels(gwmerge::detail::Rng& rng, std::size_t n,
                                            std::size_t c) {
    std::vector<std::vector<int>> rows(n, std::vector<int>(c));
    for (auto& row : rows)
        for (int& v : row) v = static_cast<int>(rng.below(2));
    return rows;
}

} // namespace

TEST_CASE("task_metrics: perfect prediction scores 1 everywhere") {
    gwmerge::detail::Rng rng(1);
    auto truth = random_labels(rng, 12, 4);
    TaskMetrics m = task_metrics(make_pred(truth, truth));
    REQUIRE(m.micro_f1 == 1.0);
    REQUIRE(m.macro_f1 == 1.0);
    REQUIRE(m.exact_match == 1.0);
    REQUIRE(m.per_label_accuracy == 1.0);
}

TEST_CASE("task_metrics: documented two-sample fixture") {
    TaskMetrics m = task_metrics(make_pred({{1, 0}, {0, 1}}, {{1, 1}, {0, 1}}));
    REQUIRE(m.micro_f1 == Catch::Approx(0.8).margin(1e-12));
    REQUIRE(m.macro_f1 == Catch::Approx(5.0 / 6.0).margin(1e-12));
    REQUIRE(m.exact_match == Catch::Approx(0.5).margin(1e-12));
    REQUIRE(m.per_label_accuracy == Catch::Approx(0.75).margin(1e-12));

    auto ref = oracle::metrics_reference({{1, 0}, {0, 1}}, {{1, 1}, {0, 1}});
    REQUIRE(m.micro_f1 == Catch::Approx(ref.micro_f1).margin(1e-12));
    REQUIRE(m.macro_f1 == Catch::Approx(ref.macro_f1).margin(1e-12));
}

TEST_CASE("task_metrics: all-zero truth and prediction") {
    TaskMetrics m = task_metrics(make_pred({{0, 0}, {0, 0}}, {{0, 0}, {0, 0}}));
    REQUIRE(m.micro_f1 == 0.0); // zero-denominator rule
    REQUIRE(m.per_label_accuracy == 1.0);
    REQUIRE(m.exact_match == 1.0);
    REQUIRE(m.zero_denominator_classes == 2);
}

TEST_CASE("task_metrics: agrees with the brute-force oracle on random instances") {
    gwmerge::detail::Rng rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng.below(20), c = 1 + rng.below(10);
        auto truth = random_labels(rng, n, c);
        auto pred = random_labels(rng, n, c);
        TaskMetrics m = task_metrics(make_pred(truth, pred));
        auto ref = oracle::metrics_reference(truth, pred);
        REQUIRE(m.micro_f1 == Catch::Approx(ref.micro_f1).margin(1e-12));
        REQUIRE(m.macro_f1 == Catch::Approx(ref.macro_f1).margin(1e-12));
        REQUIRE(m.exact_match == Catch::Approx(ref.exact_match).margin(1e-12));
        REQUIRE(m.per_label_accuracy == Catch::Approx(ref.per_label_accuracy).margin(1e-12));
    }
}

TEST_CASE("task_metrics: micro F1 invariant to label column permutation") {
    gwmerge::detail::Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(12), c = 2 + rng.below(6);
        auto truth = random_labels(rng, n, c);
        auto pred = random_labels(rng, n, c);
        TaskMetrics base = task_metrics(make_pred(truth, pred));

        std::vector<std::size_t> perm(c);
        for (std::size_t k = 0; k < c; ++k) perm[k] = k;
        for (std::size_t k = c; k > 1; --k) std::swap(perm[k - 1], perm[rng.below(k)]);
        auto permute = [&](const std::vector<std::vector<int>>& rows) {
            std::vector<std::vector<int>> out(rows.size(), std::vector<int>(c));
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (std::size_t k = 0; k < c; ++k) out[i][perm[k]] = rows[i][k];
            return out;
        };
        TaskMetrics shuffled = task_metrics(make_pred(permute(truth), permute(pred)));
        REQUIRE(shuffled.micro_f1 == Catch::Approx(base.micro_f1).margin(1e-12));
        REQUIRE(shuffled.macro_f1 == Catch::Approx(base.macro_f1).margin(1e-12));
        REQUIRE(shuffled.exact_match == Catch::Approx(base.exact_match).margin(1e-12));
    }
}

TEST_CASE("task_metrics: exact match never exceeds per-label accuracy; row order irrelevant") {
    gwmerge::detail::Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(15), c = 1 + rng.below(8);
        auto truth = random_labels(rng, n, c);
        auto pred = random_labels(rng, n, c);
        TaskMetrics m = task_metrics(make_pred(truth, pred));
        REQUIRE(m.exact_match <= m.per_label_accuracy + 1e-15);

        // reverse the sample order
        auto rt = truth, rp = pred;
        std::reverse(rt.begin(), rt.end());
        std::reverse(rp.begin(), rp.end());
        TaskMetrics r = task_metrics(make_pred(rt, rp));
        REQUIRE(r.micro_f1 == m.micro_f1);
        REQUIRE(r.exact_match == m.exact_match);
    }
}

TEST_CASE("weighted_mean: equal sizes reduce to the plain mean") {
    TaskMetrics a, b;
    a.micro_f1 = 0.4;
    b.micro_f1 = 0.8;
    auto agg = weighted_mean({{a, 100.0}, {b, 100.0}});
    REQUIRE(agg.micro_f1 == Catch::Approx(0.6).margin(1e-12));
}

TEST_CASE("weighted_mean: documented 300/100 example") {
    TaskMetrics a, b;
    a.micro_f1 = a.macro_f1 = a.exact_match = a.per_label_accuracy = 0.8;
    b.micro_f1 = b.macro_f1 = b.exact_match = b.per_label_accuracy = 0.6;
    auto agg = weighted_mean({{a, 300.0}, {b, 100.0}});
    REQUIRE(agg.micro_f1 == Catch::Approx(0.75).margin(1e-12));
    REQUIRE(agg.per_label_accuracy == Catch::Approx(0.75).margin(1e-12));
}

TEST_CASE("weighted_mean: single task passes through; errors on bad input") {
    TaskMetrics a;
    a.macro_f1 = 0.37;
    auto agg = weighted_mean({{a, 55.0}});
    REQUIRE(agg.macro_f1 == Catch::Approx(0.37).margin(1e-15));

    REQUIRE_THROWS_MATCHES(weighted_mean({}), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                               return e.kind() == ErrorKind::EmptyInput;
                           }));
    REQUIRE_THROWS_MATCHES(weighted_mean({{a, 0.0}}), Error,
                           Catch::Matchers::Predicate<Error>([](const Error& e) {
                               return e.kind() == ErrorKind::NonPositiveWeight;
                           }));
}

TEST_CASE("paired_t_test: identical vectors give the zero-variance degenerate result") {
    std::vector<double> v = {0.5, 0.7, 0.9};
    auto res = paired_t_test(v, v);
    REQUIRE(res.zero_variance);
    REQUIRE(res.mean_diff == 0.0);
    REQUIRE(res.p_value == 1.0);
    REQUIRE(res.df == 2);
}

TEST_CASE("paired_t_test: documented diff fixtures") {
    // diffs [1,1,1,1,-1]: mean 0.6, sd sqrt(0.8), t = 1.5
    std::vector<double> before(5, 0.0), after = {1.0, 1.0, 1.0, 1.0, -1.0};
    auto res = paired_t_test(before, after);
    REQUIRE(res.t_statistic == Catch::Approx(1.5).margin(1e-12));
    REQUIRE(res.df == 4);
    REQUIRE(res.p_value == Catch::Approx(oracle::t_two_sided_p(1.5, 4)).margin(1e-6));

    // diffs [0, 2]: mean 1, sd sqrt(2), se 1, t = 1, df = 1, p = 0.5
    auto res2 = paired_t_test({0.0, 0.0}, {0.0, 2.0});
    REQUIRE(res2.t_statistic == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(res2.df == 1);
    REQUIRE(res2.p_value == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("paired_t_test: antisymmetric in its arguments") {
    gwmerge::detail::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 2 + rng.below(10);
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = rng.unit();
            b[i] = rng.unit();
        }
        auto ab = paired_t_test(a, b);
        auto ba = paired_t_test(b, a);
        if (ab.zero_variance) continue;
        REQUIRE(ab.t_statistic == Catch::Approx(-ba.t_statistic).margin(1e-12));
        REQUIRE(ab.p_value == Catch::Approx(ba.p_value).margin(1e-12));
    }
}

TEST_CASE("paired_t_test: matches the quadrature oracle on random vectors") {
    gwmerge::detail::Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.below(29); // n in [2, 30]
        std::vector<double> before(n), after(n);
        for (std::size_t i = 0; i < n; ++i) {
            before[i] = rng.uniform(0.0, 1.0);
            after[i] = before[i] + rng.uniform(-0.2, 0.3);
        }
        auto res = paired_t_test(before, after);
        if (res.zero_variance) continue;
        const double t_ref = oracle::t_statistic(before, after);
        REQUIRE(res.t_statistic == Catch::Approx(t_ref).margin(1e-9));
        REQUIRE(res.p_value == Catch::Approx(oracle::t_two_sided_p(t_ref, static_cast<int>(n) - 1))
                                   .margin(1e-6));
    }
}

TEST_CASE("paired_t_test: length and size errors") {
    REQUIRE_THROWS_MATCHES(paired_t_test({1.0, 2.0}, {1.0}), Error,
                           Catch::Matchers::Predicate<Error>([](const Error& e) {
                               return e.kind() == ErrorKind::LengthMismatch;
                           }));
    REQUIRE_THROWS_AS(paired_t_test({1.0}, {2.0}), Error);
}

TEST_CASE("incomplete beta: spot values against the quadrature oracle") {
    // p-values across a grid of t and df exercise I_x(a, 1/2) broadly
    for (int df : {1, 2, 4, 9, 29}) {
        for (double t : {0.1, 0.5, 1.0, 1.5, 2.69, 5.0}) {
            const double mine = stats::student_t_two_sided_p(t, df);
            const double ref = oracle::t_two_sided_p(t, df);
            REQUIRE(mine == Catch::Approx(ref).margin(1e-8));
        }
    }
    REQUIRE(stats::incomplete_beta(1.0, 1.0, 0.25) == Catch::Approx(0.25).margin(1e-12));
    REQUIRE(stats::incomplete_beta(2.0, 2.0, 0.5) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("prediction file validation flows through task_metrics") {
    PredictionFile bad;
    bad.task_id = "x";
    bad.n_samples = 2;
    bad.n_labels = 1;
    bad.y_true = {0, 1};
    bad.y_pred = {1}; // wrong size
    REQUIRE_THROWS_MATCHES(task_metrics(bad), Error, Catch::Matchers::Predicate<Error>([](const Error& e) {
                               return e.kind() == ErrorKind::DimensionMismatch;
                           }));
}
