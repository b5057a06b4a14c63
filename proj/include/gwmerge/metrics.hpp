#pragma once

// Multi-label evaluation metrics (micro/macro F1, exact match, per-label
// accuracy), sample-size-weighted aggregation, and the paired t-test with a
// self-contained regularized incomplete beta for p-values.

#include <cmath>
#include <cstdint>
#include <vector>

#include "gwmerge/error.hpp"
#include "gwmerge/tensor_io.hpp"

namespace gwmerge {

struct ClassCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct TaskMetrics {
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    double exact_match = 0.0;
    double per_label_accuracy = 0.0;
    std::size_t n_samples = 0;
    std::size_t n_labels = 0;
    std::vector<ClassCounts> per_class;
    /// Classes whose F1 denominator was zero (no positives anywhere) and
    /// whose F1 was therefore defined as 0.
    std::size_t zero_denominator_classes = 0;
};

inline TaskMetrics task_metrics(const PredictionFile& pred) {
    pred.validate();
    TaskMetrics m;
    m.n_samples = pred.n_samples;
    m.n_labels = pred.n_labels;
    m.per_class.resize(pred.n_labels);

    std::size_t exact = 0;
    for (std::size_t i = 0; i < pred.n_samples; ++i) {
        bool all_equal = true;
        for (std::size_t c = 0; c < pred.n_labels; ++c) {
            const bool truth = pred.truth(i, c) != 0;
            const bool guess = pred.pred(i, c) != 0;
            all_equal = all_equal && truth == guess;
            auto& cc = m.per_class[c];
            if (truth && guess) ++cc.tp;
            else if (!truth && guess) ++cc.fp;
            else if (truth && !guess) ++cc.fn;
            else ++cc.tn;
        }
        if (all_equal) ++exact;
    }

    std::size_t tp_sum = 0, fp_sum = 0, fn_sum = 0;
    double macro_acc = 0.0, label_acc = 0.0;
    for (const auto& cc : m.per_class) {
        tp_sum += cc.tp;
        fp_sum += cc.fp;
        fn_sum += cc.fn;
        const std::size_t denom = 2 * cc.tp + cc.fp + cc.fn;
        if (denom == 0) {
            ++m.zero_denominator_classes; // F1 defined as 0 here
        } else {
            macro_acc += 2.0 * static_cast<double>(cc.tp) / static_cast<double>(denom);
        }
        label_acc += static_cast<double>(cc.tp + cc.tn) / static_cast<double>(pred.n_samples);
    }
    const std::size_t micro_denom = 2 * tp_sum + fp_sum + fn_sum;
    m.micro_f1 = micro_denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp_sum) / static_cast<double>(micro_denom);
    m.macro_f1 = macro_acc / static_cast<double>(pred.n_labels);
    m.exact_match = static_cast<double>(exact) / static_cast<double>(pred.n_samples);
    m.per_label_accuracy = label_acc / static_cast<double>(pred.n_labels);
    return m;
}

struct AggregateMetrics {
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    double exact_match = 0.0;
    double per_label_accuracy = 0.0;
    double total_weight = 0.0;
};

/// Weighted mean of each metric, weights = per-task test sizes.
inline AggregateMetrics weighted_mean(const std::vector<std::pair<TaskMetrics, double>>& per_task) {
    if (per_task.empty()) fail(ErrorKind::EmptyInput, "weighted_mean needs at least one task");
    AggregateMetrics agg;
    for (const auto& [metrics, weight] : per_task) {
        if (!(weight > 0.0)) fail(ErrorKind::NonPositiveWeight, "weights must be > 0");
        agg.micro_f1 += weight * metrics.micro_f1;
        agg.macro_f1 += weight * metrics.macro_f1;
        agg.exact_match += weight * metrics.exact_match;
        agg.per_label_accuracy += weight * metrics.per_label_accuracy;
        agg.total_weight += weight;
    }
    agg.micro_f1 /= agg.total_weight;
    agg.macro_f1 /= agg.total_weight;
    agg.exact_match /= agg.total_weight;
    agg.per_label_accuracy /= agg.total_weight;
    return agg;
}

// ---------------------------------------------------------------------------
// Paired t-test
// ---------------------------------------------------------------------------

namespace stats {

/// Regularized incomplete beta I_x(a, b) via the Lentz continued fraction.
inline double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;

    auto contfrac = [](double a_, double b_, double x_) {
        const double tiny = 1e-300;
        const int max_iter = 500;
        double c = 1.0;
        double d = 1.0 - (a_ + b_) * x_ / (a_ + 1.0);
        if (std::abs(d) < tiny) d = tiny;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= max_iter; ++m) {
            const double dm = static_cast<double>(m);
            double num = dm * (b_ - dm) * x_ / ((a_ + 2.0 * dm - 1.0) * (a_ + 2.0 * dm));
            d = 1.0 + num * d;
            if (std::abs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::abs(c) < tiny) c = tiny;
            d = 1.0 / d;
            h *= d * c;
            num = -(a_ + dm) * (a_ + b_ + dm) * x_ / ((a_ + 2.0 * dm) * (a_ + 2.0 * dm + 1.0));
            d = 1.0 + num * d;
            if (std::abs(d) < tiny) d = tiny;
            c = 1.0 + num / c;
            if (std::abs(c) < tiny) c = tiny;
            d = 1.0 / d;
            const double delta = d * c;
            h *= delta;
            if (std::abs(delta - 1.0) < 1e-15) break;
        }
        return h;
    };

    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    // The continued fraction converges fast for x below the distribution
    // bulk; otherwise evaluate the mirrored fraction through the symmetry
    // I_x(a,b) = 1 - I_{1-x}(b,a). The prefactor is the same for both.
    if (x < (a + 1.0) / (a + b + 2.0))
        return std::exp(log_front) * contfrac(a, b, x) / a;
    return 1.0 - std::exp(log_front) * contfrac(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of a Student-t statistic with df degrees of freedom:
/// P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
inline double student_t_two_sided_p(double t, int df) {
    const double nu = static_cast<double>(df);
    return incomplete_beta(nu / 2.0, 0.5, nu / (nu + t * t));
}

} // namespace stats

struct PairedTestResult {
    double t_statistic = 0.0;
    double p_value = 1.0;
    int df = 0;
    double mean_diff = 0.0;
    /// All differences equal: t is undefined. t_statistic is reported as 0
    /// and p_value as 1 (mean_diff == 0) or 0 (mean_diff != 0).
    bool zero_variance = false;
};

/// Paired t-test on differences after[i] - before[i], two-sided p-value.
inline PairedTestResult paired_t_test(const std::vector<double>& before,
                                      const std::vector<double>& after) {
    if (before.size() != after.size())
        fail(ErrorKind::LengthMismatch, "paired t-test needs equal-length vectors");
    const std::size_t n = before.size();
    if (n < 2) fail(ErrorKind::LengthMismatch, "paired t-test needs at least two pairs");

    std::vector<double> diff(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = after[i] - before[i];
        mean += diff[i];
    }
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : diff) ss += (d - mean) * (d - mean);
    const double var = ss / static_cast<double>(n - 1);

    PairedTestResult res;
    res.df = static_cast<int>(n) - 1;
    res.mean_diff = mean;
    if (var == 0.0) {
        res.zero_variance = true;
        res.t_statistic = 0.0;
        res.p_value = mean == 0.0 ? 1.0 : 0.0;
        return res;
    }
    const double se = std::sqrt(var / static_cast<double>(n));
    res.t_statistic = mean / se;
    res.p_value = stats::student_t_two_sided_p(res.t_statistic, res.df);
    return res;
}

} // namespace gwmerge
