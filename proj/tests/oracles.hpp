#pragma once

// Test-only reference implementations, deliberately written with different
// code structure from the library (plain nested vectors, direct summation,
// quadrature) so they can serve as independent oracles.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;

inline double loss_p(double diff, double p) { return std::pow(std::abs(diff), p); }

// Direct four-index GW objective.
inline double gw_objective(const Matrix& dx, const Matrix& dy, const Matrix& coupling, double p) {
    const std::size_t n = dx.size(), m = dy.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t l = 0; l < m; ++l)
                    total += loss_p(dx[i][k] - dy[j][l], p) * coupling[i][j] * coupling[k][l];
    return total;
}

// Minimum of the GW objective for two 2-point uniform spaces over the
// one-parameter coupling family [[t, .5-t], [.5-t, t]].
inline double gw_min_2pt(const Matrix& dx, const Matrix& dy, double p, double step = 1e-4) {
    double best = std::numeric_limits<double>::infinity();
    for (double t = 0.0; t <= 0.5 + 1e-12; t += step) {
        const double tt = std::min(t, 0.5);
        const double s = 0.5 - tt;
        Matrix pi = {{tt, s}, {s, tt}};
        best = std::min(best, gw_objective(dx, dy, pi, p));
    }
    return best;
}

namespace detail {

// The coupling polytope of two uniform spaces (n, m points) parameterized by
// its free coordinates: entries of the leading (n-1) x (m-1) block. The rest
// is determined by the marginals. Returns false when infeasible.
inline bool coupling_from_params(std::size_t n, std::size_t m, const std::vector<double>& params,
                                 Matrix& pi) {
    const double mu = 1.0 / static_cast<double>(n);
    const double nu = 1.0 / static_cast<double>(m);
    pi.assign(n, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i + 1 < n; ++i)
        for (std::size_t j = 0; j + 1 < m; ++j) pi[i][j] = params[i * (m - 1) + j];
    const double tol = -1e-12;
    // last column from row sums
    for (std::size_t i = 0; i + 1 < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j + 1 < m; ++j) s += pi[i][j];
        pi[i][m - 1] = mu - s;
        if (pi[i][m - 1] < tol) return false;
        pi[i][m - 1] = std::max(pi[i][m - 1], 0.0);
    }
    // last row from column sums
    double last_row_total = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) s += pi[i][j];
        pi[n - 1][j] = nu - s;
        if (pi[n - 1][j] < tol) return false;
        pi[n - 1][j] = std::max(pi[n - 1][j], 0.0);
        last_row_total += pi[n - 1][j];
    }
    return std::abs(last_row_total - mu) < 1e-9;
}

} // namespace detail

// Minimum of the GW objective for two uniform spaces with n, m <= 3: dense
// grid over the free coupling coordinates followed by shrinking coordinate
// refinement.
inline double gw_min_grid(const Matrix& dx, const Matrix& dy, double p, double grid_step) {
    const std::size_t n = dx.size(), m = dy.size();
    const std::size_t dof = (n - 1) * (m - 1);
    Matrix pi;
    if (dof == 0) {
        // one of the spaces is a single point: the coupling is forced
        std::vector<double> none;
        detail::coupling_from_params(n, m, none, pi);
        return gw_objective(dx, dy, pi, p);
    }
    const double hi_val = 1.0 / static_cast<double>(std::max(n, m));
    const int steps = static_cast<int>(hi_val / grid_step) + 1;

    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_params(dof, 0.0), params(dof, 0.0);
    std::vector<int> idx(dof, 0);
    while (true) {
        for (std::size_t k = 0; k < dof; ++k) params[k] = std::min(idx[k] * grid_step, hi_val);
        if (detail::coupling_from_params(n, m, params, pi)) {
            const double val = gw_objective(dx, dy, pi, p);
            if (val < best) {
                best = val;
                best_params = params;
            }
        }
        std::size_t carry = 0;
        while (carry < dof && ++idx[carry] > steps) idx[carry++] = 0;
        if (carry == dof) break;
    }

    // Shrinking-step descent over single-coordinate moves plus all signed
    // two-coordinate moves (the latter slide along polytope edges where
    // axis-aligned steps are blocked).
    params = best_params;
    double step = grid_step;
    auto try_move = [&](const std::vector<double>& trial) {
        for (double v : trial)
            if (v < 0.0 || v > hi_val) return false;
        if (!detail::coupling_from_params(n, m, trial, pi)) return false;
        const double val = gw_objective(dx, dy, pi, p);
        if (val < best - 1e-15) {
            best = val;
            params = trial;
            return true;
        }
        return false;
    };
    while (step > 1e-9) {
        bool improved = false;
        for (std::size_t c1 = 0; c1 < dof; ++c1)
            for (double d1 : {-1.0, 1.0}) {
                std::vector<double> trial = params;
                trial[c1] += d1 * step;
                improved |= try_move(trial);
                for (std::size_t c2 = c1 + 1; c2 < dof; ++c2)
                    for (double d2 : {-1.0, 1.0}) {
                        std::vector<double> pair_trial = params;
                        pair_trial[c1] += d1 * step;
                        pair_trial[c2] += d2 * step;
                        improved |= try_move(pair_trial);
                    }
            }
        if (!improved) step *= 0.5;
    }
    return best;
}

// Dispatch for uniform spaces with up to 3 points. The 2x2 case uses the
// classic one-parameter sweep; everything else the generic grid.
inline double gw_min_small(const Matrix& dx, const Matrix& dy, double p) {
    if (dx.size() == 1 && dy.size() == 1) return 0.0;
    if (dx.size() == 2 && dy.size() == 2) return gw_min_2pt(dx, dy, p);
    const double step = (dx.size() - 1) * (dy.size() - 1) >= 4 ? 0.02 : 0.005;
    return gw_min_grid(dx, dy, p, step);
}

// Entropic OT objective <C, pi> + eps * sum pi log pi for the symmetric 2x2
// coupling family; returns the best t on a dense grid.
inline double entropic_ot_best_t(const Matrix& cost, double eps, double step = 1e-4) {
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    double best_val = std::numeric_limits<double>::infinity();
    double best_t = 0.0;
    for (double t = 0.0; t <= 0.5 + 1e-12; t += step) {
        const double tt = std::min(t, 0.5);
        const double s = 0.5 - tt;
        const double val = cost[0][0] * tt + cost[0][1] * s + cost[1][0] * s + cost[1][1] * tt +
                           eps * (2.0 * xlogx(tt) + 2.0 * xlogx(s));
        if (val < best_val) {
            best_val = val;
            best_t = tt;
        }
    }
    return best_t;
}

// ---------------------------------------------------------------------------
// Planner: independent brute force over partitions into exactly k blocks.
// ---------------------------------------------------------------------------

// Minimal loss over all partitions of {1..n} into exactly `target` blocks,
// by direct recursion: each element joins an existing block or opens a new
// one. Loss evaluated from scratch per complete partition.
inline double best_partition_loss(const std::vector<std::vector<double>>& similarity, int n,
                                  int target, double lambda, bool count_singletons = false) {
    std::vector<std::vector<int>> blocks;
    double best = std::numeric_limits<double>::infinity();

    std::function<void(int)> recurse = [&](int element) {
        if (element > n) {
            if (static_cast<int>(blocks.size()) != target) return;
            double loss = 0.0;
            for (const auto& blk : blocks) {
                for (std::size_t x = 0; x < blk.size(); ++x)
                    for (std::size_t y = x + 1; y < blk.size(); ++y)
                        loss += 1.0 - similarity[blk[x] - 1][blk[y] - 1];
                if (blk.size() >= 2 || count_singletons) loss += lambda * blk.size();
            }
            best = std::min(best, loss);
            return;
        }
        if (static_cast<int>(blocks.size()) > target) return;
        const std::size_t n_blocks = blocks.size(); // recursion grows the vector; index, don't iterate
        for (std::size_t bi = 0; bi < n_blocks; ++bi) {
            blocks[bi].push_back(element);
            recurse(element + 1);
            blocks[bi].pop_back();
        }
        blocks.push_back({element});
        recurse(element + 1);
        blocks.pop_back();
    };
    recurse(1);
    return best;
}

// ---------------------------------------------------------------------------
// TIES reference: step-by-step trim / elect / merge on flat vectors.
// ---------------------------------------------------------------------------

inline std::vector<double> ties_reference(const std::vector<double>& base,
                                          const std::vector<std::vector<double>>& vectors,
                                          double density, double lambda_scale) {
    const std::size_t n = base.size();
    const std::size_t keep =
        std::min(n, static_cast<std::size_t>(std::ceil(density * static_cast<double>(n))));

    std::vector<std::vector<double>> trimmed;
    for (const auto& v : vectors) {
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t i = 0; i < n; ++i) ranked.push_back({std::abs(v[i]), i});
        std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        std::vector<double> t(n, 0.0);
        for (std::size_t k = 0; k < keep; ++k) t[ranked[k].second] = v[ranked[k].second];
        trimmed.push_back(std::move(t));
    }

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double total = 0.0;
        for (const auto& t : trimmed) total += t[i];
        const int sign = total >= 0.0 ? 1 : -1;
        double acc = 0.0;
        int cnt = 0;
        for (const auto& t : trimmed)
            if ((sign > 0 && t[i] > 0.0) || (sign < 0 && t[i] < 0.0)) {
                acc += t[i];
                ++cnt;
            }
        out[i] = base[i] + lambda_scale * (cnt ? acc / cnt : 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics: brute-force confusion counting with direct formulas.
// ---------------------------------------------------------------------------

struct MetricValues {
    double micro_f1, macro_f1, exact_match, per_label_accuracy;
};

inline MetricValues metrics_reference(const std::vector<std::vector<int>>& truth,
                                      const std::vector<std::vector<int>>& pred) {
    const std::size_t n = truth.size(), c = truth[0].size();
    double tp_all = 0, fp_all = 0, fn_all = 0;
    double macro = 0, label_acc = 0;
    for (std::size_t cls = 0; cls < c; ++cls) {
        double tp = 0, fp = 0, fn = 0, tn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (truth[i][cls] == 1 && pred[i][cls] == 1) tp += 1;
            if (truth[i][cls] == 0 && pred[i][cls] == 1) fp += 1;
            if (truth[i][cls] == 1 && pred[i][cls] == 0) fn += 1;
            if (truth[i][cls] == 0 && pred[i][cls] == 0) tn += 1;
        }
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        macro += (2 * tp + fp + fn) > 0 ? 2 * tp / (2 * tp + fp + fn) : 0.0;
        label_acc += (tp + tn) / static_cast<double>(n);
    }
    double exact = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (truth[i] == pred[i]) exact += 1;
    MetricValues mv;
    mv.micro_f1 = (2 * tp_all + fp_all + fn_all) > 0 ? 2 * tp_all / (2 * tp_all + fp_all + fn_all) : 0.0;
    mv.macro_f1 = macro / static_cast<double>(c);
    mv.exact_match = exact / static_cast<double>(n);
    mv.per_label_accuracy = label_acc / static_cast<double>(c);
    return mv;
}

// ---------------------------------------------------------------------------
// Student-t: quadrature-based two-sided p-value.
// ---------------------------------------------------------------------------

namespace detail {

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double fa, double fm, double fb, double whole, double tol,
                               int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
    const double m = 0.5 * (a + b);
    const double fa = f(a), fm = f(m), fb = f(b);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

} // namespace detail

inline double t_two_sided_p(double t, int df) {
    const double nu = static_cast<double>(df);
    const double log_norm =
        std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(nu * M_PI);
    auto pdf = [&](double x) {
        return std::exp(log_norm - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
    };
    const double at = std::abs(t);
    const double central = detail::integrate(pdf, 0.0, at, 1e-13);
    return std::max(0.0, 1.0 - 2.0 * central);
}

// Independent t statistic from paired samples.
inline double t_statistic(const std::vector<double>& before, const std::vector<double>& after) {
    const std::size_t n = before.size();
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += after[i] - before[i];
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = after[i] - before[i] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return mean / (sd / std::sqrt(static_cast<double>(n)));
}

} // namespace oracle
