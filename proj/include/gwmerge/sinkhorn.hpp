#pragma once

// Entropically regularized optimal transport solved with log-domain Sinkhorn
// iterations. Working in log space keeps the kernel well defined at small
// regularization strengths where exp(-cost/eps) would underflow.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gwmerge/error.hpp"

namespace gwmerge {

/// Nonnegative n x m transport plan with prescribed row/column marginals.
struct Coupling {
    std::size_t n = 0;
    std::size_t m = 0;
    std::vector<double> plan; // row-major
    std::vector<double> row_marginal;
    std::vector<double> col_marginal;

    double at(std::size_t i, std::size_t j) const { return plan[i * m + j]; }
    double& at(std::size_t i, std::size_t j) { return plan[i * m + j]; }

    /// L-inf violation over both marginal constraints.
    double max_marginal_violation() const {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += at(i, j);
            worst = std::max(worst, std::abs(s - row_marginal[i]));
        }
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += at(i, j);
            worst = std::max(worst, std::abs(s - col_marginal[j]));
        }
        return worst;
    }

    void validate(double marginal_tol = 1e-6) const {
        if (n < 1 || m < 1 || plan.size() != n * m || row_marginal.size() != n ||
            col_marginal.size() != m)
            fail(ErrorKind::DimensionMismatch, "coupling dimensions are inconsistent");
        for (double v : plan) {
            if (!std::isfinite(v)) fail(ErrorKind::NonFiniteValue, "coupling contains NaN or Inf");
            if (v < 0.0) fail(ErrorKind::InvariantViolation, "coupling entries must be >= 0");
        }
        if (max_marginal_violation() > marginal_tol)
            fail(ErrorKind::InvariantViolation, "coupling violates its marginal constraints");
    }

    static Coupling product(const std::vector<double>& mu, const std::vector<double>& nu) {
        Coupling c;
        c.n = mu.size();
        c.m = nu.size();
        c.row_marginal = mu;
        c.col_marginal = nu;
        c.plan.resize(c.n * c.m);
        for (std::size_t i = 0; i < c.n; ++i)
            for (std::size_t j = 0; j < c.m; ++j) c.at(i, j) = mu[i] * nu[j];
        return c;
    }

    Coupling transposed() const {
        Coupling t;
        t.n = m;
        t.m = n;
        t.row_marginal = col_marginal;
        t.col_marginal = row_marginal;
        t.plan.resize(plan.size());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) t.at(j, i) = at(i, j);
        return t;
    }
};

struct SinkhornResult {
    Coupling coupling;
    bool converged = false;
    int iterations = 0;
    double marginal_error = 0.0;
};

/// Scaled dual potentials, reusable across solves for warm starts.
struct SinkhornState {
    std::vector<double> log_u;
    std::vector<double> log_v;
};

namespace detail {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double log_or_neg_inf(double x) { return x > 0.0 ? std::log(x) : neg_inf; }

/// log(sum(exp(x))) over a strided slice; -inf when all entries are -inf.
inline double logsumexp(const double* x, std::size_t count, std::size_t stride) {
    double hi = neg_inf;
    for (std::size_t k = 0; k < count; ++k) hi = std::max(hi, x[k * stride]);
    if (hi == neg_inf) return neg_inf;
    double acc = 0.0;
    for (std::size_t k = 0; k < count; ++k) acc += std::exp(x[k * stride] - hi);
    return hi + std::log(acc);
}

} // namespace detail

/// Solves min <cost, pi> - eps * H(pi) over couplings of (mu, nu).
///
/// Stabilized scaling iterations: the bulk of the work is multiplicative
/// u/v updates against an absorbed kernel exp(-cost/eps + f + g) (pure
/// arithmetic); when the scalings drift too far, or a needed row/column sum
/// underflows, the potentials are re-absorbed through a log-sum-exp update,
/// which is exact at any regularization strength.
///
/// Non-convergence within max_iter is reported through the result flag, not
/// an exception. A coupling row or column that collapses to zero against a
/// positive marginal is a NumericalUnderflow error (epsilon too small).
inline SinkhornResult wasserstein_entropic(const std::vector<double>& cost, std::size_t n,
                                           std::size_t m, const std::vector<double>& mu,
                                           const std::vector<double>& nu, double epsilon,
                                           int max_iter, double tol,
                                           SinkhornState* state = nullptr) {
    if (n < 1 || m < 1 || cost.size() != n * m || mu.size() != n || nu.size() != m)
        fail(ErrorKind::DimensionMismatch, "sinkhorn: cost/marginal dimensions are inconsistent");
    if (!(epsilon > 0.0)) fail(ErrorKind::InvariantViolation, "sinkhorn: epsilon must be > 0");
    for (double c : cost)
        if (!std::isfinite(c)) fail(ErrorKind::NonFiniteValue, "sinkhorn: cost contains NaN or Inf");

    // Gibbs kernel exponents -cost/eps, fixed for the whole solve.
    std::vector<double> khat(n * m);
    for (std::size_t i = 0; i < n * m; ++i) khat[i] = -cost[i] / epsilon;

    std::vector<double> lmu(n), lnu(m);
    for (std::size_t i = 0; i < n; ++i) lmu[i] = detail::log_or_neg_inf(mu[i]);
    for (std::size_t j = 0; j < m; ++j) lnu[j] = detail::log_or_neg_inf(nu[j]);

    // Absorbed log potentials and linear scalings (pi = u K~ v elementwise).
    std::vector<double> f(n, 0.0), g(m, 0.0);
    if (state && state->log_u.size() == n && state->log_v.size() == m) {
        f = state->log_u;
        g = state->log_v;
    }
    std::vector<double> u(n, 1.0), v(m, 1.0);
    std::vector<double> kernel(n * m);
    std::vector<double> row_buf(m), col_buf(n);

    auto rebuild_kernel = [&] {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                const double e = khat[i * m + j] + f[i] + g[j];
                // transient overflow guard; inactive once absorbed potentials settle
                kernel[i * m + j] = (e == detail::neg_inf) ? 0.0 : std::exp(std::min(e, 60.0));
            }
    };

    auto absorb = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            f[i] += detail::log_or_neg_inf(u[i]);
            u[i] = (lmu[i] == detail::neg_inf) ? 0.0 : 1.0;
        }
        for (std::size_t j = 0; j < m; ++j) {
            g[j] += detail::log_or_neg_inf(v[j]);
            v[j] = (lnu[j] == detail::neg_inf) ? 0.0 : 1.0;
        }
        rebuild_kernel();
    };

    // One exact log-sum-exp round: row potentials from g, then column
    // potentials from the fresh f. Representable at any scale.
    auto lse_round = [&] {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < m; ++j) row_buf[j] = g[j] + khat[i * m + j];
            const double lse = detail::logsumexp(row_buf.data(), m, 1);
            f[i] = (lmu[i] == detail::neg_inf) ? detail::neg_inf : lmu[i] - lse;
        }
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t i = 0; i < n; ++i) col_buf[i] = f[i] + khat[i * m + j];
            const double lse = detail::logsumexp(col_buf.data(), n, 1);
            g[j] = (lnu[j] == detail::neg_inf) ? detail::neg_inf : lnu[j] - lse;
        }
        for (std::size_t i = 0; i < n; ++i) u[i] = (lmu[i] == detail::neg_inf) ? 0.0 : 1.0;
        for (std::size_t j = 0; j < m; ++j) v[j] = (lnu[j] == detail::neg_inf) ? 0.0 : 1.0;
        rebuild_kernel();
    };

    lse_round(); // handles cold starts and stale warm starts alike

    SinkhornResult res;
    res.marginal_error = std::numeric_limits<double>::infinity();
    constexpr double absorb_threshold = 1e6; // on the linear scalings

    for (int iter = 1; iter <= max_iter; ++iter) {
        bool need_rescue = false;

        for (std::size_t i = 0; i < n; ++i) {
            if (lmu[i] == detail::neg_inf) continue;
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += kernel[i * m + j] * v[j];
            if (s <= 0.0 || !std::isfinite(s)) {
                need_rescue = true;
                break;
            }
            u[i] = mu[i] / s;
        }
        if (!need_rescue) {
            for (std::size_t j = 0; j < m; ++j) {
                if (lnu[j] == detail::neg_inf) continue;
                double s = 0.0;
                for (std::size_t i = 0; i < n; ++i) s += kernel[i * m + j] * u[i];
                if (s <= 0.0 || !std::isfinite(s)) {
                    need_rescue = true;
                    break;
                }
                v[j] = nu[j] / s;
            }
        }
        if (need_rescue) {
            // exact update in log space; by construction no sums vanish
            // afterwards unless the kernel itself has a structurally zero
            // row or column, which the final underflow check reports
            lse_round();
        }

        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += kernel[i * m + j] * v[j];
            err = std::max(err, std::abs(u[i] * s - mu[i]));
        }
        res.iterations = iter;
        res.marginal_error = err;
        if (err < tol) {
            res.converged = true;
            break;
        }

        double drift = 0.0;
        for (double x : u)
            if (x > 0.0) drift = std::max(drift, std::max(x, 1.0 / x));
        for (double x : v)
            if (x > 0.0) drift = std::max(drift, std::max(x, 1.0 / x));
        if (drift > absorb_threshold) absorb();
    }
    absorb(); // fold the final scalings into the stored potentials

    Coupling c;
    c.n = n;
    c.m = m;
    c.row_marginal = mu;
    c.col_marginal = nu;
    c.plan = kernel; // u = v = 1 after the final absorption

    for (std::size_t i = 0; i < n; ++i) {
        if (mu[i] <= 0.0) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < m; ++j) s += c.at(i, j);
        if (s == 0.0)
            fail(ErrorKind::NumericalUnderflow,
                 "sinkhorn: coupling row underflowed to zero; epsilon is too small");
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (nu[j] <= 0.0) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += c.at(i, j);
        if (s == 0.0)
            fail(ErrorKind::NumericalUnderflow,
                 "sinkhorn: coupling column underflowed to zero; epsilon is too small");
    }

    // Round onto the exact marginals: scale overfull rows/columns down, then
    // spread the remaining deficit as a rank-one correction. Keeps every
    // returned plan feasible even when the iteration stopped short.
    {
        std::vector<double> rsum(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) rsum[i] += c.at(i, j);
        for (std::size_t i = 0; i < n; ++i)
            if (rsum[i] > mu[i] && rsum[i] > 0.0) {
                const double scale = mu[i] / rsum[i];
                for (std::size_t j = 0; j < m; ++j) c.at(i, j) *= scale;
            }
        std::vector<double> csum(m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) csum[j] += c.at(i, j);
        for (std::size_t j = 0; j < m; ++j)
            if (csum[j] > nu[j] && csum[j] > 0.0) {
                const double scale = nu[j] / csum[j];
                for (std::size_t i = 0; i < n; ++i) c.at(i, j) *= scale;
            }
        std::vector<double> err_r(n, 0.0), err_c(m, 0.0);
        rsum.assign(n, 0.0);
        csum.assign(m, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                rsum[i] += c.at(i, j);
                csum[j] += c.at(i, j);
            }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += err_r[i] = std::max(0.0, mu[i] - rsum[i]);
        for (std::size_t j = 0; j < m; ++j) err_c[j] = std::max(0.0, nu[j] - csum[j]);
        if (total > 0.0)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) c.at(i, j) += err_r[i] * err_c[j] / total;
    }

    if (state) {
        state->log_u = f;
        state->log_v = g;
    }
    res.coupling = std::move(c);
    return res;
}

} // namespace gwmerge
