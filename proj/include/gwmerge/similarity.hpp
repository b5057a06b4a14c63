#pragma once

// Pairwise GW distances across task models and the rescaled similarity
// matrix S[i,j] = 1 - (d[i,j] - d_min) / (d_max - d_min), with d_min/d_max
// taken over off-diagonal entries.

#include <cmath>
#include <string>
#include <vector>

#include "gwmerge/error.hpp"
#include "gwmerge/gw.hpp"
#include "gwmerge/tensor_io.hpp"

namespace gwmerge {

struct PairSolve {
    int i = 0; // 1-based task indices
    int j = 0;
    double distance = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct PairwiseGwResult {
    SquareMatrix distances;
    std::vector<PairSolve> solves;
    bool all_converged = true;
};

/// All T(T-1)/2 GW solves, mirrored into a symmetric zero-diagonal matrix.
/// Per-pair convergence is recorded; a NaN distance aborts with PairFailure.
inline PairwiseGwResult pairwise_gw(const std::vector<MetricSpace>& spaces, const GwConfig& cfg = {}) {
    if (spaces.size() < 2) fail(ErrorKind::EmptyInput, "pairwise_gw needs at least two spaces");
    const std::size_t t = spaces.size();
    PairwiseGwResult out;
    out.distances = SquareMatrix::zeros(t);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = i + 1; j < t; ++j) {
            GwResult r = gw_entropic(spaces[i], spaces[j], cfg);
            if (std::isnan(r.distance))
                fail(ErrorKind::PairFailure, "GW solve for pair (" + std::to_string(i + 1) + "," +
                                                 std::to_string(j + 1) + ") produced NaN");
            out.distances.at(i, j) = r.distance;
            out.distances.at(j, i) = r.distance;
            out.solves.push_back(
                {static_cast<int>(i + 1), static_cast<int>(j + 1), r.distance, r.converged, r.iterations});
            out.all_converged = out.all_converged && r.converged;
        }
    return out;
}

struct SimilarityMatrix {
    std::size_t n_tasks = 0;
    SquareMatrix scores;
    SquareMatrix source_distances;
    double d_min = 0.0;
    double d_max = 0.0;
    /// All off-diagonal distances equal; every score was pinned to 1.
    bool degenerate_range = false;

    double at(std::size_t i, std::size_t j) const { return scores.at(i, j); }

    void validate(bool require_pinned = true) const {
        scores.validate();
        source_distances.validate();
        if (n_tasks < 2 || scores.n != n_tasks || source_distances.n != n_tasks)
            fail(ErrorKind::DimensionMismatch, "similarity matrix dimensions are inconsistent");
        bool has_one = false, has_zero = false;
        for (std::size_t i = 0; i < n_tasks; ++i) {
            if (scores.at(i, i) != 1.0)
                fail(ErrorKind::InvariantViolation, "similarity diagonal must be 1");
            for (std::size_t j = 0; j < n_tasks; ++j) {
                if (i == j) continue;
                const double s = scores.at(i, j);
                if (s < 0.0 || s > 1.0)
                    fail(ErrorKind::InvariantViolation, "off-diagonal scores must lie in [0,1]");
                if (scores.at(i, j) != scores.at(j, i))
                    fail(ErrorKind::InvariantViolation, "similarity matrix must be symmetric");
                has_one = has_one || s == 1.0;
                has_zero = has_zero || s == 0.0;
            }
        }
        if (require_pinned && !degenerate_range && (!has_one || !has_zero))
            fail(ErrorKind::InvariantViolation,
                 "similarity rescaling must pin the closest pair to 1 and the farthest to 0");
    }
};

/// Wraps an already-rescaled score matrix (for example one loaded back from
/// CSV, possibly hand-edited) without re-deriving it from distances.
inline SimilarityMatrix similarity_from_scores(const SquareMatrix& scores) {
    scores.validate();
    if (scores.n < 2) fail(ErrorKind::DimensionMismatch, "similarity needs at least two tasks");
    SimilarityMatrix sim;
    sim.n_tasks = scores.n;
    sim.scores = scores;
    // Consistent synthetic distance view: d = 1 - S off the diagonal.
    sim.source_distances = SquareMatrix::zeros(scores.n);
    sim.d_min = std::numeric_limits<double>::infinity();
    sim.d_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < scores.n; ++i)
        for (std::size_t j = 0; j < scores.n; ++j) {
            if (i == j) continue;
            const double d = 1.0 - scores.at(i, j);
            sim.source_distances.at(i, j) = d;
            sim.d_min = std::min(sim.d_min, d);
            sim.d_max = std::max(sim.d_max, d);
        }
    sim.degenerate_range = sim.d_max == sim.d_min;
    sim.validate(false);
    return sim;
}

/// Rescales a pairwise distance matrix into similarity scores. When every
/// off-diagonal distance is equal the formula is undefined; all scores are
/// set to 1 and the degenerate flag raised.
inline SimilarityMatrix to_similarity(const SquareMatrix& d) {
    d.validate();
    if (d.n < 2) fail(ErrorKind::DimensionMismatch, "similarity needs at least two tasks");
    for (std::size_t i = 0; i < d.n; ++i) {
        if (d.at(i, i) != 0.0)
            fail(ErrorKind::InvariantViolation, "distance matrix diagonal must be zero");
        for (std::size_t j = i + 1; j < d.n; ++j)
            if (d.at(i, j) != d.at(j, i))
                fail(ErrorKind::InvariantViolation, "distance matrix must be symmetric");
    }

    SimilarityMatrix sim;
    sim.n_tasks = d.n;
    sim.source_distances = d;
    sim.d_min = std::numeric_limits<double>::infinity();
    sim.d_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < d.n; ++i)
        for (std::size_t j = 0; j < d.n; ++j) {
            if (i == j) continue;
            sim.d_min = std::min(sim.d_min, d.at(i, j));
            sim.d_max = std::max(sim.d_max, d.at(i, j));
        }

    sim.scores = SquareMatrix::zeros(d.n);
    sim.degenerate_range = sim.d_max == sim.d_min;
    for (std::size_t i = 0; i < d.n; ++i)
        for (std::size_t j = 0; j < d.n; ++j) {
            if (i == j) {
                sim.scores.at(i, j) = 1.0;
            } else if (sim.degenerate_range) {
                sim.scores.at(i, j) = 1.0;
            } else {
                sim.scores.at(i, j) = 1.0 - (d.at(i, j) - sim.d_min) / (sim.d_max - sim.d_min);
            }
        }
    sim.validate();
    return sim;
}

} // namespace gwmerge
