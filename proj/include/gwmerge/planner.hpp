#pragma once

// Merge-plan search: partition T tasks into exactly T' clusters minimizing
//   L(M) = sum over within-cluster pairs of (1 - S[i,j]) + lambda * sum |C_k|
// where the size penalty counts clusters with |C_k| >= 2 (counting singletons
// as well makes the penalty a constant T; a flag restores that reading).
//
// Two search strategies: the greedy pairwise agglomeration and exhaustive
// enumeration over restricted-growth strings.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "gwmerge/error.hpp"
#include "gwmerge/similarity.hpp"
#include "gwmerge/tensor_io.hpp"

namespace gwmerge {

struct PlannerOptions {
    bool lambda_counts_singletons = false;
};

namespace detail {

inline void check_partition(const std::vector<std::vector<int>>& clusters, std::size_t n_tasks) {
    std::vector<int> all;
    for (const auto& c : clusters) {
        if (c.empty()) fail(ErrorKind::InvalidPartition, "empty cluster");
        all.insert(all.end(), c.begin(), c.end());
    }
    if (all.size() != n_tasks)
        fail(ErrorKind::InvalidPartition, "partition does not cover 1..T exactly once");
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i] != static_cast<int>(i) + 1)
            fail(ErrorKind::InvalidPartition, "partition does not cover 1..T exactly once");
}

inline double loss_unchecked(const std::vector<std::vector<int>>& clusters, const SimilarityMatrix& s,
                             double lambda, const PlannerOptions& opts) {
    double loss = 0.0;
    for (const auto& c : clusters) {
        for (std::size_t a = 0; a < c.size(); ++a)
            for (std::size_t b = a + 1; b < c.size(); ++b)
                loss += 1.0 - s.at(static_cast<std::size_t>(c[a]) - 1, static_cast<std::size_t>(c[b]) - 1);
        if (c.size() >= 2 || opts.lambda_counts_singletons)
            loss += lambda * static_cast<double>(c.size());
    }
    return loss;
}

} // namespace detail

inline double plan_loss(const std::vector<std::vector<int>>& clusters, const SimilarityMatrix& s,
                        double lambda, const PlannerOptions& opts = {}) {
    if (lambda < 0.0) fail(ErrorKind::InvariantViolation, "lambda must be >= 0");
    detail::check_partition(clusters, s.n_tasks);
    return detail::loss_unchecked(clusters, s, lambda, opts);
}

/// Agglomerative search: start from singletons and repeatedly merge the pair
/// of clusters with the smallest loss increase, exactly T - T' times.
/// Tie-break: the pair with the lexicographically smallest (min task index,
/// next min task index) wins.
inline MergePlan plan_greedy(const SimilarityMatrix& s, int target, double lambda,
                             const PlannerOptions& opts = {}) {
    const int t = static_cast<int>(s.n_tasks);
    if (target < 1 || target > t)
        fail(ErrorKind::TargetOutOfRange, "target cluster count must lie in [1, T]");
    if (lambda < 0.0) fail(ErrorKind::InvariantViolation, "lambda must be >= 0");

    std::vector<std::vector<int>> clusters;
    for (int i = 1; i <= t; ++i) clusters.push_back({i});

    auto penalty = [&](std::size_t size) {
        return (size >= 2 || opts.lambda_counts_singletons) ? lambda * static_cast<double>(size) : 0.0;
    };

    for (int step = 0; step < t - target; ++step) {
        double best_delta = 0.0;
        std::pair<int, int> best_key{0, 0};
        std::size_t best_a = 0, best_b = 0;
        bool found = false;
        for (std::size_t a = 0; a < clusters.size(); ++a)
            for (std::size_t b = a + 1; b < clusters.size(); ++b) {
                double cross = 0.0;
                for (int i : clusters[a])
                    for (int j : clusters[b])
                        cross += 1.0 - s.at(static_cast<std::size_t>(i) - 1,
                                            static_cast<std::size_t>(j) - 1);
                const double delta = cross + penalty(clusters[a].size() + clusters[b].size()) -
                                     penalty(clusters[a].size()) - penalty(clusters[b].size());
                std::pair<int, int> key{std::min(clusters[a].front(), clusters[b].front()),
                                        std::max(clusters[a].front(), clusters[b].front())};
                if (!found || delta < best_delta || (delta == best_delta && key < best_key)) {
                    found = true;
                    best_delta = delta;
                    best_key = key;
                    best_a = a;
                    best_b = b;
                }
            }
        std::vector<int> merged = clusters[best_a];
        merged.insert(merged.end(), clusters[best_b].begin(), clusters[best_b].end());
        std::sort(merged.begin(), merged.end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
        clusters[best_a] = std::move(merged);
    }

    MergePlan plan;
    plan.clusters = std::move(clusters);
    plan.target_clusters = target;
    plan.provenance = PlanProvenance::Greedy;
    plan.canonicalize();
    plan.loss = detail::loss_unchecked(plan.clusters, s, lambda, opts);
    plan.validate();
    return plan;
}

/// Exhaustive search over all partitions of {1..T} into exactly T' blocks,
/// enumerated as restricted-growth strings in lexicographic order. The first
/// minimizer encountered wins, which makes the tie-break the
/// lexicographically smallest canonical encoding.
inline MergePlan plan_exact(const SimilarityMatrix& s, int target, double lambda,
                            const PlannerOptions& opts = {}) {
    const int t = static_cast<int>(s.n_tasks);
    if (t > 12) fail(ErrorKind::TooManyTasks, "exact search is limited to T <= 12 tasks");
    if (target < 1 || target > t)
        fail(ErrorKind::TargetOutOfRange, "target cluster count must lie in [1, T]");
    if (lambda < 0.0) fail(ErrorKind::InvariantViolation, "lambda must be >= 0");

    std::vector<int> code(static_cast<std::size_t>(t), 0); // code[i] = block of task i+1
    std::vector<std::vector<int>> blocks(static_cast<std::size_t>(target));
    double best_loss = 0.0;
    std::vector<int> best_code;

    // Depth-first over restricted-growth strings: code[0] = 0 and
    // code[i] <= max(code[0..i-1]) + 1, visiting codes in lexicographic order.
    auto visit = [&](auto&& self, int pos, int used) -> void {
        if (pos == t) {
            if (used != target) return;
            for (auto& b : blocks) b.clear();
            for (int i = 0; i < t; ++i) blocks[static_cast<std::size_t>(code[static_cast<std::size_t>(i)])].push_back(i + 1);
            const double loss = detail::loss_unchecked(blocks, s, lambda, opts);
            if (best_code.empty() || loss < best_loss) {
                best_loss = loss;
                best_code = code;
            }
            return;
        }
        // Even blocks not yet opened cannot exceed the target, and the
        // remaining positions must be able to open all missing blocks.
        const int remaining = t - pos;
        const int hi = std::min(used, target - 1);
        for (int b = 0; b <= hi; ++b) {
            const int used_next = (b == used) ? used + 1 : used;
            if (target - used_next > remaining - 1) continue;
            code[static_cast<std::size_t>(pos)] = b;
            self(self, pos + 1, used_next);
        }
    };
    visit(visit, 0, 0);

    MergePlan plan;
    plan.clusters.assign(static_cast<std::size_t>(target), {});
    for (int i = 0; i < t; ++i)
        plan.clusters[static_cast<std::size_t>(best_code[static_cast<std::size_t>(i)])].push_back(i + 1);
    plan.target_clusters = target;
    plan.provenance = PlanProvenance::Exact;
    plan.canonicalize();
    plan.loss = best_loss;
    plan.validate();
    return plan;
}

} // namespace gwmerge
