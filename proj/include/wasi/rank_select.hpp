#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "wasi/activation_subspace.hpp"
#include "wasi/lowrank_autodiff.hpp"
#include "wasi/tensor.hpp"

namespace wasi {

struct infeasible_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Exact element count of a Tucker-compressed activation: prod(r) + sum(D_m r_m).
inline std::size_t activation_memory(const std::vector<std::size_t>& ranks,
                                     const std::vector<std::size_t>& dims) {
    if (ranks.size() != dims.size())
        throw std::invalid_argument("activation_memory: rank/dim arity mismatch");
    std::size_t core = 1, factors = 0;
    for (std::size_t m = 0; m < ranks.size(); ++m) {
        core *= ranks[m];
        factors += dims[m] * ranks[m];
    }
    return core + factors;
}

/// Layer x threshold grid of gradient perplexities and the HOSVD ranks that
/// produced them.
struct PerplexityTable {
    std::vector<double> thresholds;                           // ascending, in (0, 1]
    std::vector<std::vector<double>> perplexity;              // layers x E
    std::vector<std::vector<std::vector<std::size_t>>> ranks; // layers x E x modes
    std::vector<std::vector<std::size_t>> dims;               // per-layer activation dims

    std::size_t layer_count() const { return perplexity.size(); }
    std::size_t threshold_count() const { return thresholds.size(); }

    std::size_t memory_at(std::size_t layer, std::size_t j) const {
        return activation_memory(ranks[layer][j], dims[layer]);
    }
};

struct RankPlan {
    std::vector<std::size_t> threshold_index;        // chosen j_i per layer
    std::vector<std::vector<std::size_t>> ranks;     // resulting per-layer rank vectors
    std::size_t total_memory = 0;
    double total_perplexity = 0.0;
};

namespace detail {

inline RankPlan assemble_plan(const PerplexityTable& t, const std::vector<std::size_t>& choice) {
    RankPlan plan;
    plan.threshold_index = choice;
    for (std::size_t i = 0; i < t.layer_count(); ++i) {
        plan.ranks.push_back(t.ranks[i][choice[i]]);
        plan.total_memory += t.memory_at(i, choice[i]);
        plan.total_perplexity += t.perplexity[i][choice[i]];
    }
    return plan;
}

// Recursive backtracking over per-layer threshold choices. Minimizes
// (primary, secondary, lexicographic index vector); `primary_of` and
// `secondary_of` pick perplexity/memory per objective. Branches whose primary
// already exceeds the incumbent or whose remaining minimum violates the hard
// constraint are pruned.
struct SearchProblem {
    const PerplexityTable& table;
    std::vector<std::vector<double>> primary;    // layer x j
    std::vector<std::vector<double>> secondary;  // layer x j
    std::vector<std::vector<double>> constraint; // layer x j
    double constraint_limit = 0.0;

    std::vector<double> suffix_min_primary;
    std::vector<double> suffix_min_constraint;

    std::vector<std::size_t> best_choice;
    double best_primary = std::numeric_limits<double>::infinity();
    double best_secondary = std::numeric_limits<double>::infinity();
    bool found = false;

    void prepare() {
        const std::size_t layers = table.layer_count();
        suffix_min_primary.assign(layers + 1, 0.0);
        suffix_min_constraint.assign(layers + 1, 0.0);
        for (std::size_t i = layers; i-- > 0;) {
            double mp = std::numeric_limits<double>::infinity();
            double mc = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < table.threshold_count(); ++j) {
                mp = std::min(mp, primary[i][j]);
                mc = std::min(mc, constraint[i][j]);
            }
            suffix_min_primary[i] = suffix_min_primary[i + 1] + mp;
            suffix_min_constraint[i] = suffix_min_constraint[i + 1] + mc;
        }
    }

    void run() {
        prepare();
        std::vector<std::size_t> choice(table.layer_count(), 0);
        descend(0, 0.0, 0.0, 0.0, choice);
    }

    void descend(std::size_t layer, double cur_primary, double cur_secondary,
                 double cur_constraint, std::vector<std::size_t>& choice) {
        if (cur_constraint + suffix_min_constraint[layer] > constraint_limit + 1e-12) return;
        if (found && cur_primary + suffix_min_primary[layer] > best_primary + 1e-12) return;
        if (layer == table.layer_count()) {
            const bool better =
                !found || cur_primary < best_primary - 1e-12 ||
                (cur_primary <= best_primary + 1e-12 &&
                 (cur_secondary < best_secondary - 1e-12 ||
                  (cur_secondary <= best_secondary + 1e-12 && choice < best_choice)));
            if (better) {
                found = true;
                best_primary = cur_primary;
                best_secondary = cur_secondary;
                best_choice = choice;
            }
            return;
        }
        for (std::size_t j = 0; j < table.threshold_count(); ++j) {
            choice[layer] = j;
            descend(layer + 1, cur_primary + primary[layer][j],
                    cur_secondary + secondary[layer][j],
                    cur_constraint + constraint[layer][j], choice);
        }
    }
};

inline void check_table(const PerplexityTable& t) {
    if (t.layer_count() == 0 || t.threshold_count() == 0)
        throw std::invalid_argument("perplexity table is empty");
    for (std::size_t i = 0; i < t.layer_count(); ++i)
        if (t.perplexity[i].size() != t.threshold_count() ||
            t.ranks[i].size() != t.threshold_count())
            throw std::invalid_argument("perplexity table is ragged");
}

}  // namespace detail

/// Per-layer threshold choice minimizing total perplexity subject to the
/// activation memory budget. Exact optimum; ties broken by smaller memory,
/// then by lexicographically smaller index vector.
inline RankPlan select_budget(const PerplexityTable& table, std::size_t budget) {
    detail::check_table(table);
    const std::size_t layers = table.layer_count(), e = table.threshold_count();

    std::size_t min_total = 0;
    for (std::size_t i = 0; i < layers; ++i) {
        std::size_t mi = std::numeric_limits<std::size_t>::max();
        for (std::size_t j = 0; j < e; ++j) mi = std::min(mi, table.memory_at(i, j));
        min_total += mi;
    }
    if (min_total > budget)
        throw infeasible_error("budget " + std::to_string(budget) +
                               " is below the minimum feasible activation memory " +
                               std::to_string(min_total));

    detail::SearchProblem p{table};
    p.primary.assign(layers, std::vector<double>(e));
    p.secondary.assign(layers, std::vector<double>(e));
    p.constraint.assign(layers, std::vector<double>(e));
    for (std::size_t i = 0; i < layers; ++i)
        for (std::size_t j = 0; j < e; ++j) {
            p.primary[i][j] = table.perplexity[i][j];
            p.secondary[i][j] = double(table.memory_at(i, j));
            p.constraint[i][j] = double(table.memory_at(i, j));
        }
    p.constraint_limit = double(budget);
    p.run();
    return detail::assemble_plan(table, p.best_choice);
}

/// Per-layer threshold choice minimizing total activation memory subject to
/// the total perplexity target. A per-layer dominance filter removes options
/// that cannot appear in any optimum before the exact search.
inline RankPlan select_perplexity_target(const PerplexityTable& table, double tau) {
    detail::check_table(table);
    const std::size_t layers = table.layer_count(), e = table.threshold_count();

    double min_total = 0.0;
    for (std::size_t i = 0; i < layers; ++i) {
        double mi = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < e; ++j) mi = std::min(mi, table.perplexity[i][j]);
        min_total += mi;
    }
    if (min_total > tau + 1e-12)
        throw infeasible_error("perplexity target " + std::to_string(tau) +
                               " is below the minimum feasible total " +
                               std::to_string(min_total));

    // dominance filter: an option survives unless another one has no larger
    // memory and no larger perplexity (earlier index wins exact ties)
    std::vector<std::vector<char>> alive(layers, std::vector<char>(e, 1));
    for (std::size_t i = 0; i < layers; ++i)
        for (std::size_t j = 0; j < e; ++j)
            for (std::size_t k = 0; k < e && alive[i][j]; ++k) {
                if (k == j || !alive[i][k]) continue;
                const bool mem_le = table.memory_at(i, k) <= table.memory_at(i, j);
                const bool per_le = table.perplexity[i][k] <= table.perplexity[i][j];
                const bool equal = table.memory_at(i, k) == table.memory_at(i, j) &&
                                   table.perplexity[i][k] == table.perplexity[i][j];
                if (mem_le && per_le && (!equal || k < j)) alive[i][j] = 0;
            }

    const double big = 1e300;
    detail::SearchProblem p{table};
    p.primary.assign(layers, std::vector<double>(e));
    p.secondary.assign(layers, std::vector<double>(e));
    p.constraint.assign(layers, std::vector<double>(e));
    for (std::size_t i = 0; i < layers; ++i)
        for (std::size_t j = 0; j < e; ++j) {
            const bool dead = !alive[i][j];
            p.primary[i][j] = dead ? big : double(table.memory_at(i, j));
            p.secondary[i][j] = dead ? big : table.perplexity[i][j];
            p.constraint[i][j] = dead ? big : table.perplexity[i][j];
        }
    p.constraint_limit = tau;
    p.run();
    return detail::assemble_plan(table, p.best_choice);
}

/// Captured forward/backward context of one designated layer on the held-out
/// batch: the dense input activation and the gradient at the layer output.
struct LayerScanContext {
    Tensor activation;
    Tensor output_grad;
};

/// Builds the perplexity table from captured contexts: for each threshold,
/// each layer's activation is HOSVD-compressed and the Frobenius distance
/// between the exact and the compressed-path weight gradient is recorded.
inline PerplexityTable perplexity_scan_contexts(const std::vector<LayerScanContext>& contexts,
                                                const std::vector<double>& thresholds) {
    if (contexts.empty()) throw std::invalid_argument("perplexity scan: empty layer set");
    if (thresholds.empty()) throw std::invalid_argument("perplexity scan: no thresholds");
    for (std::size_t j = 0; j + 1 < thresholds.size(); ++j)
        if (thresholds[j] >= thresholds[j + 1])
            throw std::invalid_argument("perplexity scan: thresholds must be ascending");
    for (double eps : thresholds)
        if (eps <= 0.0 || eps > 1.0)
            throw std::invalid_argument("perplexity scan: thresholds must lie in (0, 1]");
    for (const LayerScanContext& c : contexts)
        if (c.activation.frobenius_norm() == 0.0)
            throw std::invalid_argument("perplexity scan: degenerate batch (zero activation)");

    PerplexityTable t;
    t.thresholds = thresholds;
    t.perplexity.assign(contexts.size(), {});
    t.ranks.assign(contexts.size(), {});
    for (const LayerScanContext& c : contexts) t.dims.push_back(c.activation.shape);

    for (std::size_t j = 0; j < thresholds.size(); ++j) {
        for (std::size_t i = 0; i < contexts.size(); ++i) {
            const LayerScanContext& c = contexts[i];
            TuckerActivation ta = hosvd(c.activation, thresholds[j]);
            Matrix exact = grad_weight_dense_matrix(c.activation, c.output_grad);
            Matrix approx = grad_weight_lowrank(ta, c.output_grad);
            t.perplexity[i].push_back((exact - approx).norm());
            t.ranks[i].push_back(ta.ranks);
        }
    }
    return t;
}

/// Runs the model's scan pass on a held-out batch and builds the table.
template <class ModelT>
PerplexityTable perplexity_scan(ModelT& model, const Tensor& inputs,
                                const std::vector<int>& labels,
                                const std::vector<double>& thresholds) {
    return perplexity_scan_contexts(model.collect_scan_contexts(inputs, labels), thresholds);
}

}  // namespace wasi
