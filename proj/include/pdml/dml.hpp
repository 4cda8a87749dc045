#pragma once

#include <functional>
#include <vector>

#include "pdml/data.hpp"
#include "pdml/interval.hpp"
#include "pdml/learners.hpp"
#include "pdml/rng.hpp"
#include "pdml/types.hpp"

namespace pdml {

// Residuals on an evaluation fold: eps_i = Y_i - g^(X_i), delta_i = D_i - f^(X_i).
struct ResidualPair {
    Vector eps;
    Vector delta;
    std::vector<Index> fold;  // rows these residuals belong to (may be empty)

    // Equal lengths, finite entries. Throws ContractError.
    void validate() const;
};

// sum eps*delta / sum delta^2. DegenerateError when sum delta^2 < 1e-12 * n.
double estimate_beta(const ResidualPair& r);

// sqrt( mean((eps - beta*delta)^2 delta^2) / (n * mean(delta^2)^2) ).
double standard_error(const ResidualPair& r, double beta_hat);

// beta_hat -/+ z_{alpha/2} * se.
Interval wald_ci(double beta_hat, double se, double alpha);

struct DmlEstimate {
    double beta_hat = 0.0;
    double se_hat = 0.0;
    ResidualPair residuals;  // pooled over the evaluated folds
    Index n_eval = 0;
    std::vector<double> fold_estimates;
};

enum class Aggregation { Mean, Median };

double aggregate(const std::vector<double>& values, Aggregation how);

using NuisanceFn = std::function<double(RowRef)>;

// DML estimate from the true nuisances on eval_fold (simulation only).
double oracle_estimate(const Dataset& ds, const NuisanceFn& true_f, const NuisanceFn& true_g,
                       const std::vector<Index>& eval_fold);

// Oracle estimate per evaluated fold of `split`, aggregated like cross_fit.
double oracle_estimate(const Dataset& ds, const NuisanceFn& true_f, const NuisanceFn& true_g,
                       const FoldSplit& split, Aggregation how = Aggregation::Mean);

// Combine per-fold residuals: beta is the aggregate of fold estimates, the
// standard error comes from the pooled residuals with that beta.
DmlEstimate combine_folds(std::vector<ResidualPair> per_fold, Aggregation how);

// Fits g on Y and f on D on every training complement, forms residuals on the
// evaluation fold and combines them. Single split returns the fold-I estimate.
DmlEstimate cross_fit(const Dataset& ds, const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                      const FoldSplit& split, Rng& rng, Aggregation how = Aggregation::Mean);

}  // namespace pdml
