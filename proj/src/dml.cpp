#include "pdml/dml.hpp"

#include <algorithm>
#include <cmath>

#include "pdml/errors.hpp"
#include "pdml/normal.hpp"

namespace pdml {

void ResidualPair::validate() const {
    if (eps.size() != delta.size()) throw ContractError("residuals: eps and delta lengths differ");
    if (eps.size() == 0) throw ContractError("residuals: empty");
    if (!fold.empty() && static_cast<Index>(fold.size()) != eps.size())
        throw ContractError("residuals: fold size does not match residual length");
    if (!eps.allFinite() || !delta.allFinite()) throw ContractError("residuals: non-finite entries");
}

namespace {

double checked_denominator(const ResidualPair& r) {
    r.validate();
    const double denom = r.delta.squaredNorm();
    if (!(denom >= 1e-12 * static_cast<double>(r.delta.size())))
        throw DegenerateError("treatment residuals are degenerate (sum of squares " +
                              std::to_string(denom) + ")");
    return denom;
}

}  // namespace

double estimate_beta(const ResidualPair& r) {
    const double denom = checked_denominator(r);
    return r.eps.dot(r.delta) / denom;
}

double standard_error(const ResidualPair& r, double beta_hat) {
    const double denom = checked_denominator(r);
    const auto n = static_cast<double>(r.eps.size());
    const double num =
        ((r.eps - beta_hat * r.delta).array().square() * r.delta.array().square()).sum() / n;
    const double mean_sq = denom / n;
    return std::sqrt(num / (n * mean_sq * mean_sq));
}

Interval wald_ci(double beta_hat, double se, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("wald_ci: alpha must lie in (0, 1)");
    if (!(se >= 0.0)) throw ContractError("wald_ci: se must be >= 0");
    const double half = normal_upper_quantile(alpha / 2.0) * se;
    return {beta_hat - half, beta_hat + half};
}

double aggregate(const std::vector<double>& values, Aggregation how) {
    if (values.empty()) throw ContractError("aggregate: no values");
    if (how == Aggregation::Mean) {
        double s = 0.0;
        for (double v : values) s += v;
        return s / static_cast<double>(values.size());
    }
    std::vector<double> v = values;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double oracle_estimate(const Dataset& ds, const NuisanceFn& true_f, const NuisanceFn& true_g,
                       const std::vector<Index>& eval_fold) {
    ResidualPair r;
    r.eps.resize(static_cast<Index>(eval_fold.size()));
    r.delta.resize(static_cast<Index>(eval_fold.size()));
    for (std::size_t k = 0; k < eval_fold.size(); ++k) {
        const Index i = eval_fold[k];
        const auto row = ds.x().row(i);
        r.eps[static_cast<Index>(k)] = ds.y()[i] - true_g(row);
        r.delta[static_cast<Index>(k)] = ds.d()[i] - true_f(row);
    }
    r.fold = eval_fold;
    return estimate_beta(r);
}

double oracle_estimate(const Dataset& ds, const NuisanceFn& true_f, const NuisanceFn& true_g,
                       const FoldSplit& split, Aggregation how) {
    std::vector<double> est;
    for (std::size_t k = 0; k < split.n_evaluated(); ++k)
        est.push_back(oracle_estimate(ds, true_f, true_g, split.folds[k]));
    return aggregate(est, how);
}

DmlEstimate combine_folds(std::vector<ResidualPair> per_fold, Aggregation how) {
    if (per_fold.empty()) throw ContractError("combine_folds: no folds");
    DmlEstimate out;
    Index total = 0;
    for (const auto& r : per_fold) {
        out.fold_estimates.push_back(estimate_beta(r));
        total += r.eps.size();
    }
    out.beta_hat = aggregate(out.fold_estimates, how);
    if (per_fold.size() == 1) {
        out.residuals = std::move(per_fold.front());
    } else {
        out.residuals.eps.resize(total);
        out.residuals.delta.resize(total);
        Index pos = 0;
        for (auto& r : per_fold) {
            out.residuals.eps.segment(pos, r.eps.size()) = r.eps;
            out.residuals.delta.segment(pos, r.delta.size()) = r.delta;
            out.residuals.fold.insert(out.residuals.fold.end(), r.fold.begin(), r.fold.end());
            pos += r.eps.size();
        }
    }
    out.n_eval = total;
    out.se_hat = standard_error(out.residuals, out.beta_hat);
    return out;
}

DmlEstimate cross_fit(const Dataset& ds, const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                      const FoldSplit& split, Rng& rng, Aggregation how) {
    std::vector<ResidualPair> per_fold;
    for (std::size_t k = 0; k < split.n_evaluated(); ++k) {
        const auto train = split.training(k);
        const auto& eval = split.folds[k];
        const Matrix x_tr = take_rows(ds.x(), train);
        const Matrix x_ev = take_rows(ds.x(), eval);
        const auto g = fit_learner(g_spec, x_tr, take_rows(ds.y(), train), rng);
        const auto f = fit_learner(share_design(f_spec, *g), x_tr, take_rows(ds.d(), train), rng);
        ResidualPair r;
        r.eps = take_rows(ds.y(), eval) - g->predict(x_ev);
        r.delta = take_rows(ds.d(), eval) - f->predict(x_ev);
        r.fold = eval;
        per_fold.push_back(std::move(r));
    }
    return combine_folds(std::move(per_fold), how);
}

}  // namespace pdml
