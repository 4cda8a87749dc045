#include "pdml/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pdml/data.hpp"
#include "pdml/errors.hpp"

namespace pdml {

Matrix gram_matrix(const Matrix& x) {
    const Index p = x.cols();
    Matrix g = Matrix::Zero(p, p);
    g.selfadjointView<Eigen::Lower>().rankUpdate(x.transpose());
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    g /= static_cast<double>(x.rows());
    return g;
}

Vector linear_term(const Matrix& x, const Vector& response) {
    if (x.rows() != response.size())
        throw ContractError("linear_term: response length must equal rows of x");
    return x.transpose() * response / static_cast<double>(x.rows());
}

GramLasso::GramLasso(Matrix gram) : gram_(std::move(gram)) {
    if (gram_.rows() != gram_.cols()) throw ContractError("GramLasso: Gram matrix must be square");
}

double GramLasso::objective(const Vector& u, const Vector& linear, double lambda) const {
    return 0.5 * u.dot(gram_ * u) - u.dot(linear) + lambda * u.lpNorm<1>();
}

namespace {

void check_problem(Index p, const Vector& linear, double lambda, const LassoOptions& opts,
                   const Vector* warm) {
    if (linear.size() != p) throw ContractError("lasso: linear term length must equal p");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ContractError("lasso: lambda must be finite and >= 0");
    if (!(opts.tol > 0.0)) throw ContractError("lasso: tol must be > 0");
    if (opts.max_iter < 1) throw ContractError("lasso: max_iter must be >= 1");
    if (warm && warm->size() != p) throw ContractError("lasso: warm start length must equal p");
}

}  // namespace

LassoFit GramLasso::solve(const Vector& linear, double lambda, const LassoOptions& opts,
                          const Vector* warm, const SweepObserver* observer) const {
    const Index p = dim();
    check_problem(p, linear, lambda, opts, warm);

    Vector u = warm ? *warm : Vector::Zero(p);
    Vector r(p);  // b - G u
    auto refresh = [&] {
        r = linear;
        for (Index j = 0; j < p; ++j)
            if (u[j] != 0.0) r.noalias() -= u[j] * gram_.col(j);
    };

    std::vector<Index> active;
    active.reserve(static_cast<std::size_t>(p));
    double max_change = 0.0;
    auto update = [&](Index j) {
        const double gjj = gram_(j, j);
        if (gjj <= 0.0) return;
        const double old = u[j];
        const double fresh = soft_threshold(r[j] + gjj * old, lambda) / gjj;
        if (fresh != old) {
            const double delta = fresh - old;
            r.noalias() -= delta * gram_.col(j);
            u[j] = fresh;
            max_change = std::max(max_change, std::abs(delta));
        }
    };

    LassoFit fit;
    fit.lambda_used = lambda;
    bool full = true;
    Vector before;  // iterate at the start of the latest full sweep
    while (fit.n_iterations < opts.max_iter) {
        max_change = 0.0;
        if (full) {
            before = u;
            refresh();
            for (Index j = 0; j < p; ++j) update(j);
        } else {
            for (Index j : active) update(j);
        }
        ++fit.n_iterations;
        if (observer) (*observer)(fit.n_iterations, u);
        if (max_change < opts.tol) {
            if (full) {
                // Return the point the confirming sweep started from, so a
                // fit warm-started at a converged solution returns it exactly.
                fit.converged = true;
                u = std::move(before);
                break;
            }
            full = true;
        } else if (full) {
            active.clear();
            for (Index j = 0; j < p; ++j)
                if (u[j] != 0.0) active.push_back(j);
            full = false;
        }
    }
    fit.coef = std::move(u);
    return fit;
}

LassoFit solve_lasso_residual(const Matrix& x, const Vector& response, const Vector& offset,
                              double lambda, const LassoOptions& opts, const Vector* warm) {
    const Index n = x.rows();
    const Index p = x.cols();
    if (response.size() != n) throw ContractError("lasso: response length must equal rows of x");
    check_problem(p, offset, lambda, opts, warm);
    const double inv_n = 1.0 / static_cast<double>(n);
    const Vector col_sq = x.colwise().squaredNorm().transpose() * inv_n;

    Vector u = warm ? *warm : Vector::Zero(p);
    Vector res = response - x * u;
    std::vector<Index> active;
    double max_change = 0.0;
    auto update = [&](Index j) {
        const double gjj = col_sq[j];
        if (gjj <= 0.0) return;
        const double old = u[j];
        const double grad = x.col(j).dot(res) * inv_n - offset[j];
        const double fresh = soft_threshold(grad + gjj * old, lambda) / gjj;
        if (fresh != old) {
            const double delta = fresh - old;
            res.noalias() -= delta * x.col(j);
            u[j] = fresh;
            max_change = std::max(max_change, std::abs(delta));
        }
    };
    LassoFit fit;
    fit.lambda_used = lambda;
    bool full = true;
    Vector before;
    while (fit.n_iterations < opts.max_iter) {
        max_change = 0.0;
        if (full) {
            before = u;
            res = response - x * u;
            for (Index j = 0; j < p; ++j) update(j);
        } else {
            for (Index j : active) update(j);
        }
        ++fit.n_iterations;
        if (max_change < opts.tol) {
            if (full) {
                // Return the point the confirming sweep started from, so a
                // fit warm-started at a converged solution returns it exactly.
                fit.converged = true;
                u = std::move(before);
                break;
            }
            full = true;
        } else if (full) {
            active.clear();
            for (Index j = 0; j < p; ++j)
                if (u[j] != 0.0) active.push_back(j);
            full = false;
        }
    }
    fit.coef = std::move(u);
    return fit;
}

LassoFit fit_lasso(const Matrix& x, const Vector& response, double lambda,
                   const std::optional<Vector>& offset, const LassoOptions& opts) {
    if (x.rows() != response.size())
        throw ContractError("fit_lasso: response length must equal rows of x");
    if (offset && offset->size() != x.cols())
        throw ContractError("fit_lasso: offset length must equal p");
    if (x.cols() > kGramMaxColumns) {
        const Vector zero = Vector::Zero(x.cols());
        return solve_lasso_residual(x, response, offset ? *offset : zero, lambda, opts);
    }
    Vector b = linear_term(x, response);
    if (offset) b -= *offset;
    return GramLasso::from_design(x).solve(b, lambda, opts);
}

double lambda_max(const Vector& linear) { return linear.size() ? linear.lpNorm<Eigen::Infinity>() : 0.0; }

std::vector<double> lambda_grid(double lmax, int count, double ratio) {
    if (count < 1) throw ConfigError("lambda_grid: count must be >= 1");
    if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("lambda_grid: ratio must be in (0, 1)");
    if (!(lmax > 0.0)) throw ConfigError("lambda_grid: lambda_max must be > 0");
    std::vector<double> grid(static_cast<std::size_t>(count));
    if (count == 1) {
        grid[0] = lmax;
        return grid;
    }
    const double step = std::log(ratio) / static_cast<double>(count - 1);
    for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = lmax * std::exp(step * k);
    grid[0] = lmax;
    return grid;
}

Vector lasso_gradient(const Matrix& gram, const Vector& linear, const Vector& u) {
    return gram * u - linear;
}

double kkt_violation(const Matrix& gram, const Vector& linear, const Vector& u, double lambda) {
    const Vector grad = lasso_gradient(gram, linear, u);
    double worst = 0.0;
    for (Index j = 0; j < u.size(); ++j) {
        const double v = (u[j] == 0.0) ? std::max(0.0, std::abs(grad[j]) - lambda)
                                       : std::abs(grad[j] + (u[j] > 0.0 ? lambda : -lambda));
        worst = std::max(worst, v);
    }
    return worst;
}

CvPlan::CvPlan(const Matrix& x, int n_folds, Rng& rng) : x_(x) {
    const Index n = x.rows();
    if (n_folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (n < 2 * static_cast<Index>(n_folds))
        throw ConfigError("cross-validation: " + std::to_string(n) + " rows cannot fill " +
                          std::to_string(n_folds) + " folds of at least 2 rows");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(perm[i], perm[pick(rng)]);
    }
    held_rows_.resize(static_cast<std::size_t>(n_folds));
    for (std::size_t i = 0; i < perm.size(); ++i)
        held_rows_[i % static_cast<std::size_t>(n_folds)].push_back(perm[i]);

    const Matrix full = gram_matrix(x) * static_cast<double>(n);  // X'X
    for (auto& held : held_rows_) {
        std::sort(held.begin(), held.end());
        std::vector<Index> train;
        train.reserve(perm.size() - held.size());
        std::size_t h = 0;
        for (Index i = 0; i < n; ++i) {
            if (h < held.size() && held[h] == i) {
                ++h;
                continue;
            }
            train.push_back(i);
        }
        const auto n_ho = static_cast<double>(held.size());
        const auto n_tr = static_cast<double>(train.size());
        Matrix held_gram = gram_matrix(take_rows(x, held));
        Matrix train_gram = (full - n_ho * held_gram) / n_tr;
        folds_.push_back(Fold{GramLasso(std::move(train_gram)), std::move(held_gram)});
        train_rows_.push_back(std::move(train));
    }
}

CvPlan::Moments CvPlan::moments(const Vector& response) const {
    if (response.size() != x_.rows()) throw ContractError("CvPlan: response length mismatch");
    Moments m;
    for (std::size_t k = 0; k < folds_.size(); ++k) {
        const auto& held = held_rows_[k];
        const auto& train = train_rows_[k];
        const Vector r_ho = take_rows(response, held);
        const Vector r_tr = take_rows(response, train);
        m.train_linear.push_back(linear_term(take_rows(x_, train), r_tr));
        m.held_linear.push_back(linear_term(take_rows(x_, held), r_ho));
        m.held_sq.push_back(r_ho.squaredNorm() / static_cast<double>(held.size()));
    }
    return m;
}

namespace {

void check_grid(std::span<const double> grid) {
    if (grid.empty()) throw ConfigError("lambda grid must be nonempty");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (!(grid[k] >= 0.0)) throw ConfigError("lambda grid values must be >= 0");
        if (k > 0 && !(grid[k] < grid[k - 1]))
            throw ConfigError("lambda grid must be strictly decreasing");
    }
}

double sparse_quadratic(const Matrix& g, const Vector& u) {
    double q = 0.0;
    for (Index j = 0; j < u.size(); ++j) {
        if (u[j] == 0.0) continue;
        double col = 0.0;
        for (Index i = 0; i < u.size(); ++i)
            if (u[i] != 0.0) col += g(i, j) * u[i];
        q += col * u[j];
    }
    return q;
}

}  // namespace

Vector CvPlan::path_loss(const Moments& m, std::span<const double> grid, const Vector* offset,
                         const LassoOptions& opts) const {
    check_grid(grid);
    const Index p = x_.cols();
    if (offset && offset->size() != p) throw ContractError("CvPlan: offset length must equal p");
    const std::size_t k_folds = folds_.size();
    std::vector<Vector> b_tr(k_folds), b_ho(k_folds), warm(k_folds, Vector::Zero(p));
    for (std::size_t k = 0; k < k_folds; ++k) {
        b_tr[k] = m.train_linear[k];
        b_ho[k] = m.held_linear[k];
        if (offset) {
            b_tr[k] -= *offset;
            b_ho[k] -= *offset;
        }
    }
    Vector loss = Vector::Constant(static_cast<Index>(grid.size()),
                                   std::numeric_limits<double>::infinity());
    std::size_t best = 0;
    for (std::size_t l = 0; l < grid.size(); ++l) {
        double total = 0.0;
        for (std::size_t k = 0; k < k_folds; ++k) {
            LassoFit fit = folds_[k].train.solve(b_tr[k], grid[l], opts, &warm[k]);
            warm[k] = std::move(fit.coef);
            total += sparse_quadratic(folds_[k].held_gram, warm[k]) - 2.0 * warm[k].dot(b_ho[k]) +
                     m.held_sq[k];
        }
        loss[static_cast<Index>(l)] = total / static_cast<double>(k_folds);
        if (loss[static_cast<Index>(l)] <= loss[static_cast<Index>(best)]) best = l;
        if (opts.cv_patience > 0 && l - best >= static_cast<std::size_t>(opts.cv_patience)) break;
    }
    return loss;
}

CvResult select_from_curve(std::span<const double> grid, const Vector& curve) {
    if (grid.empty() || static_cast<Index>(grid.size()) != curve.size())
        throw ContractError("select_from_curve: grid and curve sizes differ");
    std::size_t best = 0;
    for (std::size_t l = 1; l < grid.size(); ++l)
        if (curve[static_cast<Index>(l)] <= curve[static_cast<Index>(best)]) best = l;
    // `<=` moves ties towards later entries, which hold the smaller lambdas.
    return CvResult{grid[best], best, curve};
}

CvResult cv_lambda(const CvPlan& plan, const CvPlan::Moments& m, std::span<const double> grid,
                   const Vector* offset, const LassoOptions& opts) {
    return select_from_curve(grid, plan.path_loss(m, grid, offset, opts));
}

CvResult cv_lambda(const Matrix& x, const Vector& response, int n_folds,
                   std::span<const double> grid, Rng& rng, const LassoOptions& opts) {
    check_grid(grid);
    if (x.rows() != response.size()) throw ContractError("cv_lambda: response length mismatch");
    if (x.rows() < n_folds) throw ConfigError("cv_lambda: fewer rows than folds");
    const CvPlan plan(x, n_folds, rng);
    return cv_lambda(plan, plan.moments(response), grid, nullptr, opts);
}

std::vector<double> penalty_ratios() {
    std::vector<double> r;
    for (int k = 10; k >= 1; --k) r.push_back(k / 10.0);
    return r;
}

PenaltySelection select_perturbed_penalty(const CvPlan& plan, const CvPlan::Moments& m,
                                          double lambda_base, const Vector* offset,
                                          const LassoOptions& opts) {
    if (!(lambda_base > 0.0)) throw ConfigError("select_perturbed_penalty: lambda_base must be > 0");
    const auto ratios = penalty_ratios();
    std::vector<double> grid;
    for (double r : ratios) grid.push_back(r * lambda_base);
    const CvResult cv = cv_lambda(plan, m, grid, offset, opts);
    return PenaltySelection{cv.lambda_best, ratios[cv.best_index],
                            static_cast<int>(grid.size()), cv.cv_curve};
}

PenaltySelection select_perturbed_penalty(double lambda_base, const Matrix& x,
                                          const Vector& response, const Vector& offset, Rng& rng,
                                          int n_folds, const LassoOptions& opts) {
    if (x.rows() < n_folds) throw ConfigError("select_perturbed_penalty: fewer rows than folds");
    const CvPlan plan(x, n_folds, rng);
    return select_perturbed_penalty(plan, plan.moments(response), lambda_base, &offset, opts);
}

}  // namespace pdml
