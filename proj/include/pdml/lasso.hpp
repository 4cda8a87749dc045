#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pdml/rng.hpp"
#include "pdml/types.hpp"

namespace pdml {

// Problems are written in quadratic form
//     minimize  0.5 u'Gu - u'b + lambda ||u||_1
// with G = (1/n) X'X and b = (1/n) X'response - offset. Perturbation only
// changes b, so one Gram matrix serves every perturbed fit.

struct LassoOptions {
    double tol = 1e-7;       // max absolute coefficient change per sweep
    int max_iter = 100000;   // sweeps
    // Cross-validated paths stop once the mean held-out loss has not improved
    // for this many consecutive grid values; 0 evaluates the whole grid.
    int cv_patience = 10;
};

struct LassoFit {
    Vector coef;
    double lambda_used = 0.0;
    int n_iterations = 0;
    bool converged = false;
};

// Called after every sweep with the sweep count and current coefficients.
using SweepObserver = std::function<void(int, const Vector&)>;

inline double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

// (1/n) X'X.
Matrix gram_matrix(const Matrix& x);

class GramLasso {
public:
    explicit GramLasso(Matrix gram);
    static GramLasso from_design(const Matrix& x) { return GramLasso(gram_matrix(x)); }

    Index dim() const noexcept { return gram_.rows(); }
    const Matrix& gram() const noexcept { return gram_; }

    // Cyclic coordinate descent. Full sweeps alternate with sweeps over the
    // current support; convergence is declared only after a full sweep moves
    // no coefficient by tol or more; the point that sweep started from is
    // returned, so warm-starting at a converged fit reproduces it exactly.
    LassoFit solve(const Vector& linear, double lambda, const LassoOptions& opts = {},
                   const Vector* warm = nullptr, const SweepObserver* observer = nullptr) const;

    double objective(const Vector& u, const Vector& linear, double lambda) const;

private:
    Matrix gram_;
};

// Same objective solved on the design directly (residual updates, O(n) per
// coordinate move). Used when p is too large for a p x p Gram matrix.
LassoFit solve_lasso_residual(const Matrix& x, const Vector& response, const Vector& offset,
                              double lambda, const LassoOptions& opts = {},
                              const Vector* warm = nullptr);

// Designs wider than this are solved without a Gram matrix.
inline constexpr Index kGramMaxColumns = 2000;

// (1/n) X'response.
Vector linear_term(const Matrix& x, const Vector& response);

// One-shot fit of the quadratic-form problem; offset defaults to zero.
LassoFit fit_lasso(const Matrix& x, const Vector& response, double lambda,
                   const std::optional<Vector>& offset = std::nullopt,
                   const LassoOptions& opts = {});

// ||linear||_inf: smallest lambda giving the zero solution.
double lambda_max(const Vector& linear);

// `count` log-spaced values from lambda_max down to ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, int count = 100, double ratio = 1e-3);

// Gradient G u - b of the smooth part.
Vector lasso_gradient(const Matrix& gram, const Vector& linear, const Vector& u);

// Largest violation of the Lasso optimality conditions at u.
double kkt_violation(const Matrix& gram, const Vector& linear, const Vector& u, double lambda);

// K-fold partition of a training design with the per-fold Gram matrices
// precomputed. Built once per training sample and reused for every response,
// offset and lambda grid evaluated on it.
class CvPlan {
public:
    CvPlan(const Matrix& x, int n_folds, Rng& rng);

    struct Moments {
        std::vector<Vector> train_linear;  // (1/n_tr) X_tr' r_tr
        std::vector<Vector> held_linear;   // (1/n_ho) X_ho' r_ho
        std::vector<double> held_sq;       // (1/n_ho) ||r_ho||^2
    };
    Moments moments(const Vector& response) const;

    // Held-out loss u'G_ho u - 2u'(b_ho - offset) + (1/n_ho)||r_ho||^2, averaged
    // over folds, for every lambda of a strictly decreasing grid. Fits are
    // warm-started along the grid. With a zero offset this is the mean
    // out-of-fold squared prediction error. Grid values skipped by the
    // patience rule get +inf.
    Vector path_loss(const Moments& m, std::span<const double> grid, const Vector* offset,
                     const LassoOptions& opts = {}) const;

    int n_folds() const noexcept { return static_cast<int>(folds_.size()); }
    const std::vector<std::vector<Index>>& held_out() const noexcept { return held_rows_; }

private:
    struct Fold {
        GramLasso train;
        Matrix held_gram;
    };
    Matrix x_;
    std::vector<Fold> folds_;
    std::vector<std::vector<Index>> held_rows_;
    std::vector<std::vector<Index>> train_rows_;
};

struct CvResult {
    double lambda_best = 0.0;
    std::size_t best_index = 0;
    Vector cv_curve;  // one entry per grid value
};

// Smallest loss over the grid; ties go to the smaller lambda.
CvResult select_from_curve(std::span<const double> grid, const Vector& curve);

// Grid must be nonempty and strictly decreasing; ConfigError when x has
// fewer rows than folds.
CvResult cv_lambda(const Matrix& x, const Vector& response, int n_folds,
                   std::span<const double> grid, Rng& rng, const LassoOptions& opts = {});
CvResult cv_lambda(const CvPlan& plan, const CvPlan::Moments& m, std::span<const double> grid,
                   const Vector* offset = nullptr, const LassoOptions& opts = {});

// Multiples r * lambda_base scanned by the restricted search.
std::vector<double> penalty_ratios();  // 1.0, 0.9, ..., 0.1

struct PenaltySelection {
    double lambda = 0.0;
    double ratio = 0.0;
    int n_evaluations = 0;
    Vector cv_curve;
};

// Cross-validates r * lambda_base over penalty_ratios() on the offset-adjusted
// objective (held-out folds scored against b_ho - offset).
PenaltySelection select_perturbed_penalty(const CvPlan& plan, const CvPlan::Moments& m,
                                          double lambda_base, const Vector* offset,
                                          const LassoOptions& opts = {});
PenaltySelection select_perturbed_penalty(double lambda_base, const Matrix& x,
                                          const Vector& response, const Vector& offset, Rng& rng,
                                          int n_folds = 5, const LassoOptions& opts = {});

}  // namespace pdml
