#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "pdml/data.hpp"
#include "pdml/dml.hpp"
#include "pdml/interval.hpp"
#include "pdml/lasso.hpp"
#include "pdml/learners.hpp"
#include "pdml/rng.hpp"
#include "pdml/types.hpp"

namespace pdml {

enum class ScoreCovariance {
    Heteroscedastic,  // (1/n) sum r_i^2 X_i X_i'
    Homoscedastic,    // mean(r^2) * (1/n) X'X
};

// Gaussian laws of the score noise for the linear path:
//   xi ~ N(0, sigma_hat + nu I),  kappa ~ N(0, lambda_hat + nu' I).
struct ScoreNoiseModel {
    Matrix sigma_hat;
    Matrix lambda_hat;
    double nu = 0.0;
    double nu_prime = 0.0;
    Matrix chol_sigma;   // lower factor of sigma_hat + nu I (+ jitter)
    Matrix chol_lambda;  // lower factor of lambda_hat + nu' I (+ jitter)
    double jitter_sigma = 0.0;
    double jitter_lambda = 0.0;
};

// Residuals y - x eta_hat and d - x gamma_hat on the training rows. The caller
// passes the design the Lasso was solved on (centered when fitted with an
// intercept). DegenerateError when all residuals of either response vanish;
// NumericalError when factorization fails after jitter.
ScoreNoiseModel estimate_score_covariances(const Matrix& x_train, const Vector& y, const Vector& d,
                                           const Vector& eta_hat, const Vector& gamma_hat,
                                           ScoreCovariance kind = ScoreCovariance::Heteroscedastic);

// Lower Cholesky factor of a, adding 1e-8 * trace/p to the diagonal up to
// three times on failure. Returns the factor and the total jitter added.
std::pair<Matrix, double> jittered_cholesky(const Matrix& a);

struct ScoreDraw {
    Vector xi;
    Vector kappa;
};

// xi = chol_sigma z, then kappa = chol_lambda z' with a fresh z'.
ScoreDraw sample_score_noise(const ScoreNoiseModel& model, Rng& rng);

struct LassoPenalties {
    double eta = 0.0;
    double gamma = 0.0;
};

struct LassoPair {
    LassoFit eta;
    LassoFit gamma;
};

// Lasso fits with linear terms (1/n) X'y - xi/sqrt(n) and (1/n) X'd - kappa/sqrt(n).
LassoPair perturbed_lasso_pair(const Matrix& x_train, const Vector& y, const Vector& d,
                               const Vector& xi, const Vector& kappa,
                               const LassoPenalties& penalties, const LassoOptions& opts = {});

// Bivariate residual noise law N(0, pi_hat) for the general path.
struct ResidualNoiseModel {
    Eigen::Matrix2d pi_hat = Eigen::Matrix2d::Zero();
    Eigen::Matrix2d chol = Eigen::Matrix2d::Zero();
    double jitter = 0.0;  // diagonal jitter added before factorizing

    static ResidualNoiseModel zero();
};

// Uncentered second moments of the residuals. DegenerateError when either
// residual vector is identically zero.
ResidualNoiseModel estimate_residual_covariance(const Vector& eps, const Vector& delta);

struct ResidualDraw {
    Vector eps;
    Vector delta;
};

// One (eps_i, delta_i) = chol z_i per row.
ResidualDraw sample_residual_noise(const ResidualNoiseModel& model, Index n, Rng& rng);

struct LearnerPair {
    PredictorPtr g;
    PredictorPtr f;
};

// Refit g on y - eps and f on d - delta.
LearnerPair refit_with_noise(const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                             const Matrix& x_train, const Vector& y, const Vector& d,
                             const Vector& eps, const Vector& delta, Rng& rng);

// Draws residual noise for every training row from the model, then refits.
LearnerPair perturbed_learner_pair(const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                                   const Matrix& x_train, const Vector& y, const Vector& d,
                                   const ResidualNoiseModel& model, Rng& rng);

enum class PerturbPath { LinearLasso, GeneralLearner };

std::string to_string(PerturbPath path);
PerturbPath parse_path(const std::string& text);

struct PerturbOptions {
    // Penalty of perturbed Lasso fits: r * lambda_hat when set, otherwise CV
    // over r in {0.1, ..., 1.0} for every perturbation.
    std::optional<double> fixed_ratio;
    ScoreCovariance covariance = ScoreCovariance::Heteroscedastic;
    // Multiplies every injected draw; 0 turns the sweep into repeated
    // unperturbed fits.
    double noise_scale = 1.0;
    Aggregation aggregation = Aggregation::Mean;
};

struct PerturbationResult {
    std::size_t m = 0;  // 1-based
    double beta_m = 0.0;
    Interval ci_m;
    double deviation = 0.0;        // |beta_m - beta_hat|
    std::vector<double> penalties;  // per evaluated fold: g then f (penalized learners only)
};

// Unperturbed fits plus everything a perturbation needs, per evaluated fold.
// Immutable after construction and shared read-only by sweep workers.
class PerturbationContext {
public:
    // Linear path: Lasso nuisances on the centered training fold; unperturbed
    // penalties chosen by `penalty`.
    static PerturbationContext linear(const Dataset& ds, const FoldSplit& split,
                                      const PenaltyConfig& penalty, const PerturbOptions& opts,
                                      Rng& rng);
    // General path with arbitrary learners; pi_hat on each evaluation fold.
    static PerturbationContext general(const Dataset& ds, const FoldSplit& split,
                                       const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                                       const PerturbOptions& opts, Rng& rng);

    PerturbPath path() const noexcept { return path_; }
    const DmlEstimate& unperturbed() const noexcept { return unperturbed_; }
    const PerturbOptions& options() const noexcept { return opts_; }
    std::size_t n_folds() const noexcept { return folds_.size(); }
    // Penalties of the unperturbed fits (per fold, g then f).
    std::vector<double> unperturbed_penalties() const;
    // Jitter added while factorizing noise covariances, summed over folds.
    double total_jitter() const;

    const ScoreNoiseModel& score_model(std::size_t fold) const;
    const ResidualNoiseModel& residual_model(std::size_t fold) const;

    // Perturbation m with its own stream derived from (master_seed, m).
    PerturbationResult perturb(std::uint64_t master_seed, std::size_t m,
                               double alpha_prime) const;

    struct Fold;

private:
    PerturbationContext() = default;

    PerturbPath path_ = PerturbPath::GeneralLearner;
    PerturbOptions opts_;
    DmlEstimate unperturbed_;
    std::vector<std::shared_ptr<const Fold>> folds_;
};

struct SweepResult {
    std::vector<PerturbationResult> results;  // ordered by m, failures omitted
    std::size_t n_requested = 0;
    std::size_t n_failed = 0;
    std::vector<std::string> failures;  // first few messages
};

// M perturbations, parallel over m. Output does not depend on `workers`.
// SweepError when more than 20% fail.
SweepResult run_perturbations(const PerturbationContext& ctx, std::size_t M, double alpha_prime,
                              std::uint64_t master_seed, int workers = 0);

// Reference implementation: plain loop, no OpenMP.
SweepResult run_perturbations_serial(const PerturbationContext& ctx, std::size_t M,
                                     double alpha_prime, std::uint64_t master_seed);

}  // namespace pdml
