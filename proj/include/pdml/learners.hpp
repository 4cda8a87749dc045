#pragma once

#include <cstdint>
#include <memory>
#include <vector>
#include <optional>
#include <string>
#include <variant>

#include "pdml/rng.hpp"
#include "pdml/types.hpp"

namespace pdml {

// How a penalized learner picks its penalty.
struct PenaltyConfig {
    enum class Mode {
        CrossValidated,  // log grid from lambda_max, K-fold CV
        Fixed,           // use `lambda` as given
        Restricted,      // CV over r * lambda for r in 0.1..1.0
    };
    Mode mode = Mode::CrossValidated;
    double lambda = 0.0;
    int n_folds = 5;
    int grid_size = 100;
    double grid_ratio = 1e-3;

    static PenaltyConfig cross_validated() { return {}; }
    static PenaltyConfig fixed(double lambda) { return {Mode::Fixed, lambda}; }
    static PenaltyConfig restricted(double base) { return {Mode::Restricted, base}; }
};

struct OlsSpec {
    bool intercept = true;
};

class LassoDesign;

// Lasso on the quadratic-form objective. With `intercept` the training design
// and response are centered first (unpenalized intercept); the solver itself
// never fits one.
struct LassoSpec {
    PenaltyConfig penalty;
    bool intercept = true;
    // Cached Gram matrix and CV folds of an earlier fit. Used only when the
    // fingerprint matches the design being fitted; otherwise ignored.
    std::shared_ptr<const LassoDesign> reuse;
    // Warm start for the final solve; ignored on a length mismatch.
    std::optional<Vector> warm;
};

// Per-coordinate cubic B-splines with interior knots at empirical quantiles,
// concatenated and fitted by the Lasso.
struct BasisSpec {
    int n_knots = 5;  // interior knots per coordinate; basis size n_knots + 4
    PenaltyConfig penalty;
    std::shared_ptr<const LassoDesign> reuse;
    std::optional<Vector> warm;
};

// Learner running in a subprocess:
//   <command> fit <train.csv> [params]             -> prints a model path
//   <command> predict <model> <covariates.csv>     -> one prediction per line
// train.csv holds `y,x1..xp`, covariates.csv holds `x1..xp`.
struct ExternalSpec {
    std::string command;
    std::string params;
};

using LearnerSpec = std::variant<OlsSpec, LassoSpec, BasisSpec, ExternalSpec>;

std::string learner_name(const LearnerSpec& spec);
// "ols", "ols:nointercept", "lasso", "lasso:<lambda>", "basis", "basis:<knots>",
// "external:<command>". Throws ConfigError.
LearnerSpec parse_learner(const std::string& text);

struct PredictorInfo {
    std::string kind;
    std::optional<double> lambda;  // penalty actually used, if penalized
    Index n_features = 0;
};

// Content hash of a matrix (dimensions and bytes).
std::uint64_t fingerprint(const Matrix& x);

// Fitted, immutable, shareable across threads.
class Predictor {
public:
    virtual ~Predictor() = default;
    // ContractError on a column-count mismatch.
    virtual Vector predict(const Matrix& x) const = 0;
    const PredictorInfo& info() const noexcept { return info_; }

    // Design cache of a penalized fit, for refits on the same rows.
    virtual std::shared_ptr<const LassoDesign> design() const { return nullptr; }
    // Coefficients of the penalized fit, for warm starts.
    virtual std::optional<Vector> coefficients() const { return std::nullopt; }

protected:
    explicit Predictor(PredictorInfo info) : info_(std::move(info)) {}
    void check_columns(const Matrix& x) const;

private:
    PredictorInfo info_;
};

using PredictorPtr = std::shared_ptr<const Predictor>;

// Least-squares fit within the learner family. Deterministic in rng.
// OLS: LearnerError when the design is rank deficient or too short.
PredictorPtr fit_learner(const LearnerSpec& spec, const Matrix& x, const Vector& response,
                         Rng& rng);

inline Vector predict(const Predictor& pred, const Matrix& x) { return pred.predict(x); }

// Linear predictor with known coefficients (used by the linear path and tests).
PredictorPtr make_linear_predictor(Vector coef, double intercept = 0.0,
                                   std::string kind = "linear",
                                   std::optional<double> lambda = std::nullopt);

// Spec for refitting under perturbation. Penalized learners are anchored to the
// unperturbed penalty: a restricted r-grid search, or r * lambda when
// fixed_ratio is given. Other learners are returned unchanged.
LearnerSpec anchored_spec(const LearnerSpec& spec, const Predictor& unperturbed,
                          std::optional<double> fixed_ratio);

// Spec carrying the design cache of `fitted`, for fitting another response on
// the same rows. Non-penalized specs are returned unchanged.
LearnerSpec share_design(const LearnerSpec& spec, const Predictor& fitted);

// Upper bound on concurrently running external learner processes.
void set_external_worker_cap(int cap);

// Cubic B-spline basis for one coordinate.
class BSplineBasis {
public:
    BSplineBasis(const Vector& column, int n_knots);
    int size() const noexcept { return static_cast<int>(knots_.size()) - 4; }
    // Values of every basis function at v (clamped to the training range).
    void evaluate(double v, double* out) const;

private:
    std::vector<double> knots_;  // full knot sequence with 4-fold boundary knots
};

}  // namespace pdml
