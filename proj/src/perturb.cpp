#include "pdml/perturb.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pdml/errors.hpp"
#include "pdml/normal.hpp"

namespace pdml {

namespace {

constexpr std::size_t kKeptFailures = 5;

Matrix weighted_gram(const Matrix& x, const Vector& w) {
    // (1/n) sum w_i x_i x_i'
    Matrix xw = x.array().colwise() * w.array().sqrt();
    return gram_matrix(xw);
}

Matrix score_covariance(const Matrix& x, const Vector& r, ScoreCovariance kind) {
    const Vector r2 = r.array().square();
    if (kind == ScoreCovariance::Homoscedastic) return r2.mean() * gram_matrix(x);
    return weighted_gram(x, r2);
}

}  // namespace

std::pair<Matrix, double> jittered_cholesky(const Matrix& a) {
    const Index p = a.rows();
    const double step = 1e-8 * a.trace() / static_cast<double>(p);
    double jitter = 0.0;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        Matrix shifted = a;
        shifted.diagonal().array() += jitter;
        Eigen::LLT<Matrix> llt(shifted);
        if (llt.info() == Eigen::Success) {
            Matrix l = llt.matrixL();
            if (l.allFinite() && (l.diagonal().array() > 0.0).all()) return {std::move(l), jitter};
        }
        jitter += step;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
    std::ostringstream msg;
    msg << "Cholesky factorization failed after jitter " << jitter << " (p = " << p
        << ", trace = " << a.trace() << ", eigenvalues in [" << eig.eigenvalues().minCoeff()
        << ", " << eig.eigenvalues().maxCoeff() << "])";
    throw NumericalError(msg.str());
}

ScoreNoiseModel estimate_score_covariances(const Matrix& x_train, const Vector& y, const Vector& d,
                                           const Vector& eta_hat, const Vector& gamma_hat,
                                           ScoreCovariance kind) {
    const Index n = x_train.rows(), p = x_train.cols();
    if (y.size() != n || d.size() != n)
        throw ContractError("score covariances: response length does not match design rows");
    if (eta_hat.size() != p || gamma_hat.size() != p)
        throw ContractError("score covariances: coefficient length does not match design columns");
    const Vector ry = y - x_train * eta_hat;
    const Vector rd = d - x_train * gamma_hat;
    if ((ry.array() == 0.0).all()) throw DegenerateError("outcome residuals are identically zero");
    if ((rd.array() == 0.0).all()) throw DegenerateError("treatment residuals are identically zero");

    ScoreNoiseModel m;
    m.sigma_hat = score_covariance(x_train, ry, kind);
    m.lambda_hat = score_covariance(x_train, rd, kind);
    m.nu = m.sigma_hat.diagonal().minCoeff();
    m.nu_prime = m.lambda_hat.diagonal().minCoeff();

    Matrix s = m.sigma_hat;
    s.diagonal().array() += m.nu;
    Matrix l = m.lambda_hat;
    l.diagonal().array() += m.nu_prime;
    std::tie(m.chol_sigma, m.jitter_sigma) = jittered_cholesky(s);
    std::tie(m.chol_lambda, m.jitter_lambda) = jittered_cholesky(l);
    return m;
}

ScoreDraw sample_score_noise(const ScoreNoiseModel& model, Rng& rng) {
    ScoreDraw draw;
    draw.xi = model.chol_sigma.triangularView<Eigen::Lower>() *
              standard_normal(rng, model.chol_sigma.rows());
    draw.kappa = model.chol_lambda.triangularView<Eigen::Lower>() *
                 standard_normal(rng, model.chol_lambda.rows());
    return draw;
}

LassoPair perturbed_lasso_pair(const Matrix& x_train, const Vector& y, const Vector& d,
                               const Vector& xi, const Vector& kappa,
                               const LassoPenalties& penalties, const LassoOptions& opts) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(x_train.rows()));
    const Vector oy = scale * xi;
    const Vector od = scale * kappa;
    return {fit_lasso(x_train, y, penalties.eta, oy, opts),
            fit_lasso(x_train, d, penalties.gamma, od, opts)};
}

ResidualNoiseModel ResidualNoiseModel::zero() { return {}; }

ResidualNoiseModel estimate_residual_covariance(const Vector& eps, const Vector& delta) {
    if (eps.size() != delta.size()) throw ContractError("residual covariance: length mismatch");
    if (eps.size() < 2) throw ContractError("residual covariance: need at least 2 residuals");
    const auto n = static_cast<double>(eps.size());
    ResidualNoiseModel m;
    m.pi_hat(0, 0) = eps.squaredNorm() / n;
    m.pi_hat(1, 1) = delta.squaredNorm() / n;
    m.pi_hat(0, 1) = m.pi_hat(1, 0) = eps.dot(delta) / n;
    if (!(m.pi_hat(0, 0) > 0.0) || !(m.pi_hat(1, 1) > 0.0))
        throw DegenerateError("residual covariance: zero-variance residuals");
    auto [l, jitter] = jittered_cholesky(Matrix(m.pi_hat));
    m.chol = l;
    m.jitter = jitter;
    return m;
}

ResidualDraw sample_residual_noise(const ResidualNoiseModel& model, Index n, Rng& rng) {
    ResidualDraw draw;
    draw.eps.resize(n);
    draw.delta.resize(n);
    std::normal_distribution<double> normal;
    const auto& c = model.chol;
    for (Index i = 0; i < n; ++i) {
        const double z1 = normal(rng);
        const double z2 = normal(rng);
        draw.eps(i) = c(0, 0) * z1;
        draw.delta(i) = c(1, 0) * z1 + c(1, 1) * z2;
    }
    return draw;
}

LearnerPair refit_with_noise(const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                             const Matrix& x_train, const Vector& y, const Vector& d,
                             const Vector& eps, const Vector& delta, Rng& rng) {
    if (eps.size() != y.size() || delta.size() != d.size())
        throw ContractError("injected noise length does not match training rows");
    LearnerPair out;
    out.g = fit_learner(g_spec, x_train, y - eps, rng);
    out.f = fit_learner(f_spec, x_train, d - delta, rng);
    return out;
}

LearnerPair perturbed_learner_pair(const LearnerSpec& g_spec, const LearnerSpec& f_spec,
                                   const Matrix& x_train, const Vector& y, const Vector& d,
                                   const ResidualNoiseModel& model, Rng& rng) {
    auto draw = sample_residual_noise(model, x_train.rows(), rng);
    return refit_with_noise(g_spec, f_spec, x_train, y, d, draw.eps, draw.delta, rng);
}

std::string to_string(PerturbPath path) {
    return path == PerturbPath::LinearLasso ? "linear" : "general";
}

PerturbPath parse_path(const std::string& text) {
    if (text == "linear") return PerturbPath::LinearLasso;
    if (text == "general") return PerturbPath::GeneralLearner;
    throw ConfigError("unknown perturbation path '" + text + "' (expected linear or general)");
}

struct PerturbationContext::Fold {
    Matrix x_tr, x_ev;
    Vector y_tr, d_tr, y_ev, d_ev;
    std::vector<Index> eval;
    std::vector<double> penalties;

    // General path.
    LearnerSpec g_spec, f_spec;
    ResidualNoiseModel residual;

    // Linear path, on the centered training fold.
    Eigen::RowVectorXd mean_x;
    double mean_y = 0.0, mean_d = 0.0;
    std::optional<GramLasso> gram;
    std::shared_ptr<const CvPlan> plan;
    CvPlan::Moments moments_y, moments_d;
    Vector by, bd;
    Vector eta, gamma;
    double lambda_eta = 0.0, lambda_gamma = 0.0;
    ScoreNoiseModel score;
};

namespace {

double fold_beta(const PerturbationContext::Fold& f, const Vector& pred_g, const Vector& pred_f) {
    ResidualPair r;
    r.eps = f.y_ev - pred_g;
    r.delta = f.d_ev - pred_f;
    return estimate_beta(r);
}

void load_rows(PerturbationContext::Fold& f, const Dataset& ds, const FoldSplit& split,
               std::size_t k) {
    const auto train = split.training(k);
    f.eval = split.folds[k];
    f.x_tr = take_rows(ds.x(), train);
    f.y_tr = take_rows(ds.y(), train);
    f.d_tr = take_rows(ds.d(), train);
    f.x_ev = take_rows(ds.x(), f.eval);
    f.y_ev = take_rows(ds.y(), f.eval);
    f.d_ev = take_rows(ds.d(), f.eval);
}

double choose_lambda(const PenaltyConfig& pen, const CvPlan& plan, const CvPlan::Moments& m,
                     const Vector& b) {
    switch (pen.mode) {
        case PenaltyConfig::Mode::Fixed:
            return pen.lambda;
        case PenaltyConfig::Mode::Restricted:
            return select_perturbed_penalty(plan, m, pen.lambda, nullptr).lambda;
        case PenaltyConfig::Mode::CrossValidated:
            break;
    }
    const double lmax = lambda_max(b);
    if (lmax <= 0.0) return 0.0;
    return cv_lambda(plan, m, lambda_grid(lmax, pen.grid_size, pen.grid_ratio)).lambda_best;
}

}  // namespace

PerturbationContext PerturbationContext::linear(const Dataset& ds, const FoldSplit& split,
                                                const PenaltyConfig& penalty,
                                                const PerturbOptions& opts, Rng& rng) {
    if (ds.p() > kGramMaxColumns)
        throw ConfigError("linear perturbation path supports at most " +
                          std::to_string(kGramMaxColumns) + " covariates");
    PerturbationContext ctx;
    ctx.path_ = PerturbPath::LinearLasso;
    ctx.opts_ = opts;
    std::vector<ResidualPair> per_fold;
    for (std::size_t k = 0; k < split.n_evaluated(); ++k) {
        auto f = std::make_shared<Fold>();
        load_rows(*f, ds, split, k);
        f->mean_x = f->x_tr.colwise().mean();
        f->mean_y = f->y_tr.mean();
        f->mean_d = f->d_tr.mean();
        const Matrix xc = f->x_tr.rowwise() - f->mean_x;
        const Vector yc = f->y_tr.array() - f->mean_y;
        const Vector dc = f->d_tr.array() - f->mean_d;
        f->gram.emplace(GramLasso::from_design(xc));
        f->by = linear_term(xc, yc);
        f->bd = linear_term(xc, dc);
        if (penalty.mode != PenaltyConfig::Mode::Fixed || !opts.fixed_ratio) {
            f->plan = std::make_shared<const CvPlan>(xc, penalty.n_folds, rng);
            f->moments_y = f->plan->moments(yc);
            f->moments_d = f->plan->moments(dc);
        }
        f->lambda_eta = f->plan ? choose_lambda(penalty, *f->plan, f->moments_y, f->by)
                                : penalty.lambda;
        f->lambda_gamma = f->plan ? choose_lambda(penalty, *f->plan, f->moments_d, f->bd)
                                  : penalty.lambda;
        f->eta = f->gram->solve(f->by, f->lambda_eta).coef;
        f->gamma = f->gram->solve(f->bd, f->lambda_gamma).coef;
        f->penalties = {f->lambda_eta, f->lambda_gamma};
        f->score = estimate_score_covariances(xc, yc, dc, f->eta, f->gamma, opts.covariance);

        ResidualPair r;
        const Matrix xev = f->x_ev.rowwise() - f->mean_x;
        r.eps = (f->y_ev - xev * f->eta).array() - f->mean_y;
        r.delta = (f->d_ev - xev * f->gamma).array() - f->mean_d;
        r.fold = f->eval;
        per_fold.push_back(std::move(r));
        ctx.folds_.push_back(std::move(f));
    }
    ctx.unperturbed_ = combine_folds(std::move(per_fold), opts.aggregation);
    return ctx;
}

PerturbationContext PerturbationContext::general(const Dataset& ds, const FoldSplit& split,
                                                 const LearnerSpec& g_spec,
                                                 const LearnerSpec& f_spec,
                                                 const PerturbOptions& opts, Rng& rng) {
    PerturbationContext ctx;
    ctx.path_ = PerturbPath::GeneralLearner;
    ctx.opts_ = opts;
    std::vector<ResidualPair> per_fold;
    for (std::size_t k = 0; k < split.n_evaluated(); ++k) {
        auto f = std::make_shared<Fold>();
        load_rows(*f, ds, split, k);
        const auto g_hat = fit_learner(g_spec, f->x_tr, f->y_tr, rng);
        const auto f_hat = fit_learner(share_design(f_spec, *g_hat), f->x_tr, f->d_tr, rng);
        f->g_spec = anchored_spec(g_spec, *g_hat, opts.fixed_ratio);
        f->f_spec = anchored_spec(f_spec, *f_hat, opts.fixed_ratio);
        for (const auto* pred : {g_hat.get(), f_hat.get()})
            if (pred->info().lambda) f->penalties.push_back(*pred->info().lambda);

        ResidualPair r;
        r.eps = f->y_ev - g_hat->predict(f->x_ev);
        r.delta = f->d_ev - f_hat->predict(f->x_ev);
        r.fold = f->eval;
        f->residual = estimate_residual_covariance(r.eps, r.delta);
        per_fold.push_back(std::move(r));
        ctx.folds_.push_back(std::move(f));
    }
    ctx.unperturbed_ = combine_folds(std::move(per_fold), opts.aggregation);
    return ctx;
}

std::vector<double> PerturbationContext::unperturbed_penalties() const {
    std::vector<double> out;
    for (const auto& f : folds_) out.insert(out.end(), f->penalties.begin(), f->penalties.end());
    return out;
}

double PerturbationContext::total_jitter() const {
    double j = 0.0;
    for (const auto& f : folds_) {
        if (path_ == PerturbPath::LinearLasso)
            j += f->score.jitter_sigma + f->score.jitter_lambda;
        else
            j += f->residual.jitter;
    }
    return j;
}

const ScoreNoiseModel& PerturbationContext::score_model(std::size_t fold) const {
    if (path_ != PerturbPath::LinearLasso) throw ContractError("no score model on the general path");
    return folds_.at(fold)->score;
}

const ResidualNoiseModel& PerturbationContext::residual_model(std::size_t fold) const {
    if (path_ != PerturbPath::GeneralLearner)
        throw ContractError("no residual model on the linear path");
    return folds_.at(fold)->residual;
}

PerturbationResult PerturbationContext::perturb(std::uint64_t master_seed, std::size_t m,
                                                double alpha_prime) const {
    Rng rng = make_stream(master_seed, m);
    const double scale = opts_.noise_scale;
    PerturbationResult res;
    res.m = m;
    std::vector<double> betas;
    for (const auto& fp : folds_) {
        const Fold& f = *fp;
        if (path_ == PerturbPath::LinearLasso) {
            auto draw = sample_score_noise(f.score, rng);
            const double root_n = std::sqrt(static_cast<double>(f.x_tr.rows()));
            const Vector oy = (scale / root_n) * draw.xi;
            const Vector od = (scale / root_n) * draw.kappa;
            double ly = f.lambda_eta, ld = f.lambda_gamma;
            if (opts_.fixed_ratio) {
                ly *= *opts_.fixed_ratio;
                ld *= *opts_.fixed_ratio;
            } else {
                if (ly > 0.0) ly = select_perturbed_penalty(*f.plan, f.moments_y, ly, &oy).lambda;
                if (ld > 0.0) ld = select_perturbed_penalty(*f.plan, f.moments_d, ld, &od).lambda;
            }
            const Vector eta = f.gram->solve(f.by - oy, ly, {}, &f.eta).coef;
            const Vector gamma = f.gram->solve(f.bd - od, ld, {}, &f.gamma).coef;
            const Matrix xc = f.x_ev.rowwise() - f.mean_x;
            Vector pg = xc * eta;
            pg.array() += f.mean_y;
            Vector pf = xc * gamma;
            pf.array() += f.mean_d;
            betas.push_back(fold_beta(f, pg, pf));
            res.penalties.push_back(ly);
            res.penalties.push_back(ld);
        } else {
            auto draw = sample_residual_noise(f.residual, f.x_tr.rows(), rng);
            draw.eps *= scale;
            draw.delta *= scale;
            auto pair = refit_with_noise(f.g_spec, f.f_spec, f.x_tr, f.y_tr, f.d_tr, draw.eps,
                                         draw.delta, rng);
            betas.push_back(fold_beta(f, pair.g->predict(f.x_ev), pair.f->predict(f.x_ev)));
            for (const auto* pred : {pair.g.get(), pair.f.get()})
                if (pred->info().lambda) res.penalties.push_back(*pred->info().lambda);
        }
    }
    res.beta_m = aggregate(betas, opts_.aggregation);
    res.ci_m = wald_ci(res.beta_m, unperturbed_.se_hat, alpha_prime);
    res.deviation = std::abs(res.beta_m - unperturbed_.beta_hat);
    return res;
}

namespace {

SweepResult assemble(std::vector<std::optional<PerturbationResult>>& slots,
                     std::vector<std::string>& errors) {
    SweepResult out;
    out.n_requested = slots.size();
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (slots[i]) {
            out.results.push_back(std::move(*slots[i]));
        } else {
            ++out.n_failed;
            if (out.failures.size() < kKeptFailures)
                out.failures.push_back("perturbation " + std::to_string(i + 1) + ": " + errors[i]);
        }
    }
    if (static_cast<double>(out.n_failed) > 0.2 * static_cast<double>(out.n_requested)) {
        std::string msg = std::to_string(out.n_failed) + " of " +
                          std::to_string(out.n_requested) + " perturbations failed";
        if (!out.failures.empty()) msg += "; first: " + out.failures.front();
        throw SweepError(msg);
    }
    return out;
}

void run_one(const PerturbationContext& ctx, std::size_t i, double alpha_prime,
             std::uint64_t seed, std::vector<std::optional<PerturbationResult>>& slots,
             std::vector<std::string>& errors) {
    try {
        slots[i] = ctx.perturb(seed, i + 1, alpha_prime);
    } catch (const Error& e) {
        errors[i] = e.what();
    }
}

void check_sweep_args(std::size_t M, double alpha_prime) {
    if (M < 1) throw ConfigError("number of perturbations must be at least 1");
    if (!(alpha_prime > 0.0 && alpha_prime < 1.0))
        throw ConfigError("perturbed interval level must lie in (0, 1); check alpha and alpha0");
}

}  // namespace

SweepResult run_perturbations(const PerturbationContext& ctx, std::size_t M, double alpha_prime,
                              std::uint64_t master_seed, int workers) {
    check_sweep_args(M, alpha_prime);
    std::vector<std::optional<PerturbationResult>> slots(M);
    std::vector<std::string> errors(M);
#ifdef _OPENMP
    const int threads = workers > 0 ? workers : omp_get_max_threads();
    const auto count = static_cast<long long>(M);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
    for (long long i = 0; i < count; ++i)
        run_one(ctx, static_cast<std::size_t>(i), alpha_prime, master_seed, slots, errors);
#else
    (void)workers;
    for (std::size_t i = 0; i < M; ++i) run_one(ctx, i, alpha_prime, master_seed, slots, errors);
#endif
    return assemble(slots, errors);
}

SweepResult run_perturbations_serial(const PerturbationContext& ctx, std::size_t M,
                                     double alpha_prime, std::uint64_t master_seed) {
    check_sweep_args(M, alpha_prime);
    std::vector<std::optional<PerturbationResult>> slots(M);
    std::vector<std::string> errors(M);
    for (std::size_t i = 0; i < M; ++i) run_one(ctx, i, alpha_prime, master_seed, slots, errors);
    return assemble(slots, errors);
}

}  // namespace pdml
