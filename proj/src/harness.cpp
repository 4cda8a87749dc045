#include "pdml/harness.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pdml/dml.hpp"
#include "pdml/errors.hpp"
#include "pdml/normal.hpp"

namespace pdml {

void MethodConfig::validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (M > 0 && !(alpha0 > 0.0 && alpha0 < alpha))
        throw ConfigError("alpha0 must lie in (0, alpha)");
    if (split.n_folds() < 2) throw ConfigError("need at least 2 folds");
    if (perturb.fixed_ratio && !(*perturb.fixed_ratio > 0.0))
        throw ConfigError("fixed penalty ratio must be positive");
    if (!(perturb.noise_scale >= 0.0) || !std::isfinite(perturb.noise_scale))
        throw ConfigError("noise scale must be finite and nonnegative");
    pdml::validate(filter);
    if (bias_bound) pdml::validate(FilterRule{*bias_bound});
}

MethodConfig default_method(const SimSetting& setting) {
    MethodConfig m;
    switch (setting.family) {
        case Family::F1:
            m.g_spec = m.f_spec = OlsSpec{};
            break;
        case Family::F2:
            m.g_spec = m.f_spec = LassoSpec{};
            break;
        case Family::F3:
        case Family::F4:
            m.g_spec = m.f_spec = BasisSpec{};
            break;
    }
    m.perturb.fixed_ratio = 1.0;
    return m;
}

double noncentral_chi2_cv(double noncentrality, double alpha) {
    if (!(noncentrality >= 0.0) || !std::isfinite(noncentrality))
        throw ContractError("noncentrality must be finite and nonnegative");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ContractError("alpha must lie in (0, 1)");
    const double b = std::sqrt(noncentrality);
    auto mass = [&](double c) {
        const double r = std::sqrt(c);
        return normal_cdf(r - b) - normal_cdf(-r - b);
    };
    double lo = 0.0;
    double hi = b + normal_upper_quantile(alpha / 2.0) + 1.0;
    hi *= hi;
    while (mass(hi) < 1.0 - alpha) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        (mass(mid) < 1.0 - alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

ObaResult oba_ci(const std::vector<double>& beta_hats, double beta_true, double alpha) {
    if (beta_hats.size() < 2) throw ContractError("OBA interval needs at least 2 replications");
    const auto n = static_cast<double>(beta_hats.size());
    double mean = 0.0;
    for (double b : beta_hats) mean += b;
    mean /= n;
    double ss = 0.0;
    for (double b : beta_hats) ss += (b - mean) * (b - mean);
    ObaResult out;
    out.bias = mean - beta_true;
    out.se_emp = std::sqrt(ss / n);
    if (!(out.se_emp > 0.0)) throw DegenerateError("OBA interval: empirical SE is zero");
    const double ratio = out.bias / out.se_emp;
    out.cv = noncentral_chi2_cv(ratio * ratio, alpha);
    out.half_width = out.se_emp * std::sqrt(out.cv);
    for (double b : beta_hats) out.intervals.push_back({b - out.half_width, b + out.half_width});
    return out;
}

MStar find_mstar(const std::vector<PerturbationResult>& results, double beta_ora) {
    if (results.empty()) throw ContractError("find_mstar: no perturbation results");
    MStar best{results.front().m, results.front().beta_m,
               std::abs(results.front().beta_m - beta_ora)};
    for (const auto& r : results) {
        const double dist = std::abs(r.beta_m - beta_ora);
        if (dist < best.distance || (dist == best.distance && r.m < best.m))
            best = {r.m, r.beta_m, dist};
    }
    return best;
}

Interval ci_bias_bound(double beta_hat, double se_hat, double alpha, double rho_n) {
    if (!(rho_n >= 0.0)) throw ContractError("rho_n must be nonnegative");
    const Interval w = wald_ci(beta_hat, se_hat, alpha);
    return {w.lo - rho_n, w.hi + rho_n};
}

const MethodStats* SimReport::find(const std::string& name) const {
    for (const auto& m : methods)
        if (m.method == name) return &m;
    return nullptr;
}

namespace {

struct Analysis {
    DmlEstimate est;
    std::optional<SweepResult> sweep;
    double jitter = 0.0;
};

Analysis analyse(const Dataset& ds, const FoldSplit& sp, const MethodConfig& method, Rng& fit_rng,
                 std::uint64_t sweep_seed, int workers) {
    const auto ctx =
        method.path == PerturbPath::LinearLasso
            ? PerturbationContext::linear(ds, sp, method.lasso_penalty, method.perturb, fit_rng)
            : PerturbationContext::general(ds, sp, method.g_spec, method.f_spec, method.perturb,
                                           fit_rng);
    Analysis a;
    a.est = ctx.unperturbed();
    a.jitter = ctx.total_jitter();
    if (method.M > 0)
        a.sweep = run_perturbations(ctx, method.M, method.alpha_prime(), sweep_seed, workers);
    return a;
}

// Seeds of the independent streams used within one replication.
enum Stream : std::uint64_t { kData = 0, kSplit = 1, kFit = 2, kSweep = 3 };

std::optional<double> rho_for(const MethodConfig& method, Index p, Index n) {
    if (!method.bias_bound) return std::nullopt;
    const auto& b = *method.bias_bound;
    return compute_rho_n(b.c_star, b.s_eta, b.s_gamma, p, n);
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double rms_dev(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

MethodStats estimate_stats(std::string name, const std::vector<double>& est, double beta_true) {
    MethodStats s;
    s.method = std::move(name);
    s.count = est.size();
    s.abs_bias = std::abs(mean_of(est) - beta_true);
    s.emp_se = rms_dev(est);
    return s;
}

template <class F>
void for_each_rep(std::size_t reps, int workers, F&& body) {
#ifdef _OPENMP
    const auto count = static_cast<long long>(reps);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (long long r = 0; r < count; ++r) body(static_cast<std::size_t>(r));
#else
    (void)workers;
    for (std::size_t r = 0; r < reps; ++r) body(r);
#endif
}

int resolve_workers(int workers) {
#ifdef _OPENMP
    return workers > 0 ? workers : omp_get_max_threads();
#else
    (void)workers;
    return 1;
#endif
}

void check_failures(std::size_t failed, std::size_t reps, const std::string& first) {
    if (static_cast<double>(failed) > 0.1 * static_cast<double>(reps) || failed == reps)
        throw SweepError(std::to_string(failed) + " of " + std::to_string(reps) +
                         " replications failed" + (first.empty() ? "" : "; first: " + first));
}

}  // namespace

RepResult run_replication(const SimSetting& setting, const MethodConfig& method,
                          std::uint64_t seed, int workers, std::size_t rep) {
    setting.validate();
    method.validate();
    RepResult res;
    res.rep = rep;
    res.seed = seed;
    try {
        Rng data_rng = make_stream(seed, kData);
        const SimDraw draw = gen_dataset(setting, data_rng);
        const Dataset& ds = draw.data;
        Rng split_rng = make_stream(seed, kSplit);
        const FoldSplit sp = split(ds.n(), method.split, split_rng);
        Rng fit_rng = make_stream(seed, kFit);
        const Analysis a = analyse(ds, sp, method, fit_rng, derive_seed(seed, kSweep), workers);

        const double beta = setting.beta_true;
        res.beta_hat = a.est.beta_hat;
        res.se_hat = a.est.se_hat;
        res.jitter = a.jitter;
        res.ci_wald = wald_ci(res.beta_hat, res.se_hat, method.alpha);
        res.cover_wald = res.ci_wald.contains(beta);

        const auto& truth = draw.truth;
        res.beta_ora = oracle_estimate(
            ds, [&](RowRef x) { return truth.f(x); }, [&](RowRef x) { return truth.g(x); }, sp,
            method.perturb.aggregation);

        if (auto rho = rho_for(method, ds.p(), ds.n())) {
            res.ci_bias_bound = ci_bias_bound(res.beta_hat, res.se_hat, method.alpha, *rho);
            res.cover_bias_bound = res.ci_bias_bound->contains(beta);
        }
        if (a.sweep) {
            const auto& sw = *a.sweep;
            res.n_perturbations = sw.n_requested;
            res.n_failed_perturbations = sw.n_failed;
            const auto kept = apply_filter(sw.results, method.filter, res.se_hat,
                                           FilterScale{ds.p(), ds.n()});
            res.filter_threshold = kept.threshold;
            res.ci_union = union_ci(sw.results, kept.retained, method.alpha_prime());
            res.cover_union = res.ci_union->contains(beta);
            const auto ms = find_mstar(sw.results, res.beta_ora);
            res.m_star = ms.m;
            res.beta_mstar = ms.beta;
        }
        res.ok = true;
    } catch (const Error& e) {
        res.ok = false;
        res.failure = e.what();
    }
    return res;
}

SimReport run_simulation(const SimSetting& setting, const MethodConfig& method, std::size_t reps,
                         std::uint64_t master_seed, int workers) {
    if (reps < 1) throw ConfigError("reps must be at least 1");
    setting.validate();
    method.validate();
    workers = resolve_workers(workers);
    SimReport rep;
    rep.setting = setting;
    rep.method = method;
    rep.reps_requested = reps;
    rep.master_seed = master_seed;
    rep.replications.resize(reps);
    if (reps > 1 && workers > 1) {
        for_each_rep(reps, workers, [&](std::size_t r) {
            rep.replications[r] =
                run_replication(setting, method, derive_seed(master_seed, r), 1, r);
        });
    } else {
        for (std::size_t r = 0; r < reps; ++r)
            rep.replications[r] =
                run_replication(setting, method, derive_seed(master_seed, r), workers, r);
    }

    std::vector<const RepResult*> ok;
    for (const auto& r : rep.replications) {
        if (r.ok) {
            ok.push_back(&r);
        } else {
            ++rep.reps_failed;
            if (rep.failures.size() < 10)
                rep.failures.push_back("rep " + std::to_string(r.rep) + ": " + r.failure);
        }
    }
    check_failures(rep.reps_failed, reps, rep.failures.empty() ? "" : rep.failures.front());

    const double beta = setting.beta_true;
    const auto frac = [&](auto pred) {
        double c = 0.0;
        for (const auto* r : ok) c += pred(*r) ? 1.0 : 0.0;
        return c / static_cast<double>(ok.size());
    };
    const auto avg = [&](auto get) {
        double s = 0.0;
        for (const auto* r : ok) s += get(*r);
        return s / static_cast<double>(ok.size());
    };
    std::vector<double> beta_hats, oracle, mstar;
    for (const auto* r : ok) {
        beta_hats.push_back(r->beta_hat);
        oracle.push_back(r->beta_ora);
        if (r->ci_union) mstar.push_back(r->beta_mstar);
        rep.perturbation_failures += r->n_failed_perturbations;
        if (r->jitter > 0.0) ++rep.jitter_events;
    }

    MethodStats wald = estimate_stats("wald", beta_hats, beta);
    wald.coverage = frac([](const RepResult& r) { return r.cover_wald; });
    wald.mean_length = avg([](const RepResult& r) { return r.ci_wald.length(); });
    wald.mean_se = avg([](const RepResult& r) { return r.se_hat; });
    rep.methods.push_back(wald);

    if (method.M > 0) {
        MethodStats u;
        u.method = "perturbed";
        u.count = ok.size();
        u.coverage = frac([](const RepResult& r) { return r.cover_union; });
        u.mean_length = avg([](const RepResult& r) { return r.ci_union->hull_length(); });
        rep.methods.push_back(u);
        rep.mean_retained =
            avg([](const RepResult& r) { return static_cast<double>(r.ci_union->retained.size()); });
        rep.mean_union_measure = avg([](const RepResult& r) { return r.ci_union->total_measure; });
        rep.union_hull_coverage = frac([&](const RepResult& r) { return r.ci_union->hull.contains(beta); });
    }

    if (ok.size() >= 2) {
        try {
            ObaResult oba = oba_ci(beta_hats, beta, method.alpha);
            MethodStats o = estimate_stats("oba", beta_hats, beta);
            std::size_t covered = 0;
            for (const auto& iv : oba.intervals) covered += iv.contains(beta) ? 1 : 0;
            o.coverage = static_cast<double>(covered) / static_cast<double>(ok.size());
            o.mean_length = 2.0 * oba.half_width;
            oba.intervals.clear();
            rep.oba = oba;
            rep.methods.push_back(o);
        } catch (const DegenerateError&) {
        }
    }

    if (method.bias_bound) {
        MethodStats b;
        b.method = "bias_bound";
        b.count = ok.size();
        b.coverage = frac([](const RepResult& r) { return r.cover_bias_bound; });
        b.mean_length = avg([](const RepResult& r) { return r.ci_bias_bound->length(); });
        rep.methods.push_back(b);
    }

    rep.methods.push_back(estimate_stats("oracle", oracle, beta));
    if (method.M > 0) rep.methods.push_back(estimate_stats("mstar", mstar, beta));
    return rep;
}

FilterSweepReport run_filter_sweep(const SimSetting& setting, const MethodConfig& method,
                                   const std::vector<double>& c_stars, Index s_eta,
                                   Index s_gamma, std::size_t reps, std::uint64_t master_seed,
                                   int workers) {
    if (reps < 1) throw ConfigError("reps must be at least 1");
    if (c_stars.empty()) throw ConfigError("filter sweep needs at least one c*");
    if (method.M < 1) throw ConfigError("filter sweep needs M >= 1");
    setting.validate();
    method.validate();
    for (double c : c_stars) pdml::validate(FilterRule{RadiusRule{c, s_eta, s_gamma}});
    workers = resolve_workers(workers);

    struct PerRep {
        bool ok = false;
        std::string failure;
        Interval wald;
        std::vector<Interval> bias_bound;
        std::vector<std::optional<ConfidenceSet>> unions;
    };
    std::vector<PerRep> out(reps);
    const double beta = setting.beta_true;
    auto body = [&](std::size_t r, int sweep_workers) {
        PerRep& pr = out[r];
        try {
            const std::uint64_t seed = derive_seed(master_seed, r);
            Rng data_rng = make_stream(seed, kData);
            const SimDraw draw = gen_dataset(setting, data_rng);
            Rng split_rng = make_stream(seed, kSplit);
            const FoldSplit sp = split(draw.data.n(), method.split, split_rng);
            Rng fit_rng = make_stream(seed, kFit);
            const Analysis a =
                analyse(draw.data, sp, method, fit_rng, derive_seed(seed, kSweep), sweep_workers);
            pr.wald = wald_ci(a.est.beta_hat, a.est.se_hat, method.alpha);
            for (double c : c_stars) {
                const double rho = compute_rho_n(c, s_eta, s_gamma, draw.data.p(), draw.data.n());
                pr.bias_bound.push_back(ci_bias_bound(a.est.beta_hat, a.est.se_hat, method.alpha, rho));
                try {
                    const auto kept = apply_filter(a.sweep->results, RadiusRule{c, s_eta, s_gamma},
                                                   a.est.se_hat,
                                                   FilterScale{draw.data.p(), draw.data.n()});
                    pr.unions.push_back(
                        union_ci(a.sweep->results, kept.retained, method.alpha_prime()));
                } catch (const EmptyFilterError&) {
                    pr.unions.push_back(std::nullopt);
                }
            }
            pr.ok = true;
        } catch (const Error& e) {
            pr.failure = e.what();
        }
    };
    if (reps > 1 && workers > 1)
        for_each_rep(reps, workers, [&](std::size_t r) { body(r, 1); });
    else
        for (std::size_t r = 0; r < reps; ++r) body(r, workers);

    FilterSweepReport rep;
    rep.setting = setting;
    rep.method = method;
    rep.s_eta = s_eta;
    rep.s_gamma = s_gamma;
    rep.reps_requested = reps;
    rep.master_seed = master_seed;
    std::string first;
    std::size_t counted = 0;
    for (const auto& pr : out) {
        if (!pr.ok) {
            ++rep.reps_failed;
            if (first.empty()) first = pr.failure;
            continue;
        }
        ++counted;
        rep.coverage_wald += pr.wald.contains(beta) ? 1.0 : 0.0;
        rep.mean_length_wald += pr.wald.length();
    }
    check_failures(rep.reps_failed, reps, first);
    rep.coverage_wald /= static_cast<double>(counted);
    rep.mean_length_wald /= static_cast<double>(counted);

    for (std::size_t c = 0; c < c_stars.size(); ++c) {
        FilterSweepRow row;
        row.c_star = c_stars[c];
        row.rho_n = compute_rho_n(c_stars[c], s_eta, s_gamma, setting.p, setting.n);
        std::size_t nonempty = 0;
        for (const auto& pr : out) {
            if (!pr.ok) continue;
            const Interval& b = pr.bias_bound[c];
            row.coverage_bias_bound += b.contains(beta) ? 1.0 : 0.0;
            row.mean_length_bias_bound += b.length();
            if (const auto& u = pr.unions[c]) {
                ++nonempty;
                row.coverage_union += u->contains(beta) ? 1.0 : 0.0;
                row.mean_length_union += u->hull_length();
                row.mean_retained += static_cast<double>(u->retained.size());
            } else {
                ++row.n_empty;
            }
        }
        const auto cnt = static_cast<double>(counted);
        row.coverage_bias_bound /= cnt;
        row.mean_length_bias_bound /= cnt;
        // An empty filter yields no interval, which cannot cover.
        row.coverage_union /= cnt;
        if (nonempty > 0) {
            row.mean_length_union /= static_cast<double>(nonempty);
            row.mean_retained /= static_cast<double>(nonempty);
        }
        rep.rows.push_back(row);
    }
    return rep;
}

FitResult fit_dataset(const Dataset& ds, const MethodConfig& method, std::uint64_t seed,
                      int workers) {
    method.validate();
    workers = resolve_workers(workers);
    Rng split_rng = make_stream(seed, kSplit);
    const FoldSplit sp = split(ds.n(), method.split, split_rng);
    Rng fit_rng = make_stream(seed, kFit);
    Analysis a = analyse(ds, sp, method, fit_rng, derive_seed(seed, kSweep), workers);
    FitResult out;
    out.beta_hat = a.est.beta_hat;
    out.se_hat = a.est.se_hat;
    out.ci_wald = wald_ci(out.beta_hat, out.se_hat, method.alpha);
    if (auto rho = rho_for(method, ds.p(), ds.n()))
        out.ci_bias_bound = ci_bias_bound(out.beta_hat, out.se_hat, method.alpha, *rho);
    if (a.sweep) {
        out.n_perturbations = a.sweep->n_requested;
        out.n_failed_perturbations = a.sweep->n_failed;
        const auto kept =
            apply_filter(a.sweep->results, method.filter, out.se_hat, FilterScale{ds.p(), ds.n()});
        out.filter_threshold = kept.threshold;
        out.ci_union = union_ci(a.sweep->results, kept.retained, method.alpha_prime());
        out.perturbations = std::move(a.sweep->results);
    }
    return out;
}

}  // namespace pdml
