// Acceptance checks. Usage: pdml_acceptance <criterion> [--cli <path>] [--workers <n>]
// Prints one PASS/FAIL line per criterion and exits nonzero on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "pdml/datagen.hpp"
#include "pdml/dml.hpp"
#include "pdml/filter.hpp"
#include "pdml/harness.hpp"
#include "pdml/lasso.hpp"
#include "pdml/perturb.hpp"
#include "../support.hpp"

using namespace pdml;

namespace {

struct Options {
    std::string cli;
    int workers = 0;
};

class Verdict {
public:
    explicit Verdict(std::string id) : id_(std::move(id)) {}

    void check(bool ok, const std::string& what) {
        ok_ = ok_ && ok;
        detail_ << (detail_.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [miss]");
    }
    bool finish() const {
        std::cout << id_ << (ok_ ? " PASS  " : " FAIL  ") << detail_.str() << std::endl;
        return ok_;
    }

private:
    std::string id_;
    bool ok_ = true;
    std::ostringstream detail_;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << std::fixed << v;
    return s.str();
}

SimSetting f2(Index s) {
    SimSetting st;
    st.family = Family::F2;
    st.n = 1000;
    st.p = 500;
    st.s = s;
    st.beta_true = 0.5;
    return st;
}

double coverage(const SimReport& r, const std::string& m) { return r.find(m)->coverage.value(); }
double length(const SimReport& r, const std::string& m) { return r.find(m)->mean_length.value(); }
double abs_bias(const SimReport& r, const std::string& m) { return r.find(m)->abs_bias.value(); }

void timing(const char* id, std::chrono::steady_clock::time_point t0) {
    const double s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << id << " runtime " << fmt(s, 1) << " s" << std::endl;
}

bool p1(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const SimSetting st = f2(200);
    MethodConfig m = default_method(st);
    m.M = 100;
    m.filter = QuantileRule{0.95};
    m.alpha = 0.05;
    const SimReport r = run_simulation(st, m, 200, 42, o.workers);
    timing("P1", t0);
    Verdict v("P1");
    v.check(r.reps_counted() >= 180, "reps=" + std::to_string(r.reps_counted()));
    v.check(coverage(r, "wald") <= 0.78, "wald_coverage=" + fmt(coverage(r, "wald")) + " (<=0.78)");
    v.check(coverage(r, "perturbed") >= 0.95,
            "union_coverage=" + fmt(coverage(r, "perturbed")) + " (>=0.95)");
    v.check(std::abs(length(r, "wald") - 0.137) <= 0.03,
            "wald_length=" + fmt(length(r, "wald")) + " (0.137+-0.03)");
    v.check(std::abs(length(r, "perturbed") - 0.333) <= 0.08,
            "union_hull_length=" + fmt(length(r, "perturbed")) + " (0.333+-0.08)");
    v.check(std::abs(length(r, "oba") - 0.255) <= 0.06,
            "oba_length=" + fmt(length(r, "oba")) + " (0.255+-0.06)");
    return v.finish();
}

bool p2(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    SimSetting st;
    st.family = Family::F1;
    st.n = 1000;
    st.p = 20;
    const MethodConfig m = default_method(st);
    const SimReport r = run_simulation(st, m, 300, 42, o.workers);
    timing("P2", t0);
    Verdict v("P2");
    const double w = coverage(r, "wald"), u = coverage(r, "perturbed");
    v.check(w >= 0.92 && w <= 0.98, "wald_coverage=" + fmt(w) + " (in [0.92,0.98])");
    v.check(u >= w, "union_coverage=" + fmt(u) + " (>= wald)");
    return v.finish();
}

bool p3(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    std::map<Index, SimReport> r;
    for (Index s : {5, 160}) {
        const SimSetting st = f2(s);
        MethodConfig m = default_method(st);
        m.M = 0;
        r.emplace(s, run_simulation(st, m, 200, 42, o.workers));
    }
    timing("P3", t0);
    Verdict v("P3");
    const double b5 = abs_bias(r.at(5), "wald"), b160 = abs_bias(r.at(160), "wald");
    const double c5 = coverage(r.at(5), "wald"), c160 = coverage(r.at(160), "wald");
    v.check(b160 > b5, "abs_bias s=160 " + fmt(b160) + " > s=5 " + fmt(b5));
    v.check(c160 < c5 - 0.05, "wald_coverage s=160 " + fmt(c160) + " < s=5 " + fmt(c5) + " - 0.05");
    return v.finish();
}

bool p4(const Options&) {
    std::mt19937 gen(4);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> z;
    LassoOptions opts;
    opts.tol = 1e-12;
    double worst_diff = 0.0, worst_kkt = 0.0;
    int converged = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const Matrix x = oracle::gaussian(50, 8, gen);
        Vector beta = Vector::Zero(8);
        beta.head(3) << 1.0, -2.0, 0.5;
        Vector y = x * beta;
        for (Index i = 0; i < 50; ++i) y(i) += z(gen);
        const Vector b = linear_term(x, y);
        // (0, lambda_max]
        const double lambda = (1.0 - unif(gen)) * lambda_max(b);
        const LassoFit fit = fit_lasso(x, y, lambda, std::nullopt, opts);
        const Vector ref = oracle::fista_lasso(gram_matrix(x), b, lambda, 1e-14);
        worst_diff = std::max(worst_diff, (fit.coef - ref).lpNorm<Eigen::Infinity>());
        const Vector grad = gram_matrix(x) * fit.coef - b;
        double kkt = 0.0;
        for (Index j = 0; j < 8; ++j) {
            if (fit.coef(j) == 0.0)
                kkt = std::max(kkt, std::abs(grad(j)) - lambda);
            else
                kkt = std::max(kkt, std::abs(grad(j) + (fit.coef(j) > 0 ? lambda : -lambda)));
        }
        worst_kkt = std::max(worst_kkt, kkt);
        converged += fit.converged ? 1 : 0;
    }
    Verdict v("P4");
    v.check(converged == 100, "converged=" + std::to_string(converged) + "/100");
    v.check(worst_diff <= 1e-6, "max_linf_diff=" + fmt(worst_diff * 1e9, 3) + "e-9 (<=1e-6)");
    v.check(worst_kkt <= 1e-6, "max_kkt=" + fmt(worst_kkt * 1e9, 3) + "e-9 (<=1e-6)");
    return v.finish();
}

bool p5(const Options&) {
    Rng data(5);
    const Matrix x = gen_covariates(500, 10, data);
    const Matrix xc = x.rowwise() - x.colwise().mean();
    // Heteroscedastic residuals so the covariance is not a multiple of X'X.
    Vector r = standard_normal(data, 500);
    r.array() *= (0.5 + xc.col(0).array().abs()).matrix().array();
    const Vector zero = Vector::Zero(10);
    const ScoreNoiseModel model = estimate_score_covariances(xc, r, r, zero, zero);
    const Matrix target = model.sigma_hat + model.nu * Matrix::Identity(10, 10);
    Rng rng(55);
    const int draws = 50000;
    Matrix samples(draws, 10);
    for (int i = 0; i < draws; ++i) samples.row(i) = sample_score_noise(model, rng).xi.transpose();
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Matrix centered = samples.rowwise() - mean;
    const Matrix cov = centered.transpose() * centered / static_cast<double>(draws);
    const double rel = (cov - target).norm() / target.norm();
    double worst_skew = 0.0;
    for (Index j = 0; j < 10; ++j) {
        std::vector<double> col(samples.col(j).data(), samples.col(j).data() + draws);
        worst_skew = std::max(worst_skew, std::abs(oracle::moments(col).skew));
    }
    Verdict v("P5");
    v.check(rel < 0.05, "rel_frobenius=" + fmt(rel) + " (<0.05)");
    v.check(worst_skew < 0.05, "max_abs_skew=" + fmt(worst_skew) + " (<0.05)");
    return v.finish();
}

bool p6(const Options& o) {
    Verdict v("P6");
    int all_kept = 0, monotone = 0, agree = 0;
    const int sweeps = 20;
    const std::size_t M = 100;
    for (int k = 0; k < sweeps; ++k) {
        SimSetting st;
        st.family = Family::F2;
        st.n = 400;
        st.p = 100;
        st.s = 10;
        Rng data = make_stream(600 + k, 0);
        const auto draw = gen_dataset(st, data);
        Rng sr = make_stream(600 + k, 1), fr = make_stream(600 + k, 2);
        const FoldSplit sp = split(st.n, SplitScheme::cross_fit(2), sr);
        PerturbOptions popts;
        popts.fixed_ratio = 1.0;
        const auto ctx =
            PerturbationContext::general(draw.data, sp, LassoSpec{}, LassoSpec{}, popts, fr);
        const auto sweep = run_perturbations(ctx, M, 0.04, 700 + k, o.workers);
        const auto& res = sweep.results;
        const double se = ctx.unperturbed().se_hat;

        if (apply_filter(res, QuantileRule{1.0}, se).retained.size() == res.size()) ++all_kept;

        bool mono = true;
        std::vector<std::size_t> prev;
        for (double pi : {0.85, 0.90, 0.95, 1.0}) {
            const auto kept = apply_filter(res, QuantileRule{pi}, se).retained;
            mono = mono && std::includes(kept.begin(), kept.end(), prev.begin(), prev.end()) &&
                   kept.size() >= prev.size();
            prev = kept;
        }
        monotone += mono ? 1 : 0;

        double max_dev = 0.0;
        for (const auto& r : res) max_dev = std::max(max_dev, r.deviation);
        // Smallest c* whose radius 1.01 rho_n + se exceeds every deviation.
        const FilterScale scale{st.p, st.n};
        const double unit = compute_rho_n(1.0, st.s, st.s, st.p, st.n);
        const double c_star = std::max(1e-6, 2.0 * max_dev / (1.01 * unit));
        const RadiusRule rule{c_star, st.s, st.s};
        const auto radius = apply_filter(res, rule, se, scale);
        const auto quant = apply_filter(res, QuantileRule{1.0}, se);
        const auto ur = union_ci(res, radius.retained), uq = union_ci(res, quant.retained);
        if (radius.threshold > max_dev && radius.retained == quant.retained &&
            ur.segments == uq.segments)
            ++agree;
    }
    v.check(all_kept == sweeps, "pi*=1 keeps all: " + std::to_string(all_kept) + "/20");
    v.check(monotone == sweeps, "monotone in pi*: " + std::to_string(monotone) + "/20");
    v.check(agree == sweeps, "radius == quantile(1): " + std::to_string(agree) + "/20");
    return v.finish();
}

bool p7(const Options& o) {
    Verdict v("P7");
    SimSetting st;
    st.family = Family::F2;
    st.n = 400;
    st.p = 100;
    st.s = 10;
    Rng data(7);
    const auto draw = gen_dataset(st, data);
    for (const PerturbPath path : {PerturbPath::GeneralLearner, PerturbPath::LinearLasso}) {
        Rng sr(71), fr(72);
        const FoldSplit sp = split(st.n, SplitScheme::cross_fit(2), sr);
        PerturbOptions popts;
        popts.noise_scale = 0.0;
        popts.fixed_ratio = 1.0;
        const auto ctx =
            path == PerturbPath::LinearLasso
                ? PerturbationContext::linear(draw.data, sp, PenaltyConfig{}, popts, fr)
                : PerturbationContext::general(draw.data, sp, LassoSpec{}, LassoSpec{}, popts,
                                               fr);
        const double alpha_prime = 0.04;
        const auto sweep = run_perturbations(ctx, 50, alpha_prime, 73, o.workers);
        const double b = ctx.unperturbed().beta_hat;
        std::size_t equal = 0;
        for (const auto& r : sweep.results) equal += (r.beta_m == b) ? 1 : 0;
        const auto kept = apply_filter(sweep.results, QuantileRule{0.95}, ctx.unperturbed().se_hat);
        const auto u = union_ci(sweep.results, kept.retained, alpha_prime);
        const Interval w = wald_ci(b, ctx.unperturbed().se_hat, alpha_prime);
        const double err = std::max(std::abs(u.hull.lo - w.lo), std::abs(u.hull.hi - w.hi));
        const std::string name = to_string(path);
        v.check(sweep.results.size() == 50 && equal == 50,
                name + ": beta_m == beta_hat for " + std::to_string(equal) + "/50");
        v.check(u.segments.size() == 1 && err <= 1e-12,
                name + ": segments=" + std::to_string(u.segments.size()) +
                    " endpoint_err=" + fmt(err * 1e12, 3) + "e-12");
        v.check(u.segments.size() == 1 && u.segments[0].center() == w.center() &&
                    w.center() == b,
                name + ": center bitwise");
    }
    return v.finish();
}

// P((Z + B)^2 <= c) via erf, solved by bisection.
double cv_oracle(double b, double alpha) {
    auto mass = [&](double c) {
        return oracle::phi_cdf(std::sqrt(c) - b) - oracle::phi_cdf(-std::sqrt(c) - b);
    };
    double lo = 0.0, hi = 1.0;
    while (mass(hi) < 1.0 - alpha) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (mass(mid) < 1.0 - alpha ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

bool p8(const Options&) {
    Verdict v("P8");
    const double cv0 = noncentral_chi2_cv(0.0, 0.05);
    v.check(std::abs(cv0 - 3.84146) <= 1e-3, "cv(0)=" + fmt(cv0, 6) + " (3.84146+-1e-3)");
    v.check(std::abs(cv0 - cv_oracle(0.0, 0.05)) <= 1e-6,
            "oracle cv(0)=" + fmt(cv_oracle(0.0, 0.05), 6));
    double prev = -1.0;
    bool mono = true, match = true;
    std::string values;
    for (double b : {0.0, 1.0, 2.0, 5.0}) {
        const double cv = noncentral_chi2_cv(b * b, 0.05);
        mono = mono && cv > prev;
        match = match && std::abs(cv - cv_oracle(b, 0.05)) <= 1e-6 * std::max(1.0, cv);
        values += (values.empty() ? "" : ",") + fmt(cv, 4);
        prev = cv;
    }
    v.check(mono, "monotone over B={0,1,2,5}: " + values);
    v.check(match, "oracle agreement");
    return v.finish();
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool p9(const Options& o) {
    Verdict v("P9");
    if (o.cli.empty()) {
        v.check(false, "no --cli given");
        return v.finish();
    }
    const auto dir = std::filesystem::temp_directory_path() /
                     ("pdml-p9-" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
    std::vector<std::string> outputs;
    for (int w : {1, 4, 8}) {
        const auto out = dir / ("w" + std::to_string(w) + ".json");
        const std::string cmd = "\"" + o.cli +
                                "\" simulate --setting F2 --n 300 --p 80 --s 10 --reps 6 --M 40 "
                                "--seed 9 --workers " +
                                std::to_string(w) + " --out \"" + out.string() + "\"";
        const int rc = std::system(cmd.c_str());
        v.check(rc == 0, "workers=" + std::to_string(w) + " exit " + std::to_string(rc));
        outputs.push_back(slurp(out));
    }
    const bool same = !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
    v.check(same, "byte-identical reports (" + std::to_string(outputs[0].size()) + " bytes)");
    std::filesystem::remove_all(dir);
    return v.finish();
}

bool p10(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const SimSetting st = f2(140);
    MethodConfig m = default_method(st);
    m.M = 200;
    const std::vector<double> cs{0.01, 0.05, 0.5, 5.0};
    const FilterSweepReport r = run_filter_sweep(st, m, cs, 140, 140, 20, 42, o.workers);
    timing("P10", t0);
    Verdict v("P10");
    bool increasing = true;
    std::string b_len, u_len;
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
        if (k > 0)
            increasing = increasing &&
                         r.rows[k].mean_length_bias_bound > r.rows[k - 1].mean_length_bias_bound;
        b_len += (k ? "," : "") + fmt(r.rows[k].mean_length_bias_bound, 3);
        u_len += (k ? "," : "") + fmt(r.rows[k].mean_length_union, 3);
    }
    v.check(increasing, "CI_B lengths " + b_len + " strictly increasing");
    const auto& last = r.rows.back();
    const double ratio = last.mean_length_bias_bound / last.mean_length_union;
    v.check(ratio >= 10.0, "CI_B/union at c*=5: " + fmt(ratio, 2) + " (>=10)");
    bool constant = true;
    int full = 0;
    for (std::size_t k = 0; k < r.rows.size(); ++k) {
        if (r.rows[k].n_empty > 0 || r.rows[k].mean_retained < static_cast<double>(m.M)) continue;
        ++full;
        constant = constant &&
                   std::abs(r.rows[k].mean_length_union - last.mean_length_union) <= 1e-12;
    }
    v.check(full >= 1 && constant, "union lengths " + u_len + " constant over " +
                                       std::to_string(full) + " fully-retained c* values");
    return v.finish();
}

bool f3(const Options& o) {
    const auto t0 = std::chrono::steady_clock::now();
    SimSetting st;
    st.family = Family::F3;
    st.n = 1000;
    st.p = 20;
    const MethodConfig m = default_method(st);
    const SimReport r = run_simulation(st, m, 200, 42, o.workers);
    timing("F3", t0);
    Verdict v("F3");
    const double w = coverage(r, "wald"), u = coverage(r, "perturbed");
    v.check(u >= w, "union_coverage=" + fmt(u) + " >= wald_coverage=" + fmt(w));
    return v.finish();
}

}  // namespace

int main(int argc, char** argv) {
    const std::map<std::string, std::function<bool(const Options&)>> table{
        {"P1", p1}, {"P2", p2}, {"P3", p3}, {"P4", p4}, {"P5", p5}, {"P6", p6},
        {"P7", p7}, {"P8", p8}, {"P9", p9}, {"P10", p10}, {"F3", f3}};
    Options opts;
    std::vector<std::string> ids;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--cli" && i + 1 < argc) {
            opts.cli = argv[++i];
        } else if (a == "--workers" && i + 1 < argc) {
            opts.workers = std::atoi(argv[++i]);
        } else if (a == "all") {
            for (const auto& [k, _] : table) ids.push_back(k);
        } else {
            ids.push_back(a);
        }
    }
    if (ids.empty()) {
        std::cerr << "usage: pdml_acceptance <P1..P10|F3|all> [--cli path] [--workers n]\n";
        return 2;
    }
    bool ok = true;
    for (const auto& id : ids) {
        const auto it = table.find(id);
        if (it == table.end()) {
            std::cerr << "unknown criterion " << id << "\n";
            return 2;
        }
        try {
            ok = it->second(opts) && ok;
        } catch (const std::exception& e) {
            std::cout << id << " FAIL  error: " << e.what() << std::endl;
            ok = false;
        }
    }
    return ok ? 0 : 1;
}
