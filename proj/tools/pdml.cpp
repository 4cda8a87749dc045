// pdml: perturbed double machine learning from the command line.
//
//   pdml simulate --setting F2 --n 1000 --p 500 --s 200 --reps 200 --M 100 --out report.json
//   pdml fit --data data.csv --y-col y --d-col d --out ci.json
//   pdml filter-sweep --setting F2 --p 500 --s 140 --c-star 0.01,0.05,0.5,5 --out sweep.json
//
// Every flag can also be given in a TOML file passed with --config; flags on
// the command line win.

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "pdml/errors.hpp"
#include "pdml/harness.hpp"

namespace {

using namespace pdml;

struct SettingFlags {
    std::string family = "F2";
    Index n = 1000;
    Index p = 500;
    Index s = 0;
    double beta = 0.5;
    double noise_sd = 1.0;

    void add(CLI::App* app) {
        app->add_option("--setting", family, "Data-generating family F1|F2|F3|F4")
            ->capture_default_str();
        app->add_option("--n", n, "Total sample size")->capture_default_str();
        app->add_option("--p", p, "Number of covariates")->capture_default_str();
        app->add_option("--s", s, "Sparsity of F2 (default p)");
        app->add_option("--beta", beta, "True beta")->capture_default_str();
        app->add_option("--noise-sd", noise_sd, "Standard deviation of e and delta")
            ->capture_default_str();
    }

    SimSetting build() const {
        SimSetting st;
        st.family = parse_family(family);
        st.n = n;
        st.p = p;
        st.s = st.family == Family::F2 ? (s > 0 ? s : p) : 0;
        st.beta_true = beta;
        st.noise_sd = noise_sd;
        st.validate();
        return st;
    }
};

struct MethodFlags {
    std::string path = "general";
    std::string learner_g, learner_f;
    std::size_t M = 500;
    double pi_star = 0.95;
    std::string filter;
    double alpha = 0.05;
    double alpha0 = 0.01;
    std::optional<double> fixed_penalty;
    bool restricted_cv = false;
    std::string covariance = "heteroscedastic";
    double noise_scale = 1.0;
    int folds = 2;
    bool single_split = false;
    std::string aggregation = "mean";
    std::optional<double> c_star;
    std::optional<Index> s_eta, s_gamma;

    void add(CLI::App* app, bool with_bias_bound) {
        app->add_option("--path", path, "Perturbation path: general|linear")->capture_default_str();
        app->add_option("--learner-g", learner_g,
                        "Learner for E[Y|X]: ols, lasso, lasso:<lambda>, basis[:<knots>], "
                        "external:<command>");
        app->add_option("--learner-f", learner_f, "Learner for E[D|X]");
        app->add_option("--M", M, "Number of perturbations (0: Wald only)")->capture_default_str();
        app->add_option("--pi-star", pi_star, "Quantile filter cutoff")->capture_default_str();
        app->add_option("--filter", filter, "quantile:<pi> or radius:<c>,<s_eta>,<s_gamma>");
        app->add_option("--alpha", alpha, "Significance level")->capture_default_str();
        app->add_option("--alpha0", alpha0, "Level budgeted to the perturbation step")
            ->capture_default_str();
        auto* fp = app->add_option("--fixed-penalty", fixed_penalty,
                                   "Perturbed Lasso fits use r times the unperturbed penalty");
        app->add_flag("--restricted-cv", restricted_cv,
                      "Cross-validate r in {0.1..1} for every perturbation")
            ->excludes(fp);
        app->add_option("--covariance", covariance,
                        "Score covariance on the linear path: heteroscedastic|homoscedastic")
            ->capture_default_str();
        app->add_option("--noise-scale", noise_scale, "Multiplier of the injected noise")
            ->capture_default_str();
        app->add_option("--folds", folds, "Cross-fitting folds")->capture_default_str();
        app->add_flag("--single-split", single_split, "Single split instead of cross-fitting");
        app->add_option("--aggregation", aggregation, "Fold aggregation: mean|median")
            ->capture_default_str();
        if (with_bias_bound) {
            app->add_option("--c-star", c_star, "Enable the bias-bound interval with this c*");
            app->add_option("--s-eta", s_eta, "Sparsity of eta for rho_n (default s or p)");
            app->add_option("--s-gamma", s_gamma, "Sparsity of gamma for rho_n (default s or p)");
        }
    }

    MethodConfig build(const std::optional<SimSetting>& setting, Index p_data) const {
        MethodConfig m = setting ? default_method(*setting) : MethodConfig{};
        m.path = parse_path(path);
        if (!learner_g.empty()) m.g_spec = parse_learner(learner_g);
        if (!learner_f.empty()) m.f_spec = parse_learner(learner_f);
        m.M = M;
        m.filter = filter.empty() ? FilterRule{QuantileRule{pi_star}} : parse_filter(filter);
        m.alpha = alpha;
        m.alpha0 = alpha0;
        if (restricted_cv)
            m.perturb.fixed_ratio.reset();
        else if (fixed_penalty)
            m.perturb.fixed_ratio = *fixed_penalty;
        else
            m.perturb.fixed_ratio =
                m.path == PerturbPath::GeneralLearner ? std::optional<double>(1.0) : std::nullopt;
        if (covariance == "homoscedastic")
            m.perturb.covariance = ScoreCovariance::Homoscedastic;
        else if (covariance != "heteroscedastic")
            throw ConfigError("unknown covariance '" + covariance + "'");
        m.perturb.noise_scale = noise_scale;
        if (aggregation == "median")
            m.perturb.aggregation = Aggregation::Median;
        else if (aggregation != "mean")
            throw ConfigError("unknown aggregation '" + aggregation + "'");
        m.split = single_split ? SplitScheme::single() : SplitScheme::cross_fit(folds);
        const Index s_default = setting && setting->family == Family::F2 ? setting->s : p_data;
        if (c_star)
            m.bias_bound = RadiusRule{*c_star, s_eta.value_or(s_default),
                                      s_gamma.value_or(s_default)};
        m.validate();
        return m;
    }
};

void write_output(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = std::string::npos;
        }
        if (used != item.size()) throw ConfigError("invalid number '" + item + "' in list");
        out.push_back(v);
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Perturbed double machine learning"};
    app.set_config("--config", "", "TOML file with default flag values");
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Monte Carlo coverage study");
    SettingFlags sim_setting;
    MethodFlags sim_method;
    std::size_t reps = 100;
    std::uint64_t seed = 42;
    int workers = 0;
    std::string out_path, format = "json", replay;
    bool timing = false;
    sim_setting.add(sim);
    sim_method.add(sim, true);
    sim->add_option("--reps", reps, "Replications")->capture_default_str();
    sim->add_option("--seed", seed, "Master seed")->capture_default_str();
    sim->add_option("--workers", workers, "Worker threads (0: all)")->capture_default_str();
    sim->add_option("--out", out_path, "Report path (default stdout)");
    sim->add_option("--format", format, "json|csv")->capture_default_str();
    sim->add_option("--replay", replay, "Rerun the configuration echoed in a JSON report");
    sim->add_flag("--timing", timing, "Record the runtime in the report");

    // fit
    auto* fit = app.add_subcommand("fit", "Confidence set for a data file");
    MethodFlags fit_method;
    std::string data_path, y_col = "y", d_col = "d", fit_out;
    std::uint64_t fit_seed = 42;
    int fit_workers = 0;
    fit_method.learner_g = fit_method.learner_f = "lasso";
    fit->add_option("--data", data_path, "CSV with a header row")->required();
    fit->add_option("--y-col", y_col, "Outcome column")->capture_default_str();
    fit->add_option("--d-col", d_col, "Treatment column")->capture_default_str();
    fit_method.add(fit, true);
    fit->add_option("--seed", fit_seed, "Seed")->capture_default_str();
    fit->add_option("--workers", fit_workers, "Worker threads (0: all)")->capture_default_str();
    fit->add_option("--out", fit_out, "Output JSON (default stdout)");

    // filter-sweep
    auto* fs = app.add_subcommand("filter-sweep", "Union and bias-bound intervals across c*");
    SettingFlags fs_setting;
    MethodFlags fs_method;
    std::string c_list = "0.01,0.05,0.5,5", fs_out;
    std::optional<Index> fs_s_eta, fs_s_gamma;
    std::size_t fs_reps = 20;
    std::uint64_t fs_seed = 42;
    int fs_workers = 0;
    fs_setting.s = 140;
    fs_setting.add(fs);
    fs_method.add(fs, false);
    fs->add_option("--c-star", c_list, "Comma-separated c* values")->capture_default_str();
    fs->add_option("--s-eta", fs_s_eta, "Sparsity of eta (default s or p)");
    fs->add_option("--s-gamma", fs_s_gamma, "Sparsity of gamma (default s or p)");
    fs->add_option("--reps", fs_reps, "Replications")->capture_default_str();
    fs->add_option("--seed", fs_seed, "Master seed")->capture_default_str();
    fs->add_option("--workers", fs_workers, "Worker threads (0: all)")->capture_default_str();
    fs->add_option("--out", fs_out, "Output JSON (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) {
            SimSetting st;
            MethodConfig mc;
            if (!replay.empty()) {
                const auto rc = parse_replay(read_text(replay));
                st = rc.setting;
                mc = rc.method;
                reps = rc.reps;
                seed = rc.master_seed;
            } else {
                st = sim_setting.build();
                mc = sim_method.build(st, st.p);
            }
            if (format != "json" && format != "csv")
                throw ConfigError("format must be json or csv");
            const auto t0 = std::chrono::steady_clock::now();
            SimReport report = run_simulation(st, mc, reps, seed, workers);
            if (timing)
                report.runtime_seconds =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            for (const auto& f : report.failures) std::cerr << "warning: " << f << "\n";
            if (report.perturbation_failures > 0)
                std::cerr << "warning: " << report.perturbation_failures
                          << " perturbations failed across replications\n";
            write_output(out_path, format == "json" ? report_json(report) : report_csv(report));
        } else if (*fit) {
            const Dataset ds = load_csv(data_path, y_col, d_col);
            const MethodConfig mc = fit_method.build(std::nullopt, ds.p());
            const FitResult res = fit_dataset(ds, mc, fit_seed, fit_workers);
            if (res.n_failed_perturbations > 0)
                std::cerr << "warning: " << res.n_failed_perturbations << " of "
                          << res.n_perturbations << " perturbations failed\n";
            write_output(fit_out, fit_json(res, mc, fit_seed, ds.n(), ds.p()));
        } else if (*fs) {
            const SimSetting st = fs_setting.build();
            MethodConfig mc = fs_method.build(st, st.p);
            const Index s_default = st.family == Family::F2 ? st.s : st.p;
            const auto report = run_filter_sweep(st, mc, parse_list(c_list),
                                                 fs_s_eta.value_or(s_default),
                                                 fs_s_gamma.value_or(s_default), fs_reps, fs_seed,
                                                 fs_workers);
            write_output(fs_out, filter_sweep_json(report));
        }
    } catch (const pdml::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (dynamic_cast<const pdml::ConfigError*>(&e) || dynamic_cast<const pdml::SchemaError*>(&e) ||
            dynamic_cast<const pdml::ParseError*>(&e))
            return 2;
        return 1;
    }
    return 0;
}
