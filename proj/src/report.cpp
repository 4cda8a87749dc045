#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pdml/errors.hpp"
#include "pdml/harness.hpp"

namespace pdml {

namespace {

using Json = nlohmann::ordered_json;

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json interval_json(const Interval& iv) { return Json::array({iv.lo, iv.hi}); }

Json set_json(const ConfidenceSet& cs) {
    Json segs = Json::array();
    for (const auto& s : cs.segments) segs.push_back(interval_json(s));
    return Json{{"segments", segs},
                {"hull", interval_json(cs.hull)},
                {"total_measure", cs.total_measure},
                {"n_retained", cs.retained.size()}};
}

std::string mode_name(PenaltyConfig::Mode m) {
    switch (m) {
        case PenaltyConfig::Mode::Fixed:
            return "fixed";
        case PenaltyConfig::Mode::Restricted:
            return "restricted";
        case PenaltyConfig::Mode::CrossValidated:
            break;
    }
    return "cv";
}

PenaltyConfig::Mode parse_mode(const std::string& s) {
    if (s == "fixed") return PenaltyConfig::Mode::Fixed;
    if (s == "restricted") return PenaltyConfig::Mode::Restricted;
    if (s == "cv") return PenaltyConfig::Mode::CrossValidated;
    throw ConfigError("unknown penalty mode '" + s + "'");
}

Json setting_json(const SimSetting& s) {
    return Json{{"family", to_string(s.family)}, {"n", s.n},         {"p", s.p},
                {"s", s.s},                      {"beta", s.beta_true}, {"noise_sd", s.noise_sd}};
}

Json method_json(const MethodConfig& m) {
    Json j;
    j["path"] = to_string(m.path);
    j["learner_g"] = learner_name(m.g_spec);
    j["learner_f"] = learner_name(m.f_spec);
    j["lasso_penalty"] = Json{{"mode", mode_name(m.lasso_penalty.mode)},
                              {"lambda", m.lasso_penalty.lambda},
                              {"n_folds", m.lasso_penalty.n_folds},
                              {"grid_size", m.lasso_penalty.grid_size},
                              {"grid_ratio", m.lasso_penalty.grid_ratio}};
    j["fixed_ratio"] = opt(m.perturb.fixed_ratio);
    j["covariance"] =
        m.perturb.covariance == ScoreCovariance::Homoscedastic ? "homoscedastic" : "heteroscedastic";
    j["noise_scale"] = m.perturb.noise_scale;
    j["aggregation"] = m.perturb.aggregation == Aggregation::Median ? "median" : "mean";
    j["M"] = m.M;
    j["filter"] = to_string(m.filter);
    j["alpha"] = m.alpha;
    j["alpha0"] = m.alpha0;
    j["split"] = Json{{"kind", m.split.kind == SplitKind::Single ? "single" : "crossfit"},
                      {"k", m.split.k}};
    if (m.bias_bound)
        j["bias_bound"] = Json{{"c_star", m.bias_bound->c_star},
                               {"s_eta", m.bias_bound->s_eta},
                               {"s_gamma", m.bias_bound->s_gamma}};
    else
        j["bias_bound"] = nullptr;
    return j;
}

SimSetting parse_setting(const Json& j) {
    SimSetting s;
    s.family = parse_family(j.at("family").get<std::string>());
    s.n = j.at("n").get<Index>();
    s.p = j.at("p").get<Index>();
    s.s = j.at("s").get<Index>();
    s.beta_true = j.at("beta").get<double>();
    s.noise_sd = j.at("noise_sd").get<double>();
    return s;
}

MethodConfig parse_method(const Json& j) {
    MethodConfig m;
    m.path = parse_path(j.at("path").get<std::string>());
    m.g_spec = parse_learner(j.at("learner_g").get<std::string>());
    m.f_spec = parse_learner(j.at("learner_f").get<std::string>());
    const Json& lp = j.at("lasso_penalty");
    m.lasso_penalty.mode = parse_mode(lp.at("mode").get<std::string>());
    m.lasso_penalty.lambda = lp.at("lambda").get<double>();
    m.lasso_penalty.n_folds = lp.at("n_folds").get<int>();
    m.lasso_penalty.grid_size = lp.at("grid_size").get<int>();
    m.lasso_penalty.grid_ratio = lp.at("grid_ratio").get<double>();
    if (!j.at("fixed_ratio").is_null()) m.perturb.fixed_ratio = j.at("fixed_ratio").get<double>();
    else m.perturb.fixed_ratio.reset();
    m.perturb.covariance = j.at("covariance").get<std::string>() == "homoscedastic"
                               ? ScoreCovariance::Homoscedastic
                               : ScoreCovariance::Heteroscedastic;
    m.perturb.noise_scale = j.at("noise_scale").get<double>();
    m.perturb.aggregation =
        j.at("aggregation").get<std::string>() == "median" ? Aggregation::Median : Aggregation::Mean;
    m.M = j.at("M").get<std::size_t>();
    m.filter = parse_filter(j.at("filter").get<std::string>());
    m.alpha = j.at("alpha").get<double>();
    m.alpha0 = j.at("alpha0").get<double>();
    const Json& sp = j.at("split");
    const int k = sp.at("k").get<int>();
    m.split = sp.at("kind").get<std::string>() == "single" ? SplitScheme::single()
                                                          : SplitScheme::cross_fit(k);
    if (!j.at("bias_bound").is_null()) {
        const Json& b = j.at("bias_bound");
        m.bias_bound = RadiusRule{b.at("c_star").get<double>(), b.at("s_eta").get<Index>(),
                                  b.at("s_gamma").get<Index>()};
    }
    return m;
}

Json stats_json(const MethodStats& s) {
    return Json{{"method", s.method},         {"count", s.count},
                {"coverage", opt(s.coverage)}, {"mean_length", opt(s.mean_length)},
                {"abs_bias", opt(s.abs_bias)}, {"emp_se", opt(s.emp_se)},
                {"mean_se", opt(s.mean_se)}};
}

Json rep_json(const RepResult& r) {
    Json j{{"rep", r.rep}, {"seed", r.seed}, {"ok", r.ok}};
    if (!r.ok) {
        j["failure"] = r.failure;
        return j;
    }
    j["beta_hat"] = r.beta_hat;
    j["se_hat"] = r.se_hat;
    j["beta_ora"] = r.beta_ora;
    j["ci_wald"] = interval_json(r.ci_wald);
    j["cover_wald"] = r.cover_wald;
    if (r.ci_union) {
        j["ci_union"] = set_json(*r.ci_union);
        j["cover_union"] = r.cover_union;
        j["filter_threshold"] = r.filter_threshold;
        j["m_star"] = r.m_star;
        j["beta_mstar"] = r.beta_mstar;
        j["n_failed_perturbations"] = r.n_failed_perturbations;
    }
    if (r.ci_bias_bound) {
        j["ci_bias_bound"] = interval_json(*r.ci_bias_bound);
        j["cover_bias_bound"] = r.cover_bias_bound;
    }
    if (r.jitter > 0.0) j["jitter"] = r.jitter;
    return j;
}

Json config_echo(const SimSetting& setting, const MethodConfig& method, std::size_t reps,
                 std::uint64_t seed) {
    return Json{{"setting", setting_json(setting)},
                {"method", method_json(method)},
                {"reps", reps},
                {"master_seed", seed}};
}

Json software() { return Json{{"name", "pdml"}, {"version", kSoftwareVersion}}; }

}  // namespace

std::string report_json(const SimReport& r) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["software"] = software();
    j["config"] = config_echo(r.setting, r.method, r.reps_requested, r.master_seed);
    j["summary"] = Json{{"reps_requested", r.reps_requested},
                        {"reps_counted", r.reps_counted()},
                        {"reps_failed", r.reps_failed},
                        {"failures", r.failures},
                        {"perturbation_failures", r.perturbation_failures},
                        {"jitter_events", r.jitter_events},
                        {"mean_retained", r.mean_retained},
                        {"mean_union_measure", r.mean_union_measure},
                        {"union_hull_coverage", r.union_hull_coverage}};
    Json methods = Json::array();
    for (const auto& m : r.methods) methods.push_back(stats_json(m));
    j["methods"] = methods;
    if (r.oba)
        j["oba"] = Json{{"bias", r.oba->bias},
                        {"se_emp", r.oba->se_emp},
                        {"cv", r.oba->cv},
                        {"half_width", r.oba->half_width}};
    else
        j["oba"] = nullptr;
    Json reps = Json::array();
    for (const auto& rr : r.replications) reps.push_back(rep_json(rr));
    j["replications"] = reps;
    if (r.runtime_seconds) j["runtime_seconds"] = *r.runtime_seconds;
    return j.dump(2) + "\n";
}

std::string report_csv(const SimReport& r) {
    std::ostringstream out;
    out << "# schema_version=" << kSchemaVersion << "\n";
    out << "# master_seed=" << r.master_seed << "\n";
    out << "# reps=" << r.reps_requested << " failed=" << r.reps_failed << "\n";
    out << "# config=" << config_echo(r.setting, r.method, r.reps_requested, r.master_seed).dump()
        << "\n";
    out << "method,metric,value\n";
    for (const auto& m : r.methods) {
        const std::optional<double> vals[] = {m.coverage, m.mean_length, m.abs_bias, m.emp_se,
                                              m.mean_se};
        for (std::size_t k = 0; k < report_metrics().size(); ++k) {
            out << m.method << ',' << report_metrics()[k] << ',';
            if (vals[k]) out << format_double(*vals[k]);
            out << '\n';
        }
    }
    return out.str();
}

void emit_report(const SimReport& report, const std::filesystem::path& path, ReportFormat format) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << (format == ReportFormat::Json ? report_json(report) : report_csv(report));
    if (!out) throw IoError("write failed: " + path.string());
}

ReplayConfig parse_replay(const std::string& json_text) {
    Json j;
    try {
        j = Json::parse(json_text);
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("replay: invalid JSON: ") + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion)
            throw ConfigError("replay: unsupported schema_version");
        const Json& c = j.at("config");
        ReplayConfig rc;
        rc.setting = parse_setting(c.at("setting"));
        rc.method = parse_method(c.at("method"));
        rc.reps = c.at("reps").get<std::size_t>();
        rc.master_seed = c.at("master_seed").get<std::uint64_t>();
        return rc;
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("replay: malformed config: ") + e.what());
    }
}

std::string filter_sweep_json(const FilterSweepReport& r) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["software"] = software();
    j["config"] = config_echo(r.setting, r.method, r.reps_requested, r.master_seed);
    j["config"]["s_eta"] = r.s_eta;
    j["config"]["s_gamma"] = r.s_gamma;
    j["summary"] = Json{{"reps_requested", r.reps_requested},
                        {"reps_failed", r.reps_failed},
                        {"coverage_wald", r.coverage_wald},
                        {"mean_length_wald", r.mean_length_wald}};
    Json rows = Json::array();
    for (const auto& row : r.rows)
        rows.push_back(Json{{"c_star", row.c_star},
                            {"rho_n", row.rho_n},
                            {"coverage_bias_bound", row.coverage_bias_bound},
                            {"mean_length_bias_bound", row.mean_length_bias_bound},
                            {"coverage_union", row.coverage_union},
                            {"mean_length_union", row.mean_length_union},
                            {"mean_retained", row.mean_retained},
                            {"n_empty", row.n_empty}});
    j["rows"] = rows;
    return j.dump(2) + "\n";
}

std::string fit_json(const FitResult& fit, const MethodConfig& method, std::uint64_t seed,
                     Index n, Index p) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["software"] = software();
    j["config"] = Json{{"method", method_json(method)}, {"seed", seed}, {"n", n}, {"p", p}};
    j["beta_hat"] = fit.beta_hat;
    j["se_hat"] = fit.se_hat;
    j["ci_wald"] = interval_json(fit.ci_wald);
    j["ci_union"] = fit.ci_union ? set_json(*fit.ci_union) : Json(nullptr);
    j["ci_bias_bound"] = fit.ci_bias_bound ? interval_json(*fit.ci_bias_bound) : Json(nullptr);
    j["filter_threshold"] = fit.filter_threshold;
    j["n_perturbations"] = fit.n_perturbations;
    j["n_failed_perturbations"] = fit.n_failed_perturbations;
    Json per = Json::array();
    for (const auto& r : fit.perturbations)
        per.push_back(Json{{"m", r.m}, {"beta", r.beta_m}, {"deviation", r.deviation}});
    j["perturbations"] = per;
    return j.dump(2) + "\n";
}

}  // namespace pdml
