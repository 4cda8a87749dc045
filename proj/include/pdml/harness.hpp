#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pdml/data.hpp"
#include "pdml/datagen.hpp"
#include "pdml/filter.hpp"
#include "pdml/interval.hpp"
#include "pdml/learners.hpp"
#include "pdml/perturb.hpp"

namespace pdml {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kSoftwareVersion = "0.1.0";

// Everything about how one data set is analysed.
struct MethodConfig {
    PerturbPath path = PerturbPath::GeneralLearner;
    LearnerSpec g_spec = LassoSpec{};
    LearnerSpec f_spec = LassoSpec{};
    PenaltyConfig lasso_penalty;  // unperturbed penalty on the linear path
    PerturbOptions perturb;
    std::size_t M = 500;  // 0 skips the perturbation step
    FilterRule filter = QuantileRule{0.95};
    double alpha = 0.05;
    double alpha0 = 0.01;
    SplitScheme split = SplitScheme::cross_fit(2);
    // Parameters of the bias-bound interval; none disables it.
    std::optional<RadiusRule> bias_bound;

    double alpha_prime() const { return alpha - alpha0; }
    // ConfigError on inconsistent values.
    void validate() const;
};

// Learners per family (OLS for F1, Lasso for F2, splines for F3), the general
// path, and the fixed penalty ratio 1 for perturbed refits.
MethodConfig default_method(const SimSetting& setting);

struct RepResult {
    std::size_t rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string failure;

    double beta_hat = 0.0;
    double se_hat = 0.0;
    double beta_ora = 0.0;
    Interval ci_wald;
    std::optional<ConfidenceSet> ci_union;
    std::optional<Interval> ci_bias_bound;
    std::size_t m_star = 0;
    double beta_mstar = 0.0;
    double filter_threshold = 0.0;
    std::size_t n_perturbations = 0;
    std::size_t n_failed_perturbations = 0;
    double jitter = 0.0;

    bool cover_wald = false;
    bool cover_union = false;
    bool cover_bias_bound = false;
};

// Data set, unperturbed DML, sweep, filter, union, benchmarks, oracle and m*
// for one seed. Degenerate data marks the result failed instead of throwing.
RepResult run_replication(const SimSetting& setting, const MethodConfig& method,
                          std::uint64_t seed, int workers = 1, std::size_t rep = 0);

// Solves Phi(sqrt(c) - B) - Phi(-sqrt(c) - B) = 1 - alpha for c, the upper
// alpha critical value of a noncentral chi-square(1) with noncentrality B^2.
double noncentral_chi2_cv(double noncentrality, double alpha);

struct ObaResult {
    double bias = 0.0;      // mean(beta_hat) - beta_true
    double se_emp = 0.0;    // root mean squared deviation (divided by reps)
    double cv = 0.0;
    double half_width = 0.0;
    std::vector<Interval> intervals;  // beta_hat_j -/+ half_width
};

// DegenerateError when the empirical SE is zero; ContractError with < 2 values.
ObaResult oba_ci(const std::vector<double>& beta_hats, double beta_true, double alpha);

struct MStar {
    std::size_t m = 0;
    double beta = 0.0;
    double distance = 0.0;
};

// Argmin over results of |beta_m - beta_ora|; ties go to the smaller m.
MStar find_mstar(const std::vector<PerturbationResult>& results, double beta_ora);

// beta_hat -/+ (z_{alpha/2} se + rho_n).
Interval ci_bias_bound(double beta_hat, double se_hat, double alpha, double rho_n);

struct MethodStats {
    std::string method;
    std::size_t count = 0;
    std::optional<double> coverage;
    std::optional<double> mean_length;
    std::optional<double> abs_bias;
    std::optional<double> emp_se;
    std::optional<double> mean_se;
};

inline const std::vector<std::string>& report_metrics() {
    static const std::vector<std::string> m = {"coverage", "mean_length", "abs_bias", "emp_se",
                                               "mean_se"};
    return m;
}

struct SimReport {
    SimSetting setting;
    MethodConfig method;
    std::size_t reps_requested = 0;
    std::uint64_t master_seed = 0;
    std::size_t reps_failed = 0;
    std::vector<std::string> failures;
    std::vector<MethodStats> methods;
    std::optional<ObaResult> oba;     // intervals omitted from the report
    double mean_retained = 0.0;
    double mean_union_measure = 0.0;
    double union_hull_coverage = 0.0;
    std::size_t perturbation_failures = 0;
    std::size_t jitter_events = 0;
    std::vector<RepResult> replications;
    std::optional<double> runtime_seconds;  // only when timing is requested

    std::size_t reps_counted() const { return reps_requested - reps_failed; }
    const MethodStats* find(const std::string& method) const;
};

// Replications run in parallel (or the sweep, for a single replication).
// Results do not depend on `workers`. SweepError when more than 10% fail.
SimReport run_simulation(const SimSetting& setting, const MethodConfig& method, std::size_t reps,
                         std::uint64_t master_seed, int workers = 1);

enum class ReportFormat { Json, Csv };

std::string report_json(const SimReport& report);
std::string report_csv(const SimReport& report);
void emit_report(const SimReport& report, const std::filesystem::path& path, ReportFormat format);

// Setting, method, reps and seed echoed in a JSON report, for replay.
struct ReplayConfig {
    SimSetting setting;
    MethodConfig method;
    std::size_t reps = 0;
    std::uint64_t master_seed = 0;
};
ReplayConfig parse_replay(const std::string& json_text);

// Radius-filter sweep over c*: one perturbation sweep per replication, then
// every c* filters the same perturbations.
struct FilterSweepRow {
    double c_star = 0.0;
    double rho_n = 0.0;
    double coverage_bias_bound = 0.0;
    double mean_length_bias_bound = 0.0;
    double coverage_union = 0.0;
    double mean_length_union = 0.0;  // hull, over replications with a nonempty filter
    double mean_retained = 0.0;
    std::size_t n_empty = 0;  // replications where the radius kept nothing
};

struct FilterSweepReport {
    SimSetting setting;
    MethodConfig method;
    Index s_eta = 1;
    Index s_gamma = 1;
    std::size_t reps_requested = 0;
    std::size_t reps_failed = 0;
    std::uint64_t master_seed = 0;
    double coverage_wald = 0.0;
    double mean_length_wald = 0.0;
    std::vector<FilterSweepRow> rows;
};

FilterSweepReport run_filter_sweep(const SimSetting& setting, const MethodConfig& method,
                                   const std::vector<double>& c_stars, Index s_eta,
                                   Index s_gamma, std::size_t reps, std::uint64_t master_seed,
                                   int workers = 1);
std::string filter_sweep_json(const FilterSweepReport& report);

// Real-data analysis: unperturbed DML, sweep, filter and union.
struct FitResult {
    double beta_hat = 0.0;
    double se_hat = 0.0;
    Interval ci_wald;
    std::optional<ConfidenceSet> ci_union;
    std::optional<Interval> ci_bias_bound;
    double filter_threshold = 0.0;
    std::size_t n_perturbations = 0;
    std::size_t n_failed_perturbations = 0;
    std::vector<PerturbationResult> perturbations;
};

FitResult fit_dataset(const Dataset& ds, const MethodConfig& method, std::uint64_t seed,
                      int workers = 1);
std::string fit_json(const FitResult& fit, const MethodConfig& method, std::uint64_t seed,
                     Index n, Index p);

}  // namespace pdml
