#pragma once

#include <string>
#include <variant>
#include <vector>

#include "pdml/interval.hpp"
#include "pdml/perturb.hpp"
#include "pdml/types.hpp"

namespace pdml {

// c* (s_gamma + sqrt(s_eta s_gamma)) ln(p) / n. ContractError unless every
// argument is positive.
double compute_rho_n(double c_star, Index s_eta, Index s_gamma, Index p, Index n);

// Keep perturbations whose deviation is at most the order statistic of rank
// ceil(pi_star * M).
struct QuantileRule {
    double pi_star = 0.95;
};

// Keep perturbations with deviation <= 1.01 rho_n + se_hat.
struct RadiusRule {
    double c_star = 0.0;
    Index s_eta = 1;
    Index s_gamma = 1;
};

using FilterRule = std::variant<QuantileRule, RadiusRule>;

// ConfigError on out-of-range parameters.
void validate(const FilterRule& rule);
// "quantile:<pi>" or "radius:<c>,<s_eta>,<s_gamma>".
FilterRule parse_filter(const std::string& text);
std::string to_string(const FilterRule& rule);

// Dimensions entering rho_n.
struct FilterScale {
    Index p = 1;
    Index n = 1;
};

// Deviation threshold of a quantile rule: sorted deviations at rank ceil(pi*M).
double quantile_threshold(std::vector<double> deviations, double pi_star);

// Filter radius of a radius rule.
double radius_threshold(const RadiusRule& rule, double se_hat, const FilterScale& scale);

struct FilterOutcome {
    std::vector<std::size_t> retained;  // positions into `results`, ascending
    double threshold = 0.0;
};

// Quantile rules always retain at least ceil(pi*M) results; a radius rule that
// retains nothing raises EmptyFilterError.
FilterOutcome apply_filter(const std::vector<PerturbationResult>& results, const FilterRule& rule,
                           double se_hat, const FilterScale& scale = {});

// Union of closed intervals as sorted disjoint segments.
struct ConfidenceSet {
    std::vector<Interval> segments;
    Interval hull;
    double total_measure = 0.0;
    std::vector<std::size_t> retained;  // perturbation indices m
    double alpha = 0.0;

    bool contains(double v) const noexcept;
    double hull_length() const noexcept { return hull.length(); }
};

// Overlapping or touching intervals are merged. ContractError when empty.
ConfidenceSet merge_intervals(std::vector<Interval> intervals);

// Union of CI^[m] over the retained positions.
ConfidenceSet union_ci(const std::vector<PerturbationResult>& results,
                       const std::vector<std::size_t>& retained, double alpha = 0.0);

}  // namespace pdml
