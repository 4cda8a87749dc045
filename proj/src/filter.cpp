#include "pdml/filter.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pdml/data.hpp"
#include "pdml/errors.hpp"

namespace pdml {

double compute_rho_n(double c_star, Index s_eta, Index s_gamma, Index p, Index n) {
    if (!(c_star > 0.0) || s_eta < 1 || s_gamma < 1 || p < 1 || n < 1)
        throw ContractError("rho_n: c*, sparsities, p and n must be positive");
    const double se = static_cast<double>(s_eta), sg = static_cast<double>(s_gamma);
    return c_star * (sg + std::sqrt(se * sg)) * std::log(static_cast<double>(p)) /
           static_cast<double>(n);
}

void validate(const FilterRule& rule) {
    if (const auto* q = std::get_if<QuantileRule>(&rule)) {
        if (!(q->pi_star > 0.0 && q->pi_star <= 1.0))
            throw ConfigError("pi* must lie in (0, 1]");
    } else {
        const auto& r = std::get<RadiusRule>(rule);
        if (!(r.c_star > 0.0) || !std::isfinite(r.c_star)) throw ConfigError("c* must be positive");
        if (r.s_eta < 1 || r.s_gamma < 1) throw ConfigError("sparsity levels must be at least 1");
    }
}

namespace {

double parse_real(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = std::string::npos;
    }
    if (used != s.size()) throw ConfigError("invalid number '" + s + "' in filter rule");
    return v;
}

Index parse_count(const std::string& s) {
    const double v = parse_real(s);
    if (v != std::floor(v) || v < 0 || v > 1e15)
        throw ConfigError("invalid count '" + s + "' in filter rule");
    return static_cast<Index>(v);
}

}  // namespace

FilterRule parse_filter(const std::string& text) {
    const auto colon = text.find(':');
    if (colon == std::string::npos)
        throw ConfigError("filter must be quantile:<pi> or radius:<c>,<s_eta>,<s_gamma>");
    const std::string head = text.substr(0, colon), arg = text.substr(colon + 1);
    FilterRule rule;
    if (head == "quantile") {
        rule = QuantileRule{parse_real(arg)};
    } else if (head == "radius") {
        std::vector<std::string> parts;
        std::stringstream ss(arg);
        std::string item;
        while (std::getline(ss, item, ',')) parts.push_back(item);
        if (parts.size() != 3) throw ConfigError("radius filter needs c,s_eta,s_gamma");
        rule = RadiusRule{parse_real(parts[0]), parse_count(parts[1]), parse_count(parts[2])};
    } else {
        throw ConfigError("unknown filter '" + head + "'");
    }
    validate(rule);
    return rule;
}

std::string to_string(const FilterRule& rule) {
    if (const auto* q = std::get_if<QuantileRule>(&rule))
        return "quantile:" + format_double(q->pi_star);
    const auto& r = std::get<RadiusRule>(rule);
    return "radius:" + format_double(r.c_star) + "," + std::to_string(r.s_eta) + "," +
           std::to_string(r.s_gamma);
}

double quantile_threshold(std::vector<double> deviations, double pi_star) {
    if (deviations.empty()) throw ContractError("quantile threshold of an empty sweep");
    if (!(pi_star > 0.0 && pi_star <= 1.0)) throw ConfigError("pi* must lie in (0, 1]");
    const double m = static_cast<double>(deviations.size());
    // The 1e-9 keeps pi*M that is an integer up to rounding on that integer.
    auto rank = static_cast<std::size_t>(std::ceil(pi_star * m - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, deviations.size());
    std::nth_element(deviations.begin(), deviations.begin() + static_cast<long>(rank - 1),
                     deviations.end());
    return deviations[rank - 1];
}

double radius_threshold(const RadiusRule& rule, double se_hat, const FilterScale& scale) {
    return 1.01 * compute_rho_n(rule.c_star, rule.s_eta, rule.s_gamma, scale.p, scale.n) + se_hat;
}

FilterOutcome apply_filter(const std::vector<PerturbationResult>& results, const FilterRule& rule,
                           double se_hat, const FilterScale& scale) {
    if (results.empty()) throw ContractError("apply_filter: no perturbation results");
    validate(rule);
    FilterOutcome out;
    if (const auto* q = std::get_if<QuantileRule>(&rule)) {
        std::vector<double> dev;
        dev.reserve(results.size());
        for (const auto& r : results) dev.push_back(r.deviation);
        out.threshold = quantile_threshold(std::move(dev), q->pi_star);
    } else {
        out.threshold = radius_threshold(std::get<RadiusRule>(rule), se_hat, scale);
    }
    for (std::size_t i = 0; i < results.size(); ++i)
        if (results[i].deviation <= out.threshold) out.retained.push_back(i);
    if (out.retained.empty())
        throw EmptyFilterError("no perturbation lies within the filter radius " +
                               format_double(out.threshold));
    return out;
}

bool ConfidenceSet::contains(double v) const noexcept {
    auto it = std::upper_bound(segments.begin(), segments.end(), v,
                               [](double x, const Interval& s) { return x < s.lo; });
    if (it == segments.begin()) return false;
    return std::prev(it)->contains(v);
}

ConfidenceSet merge_intervals(std::vector<Interval> intervals) {
    if (intervals.empty()) throw ContractError("union of no intervals");
    std::sort(intervals.begin(), intervals.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
    ConfidenceSet cs;
    for (const auto& iv : intervals) {
        if (!cs.segments.empty() && iv.lo <= cs.segments.back().hi)
            cs.segments.back().hi = std::max(cs.segments.back().hi, iv.hi);
        else
            cs.segments.push_back(iv);
    }
    cs.hull = {cs.segments.front().lo, cs.segments.back().hi};
    for (const auto& s : cs.segments) cs.total_measure += s.length();
    return cs;
}

ConfidenceSet union_ci(const std::vector<PerturbationResult>& results,
                       const std::vector<std::size_t>& retained, double alpha) {
    if (retained.empty()) throw ContractError("union_ci: empty retained set");
    std::vector<Interval> ivs;
    ivs.reserve(retained.size());
    ConfidenceSet cs;
    for (std::size_t pos : retained) {
        const auto& r = results.at(pos);
        ivs.push_back(r.ci_m);
        cs.retained.push_back(r.m);
    }
    auto merged = merge_intervals(std::move(ivs));
    cs.segments = std::move(merged.segments);
    cs.hull = merged.hull;
    cs.total_measure = merged.total_measure;
    cs.alpha = alpha;
    return cs;
}

}  // namespace pdml
