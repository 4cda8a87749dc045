#pragma once

// Reference computations for tests. Each one is written from the textbook
// definition and shares no code with the library beyond Eigen.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Normal CDF from std::erf.
inline double phi_cdf(double x) { return 0.5 * (1.0 + std::erf(x / std::sqrt(2.0))); }

// Upper quantile by bisection on the CDF.
inline double upper_quantile(double a) {
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 300; ++i) {
        const double mid = 0.5 * (lo + hi);
        (1.0 - phi_cdf(mid) > a ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Proximal gradient (FISTA) for 0.5 u'Gu - u'b + lambda ||u||_1.
inline Vec fista_lasso(const Mat& g, const Vec& b, double lambda, double tol = 1e-13,
                       int max_iter = 2000000) {
    const double step = 1.0 / Eigen::SelfAdjointEigenSolver<Mat>(g).eigenvalues().maxCoeff();
    auto prox = [&](const Vec& v) {
        Vec out(v.size());
        for (Eigen::Index j = 0; j < v.size(); ++j) {
            const double t = step * lambda;
            out(j) = v(j) > t ? v(j) - t : (v(j) < -t ? v(j) + t : 0.0);
        }
        return out;
    };
    Vec u = Vec::Zero(b.size()), y = u;
    double t = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        const Vec next = prox(y - step * (g * y - b));
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = next + ((t - 1.0) / t_next) * (next - u);
        const double change = (next - u).lpNorm<Eigen::Infinity>();
        u = next;
        t = t_next;
        if (change < tol && it > 10) break;
    }
    return u;
}

inline double lasso_objective(const Mat& g, const Vec& b, double lambda, const Vec& u) {
    return 0.5 * u.dot(g * u) - u.dot(b) + lambda * u.lpNorm<1>();
}

struct Moments {
    double mean, var, skew, excess_kurtosis;
};

inline Moments moments(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double m = 0.0;
    for (double x : v) m += x;
    m /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    return {m, m2, m3 / std::pow(m2, 1.5), m4 / (m2 * m2) - 3.0};
}

// Two-sided Kolmogorov-Smirnov statistic against Uniform(0, 1).
inline double ks_uniform(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - v[i]);
        d = std::max(d, v[i] - static_cast<double>(i) / n);
    }
    return d;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ma = moments(a), mb = moments(b);
    double c = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) c += (a[i] - ma.mean) * (b[i] - mb.mean);
    c /= static_cast<double>(a.size());
    return c / std::sqrt(ma.var * mb.var);
}

// Gaussian design with iid N(0, 1) entries from an independent generator.
inline Mat gaussian(Eigen::Index n, Eigen::Index p, std::mt19937& gen) {
    std::normal_distribution<double> z;
    Mat x(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) x(i, j) = z(gen);
    return x;
}

}  // namespace oracle
