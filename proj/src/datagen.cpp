#include "pdml/datagen.hpp"

#include <cmath>

#include "pdml/errors.hpp"
#include "pdml/normal.hpp"

namespace pdml {

std::string to_string(Family f) {
    switch (f) {
        case Family::F1: return "F1";
        case Family::F2: return "F2";
        case Family::F3: return "F3";
        case Family::F4: return "F4";
    }
    return "?";
}

Family parse_family(const std::string& s) {
    if (s == "F1" || s == "f1") return Family::F1;
    if (s == "F2" || s == "f2") return Family::F2;
    if (s == "F3" || s == "f3") return Family::F3;
    if (s == "F4" || s == "f4") return Family::F4;
    throw ConfigError("unknown setting '" + s + "' (expected F1, F2, F3 or F4)");
}

void SimSetting::validate() const {
    if (p < 1) throw ConfigError("setting: p must be >= 1");
    if (n < 4) throw ConfigError("setting: n must be >= 4");
    if (family == Family::F2 && (s < 1 || s > p))
        throw ConfigError("setting: F2 needs 1 <= s <= p");
    if (!std::isfinite(beta_true)) throw ConfigError("setting: beta must be finite");
    if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
        throw ConfigError("setting: noise_sd must be finite and >= 0");
}

int cyclic_index(int k) {
    const int r = ((k % 6) + 6) % 6;
    return r == 0 ? 6 : r;
}

double library_fn(int k, double z) {
    switch (k) {
        case 1: return 1.5 * std::sin(z);
        case 2: return 2.0 * std::exp(-0.5 * z);
        case 3: return (z - 1.0) * (z - 1.0) - 25.0 / 12.0;
        case 4: return z - 1.0 / 3.0;
        case 5: return 0.75 * z;
        case 6: return 0.5 * z;
        default: throw ContractError("library_fn: index must be in 1..6");
    }
}

Matrix copula_covariance(Index p) {
    Matrix a(p, p);
    for (Index k = 0; k < p; ++k)
        for (Index l = 0; l < p; ++l)
            a(k, l) = std::pow(0.5, static_cast<double>(k > l ? k - l : l - k));
    return a;
}

Matrix gen_covariates(Index n, Index p, Rng& rng) {
    if (n < 1 || p < 1) throw ContractError("gen_covariates: n and p must be >= 1");
    const Eigen::LLT<Matrix> llt(copula_covariance(p));
    const Matrix lower = llt.matrixL();
    Matrix z(n, p);
    // Row-wise draws so row i depends only on the i-th block of the stream.
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) z(i, j) = normal(rng);
    Matrix w = z * lower.transpose();
    return w.unaryExpr([](double v) { return normal_cdf(v); });
}

NonlinearValue eval_nonlinear(const SimSetting& setting, RowRef x) {
    if (setting.is_linear()) throw ContractError("eval_nonlinear: setting must be F3 or F4");
    if (x.size() != setting.p) throw ContractError("eval_nonlinear: row length must equal p");
    const Index p = x.size();
    NonlinearValue out{0.0, 0.0};
    for (Index j = 0; j < p; ++j) {
        const int one_based = static_cast<int>(j + 1);
        out.f += library_fn(cyclic_index(one_based), x[j]);
        out.h += library_fn(cyclic_index(one_based + 2), x[j]);
    }
    if (setting.family == Family::F4) {
        for (Index j = 0; j + 1 < p; ++j) out.f += x[j] * x[j + 1];
        for (Index j = 0; j + 2 < p; ++j) out.h += x[j] * x[j + 1] * x[j + 2];
    }
    return out;
}

TrueNuisances::TrueNuisances(SimSetting setting, Vector gamma, Vector mu)
    : setting_(std::move(setting)), gamma_(std::move(gamma)), mu_(std::move(mu)) {
    if (setting_.is_linear() && (gamma_.size() != setting_.p || mu_.size() != setting_.p))
        throw ContractError("TrueNuisances: coefficient vectors must have length p");
}

double TrueNuisances::f(RowRef x) const {
    if (setting_.is_linear()) return x.dot(gamma_.transpose());
    return eval_nonlinear(setting_, x).f;
}

double TrueNuisances::h(RowRef x) const {
    if (setting_.is_linear()) return x.dot(mu_.transpose());
    return eval_nonlinear(setting_, x).h;
}

Vector TrueNuisances::f_rows(const Matrix& x) const {
    if (setting_.is_linear()) return x * gamma_;
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) out[i] = eval_nonlinear(setting_, x.row(i)).f;
    return out;
}

Vector TrueNuisances::g_rows(const Matrix& x) const {
    if (setting_.is_linear()) return x * eta();
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
        const auto v = eval_nonlinear(setting_, x.row(i));
        out[i] = setting_.beta_true * v.f + v.h;
    }
    return out;
}

SimDraw gen_dataset(const SimSetting& setting, Rng& rng) {
    setting.validate();
    const Index p = setting.p;
    Vector gamma, mu;
    if (setting.is_linear()) {
        const Index active = setting.family == Family::F2 ? setting.s : p;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        gamma = Vector::Zero(p);
        mu = Vector::Zero(p);
        for (Index j = 0; j < active; ++j) gamma[j] = unif(rng);
        for (Index j = 0; j < active; ++j) mu[j] = unif(rng);
    }
    Matrix x = gen_covariates(setting.n, p, rng);
    const Vector delta = setting.noise_sd * standard_normal(rng, setting.n);
    const Vector e = setting.noise_sd * standard_normal(rng, setting.n);

    TrueNuisances truth(setting, std::move(gamma), std::move(mu));
    Vector f(setting.n), h(setting.n);
    for (Index i = 0; i < setting.n; ++i) {
        if (setting.is_linear()) {
            f[i] = x.row(i).dot(truth.gamma());
            h[i] = x.row(i).dot(truth.mu());
        } else {
            const auto v = eval_nonlinear(setting, x.row(i));
            f[i] = v.f;
            h[i] = v.h;
        }
    }
    Vector d = f + delta;
    Vector y = setting.beta_true * d + h + e;
    return SimDraw{Dataset(std::move(y), std::move(d), std::move(x)), std::move(truth)};
}

}  // namespace pdml
