#pragma once

#include <string>

#include "pdml/data.hpp"
#include "pdml/rng.hpp"
#include "pdml/types.hpp"

namespace pdml {

// Simulation designs for the partially linear model Y = beta*D + h(X) + e,
// D = f(X) + delta, with X a Gaussian-copula uniform design.
//   F1  linear f, h with U(0,1) coefficients
//   F2  F1 with only the first s coefficients nonzero
//   F3  additive f, h built from the function library
//   F4  F3 plus neighbouring interaction terms
enum class Family { F1, F2, F3, F4 };

std::string to_string(Family f);
Family parse_family(const std::string& s);  // throws ConfigError

struct SimSetting {
    Family family = Family::F1;
    Index p = 5;
    Index s = 0;  // F2 sparsity
    double beta_true = 0.5;
    Index n = 1000;
    // Standard deviation of e and delta. 0 gives the noiseless design
    // (the same draws are still consumed, so X and the coefficients match).
    double noise_sd = 1.0;

    void validate() const;  // throws ConfigError
    bool is_linear() const noexcept { return family == Family::F1 || family == Family::F2; }
};

// s_1..s_6 on z; k is 1-based.
double library_fn(int k, double z);
// Maps any integer to 1..6 with a zero remainder recorded as 6.
int cyclic_index(int k);

// A_{kl} = 0.5^{|k-l|}.
Matrix copula_covariance(Index p);
// Rows W ~ N(0, A), returned as Phi(W) so every entry is in (0, 1).
Matrix gen_covariates(Index n, Index p, Rng& rng);

struct NonlinearValue {
    double f;
    double h;
};
// Exact f and h for F3/F4; ContractError for F1/F2 or a wrong row length.
NonlinearValue eval_nonlinear(const SimSetting& setting, RowRef x);

// Exact nuisance functions of one simulated dataset.
class TrueNuisances {
public:
    TrueNuisances(SimSetting setting, Vector gamma, Vector mu);

    double f(RowRef x) const;
    double h(RowRef x) const;
    double g(RowRef x) const { return setting_.beta_true * f(x) + h(x); }
    Vector f_rows(const Matrix& x) const;
    Vector g_rows(const Matrix& x) const;

    const SimSetting& setting() const noexcept { return setting_; }
    // Coefficients of f and h for F1/F2; empty for F3/F4.
    const Vector& gamma() const noexcept { return gamma_; }
    const Vector& mu() const noexcept { return mu_; }
    // Coefficients of g = beta*f + h (linear designs only).
    Vector eta() const { return setting_.beta_true * gamma_ + mu_; }

private:
    SimSetting setting_;
    Vector gamma_;
    Vector mu_;
};

struct SimDraw {
    Dataset data;
    TrueNuisances truth;
};

// Draw order: coefficients, covariates, delta, e. Deterministic in rng.
SimDraw gen_dataset(const SimSetting& setting, Rng& rng);

}  // namespace pdml
