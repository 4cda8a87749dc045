#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "pdml/rng.hpp"
#include "pdml/types.hpp"

namespace pdml {

// Observations (Y_i, D_i, X_i), i = 1..N. Immutable once constructed.
class Dataset {
public:
    // Validates: equal row counts, N >= 4, all entries finite. Throws ContractError.
    Dataset(Vector y, Vector d, Matrix x, std::vector<std::string> labels = {});

    Index n() const noexcept { return y_.size(); }
    Index p() const noexcept { return x_.cols(); }

    const Vector& y() const noexcept { return y_; }
    const Vector& d() const noexcept { return d_; }
    const Matrix& x() const noexcept { return x_; }
    // Covariate column names; defaults to x1..xp.
    const std::vector<std::string>& labels() const noexcept { return labels_; }

private:
    Vector y_;
    Vector d_;
    Matrix x_;
    std::vector<std::string> labels_;
};

// Row selection helpers shared by every module that works on folds.
Matrix take_rows(const Matrix& x, std::span<const Index> rows);
Vector take_rows(const Vector& v, std::span<const Index> rows);

enum class SplitKind { Single, CrossFit };

struct SplitScheme {
    SplitKind kind = SplitKind::Single;
    int k = 2;  // number of folds; 2 for Single

    static SplitScheme single() { return {SplitKind::Single, 2}; }
    static SplitScheme cross_fit(int k) { return {SplitKind::CrossFit, k}; }
    int n_folds() const noexcept { return kind == SplitKind::Single ? 2 : k; }
};

// Disjoint folds covering 0..N-1. Under Single, folds[0] is the evaluation
// sample I and folds[1] the training sample I^c; I receives the extra
// observation when N is odd. Indices within each fold are sorted.
struct FoldSplit {
    std::vector<std::vector<Index>> folds;
    SplitScheme scheme;

    std::size_t size() const noexcept { return folds.size(); }
    // All indices not in fold k, sorted.
    std::vector<Index> complement(std::size_t k) const;
    // Folds that are evaluated: {0} under Single, all folds under CrossFit.
    std::size_t n_evaluated() const noexcept {
        return scheme.kind == SplitKind::Single ? 1 : folds.size();
    }
    // Training rows for evaluation fold k.
    std::vector<Index> training(std::size_t k) const;
};

// Random permutation of 0..n_total-1 cut into folds. Deterministic in rng.
// Throws ConfigError when a fold would have fewer than 2 observations.
FoldSplit split(Index n_total, SplitScheme scheme, Rng& rng);

// Header row required; y_col and d_col are taken out, every other column
// becomes X in file order. Throws SchemaError / ParseError / IoError.
Dataset load_csv(const std::filesystem::path& path, const std::string& y_col,
                 const std::string& d_col);
Dataset read_csv(std::istream& in, const std::string& y_col, const std::string& d_col);

// Writes y,d,<labels...>; every value is printed in shortest round-trip form.
void write_csv(const Dataset& ds, std::ostream& out, const std::string& y_col = "y",
               const std::string& d_col = "d");
void save_csv(const Dataset& ds, const std::filesystem::path& path,
              const std::string& y_col = "y", const std::string& d_col = "d");

// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace pdml
