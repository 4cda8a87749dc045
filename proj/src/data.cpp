#include "pdml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "pdml/errors.hpp"

namespace pdml {

Dataset::Dataset(Vector y, Vector d, Matrix x, std::vector<std::string> labels)
    : y_(std::move(y)), d_(std::move(d)), x_(std::move(x)), labels_(std::move(labels)) {
    if (y_.size() != d_.size() || y_.size() != x_.rows())
        throw ContractError("Dataset: y, d and x must have the same number of rows");
    if (y_.size() < 4) throw ContractError("Dataset: at least 4 observations are required");
    if (!y_.allFinite() || !d_.allFinite() || !x_.allFinite())
        throw ContractError("Dataset: non-finite entries");
    if (labels_.empty()) {
        labels_.reserve(static_cast<std::size_t>(x_.cols()));
        for (Index j = 0; j < x_.cols(); ++j) labels_.push_back("x" + std::to_string(j + 1));
    } else if (static_cast<Index>(labels_.size()) != x_.cols()) {
        throw ContractError("Dataset: label count does not match covariate count");
    }
}

Matrix take_rows(const Matrix& x, std::span<const Index> rows) {
    Matrix out(static_cast<Index>(rows.size()), x.cols());
    for (Index j = 0; j < x.cols(); ++j)
        for (std::size_t r = 0; r < rows.size(); ++r)
            out(static_cast<Index>(r), j) = x(rows[r], j);
    return out;
}

Vector take_rows(const Vector& v, std::span<const Index> rows) {
    Vector out(static_cast<Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) out[static_cast<Index>(r)] = v[rows[r]];
    return out;
}

std::vector<Index> FoldSplit::complement(std::size_t k) const {
    std::vector<Index> out;
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != k) out.insert(out.end(), folds[f].begin(), folds[f].end());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<Index> FoldSplit::training(std::size_t k) const {
    if (scheme.kind == SplitKind::Single) return folds.at(1 - k);
    return complement(k);
}

FoldSplit split(Index n_total, SplitScheme scheme, Rng& rng) {
    const int k = scheme.n_folds();
    if (k < 2) throw ConfigError("split: at least 2 folds are required");
    if (n_total < 2 * static_cast<Index>(k))
        throw ConfigError("split: " + std::to_string(k) + " folds need at least " +
                          std::to_string(2 * k) + " observations, got " +
                          std::to_string(n_total));
    std::vector<Index> perm(static_cast<std::size_t>(n_total));
    std::iota(perm.begin(), perm.end(), Index{0});
    // Fisher-Yates with an explicit uniform draw so the permutation only
    // depends on the generator, not on the standard library's shuffle.
    for (std::size_t i = perm.size() - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(perm[i], perm[pick(rng)]);
    }
    FoldSplit out;
    out.scheme = scheme;
    out.folds.resize(static_cast<std::size_t>(k));
    const Index base = n_total / k;
    const Index extra = n_total % k;
    Index pos = 0;
    for (int f = 0; f < k; ++f) {
        const Index len = base + (f < extra ? 1 : 0);
        auto& fold = out.folds[static_cast<std::size_t>(f)];
        fold.assign(perm.begin() + pos, perm.begin() + pos + len);
        std::sort(fold.begin(), fold.end());
        pos += len;
    }
    return out;
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = (b == std::string::npos) ? std::string{} : f.substr(b, e - b + 1);
        if (f.size() >= 2 && f.front() == '"' && f.back() == '"') f = f.substr(1, f.size() - 2);
    }
    return out;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& column) {
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ", column '" + column +
                             "': not a finite number: '" + cell + "'",
                         row);
    return v;
}

}  // namespace

Dataset read_csv(std::istream& in, const std::string& y_col, const std::string& d_col) {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("CSV input is empty; a header row is required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
    const auto header = split_fields(line);
    auto find = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw SchemaError("CSV is missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t yi = find(y_col);
    const std::size_t di = find(d_col);
    if (yi == di) throw SchemaError("y and d must be different columns");
    std::vector<std::size_t> xcols;
    std::vector<std::string> labels;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == yi || c == di) continue;
        xcols.push_back(c);
        labels.push_back(header[c]);
    }

    std::vector<double> ys, ds, xs;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto fields = split_fields(line);
        if (fields.size() != header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             row);
        ys.push_back(parse_cell(fields[yi], row, header[yi]));
        ds.push_back(parse_cell(fields[di], row, header[di]));
        for (auto c : xcols) xs.push_back(parse_cell(fields[c], row, header[c]));
    }
    const auto n = static_cast<Index>(ys.size());
    const auto p = static_cast<Index>(xcols.size());
    Matrix x(n, p);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < p; ++j) x(i, j) = xs[static_cast<std::size_t>(i * p + j)];
    return Dataset(Eigen::Map<Vector>(ys.data(), n), Eigen::Map<Vector>(ds.data(), n),
                   std::move(x), std::move(labels));
}

Dataset load_csv(const std::filesystem::path& path, const std::string& y_col,
                 const std::string& d_col) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    return read_csv(in, y_col, d_col);
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) throw IoError("format_double failed");
    return std::string(buf, ptr);
}

void write_csv(const Dataset& ds, std::ostream& out, const std::string& y_col,
               const std::string& d_col) {
    out << y_col << ',' << d_col;
    for (const auto& l : ds.labels()) out << ',' << l;
    out << '\n';
    for (Index i = 0; i < ds.n(); ++i) {
        out << format_double(ds.y()[i]) << ',' << format_double(ds.d()[i]);
        for (Index j = 0; j < ds.p(); ++j) out << ',' << format_double(ds.x()(i, j));
        out << '\n';
    }
}

void save_csv(const Dataset& ds, const std::filesystem::path& path, const std::string& y_col,
              const std::string& d_col) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    write_csv(ds, out, y_col, d_col);
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace pdml
