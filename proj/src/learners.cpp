#include "pdml/learners.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <sys/wait.h>
#include <unistd.h>

#include <Eigen/QR>

#include "pdml/data.hpp"
#include "pdml/errors.hpp"
#include "pdml/lasso.hpp"

namespace pdml {

// Training design of a penalized fit, kept so perturbed refits on the same
// rows skip basis expansion, centering, the Gram matrix and CV fold setup.
class LassoDesign {
public:
    std::uint64_t key = 0;              // fingerprint of the raw input matrix
    std::vector<BSplineBasis> bases;    // empty for a plain Lasso
    Matrix centered;                    // expanded design, centered if intercept
    Eigen::RowVectorXd mean;
    bool intercept = true;
    std::optional<GramLasso> gram;      // absent above kGramMaxColumns
    std::shared_ptr<const CvPlan> plan;
};

namespace {

std::string format_lambda(double v) { return format_double(v); }

double parse_number(const std::string& text, const std::string& what) {
    double v = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v))
        throw ConfigError("invalid " + what + ": '" + text + "'");
    return v;
}

Matrix expand(const std::vector<BSplineBasis>& bases, const Matrix& x) {
    Index width = 0;
    for (const auto& b : bases) width += b.size();
    Matrix z(x.rows(), width);
    std::vector<double> buf;
    for (Index i = 0; i < x.rows(); ++i) {
        Index col = 0;
        for (std::size_t j = 0; j < bases.size(); ++j) {
            buf.resize(static_cast<std::size_t>(bases[j].size()));
            bases[j].evaluate(x(i, static_cast<Index>(j)), buf.data());
            for (double v : buf) z(i, col++) = v;
        }
    }
    return z;
}

std::shared_ptr<LassoDesign> build_design(const Matrix& x, bool intercept, int n_knots,
                                          bool basis) {
    auto des = std::make_shared<LassoDesign>();
    des->key = fingerprint(x);
    des->intercept = intercept;
    if (basis) {
        des->bases.reserve(static_cast<std::size_t>(x.cols()));
        for (Index j = 0; j < x.cols(); ++j) des->bases.emplace_back(x.col(j), n_knots);
        des->centered = expand(des->bases, x);
    } else {
        des->centered = x;
    }
    if (intercept) {
        des->mean = des->centered.colwise().mean();
        des->centered.rowwise() -= des->mean;
    } else {
        des->mean = Eigen::RowVectorXd::Zero(des->centered.cols());
    }
    if (des->centered.cols() <= kGramMaxColumns)
        des->gram.emplace(GramLasso::from_design(des->centered));
    return des;
}

// Held-out squared error for every lambda of a decreasing grid, solving on the
// design directly (wide designs only).
Vector residual_path_loss(const Matrix& x, const Vector& r, int n_folds,
                          std::span<const double> grid, Rng& rng, const LassoOptions& opts) {
    const Index n = x.rows();
    if (n < 2 * n_folds)
        throw ConfigError("cross-validation needs at least " + std::to_string(2 * n_folds) +
                          " rows");
    std::vector<Index> perm(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    for (Index i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<Index> pick(0, i);
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
    }
    Vector loss = Vector::Zero(static_cast<Index>(grid.size()));
    for (int k = 0; k < n_folds; ++k) {
        std::vector<Index> tr, ho;
        for (Index i = 0; i < n; ++i)
            (i % n_folds == k ? ho : tr).push_back(perm[static_cast<std::size_t>(i)]);
        std::sort(tr.begin(), tr.end());
        std::sort(ho.begin(), ho.end());
        const Matrix xtr = take_rows(x, tr), xho = take_rows(x, ho);
        const Vector rtr = take_rows(r, tr), rho = take_rows(r, ho);
        const Vector zero = Vector::Zero(x.cols());
        Vector warm = zero;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            auto fit = solve_lasso_residual(xtr, rtr, zero, grid[g], opts, &warm);
            warm = fit.coef;
            loss(static_cast<Index>(g)) += (rho - xho * fit.coef).squaredNorm() /
                                           static_cast<double>(ho.size()) / n_folds;
        }
    }
    return loss;
}

struct PenalizedFit {
    Vector coef;
    double intercept = 0.0;
    double lambda = 0.0;
};

// `plan` starts as the design's cached CV plan and receives a new one when CV
// needs folds the cache does not have.
PenalizedFit fit_penalized(const LassoDesign& des, std::shared_ptr<const CvPlan>& plan,
                           const Vector& response, const PenaltyConfig& pen,
                           const std::optional<Vector>& warm_in, Rng& rng) {
    const Index q = des.centered.cols();
    double ybar = des.intercept ? response.mean() : 0.0;
    Vector yc = response.array() - ybar;
    Vector b = linear_term(des.centered, yc);

    double lambda = pen.lambda;
    const bool needs_cv = pen.mode != PenaltyConfig::Mode::Fixed;
    if (needs_cv && pen.n_folds < 2) throw ConfigError("penalty CV needs at least 2 folds");
    if (needs_cv && des.gram && (!plan || plan->n_folds() != pen.n_folds))
        plan = std::make_shared<const CvPlan>(des.centered, pen.n_folds, rng);

    if (pen.mode == PenaltyConfig::Mode::CrossValidated) {
        const double lmax = lambda_max(b);
        if (lmax <= 0.0) {
            lambda = 0.0;
        } else {
            auto grid = lambda_grid(lmax, pen.grid_size, pen.grid_ratio);
            if (des.gram) {
                lambda = cv_lambda(*plan, plan->moments(yc), grid).lambda_best;
            } else {
                auto curve = residual_path_loss(des.centered, yc, pen.n_folds, grid, rng, {});
                lambda = select_from_curve(grid, curve).lambda_best;
            }
        }
    } else if (pen.mode == PenaltyConfig::Mode::Restricted) {
        if (!(pen.lambda > 0.0)) throw ConfigError("restricted penalty search needs a base > 0");
        if (des.gram) {
            lambda = select_perturbed_penalty(*plan, plan->moments(yc), pen.lambda, nullptr)
                         .lambda;
        } else {
            std::vector<double> grid;
            for (double r : penalty_ratios()) grid.push_back(r * pen.lambda);
            auto curve = residual_path_loss(des.centered, yc, pen.n_folds, grid, rng, {});
            lambda = select_from_curve(grid, curve).lambda_best;
        }
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("penalty must be finite and nonnegative");

    const Vector* warm = (warm_in && warm_in->size() == q) ? &*warm_in : nullptr;
    LassoFit fit;
    if (des.gram) {
        fit = des.gram->solve(b, lambda, {}, warm);
    } else {
        fit = solve_lasso_residual(des.centered, yc, Vector::Zero(q), lambda, {}, warm);
    }
    PenalizedFit out;
    out.coef = std::move(fit.coef);
    out.lambda = lambda;
    out.intercept = ybar - des.mean.dot(out.coef);
    return out;
}

class LinearPredictor final : public Predictor {
public:
    LinearPredictor(Vector coef, double intercept, PredictorInfo info,
                    std::shared_ptr<const LassoDesign> design = nullptr)
        : Predictor(std::move(info)), coef_(std::move(coef)), intercept_(intercept),
          design_(std::move(design)) {}

    Vector predict(const Matrix& x) const override {
        check_columns(x);
        Vector out = x * coef_;
        out.array() += intercept_;
        return out;
    }
    std::shared_ptr<const LassoDesign> design() const override { return design_; }
    std::optional<Vector> coefficients() const override {
        if (!design_) return std::nullopt;
        return coef_;
    }

private:
    Vector coef_;
    double intercept_;
    std::shared_ptr<const LassoDesign> design_;
};

class BasisPredictor final : public Predictor {
public:
    BasisPredictor(std::shared_ptr<const LassoDesign> design, Vector coef, double intercept,
                   PredictorInfo info)
        : Predictor(std::move(info)), design_(std::move(design)), coef_(std::move(coef)),
          intercept_(intercept) {}

    Vector predict(const Matrix& x) const override {
        check_columns(x);
        Vector out = expand(design_->bases, x) * coef_;
        out.array() += intercept_;
        return out;
    }
    std::shared_ptr<const LassoDesign> design() const override { return design_; }
    std::optional<Vector> coefficients() const override { return coef_; }

private:
    std::shared_ptr<const LassoDesign> design_;
    Vector coef_;
    double intercept_;
};

struct DesignFit {
    std::shared_ptr<const LassoDesign> design;
    PenalizedFit fit;
};

// Cached designs are shared between workers and never modified; a fresh design
// keeps the CV plan built while fitting it.
DesignFit fit_on_design(const std::shared_ptr<const LassoDesign>& cached, const Matrix& x,
                        const Vector& response, bool intercept, int n_knots, bool basis,
                        const PenaltyConfig& pen, const std::optional<Vector>& warm, Rng& rng) {
    if (cached && cached->intercept == intercept && (basis == !cached->bases.empty()) &&
        (!basis || cached->bases.front().size() == n_knots + 4) && cached->key == fingerprint(x)) {
        auto plan = cached->plan;
        return {cached, fit_penalized(*cached, plan, response, pen, warm, rng)};
    }
    auto fresh = build_design(x, intercept, n_knots, basis);
    auto fit = fit_penalized(*fresh, fresh->plan, response, pen, warm, rng);
    return {std::move(fresh), std::move(fit)};
}

PredictorPtr fit_ols(const OlsSpec& spec, const Matrix& x, const Vector& y) {
    const Index n = x.rows();
    const Index k = x.cols() + (spec.intercept ? 1 : 0);
    if (n < k + (spec.intercept ? 0 : 1) || n < 1)
        throw LearnerError("OLS needs more rows (" + std::to_string(n) + ") than coefficients (" +
                           std::to_string(k) + ")");
    Matrix a(n, k);
    if (spec.intercept) {
        a.col(0).setOnes();
        a.rightCols(x.cols()) = x;
    } else {
        a = x;
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    if (qr.rank() < k)
        throw LearnerError("OLS design is rank deficient (rank " + std::to_string(qr.rank()) +
                           " of " + std::to_string(k) + ")");
    Vector sol = qr.solve(y);
    Vector coef = spec.intercept ? Vector(sol.tail(x.cols())) : sol;
    double icpt = spec.intercept ? sol(0) : 0.0;
    return std::make_shared<LinearPredictor>(std::move(coef), icpt,
                                             PredictorInfo{"ols", std::nullopt, x.cols()});
}

// External learners.

class WorkerGate {
public:
    void set_cap(int cap) {
        std::lock_guard lock(mu_);
        cap_ = std::max(1, cap);
        cv_.notify_all();
    }
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return active_ < cap_; });
        ++active_;
    }
    void release() {
        std::lock_guard lock(mu_);
        --active_;
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int cap_ = std::max(1u, std::thread::hardware_concurrency());
    int active_ = 0;
};

WorkerGate& gate() {
    static WorkerGate g;
    return g;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

class ScratchDir {
public:
    ScratchDir() {
        static std::atomic<unsigned long> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pdml-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    ScratchDir(const ScratchDir&) = delete;
    ScratchDir& operator=(const ScratchDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs a shell command, returning stdout; LearnerError with stderr on failure.
std::string run_command(const std::string& cmd, const std::filesystem::path& err_file) {
    struct Slot {
        Slot() { gate().acquire(); }
        ~Slot() { gate().release(); }
    } slot;
    const std::string full = cmd + " 2> " + shell_quote(err_file.string());
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) throw LearnerError("cannot start external learner: " + cmd);
    std::string out;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
    int status = ::pclose(pipe);
    if (status != 0) {
        int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        std::string err = read_file(err_file);
        if (err.size() > 2000) err = err.substr(err.size() - 2000);
        throw LearnerError("external learner failed (exit " + std::to_string(code) + "): " + cmd +
                           (err.empty() ? "" : "\n" + err));
    }
    return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& x, const Vector* y) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    bool first = true;
    if (y) {
        out << "y";
        first = false;
    }
    for (Index j = 0; j < x.cols(); ++j) out << (first && j == 0 ? "" : ",") << "x" << j + 1;
    out << '\n';
    for (Index i = 0; i < x.rows(); ++i) {
        if (y) out << format_double((*y)(i));
        for (Index j = 0; j < x.cols(); ++j)
            out << (j == 0 && !y ? "" : ",") << format_double(x(i, j));
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

class ExternalPredictor final : public Predictor {
public:
    ExternalPredictor(std::string command, std::string model, Index p)
        : Predictor(PredictorInfo{"external", std::nullopt, p}), command_(std::move(command)),
          model_(std::move(model)) {}

    Vector predict(const Matrix& x) const override {
        check_columns(x);
        ScratchDir dir;
        const auto cov = dir.path() / "covariates.csv";
        write_matrix_csv(cov, x, nullptr);
        std::string out = run_command(command_ + " predict " + shell_quote(model_) + " " +
                                          shell_quote(cov.string()),
                                      dir.path() / "stderr.txt");
        Vector pred(x.rows());
        std::istringstream lines(out);
        std::string line;
        Index i = 0;
        while (std::getline(lines, line)) {
            line = trim(line);
            if (line.empty()) continue;
            if (i >= x.rows()) throw LearnerError("external learner returned too many predictions");
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
            if (ec != std::errc{} || ptr != line.data() + line.size() || !std::isfinite(v))
                throw LearnerError("external learner returned an invalid prediction: '" + line +
                                   "'");
            pred(i++) = v;
        }
        if (i != x.rows())
            throw LearnerError("external learner returned " + std::to_string(i) +
                               " predictions for " + std::to_string(x.rows()) + " rows");
        return pred;
    }

private:
    std::string command_;
    std::string model_;
};

PredictorPtr fit_external(const ExternalSpec& spec, const Matrix& x, const Vector& y) {
    if (spec.command.empty()) throw ConfigError("external learner needs a command");
    ScratchDir dir;
    const auto train = dir.path() / "train.csv";
    write_matrix_csv(train, x, &y);
    std::string cmd = spec.command + " fit " + shell_quote(train.string());
    if (!spec.params.empty()) cmd += " " + shell_quote(spec.params);
    std::string out = run_command(cmd, dir.path() / "stderr.txt");
    std::string model;
    std::istringstream lines(out);
    std::string line;
    while (std::getline(lines, line))
        if (!trim(line).empty()) model = trim(line);
    if (model.empty()) throw LearnerError("external learner printed no model path: " + cmd);
    return std::make_shared<ExternalPredictor>(spec.command, model, x.cols());
}

}  // namespace

std::uint64_t fingerprint(const Matrix& x) {
    std::uint64_t h = splitmix64(static_cast<std::uint64_t>(x.rows()) * 0x9E3779B97F4A7C15ULL ^
                                 static_cast<std::uint64_t>(x.cols()));
    const double* data = x.data();
    for (Index i = 0; i < x.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, data + i, sizeof bits);
        h = (h ^ bits) * 0x100000001B3ULL;
        h ^= h >> 29;
    }
    return h;
}

void Predictor::check_columns(const Matrix& x) const {
    if (x.cols() != info_.n_features)
        throw ContractError("predictor expects " + std::to_string(info_.n_features) +
                            " columns, got " + std::to_string(x.cols()));
}

std::string learner_name(const LearnerSpec& spec) {
    return std::visit(
        [](const auto& s) -> std::string {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, OlsSpec>) {
                return s.intercept ? "ols" : "ols:nointercept";
            } else if constexpr (std::is_same_v<T, LassoSpec>) {
                if (s.penalty.mode == PenaltyConfig::Mode::Fixed)
                    return "lasso:" + format_lambda(s.penalty.lambda);
                return "lasso";
            } else if constexpr (std::is_same_v<T, BasisSpec>) {
                return s.n_knots == BasisSpec{}.n_knots ? "basis"
                                                        : "basis:" + std::to_string(s.n_knots);
            } else {
                return "external:" + s.command;
            }
        },
        spec);
}

LearnerSpec parse_learner(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
    if (head == "ols") {
        if (arg.empty()) return OlsSpec{};
        if (arg == "nointercept") return OlsSpec{false};
    } else if (head == "lasso") {
        if (arg.empty()) return LassoSpec{};
        double lambda = parse_number(arg, "lasso penalty");
        if (lambda < 0.0) throw ConfigError("lasso penalty must be nonnegative");
        LassoSpec s;
        s.penalty = PenaltyConfig::fixed(lambda);
        return s;
    } else if (head == "basis") {
        BasisSpec s;
        if (!arg.empty()) {
            double k = parse_number(arg, "knot count");
            if (k < 0 || k != std::floor(k) || k > 1000) throw ConfigError("invalid knot count");
            s.n_knots = static_cast<int>(k);
        }
        return s;
    } else if (head == "external") {
        if (arg.empty()) throw ConfigError("external learner needs a command");
        return ExternalSpec{arg, ""};
    }
    throw ConfigError("unknown learner '" + text + "'");
}

PredictorPtr fit_learner(const LearnerSpec& spec, const Matrix& x, const Vector& response,
                         Rng& rng) {
    if (x.rows() != response.size())
        throw ContractError("design has " + std::to_string(x.rows()) + " rows, response " +
                            std::to_string(response.size()));
    if (!response.allFinite()) throw ContractError("response has non-finite entries");
    return std::visit(
        [&](const auto& s) -> PredictorPtr {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, OlsSpec>) {
                return fit_ols(s, x, response);
            } else if constexpr (std::is_same_v<T, LassoSpec>) {
                auto r = fit_on_design(s.reuse, x, response, s.intercept, 0, false, s.penalty,
                                       s.warm, rng);
                return std::make_shared<LinearPredictor>(
                    std::move(r.fit.coef), r.fit.intercept,
                    PredictorInfo{"lasso", r.fit.lambda, x.cols()}, std::move(r.design));
            } else if constexpr (std::is_same_v<T, BasisSpec>) {
                if (s.n_knots < 0) throw ConfigError("knot count must be nonnegative");
                auto r = fit_on_design(s.reuse, x, response, true, s.n_knots, true, s.penalty,
                                       s.warm, rng);
                return std::make_shared<BasisPredictor>(
                    std::move(r.design), std::move(r.fit.coef), r.fit.intercept,
                    PredictorInfo{"basis", r.fit.lambda, x.cols()});
            } else {
                return fit_external(s, x, response);
            }
        },
        spec);
}

PredictorPtr make_linear_predictor(Vector coef, double intercept, std::string kind,
                                   std::optional<double> lambda) {
    const Index p = coef.size();
    return std::make_shared<LinearPredictor>(std::move(coef), intercept,
                                             PredictorInfo{std::move(kind), lambda, p});
}

LearnerSpec anchored_spec(const LearnerSpec& spec, const Predictor& unperturbed,
                          std::optional<double> fixed_ratio) {
    auto anchor = [&](auto s) {
        const double base = unperturbed.info().lambda.value_or(0.0);
        if (fixed_ratio || !(base > 0.0))
            s.penalty = PenaltyConfig{PenaltyConfig::Mode::Fixed, fixed_ratio.value_or(1.0) * base,
                                      s.penalty.n_folds, s.penalty.grid_size,
                                      s.penalty.grid_ratio};
        else
            s.penalty = PenaltyConfig{PenaltyConfig::Mode::Restricted, base, s.penalty.n_folds,
                                      s.penalty.grid_size, s.penalty.grid_ratio};
        s.reuse = unperturbed.design();
        s.warm = unperturbed.coefficients();
        return s;
    };
    if (auto* l = std::get_if<LassoSpec>(&spec)) return anchor(*l);
    if (auto* b = std::get_if<BasisSpec>(&spec)) return anchor(*b);
    return spec;
}

LearnerSpec share_design(const LearnerSpec& spec, const Predictor& fitted) {
    auto attach = [&](auto s) {
        if (!s.reuse) s.reuse = fitted.design();
        return s;
    };
    if (auto* l = std::get_if<LassoSpec>(&spec)) return attach(*l);
    if (auto* b = std::get_if<BasisSpec>(&spec)) return attach(*b);
    return spec;
}

void set_external_worker_cap(int cap) { gate().set_cap(cap); }

BSplineBasis::BSplineBasis(const Vector& column, int n_knots) {
    if (n_knots < 0) throw ConfigError("knot count must be nonnegative");
    if (column.size() == 0) throw ContractError("empty column for spline basis");
    std::vector<double> v(column.data(), column.data() + column.size());
    std::sort(v.begin(), v.end());
    const double lo = v.front(), hi = v.back();
    for (int i = 0; i < 4; ++i) knots_.push_back(lo);
    for (int j = 1; j <= n_knots; ++j) {
        const double pos = static_cast<double>(j) / (n_knots + 1) * (v.size() - 1);
        const auto k = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(k);
        const double q = k + 1 < v.size() ? v[k] + frac * (v[k + 1] - v[k]) : v[k];
        knots_.push_back(q);
    }
    for (int i = 0; i < 4; ++i) knots_.push_back(hi);
}

void BSplineBasis::evaluate(double v, double* out) const {
    const int nb = size();
    std::fill(out, out + nb, 0.0);
    const auto& t = knots_;
    const double lo = t.front(), hi = t.back();
    if (!(hi > lo)) return;
    v = std::clamp(v, lo, hi);
    int s = static_cast<int>(std::upper_bound(t.begin(), t.end(), v) - t.begin()) - 1;
    s = std::clamp(s, 3, nb - 1);
    while (s > 3 && !(t[s] < t[s + 1])) --s;

    double basis[4] = {1.0, 0.0, 0.0, 0.0};
    double left[4] = {0, 0, 0, 0}, right[4] = {0, 0, 0, 0};
    for (int j = 1; j <= 3; ++j) {
        left[j] = v - t[s + 1 - j];
        right[j] = t[s + j] - v;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[r + 1] + left[j - r];
            const double temp = denom > 0.0 ? basis[r] / denom : 0.0;
            basis[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        basis[j] = saved;
    }
    for (int r = 0; r < 4; ++r) out[s - 3 + r] = basis[r];
}

}  // namespace pdml
