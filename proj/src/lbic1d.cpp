#include "dopinv/lbic1d.hpp"

#include "dopinv/fem.hpp"
#include "dopinv/io.hpp"

#include <boost/math/tools/roots.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dopinv::lbic1d {

void Constants::validate() const
{
    if (!(q0 >= 0.0) || !std::isfinite(q0)) {
        throw InvalidArgument("lbic1d: q0 must be finite and >= 0");
    }
    if (!(mu_n > 0.0) || !(mu_p > 0.0) || !std::isfinite(mu_n) || !std::isfinite(mu_p)) {
        throw InvalidArgument("lbic1d: mobilities must be finite and > 0");
    }
}

std::vector<double> uniform_grid(int M)
{
    if (M < 2) {
        throw InvalidArgument("lbic1d: grid needs M >= 2 intervals");
    }
    std::vector<double> x(static_cast<std::size_t>(M) + 1);
    for (int k = 0; k <= M; ++k) {
        x[static_cast<std::size_t>(k)] = static_cast<double>(k) / M;
    }
    return x;
}

namespace {

void check_grid(std::span<const double> x)
{
    if (x.size() < 3) {
        throw InvalidArgument("lbic1d: grid needs at least 3 points");
    }
    const double h = x[1] - x[0];
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
        const double d = x[k + 1] - x[k];
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw InvalidArgument("lbic1d: grid must be strictly increasing");
        }
        if (std::abs(d - h) > 1e-9 * h) {
            throw InvalidArgument("lbic1d: grid must be uniform");
        }
    }
}

double trapezoid(std::span<const double> f, double h)
{
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < f.size(); ++k) {
        s += 0.5 * h * (f[k] + f[k + 1]);
    }
    return s;
}

} // namespace

ForwardResult solve_1d_forward(std::span<const double> x, std::span<const double> V0, const Constants& c)
{
    c.validate();
    check_grid(x);
    if (V0.size() != x.size()) {
        throw InvalidArgument("lbic1d: potential and grid sizes differ");
    }
    for (double v : V0) {
        if (!std::isfinite(v)) {
            throw InvalidArgument("lbic1d: potential must be finite");
        }
    }
    const auto n = static_cast<Index>(x.size());
    std::vector<Eigen::Triplet<double>> trip;
    for (Index e = 0; e + 1 < n; ++e) {
        const auto se = static_cast<std::size_t>(e);
        const double h = x[se + 1] - x[se];
        const double vm = 0.5 * (V0[se] + V0[se + 1]);
        const double au = c.mu_n * std::exp(vm) / h;
        const double av = c.mu_p * std::exp(-vm) / h;
        const double q = 0.5 * c.q0 * h;
        for (const auto& [off, a] : {std::pair<Index, double>{0, au}, std::pair<Index, double>{n, av}}) {
            trip.emplace_back(off + e, off + e, a);
            trip.emplace_back(off + e + 1, off + e + 1, a);
            trip.emplace_back(off + e, off + e + 1, -a);
            trip.emplace_back(off + e + 1, off + e, -a);
        }
        for (Index k : {e, e + 1}) {
            trip.emplace_back(k, k, q);
            trip.emplace_back(n + k, n + k, q);
            trip.emplace_back(k, n + k, -q);
            trip.emplace_back(n + k, k, -q);
        }
    }
    SparseMatrix a(2 * n, 2 * n);
    a.setFromTriplets(trip.begin(), trip.end());
    const ConstrainedSystem sys(a, {0, n - 1, n, 2 * n - 1});
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * n);
    g[0] = 1.0;
    g[n] = 1.0;
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(2 * n);
    const Eigen::VectorXd sol = sys.solve(zero, g);
    if (!sol.allFinite()) {
        throw NumericalError("lbic1d: forward solve produced nonfinite values");
    }
    const Eigen::VectorXd r = sys.residual(sol, zero);

    ForwardResult out;
    out.u.assign(sol.data(), sol.data() + n);
    out.v.assign(sol.data() + n, sol.data() + 2 * n);
    out.i.resize(out.u.size());
    for (std::size_t k = 0; k < out.u.size(); ++k) {
        out.i[k] = out.v[k] - out.u[k];
    }
    out.c1 = -r[0] / c.mu_n;
    out.c2 = -r[n] / c.mu_p;
    return out;
}

Problem::Problem(std::vector<double> x, std::vector<double> i, Constants c, double anchor_V0)
    : x_(std::move(x))
    , i_(std::move(i))
    , c_(c)
    , anchor_(anchor_V0)
{
    c_.validate();
    check_grid(x_);
    if (i_.size() != x_.size()) {
        throw InvalidArgument("lbic1d: measurement and grid sizes differ");
    }
    if (!std::all_of(i_.begin(), i_.end(), [](double v) { return std::isfinite(v); }) || !std::isfinite(anchor_)) {
        throw InvalidArgument("lbic1d: measurement and anchor must be finite");
    }
    const double h = spacing();
    const std::size_t m = x_.size() - 1;
    I_.assign(x_.size(), 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        I_[k + 1] = I_[k] + 0.5 * h * (i_[k] + i_[k + 1]);
    }
    di_.resize(x_.size());
    di_[0] = (-3.0 * i_[0] + 4.0 * i_[1] - i_[2]) / (2.0 * h);
    di_[m] = (3.0 * i_[m] - 4.0 * i_[m - 1] + i_[m - 2]) / (2.0 * h);
    for (std::size_t k = 1; k < m; ++k) {
        di_[k] = (i_[k + 1] - i_[k - 1]) / (2.0 * h);
    }
}

double Problem::I_min() const { return *std::min_element(I_.begin(), I_.end()); }
double Problem::I_max() const { return *std::max_element(I_.begin(), I_.end()); }
double Problem::a(double c1, std::size_t k) const { return c1 - c_.q0 / c_.mu_n * I_[k]; }
double Problem::b(double c2, std::size_t k) const { return c2 + c_.q0 / c_.mu_p * I_[k]; }

std::optional<double> principal_root(double a, double di, double b)
{
    double y = 0.0;
    if (a == 0.0) {
        if (di >= 0.0) {
            return std::nullopt;
        }
        y = b / di;
    } else {
        const double disc = di * di + 4.0 * a * b;
        if (!(disc >= 0.0)) {
            return std::nullopt;
        }
        const double s = std::sqrt(disc);
        y = di >= 0.0 ? (di + s) / (-2.0 * a) : -2.0 * b / (s - di);
    }
    if (!(y > 0.0) || !std::isfinite(y)) {
        return std::nullopt;
    }
    return y;
}

ResidualEvaluation attainability_residuals(double c1, double c2, const Problem& p, SignConvention sign)
{
    ResidualEvaluation r;
    const auto& x = p.x();
    const auto& di = p.di();
    const Constants& c = p.constants();
    r.Y.resize(x.size());
    std::vector<double> root_d(x.size());
    std::vector<double> ay(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double a = p.a(c1, k);
        const double b = p.b(c2, k);
        const auto y = principal_root(a, di[k], b);
        if (!y) {
            r.failure_x = x[k];
            r.failure = di[k] * di[k] + 4.0 * a * b < 0.0 ? "negative discriminant" : "no positive root";
            return r;
        }
        r.Y[k] = *y;
        ay[k] = a * *y;
        const double bj = sign == SignConvention::Consistent ? b : c2 - c.q0 / c.mu_p * p.I()[k];
        const double disc = di[k] * di[k] + 4.0 * a * bj;
        if (disc < 0.0) {
            r.failure_x = x[k];
            r.failure = "negative discriminant in J1";
            return r;
        }
        root_d[k] = std::sqrt(disc);
    }
    const double h = p.spacing();
    r.J1 = 0.5 * trapezoid(root_d, h) - 1.0;
    r.integral = 1.0 + trapezoid(ay, h);
    const double v0 = p.anchor();
    const double slope = sign == SignConvention::Consistent ? di[0] : -di[0];
    r.J2 = (c1 * std::exp(-v0) + slope - c2 * std::exp(v0)) * std::exp(-std::abs(v0));
    r.ok = true;
    return r;
}

std::vector<double> quadratic_residual(double c1, double c2, std::span<const double> Y, const Problem& p)
{
    if (Y.size() != p.x().size()) {
        throw InvalidArgument("lbic1d: Y and grid sizes differ");
    }
    std::vector<double> r(Y.size());
    for (std::size_t k = 0; k < Y.size(); ++k) {
        r[k] = p.a(c1, k) * Y[k] + p.di()[k] - p.b(c2, k) / Y[k];
    }
    return r;
}

double integral_residual(double c1, std::span<const double> Y, const Problem& p)
{
    if (Y.size() != p.x().size()) {
        throw InvalidArgument("lbic1d: Y and grid sizes differ");
    }
    std::vector<double> ay(Y.size());
    for (std::size_t k = 0; k < Y.size(); ++k) {
        ay[k] = p.a(c1, k) * Y[k];
    }
    return 1.0 + trapezoid(ay, p.spacing());
}

namespace {

// Five-point derivative: centered inside, one-sided at the two ends.
std::vector<double> derivative4(std::span<const double> f, double h)
{
    const std::size_t n = f.size();
    std::vector<double> d(n);
    for (std::size_t k = 2; k + 2 < n; ++k) {
        d[k] = (-f[k + 2] + 8.0 * f[k + 1] - 8.0 * f[k - 1] + f[k - 2]) / (12.0 * h);
    }
    const auto one_sided = [&](auto at, double sign) {
        const double d0 = (-25.0 * at(0) + 48.0 * at(1) - 36.0 * at(2) + 16.0 * at(3) - 3.0 * at(4)) / (12.0 * h);
        const double d1 = (-3.0 * at(0) - 10.0 * at(1) + 18.0 * at(2) - 6.0 * at(3) + at(4)) / (12.0 * h);
        return std::pair{sign * d0, sign * d1};
    };
    const auto [l0, l1] = one_sided([&](std::size_t j) { return f[j]; }, 1.0);
    const auto [r0, r1] = one_sided([&](std::size_t j) { return f[n - 1 - j]; }, -1.0);
    d[0] = l0;
    d[1] = l1;
    d[n - 1] = r0;
    d[n - 2] = r1;
    return d;
}

// Simpson, with a closing 3/8 panel when the interval count is odd.
double simpson(std::span<const double> f, double h)
{
    const std::size_t m = f.size() - 1;
    const std::size_t even = (m % 2 == 0) ? m : m - 3;
    double s = 0.0;
    for (std::size_t k = 0; k + 2 <= even; k += 2) {
        s += h / 3.0 * (f[k] + 4.0 * f[k + 1] + f[k + 2]);
    }
    if (even != m) {
        s += 3.0 * h / 8.0 * (f[m - 3] + 3.0 * f[m - 2] + 3.0 * f[m - 1] + f[m]);
    }
    return s;
}

} // namespace

NecessityResiduals necessity_residuals(double c1, double c2, std::span<const double> Y, const Problem& p)
{
    const std::size_t n = p.x().size();
    if (Y.size() != n) {
        throw InvalidArgument("lbic1d: Y and grid sizes differ");
    }
    if (n < 6) {
        throw InvalidArgument("lbic1d: fourth-order residuals need M >= 5");
    }
    const double h = p.spacing();
    const auto& i = p.i();
    const auto di = derivative4(i, h);
    // corrected trapezoid: T_k - h^2/12 (i'(x_k) - i'(0)) is fourth order
    std::vector<double> I(n, 0.0);
    double t = 0.0;
    for (std::size_t k = 1; k < n; ++k) {
        t += 0.5 * h * (i[k - 1] + i[k]);
        I[k] = t - h * h / 12.0 * (di[k] - di[0]);
    }
    const auto& c = p.constants();
    NecessityResiduals out;
    out.quadratic.resize(n);
    std::vector<double> ay(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double a = c1 - c.q0 / c.mu_n * I[k];
        const double b = c2 + c.q0 / c.mu_p * I[k];
        out.quadratic[k] = a * Y[k] + di[k] - b / Y[k];
        out.max_quadratic = std::max(out.max_quadratic, std::abs(out.quadratic[k]));
        ay[k] = a * Y[k];
    }
    out.integral = 1.0 + simpson(ay, h);
    return out;
}

namespace {

struct Eval {
    bool ok = false;
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    ResidualEvaluation full;
};

Eval evaluate(const Eigen::Vector2d& c, const Problem& p, SignConvention sign)
{
    Eval e;
    e.full = attainability_residuals(c[0], c[1], p, sign);
    e.ok = e.full.ok && std::isfinite(e.full.J1) && std::isfinite(e.full.J2);
    e.r = {e.full.J1, e.full.J2};
    return e;
}

} // namespace

AttainabilityResult fit_constants(const Problem& p, double c1_init, double c2_init, const FitOptions& options)
{
    AttainabilityResult res;
    Eigen::Vector2d c(c1_init, c2_init);
    Eval cur = evaluate(c, p, options.sign);
    if (!cur.ok) {
        // Grid search over the nonpositive quadrant.
        double best = std::numeric_limits<double>::infinity();
        for (int a = 0; a <= 32; ++a) {
            for (int b = 0; b <= 32; ++b) {
                const Eigen::Vector2d t(-std::pow(10.0, -4.0 + a * 0.25), -std::pow(10.0, -4.0 + b * 0.25));
                const Eval e = evaluate(t, p, options.sign);
                if (e.ok && e.r.norm() < best) {
                    best = e.r.norm();
                    c = t;
                    cur = e;
                }
            }
        }
        if (!cur.ok) {
            res.c1 = c1_init;
            res.c2 = c2_init;
            res.diagnostics = "no evaluable starting point in the nonpositive quadrant";
            return res;
        }
        res.diagnostics = "start from grid search; ";
    }

    while (cur.r.norm() >= options.tolerance) {
        if (res.iterations >= options.max_iterations) {
            res.diagnostics += "iteration limit reached";
            break;
        }
        Eigen::Matrix2d jac;
        bool jac_ok = true;
        for (int d = 0; d < 2; ++d) {
            const double step = options.fd_step * std::max(1.0, std::abs(c[d]));
            Eigen::Vector2d cp = c;
            cp[d] += step;
            Eval e = evaluate(cp, p, options.sign);
            double s = step;
            if (!e.ok) {
                cp[d] = c[d] - step;
                e = evaluate(cp, p, options.sign);
                s = -step;
            }
            if (!e.ok) {
                jac_ok = false;
                break;
            }
            jac.col(d) = (e.r - cur.r) / s;
        }
        if (!jac_ok) {
            res.diagnostics += "Jacobian not evaluable";
            break;
        }
        const Eigen::Vector2d delta = jac.colPivHouseholderQr().solve(-cur.r);
        double t = 1.0;
        bool accepted = false;
        for (int hv = 0; hv <= options.max_halvings; ++hv, t *= 0.5) {
            const Eigen::Vector2d trial = c + t * delta;
            const Eval e = evaluate(trial, p, options.sign);
            if (e.ok && e.r.norm() < cur.r.norm()) {
                c = trial;
                cur = e;
                accepted = true;
                break;
            }
        }
        ++res.iterations;
        if (!accepted) {
            res.diagnostics += "line search failed after " + std::to_string(options.max_halvings) + " halvings";
            break;
        }
    }
    res.c1 = c[0];
    res.c2 = c[1];
    res.Y = cur.full.Y;
    res.J1 = cur.r[0];
    res.J2 = cur.r[1];
    res.converged = cur.r.norm() < options.tolerance;
    res.attainable = res.converged && cur.ok;
    if (res.converged) {
        res.diagnostics += "converged";
    }
    return res;
}

std::vector<double> reconstruct_potential(const AttainabilityResult& fit)
{
    if (!fit.attainable || fit.Y.empty()) {
        throw NumericalError("lbic1d: cannot reconstruct the potential from a failed fit (" + fit.diagnostics + ")");
    }
    std::vector<double> v(fit.Y.size());
    std::transform(fit.Y.begin(), fit.Y.end(), v.begin(), [](double y) { return -std::log(y); });
    return v;
}

FamilyMember nonuniqueness_family(const Problem& p, double c1)
{
    const Constants& c = p.constants();
    const double c1_bound = c.q0 / c.mu_n * p.I_min();
    if (!(c1 < c1_bound)) {
        throw InvalidArgument("lbic1d: family parameter c1 = " + io::format_double(c1)
                              + " violates c1 < (q0/mu_n) I_min = " + io::format_double(c1_bound));
    }
    const double c2_bound = -c.q0 / c.mu_p * p.I_max();
    auto f = [&](double c2) {
        const auto r = attainability_residuals(c1, c2, p);
        return r.ok ? r.integral : std::numeric_limits<double>::quiet_NaN();
    };
    const double scale = std::max(1.0, std::abs(c2_bound));
    double hi = c2_bound - 1e-12 * scale;
    double fhi = f(hi);
    if (!std::isfinite(fhi)) {
        hi = c2_bound - 1e-8 * scale;
        fhi = f(hi);
    }
    if (!(fhi > 0.0)) {
        throw NumericalError("lbic1d: integral equation has no admissible root for c1 = " + io::format_double(c1)
                             + " (residual " + io::format_double(fhi) + " at the upper end of the c2 range)");
    }
    double width = scale;
    double lo = hi - width;
    double flo = f(lo);
    for (int k = 0; k < 80 && !(flo < 0.0); ++k) {
        hi = lo;
        fhi = flo;
        width *= 2.0;
        lo = hi - width;
        flo = f(lo);
    }
    if (!(flo < 0.0) || !(fhi > 0.0)) {
        throw NumericalError("lbic1d: could not bracket c2 for c1 = " + io::format_double(c1));
    }
    std::uintmax_t iters = 200;
    const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi,
                                                          boost::math::tools::eps_tolerance<double>(50), iters);
    FamilyMember m;
    m.c1 = c1;
    m.c2 = 0.5 * (a + b);
    const auto r = attainability_residuals(m.c1, m.c2, p);
    if (!r.ok) {
        throw NumericalError("lbic1d: family member not evaluable at c2 = " + io::format_double(m.c2));
    }
    m.Y = r.Y;
    m.V.resize(m.Y.size());
    std::transform(m.Y.begin(), m.Y.end(), m.V.begin(), [](double y) { return -std::log(y); });
    return m;
}

SufficiencyCheck sufficiency_check(double c1, double c2, std::span<const double> Y, const Problem& p)
{
    if (Y.size() != p.x().size()) {
        throw InvalidArgument("lbic1d: Y and grid sizes differ");
    }
    const double h = p.spacing();
    SufficiencyCheck s;
    s.u_hat.assign(Y.size(), 1.0);
    s.v_hat.assign(Y.size(), 1.0);
    for (std::size_t k = 0; k + 1 < Y.size(); ++k) {
        const double fu0 = p.a(c1, k) * Y[k];
        const double fu1 = p.a(c1, k + 1) * Y[k + 1];
        const double fv0 = p.b(c2, k) / Y[k];
        const double fv1 = p.b(c2, k + 1) / Y[k + 1];
        s.u_hat[k + 1] = s.u_hat[k] + 0.5 * h * (fu0 + fu1);
        s.v_hat[k + 1] = s.v_hat[k] + 0.5 * h * (fv0 + fv1);
    }
    for (std::size_t k = 0; k < Y.size(); ++k) {
        const double target = p.i()[k] - p.i()[0];
        s.max_mismatch = std::max(s.max_mismatch, std::abs(s.v_hat[k] - s.u_hat[k] - target));
    }
    return s;
}

Problem read_problem(const std::filesystem::path& csv, Constants c, double anchor_V0)
{
    const io::CsvTable t = io::read_csv(csv);
    return {t.numeric_column("x"), t.numeric_column("i"), c, anchor_V0};
}

void write_result(const AttainabilityResult& fit, const Problem& p, const std::filesystem::path& dir)
{
    io::ensure_directory(dir);
    const nlohmann::json j = {
        {"c1", fit.c1},
        {"c2", fit.c2},
        {"J1", fit.J1},
        {"J2", fit.J2},
        {"attainable", fit.attainable},
        {"converged", fit.converged},
        {"iterations", fit.iterations},
        {"diagnostics", fit.diagnostics},
    };
    std::ofstream out(dir / "lbic1d_result.json");
    if (!out) {
        throw InvalidArgument("cannot write " + (dir / "lbic1d_result.json").string());
    }
    out << j.dump(2) << '\n';
    const std::array<std::string_view, 3> h{"x", "Y", "V"};
    io::CsvWriter w(dir / "potential.csv", h);
    for (std::size_t k = 0; k < fit.Y.size(); ++k) {
        w << p.x()[k] << fit.Y[k] << -std::log(fit.Y[k]);
        w.end_row();
    }
}

} // namespace dopinv::lbic1d
