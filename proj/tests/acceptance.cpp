// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria.

#include "dopinv/device.hpp"
#include "dopinv/experiment.hpp"
#include "dopinv/inversion.hpp"
#include "dopinv/lbic1d.hpp"
#include "quadrature.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace dopinv;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body)
{
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) {
        ++failures;
    }
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), dt);
    std::fflush(stdout);
}

std::string fmt(const char* f, double a)
{
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch(const std::string& name)
{
    const auto dir = fs::temp_directory_path() / ("dopinv_acceptance_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

DirichletMap dirichlet_from(const Mesh& m, const std::function<double(const Point&)>& f)
{
    DirichletMap d;
    for (Index i : m.dirichlet_nodes()) {
        d[i] = f(m.node(i));
    }
    return d;
}

ScalarField phantom_on(const MeshPtr& m)
{
    return ScalarField::from_function(m, make_phantom(PhantomSpec{}));
}

// -- 1 ----------------------------------------------------------------------

Outcome fem_convergence()
{
    const auto t0 = std::chrono::steady_clock::now();
    GeometryConfig g;
    g.gamma1_hi = 1.0;
    double err[2] = {};
    double flux_err = 0.0;
    int idx = 0;
    for (int n : {16, 32}) {
        const auto m = build_unit_square(n, g);
        const MixedBvp p{ScalarField::from_function(m, [](const Point& x) { return std::exp(x.y); }),
                         ScalarField(m, 0.0), ScalarField(m, 0.0),
                         dirichlet_from(*m, [](const Point& x) { return std::exp(-x.y); })};
        const auto u = solve_mixed_bvp(p);
        err[idx++] = testing::exact_l2_error(u, [](const Point& x) { return std::exp(-x.y); });
        if (n == 32) {
            for (double v : boundary_flux(u, p.diffusion, BoundaryTag::Gamma1).values) {
                flux_err = std::max(flux_err, std::abs(v + 1.0));
            }
        }
    }
    const double order = std::log2(err[0] / err[1]);
    const double dt = seconds_since(t0);
    return {order >= 1.9 && flux_err < 1e-2 && dt < 10.0,
            fmt("order %.3f", order) + fmt(", top flux error %.2e", flux_err)};
}

// -- 2 ----------------------------------------------------------------------

Outcome adjoint_identity()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937 rng(2024);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto m = build_unit_square(8);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const double cx = unit(rng);
        const double cy = unit(rng);
        const double amp = 2.0 * unit(rng);
        const auto gamma = ScalarField::from_function(m, [&](const Point& p) {
            return 0.5 + amp * std::exp(-6.0 * ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)));
        });
        ScalarField h(m, 0.0);
        for (auto& v : h.data()) {
            v = unit(rng) - 0.5;
        }
        auto z = make_trace(*m, BoundaryTag::Gamma1);
        for (auto& v : z.values) {
            v = unit(rng) - 0.5;
        }
        const InputProfile prof{0.15 + 0.7 * unit(rng), 0.1 + 0.2 * unit(rng), 1.0};
        const double exact = l2_inner(adjoint_gradient(gamma, prof, z), h);
        const double t = 1e-5;
        auto gp = gamma;
        auto gm = gamma;
        for (Index i = 0; i < m->node_count(); ++i) {
            gp[i] += t * h[i];
            gm[i] -= t * h[i];
        }
        const double fd = (trace_inner(unipolar_forward(gp, prof).trace, z) -
                           trace_inner(unipolar_forward(gm, prof).trace, z)) /
                          (2.0 * t);
        worst = std::max(worst, std::abs(exact - fd) / std::abs(fd));
    }
    return {worst < 1e-4 && seconds_since(t0) < 30.0, fmt("worst relative error %.2e over 20 triples", worst)};
}

// -- 3 ----------------------------------------------------------------------

Outcome reciprocity()
{
    // <F(gamma) U, z>_Gamma1 against the flux of the z-field paired with U on
    // the other contact.
    std::mt19937 rng(77);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto m = build_unit_square(16);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const double cx = unit(rng);
        const double cy = unit(rng);
        const double amp = 3.0 * unit(rng);
        const auto gamma = ScalarField::from_function(m, [&](const Point& p) {
            return 0.3 + amp * std::exp(-5.0 * ((p.x - cx) * (p.x - cx) + (p.y - cy) * (p.y - cy)));
        });
        const UnipolarOperator op(gamma);
        const InputProfile prof{0.2 + 0.6 * unit(rng), 0.1 + 0.2 * unit(rng), 1.0};
        const auto fwd = op.forward(prof);
        auto z = make_trace(*m, BoundaryTag::Gamma1);
        for (auto& v : z.values) {
            v = unit(rng) - 0.5;
        }
        const auto phi = op.adjoint(z);
        const Eigen::Map<const Eigen::VectorXd> pv(phi.values().data(), m->node_count());
        const Eigen::VectorXd r = op.stiffness() * pv;
        const auto flux = flux_from_residual(*m, std::span<const double>(r.data(), static_cast<std::size_t>(r.size())),
                                             BoundaryTag::DirichletOther);
        double rhs = 0.0;
        for (std::size_t k = 0; k < flux.size(); ++k) {
            rhs += flux.values[k] * flux.weights[k] * prof(flux.points[k].x);
        }
        const double lhs = trace_inner(fwd.trace, z);
        worst = std::max(worst, std::abs(lhs - rhs) / std::abs(lhs));
    }
    return {worst < 1e-8, fmt("worst relative asymmetry %.2e over 5 coefficients", worst)};
}

// -- 4 ----------------------------------------------------------------------

Outcome equilibrium()
{
    const auto m = build_unit_square(16);
    double const_err = 0.0;
    for (double C : {-20.0, -1.0, 0.0, 2.0 * std::sinh(1.0), 7.5, 50.0}) {
        const auto r = solve_equilibrium(DopingProfile::from_field(ScalarField(m, C)), 0.01, Polarity::Bipolar);
        for (double v : r.V.values()) {
            const_err = std::max(const_err, std::abs(v - std::asinh(0.5 * C)));
        }
    }
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool decreasing = true;
    double bound_violation = 0.0;
    double final_residual = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<std::array<double, 4>> bumps;
        for (int k = 0; k < 3; ++k) {
            bumps.push_back({unit(rng), unit(rng), 40.0 * (unit(rng) - 0.5), 0.1 + 0.2 * unit(rng)});
        }
        const auto C = ScalarField::from_function(m, [&](const Point& p) {
            double s = 0.0;
            for (const auto& b : bumps) {
                s += b[2] * std::exp(-((p.x - b[0]) * (p.x - b[0]) + (p.y - b[1]) * (p.y - b[1])) / (b[3] * b[3]));
            }
            return s;
        });
        const auto doping = DopingProfile::from_field(C);
        EquilibriumOptions opt;
        opt.dirichlet = balanced_dirichlet(C, Polarity::Bipolar);
        const auto r = solve_equilibrium(doping, 0.01, Polarity::Bipolar, opt);
        for (std::size_t k = 1; k < r.residual_history.size(); ++k) {
            decreasing = decreasing && r.residual_history[k] < r.residual_history[k - 1];
        }
        final_residual = std::max(final_residual, r.residual_history.back());
        const auto b = equilibrium_bounds(doping, *opt.dirichlet);
        bound_violation = std::max({bound_violation, b.lower - r.V.min(), r.V.max() - b.upper});
    }
    return {const_err < 1e-8 && decreasing && bound_violation <= 1e-6 && final_residual < 1e-10,
            fmt("constant-case error %.2e", const_err) + fmt(", bound violation %.2e", std::max(0.0, bound_violation)) +
                (decreasing ? ", residuals strictly decreasing" : ", residual increase observed") +
                fmt(", final residual %.1e", final_residual)};
}

// -- 5 ----------------------------------------------------------------------

Outcome fixed_point()
{
    const auto m = build_unit_square(44);
    const auto truth = phantom_on(m);
    const auto data = measure(truth, equispaced_profiles(9));
    ReconstructionConfig cfg;
    cfg.smoothing = 0.1;
    const LandweberKaczmarz lk(data, cfg, truth);
    ReconstructionState s{truth, 0, 0, 0};
    double worst = 0.0;
    for (int k = 0; k < 5 * 9; ++k) {
        StepReport rep;
        s = lk.step(s, &rep);
        worst = std::max(worst, rep.update_norm);
    }
    const double bound = 1e-8 * l2_norm(truth);
    return {worst < bound, fmt("max update norm %.2e", worst) + fmt(" (bound %.2e) over 5 cycles", bound)};
}

// -- 6, 7, 8 ----------------------------------------------------------------

json invert_config(json inputs, double noise, std::uint64_t seed)
{
    return json{{"mode", "invert"},
                {"mesh", {{"fine_n", 88}, {"coarse_n", 44}}},
                {"inputs", std::move(inputs)},
                {"noise", {{"level", noise}, {"seed", seed}}},
                {"reconstruction", {{"max_cycles", 500}, {"tau", 1.5}, {"margin", 0.1}, {"smoothing", 0.1}}}};
}

Outcome nine_source_protocol()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = scratch("n9_exact");
    const auto s = run_experiment(parse_config(invert_config({{"count", 9}}, 0.0, 1)), dir);
    const double e0 = s.at("initial_error").get<double>();
    const double e1 = s.at("final_error").get<double>();
    const int cycles = s.at("cycles").get<int>();
    fs::remove_all(dir);
    const double dt = seconds_since(t0);
    return {e1 <= 0.5 * e0 && cycles <= 500 && dt < 600.0,
            fmt("error %.4f", e0) + fmt(" -> %.4f", e1) + fmt(" (ratio %.3f)", e1 / e0) +
                fmt(" after %.0f cycles, stop: ", cycles) + s.at("stop_reason").get<std::string>()};
}

Outcome noisy()
{
    const auto dir = scratch("n9_noise");
    const auto s = run_experiment(parse_config(invert_config({{"count", 9}}, 0.10, 1)), dir);
    fs::remove_all(dir);
    const bool fired = s.at("discrepancy_fired").get<bool>();
    const int cycles = s.at("cycles").get<int>();
    const double e0 = s.at("initial_error").get<double>();
    const double e1 = s.at("final_error").get<double>();
    return {fired && cycles < 500 && e1 <= e0,
            std::string(fired ? "discrepancy fired" : "discrepancy did not fire") + fmt(" at cycle %.0f", cycles) +
                fmt(", error %.4f", e0) + fmt(" -> %.4f", e1)};
}

Outcome locality()
{
    const auto right = scratch("single_right");
    const auto left = scratch("single_left");
    run_experiment(parse_config(invert_config({{"count", 1}, {"centers", {0.75}}, {"half_width", 0.125}}, 0.0, 1)),
                   right);
    run_experiment(parse_config(invert_config({{"count", 1}, {"centers", {0.25}}, {"half_width", 0.125}}, 0.0, 1)),
                   left);
    const auto report = compare_runs(right, left);
    fs::remove_all(right);
    fs::remove_all(left);
    const auto& a = report.at("run_a");
    const auto& b = report.at("run_b");
    const double an = a.at("near_error").get<double>();
    const double af = a.at("far_error").get<double>();
    const double bn = b.at("near_error").get<double>();
    const double bf = b.at("far_error").get<double>();
    return {an < af && bn < bf, fmt("source 6/8: near %.4f", an) + fmt(" far %.4f", af) +
                                    fmt("; source 2/8: near %.4f", bn) + fmt(" far %.4f", bf)};
}

// -- 9, 10 ------------------------------------------------------------------

const lbic1d::Constants kLbic{1.0, 1.0, 0.3};

std::vector<double> lbic_potential(const std::vector<double>& x)
{
    std::vector<double> v(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        v[k] = 0.5 * x[k] + 0.2 * std::sin(M_PI * x[k]);
    }
    return v;
}

Outcome lbic_round_trip()
{
    // Measurements on M = 256 sampled from a 16x finer forward solve; the
    // identity is evaluated with fourth-order data derivatives so that the
    // check is not swamped by the O(h^2) of centered differences.
    const int M = 256;
    const int refine = 16;
    const auto xf = lbic1d::uniform_grid(M * refine);
    const auto fine = lbic1d::solve_1d_forward(xf, lbic_potential(xf), kLbic);
    const auto x = lbic1d::uniform_grid(M);
    const auto V0 = lbic_potential(x);
    std::vector<double> i(x.size());
    std::vector<double> Y(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        i[k] = fine.i[k * refine];
        Y[k] = std::exp(-V0[k]);
    }
    const lbic1d::Problem p(x, i, kLbic, V0.front());
    const auto nec = lbic1d::necessity_residuals(fine.c1, fine.c2, Y, p);
    double second = 0.0;
    for (double r : lbic1d::quadratic_residual(fine.c1, fine.c2, Y, p)) {
        second = std::max(second, std::abs(r));
    }

    const auto fit = lbic1d::fit_constants(p, -1.0, -1.0);
    const auto V = lbic1d::reconstruct_potential(fit);
    double verr = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        verr = std::max(verr, std::abs(V[k] - V0[k]));
    }
    const bool ok = fit.converged && fit.attainable && verr < 1e-3 && nec.max_quadratic < 1e-6 &&
                    std::abs(nec.integral) < 1e-6 && fit.c1 <= 1e-10 && fit.c2 <= 1e-10;
    return {ok, fmt("max potential error %.2e", verr) + fmt(", necessity residuals %.2e", nec.max_quadratic) +
                    fmt(" / %.2e", std::abs(nec.integral)) + fmt(" (second-order evaluation %.2e)", second) +
                    fmt(", c1 = %.6f", fit.c1) + fmt(", c2 = %.6f", fit.c2)};
}

Outcome family_witness()
{
    const int M = 256;
    const auto x = lbic1d::uniform_grid(M);
    const auto V0 = lbic_potential(x);
    const auto fwd = lbic1d::solve_1d_forward(x, V0, kLbic);
    const lbic1d::Problem p(x, fwd.i, kLbic, V0.front());
    const auto fit = lbic1d::fit_constants(p, -1.0, -1.0);
    if (!fit.converged) {
        return {false, "fit did not converge"};
    }
    const double h = 1.0 / M;
    std::vector<lbic1d::FamilyMember> members;
    double worst = 0.0;
    for (double dc : {-1.0, -0.5, -0.2}) {
        members.push_back(lbic1d::nonuniqueness_family(p, fit.c1 + dc));
        const auto i = lbic1d::solve_1d_forward(x, members.back().V, kLbic).i;
        for (std::size_t k = 0; k < x.size(); ++k) {
            worst = std::max(worst, std::abs(i[k] - p.i()[k]));
        }
    }
    members.push_back(lbic1d::nonuniqueness_family(p, fit.c1));
    bool monotone = true;
    for (std::size_t m = 0; m + 1 < members.size(); ++m) {
        for (std::size_t k = 1; k + 1 < x.size(); ++k) {
            monotone = monotone && members[m].V[k] > members[m + 1].V[k];
        }
    }
    return {worst < 10.0 * h * h && monotone,
            fmt("3 members off the optimum reproduce i within %.2e", worst) + fmt(" (bound %.2e)", 10.0 * h * h) +
                (monotone ? ", strictly ordered in c1" : ", ordering violated")};
}

// -- 11 ---------------------------------------------------------------------

Outcome doping_round_trip()
{
    const double lambda2 = 0.05;
    const auto C_of = [](const Point& p) {
        return 1.0 + 2.0 * std::exp(-((p.x - 0.5) * (p.x - 0.5) + (p.y - 0.4) * (p.y - 0.4)) / 0.08);
    };
    double err[2] = {};
    int idx = 0;
    for (int n : {32, 64}) {
        const auto m = build_unit_square(n);
        const auto C = ScalarField::from_function(m, C_of);
        const auto eq = solve_equilibrium(DopingProfile::from_field(C), lambda2, Polarity::Unipolar);
        auto gamma = eq.V;
        for (auto& v : gamma.data()) {
            v = std::exp(v);
        }
        const auto rec = recover_doping(gamma, lambda2, C);
        auto e = rec;
        for (Index i = 0; i < m->node_count(); ++i) {
            e[i] -= C[i];
        }
        err[idx++] = l2_norm(e);
    }
    const double order = std::log2(err[0] / err[1]);
    return {order >= 1.8, fmt("L2 error %.2e", err[0]) + fmt(" (n=32), %.2e", err[1]) + fmt(" (n=64), order %.3f", order)};
}

// -- 12 ---------------------------------------------------------------------

std::map<std::string, std::string> numeric_outputs(const fs::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file() && (e.path().extension() == ".csv" || e.path().filename() == "summary.json")) {
            out[fs::relative(e.path(), dir).string()] = slurp(e.path());
        }
    }
    return out;
}

Outcome determinism()
{
    const std::vector<json> configs{
        json{{"mode", "invert"},
             {"mesh", {{"fine_n", 32}, {"coarse_n", 16}}},
             {"noise", {{"level", 0.1}, {"seed", 5}}},
             {"reconstruction", {{"max_cycles", 5}, {"smoothing", 0.1}, {"snapshot_every", 2}}}},
        json{{"mode", "lbic1d"}, {"lbic1d", {{"M", 128}, {"family_c1", {-2.0}}}}},
        json{{"mode", "forward"}, {"forward", {{"model", "bipolar"}}}, {"mesh", {{"coarse_n", 16}, {"fine_n", 32}}},
             {"scaled", {{"lambda2", 0.01}}}}};
    std::size_t files = 0;
    for (std::size_t k = 0; k < configs.size(); ++k) {
        const auto cfg = parse_config(configs[k]);
        const auto a = scratch("det_a" + std::to_string(k));
        const auto b = scratch("det_b" + std::to_string(k));
        run_experiment(cfg, a);
        run_experiment(cfg, b);
        const auto fa = numeric_outputs(a);
        const auto fb = numeric_outputs(b);
        fs::remove_all(a);
        fs::remove_all(b);
        if (fa != fb || fa.empty()) {
            return {false, "outputs differ for mode " + cfg.mode};
        }
        files += fa.size();
    }
    return {true, std::to_string(files) + " output files byte-identical across repeated runs of 3 modes"};
}

} // namespace

int main()
{
    criterion(1, "FEM convergence", fem_convergence);
    criterion(2, "adjoint identity", adjoint_identity);
    criterion(3, "reciprocity", reciprocity);
    criterion(4, "equilibrium solver", equilibrium);
    criterion(5, "fixed point", fixed_point);
    criterion(6, "nine-source reconstruction", nine_source_protocol);
    criterion(7, "noisy reconstruction", noisy);
    criterion(8, "single-source locality", locality);
    criterion(9, "LBIC 1D round trip", lbic_round_trip);
    criterion(10, "nonuniqueness witness", family_witness);
    criterion(11, "doping round trip", doping_round_trip);
    criterion(12, "determinism", determinism);
    std::printf("%d of 12 criteria failed\n", failures);
    return failures;
}
