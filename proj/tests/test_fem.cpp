#include <doctest.h>

#include "quadrature.hpp"

#include "dopinv/fem.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace dopinv;

namespace {

GeometryConfig top_and_bottom_contacts()
{
    GeometryConfig g;
    g.gamma1_lo = 0.0;
    g.gamma1_hi = 1.0;
    return g;
}

DirichletMap dirichlet_from(const Mesh& m, const std::function<double(const Point&)>& f)
{
    DirichletMap d;
    for (Index i : m.dirichlet_nodes()) {
        d[i] = f(m.node(i));
    }
    return d;
}

struct Manufactured {
    double l2_error = 0.0;
    double flux_error = 0.0;
};

// a = e^y, u = e^-y: div(a grad u) = 0, zero flux on the vertical sides and
// a du/dn = -1 on the top.
Manufactured manufactured(int n)
{
    const auto m = build_unit_square(n, top_and_bottom_contacts());
    MixedBvp p{ScalarField::from_function(m, [](const Point& x) { return std::exp(x.y); }), ScalarField(m, 0.0),
               ScalarField(m, 0.0), dirichlet_from(*m, [](const Point& x) { return std::exp(-x.y); })};
    const auto u = solve_mixed_bvp(p);
    Manufactured out;
    out.l2_error = testing::exact_l2_error(u, [](const Point& x) { return std::exp(-x.y); });
    const auto flux = boundary_flux(u, p.diffusion, BoundaryTag::Gamma1);
    for (double v : flux.values) {
        out.flux_error = std::max(out.flux_error, std::abs(v + 1.0));
    }
    return out;
}

Eigen::MatrixXd dense(const SparseMatrix& a)
{
    return Eigen::MatrixXd(a);
}

// Dense elimination oracle: x_c fixed, A_ff x_f = b_f - A_fc x_c.
Eigen::VectorXd dense_constrained_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                        const std::map<Index, double>& fixed)
{
    const auto n = a.rows();
    std::vector<Index> free;
    for (Index i = 0; i < n; ++i) {
        if (!fixed.count(i)) {
            free.push_back(i);
        }
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (const auto& [i, v] : fixed) {
        x[i] = v;
    }
    const auto nf = static_cast<Index>(free.size());
    Eigen::MatrixXd aff(nf, nf);
    Eigen::VectorXd rhs(nf);
    for (Index r = 0; r < nf; ++r) {
        rhs[r] = b[free[r]];
        for (Index c = 0; c < nf; ++c) {
            aff(r, c) = a(free[r], free[c]);
        }
        for (const auto& [i, v] : fixed) {
            rhs[r] -= a(free[r], i) * v;
        }
    }
    const Eigen::VectorXd xf = aff.fullPivLu().solve(rhs);
    for (Index r = 0; r < nf; ++r) {
        x[free[r]] = xf[r];
    }
    return x;
}

} // namespace

TEST_CASE("zero data gives the zero solution")
{
    const auto m = build_unit_square(6);
    MixedBvp p{ScalarField(m, 1.0), ScalarField(m, 0.0), ScalarField(m, 0.0),
               dirichlet_from(*m, [](const Point&) { return 0.0; })};
    const auto u = solve_mixed_bvp(p);
    for (double v : u.values()) {
        CHECK(v == 0.0);
    }
    const auto flux = boundary_flux(u, p.diffusion, BoundaryTag::Gamma1);
    for (double v : flux.values) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("constant reaction balance")
{
    const auto m = build_unit_square(5);
    MixedBvp p{ScalarField(m, 1.0), ScalarField(m, 1.0), ScalarField(m, 1.0),
               dirichlet_from(*m, [](const Point&) { return 1.0; })};
    const auto u = solve_mixed_bvp(p);
    for (double v : u.values()) {
        CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("constant field has zero flux")
{
    const auto m = build_unit_square(7);
    const ScalarField u(m, 3.5);
    const auto a = ScalarField::from_function(m, [](const Point& x) { return 1.0 + x.x * x.y; });
    for (auto tag : {BoundaryTag::Gamma1, BoundaryTag::DirichletOther}) {
        for (double v : boundary_flux(u, a, tag).values) {
            CHECK(std::abs(v) < 1e-12);
        }
    }
}

TEST_CASE("manufactured solution converges at second order")
{
    const auto coarse = manufactured(16);
    const auto fine = manufactured(32);
    const double order = std::log2(coarse.l2_error / fine.l2_error);
    CHECK(order >= 1.9);
    CHECK(fine.flux_error < 1e-2);
}

TEST_CASE("unit Laplacian matches the five-point stencil")
{
    // On the diagonal-split grid the P1 Laplacian has no diagonal couplings.
    const int n = 5;
    const auto m = build_unit_square(n);
    const ScalarField one(m, 1.0);
    const Eigen::MatrixXd k = dense(assemble_stiffness(*m, one.values()));
    for (int j = 1; j < n; ++j) {
        for (int i = 1; i < n; ++i) {
            const Index c = m->node_index(i, j);
            CHECK(k(c, c) == doctest::Approx(4.0));
            CHECK(k(c, m->node_index(i + 1, j)) == doctest::Approx(-1.0));
            CHECK(k(c, m->node_index(i - 1, j)) == doctest::Approx(-1.0));
            CHECK(k(c, m->node_index(i, j + 1)) == doctest::Approx(-1.0));
            CHECK(k(c, m->node_index(i, j - 1)) == doctest::Approx(-1.0));
            CHECK(std::abs(k(c, m->node_index(i + 1, j + 1))) < 1e-14);
            CHECK(std::abs(k(c, m->node_index(i - 1, j - 1))) < 1e-14);
        }
    }
    // rows sum to zero: constants are in the kernel
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(k.cols());
    CHECK((k * ones).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("lumped and consistent mass agree on totals")
{
    const auto m = build_unit_square(9);
    const auto lumped = lumped_mass(*m);
    double total = 0.0;
    for (double v : lumped) {
        total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
    const Eigen::MatrixXd mass = dense(assemble_mass(*m));
    CHECK(mass.sum() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("eliminated operator is symmetric positive definite")
{
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> coef(0.5, 3.0);
    const auto m = build_unit_square(4);
    std::vector<double> a(static_cast<std::size_t>(m->node_count()));
    std::vector<double> c(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = coef(rng);
        c[i] = coef(rng) - 0.5;
    }
    SparseMatrix k = assemble_stiffness(*m, a);
    const auto r = assemble_lumped_reaction(*m, c);
    for (Index i = 0; i < m->node_count(); ++i) {
        k.coeffRef(i, i) += r[static_cast<std::size_t>(i)];
    }
    const ConstrainedSystem sys(k, m->dirichlet_nodes());
    const auto& free = sys.free_dofs();
    Eigen::MatrixXd kff(free.size(), free.size());
    const Eigen::MatrixXd kd = dense(k);
    for (std::size_t r0 = 0; r0 < free.size(); ++r0) {
        for (std::size_t c0 = 0; c0 < free.size(); ++c0) {
            kff(r0, c0) = kd(free[r0], free[c0]);
        }
    }
    CHECK((kff - kff.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(kff);
    CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("singular problem is reported")
{
    GeometryConfig g;
    g.gamma1_lo = 0.0;
    g.gamma1_hi = 0.5;
    const auto m = build_unit_square(4, g);
    MixedBvp p{ScalarField(m, 1.0), ScalarField(m, 0.0), ScalarField(m, 1.0), {}};
    CHECK_THROWS(solve_mixed_bvp(p));
}

TEST_CASE("mixed solve matches a dense elimination")
{
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> coef(0.5, 2.0);
    const auto m = build_unit_square(3);
    auto a = ScalarField(m, 0.0);
    auto c = ScalarField(m, 0.0);
    auto f = ScalarField(m, 0.0);
    for (Index i = 0; i < m->node_count(); ++i) {
        a[i] = coef(rng);
        c[i] = coef(rng);
        f[i] = coef(rng) - 1.0;
    }
    const auto d = dirichlet_from(*m, [](const Point& x) { return std::sin(3.0 * x.x) + x.y; });
    const auto u = solve_mixed_bvp({a, c, f, d});

    Eigen::MatrixXd k = dense(assemble_stiffness(*m, a.values()));
    const auto r = assemble_lumped_reaction(*m, c.values());
    const auto load = assemble_load(*m, f.values());
    Eigen::VectorXd b(m->node_count());
    for (Index i = 0; i < m->node_count(); ++i) {
        k(i, i) += r[static_cast<std::size_t>(i)];
        b[i] = load[static_cast<std::size_t>(i)];
    }
    const auto x = dense_constrained_solve(k, b, d);
    for (Index i = 0; i < m->node_count(); ++i) {
        CHECK(u[i] == doctest::Approx(x[i]).epsilon(1e-10));
    }
}

TEST_CASE("coupled solve matches a dense block elimination")
{
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> coef(0.5, 2.0);
    const auto m = build_unit_square(2);
    const Index n = m->node_count();
    for (int sign : {+1, -1}) {
        CoupledBvp p;
        p.diffusion_u = ScalarField(m, 0.0);
        p.diffusion_v = ScalarField(m, 0.0);
        p.coupling = ScalarField(m, 0.0);
        p.sign = sign;
        for (Index i = 0; i < n; ++i) {
            p.diffusion_u[i] = coef(rng);
            p.diffusion_v[i] = coef(rng);
            p.coupling[i] = coef(rng);
        }
        p.dirichlet_u = dirichlet_from(*m, [](const Point& x) { return 1.0 - x.y + 0.3 * x.x; });
        p.dirichlet_v = dirichlet_from(*m, [](const Point& x) { return x.x * x.x - 0.5; });
        const auto [u, v] = solve_coupled_bvp(p);

        const Eigen::MatrixXd a = dense(assemble_coupled(p));
        REQUIRE(a.rows() == 2 * n);
        CHECK((a - a.transpose()).cwiseAbs().maxCoeff() < 1e-14);
        std::map<Index, double> fixed;
        for (const auto& [i, val] : p.dirichlet_u) {
            fixed[i] = val;
        }
        for (const auto& [i, val] : p.dirichlet_v) {
            fixed[n + i] = val;
        }
        const auto x = dense_constrained_solve(a, Eigen::VectorXd::Zero(2 * n), fixed);
        for (Index i = 0; i < n; ++i) {
            CHECK(u[i] == doctest::Approx(x[i]).epsilon(1e-10));
            CHECK(v[i] == doctest::Approx(x[n + i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("coupling block follows the lumped reaction")
{
    const auto m = build_unit_square(4);
    const Index n = m->node_count();
    CoupledBvp p;
    p.diffusion_u = ScalarField(m, 1.0);
    p.diffusion_v = ScalarField(m, 2.0);
    p.coupling = ScalarField(m, 0.7);
    p.sign = -1;
    const Eigen::MatrixXd a = dense(assemble_coupled(p));
    const auto lm = lumped_mass(*m);
    const Eigen::MatrixXd ku = dense(assemble_stiffness(*m, p.diffusion_u.values()));
    const Eigen::MatrixXd kv = dense(assemble_stiffness(*m, p.diffusion_v.values()));
    for (Index i = 0; i < n; ++i) {
        const double q = 0.7 * lm[static_cast<std::size_t>(i)];
        CHECK(a(i, i) == doctest::Approx(ku(i, i) + q));
        CHECK(a(n + i, n + i) == doctest::Approx(kv(i, i) + q));
        CHECK(a(i, n + i) == doctest::Approx(-q));
        CHECK(a(n + i, i) == doctest::Approx(-q));
    }
}

TEST_CASE("uncoupled system splits into two scalar solves")
{
    const auto m = build_unit_square(8);
    CoupledBvp p;
    p.diffusion_u = ScalarField::from_function(m, [](const Point& x) { return 1.0 + x.x; });
    p.diffusion_v = ScalarField::from_function(m, [](const Point& x) { return 2.0 - x.y; });
    p.coupling = ScalarField(m, 0.0);
    p.dirichlet_u = dirichlet_from(*m, [](const Point& x) { return x.x; });
    p.dirichlet_v = dirichlet_from(*m, [](const Point& x) { return x.y * x.x; });
    const auto [u, v] = solve_coupled_bvp(p);
    const auto u1 = solve_mixed_bvp({p.diffusion_u, ScalarField(m, 0.0), ScalarField(m, 0.0), p.dirichlet_u});
    const auto v1 = solve_mixed_bvp({p.diffusion_v, ScalarField(m, 0.0), ScalarField(m, 0.0), p.dirichlet_v});
    for (Index i = 0; i < m->node_count(); ++i) {
        CHECK(u[i] == doctest::Approx(u1[i]).epsilon(1e-11));
        CHECK(v[i] == doctest::Approx(v1[i]).epsilon(1e-11));
    }
}

TEST_CASE("decoupled antisymmetric data gives v = -u")
{
    const auto m = build_unit_square(6);
    CoupledBvp p;
    p.diffusion_u = ScalarField(m, 1.0);
    p.diffusion_v = ScalarField(m, 1.0);
    p.coupling = ScalarField(m, 0.0);
    const auto phi = [](const Point& x) { return std::cos(2.0 * x.x) * (1.0 - x.y); };
    p.dirichlet_u = dirichlet_from(*m, [&](const Point& x) { return -phi(x); });
    p.dirichlet_v = dirichlet_from(*m, phi);
    const auto [u, v] = solve_coupled_bvp(p);
    for (Index i = 0; i < m->node_count(); ++i) {
        CHECK(v[i] == doctest::Approx(-u[i]).epsilon(1e-12));
    }
}

TEST_CASE("flipped coupling with symmetric data gives u = v")
{
    const auto m = build_unit_square(6);
    CoupledBvp p;
    p.diffusion_u = ScalarField::from_function(m, [](const Point& x) { return 1.0 + x.x * x.y; });
    p.diffusion_v = p.diffusion_u;
    p.coupling = ScalarField::from_function(m, [](const Point& x) { return 2.0 + x.y; });
    p.sign = -1;
    p.dirichlet_u = dirichlet_from(*m, [](const Point& x) { return x.y; });
    p.dirichlet_v = p.dirichlet_u;
    const auto [u, v] = solve_coupled_bvp(p);
    for (Index i = 0; i < m->node_count(); ++i) {
        CHECK(u[i] == doctest::Approx(v[i]).epsilon(1e-12));
    }
}

TEST_CASE("reciprocity of the Dirichlet-to-Neumann pairing")
{
    // Both inputs live on the full Dirichlet boundary; fluxes are collected on
    // both tagged contacts.
    const auto m = build_unit_square(12);
    const auto a = ScalarField::from_function(m, [](const Point& x) { return 1.0 + 0.5 * std::sin(4.0 * x.x * x.y); });
    const auto g1 = [](const Point& x) { return std::exp(-10.0 * (x.x - 0.3) * (x.x - 0.3)); };
    const auto g2 = [](const Point& x) { return x.x * (1.0 - x.x) + x.y; };
    const auto u1 = solve_mixed_bvp({a, ScalarField(m, 0.0), ScalarField(m, 0.0), dirichlet_from(*m, g1)});
    const auto u2 = solve_mixed_bvp({a, ScalarField(m, 0.0), ScalarField(m, 0.0), dirichlet_from(*m, g2)});
    const auto pair = [&](const ScalarField& u, const std::function<double(const Point&)>& g) {
        double s = 0.0;
        for (auto tag : {BoundaryTag::Gamma1, BoundaryTag::DirichletOther}) {
            const auto f = boundary_flux(u, a, tag);
            for (std::size_t k = 0; k < f.size(); ++k) {
                s += f.values[k] * f.weights[k] * g(f.points[k]);
            }
        }
        return s;
    };
    const double s12 = pair(u1, g2);
    const double s21 = pair(u2, g1);
    CHECK(std::abs(s12 - s21) <= 1e-8 * std::abs(s12));
}

TEST_CASE("norms on the unit square")
{
    const auto m = build_unit_square(10);
    CHECK(l2_norm(ScalarField(m, 1.0)) == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(l2_norm(ScalarField(m, 0.0)) == 0.0);

    auto t = make_trace(*m, BoundaryTag::Gamma1);
    CHECK(t.measure() == doctest::Approx(0.5).epsilon(1e-14));
    std::fill(t.values.begin(), t.values.end(), 1.0);
    CHECK(trace_norm(t) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-14));
    for (double w : t.weights) {
        CHECK(w > 0.0);
    }

    // x is linear, so the consistent mass integrates x^2 exactly
    const auto x = ScalarField::from_function(m, [](const Point& p) { return p.x; });
    CHECK(l2_inner(x, x) == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

    const auto other = build_unit_square(5);
    CHECK_THROWS_AS(l2_inner(x, ScalarField(other, 1.0)), InvalidArgument);
}

TEST_CASE("junction samples mark Gamma1 nodes next to Neumann edges")
{
    const auto m = build_unit_square(8);
    const auto t = make_trace(*m, BoundaryTag::Gamma1);
    const auto mask = junction_samples(*m, t);
    REQUIRE(mask.size() == t.size());
    int marked = 0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
        if (mask[k]) {
            ++marked;
            const auto& p = t.points[k];
            // the two ends of the contact: (1/2, 1) and the (0, 1) corner
            CHECK(((p.x == 0.5) || (p.x == 0.0)));
        }
    }
    CHECK(marked == 2);

    auto z = t;
    std::fill(z.values.begin(), z.values.end(), 2.0);
    zero_samples(z, mask);
    for (std::size_t k = 0; k < z.size(); ++k) {
        CHECK(z.values[k] == (mask[k] ? 0.0 : 2.0));
    }
    zero_samples(z, {});
    CHECK_THROWS_AS(zero_samples(z, std::vector<char>(3, 1)), InvalidArgument);
}
