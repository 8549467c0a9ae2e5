#include <doctest.h>

#include "dopinv/device.hpp"

#include <cmath>
#include <filesystem>
#include <random>

using namespace dopinv;

namespace {

// Smooth random profile: a few Gaussian bumps of either sign.
ScalarField random_profile(const MeshPtr& m, std::mt19937& rng, double scale)
{
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<std::array<double, 4>> bumps;
    for (int k = 0; k < 3; ++k) {
        bumps.push_back({unit(rng), unit(rng), scale * (2.0 * unit(rng) - 1.0), 0.15 + 0.2 * unit(rng)});
    }
    return ScalarField::from_function(m, [&](const Point& p) {
        double s = 0.0;
        for (const auto& b : bumps) {
            const double r2 = (p.x - b[0]) * (p.x - b[0]) + (p.y - b[1]) * (p.y - b[1]);
            s += b[2] * std::exp(-r2 / (b[3] * b[3]));
        }
        return s;
    });
}

} // namespace

TEST_CASE("scaling of the silicon table")
{
    const PhysicalParameters phys;
    const auto s = scale_parameters(phys);
    CHECK(s.lambda2 == doctest::Approx(11.9 * 8.85e-14 / (1.6e-19 * 0.0259)).epsilon(1e-14));
    CHECK(s.delta2 == phys.n_i);
    CHECK(s.mu_n == doctest::Approx(1.6e-19 * 0.0259 * 1500.0).epsilon(1e-14));

    PhysicalParameters ones{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    const auto u = scale_parameters(ones);
    CHECK(u.lambda2 == 1.0);
    CHECK(u.delta2 == 1.0);
}

TEST_CASE("nonpositive physical parameters are rejected")
{
    PhysicalParameters phys;
    phys.tau_p = 0.0;
    CHECK_THROWS_AS(phys.validate(), InvalidArgument);
}

TEST_CASE("physical parameters survive a file round trip")
{
    PhysicalParameters phys;
    phys.mu_p = 480.5;
    const auto path = std::filesystem::temp_directory_path() / "dopinv_phys_test.json";
    save_physical_parameters(phys, path);
    const auto back = load_physical_parameters(path);
    CHECK(back.mu_p == 480.5);
    CHECK(back.eps_s == phys.eps_s);
    std::filesystem::remove(path);
}

TEST_CASE("built-in potential")
{
    PhysicalParameters phys;
    const auto zero = built_in_potential(0.0, phys);
    CHECK(zero.n_D == doctest::Approx(phys.n_i));
    CHECK(zero.p_D == doctest::Approx(phys.n_i));
    CHECK(std::abs(zero.V_bi) < 1e-15);

    const auto three = built_in_potential(3.0 * phys.n_i, phys);
    CHECK(three.n_D == doctest::Approx(0.5 * (3.0 + std::sqrt(13.0)) * phys.n_i).epsilon(1e-14));
    CHECK(three.V_bi == doctest::Approx(phys.U_T * std::log(0.5 * (3.0 + std::sqrt(13.0)))).epsilon(1e-14));

    for (double c : {-1e18, -3e12, -1.0, 2.0, 5e10, 1e16, 1e19}) {
        const auto b = built_in_potential(c, phys);
        CHECK(b.n_D * b.p_D == doctest::Approx(phys.n_i * phys.n_i).epsilon(1e-12));
    }
}

TEST_CASE("recombination rates")
{
    RecombinationModel au;
    au.kind = RecombinationKind::Auger;
    au.n_i = 1.0;
    au.C_n = 1.0;
    au.C_p = 1.0;
    CHECK(recombination_rate(2.0, 1.0, au) == doctest::Approx(3.0));
    CHECK(recombination_rate(1.0, 1.0, au) == 0.0);

    RecombinationModel srh;
    srh.kind = RecombinationKind::SRH;
    srh.srh_variant = SrhVariant::SingleTau;
    srh.n_i = 1.0;
    srh.tau_p = 1.0;
    srh.tau_n = 5.0;
    CHECK(recombination_rate(1.0, 1.0, srh) == 0.0);
    // single_tau: tau_p (n + n_i) + tau_p (p + n_i) = 3 + 2
    CHECK(recombination_rate(2.0, 1.0, srh) == doctest::Approx(1.0 / 5.0));
    srh.srh_variant = SrhVariant::Standard;
    // standard: tau_p (n + n_i) + tau_n (p + n_i) = 3 + 10
    CHECK(recombination_rate(2.0, 1.0, srh) == doctest::Approx(1.0 / 13.0));

    CHECK_THROWS(recombination_rate(-2.0, -1.0, srh));

    RecombinationModel none;
    CHECK(recombination_rate(4.0, 3.0, none) == 0.0);
}

TEST_CASE("recombination field is nonnegative")
{
    const auto m = build_unit_square(6);
    const auto V = ScalarField::from_function(m, [](const Point& p) { return 3.0 * std::sin(5.0 * p.x) - p.y; });
    for (auto kind : {RecombinationKind::SRH, RecombinationKind::Auger, RecombinationKind::None}) {
        auto model = RecombinationModel::from_physical(kind, PhysicalParameters{});
        model.n_i = 1.0;
        const auto q = q0_field(V, model, 1.0);
        CHECK(q.min() >= 0.0);
    }
}

TEST_CASE("zero space charge transforms")
{
    CHECK(zsc_conductivity(0.0) == 1.0);
    CHECK(zsc_doping(1.0) == 0.0);
    CHECK(zsc_conductivity(0.5 * std::sinh(1.0)) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));
    CHECK_THROWS_AS(zsc_doping(0.0), InvalidArgument);
    CHECK_THROWS_AS(zsc_doping(-1.0), InvalidArgument);

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> c(-10.0, 10.0);
    for (int k = 0; k < 1000; ++k) {
        const double v = c(rng);
        CHECK(zsc_doping(zsc_conductivity(v)) == doctest::Approx(v).epsilon(1e-12));
    }

    const auto m = build_unit_square(5);
    const auto field = random_profile(m, rng, 10.0);
    const auto back = zsc_doping(zsc_conductivity(field));
    for (Index i = 0; i < m->node_count(); ++i) {
        CHECK(back[i] == doctest::Approx(field[i]).epsilon(1e-12));
    }
}

TEST_CASE("equilibrium constant cases")
{
    const auto m = build_unit_square(8);
    SUBCASE("bipolar zero doping")
    {
        const auto r = solve_equilibrium(DopingProfile::from_field(ScalarField(m, 0.0)), 0.1, Polarity::Bipolar);
        for (double v : r.V.values()) {
            CHECK(std::abs(v) < 1e-14);
        }
    }
    SUBCASE("bipolar arcsinh balance")
    {
        const double C = 2.0 * std::sinh(1.0);
        const auto r = solve_equilibrium(DopingProfile::from_field(ScalarField(m, C)), 0.1, Polarity::Bipolar);
        for (double v : r.V.values()) {
            CHECK(std::abs(v - 1.0) < 1e-8);
        }
    }
    SUBCASE("unipolar unit doping")
    {
        const auto r = solve_equilibrium(DopingProfile::from_field(ScalarField(m, 1.0)), 0.1, Polarity::Unipolar);
        for (double v : r.V.values()) {
            CHECK(std::abs(v) < 1e-14);
        }
    }
}

TEST_CASE("equilibrium on random profiles")
{
    std::mt19937 rng(17);
    const auto m = build_unit_square(16);
    for (int trial = 0; trial < 5; ++trial) {
        const auto doping = DopingProfile::from_field(random_profile(m, rng, 20.0));
        const auto dirichlet = balanced_dirichlet(doping.C, Polarity::Bipolar);
        EquilibriumOptions opt;
        opt.dirichlet = dirichlet;
        const auto r = solve_equilibrium(doping, 0.01, Polarity::Bipolar, opt);
        REQUIRE(r.residual_history.size() >= 2);
        CHECK(r.residual_history.back() < 1e-10);
        for (std::size_t k = 1; k < r.residual_history.size(); ++k) {
            CHECK(r.residual_history[k] < r.residual_history[k - 1]);
        }
        const auto b = equilibrium_bounds(doping, dirichlet);
        CHECK(r.V.min() >= b.lower - 1e-6);
        CHECK(r.V.max() <= b.upper + 1e-6);
    }
}

TEST_CASE("unipolar equilibrium of a positive profile")
{
    const auto m = build_unit_square(12);
    const auto C = ScalarField::from_function(m, [](const Point& p) { return 1.5 + std::sin(3.0 * p.x) * p.y; });
    const auto r = solve_equilibrium(DopingProfile::from_field(C), 0.05, Polarity::Unipolar);
    CHECK(r.residual_history.back() < 1e-10);
    // the maximum principle bounds ln C
    CHECK(r.V.min() >= std::log(C.min()) - 1e-6);
    CHECK(r.V.max() <= std::log(C.max()) + 1e-6);
}

TEST_CASE("doping bounds are validated")
{
    const auto m = build_unit_square(3);
    DopingProfile d{ScalarField(m, 2.0), 0.0, 1.0};
    CHECK_THROWS_AS(d.validate(), InvalidArgument);
    CHECK_THROWS_AS(parse_polarity("tripolar"), InvalidArgument);
}
