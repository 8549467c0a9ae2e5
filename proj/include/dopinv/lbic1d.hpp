#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dopinv::lbic1d {

/// Spatially constant coefficients of the one-dimensional flipped system.
struct Constants {
    double q0 = 0.0;
    double mu_n = 1.0;
    double mu_p = 1.0;

    void validate() const;
};

/// M+1 equispaced points on [0, 1].
std::vector<double> uniform_grid(int M);

struct ForwardResult {
    std::vector<double> u;
    std::vector<double> v;
    /// i = v - u
    std::vector<double> i;
    /// Constants of the first integrals, from the discrete fluxes at x = 0.
    double c1 = 0.0;
    double c2 = 0.0;
};

/// P1 solve of (mu_n e^V u')' = q0 (u - v), (mu_p e^-V v')' = q0 (v - u),
/// u(0) = v(0) = 1, u(1) = v(1) = 0, on a uniform grid.
ForwardResult solve_1d_forward(std::span<const double> x, std::span<const double> V0, const Constants& c);

/// Sign used for b inside J1. Consistent: b = c2 + (q0/mu_p) I, matching the
/// quadratic. Flipped: b = c2 - (q0/mu_p) I in J1 and -i'(0) in J2.
enum class SignConvention { Consistent, Flipped };

/// Measured LBIC data on a uniform grid with its derived quantities.
class Problem {
public:
    Problem(std::vector<double> x, std::vector<double> i, Constants c, double anchor_V0);

    [[nodiscard]] const std::vector<double>& x() const noexcept { return x_; }
    [[nodiscard]] const std::vector<double>& i() const noexcept { return i_; }
    /// Trapezoid antiderivative, I(0) = 0.
    [[nodiscard]] const std::vector<double>& I() const noexcept { return I_; }
    /// Centered differences, second-order one-sided at the ends.
    [[nodiscard]] const std::vector<double>& di() const noexcept { return di_; }
    [[nodiscard]] const Constants& constants() const noexcept { return c_; }
    [[nodiscard]] double anchor() const noexcept { return anchor_; }
    [[nodiscard]] double spacing() const noexcept { return x_[1] - x_[0]; }
    [[nodiscard]] double I_min() const;
    [[nodiscard]] double I_max() const;

    /// a(x) = c1 - (q0/mu_n) I(x)
    [[nodiscard]] double a(double c1, std::size_t k) const;
    /// b(x) = c2 + (q0/mu_p) I(x)
    [[nodiscard]] double b(double c2, std::size_t k) const;

private:
    std::vector<double> x_;
    std::vector<double> i_;
    std::vector<double> I_;
    std::vector<double> di_;
    Constants c_;
    double anchor_ = 0.0;
};

struct ResidualEvaluation {
    bool ok = false;
    double J1 = 0.0;
    double J2 = 0.0;
    /// 1 + integral of a Y (trapezoid).
    double integral = 0.0;
    std::vector<double> Y;
    /// Location and reason of the first failure when !ok.
    double failure_x = 0.0;
    std::string failure;
};

/// Positive root of a Y^2 + i' Y - b = 0 continuous with Y = sqrt(b/a) at
/// i' = 0, computed without cancellation. Empty when no such root exists.
std::optional<double> principal_root(double a, double di, double b);

ResidualEvaluation attainability_residuals(double c1, double c2, const Problem& p,
                                           SignConvention sign = SignConvention::Consistent);

/// Pointwise residual a Y + i' - b / Y of the quadratic for given Y.
std::vector<double> quadratic_residual(double c1, double c2, std::span<const double> Y, const Problem& p);
/// 1 + integral of a Y for given Y.
double integral_residual(double c1, std::span<const double> Y, const Problem& p);

/// Residuals of both equations evaluated with fourth-order derivative and
/// antiderivative of the data, for checking a candidate Y against data whose
/// second-order differences would be limited by truncation error.
struct NecessityResiduals {
    std::vector<double> quadratic;
    double max_quadratic = 0.0;
    double integral = 0.0;
};
NecessityResiduals necessity_residuals(double c1, double c2, std::span<const double> Y, const Problem& p);

struct FitOptions {
    double tolerance = 1e-8;
    int max_iterations = 100;
    int max_halvings = 50;
    double fd_step = 1e-6;
    SignConvention sign = SignConvention::Consistent;
};

struct AttainabilityResult {
    double c1 = 0.0;
    double c2 = 0.0;
    std::vector<double> Y;
    double J1 = 0.0;
    double J2 = 0.0;
    bool attainable = false;
    bool converged = false;
    int iterations = 0;
    std::string diagnostics;
};

/// Gauss-Newton on (J1, J2) with a forward-difference Jacobian and halving
/// line search; a grid search over the nonpositive quadrant supplies the
/// start when the given one is not evaluable.
AttainabilityResult fit_constants(const Problem& p, double c1_init, double c2_init, const FitOptions& options = {});

/// V = -ln Y of a converged fit.
std::vector<double> reconstruct_potential(const AttainabilityResult& fit);

struct FamilyMember {
    double c1 = 0.0;
    double c2 = 0.0;
    std::vector<double> Y;
    std::vector<double> V;
};

/// Member of the one-parameter family for c1: c2 solves the integral
/// equation. Throws InvalidArgument when c1 violates the strict bound and
/// NumericalError when no admissible c2 brackets a root.
FamilyMember nonuniqueness_family(const Problem& p, double c1);

struct SufficiencyCheck {
    std::vector<double> u_hat;
    std::vector<double> v_hat;
    /// max |(v_hat - u_hat) - (i - i(0))|
    double max_mismatch = 0.0;
};

/// Builds u_hat, v_hat from (c1, c2, Y) by trapezoid quadrature.
SufficiencyCheck sufficiency_check(double c1, double c2, std::span<const double> Y, const Problem& p);

/// CSV (x, i) reader and result writers.
Problem read_problem(const std::filesystem::path& csv, Constants c, double anchor_V0);
void write_result(const AttainabilityResult& fit, const Problem& p, const std::filesystem::path& dir);

} // namespace dopinv::lbic1d
