#pragma once

#include "dopinv/fem.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dopinv {

/// Silicon at room temperature, physical units (cm, s, V, As).
struct PhysicalParameters {
    double eps_s = 11.9 * 8.85e-14;
    double q = 1.6e-19;
    double mu_n = 1500.0;
    double mu_p = 450.0;
    double n_i = 1e10;    // not part of the silicon table; common textbook value
    double U_T = 0.0259;  // not part of the silicon table; kT/q at 300 K
    double tau_n = 1e-6;
    double tau_p = 1e-5;
    double C_n = 2.8e-31;
    double C_p = 9.9e-32;

    /// Throws InvalidArgument naming the first nonpositive field.
    void validate() const;
};

struct ScaledParameters {
    double lambda2 = 1.0;
    double delta2 = 1.0;
    double mu_n = 1.0;
    double mu_p = 1.0;
};

ScaledParameters scale_parameters(const PhysicalParameters& phys);

PhysicalParameters load_physical_parameters(const std::filesystem::path& path);
void save_physical_parameters(const PhysicalParameters& phys, const std::filesystem::path& path);

struct BuiltInValues {
    double n_D = 0.0;
    double p_D = 0.0;
    double V_bi = 0.0;
};

/// Ohmic-contact values for a physical doping concentration C.
BuiltInValues built_in_potential(double C, const PhysicalParameters& phys);

/// Doping profile in scaled units with declared bounds.
struct DopingProfile {
    ScalarField C;
    double lower = 0.0;
    double upper = 0.0;

    /// Profile with bounds taken from the field's own extremes.
    static DopingProfile from_field(ScalarField C);
    void validate() const;
};

enum class Polarity { Unipolar, Bipolar };

std::string to_string(Polarity p);
Polarity parse_polarity(const std::string& s);

struct EquilibriumOptions {
    int max_iterations = 100;
    double tolerance = 1e-10;
    int max_halvings = 30;
    double unipolar_floor = 1e-6;
    /// Dirichlet data on every Dirichlet node; defaults to the local
    /// algebraic balance of C (arcsinh(C/2) or ln C).
    std::optional<DirichletMap> dirichlet;
};

struct EquilibriumResult {
    ScalarField V;
    /// Scaled residual norm before the first step and after each accepted step.
    std::vector<double> residual_history;
    int iterations = 0;
};

/// Newton solve of lambda^2 (-Laplace V) + g(V) = C with g = 2 sinh (bipolar)
/// or exp (unipolar), V prescribed on the Dirichlet boundary and zero normal
/// derivative elsewhere.
EquilibriumResult solve_equilibrium(const DopingProfile& doping, double lambda2, Polarity polarity,
                                    const EquilibriumOptions& options = {});

/// Initial guess / local balance value of V for a doping value.
double equilibrium_balance(double C, Polarity polarity, double unipolar_floor = 1e-6);

/// Maximum-principle bounds (kappa = 1, scaled units) for a bipolar solution.
struct PotentialBounds {
    double lower = 0.0;
    double upper = 0.0;
};
PotentialBounds equilibrium_bounds(const DopingProfile& doping, const DirichletMap& dirichlet);

/// Default Dirichlet map from the local algebraic balance of C.
DirichletMap balanced_dirichlet(const ScalarField& C, Polarity polarity, double unipolar_floor = 1e-6);

enum class RecombinationKind { None, SRH, Auger };
/// SingleTau: tau_p in both denominator terms. Standard: tau_p(n+n_i) + tau_n(p+n_i).
enum class SrhVariant { SingleTau, Standard };

std::string to_string(RecombinationKind k);
RecombinationKind parse_recombination_kind(const std::string& s);
std::string to_string(SrhVariant v);
SrhVariant parse_srh_variant(const std::string& s);

struct RecombinationModel {
    RecombinationKind kind = RecombinationKind::None;
    SrhVariant srh_variant = SrhVariant::Standard;
    double n_i = 1.0;
    double tau_n = 1.0;
    double tau_p = 1.0;
    double C_n = 1.0;
    double C_p = 1.0;

    static RecombinationModel from_physical(RecombinationKind kind, const PhysicalParameters& phys,
                                            SrhVariant variant = SrhVariant::Standard);

    /// The factor R such that rate = R(n,p) (np - n_i^2).
    [[nodiscard]] double coefficient(double n, double p) const;
    [[nodiscard]] double rate(double n, double p) const;
};

double recombination_rate(double n, double p, const RecombinationModel& model);

/// Q0(x) = R(delta2 e^{V0}, delta2 e^{-V0}); nonnegative by construction.
ScalarField q0_field(const ScalarField& V0, const RecombinationModel& model, double delta2);

/// Zero-space-charge conductivity a = exp(arcsinh(2C)) and its inverse.
double zsc_conductivity(double C);
double zsc_doping(double a);
ScalarField zsc_conductivity(const ScalarField& C);
ScalarField zsc_doping(const ScalarField& a);

} // namespace dopinv
