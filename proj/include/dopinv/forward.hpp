#pragma once

#include "dopinv/fem.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace dopinv {

/// Hat input U(x) = amplitude * max(0, 1 - |x - center| / half_width) on the
/// non-contact Dirichlet boundary, zero on Gamma1. The boundary coordinate is
/// x on the bottom/top sides and y on the left/right sides.
struct InputProfile {
    double center = 0.5;
    double half_width = 0.1;
    double amplitude = 1.0;

    [[nodiscard]] double operator()(double s) const;
    void validate() const;
};

/// N hats centered at j/(N+1), j = 1..N, with half width 1/(N+1).
std::vector<InputProfile> equispaced_profiles(int count);

/// Dirichlet values of the input on every Dirichlet node of the mesh.
DirichletMap input_boundary_values(const Mesh& mesh, const InputProfile& profile);

struct ForwardSolution {
    ScalarField u;
    FluxTrace trace;
};

/// div(gamma grad u) = 0, u = U on the Dirichlet boundary, zero flux
/// elsewhere; trace is gamma du/dn on Gamma1.
ForwardSolution unipolar_forward(const ScalarField& gamma, const InputProfile& profile);

/// Factored unipolar operator for a fixed gamma: forward solves for any
/// input and the adjoint field for any Gamma1 datum share one factorization.
class UnipolarOperator {
public:
    explicit UnipolarOperator(const ScalarField& gamma);

    [[nodiscard]] ForwardSolution forward(const InputProfile& profile) const;
    /// Field equal to z on Gamma1, zero on the other Dirichlet nodes, solving
    /// the homogeneous equation with zero flux on the Neumann boundary.
    [[nodiscard]] ScalarField adjoint(const FluxTrace& z) const;
    /// Solve with explicit nodal Dirichlet values (full-size vector) and
    /// an assembled load vector.
    [[nodiscard]] std::vector<double> solve(std::span<const double> load, std::span<const double> boundary) const;
    /// Gamma1 trace of the weak residual K u - load.
    [[nodiscard]] FluxTrace flux(std::span<const double> u, std::span<const double> load = {}) const;

    [[nodiscard]] const ScalarField& gamma() const noexcept { return gamma_; }
    [[nodiscard]] const SparseMatrix& stiffness() const noexcept { return system_.system().matrix(); }

private:
    ScalarField gamma_;
    ScalarSystem system_;
};

struct BipolarSolution {
    ScalarField u_hat;
    ScalarField v_hat;
    /// mu_n e^{V0} du/dn - mu_p e^{-V0} dv/dn on Gamma1.
    FluxTrace output;
};

/// Linearized bipolar voltage-current derivative at equilibrium V0 for the
/// input profile. q0 is the recombination field Q0 (>= 0).
BipolarSolution bipolar_vc_derivative(const ScalarField& V0, const InputProfile& profile, const ScalarField& q0,
                                      double mu_n, double mu_p);

/// Normal derivative on Gamma1 of the linearized potential solving
/// lambda2 Laplace(W) = (e^V0 + e^-V0) W + e^V0 u + e^-V0 v, W = U on the
/// Dirichlet boundary.
FluxTrace capacitance_measurement(const ScalarField& V0, const ScalarField& u_hat, const ScalarField& v_hat,
                                  const InputProfile& profile, double lambda2);

struct LbicSolution {
    ScalarField u_tilde;
    ScalarField v_tilde;
    ScalarField image;
};

/// LBIC image i = v - u of the flipped bipolar system (both unknowns 1 on
/// Gamma1, 0 on the other Dirichlet nodes).
LbicSolution lbic_image_2d(const ScalarField& V0, const ScalarField& q0, double mu_n, double mu_p);

struct MeasurementSet {
    std::vector<InputProfile> profiles;
    std::vector<FluxTrace> traces;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    int mesh_n = 0;
    int source_n = 0;
    GeometryConfig geometry;
    /// Norm of the noise-free data and of the applied perturbation.
    double exact_norm = 0.0;
    double noise_norm = 0.0;
    /// Estimated joint norm of the fine/coarse forward-model gap; 0 for
    /// same-mesh data.
    double model_error = 0.0;

    [[nodiscard]] std::size_t size() const noexcept { return traces.size(); }
};

/// Joint L2(Gamma1) norm over all traces.
double measurement_norm(const std::vector<FluxTrace>& traces);

/// Noise-free data on gamma's own mesh (used for same-mesh experiments).
MeasurementSet measure(const ScalarField& gamma, const std::vector<InputProfile>& profiles);

/// Adds i.i.d. Gaussian noise rescaled to relative level exactly.
void add_noise(MeasurementSet& data, double level, std::uint64_t seed);

/// Restriction integrates the source flux against the target boundary hats,
/// which is what a target-mesh weak residual measures; it stays consistent at
/// the flux singularity where Gamma1 meets a Neumann edge. Interpolation
/// samples nodal values and is not.
enum class TraceTransfer { Restriction, Interpolation };

std::string to_string(TraceTransfer t);
TraceTransfer parse_trace_transfer(const std::string& s);

FluxTrace transfer_trace(const FluxTrace& source, const Mesh& target,
                         TraceTransfer method = TraceTransfer::Restriction);

/// Joint norm of (transferred fine traces - coarse traces) for a reference
/// coefficient, typically the initial guess, so no knowledge of the truth
/// enters.
double estimate_model_error(const std::function<double(const Point&)>& gamma_ref,
                            const std::vector<InputProfile>& profiles, int fine_n, int coarse_n,
                            const GeometryConfig& geometry = {}, TraceTransfer transfer = TraceTransfer::Restriction,
                            bool exclude_junctions = false);

/// Two-mesh protocol: traces computed on the fine mesh for the analytic
/// coefficient, transferred onto the coarse Gamma1 nodes, then perturbed.
MeasurementSet synthesize_dataset(const std::function<double(const Point&)>& gamma_true,
                                  const std::vector<InputProfile>& profiles, int fine_n, int coarse_n,
                                  double noise_level, std::uint64_t seed, const GeometryConfig& geometry = {},
                                  TraceTransfer transfer = TraceTransfer::Restriction);

/// measurements.json (header) and traces.csv (profile_id, arclength_s, flux_value).
void write_measurements(const MeasurementSet& data, const std::filesystem::path& dir);
MeasurementSet read_measurements(const std::filesystem::path& dir);

} // namespace dopinv
