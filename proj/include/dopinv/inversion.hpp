#pragma once

#include "dopinv/forward.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace dopinv {

/// Boundary conditions of the adjoint field. MixedNeumann keeps the zero-flux
/// condition of the forward problem on the Neumann boundary, which makes the
/// gradient exact for the discrete forward map. FullDirichlet pins the field
/// to zero on the whole boundary outside Gamma1.
enum class AdjointBc { MixedNeumann, FullDirichlet };

std::string to_string(AdjointBc bc);
AdjointBc parse_adjoint_bc(const std::string& s);

struct ReconstructionConfig {
    double step_scale = 0.9;
    int max_cycles = 500;
    double tau = 1.5;
    double margin = 0.1;
    double gamma_floor = 1e-3;
    double smoothing = 0.0;
    int power_iterations = 10;
    /// Relative residual below which exact-data runs stop (roundoff level).
    double residual_floor = 1e-12;
    int snapshot_every = 0;
    AdjointBc adjoint_bc = AdjointBc::MixedNeumann;
    /// Add the data's model_error to the discrepancy level.
    bool include_model_error = true;
    /// Drop trace samples at Gamma1/Neumann junction nodes from the misfit.
    bool exclude_junctions = true;

    void validate() const;
};

/// Riesz map for a nodal functional b restricted to a node set: returns g
/// supported on the set with (M + alpha K)_mm g_m = b_m. With alpha = 0 this
/// is the L2 representer; g is zero off the set.
class GradientMap {
public:
    GradientMap(MeshPtr mesh, std::vector<char> mask, double alpha = 0.0);

    [[nodiscard]] ScalarField operator()(std::span<const double> b) const;
    /// h_m^T (M + alpha K)_mm h_m.
    [[nodiscard]] double metric(const ScalarField& h) const;
    [[nodiscard]] const std::vector<char>& mask() const noexcept { return mask_; }

private:
    MeshPtr mesh_;
    std::vector<char> mask_;
    std::vector<Index> active_;
    SparseMatrix p_;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> solver_;
};

/// b_i = sum over triangles T containing node i of |T|/3 grad u . grad phi:
/// the derivative of <F(gamma), z> in the direction of the i-th hat function.
std::vector<double> adjoint_functional(const Mesh& mesh, const ScalarField& u, const ScalarField& phi);

/// Adjoint field for datum z on Gamma1.
ScalarField adjoint_field(const UnipolarOperator& op, const FluxTrace& z, AdjointBc bc = AdjointBc::MixedNeumann);

/// L2(Omega) representer of h -> <F'(gamma) h, z>_{L2(Gamma1)} over all nodes.
ScalarField adjoint_gradient(const ScalarField& gamma, const InputProfile& profile, const FluxTrace& z,
                             AdjointBc bc = AdjointBc::MixedNeumann);

/// F'(gamma) h for the forward solution u of op.
FluxTrace linearized_forward(const UnipolarOperator& op, const ScalarField& u, const ScalarField& h);

/// Squared operator norm of P F'(gamma) (metric of map) by power iteration,
/// where P zeroes the excluded trace samples.
double operator_norm_squared(const ScalarField& gamma, const InputProfile& profile, const GradientMap& map,
                             int iterations, std::span<const char> excluded = {});

struct ReconstructionState {
    ScalarField gamma;
    int k = 0;
    int cycle = 0;
    int j = 0;
};

struct StepReport {
    double residual = 0.0;
    double update_norm = 0.0;
    double step_size = 0.0;
};

struct HistoryRow {
    int k = 0;
    int cycle = 0;
    int j = 0;
    double residual_j = 0.0;
    double total_residual = 0.0;
    double error = 0.0;
};

/// Cyclic Landweber-Kaczmarz iteration with a fixed interior mask and fixed
/// per-component step sizes.
class LandweberKaczmarz {
public:
    LandweberKaczmarz(MeasurementSet data, ReconstructionConfig config, const ScalarField& gamma0);

    /// One step on component state.j; returns the advanced state.
    ReconstructionState step(const ReconstructionState& state, StepReport* report = nullptr) const;
    /// Per-component residual norms ||F_j(gamma) - Y_j||.
    [[nodiscard]] std::vector<double> residuals(const ScalarField& gamma) const;
    [[nodiscard]] static double total(const std::vector<double>& residuals);

    [[nodiscard]] const NodeMask& mask() const noexcept { return mask_; }
    [[nodiscard]] const std::vector<double>& step_sizes() const noexcept { return steps_; }
    [[nodiscard]] const MeasurementSet& data() const noexcept { return data_; }
    [[nodiscard]] const ReconstructionConfig& config() const noexcept { return config_; }
    [[nodiscard]] const GradientMap& gradient_map() const noexcept { return map_; }
    /// Trace samples left out of the misfit (empty when none are).
    [[nodiscard]] const std::vector<char>& excluded_samples() const noexcept { return excluded_; }

private:
    MeasurementSet data_;
    ReconstructionConfig config_;
    NodeMask mask_;
    GradientMap map_;
    std::vector<char> excluded_;
    std::vector<double> steps_;
};

/// Convenience single step that builds the iteration around gamma0.
ReconstructionState lk_step(const ReconstructionState& state, const MeasurementSet& data,
                            const ReconstructionConfig& config, const ScalarField& gamma0);

struct ReconstructionResult {
    ScalarField gamma;
    std::vector<HistoryRow> history;
    /// Total residual at the start of each executed cycle and at the end.
    std::vector<double> cycle_residuals;
    std::vector<std::pair<int, ScalarField>> snapshots;
    std::vector<double> step_sizes;
    int cycles = 0;
    std::string stop_reason;
    bool discrepancy_fired = false;
    double final_residual = 0.0;
    double initial_error = 0.0;
    double final_error = 0.0;
};

/// Relative L2 error on the mask; NaN when truth is absent.
double relative_masked_error(const ScalarField& gamma, const ScalarField* truth, const NodeMask& mask);

ReconstructionResult run_reconstruction(const MeasurementSet& data, const ReconstructionConfig& config,
                                        const ScalarField& gamma0, const ScalarField* truth = nullptr);

/// C = gamma - lambda2 Laplace(ln gamma) at interior nodes (lumped weak
/// Laplacian); boundary nodes take the values of boundary_doping.
ScalarField recover_doping(const ScalarField& gamma, double lambda2, const ScalarField& boundary_doping);

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path);

} // namespace dopinv
