#pragma once

#include "dopinv/mesh.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <functional>
#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace dopinv {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Nodal P1 field on a mesh.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(MeshPtr mesh, double value = 0.0);
    ScalarField(MeshPtr mesh, std::vector<double> values);

    static ScalarField from_function(MeshPtr mesh, const std::function<double(const Point&)>& f);

    [[nodiscard]] const Mesh& mesh() const { return *mesh_; }
    [[nodiscard]] const MeshPtr& mesh_ptr() const noexcept { return mesh_; }
    [[nodiscard]] Index size() const noexcept { return static_cast<Index>(values_.size()); }

    [[nodiscard]] std::span<const double> values() const noexcept { return values_; }
    [[nodiscard]] std::vector<double>& data() noexcept { return values_; }
    [[nodiscard]] const std::vector<double>& data() const noexcept { return values_; }

    double operator[](Index i) const { return values_[static_cast<std::size_t>(i)]; }
    double& operator[](Index i) { return values_[static_cast<std::size_t>(i)]; }

    [[nodiscard]] bool all_finite() const;
    [[nodiscard]] double min() const;
    [[nodiscard]] double max() const;

private:
    MeshPtr mesh_;
    std::vector<double> values_;
};

/// Nodal values of a boundary flux a du/dn on one tagged boundary segment,
/// with the lumped quadrature weights used for L2 products on that segment.
struct FluxTrace {
    BoundaryTag tag = BoundaryTag::Gamma1;
    std::vector<Index> nodes;
    std::vector<Point> points;
    std::vector<double> arclength;
    std::vector<double> weights;
    std::vector<double> values;

    [[nodiscard]] std::size_t size() const noexcept { return values.size(); }
    [[nodiscard]] double measure() const;
};

/// Empty trace (zero values) over the nodes of a tagged segment.
FluxTrace make_trace(const Mesh& mesh, BoundaryTag tag);

/// Marks trace samples at nodes shared with a Neumann edge. Where a Dirichlet
/// contact ends on a Neumann edge the flux behaves like r^(-1/2) and its nodal
/// sample does not converge under refinement.
std::vector<char> junction_samples(const Mesh& mesh, const FluxTrace& trace);

/// Zeroes the marked samples; an empty mask leaves the trace unchanged.
void zero_samples(FluxTrace& trace, std::span<const char> mask);

using DirichletMap = std::map<Index, double>;

/// -div(a grad u) + c u = f, u prescribed on the keys of dirichlet, natural
/// (zero flux) condition on every other boundary node.
struct MixedBvp {
    ScalarField diffusion;
    ScalarField reaction;
    ScalarField source;
    DirichletMap dirichlet;
};

/// -div(a_u grad u) + q (u + sign v) = f_u
/// -div(a_v grad v) + q (v + sign u) = f_v
struct CoupledBvp {
    ScalarField diffusion_u;
    ScalarField diffusion_v;
    ScalarField coupling;
    int sign = +1;
    DirichletMap dirichlet_u;
    DirichletMap dirichlet_v;
    ScalarField source_u; // optional, empty means zero
    ScalarField source_v;
};

// -- assembly ---------------------------------------------------------------

/// Gradients of the three barycentric functions of triangle t.
std::array<std::array<double, 2>, 3> barycentric_gradients(const Mesh& mesh, Index t);

/// Stiffness matrix with the coefficient evaluated at the triangle midpoint.
SparseMatrix assemble_stiffness(const Mesh& mesh, std::span<const double> diffusion);
/// Diagonal reaction matrix: midpoint coefficient, vertex-lumped basis product.
std::vector<double> assemble_lumped_reaction(const Mesh& mesh, std::span<const double> reaction);
/// Load vector with the same quadrature as the reaction term.
std::vector<double> assemble_load(const Mesh& mesh, std::span<const double> source);
SparseMatrix assemble_mass(const Mesh& mesh);
std::vector<double> lumped_mass(const Mesh& mesh);

/// Symmetric system with some degrees of freedom constrained to prescribed
/// values. The free block is factored once; solve() may be called repeatedly.
class ConstrainedSystem {
public:
    ConstrainedSystem(SparseMatrix matrix, std::vector<Index> constrained);

    /// x with x[c] = values[c] on constrained dofs and A_ff x_f = rhs_f - A_fc x_c.
    [[nodiscard]] Eigen::VectorXd solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& values) const;

    /// Full residual A x - rhs (nonzero only on constrained dofs for a solution).
    [[nodiscard]] Eigen::VectorXd residual(const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) const;

    [[nodiscard]] const SparseMatrix& matrix() const noexcept { return a_; }
    [[nodiscard]] Index size() const noexcept { return static_cast<Index>(a_.rows()); }
    [[nodiscard]] const std::vector<Index>& free_dofs() const noexcept { return free_; }
    [[nodiscard]] bool used_iterative_fallback() const noexcept { return iterative_; }

private:
    SparseMatrix a_;
    SparseMatrix a_ff_;
    SparseMatrix a_fc_;
    std::vector<Index> constrained_;
    std::vector<Index> free_;
    std::shared_ptr<Eigen::SimplicialLDLT<SparseMatrix>> direct_;
    bool iterative_ = false;
};

/// Scalar operator -div(a grad .) + c with Dirichlet constraints on a fixed
/// node set.
class ScalarSystem {
public:
    ScalarSystem(const Mesh& mesh, std::span<const double> diffusion, std::span<const double> reaction,
                 std::vector<Index> dirichlet_nodes);

    /// load: assembled load vector; boundary: full-size vector read at the
    /// Dirichlet nodes.
    [[nodiscard]] std::vector<double> solve(std::span<const double> load, std::span<const double> boundary) const;
    [[nodiscard]] std::vector<double> residual(std::span<const double> u, std::span<const double> load) const;
    [[nodiscard]] const ConstrainedSystem& system() const noexcept { return system_; }

private:
    ConstrainedSystem system_;
};

// -- solves -----------------------------------------------------------------

ScalarField solve_mixed_bvp(const MixedBvp& problem);
std::pair<ScalarField, ScalarField> solve_coupled_bvp(const CoupledBvp& problem);

/// Assembled block matrix of a coupled problem (u dofs first, then v).
SparseMatrix assemble_coupled(const CoupledBvp& problem);

// -- flux recovery ----------------------------------------------------------

/// Flux from a weak residual vector: the residual at each trace node divided
/// by its lumped boundary weight.
FluxTrace flux_from_residual(const Mesh& mesh, std::span<const double> residual, BoundaryTag tag);

/// Variationally consistent flux a du/dn on the tagged segment for a solution
/// of -div(a grad u) = 0.
FluxTrace boundary_flux(const ScalarField& u, const ScalarField& a, BoundaryTag tag);
/// Same, including reaction and source of the problem u solves.
FluxTrace boundary_flux(const MixedBvp& problem, const ScalarField& u, BoundaryTag tag);
/// Fluxes a_u du/dn and a_v dv/dn of a coupled solution.
std::pair<FluxTrace, FluxTrace> coupled_boundary_flux(const CoupledBvp& problem, const ScalarField& u,
                                                       const ScalarField& v, BoundaryTag tag);

// -- norms ------------------------------------------------------------------

double l2_inner(const ScalarField& a, const ScalarField& b);
double l2_norm(const ScalarField& f);
/// L2 norm over the nodes selected by mask (consistent mass restricted to the mask).
double l2_norm_masked(const ScalarField& f, const std::vector<char>& mask);
double trace_inner(const FluxTrace& a, const FluxTrace& b);
double trace_norm(const FluxTrace& t);

} // namespace dopinv
