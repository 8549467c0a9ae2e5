#include "dopinv/fem.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dopinv {

namespace {

constexpr double kSolverTolerance = 1e-10;

void require_size(std::span<const double> v, Index n, const char* what)
{
    if (static_cast<Index>(v.size()) != n) {
        throw InvalidArgument(std::string(what) + ": expected " + std::to_string(n) + " nodal values, got "
                              + std::to_string(v.size()));
    }
}

void require_same_mesh(const ScalarField& a, const ScalarField& b, const char* what)
{
    if (!a.mesh_ptr() || !b.mesh_ptr() || !a.mesh().same_layout(b.mesh())) {
        throw InvalidArgument(std::string(what) + ": fields live on different meshes");
    }
}

Eigen::VectorXd to_eigen(std::span<const double> v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Eigen::VectorXd& v)
{
    return {v.data(), v.data() + v.size()};
}

std::vector<Index> dirichlet_keys(const DirichletMap& m)
{
    std::vector<Index> keys;
    keys.reserve(m.size());
    for (const auto& [k, v] : m) {
        keys.push_back(k);
    }
    return keys;
}

} // namespace

// -- ScalarField --------------------------------------------------------------

ScalarField::ScalarField(MeshPtr mesh, double value)
    : mesh_(std::move(mesh))
    , values_(static_cast<std::size_t>(mesh_->node_count()), value)
{
}

ScalarField::ScalarField(MeshPtr mesh, std::vector<double> values)
    : mesh_(std::move(mesh))
    , values_(std::move(values))
{
    require_size(values_, mesh_->node_count(), "ScalarField");
}

ScalarField ScalarField::from_function(MeshPtr mesh, const std::function<double(const Point&)>& f)
{
    std::vector<double> v;
    v.reserve(static_cast<std::size_t>(mesh->node_count()));
    for (const auto& p : mesh->nodes()) {
        v.push_back(f(p));
    }
    return {std::move(mesh), std::move(v)};
}

bool ScalarField::all_finite() const
{
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
}

double ScalarField::min() const { return *std::min_element(values_.begin(), values_.end()); }
double ScalarField::max() const { return *std::max_element(values_.begin(), values_.end()); }

double FluxTrace::measure() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

FluxTrace make_trace(const Mesh& mesh, BoundaryTag tag)
{
    FluxTrace t;
    t.tag = tag;
    t.nodes = boundary_nodes(mesh, tag);
    if (t.nodes.empty()) {
        throw InvalidArgument("boundary tag " + to_string(tag) + " has no nodes");
    }
    std::vector<double> w(static_cast<std::size_t>(mesh.node_count()), 0.0);
    bool any_edge = false;
    for (const auto& e : mesh.boundary_edges()) {
        if (e.tag != tag) {
            continue;
        }
        any_edge = true;
        const Point& a = mesh.node(e.nodes[0]);
        const Point& b = mesh.node(e.nodes[1]);
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        w[static_cast<std::size_t>(e.nodes[0])] += 0.5 * len;
        w[static_cast<std::size_t>(e.nodes[1])] += 0.5 * len;
    }
    if (!any_edge) {
        throw InvalidArgument("boundary tag " + to_string(tag) + " has no edges");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        const Point& p = mesh.node(t.nodes[k]);
        if (k > 0) {
            const Point& q = t.points.back();
            s += std::hypot(p.x - q.x, p.y - q.y);
        }
        t.points.push_back(p);
        t.arclength.push_back(s);
        t.weights.push_back(w[static_cast<std::size_t>(t.nodes[k])]);
    }
    t.values.assign(t.nodes.size(), 0.0);
    return t;
}

std::vector<char> junction_samples(const Mesh& mesh, const FluxTrace& trace)
{
    std::vector<char> touches(static_cast<std::size_t>(mesh.node_count()), 0);
    for (const auto& e : mesh.boundary_edges()) {
        if (e.tag == BoundaryTag::Neumann) {
            touches[static_cast<std::size_t>(e.nodes[0])] = 1;
            touches[static_cast<std::size_t>(e.nodes[1])] = 1;
        }
    }
    std::vector<char> out(trace.size(), 0);
    for (std::size_t k = 0; k < trace.size(); ++k) {
        out[k] = touches[static_cast<std::size_t>(trace.nodes[k])];
    }
    return out;
}

void zero_samples(FluxTrace& trace, std::span<const char> mask)
{
    if (mask.empty()) {
        return;
    }
    if (mask.size() != trace.size()) {
        throw InvalidArgument("sample mask does not match the trace");
    }
    for (std::size_t k = 0; k < trace.size(); ++k) {
        if (mask[k]) {
            trace.values[k] = 0.0;
        }
    }
}

// -- assembly -------------------------------------------------------------------

std::array<std::array<double, 2>, 3> barycentric_gradients(const Mesh& mesh, Index t)
{
    const auto& tri = mesh.triangles()[static_cast<std::size_t>(t)];
    const Point& p0 = mesh.node(tri[0]);
    const Point& p1 = mesh.node(tri[1]);
    const Point& p2 = mesh.node(tri[2]);
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    return {{{(p1.y - p2.y) / det, (p2.x - p1.x) / det},
             {(p2.y - p0.y) / det, (p0.x - p2.x) / det},
             {(p0.y - p1.y) / det, (p1.x - p0.x) / det}}};
}

SparseMatrix assemble_stiffness(const Mesh& mesh, std::span<const double> diffusion)
{
    require_size(diffusion, mesh.node_count(), "assemble_stiffness");
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(9 * mesh.triangle_count()));
    for (Index t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles()[static_cast<std::size_t>(t)];
        const auto g = barycentric_gradients(mesh, t);
        const double a = (diffusion[static_cast<std::size_t>(tri[0])] + diffusion[static_cast<std::size_t>(tri[1])]
                          + diffusion[static_cast<std::size_t>(tri[2])])
                         / 3.0;
        const double area = mesh.area(t);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                trip.emplace_back(tri[i], tri[j], a * area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
            }
        }
    }
    SparseMatrix k(mesh.node_count(), mesh.node_count());
    k.setFromTriplets(trip.begin(), trip.end());
    return k;
}

std::vector<double> assemble_lumped_reaction(const Mesh& mesh, std::span<const double> reaction)
{
    require_size(reaction, mesh.node_count(), "assemble_lumped_reaction");
    std::vector<double> r(static_cast<std::size_t>(mesh.node_count()), 0.0);
    for (Index t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles()[static_cast<std::size_t>(t)];
        const double c = (reaction[static_cast<std::size_t>(tri[0])] + reaction[static_cast<std::size_t>(tri[1])]
                          + reaction[static_cast<std::size_t>(tri[2])])
                         / 3.0;
        const double w = c * mesh.area(t) / 3.0;
        for (Index v : tri) {
            r[static_cast<std::size_t>(v)] += w;
        }
    }
    return r;
}

std::vector<double> assemble_load(const Mesh& mesh, std::span<const double> source)
{
    return assemble_lumped_reaction(mesh, source);
}

SparseMatrix assemble_mass(const Mesh& mesh)
{
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(9 * mesh.triangle_count()));
    for (Index t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles()[static_cast<std::size_t>(t)];
        const double area = mesh.area(t);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                trip.emplace_back(tri[i], tri[j], area / 12.0 * (i == j ? 2.0 : 1.0));
            }
        }
    }
    SparseMatrix m(mesh.node_count(), mesh.node_count());
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

std::vector<double> lumped_mass(const Mesh& mesh)
{
    const std::vector<double> ones(static_cast<std::size_t>(mesh.node_count()), 1.0);
    return assemble_lumped_reaction(mesh, ones);
}

// -- ConstrainedSystem ------------------------------------------------------------

ConstrainedSystem::ConstrainedSystem(SparseMatrix matrix, std::vector<Index> constrained)
    : a_(std::move(matrix))
    , constrained_(std::move(constrained))
{
    const Index n = static_cast<Index>(a_.rows());
    std::sort(constrained_.begin(), constrained_.end());
    constrained_.erase(std::unique(constrained_.begin(), constrained_.end()), constrained_.end());

    std::vector<Index> local(static_cast<std::size_t>(n), -1);
    std::vector<char> is_c(static_cast<std::size_t>(n), 0);
    for (Index c : constrained_) {
        if (c < 0 || c >= n) {
            throw InvalidArgument("constrained dof out of range");
        }
        is_c[static_cast<std::size_t>(c)] = 1;
    }
    for (Index i = 0; i < n; ++i) {
        if (!is_c[static_cast<std::size_t>(i)]) {
            local[static_cast<std::size_t>(i)] = static_cast<Index>(free_.size());
            free_.push_back(i);
        }
    }
    std::vector<Index> clocal(static_cast<std::size_t>(n), -1);
    for (std::size_t k = 0; k < constrained_.size(); ++k) {
        clocal[static_cast<std::size_t>(constrained_[k])] = static_cast<Index>(k);
    }

    std::vector<Eigen::Triplet<double>> ff;
    std::vector<Eigen::Triplet<double>> fc;
    for (Eigen::Index col = 0; col < a_.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(a_, col); it; ++it) {
            const auto r = static_cast<std::size_t>(it.row());
            const auto c = static_cast<std::size_t>(it.col());
            if (local[r] < 0) {
                continue;
            }
            if (local[c] >= 0) {
                ff.emplace_back(local[r], local[c], it.value());
            } else {
                fc.emplace_back(local[r], clocal[c], it.value());
            }
        }
    }
    const auto nf = static_cast<Eigen::Index>(free_.size());
    a_ff_.resize(nf, nf);
    a_ff_.setFromTriplets(ff.begin(), ff.end());
    a_fc_.resize(nf, static_cast<Eigen::Index>(constrained_.size()));
    a_fc_.setFromTriplets(fc.begin(), fc.end());

    if (nf > 0) {
        direct_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
        direct_->compute(a_ff_);
        if (direct_->info() != Eigen::Success) {
            direct_.reset();
            iterative_ = true;
        }
    }
}

Eigen::VectorXd ConstrainedSystem::solve(const Eigen::VectorXd& rhs, const Eigen::VectorXd& values) const
{
    const Eigen::Index n = a_.rows();
    if (rhs.size() != n || values.size() != n) {
        throw InvalidArgument("ConstrainedSystem::solve: size mismatch");
    }
    Eigen::VectorXd x = values;
    if (free_.empty()) {
        return x;
    }
    Eigen::VectorXd xc(static_cast<Eigen::Index>(constrained_.size()));
    for (std::size_t k = 0; k < constrained_.size(); ++k) {
        xc[static_cast<Eigen::Index>(k)] = values[constrained_[k]];
    }
    Eigen::VectorXd b(static_cast<Eigen::Index>(free_.size()));
    for (std::size_t k = 0; k < free_.size(); ++k) {
        b[static_cast<Eigen::Index>(k)] = rhs[free_[k]];
    }
    if (!constrained_.empty()) {
        b -= a_fc_ * xc;
    }

    Eigen::VectorXd xf;
    if (direct_) {
        xf = direct_->solve(b);
    }
    const double bnorm = std::max(b.norm(), 1e-300);
    if (!direct_ || !xf.allFinite() || (a_ff_ * xf - b).norm() > 1e3 * kSolverTolerance * bnorm) {
        Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(kSolverTolerance);
        cg.setMaxIterations(std::max<Eigen::Index>(1000, 10 * a_ff_.rows()));
        cg.compute(a_ff_);
        xf = cg.solve(b);
        if (cg.info() != Eigen::Success || !xf.allFinite()) {
            throw NumericalError("linear solve failed: conjugate gradient did not converge after "
                                 + std::to_string(cg.iterations()) + " iterations (residual "
                                 + std::to_string(cg.error()) + ")");
        }
    }
    for (std::size_t k = 0; k < free_.size(); ++k) {
        x[free_[k]] = xf[static_cast<Eigen::Index>(k)];
    }
    return x;
}

Eigen::VectorXd ConstrainedSystem::residual(const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) const
{
    return a_ * x - rhs;
}

// -- ScalarSystem -------------------------------------------------------------------

namespace {

SparseMatrix scalar_matrix(const Mesh& mesh, std::span<const double> diffusion, std::span<const double> reaction)
{
    SparseMatrix a = assemble_stiffness(mesh, diffusion);
    if (!reaction.empty()) {
        const auto r = assemble_lumped_reaction(mesh, reaction);
        for (Index i = 0; i < mesh.node_count(); ++i) {
            a.coeffRef(i, i) += r[static_cast<std::size_t>(i)];
        }
    }
    return a;
}

} // namespace

ScalarSystem::ScalarSystem(const Mesh& mesh, std::span<const double> diffusion, std::span<const double> reaction,
                           std::vector<Index> dirichlet_nodes)
    : system_(scalar_matrix(mesh, diffusion, reaction), std::move(dirichlet_nodes))
{
}

std::vector<double> ScalarSystem::solve(std::span<const double> load, std::span<const double> boundary) const
{
    return to_std(system_.solve(to_eigen(load), to_eigen(boundary)));
}

std::vector<double> ScalarSystem::residual(std::span<const double> u, std::span<const double> load) const
{
    return to_std(system_.residual(to_eigen(u), to_eigen(load)));
}

// -- solves -------------------------------------------------------------------------

namespace {

void check_mixed(const MixedBvp& p)
{
    const MeshPtr& mesh = p.diffusion.mesh_ptr();
    if (!mesh) {
        throw InvalidArgument("MixedBvp: diffusion field has no mesh");
    }
    require_same_mesh(p.diffusion, p.reaction, "MixedBvp");
    require_same_mesh(p.diffusion, p.source, "MixedBvp");
    if (!(p.diffusion.min() > 0.0)) {
        throw InvalidArgument("MixedBvp: diffusion must be strictly positive");
    }
    if (p.reaction.min() < 0.0) {
        throw InvalidArgument("MixedBvp: reaction must be nonnegative");
    }
    if (p.dirichlet.empty() && p.reaction.max() == 0.0) {
        throw NumericalError("MixedBvp: singular system (no Dirichlet nodes and zero reaction)");
    }
    for (const auto& [k, v] : p.dirichlet) {
        if (k < 0 || k >= mesh->node_count() || !std::isfinite(v)) {
            throw InvalidArgument("MixedBvp: invalid Dirichlet entry");
        }
    }
}

Eigen::VectorXd coupled_values(const CoupledBvp& p, Index n)
{
    Eigen::VectorXd g = Eigen::VectorXd::Zero(2 * n);
    for (const auto& [k, v] : p.dirichlet_u) g[k] = v;
    for (const auto& [k, v] : p.dirichlet_v) g[n + k] = v;
    return g;
}

Eigen::VectorXd coupled_load(const CoupledBvp& p, const Mesh& mesh)
{
    const Index n = mesh.node_count();
    Eigen::VectorXd f = Eigen::VectorXd::Zero(2 * n);
    if (p.source_u.size() == n) {
        f.head(n) = to_eigen(assemble_load(mesh, p.source_u.values()));
    }
    if (p.source_v.size() == n) {
        f.tail(n) = to_eigen(assemble_load(mesh, p.source_v.values()));
    }
    return f;
}

std::vector<Index> coupled_constraints(const CoupledBvp& p, Index n)
{
    std::vector<Index> c;
    for (const auto& [k, v] : p.dirichlet_u) c.push_back(k);
    for (const auto& [k, v] : p.dirichlet_v) c.push_back(n + k);
    return c;
}

void check_coupled(const CoupledBvp& p)
{
    if (!p.diffusion_u.mesh_ptr()) {
        throw InvalidArgument("CoupledBvp: diffusion field has no mesh");
    }
    require_same_mesh(p.diffusion_u, p.diffusion_v, "CoupledBvp");
    require_same_mesh(p.diffusion_u, p.coupling, "CoupledBvp");
    if (!(p.diffusion_u.min() > 0.0) || !(p.diffusion_v.min() > 0.0)) {
        throw InvalidArgument("CoupledBvp: diffusion must be strictly positive");
    }
    if (p.coupling.min() < 0.0) {
        throw InvalidArgument("CoupledBvp: coupling must be nonnegative");
    }
    if (p.sign != 1 && p.sign != -1) {
        throw InvalidArgument("CoupledBvp: sign must be +1 or -1");
    }
    if ((p.dirichlet_u.empty() || p.dirichlet_v.empty()) && p.coupling.max() == 0.0) {
        throw NumericalError("CoupledBvp: singular system (missing Dirichlet nodes)");
    }
}

} // namespace

ScalarField solve_mixed_bvp(const MixedBvp& problem)
{
    check_mixed(problem);
    const Mesh& mesh = problem.diffusion.mesh();
    ScalarSystem sys(mesh, problem.diffusion.values(), problem.reaction.values(), dirichlet_keys(problem.dirichlet));
    std::vector<double> g(static_cast<std::size_t>(mesh.node_count()), 0.0);
    for (const auto& [k, v] : problem.dirichlet) {
        g[static_cast<std::size_t>(k)] = v;
    }
    const auto load = assemble_load(mesh, problem.source.values());
    ScalarField u(problem.diffusion.mesh_ptr(), sys.solve(load, g));
    if (!u.all_finite()) {
        throw NumericalError("solve_mixed_bvp: nonfinite solution");
    }
    return u;
}

SparseMatrix assemble_coupled(const CoupledBvp& p)
{
    const Mesh& mesh = p.diffusion_u.mesh();
    const Index n = mesh.node_count();
    const SparseMatrix ku = assemble_stiffness(mesh, p.diffusion_u.values());
    const SparseMatrix kv = assemble_stiffness(mesh, p.diffusion_v.values());
    const auto q = assemble_lumped_reaction(mesh, p.coupling.values());

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(ku.nonZeros() + kv.nonZeros() + 4 * n));
    for (Eigen::Index col = 0; col < ku.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(ku, col); it; ++it) {
            trip.emplace_back(it.row(), it.col(), it.value());
        }
    }
    for (Eigen::Index col = 0; col < kv.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(kv, col); it; ++it) {
            trip.emplace_back(n + it.row(), n + it.col(), it.value());
        }
    }
    for (Index i = 0; i < n; ++i) {
        const double qi = q[static_cast<std::size_t>(i)];
        if (qi == 0.0) {
            continue;
        }
        trip.emplace_back(i, i, qi);
        trip.emplace_back(n + i, n + i, qi);
        trip.emplace_back(i, n + i, p.sign * qi);
        trip.emplace_back(n + i, i, p.sign * qi);
    }
    SparseMatrix a(2 * n, 2 * n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

std::pair<ScalarField, ScalarField> solve_coupled_bvp(const CoupledBvp& problem)
{
    check_coupled(problem);
    const MeshPtr& mesh = problem.diffusion_u.mesh_ptr();
    const Index n = mesh->node_count();
    ConstrainedSystem sys(assemble_coupled(problem), coupled_constraints(problem, n));
    const Eigen::VectorXd x = sys.solve(coupled_load(problem, *mesh), coupled_values(problem, n));
    if (!x.allFinite()) {
        throw NumericalError("solve_coupled_bvp: nonfinite solution");
    }
    ScalarField u(mesh, std::vector<double>(x.data(), x.data() + n));
    ScalarField v(mesh, std::vector<double>(x.data() + n, x.data() + 2 * n));
    return {std::move(u), std::move(v)};
}

// -- flux -----------------------------------------------------------------------------

FluxTrace flux_from_residual(const Mesh& mesh, std::span<const double> residual, BoundaryTag tag)
{
    require_size(residual, mesh.node_count(), "flux_from_residual");
    FluxTrace t = make_trace(mesh, tag);
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        t.values[k] = residual[static_cast<std::size_t>(t.nodes[k])] / t.weights[k];
    }
    return t;
}

FluxTrace boundary_flux(const ScalarField& u, const ScalarField& a, BoundaryTag tag)
{
    require_same_mesh(u, a, "boundary_flux");
    const SparseMatrix k = assemble_stiffness(u.mesh(), a.values());
    const Eigen::VectorXd r = k * to_eigen(u.values());
    return flux_from_residual(u.mesh(), to_std(r), tag);
}

FluxTrace boundary_flux(const MixedBvp& problem, const ScalarField& u, BoundaryTag tag)
{
    require_same_mesh(u, problem.diffusion, "boundary_flux");
    const Mesh& mesh = u.mesh();
    const SparseMatrix a = scalar_matrix(mesh, problem.diffusion.values(), problem.reaction.values());
    const auto load = assemble_load(mesh, problem.source.values());
    const Eigen::VectorXd r = a * to_eigen(u.values()) - to_eigen(load);
    return flux_from_residual(mesh, to_std(r), tag);
}

std::pair<FluxTrace, FluxTrace> coupled_boundary_flux(const CoupledBvp& problem, const ScalarField& u,
                                                       const ScalarField& v, BoundaryTag tag)
{
    require_same_mesh(u, problem.diffusion_u, "coupled_boundary_flux");
    require_same_mesh(v, problem.diffusion_u, "coupled_boundary_flux");
    const Mesh& mesh = u.mesh();
    const Index n = mesh.node_count();
    Eigen::VectorXd x(2 * n);
    x.head(n) = to_eigen(u.values());
    x.tail(n) = to_eigen(v.values());
    const Eigen::VectorXd r = assemble_coupled(problem) * x - coupled_load(problem, mesh);
    const std::vector<double> ru(r.data(), r.data() + n);
    const std::vector<double> rv(r.data() + n, r.data() + 2 * n);
    return {flux_from_residual(mesh, ru, tag), flux_from_residual(mesh, rv, tag)};
}

// -- norms ------------------------------------------------------------------------------

double l2_inner(const ScalarField& a, const ScalarField& b)
{
    require_same_mesh(a, b, "l2_inner");
    const SparseMatrix m = assemble_mass(a.mesh());
    return to_eigen(a.values()).dot(m * to_eigen(b.values()));
}

double l2_norm(const ScalarField& f)
{
    return std::sqrt(std::max(0.0, l2_inner(f, f)));
}

double l2_norm_masked(const ScalarField& f, const std::vector<char>& mask)
{
    require_size(std::span<const double>(f.values()), static_cast<Index>(mask.size()), "l2_norm_masked");
    Eigen::VectorXd v = to_eigen(f.values());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!mask[static_cast<std::size_t>(i)]) {
            v[i] = 0.0;
        }
    }
    const SparseMatrix m = assemble_mass(f.mesh());
    return std::sqrt(std::max(0.0, v.dot(m * v)));
}

double trace_inner(const FluxTrace& a, const FluxTrace& b)
{
    if (a.nodes != b.nodes) {
        throw InvalidArgument("trace_inner: traces live on different node sets");
    }
    double s = 0.0;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        s += a.weights[k] * a.values[k] * b.values[k];
    }
    return s;
}

double trace_norm(const FluxTrace& t)
{
    return std::sqrt(std::max(0.0, trace_inner(t, t)));
}

} // namespace dopinv
