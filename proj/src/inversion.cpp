#include "dopinv/inversion.hpp"

#include "dopinv/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dopinv {

std::string to_string(AdjointBc bc) { return bc == AdjointBc::MixedNeumann ? "mixed_neumann" : "full_dirichlet"; }

AdjointBc parse_adjoint_bc(const std::string& s)
{
    if (s == "mixed_neumann") return AdjointBc::MixedNeumann;
    if (s == "full_dirichlet") return AdjointBc::FullDirichlet;
    throw InvalidArgument("unknown adjoint boundary condition '" + s + "' (expected mixed_neumann|full_dirichlet)");
}

void ReconstructionConfig::validate() const
{
    if (!(step_scale > 0.0)) throw InvalidArgument("reconstruction.step_scale must be > 0");
    if (max_cycles < 0) throw InvalidArgument("reconstruction.max_cycles must be >= 0");
    if (!(tau >= 1.0)) throw InvalidArgument("reconstruction.tau must be >= 1");
    if (!(margin > 0.0 && margin < 0.5)) throw InvalidArgument("reconstruction.margin must lie in (0, 1/2)");
    if (!(gamma_floor > 0.0)) throw InvalidArgument("reconstruction.gamma_floor must be > 0");
    if (!(smoothing >= 0.0)) throw InvalidArgument("reconstruction.smoothing must be >= 0");
    if (power_iterations < 1) throw InvalidArgument("reconstruction.power_iterations must be >= 1");
    if (!(residual_floor >= 0.0)) throw InvalidArgument("reconstruction.residual_floor must be >= 0");
    if (snapshot_every < 0) throw InvalidArgument("reconstruction.snapshot_every must be >= 0");
}

// -- GradientMap -----------------------------------------------------------------

GradientMap::GradientMap(MeshPtr mesh, std::vector<char> mask, double alpha)
    : mesh_(std::move(mesh))
    , mask_(std::move(mask))
{
    const Index n = mesh_->node_count();
    if (static_cast<Index>(mask_.size()) != n) {
        throw InvalidArgument("gradient mask size does not match the mesh");
    }
    if (!(alpha >= 0.0)) {
        throw InvalidArgument("smoothing weight must be >= 0");
    }
    std::vector<Index> local(static_cast<std::size_t>(n), -1);
    for (Index i = 0; i < n; ++i) {
        if (mask_[static_cast<std::size_t>(i)]) {
            local[static_cast<std::size_t>(i)] = static_cast<Index>(active_.size());
            active_.push_back(i);
        }
    }
    if (active_.empty()) {
        throw InvalidArgument("gradient mask selects no nodes (interior strip too wide for this mesh)");
    }
    SparseMatrix full = assemble_mass(*mesh_);
    if (alpha > 0.0) {
        const std::vector<double> ones(static_cast<std::size_t>(n), 1.0);
        full += alpha * assemble_stiffness(*mesh_, ones);
    }
    std::vector<Eigen::Triplet<double>> trip;
    for (Eigen::Index col = 0; col < full.outerSize(); ++col) {
        for (SparseMatrix::InnerIterator it(full, col); it; ++it) {
            const Index r = local[static_cast<std::size_t>(it.row())];
            const Index c = local[static_cast<std::size_t>(it.col())];
            if (r >= 0 && c >= 0) {
                trip.emplace_back(r, c, it.value());
            }
        }
    }
    const auto m = static_cast<Eigen::Index>(active_.size());
    p_.resize(m, m);
    p_.setFromTriplets(trip.begin(), trip.end());
    solver_ = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(p_);
    if (solver_->info() != Eigen::Success) {
        throw NumericalError("gradient metric factorization failed");
    }
}

ScalarField GradientMap::operator()(std::span<const double> b) const
{
    if (static_cast<Index>(b.size()) != mesh_->node_count()) {
        throw InvalidArgument("gradient functional size does not match the mesh");
    }
    Eigen::VectorXd bm(static_cast<Eigen::Index>(active_.size()));
    for (std::size_t k = 0; k < active_.size(); ++k) {
        bm[static_cast<Eigen::Index>(k)] = b[static_cast<std::size_t>(active_[k])];
    }
    const Eigen::VectorXd gm = solver_->solve(bm);
    std::vector<double> g(b.size(), 0.0);
    for (std::size_t k = 0; k < active_.size(); ++k) {
        g[static_cast<std::size_t>(active_[k])] = gm[static_cast<Eigen::Index>(k)];
    }
    return {mesh_, std::move(g)};
}

double GradientMap::metric(const ScalarField& h) const
{
    Eigen::VectorXd hm(static_cast<Eigen::Index>(active_.size()));
    for (std::size_t k = 0; k < active_.size(); ++k) {
        hm[static_cast<Eigen::Index>(k)] = h[active_[k]];
    }
    return hm.dot(p_ * hm);
}

// -- adjoint ---------------------------------------------------------------------

std::vector<double> adjoint_functional(const Mesh& mesh, const ScalarField& u, const ScalarField& phi)
{
    std::vector<double> b(static_cast<std::size_t>(mesh.node_count()), 0.0);
    for (Index t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tri = mesh.triangles()[static_cast<std::size_t>(t)];
        const auto g = barycentric_gradients(mesh, t);
        double gu[2] = {0.0, 0.0};
        double gp[2] = {0.0, 0.0};
        for (int a = 0; a < 3; ++a) {
            for (int d = 0; d < 2; ++d) {
                gu[d] += u[tri[a]] * g[a][d];
                gp[d] += phi[tri[a]] * g[a][d];
            }
        }
        const double w = mesh.area(t) / 3.0 * (gu[0] * gp[0] + gu[1] * gp[1]);
        for (Index v : tri) {
            b[static_cast<std::size_t>(v)] += w;
        }
    }
    return b;
}

ScalarField adjoint_field(const UnipolarOperator& op, const FluxTrace& z, AdjointBc bc)
{
    if (bc == AdjointBc::MixedNeumann) {
        return op.adjoint(z);
    }
    const Mesh& mesh = op.gamma().mesh();
    std::vector<Index> constrained;
    for (Index i = 0; i < mesh.node_count(); ++i) {
        if (mesh.is_boundary(i)) {
            constrained.push_back(i);
        }
    }
    const ScalarSystem sys(mesh, op.gamma().values(), {}, constrained);
    std::vector<double> g(static_cast<std::size_t>(mesh.node_count()), 0.0);
    for (std::size_t k = 0; k < z.nodes.size(); ++k) {
        g[static_cast<std::size_t>(z.nodes[k])] = z.values[k];
    }
    const std::vector<double> zero(g.size(), 0.0);
    return {op.gamma().mesh_ptr(), sys.solve(zero, g)};
}

ScalarField adjoint_gradient(const ScalarField& gamma, const InputProfile& profile, const FluxTrace& z, AdjointBc bc)
{
    const UnipolarOperator op(gamma);
    const ScalarField u = op.forward(profile).u;
    const ScalarField phi = adjoint_field(op, z, bc);
    const GradientMap map(gamma.mesh_ptr(), std::vector<char>(static_cast<std::size_t>(gamma.size()), 1));
    return map(adjoint_functional(gamma.mesh(), u, phi));
}

FluxTrace linearized_forward(const UnipolarOperator& op, const ScalarField& u, const ScalarField& h)
{
    const Mesh& mesh = op.gamma().mesh();
    const SparseMatrix dk = assemble_stiffness(mesh, h.values());
    const Eigen::VectorXd r1 = dk * Eigen::Map<const Eigen::VectorXd>(u.values().data(), u.size());
    std::vector<double> load(static_cast<std::size_t>(r1.size()));
    for (Eigen::Index i = 0; i < r1.size(); ++i) {
        load[static_cast<std::size_t>(i)] = -r1[i];
    }
    const std::vector<double> zero(load.size(), 0.0);
    const std::vector<double> du = op.solve(load, zero);
    return op.flux(du, load);
}

double operator_norm_squared(const ScalarField& gamma, const InputProfile& profile, const GradientMap& map,
                             int iterations, std::span<const char> excluded)
{
    const UnipolarOperator op(gamma);
    const ScalarField u = op.forward(profile).u;
    std::vector<double> init(static_cast<std::size_t>(gamma.size()));
    for (std::size_t i = 0; i < init.size(); ++i) {
        init[i] = map.mask()[i] ? 1.0 : 0.0;
    }
    ScalarField h(gamma.mesh_ptr(), std::move(init));
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double nh = std::sqrt(map.metric(h));
        if (!(nh > 0.0)) {
            return 0.0;
        }
        for (double& x : h.data()) {
            x /= nh;
        }
        FluxTrace y = linearized_forward(op, u, h);
        zero_samples(y, excluded);
        lambda = trace_inner(y, y);
        h = map(adjoint_functional(gamma.mesh(), u, op.adjoint(y)));
    }
    return lambda;
}

// -- Landweber-Kaczmarz ------------------------------------------------------------

namespace {

void check_compatible(const MeasurementSet& data, const ScalarField& gamma0)
{
    const Mesh& mesh = gamma0.mesh();
    if (data.traces.empty() || data.traces.size() != data.profiles.size()) {
        throw InvalidArgument("measurement set must hold one trace per input profile");
    }
    const auto nodes = boundary_nodes(mesh, BoundaryTag::Gamma1);
    for (const auto& t : data.traces) {
        if (t.nodes != nodes) {
            throw InvalidArgument("measurement traces do not live on the inversion mesh (mesh_n = "
                                  + std::to_string(data.mesh_n) + ", inversion n = "
                                  + std::to_string(mesh.resolution()) + ")");
        }
    }
}

} // namespace

LandweberKaczmarz::LandweberKaczmarz(MeasurementSet data, ReconstructionConfig config, const ScalarField& gamma0)
    : data_(std::move(data))
    , config_(config)
    , mask_(interior_mask(gamma0.mesh(), config.margin))
    , map_(gamma0.mesh_ptr(), mask_.inside, config.smoothing)
{
    config_.validate();
    check_compatible(data_, gamma0);
    if (config_.exclude_junctions) {
        excluded_ = junction_samples(gamma0.mesh(), data_.traces.front());
    }
    for (const auto& p : data_.profiles) {
        const double l2 = operator_norm_squared(gamma0, p, map_, config_.power_iterations, excluded_);
        steps_.push_back(l2 > 0.0 ? config_.step_scale / l2 : 0.0);
    }
}

std::vector<double> LandweberKaczmarz::residuals(const ScalarField& gamma) const
{
    const UnipolarOperator op(gamma);
    std::vector<double> r;
    for (std::size_t j = 0; j < data_.profiles.size(); ++j) {
        FluxTrace t = op.forward(data_.profiles[j]).trace;
        for (std::size_t k = 0; k < t.size(); ++k) {
            t.values[k] -= data_.traces[j].values[k];
        }
        zero_samples(t, excluded_);
        r.push_back(trace_norm(t));
    }
    return r;
}

double LandweberKaczmarz::total(const std::vector<double>& residuals)
{
    double s = 0.0;
    for (double r : residuals) {
        s += r * r;
    }
    return std::sqrt(s);
}

ReconstructionState LandweberKaczmarz::step(const ReconstructionState& state, StepReport* report) const
{
    const auto j = static_cast<std::size_t>(state.j);
    if (j >= data_.profiles.size()) {
        throw InvalidArgument("component index out of range");
    }
    const UnipolarOperator op(state.gamma);
    const ForwardSolution fw = op.forward(data_.profiles[j]);
    FluxTrace z = fw.trace;
    for (std::size_t k = 0; k < z.size(); ++k) {
        z.values[k] -= data_.traces[j].values[k];
    }
    zero_samples(z, excluded_);
    const ScalarField phi = adjoint_field(op, z, config_.adjoint_bc);
    const ScalarField g = map_(adjoint_functional(state.gamma.mesh(), fw.u, phi));
    if (!g.all_finite()) {
        throw NumericalError("nonfinite gradient at step k = " + std::to_string(state.k) + " (component "
                             + std::to_string(state.j) + ")");
    }

    ReconstructionState next = state;
    const double w = steps_[j];
    double du2 = 0.0;
    for (Index i = 0; i < state.gamma.size(); ++i) {
        if (!mask_[i]) {
            continue;
        }
        const double updated = std::max(state.gamma[i] - w * g[i], config_.gamma_floor);
        du2 += (updated - state.gamma[i]) * (updated - state.gamma[i]);
        next.gamma[i] = updated;
    }
    next.k = state.k + 1;
    next.j = state.j + 1;
    if (next.j == static_cast<int>(data_.profiles.size())) {
        next.j = 0;
        next.cycle = state.cycle + 1;
    }
    if (report) {
        report->residual = trace_norm(z);
        report->step_size = w;
        ScalarField diff(state.gamma.mesh_ptr(), 0.0);
        for (Index i = 0; i < diff.size(); ++i) {
            diff[i] = next.gamma[i] - state.gamma[i];
        }
        report->update_norm = l2_norm(diff);
    }
    return next;
}

ReconstructionState lk_step(const ReconstructionState& state, const MeasurementSet& data,
                            const ReconstructionConfig& config, const ScalarField& gamma0)
{
    return LandweberKaczmarz(data, config, gamma0).step(state);
}

double relative_masked_error(const ScalarField& gamma, const ScalarField* truth, const NodeMask& mask)
{
    if (!truth) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    ScalarField diff(gamma.mesh_ptr(), 0.0);
    for (Index i = 0; i < diff.size(); ++i) {
        diff[i] = gamma[i] - (*truth)[i];
    }
    const double den = l2_norm_masked(*truth, mask.inside);
    return l2_norm_masked(diff, mask.inside) / den;
}

ReconstructionResult run_reconstruction(const MeasurementSet& data, const ReconstructionConfig& config,
                                        const ScalarField& gamma0, const ScalarField* truth)
{
    if (truth && !truth->mesh().same_layout(gamma0.mesh())) {
        throw InvalidArgument("reference coefficient lives on a different mesh");
    }
    const LandweberKaczmarz lk(data, config, gamma0);
    const double ynorm = data.exact_norm > 0.0 ? data.exact_norm : measurement_norm(data.traces);
    // Error level: the applied noise plus, for two-mesh data, the estimated
    // forward-model gap, which no iterate on the coarse mesh can remove.
    const double level = data.noise_level * ynorm + (config.include_model_error ? data.model_error : 0.0);
    const double discrepancy = config.tau * level;

    ReconstructionResult res;
    res.step_sizes = lk.step_sizes();
    res.initial_error = relative_masked_error(gamma0, truth, lk.mask());
    ReconstructionState state{gamma0, 0, 0, 0};
    const int n_components = static_cast<int>(data.profiles.size());

    for (;;) {
        const double total = LandweberKaczmarz::total(lk.residuals(state.gamma));
        res.cycle_residuals.push_back(total);
        res.final_residual = total;
        if (level > 0.0 && total <= discrepancy) {
            res.stop_reason = "discrepancy";
            res.discrepancy_fired = true;
            break;
        }
        if (total <= config.residual_floor * ynorm) {
            res.stop_reason = "residual_floor";
            break;
        }
        if (state.cycle >= config.max_cycles) {
            res.stop_reason = "max_cycles";
            break;
        }
        for (int j = 0; j < n_components; ++j) {
            StepReport rep;
            const int k = state.k;
            const int cycle = state.cycle;
            state = lk.step(state, &rep);
            res.history.push_back({k, cycle, j, rep.residual, total, relative_masked_error(state.gamma, truth, lk.mask())});
        }
        if (config.snapshot_every > 0 && state.cycle % config.snapshot_every == 0) {
            res.snapshots.emplace_back(state.cycle, state.gamma);
        }
    }
    res.cycles = state.cycle;
    res.final_error = relative_masked_error(state.gamma, truth, lk.mask());
    res.gamma = std::move(state.gamma);
    return res;
}

ScalarField recover_doping(const ScalarField& gamma, double lambda2, const ScalarField& boundary_doping)
{
    if (!(gamma.min() > 0.0) || !gamma.all_finite()) {
        throw InvalidArgument("recover_doping: gamma must be finite and strictly positive");
    }
    if (!(lambda2 >= 0.0)) {
        throw InvalidArgument("recover_doping: lambda2 must be >= 0");
    }
    if (!boundary_doping.mesh_ptr() || !boundary_doping.mesh().same_layout(gamma.mesh())) {
        throw InvalidArgument("recover_doping: boundary doping lives on a different mesh");
    }
    const Mesh& mesh = gamma.mesh();
    const Index n = mesh.node_count();
    Eigen::VectorXd lg(n);
    for (Index i = 0; i < n; ++i) {
        lg[i] = std::log(gamma[i]);
    }
    const std::vector<double> ones(static_cast<std::size_t>(n), 1.0);
    const Eigen::VectorXd klg = assemble_stiffness(mesh, ones) * lg;
    const std::vector<double> m = lumped_mass(mesh);
    std::vector<double> c(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const auto si = static_cast<std::size_t>(i);
        c[si] = mesh.is_boundary(i) ? boundary_doping[i] : gamma[i] + lambda2 * klg[i] / m[si];
    }
    return {gamma.mesh_ptr(), std::move(c)};
}

void write_history_csv(const std::vector<HistoryRow>& history, const std::filesystem::path& path)
{
    const std::array<std::string_view, 6> h{"k", "cycle", "j", "residual_j", "total_residual", "error"};
    io::CsvWriter w(path, h);
    for (const auto& r : history) {
        w << r.k << r.cycle << r.j << r.residual_j << r.total_residual << r.error;
        w.end_row();
    }
}

} // namespace dopinv
