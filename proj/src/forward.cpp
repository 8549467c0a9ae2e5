#include "dopinv/forward.hpp"

#include "dopinv/io.hpp"
#include "dopinv/serialization.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>

namespace dopinv {

using nlohmann::json;

double InputProfile::operator()(double s) const
{
    return amplitude * std::max(0.0, 1.0 - std::abs(s - center) / half_width);
}

void InputProfile::validate() const
{
    if (!(center > 0.0 && center < 1.0)) {
        throw InvalidArgument("input center must lie in (0, 1), got " + io::format_double(center));
    }
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
        throw InvalidArgument("input half width must be finite and > 0");
    }
    if (!std::isfinite(amplitude)) {
        throw InvalidArgument("input amplitude must be finite");
    }
}

std::vector<InputProfile> equispaced_profiles(int count)
{
    if (count < 1) {
        throw InvalidArgument("number of inputs must be >= 1");
    }
    const double h = 1.0 / (count + 1);
    std::vector<InputProfile> out;
    for (int j = 1; j <= count; ++j) {
        out.push_back({j * h, h, 1.0});
    }
    return out;
}

DirichletMap input_boundary_values(const Mesh& mesh, const InputProfile& profile)
{
    profile.validate();
    std::vector<char> contact(static_cast<std::size_t>(mesh.node_count()), 0);
    for (Index i : boundary_nodes(mesh, BoundaryTag::Gamma1)) {
        contact[static_cast<std::size_t>(i)] = 1;
    }
    DirichletMap m;
    for (Index i : mesh.dirichlet_nodes()) {
        if (contact[static_cast<std::size_t>(i)]) {
            m[i] = 0.0;
            continue;
        }
        const Point& p = mesh.node(i);
        const bool horizontal = p.y == 0.0 || p.y == 1.0;
        m[i] = profile(horizontal ? p.x : p.y);
    }
    return m;
}

namespace {

std::vector<double> full_boundary(const Mesh& mesh, const DirichletMap& m)
{
    std::vector<double> g(static_cast<std::size_t>(mesh.node_count()), 0.0);
    for (const auto& [k, v] : m) {
        g[static_cast<std::size_t>(k)] = v;
    }
    return g;
}

ScalarField map_field(const ScalarField& f, double (*fn)(double), double scale)
{
    std::vector<double> v(f.values().begin(), f.values().end());
    for (double& x : v) {
        x = scale * fn(x);
    }
    return {f.mesh_ptr(), std::move(v)};
}

double exp_neg(double x) { return std::exp(-x); }
double exp_pos(double x) { return std::exp(x); }

const ScalarField& checked_conductivity(const ScalarField& gamma)
{
    if (!gamma.mesh_ptr() || !(gamma.min() > 0.0) || !gamma.all_finite()) {
        throw InvalidArgument("conductivity must be finite and strictly positive");
    }
    return gamma;
}

} // namespace

UnipolarOperator::UnipolarOperator(const ScalarField& gamma)
    : gamma_(checked_conductivity(gamma))
    , system_(gamma.mesh(), gamma.values(), {}, gamma.mesh().dirichlet_nodes())
{
}

std::vector<double> UnipolarOperator::solve(std::span<const double> load, std::span<const double> boundary) const
{
    return system_.solve(load, boundary);
}

FluxTrace UnipolarOperator::flux(std::span<const double> u, std::span<const double> load) const
{
    std::vector<double> r;
    if (load.empty()) {
        const std::vector<double> zero(u.size(), 0.0);
        r = system_.residual(u, zero);
    } else {
        r = system_.residual(u, load);
    }
    return flux_from_residual(gamma_.mesh(), r, BoundaryTag::Gamma1);
}

ForwardSolution UnipolarOperator::forward(const InputProfile& profile) const
{
    const Mesh& mesh = gamma_.mesh();
    const auto g = full_boundary(mesh, input_boundary_values(mesh, profile));
    const std::vector<double> zero(g.size(), 0.0);
    ScalarField u(gamma_.mesh_ptr(), system_.solve(zero, g));
    FluxTrace t = flux(u.values());
    return {std::move(u), std::move(t)};
}

ScalarField UnipolarOperator::adjoint(const FluxTrace& z) const
{
    const Mesh& mesh = gamma_.mesh();
    const auto nodes = boundary_nodes(mesh, BoundaryTag::Gamma1);
    if (z.nodes != nodes || z.values.size() != nodes.size()) {
        throw InvalidArgument("adjoint datum does not live on this mesh's Gamma1");
    }
    std::vector<double> g(static_cast<std::size_t>(mesh.node_count()), 0.0);
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        g[static_cast<std::size_t>(nodes[k])] = z.values[k];
    }
    const std::vector<double> zero(g.size(), 0.0);
    return {gamma_.mesh_ptr(), system_.solve(zero, g)};
}

ForwardSolution unipolar_forward(const ScalarField& gamma, const InputProfile& profile)
{
    return UnipolarOperator(gamma).forward(profile);
}

BipolarSolution bipolar_vc_derivative(const ScalarField& V0, const InputProfile& profile, const ScalarField& q0,
                                      double mu_n, double mu_p)
{
    if (!(mu_n > 0.0) || !(mu_p > 0.0)) {
        throw InvalidArgument("mobilities must be > 0");
    }
    CoupledBvp p;
    p.diffusion_u = map_field(V0, exp_pos, mu_n);
    p.diffusion_v = map_field(V0, exp_neg, mu_p);
    p.coupling = q0;
    p.sign = +1;
    for (const auto& [k, v] : input_boundary_values(V0.mesh(), profile)) {
        p.dirichlet_u[k] = -v;
        p.dirichlet_v[k] = v;
    }
    auto [u, v] = solve_coupled_bvp(p);
    auto [fu, fv] = coupled_boundary_flux(p, u, v, BoundaryTag::Gamma1);
    FluxTrace out = fu;
    for (std::size_t k = 0; k < out.values.size(); ++k) {
        out.values[k] = fu.values[k] - fv.values[k];
    }
    return {std::move(u), std::move(v), std::move(out)};
}

FluxTrace capacitance_measurement(const ScalarField& V0, const ScalarField& u_hat, const ScalarField& v_hat,
                                  const InputProfile& profile, double lambda2)
{
    if (!(lambda2 > 0.0)) {
        throw InvalidArgument("lambda2 must be > 0");
    }
    const MeshPtr& mesh = V0.mesh_ptr();
    MixedBvp p;
    p.diffusion = ScalarField(mesh, lambda2);
    std::vector<double> react(static_cast<std::size_t>(mesh->node_count()));
    std::vector<double> src(react.size());
    for (Index i = 0; i < mesh->node_count(); ++i) {
        const double ep = std::exp(V0[i]);
        const double em = std::exp(-V0[i]);
        react[static_cast<std::size_t>(i)] = ep + em;
        src[static_cast<std::size_t>(i)] = -(ep * u_hat[i] + em * v_hat[i]);
    }
    p.reaction = ScalarField(mesh, std::move(react));
    p.source = ScalarField(mesh, std::move(src));
    p.dirichlet = input_boundary_values(*mesh, profile);
    const ScalarField w = solve_mixed_bvp(p);
    FluxTrace t = boundary_flux(p, w, BoundaryTag::Gamma1);
    for (double& x : t.values) {
        x /= lambda2;
    }
    return t;
}

LbicSolution lbic_image_2d(const ScalarField& V0, const ScalarField& q0, double mu_n, double mu_p)
{
    if (!(mu_n > 0.0) || !(mu_p > 0.0)) {
        throw InvalidArgument("mobilities must be > 0");
    }
    const Mesh& mesh = V0.mesh();
    CoupledBvp p;
    p.diffusion_u = map_field(V0, exp_pos, mu_n);
    p.diffusion_v = map_field(V0, exp_neg, mu_p);
    p.coupling = q0;
    p.sign = -1;
    for (Index i : boundary_nodes(mesh, BoundaryTag::Gamma1)) {
        p.dirichlet_u[i] = 1.0;
        p.dirichlet_v[i] = 1.0;
    }
    for (Index i : boundary_nodes(mesh, BoundaryTag::DirichletOther)) {
        p.dirichlet_u[i] = 0.0;
        p.dirichlet_v[i] = 0.0;
    }
    auto [u, v] = solve_coupled_bvp(p);
    std::vector<double> img(static_cast<std::size_t>(mesh.node_count()));
    for (Index i = 0; i < mesh.node_count(); ++i) {
        img[static_cast<std::size_t>(i)] = v[i] - u[i];
    }
    ScalarField image(V0.mesh_ptr(), std::move(img));
    return {std::move(u), std::move(v), std::move(image)};
}

double measurement_norm(const std::vector<FluxTrace>& traces)
{
    double s = 0.0;
    for (const auto& t : traces) {
        s += trace_inner(t, t);
    }
    return std::sqrt(s);
}

MeasurementSet measure(const ScalarField& gamma, const std::vector<InputProfile>& profiles)
{
    if (profiles.empty()) {
        throw InvalidArgument("at least one input profile is required");
    }
    const UnipolarOperator op(gamma);
    MeasurementSet m;
    m.profiles = profiles;
    for (const auto& p : profiles) {
        m.traces.push_back(op.forward(p).trace);
    }
    m.mesh_n = gamma.mesh().resolution();
    m.source_n = m.mesh_n;
    m.geometry = gamma.mesh().geometry();
    m.exact_norm = measurement_norm(m.traces);
    return m;
}

void add_noise(MeasurementSet& data, double level, std::uint64_t seed)
{
    if (!(level >= 0.0) || !std::isfinite(level)) {
        throw InvalidArgument("noise level must be finite and >= 0");
    }
    data.noise_level = level;
    data.seed = seed;
    data.noise_norm = 0.0;
    if (level == 0.0 || data.exact_norm == 0.0) {
        return;
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> e;
    double norm2 = 0.0;
    for (const auto& t : data.traces) {
        std::vector<double> ej(t.values.size());
        for (std::size_t k = 0; k < ej.size(); ++k) {
            ej[k] = normal(rng);
            norm2 += t.weights[k] * ej[k] * ej[k];
        }
        e.push_back(std::move(ej));
    }
    const double scale = level * data.exact_norm / std::sqrt(norm2);
    double applied2 = 0.0;
    for (std::size_t j = 0; j < data.traces.size(); ++j) {
        auto& t = data.traces[j];
        for (std::size_t k = 0; k < t.values.size(); ++k) {
            const double noisy = t.values[k] + scale * e[j][k];
            const double d = noisy - t.values[k];
            applied2 += t.weights[k] * d * d;
            t.values[k] = noisy;
        }
    }
    data.noise_norm = std::sqrt(applied2);
}

std::string to_string(TraceTransfer t)
{
    return t == TraceTransfer::Restriction ? "restriction" : "interpolation";
}

TraceTransfer parse_trace_transfer(const std::string& s)
{
    if (s == "restriction") return TraceTransfer::Restriction;
    if (s == "interpolation") return TraceTransfer::Interpolation;
    throw InvalidArgument("unknown trace transfer '" + s + "' (expected restriction|interpolation)");
}

FluxTrace transfer_trace(const FluxTrace& source, const Mesh& target, TraceTransfer method)
{
    FluxTrace out = make_trace(target, source.tag);
    const std::size_t m = out.size();
    // Both traces are ordered by arclength from the same end of Gamma1.
    const auto& sc = out.arclength;
    if (method == TraceTransfer::Interpolation) {
        for (std::size_t k = 0; k < m; ++k) {
            const double s = sc[k];
            auto it = std::lower_bound(source.arclength.begin(), source.arclength.end(), s);
            if (it == source.arclength.begin()) {
                out.values[k] = source.values.front();
            } else if (it == source.arclength.end()) {
                out.values[k] = source.values.back();
            } else {
                const auto q = static_cast<std::size_t>(it - source.arclength.begin());
                const double t = (s - source.arclength[q - 1]) / (source.arclength[q] - source.arclength[q - 1]);
                out.values[k] = (1.0 - t) * source.values[q - 1] + t * source.values[q];
            }
        }
        return out;
    }
    // Integrate the source flux against each target hat: sum_f phi_k(s_f) v_f w_f,
    // normalized so constants are reproduced.
    auto hat = [&](std::size_t k, double s) {
        if (k > 0 && s >= sc[k - 1] && s <= sc[k]) return (s - sc[k - 1]) / (sc[k] - sc[k - 1]);
        if (k + 1 < m && s >= sc[k] && s <= sc[k + 1]) return (sc[k + 1] - s) / (sc[k + 1] - sc[k]);
        return s == sc[k] ? 1.0 : 0.0;
    };
    for (std::size_t k = 0; k < m; ++k) {
        double num = 0.0;
        double den = 0.0;
        for (std::size_t f = 0; f < source.size(); ++f) {
            const double phi = hat(k, source.arclength[f]);
            if (phi > 0.0) {
                num += phi * source.values[f] * source.weights[f];
                den += phi * source.weights[f];
            }
        }
        if (!(den > 0.0)) {
            throw InvalidArgument("source trace too coarse to restrict onto the target Gamma1 nodes");
        }
        out.values[k] = num / den;
    }
    return out;
}

double estimate_model_error(const std::function<double(const Point&)>& gamma_ref,
                            const std::vector<InputProfile>& profiles, int fine_n, int coarse_n,
                            const GeometryConfig& geometry, TraceTransfer transfer, bool exclude_junctions)
{
    const MeshPtr fine = build_unit_square(fine_n, geometry);
    const MeshPtr coarse = build_unit_square(coarse_n, geometry);
    const MeasurementSet f = measure(ScalarField::from_function(fine, gamma_ref), profiles);
    const MeasurementSet c = measure(ScalarField::from_function(coarse, gamma_ref), profiles);
    std::vector<FluxTrace> gap;
    for (std::size_t j = 0; j < profiles.size(); ++j) {
        FluxTrace t = transfer_trace(f.traces[j], *coarse, transfer);
        for (std::size_t k = 0; k < t.size(); ++k) {
            t.values[k] -= c.traces[j].values[k];
        }
        if (exclude_junctions) {
            zero_samples(t, junction_samples(*coarse, t));
        }
        gap.push_back(std::move(t));
    }
    return measurement_norm(gap);
}

MeasurementSet synthesize_dataset(const std::function<double(const Point&)>& gamma_true,
                                  const std::vector<InputProfile>& profiles, int fine_n, int coarse_n,
                                  double noise_level, std::uint64_t seed, const GeometryConfig& geometry,
                                  TraceTransfer transfer)
{
    if (fine_n <= coarse_n) {
        throw InvalidArgument("two-mesh protocol requires fine_n > coarse_n (got " + std::to_string(fine_n)
                              + " <= " + std::to_string(coarse_n) + ")");
    }
    const MeshPtr fine = build_unit_square(fine_n, geometry);
    const MeshPtr coarse = build_unit_square(coarse_n, geometry);
    const MeasurementSet f = measure(ScalarField::from_function(fine, gamma_true), profiles);
    MeasurementSet m;
    m.profiles = profiles;
    for (const auto& t : f.traces) {
        m.traces.push_back(transfer_trace(t, *coarse, transfer));
    }
    m.mesh_n = coarse_n;
    m.source_n = fine_n;
    m.geometry = geometry;
    m.exact_norm = measurement_norm(m.traces);
    add_noise(m, noise_level, seed);
    return m;
}

void write_measurements(const MeasurementSet& data, const std::filesystem::path& dir)
{
    io::ensure_directory(dir);
    json profiles = json::array();
    for (const auto& p : data.profiles) {
        profiles.push_back(to_json(p));
    }
    const json header = {
        {"profiles", profiles},          {"noise_level", data.noise_level}, {"seed", data.seed},
        {"mesh_n", data.mesh_n},         {"source_n", data.source_n},       {"geometry", to_json(data.geometry)},
        {"exact_norm", data.exact_norm}, {"noise_norm", data.noise_norm},      {"model_error", data.model_error},
    };
    std::ofstream out(dir / "measurements.json");
    if (!out) {
        throw InvalidArgument("cannot write " + (dir / "measurements.json").string());
    }
    out << header.dump(2) << '\n';

    const std::array<std::string_view, 3> h{"profile_id", "arclength_s", "flux_value"};
    io::CsvWriter w(dir / "traces.csv", h);
    for (std::size_t j = 0; j < data.traces.size(); ++j) {
        const auto& t = data.traces[j];
        for (std::size_t k = 0; k < t.size(); ++k) {
            w << static_cast<long long>(j) << t.arclength[k] << t.values[k];
            w.end_row();
        }
    }
}

MeasurementSet read_measurements(const std::filesystem::path& dir)
{
    const auto hpath = dir / "measurements.json";
    std::ifstream in(hpath);
    if (!in) {
        throw InvalidArgument("cannot open " + hpath.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw InvalidArgument(hpath.string() + ": " + e.what());
    }
    const std::string where = hpath.string();
    require_known_keys(j, {"profiles", "noise_level", "seed", "mesh_n", "source_n", "geometry", "exact_norm",
                           "noise_norm", "model_error"},
                       where);
    MeasurementSet m;
    if (!j.contains("profiles") || !j.at("profiles").is_array()) {
        throw InvalidArgument(where + ".profiles: expected an array");
    }
    for (std::size_t k = 0; k < j.at("profiles").size(); ++k) {
        m.profiles.push_back(profile_from_json(j.at("profiles")[k], where + ".profiles[" + std::to_string(k) + "]"));
    }
    m.noise_level = get_number(j, "noise_level", 0.0, where);
    m.seed = j.value("seed", std::uint64_t{0});
    m.mesh_n = get_int(j, "mesh_n", 0, where);
    m.source_n = get_int(j, "source_n", m.mesh_n, where);
    m.geometry = j.contains("geometry") ? geometry_from_json(j.at("geometry"), where + ".geometry") : GeometryConfig{};
    m.exact_norm = get_number(j, "exact_norm", 0.0, where);
    m.noise_norm = get_number(j, "noise_norm", 0.0, where);
    m.model_error = get_number(j, "model_error", 0.0, where);

    const MeshPtr mesh = build_unit_square(m.mesh_n, m.geometry);
    const io::CsvTable table = io::read_csv(dir / "traces.csv");
    const auto ids = table.numeric_column("profile_id");
    const auto s = table.numeric_column("arclength_s");
    const auto val = table.numeric_column("flux_value");
    m.traces.assign(m.profiles.size(), make_trace(*mesh, BoundaryTag::Gamma1));
    std::vector<std::size_t> filled(m.profiles.size(), 0);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        const auto id = static_cast<std::size_t>(ids[r]);
        if (ids[r] < 0 || id >= m.traces.size()) {
            throw InvalidArgument("traces.csv row " + std::to_string(r + 2) + ": profile_id out of range");
        }
        auto& t = m.traces[id];
        const std::size_t k = filled[id]++;
        if (k >= t.size() || std::abs(t.arclength[k] - s[r]) > 1e-9) {
            throw InvalidArgument("traces.csv row " + std::to_string(r + 2)
                                  + ": sample does not match the Gamma1 nodes of the declared mesh");
        }
        t.values[k] = val[r];
    }
    for (std::size_t id = 0; id < filled.size(); ++id) {
        if (filled[id] != m.traces[id].size()) {
            throw InvalidArgument("traces.csv: profile " + std::to_string(id) + " has "
                                  + std::to_string(filled[id]) + " samples, expected "
                                  + std::to_string(m.traces[id].size()));
        }
    }
    return m;
}

} // namespace dopinv
