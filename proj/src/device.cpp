#include "dopinv/device.hpp"

#include "dopinv/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

namespace dopinv {

using nlohmann::json;

namespace {

struct NamedField {
    const char* name;
    double PhysicalParameters::*member;
};

constexpr NamedField kPhysicalFields[] = {
    {"eps_s", &PhysicalParameters::eps_s}, {"q", &PhysicalParameters::q},
    {"mu_n", &PhysicalParameters::mu_n},   {"mu_p", &PhysicalParameters::mu_p},
    {"n_i", &PhysicalParameters::n_i},     {"U_T", &PhysicalParameters::U_T},
    {"tau_n", &PhysicalParameters::tau_n}, {"tau_p", &PhysicalParameters::tau_p},
    {"C_n", &PhysicalParameters::C_n},     {"C_p", &PhysicalParameters::C_p},
};

} // namespace

void PhysicalParameters::validate() const
{
    for (const auto& f : kPhysicalFields) {
        const double v = this->*f.member;
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw InvalidArgument(std::string("physical parameter ") + f.name + " must be finite and > 0, got "
                                  + io::format_double(v));
        }
    }
}

ScaledParameters scale_parameters(const PhysicalParameters& phys)
{
    phys.validate();
    const double qu = phys.q * phys.U_T;
    return {phys.eps_s / qu, phys.n_i, qu * phys.mu_n, qu * phys.mu_p};
}

PhysicalParameters load_physical_parameters(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open parameter file " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    if (!j.is_object()) {
        throw InvalidArgument(path.string() + ": expected a JSON object");
    }
    PhysicalParameters p;
    for (const auto& [key, value] : j.items()) {
        const auto* f = std::find_if(std::begin(kPhysicalFields), std::end(kPhysicalFields),
                                     [&](const NamedField& nf) { return key == nf.name; });
        if (f == std::end(kPhysicalFields)) {
            throw InvalidArgument(path.string() + ": unknown parameter '" + key + "'");
        }
        if (!value.is_number()) {
            throw InvalidArgument(path.string() + ": parameter '" + key + "' must be a number");
        }
        p.*(f->member) = value.get<double>();
    }
    p.validate();
    return p;
}

void save_physical_parameters(const PhysicalParameters& phys, const std::filesystem::path& path)
{
    json j = json::object();
    for (const auto& f : kPhysicalFields) {
        j[f.name] = phys.*f.member;
    }
    std::ofstream out(path);
    if (!out) {
        throw InvalidArgument("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

BuiltInValues built_in_potential(double C, const PhysicalParameters& phys)
{
    const double ni = phys.n_i;
    const double root = std::sqrt(C * C + 4.0 * ni * ni);
    BuiltInValues b;
    // Each density is formed without cancellation; the smaller one from n p = n_i^2.
    if (C >= 0.0) {
        b.n_D = 0.5 * (C + root);
        b.p_D = ni * ni / b.n_D;
    } else {
        b.p_D = 0.5 * (-C + root);
        b.n_D = ni * ni / b.p_D;
    }
    b.V_bi = phys.U_T * std::log(b.n_D / ni);
    return b;
}

DopingProfile DopingProfile::from_field(ScalarField C)
{
    DopingProfile d;
    d.lower = C.min();
    d.upper = C.max();
    d.C = std::move(C);
    return d;
}

void DopingProfile::validate() const
{
    if (!C.mesh_ptr()) {
        throw InvalidArgument("doping profile has no mesh");
    }
    if (!C.all_finite() || !std::isfinite(lower) || !std::isfinite(upper) || lower > upper) {
        throw InvalidArgument("doping profile values or bounds are not finite and ordered");
    }
    if (C.min() < lower || C.max() > upper) {
        throw InvalidArgument("doping profile violates its declared bounds");
    }
}

std::string to_string(Polarity p) { return p == Polarity::Unipolar ? "unipolar" : "bipolar"; }

Polarity parse_polarity(const std::string& s)
{
    if (s == "unipolar") return Polarity::Unipolar;
    if (s == "bipolar") return Polarity::Bipolar;
    throw InvalidArgument("unknown polarity '" + s + "' (expected unipolar|bipolar)");
}

double equilibrium_balance(double C, Polarity polarity, double unipolar_floor)
{
    return polarity == Polarity::Bipolar ? std::asinh(0.5 * C) : std::log(std::max(C, unipolar_floor));
}

DirichletMap balanced_dirichlet(const ScalarField& C, Polarity polarity, double unipolar_floor)
{
    DirichletMap m;
    for (Index i : C.mesh().dirichlet_nodes()) {
        m[i] = equilibrium_balance(C[i], polarity, unipolar_floor);
    }
    return m;
}

PotentialBounds equilibrium_bounds(const DopingProfile& doping, const DirichletMap& dirichlet)
{
    PotentialBounds b{std::asinh(0.5 * doping.lower), std::asinh(0.5 * doping.upper)};
    for (const auto& [k, v] : dirichlet) {
        b.lower = std::min(b.lower, v);
        b.upper = std::max(b.upper, v);
    }
    return b;
}

namespace {

struct Nonlinearity {
    Polarity polarity;
    [[nodiscard]] double g(double v) const { return polarity == Polarity::Bipolar ? 2.0 * std::sinh(v) : std::exp(v); }
    [[nodiscard]] double dg(double v) const
    {
        return polarity == Polarity::Bipolar ? 2.0 * std::cosh(v) : std::exp(v);
    }
};

} // namespace

EquilibriumResult solve_equilibrium(const DopingProfile& doping, double lambda2, Polarity polarity,
                                    const EquilibriumOptions& options)
{
    doping.validate();
    if (!(lambda2 > 0.0) || !std::isfinite(lambda2)) {
        throw InvalidArgument("solve_equilibrium: lambda2 must be finite and > 0");
    }
    const MeshPtr& mesh = doping.C.mesh_ptr();
    const Index n = mesh->node_count();
    const DirichletMap dir
        = options.dirichlet ? *options.dirichlet : balanced_dirichlet(doping.C, polarity, options.unipolar_floor);
    std::vector<Index> constrained;
    std::vector<char> is_c(static_cast<std::size_t>(n), 0);
    for (const auto& [k, v] : dir) {
        if (k < 0 || k >= n || !std::isfinite(v)) {
            throw InvalidArgument("solve_equilibrium: invalid Dirichlet entry");
        }
        constrained.push_back(k);
        is_c[static_cast<std::size_t>(k)] = 1;
    }

    const std::vector<double> ones(static_cast<std::size_t>(n), 1.0);
    const SparseMatrix k = lambda2 * assemble_stiffness(*mesh, ones);
    const std::vector<double> m = lumped_mass(*mesh);
    const std::vector<double> s = assemble_load(*mesh, doping.C.values());
    const Nonlinearity nl{polarity};

    Eigen::VectorXd v(n);
    for (Index i = 0; i < n; ++i) {
        v[i] = equilibrium_balance(doping.C[i], polarity, options.unipolar_floor);
    }
    for (const auto& [i, val] : dir) {
        v[i] = val;
    }

    auto residual = [&](const Eigen::VectorXd& x, Eigen::VectorXd& f) {
        f = k * x;
        double norm2 = 0.0;
        for (Index i = 0; i < n; ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (is_c[si]) {
                f[i] = 0.0;
                continue;
            }
            f[i] += m[si] * nl.g(x[i]) - s[si];
            norm2 += f[i] * f[i] / m[si];
        }
        return std::sqrt(norm2);
    };

    EquilibriumResult result;
    Eigen::VectorXd f;
    double norm = residual(v, f);
    if (!std::isfinite(norm)) {
        throw NumericalError("solve_equilibrium: initial residual is not finite");
    }
    result.residual_history.push_back(norm);

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    while (norm >= options.tolerance) {
        if (result.iterations >= options.max_iterations) {
            std::string hist;
            for (double r : result.residual_history) {
                hist += " " + io::format_double(r);
            }
            throw NumericalError("solve_equilibrium: Newton did not converge in " + std::to_string(options.max_iterations)
                                 + " iterations; residual history:" + hist
                                 + " (try a smaller doping range or larger lambda2)");
        }
        SparseMatrix jac = k;
        for (Index i = 0; i < n; ++i) {
            jac.coeffRef(i, i) += m[static_cast<std::size_t>(i)] * nl.dg(v[i]);
        }
        const ConstrainedSystem sys(std::move(jac), constrained);
        const Eigen::VectorXd step = sys.solve(-f, zero);

        double t = 1.0;
        bool accepted = false;
        Eigen::VectorXd trial;
        Eigen::VectorXd ftrial;
        for (int h = 0; h <= options.max_halvings; ++h, t *= 0.5) {
            trial = v + t * step;
            const double tn = residual(trial, ftrial);
            if (std::isfinite(tn) && tn < (1.0 - 1e-4 * t) * norm) {
                v = trial;
                f = ftrial;
                norm = tn;
                accepted = true;
                break;
            }
        }
        ++result.iterations;
        if (!accepted) {
            throw NumericalError("solve_equilibrium: damping exhausted after " + std::to_string(options.max_halvings)
                                 + " halvings at residual " + io::format_double(norm));
        }
        result.residual_history.push_back(norm);
    }
    result.V = ScalarField(mesh, std::vector<double>(v.data(), v.data() + n));
    return result;
}

std::string to_string(RecombinationKind k)
{
    switch (k) {
    case RecombinationKind::None: return "none";
    case RecombinationKind::SRH: return "srh";
    case RecombinationKind::Auger: return "auger";
    }
    return "?";
}

RecombinationKind parse_recombination_kind(const std::string& s)
{
    if (s == "none") return RecombinationKind::None;
    if (s == "srh") return RecombinationKind::SRH;
    if (s == "auger") return RecombinationKind::Auger;
    throw InvalidArgument("unknown recombination model '" + s + "' (expected none|srh|auger)");
}

std::string to_string(SrhVariant v) { return v == SrhVariant::SingleTau ? "single_tau" : "standard"; }

SrhVariant parse_srh_variant(const std::string& s)
{
    if (s == "single_tau") return SrhVariant::SingleTau;
    if (s == "standard") return SrhVariant::Standard;
    throw InvalidArgument("unknown SRH variant '" + s + "' (expected single_tau|standard)");
}

RecombinationModel RecombinationModel::from_physical(RecombinationKind kind, const PhysicalParameters& phys,
                                                     SrhVariant variant)
{
    phys.validate();
    RecombinationModel m;
    m.kind = kind;
    m.srh_variant = variant;
    m.n_i = phys.n_i;
    m.tau_n = phys.tau_n;
    m.tau_p = phys.tau_p;
    m.C_n = phys.C_n;
    m.C_p = phys.C_p;
    return m;
}

double RecombinationModel::coefficient(double n, double p) const
{
    switch (kind) {
    case RecombinationKind::None: return 0.0;
    case RecombinationKind::Auger: return C_n * n + C_p * p;
    case RecombinationKind::SRH: {
        const double second = srh_variant == SrhVariant::SingleTau ? tau_p : tau_n;
        const double denom = tau_p * (n + n_i) + second * (p + n_i);
        if (!(denom > 0.0)) {
            throw InvalidArgument("SRH denominator is not positive (n = " + io::format_double(n)
                                  + ", p = " + io::format_double(p) + ")");
        }
        return 1.0 / denom;
    }
    }
    return 0.0;
}

double RecombinationModel::rate(double n, double p) const { return coefficient(n, p) * (n * p - n_i * n_i); }

double recombination_rate(double n, double p, const RecombinationModel& model) { return model.rate(n, p); }

ScalarField q0_field(const ScalarField& V0, const RecombinationModel& model, double delta2)
{
    std::vector<double> q(V0.values().begin(), V0.values().end());
    for (double& x : q) {
        x = model.coefficient(delta2 * std::exp(x), delta2 * std::exp(-x));
        if (!(x >= 0.0) || !std::isfinite(x)) {
            throw NumericalError("Q0 is negative or not finite");
        }
    }
    return {V0.mesh_ptr(), std::move(q)};
}

double zsc_conductivity(double C) { return std::exp(std::asinh(2.0 * C)); }

double zsc_doping(double a)
{
    if (!(a > 0.0)) {
        throw InvalidArgument("zsc_doping: conductivity must be > 0, got " + io::format_double(a));
    }
    // sinh(ln a)/2 = (a - 1/a)/4
    return 0.25 * (a - 1.0 / a);
}

ScalarField zsc_conductivity(const ScalarField& C)
{
    std::vector<double> a(C.values().begin(), C.values().end());
    for (double& x : a) x = zsc_conductivity(x);
    return {C.mesh_ptr(), std::move(a)};
}

ScalarField zsc_doping(const ScalarField& a)
{
    std::vector<double> c(a.values().begin(), a.values().end());
    for (double& x : c) x = zsc_doping(x);
    return {a.mesh_ptr(), std::move(c)};
}

} // namespace dopinv
