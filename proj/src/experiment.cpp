#include "dopinv/experiment.hpp"

#include "dopinv/io.hpp"
#include "dopinv/lbic1d.hpp"
#include "dopinv/serialization.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

namespace dopinv {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::pair<double, double> get_pair(const json& j, const char* key, std::pair<double, double> fallback,
                                   const std::string& where)
{
    if (!j.contains(key)) {
        return fallback;
    }
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 2 || !a[0].is_number() || !a[1].is_number()) {
        throw InvalidArgument(where + "." + key + ": expected [x, y]");
    }
    return {a[0].get<double>(), a[1].get<double>()};
}

bool get_bool(const json& j, const char* key, bool fallback, const std::string& where)
{
    if (!j.contains(key)) {
        return fallback;
    }
    if (!j.at(key).is_boolean()) {
        throw InvalidArgument(where + "." + key + ": expected true or false");
    }
    return j.at(key).get<bool>();
}

std::vector<double> get_numbers(const json& j, const char* key, const std::string& where)
{
    std::vector<double> out;
    if (!j.contains(key)) {
        return out;
    }
    const auto& a = j.at(key);
    if (!a.is_array()) {
        throw InvalidArgument(where + "." + key + ": expected an array of numbers");
    }
    for (const auto& v : a) {
        if (!v.is_number()) {
            throw InvalidArgument(where + "." + key + ": expected an array of numbers");
        }
        out.push_back(v.get<double>());
    }
    return out;
}

const json& section(const json& j, const char* key)
{
    static const json empty = json::object();
    return j.contains(key) ? j.at(key) : empty;
}

void write_json(const json& j, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) {
        throw InvalidArgument("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open " + path.string());
    }
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::parse_error& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}



} // namespace

// -- specs -----------------------------------------------------------------------

std::function<double(const Point&)> make_phantom(const PhantomSpec& s)
{
    if (s.kind == "constant") {
        const double b = s.background;
        return [b](const Point&) { return b; };
    }
    if (s.kind != "bump") {
        throw InvalidArgument("phantom.kind: unknown kind '" + s.kind + "' (expected bump|constant)");
    }
    return [s](const Point& p) {
        const double r2 = ((p.x - s.center_x) * (p.x - s.center_x) + (p.y - s.center_y) * (p.y - s.center_y))
                          / (s.radius * s.radius);
        if (r2 >= 1.0) {
            return s.background;
        }
        const double w = 1.0 - r2;
        return s.background + s.amplitude * w * w * w;
    };
}

std::vector<InputProfile> make_profiles(const InputSpec& s)
{
    std::vector<InputProfile> out;
    if (s.centers.empty()) {
        out = equispaced_profiles(s.count);
        if (s.half_width > 0.0) {
            for (auto& p : out) p.half_width = s.half_width;
        }
    } else {
        const double h = s.half_width > 0.0 ? s.half_width : 1.0 / (static_cast<double>(s.centers.size()) + 1.0);
        for (double c : s.centers) {
            out.push_back({c, h, 1.0});
        }
    }
    for (auto& p : out) {
        p.amplitude = s.amplitude;
        p.validate();
    }
    return out;
}

std::function<double(const Point&)> make_doping(const DopingSpec& s)
{
    if (s.kind == "constant") {
        const double b = s.background;
        return [b](const Point&) { return b; };
    }
    if (s.kind == "gaussian") {
        return [s](const Point& p) {
            const double r2 = (p.x - s.center_x) * (p.x - s.center_x) + (p.y - s.center_y) * (p.y - s.center_y);
            return s.background + s.amplitude * std::exp(-r2 / (s.width * s.width));
        };
    }
    if (s.kind == "junction") {
        return [s](const Point& p) { return s.background + s.amplitude * std::tanh((p.y - s.depth) / s.width); };
    }
    throw InvalidArgument("doping.kind: unknown kind '" + s.kind + "' (expected constant|gaussian|junction)");
}

std::function<double(const Point&)> make_initial_guess(const ExperimentConfig& c)
{
    const double g0 = c.initial_guess;
    if (c.initial_strip == "constant") {
        return [g0](const Point&) { return g0; };
    }
    const double margin = c.reconstruction.margin;
    auto truth = make_phantom(c.phantom);
    return [g0, margin, truth](const Point& p) { return in_interior(p, margin) ? g0 : truth(p); };
}

// -- config ------------------------------------------------------------------------

ExperimentConfig parse_config(const json& j)
{
    require_known_keys(j,
                       {"mode", "geometry", "mesh", "phantom", "inputs", "noise", "reconstruction", "initial_guess",
                        "initial_strip", "physical", "scaled", "polarity", "recombination", "doping", "forward", "lbic1d",
                        "output_dir"},
                       "config");
    ExperimentConfig c;
    c.mode = get_string(j, "mode", c.mode, "config");
    if (c.mode != "forward" && c.mode != "invert" && c.mode != "lbic1d" && c.mode != "equilibrium") {
        throw InvalidArgument("config.mode: unknown mode '" + c.mode + "' (expected forward|invert|lbic1d|equilibrium)");
    }
    if (j.contains("geometry")) {
        c.geometry = geometry_from_json(j.at("geometry"), "config.geometry");
    }

    const json& mesh = section(j, "mesh");
    require_known_keys(mesh, {"fine_n", "coarse_n", "inverse_crime", "transfer"}, "config.mesh");
    c.fine_n = get_int(mesh, "fine_n", c.fine_n, "config.mesh");
    c.coarse_n = get_int(mesh, "coarse_n", c.coarse_n, "config.mesh");
    c.inverse_crime = get_bool(mesh, "inverse_crime", c.inverse_crime, "config.mesh");
    try {
        c.transfer = parse_trace_transfer(get_string(mesh, "transfer", to_string(c.transfer), "config.mesh"));
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string("config.mesh.transfer: ") + e.what());
    }
    if (c.coarse_n < 2) throw InvalidArgument("config.mesh.coarse_n: must be >= 2");
    if (!c.inverse_crime && c.fine_n <= c.coarse_n && (c.mode == "invert" || c.mode == "forward")) {
        throw InvalidArgument("config.mesh.fine_n: must exceed coarse_n unless inverse_crime is set");
    }

    const json& ph = section(j, "phantom");
    require_known_keys(ph, {"kind", "background", "amplitude", "center", "radius"}, "config.phantom");
    c.phantom.kind = get_string(ph, "kind", c.phantom.kind, "config.phantom");
    c.phantom.background = get_number(ph, "background", c.phantom.background, "config.phantom");
    c.phantom.amplitude = get_number(ph, "amplitude", c.phantom.amplitude, "config.phantom");
    std::tie(c.phantom.center_x, c.phantom.center_y)
        = get_pair(ph, "center", {c.phantom.center_x, c.phantom.center_y}, "config.phantom");
    c.phantom.radius = get_number(ph, "radius", c.phantom.radius, "config.phantom");
    if (!(c.phantom.radius > 0.0)) throw InvalidArgument("config.phantom.radius: must be > 0");
    if (!(c.phantom.background > 0.0) || !(c.phantom.background + std::min(0.0, c.phantom.amplitude) > 0.0)) {
        throw InvalidArgument("config.phantom: coefficient must stay positive");
    }
    make_phantom(c.phantom);

    const json& in = section(j, "inputs");
    require_known_keys(in, {"count", "centers", "half_width", "amplitude"}, "config.inputs");
    c.inputs.count = get_int(in, "count", c.inputs.count, "config.inputs");
    c.inputs.centers = get_numbers(in, "centers", "config.inputs");
    c.inputs.half_width = get_number(in, "half_width", c.inputs.half_width, "config.inputs");
    c.inputs.amplitude = get_number(in, "amplitude", c.inputs.amplitude, "config.inputs");
    if (!c.inputs.centers.empty()) {
        c.inputs.count = static_cast<int>(c.inputs.centers.size());
    }
    try {
        make_profiles(c.inputs);
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string("config.inputs: ") + e.what());
    }

    const json& noise = section(j, "noise");
    require_known_keys(noise, {"level", "seed"}, "config.noise");
    c.noise_level = get_number(noise, "level", c.noise_level, "config.noise");
    if (!(c.noise_level >= 0.0)) throw InvalidArgument("config.noise.level: must be >= 0");
    if (noise.contains("seed")) {
        const json& seed = noise.at("seed");
        if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0)) throw InvalidArgument("config.noise.seed: expected a nonnegative integer");
        c.seed = noise.at("seed").get<std::uint64_t>();
    }

    const json& rc = section(j, "reconstruction");
    require_known_keys(rc,
                       {"step_scale", "max_cycles", "tau", "margin", "gamma_floor", "smoothing", "power_iterations",
                        "residual_floor", "snapshot_every", "adjoint_bc", "include_model_error", "exclude_junctions"},
                       "config.reconstruction");
    auto& r = c.reconstruction;
    r.step_scale = get_number(rc, "step_scale", r.step_scale, "config.reconstruction");
    r.max_cycles = get_int(rc, "max_cycles", r.max_cycles, "config.reconstruction");
    r.tau = get_number(rc, "tau", r.tau, "config.reconstruction");
    r.margin = get_number(rc, "margin", r.margin, "config.reconstruction");
    r.gamma_floor = get_number(rc, "gamma_floor", r.gamma_floor, "config.reconstruction");
    r.smoothing = get_number(rc, "smoothing", r.smoothing, "config.reconstruction");
    r.power_iterations = get_int(rc, "power_iterations", r.power_iterations, "config.reconstruction");
    r.residual_floor = get_number(rc, "residual_floor", r.residual_floor, "config.reconstruction");
    r.snapshot_every = get_int(rc, "snapshot_every", r.snapshot_every, "config.reconstruction");
    r.adjoint_bc = parse_adjoint_bc(get_string(rc, "adjoint_bc", to_string(r.adjoint_bc), "config.reconstruction"));
    r.exclude_junctions = get_bool(rc, "exclude_junctions", r.exclude_junctions, "config.reconstruction");
    r.include_model_error = get_bool(rc, "include_model_error", r.include_model_error, "config.reconstruction");
    r.validate();

    c.initial_guess = get_number(j, "initial_guess", c.initial_guess, "config");
    if (!(c.initial_guess > 0.0)) throw InvalidArgument("config.initial_guess: must be > 0");
    c.initial_strip = get_string(j, "initial_strip", c.initial_strip, "config");
    if (c.initial_strip != "truth" && c.initial_strip != "constant") {
        throw InvalidArgument("config.initial_strip: expected truth|constant, got '" + c.initial_strip + "'");
    }

    if (j.contains("physical")) {
        const json& p = j.at("physical");
        require_known_keys(p, {"eps_s", "q", "mu_n", "mu_p", "n_i", "U_T", "tau_n", "tau_p", "C_n", "C_p"},
                           "config.physical");
        auto& ph2 = c.physical;
        ph2.eps_s = get_number(p, "eps_s", ph2.eps_s, "config.physical");
        ph2.q = get_number(p, "q", ph2.q, "config.physical");
        ph2.mu_n = get_number(p, "mu_n", ph2.mu_n, "config.physical");
        ph2.mu_p = get_number(p, "mu_p", ph2.mu_p, "config.physical");
        ph2.n_i = get_number(p, "n_i", ph2.n_i, "config.physical");
        ph2.U_T = get_number(p, "U_T", ph2.U_T, "config.physical");
        ph2.tau_n = get_number(p, "tau_n", ph2.tau_n, "config.physical");
        ph2.tau_p = get_number(p, "tau_p", ph2.tau_p, "config.physical");
        ph2.C_n = get_number(p, "C_n", ph2.C_n, "config.physical");
        ph2.C_p = get_number(p, "C_p", ph2.C_p, "config.physical");
    }
    c.physical.validate();
    c.scaled = scale_parameters(c.physical);
    const json& sc = section(j, "scaled");
    require_known_keys(sc, {"lambda2", "delta2", "mu_n", "mu_p"}, "config.scaled");
    c.scaled.lambda2 = get_number(sc, "lambda2", c.scaled.lambda2, "config.scaled");
    c.scaled.delta2 = get_number(sc, "delta2", c.scaled.delta2, "config.scaled");
    c.scaled.mu_n = get_number(sc, "mu_n", c.scaled.mu_n, "config.scaled");
    c.scaled.mu_p = get_number(sc, "mu_p", c.scaled.mu_p, "config.scaled");
    if (!(c.scaled.lambda2 > 0.0) || !(c.scaled.delta2 > 0.0) || !(c.scaled.mu_n > 0.0) || !(c.scaled.mu_p > 0.0)) {
        throw InvalidArgument("config.scaled: all scaled parameters must be > 0");
    }

    c.polarity = get_string(j, "polarity", c.polarity, "config");
    parse_polarity(c.polarity);
    const json& rec = section(j, "recombination");
    require_known_keys(rec, {"model", "srh_variant"}, "config.recombination");
    c.recombination = get_string(rec, "model", c.recombination, "config.recombination");
    c.srh_variant = get_string(rec, "srh_variant", c.srh_variant, "config.recombination");
    parse_recombination_kind(c.recombination);
    parse_srh_variant(c.srh_variant);

    const json& dp = section(j, "doping");
    require_known_keys(dp, {"kind", "background", "amplitude", "center", "width", "depth"}, "config.doping");
    c.doping.kind = get_string(dp, "kind", c.doping.kind, "config.doping");
    c.doping.background = get_number(dp, "background", c.doping.background, "config.doping");
    c.doping.amplitude = get_number(dp, "amplitude", c.doping.amplitude, "config.doping");
    std::tie(c.doping.center_x, c.doping.center_y)
        = get_pair(dp, "center", {c.doping.center_x, c.doping.center_y}, "config.doping");
    c.doping.width = get_number(dp, "width", c.doping.width, "config.doping");
    c.doping.depth = get_number(dp, "depth", c.doping.depth, "config.doping");
    if (!(c.doping.width > 0.0)) throw InvalidArgument("config.doping.width: must be > 0");
    make_doping(c.doping);

    const json& fw = section(j, "forward");
    require_known_keys(fw, {"model"}, "config.forward");
    c.forward_model = get_string(fw, "model", c.forward_model, "config.forward");
    if (c.forward_model != "unipolar" && c.forward_model != "bipolar" && c.forward_model != "lbic") {
        throw InvalidArgument("config.forward.model: unknown model '" + c.forward_model
                              + "' (expected unipolar|bipolar|lbic)");
    }

    const json& lb = section(j, "lbic1d");
    require_known_keys(lb,
                       {"M", "offset", "slope", "amplitude", "data_file", "q0", "mu_n", "mu_p", "initial", "family_c1"},
                       "config.lbic1d");
    auto& l = c.lbic1d;
    l.M = get_int(lb, "M", l.M, "config.lbic1d");
    l.offset = get_number(lb, "offset", l.offset, "config.lbic1d");
    l.slope = get_number(lb, "slope", l.slope, "config.lbic1d");
    l.amplitude = get_number(lb, "amplitude", l.amplitude, "config.lbic1d");
    l.data_file = get_string(lb, "data_file", l.data_file, "config.lbic1d");
    l.q0 = get_number(lb, "q0", l.q0, "config.lbic1d");
    l.mu_n = get_number(lb, "mu_n", l.mu_n, "config.lbic1d");
    l.mu_p = get_number(lb, "mu_p", l.mu_p, "config.lbic1d");
    std::tie(l.c1_init, l.c2_init) = get_pair(lb, "initial", {l.c1_init, l.c2_init}, "config.lbic1d");
    l.family_c1 = get_numbers(lb, "family_c1", "config.lbic1d");
    if (l.M < 2) throw InvalidArgument("config.lbic1d.M: must be >= 2");
    try {
        lbic1d::Constants{l.q0, l.mu_n, l.mu_p}.validate();
    } catch (const InvalidArgument& e) {
        throw InvalidArgument(std::string("config.lbic1d: ") + e.what());
    }

    c.output_dir = get_string(j, "output_dir", c.output_dir, "config");
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(read_json(path)); }

json to_json(const ExperimentConfig& c)
{
    const auto& r = c.reconstruction;
    const auto& p = c.physical;
    const auto& l = c.lbic1d;
    return {
        {"mode", c.mode},
        {"geometry", to_json(c.geometry)},
        {"mesh", {{"fine_n", c.fine_n}, {"coarse_n", c.coarse_n}, {"inverse_crime", c.inverse_crime},
                  {"transfer", to_string(c.transfer)}}},
        {"phantom",
         {{"kind", c.phantom.kind},
          {"background", c.phantom.background},
          {"amplitude", c.phantom.amplitude},
          {"center", {c.phantom.center_x, c.phantom.center_y}},
          {"radius", c.phantom.radius}}},
        {"inputs",
         {{"count", c.inputs.count},
          {"centers", c.inputs.centers},
          {"half_width", c.inputs.half_width},
          {"amplitude", c.inputs.amplitude}}},
        {"noise", {{"level", c.noise_level}, {"seed", c.seed}}},
        {"reconstruction",
         {{"step_scale", r.step_scale},
          {"max_cycles", r.max_cycles},
          {"tau", r.tau},
          {"margin", r.margin},
          {"gamma_floor", r.gamma_floor},
          {"smoothing", r.smoothing},
          {"power_iterations", r.power_iterations},
          {"residual_floor", r.residual_floor},
          {"snapshot_every", r.snapshot_every},
          {"adjoint_bc", to_string(r.adjoint_bc)},
          {"include_model_error", r.include_model_error},
          {"exclude_junctions", r.exclude_junctions}}},
        {"initial_guess", c.initial_guess},
        {"initial_strip", c.initial_strip},
        {"physical",
         {{"eps_s", p.eps_s},
          {"q", p.q},
          {"mu_n", p.mu_n},
          {"mu_p", p.mu_p},
          {"n_i", p.n_i},
          {"U_T", p.U_T},
          {"tau_n", p.tau_n},
          {"tau_p", p.tau_p},
          {"C_n", p.C_n},
          {"C_p", p.C_p}}},
        {"scaled",
         {{"lambda2", c.scaled.lambda2}, {"delta2", c.scaled.delta2}, {"mu_n", c.scaled.mu_n}, {"mu_p", c.scaled.mu_p}}},
        {"polarity", c.polarity},
        {"recombination", {{"model", c.recombination}, {"srh_variant", c.srh_variant}}},
        {"doping",
         {{"kind", c.doping.kind},
          {"background", c.doping.background},
          {"amplitude", c.doping.amplitude},
          {"center", {c.doping.center_x, c.doping.center_y}},
          {"width", c.doping.width},
          {"depth", c.doping.depth}}},
        {"forward", {{"model", c.forward_model}}},
        {"lbic1d",
         {{"M", l.M},
          {"offset", l.offset},
          {"slope", l.slope},
          {"amplitude", l.amplitude},
          {"data_file", l.data_file},
          {"q0", l.q0},
          {"mu_n", l.mu_n},
          {"mu_p", l.mu_p},
          {"initial", {l.c1_init, l.c2_init}},
          {"family_c1", l.family_c1}}},
        {"output_dir", c.output_dir},
    };
}

// -- regional errors -----------------------------------------------------------------

RegionalErrors regional_errors(const ScalarField& gamma, const ScalarField& truth, const NodeMask& mask)
{
    const Mesh& mesh = gamma.mesh();
    ScalarField diff(gamma.mesh_ptr(), 0.0);
    for (Index i = 0; i < diff.size(); ++i) {
        diff[i] = gamma[i] - truth[i];
    }
    auto part = [&](int side) {
        std::vector<char> m = mask.inside;
        for (Index i = 0; i < mesh.node_count(); ++i) {
            const double x = mesh.node(i).x;
            const bool keep = side == 0 || (side < 0 ? x < 0.5 : x > 0.5);
            if (!keep) {
                m[static_cast<std::size_t>(i)] = 0;
            }
        }
        return l2_norm_masked(diff, m) / l2_norm_masked(truth, m);
    };
    return {part(0), part(-1), part(+1)};
}

// -- run -----------------------------------------------------------------------------------

namespace {

void write_traces(const std::vector<FluxTrace>& traces, const std::filesystem::path& path)
{
    const std::array<std::string_view, 3> h{"profile_id", "arclength_s", "flux_value"};
    io::CsvWriter w(path, h);
    for (std::size_t j = 0; j < traces.size(); ++j) {
        for (std::size_t k = 0; k < traces[j].size(); ++k) {
            w << static_cast<long long>(j) << traces[j].arclength[k] << traces[j].values[k];
            w.end_row();
        }
    }
}

MeasurementSet make_dataset(const ExperimentConfig& c, const MeshPtr& coarse)
{
    const auto profiles = make_profiles(c.inputs);
    const auto truth = make_phantom(c.phantom);
    if (c.inverse_crime) {
        MeasurementSet m = measure(ScalarField::from_function(coarse, truth), profiles);
        add_noise(m, c.noise_level, c.seed);
        return m;
    }
    MeasurementSet m
        = synthesize_dataset(truth, profiles, c.fine_n, c.coarse_n, c.noise_level, c.seed, c.geometry, c.transfer);
    m.model_error = estimate_model_error(make_initial_guess(c), profiles, c.fine_n, c.coarse_n, c.geometry,
                                         c.transfer, c.reconstruction.exclude_junctions);
    return m;
}

json run_invert(const ExperimentConfig& c, const std::filesystem::path& out)
{
    const MeshPtr mesh = build_unit_square(c.coarse_n, c.geometry);
    export_mesh_csv(*mesh, out);
    const MeasurementSet data = make_dataset(c, mesh);
    write_measurements(data, out / "measurements");

    const ScalarField truth = ScalarField::from_function(mesh, make_phantom(c.phantom));
    const ScalarField gamma0 = ScalarField::from_function(mesh, make_initial_guess(c));
    const ReconstructionResult res = run_reconstruction(data, c.reconstruction, gamma0, &truth);

    write_history_csv(res.history, out / "history.csv");
    io::write_field_csv(out / "gamma_final.csv", res.gamma.values(), "gamma");
    io::write_field_csv(out / "gamma_true.csv", truth.values(), "gamma");
    io::write_field_csv(out / "gamma_initial.csv", gamma0.values(), "gamma");
    const ScalarField c_final = recover_doping(res.gamma, c.scaled.lambda2, gamma0);
    const ScalarField c_true = recover_doping(truth, c.scaled.lambda2, gamma0);
    io::write_field_csv(out / "doping_final.csv", c_final.values(), "doping");
    io::write_field_csv(out / "doping_true.csv", c_true.values(), "doping");
    if (!res.snapshots.empty()) {
        io::ensure_directory(out / "snapshots");
        for (const auto& [cycle, g] : res.snapshots) {
            char name[64];
            std::snprintf(name, sizeof name, "gamma_cycle_%05d.csv", cycle);
            io::write_field_csv(out / "snapshots" / name, g.values(), "gamma");
        }
    }
    const NodeMask mask = interior_mask(*mesh, c.reconstruction.margin);
    const RegionalErrors reg = regional_errors(res.gamma, truth, mask);
    const RegionalErrors reg0 = regional_errors(gamma0, truth, mask);
    return {
        {"mode", "invert"},
        {"cycles", res.cycles},
        {"steps", res.history.size()},
        {"stop_reason", res.stop_reason},
        {"discrepancy_fired", res.discrepancy_fired},
        {"final_residual", res.final_residual},
        {"data_norm", data.exact_norm},
        {"noise_norm", data.noise_norm},
        {"model_error", data.model_error},
        {"initial_error", res.initial_error},
        {"final_error", res.final_error},
        {"regional_error", {{"left", reg.left}, {"right", reg.right}}},
        {"initial_regional_error", {{"left", reg0.left}, {"right", reg0.right}}},
        {"step_sizes", res.step_sizes},
        {"interior_nodes", mask.count()},
    };
}

json run_forward(const ExperimentConfig& c, const std::filesystem::path& out)
{
    const MeshPtr mesh = build_unit_square(c.coarse_n, c.geometry);
    export_mesh_csv(*mesh, out);
    const auto profiles = make_profiles(c.inputs);
    if (c.forward_model == "unipolar") {
        const MeasurementSet data = make_dataset(c, mesh);
        write_measurements(data, out / "measurements");
        write_traces(data.traces, out / "traces.csv");
        io::write_field_csv(out / "gamma_true.csv",
                            ScalarField::from_function(mesh, make_phantom(c.phantom)).values(), "gamma");
        json norms = json::array();
        for (const auto& t : data.traces) norms.push_back(trace_norm(t));
        return {{"mode", "forward"}, {"model", "unipolar"}, {"data_norm", data.exact_norm},
                {"noise_norm", data.noise_norm}, {"trace_norms", norms}};
    }

    const DopingProfile doping = DopingProfile::from_field(ScalarField::from_function(mesh, make_doping(c.doping)));
    const EquilibriumResult eq = solve_equilibrium(doping, c.scaled.lambda2, Polarity::Bipolar);
    const RecombinationModel model = RecombinationModel::from_physical(
        parse_recombination_kind(c.recombination), c.physical, parse_srh_variant(c.srh_variant));
    const ScalarField q0 = q0_field(eq.V, model, c.scaled.delta2);
    io::write_field_csv(out / "V0.csv", eq.V.values(), "V0");
    io::write_field_csv(out / "doping.csv", doping.C.values(), "doping");
    io::write_field_csv(out / "Q0.csv", q0.values(), "Q0");

    if (c.forward_model == "bipolar") {
        std::vector<FluxTrace> vc;
        std::vector<FluxTrace> cap;
        json norms = json::array();
        for (const auto& p : profiles) {
            const BipolarSolution b = bipolar_vc_derivative(eq.V, p, q0, c.scaled.mu_n, c.scaled.mu_p);
            cap.push_back(capacitance_measurement(eq.V, b.u_hat, b.v_hat, p, c.scaled.lambda2));
            norms.push_back({{"vc", trace_norm(b.output)}, {"capacitance", trace_norm(cap.back())}});
            vc.push_back(b.output);
        }
        write_traces(vc, out / "traces_vc.csv");
        write_traces(cap, out / "traces_capacitance.csv");
        return {{"mode", "forward"}, {"model", "bipolar"}, {"newton_iterations", eq.iterations}, {"trace_norms", norms}};
    }

    const LbicSolution l = lbic_image_2d(eq.V, q0, c.scaled.mu_n, c.scaled.mu_p);
    io::write_field_csv(out / "lbic_image.csv", l.image.values(), "i");
    io::write_field_csv(out / "u_tilde.csv", l.u_tilde.values(), "u");
    io::write_field_csv(out / "v_tilde.csv", l.v_tilde.values(), "v");
    return {{"mode", "forward"},
            {"model", "lbic"},
            {"newton_iterations", eq.iterations},
            {"image_min", l.image.min()},
            {"image_max", l.image.max()}};
}

json run_equilibrium(const ExperimentConfig& c, const std::filesystem::path& out)
{
    const MeshPtr mesh = build_unit_square(c.coarse_n, c.geometry);
    export_mesh_csv(*mesh, out);
    const Polarity pol = parse_polarity(c.polarity);
    const DopingProfile doping = DopingProfile::from_field(ScalarField::from_function(mesh, make_doping(c.doping)));
    const EquilibriumResult eq = solve_equilibrium(doping, c.scaled.lambda2, pol);
    io::write_field_csv(out / "V0.csv", eq.V.values(), "V0");
    io::write_field_csv(out / "doping.csv", doping.C.values(), "doping");
    {
        const std::array<std::string_view, 2> h{"iteration", "residual"};
        io::CsvWriter w(out / "newton.csv", h);
        for (std::size_t k = 0; k < eq.residual_history.size(); ++k) {
            w << static_cast<long long>(k) << eq.residual_history[k];
            w.end_row();
        }
    }
    json s = {{"mode", "equilibrium"},
              {"polarity", c.polarity},
              {"iterations", eq.iterations},
              {"final_residual", eq.residual_history.back()},
              {"V_min", eq.V.min()},
              {"V_max", eq.V.max()}};
    if (pol == Polarity::Bipolar) {
        const PotentialBounds b = equilibrium_bounds(doping, balanced_dirichlet(doping.C, pol));
        s["bounds"] = {{"lower", b.lower}, {"upper", b.upper}};
    } else {
        std::vector<double> g(eq.V.values().begin(), eq.V.values().end());
        for (double& x : g) x = std::exp(x);
        const ScalarField gamma(mesh, std::move(g));
        const ScalarField rec = recover_doping(gamma, c.scaled.lambda2, doping.C);
        io::write_field_csv(out / "doping_recovered.csv", rec.values(), "doping");
        ScalarField diff(mesh, 0.0);
        for (Index i = 0; i < diff.size(); ++i) diff[i] = rec[i] - doping.C[i];
        s["doping_recovery_l2_error"] = l2_norm(diff);
    }
    return s;
}

json run_lbic1d(const ExperimentConfig& c, const std::filesystem::path& out)
{
    io::ensure_directory(out);
    const auto& l = c.lbic1d;
    const lbic1d::Constants k{l.q0, l.mu_n, l.mu_p};
    std::vector<double> x;
    std::vector<double> i;
    std::vector<double> v_true;
    if (l.data_file.empty()) {
        x = lbic1d::uniform_grid(l.M);
        for (double xi : x) {
            v_true.push_back(l.offset + l.slope * xi + l.amplitude * std::sin(std::numbers::pi * xi));
        }
        i = lbic1d::solve_1d_forward(x, v_true, k).i;
    } else {
        const io::CsvTable t = io::read_csv(l.data_file);
        x = t.numeric_column("x");
        i = t.numeric_column("i");
    }
    const lbic1d::Problem prob(x, i, k, l.offset);
    {
        const std::array<std::string_view, 3> h{"x", "i", "V_true"};
        io::CsvWriter w(out / "lbic1d_data.csv", h);
        for (std::size_t q = 0; q < x.size(); ++q) {
            w << x[q] << i[q] << (v_true.empty() ? std::nan("") : v_true[q]);
            w.end_row();
        }
    }
    const lbic1d::AttainabilityResult fit = lbic1d::fit_constants(prob, l.c1_init, l.c2_init);
    json s = {{"mode", "lbic1d"},
              {"c1", fit.c1},
              {"c2", fit.c2},
              {"J1", fit.J1},
              {"J2", fit.J2},
              {"attainable", fit.attainable},
              {"iterations", fit.iterations},
              {"diagnostics", fit.diagnostics}};
    if (!fit.attainable) {
        throw NumericalError("lbic1d fit failed: " + fit.diagnostics);
    }
    lbic1d::write_result(fit, prob, out);
    const auto v = lbic1d::reconstruct_potential(fit);
    if (!v_true.empty()) {
        double err = 0.0;
        for (std::size_t q = 0; q < v.size(); ++q) err = std::max(err, std::abs(v[q] - v_true[q]));
        s["max_potential_error"] = err;
    }
    s["sufficiency_mismatch"] = lbic1d::sufficiency_check(fit.c1, fit.c2, fit.Y, prob).max_mismatch;
    if (!l.family_c1.empty()) {
        const std::array<std::string_view, 5> h{"member", "c1", "c2", "x", "V"};
        io::CsvWriter w(out / "family.csv", h);
        json fam = json::array();
        for (std::size_t m = 0; m < l.family_c1.size(); ++m) {
            try {
                const auto f = lbic1d::nonuniqueness_family(prob, l.family_c1[m]);
                const auto fi = lbic1d::solve_1d_forward(x, f.V, k).i;
                double werr = 0.0;
                for (std::size_t q = 0; q < fi.size(); ++q) werr = std::max(werr, std::abs(fi[q] - i[q]));
                for (std::size_t q = 0; q < x.size(); ++q) {
                    w << static_cast<long long>(m) << f.c1 << f.c2 << x[q] << f.V[q];
                    w.end_row();
                }
                fam.push_back({{"c1", f.c1}, {"c2", f.c2}, {"accepted", true}, {"image_error", werr}});
            } catch (const std::exception& e) {
                fam.push_back({{"c1", l.family_c1[m]}, {"accepted", false}, {"reason", e.what()}});
            }
        }
        s["family"] = fam;
    }
    return s;
}

} // namespace

json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir)
{
    io::ensure_directory(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    json summary;
    if (config.mode == "invert") {
        summary = run_invert(config, out_dir);
    } else if (config.mode == "forward") {
        summary = run_forward(config, out_dir);
    } else if (config.mode == "equilibrium") {
        summary = run_equilibrium(config, out_dir);
    } else {
        summary = run_lbic1d(config, out_dir);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(summary, out_dir / "summary.json");
    const json manifest = {
        {"tool", "dopinv"},   {"version", kVersion},  {"mode", config.mode},
        {"seed", config.seed}, {"wall_time_s", wall}, {"config", to_json(config)},
    };
    write_json(manifest, out_dir / "manifest.json");
    return summary;
}

// -- compare -------------------------------------------------------------------------------

json compare_runs(const std::filesystem::path& a, const std::filesystem::path& b, const std::filesystem::path& out_dir)
{
    const json ma = read_json(a / "manifest.json");
    const json mb = read_json(b / "manifest.json");
    const ExperimentConfig ca = parse_config(ma.at("config"));
    const ExperimentConfig cb = parse_config(mb.at("config"));
    if (ca.mode != "invert" || cb.mode != "invert") {
        throw InvalidArgument("incompatible runs: compare needs two invert runs");
    }
    if (ca.coarse_n != cb.coarse_n || to_json(ca.geometry) != to_json(cb.geometry)) {
        throw InvalidArgument("incompatible runs: inversion meshes differ");
    }
    if (to_json(ca).at("phantom") != to_json(cb).at("phantom")) {
        throw InvalidArgument("incompatible runs: phantoms differ");
    }
    if (ca.reconstruction.margin != cb.reconstruction.margin) {
        throw InvalidArgument("incompatible runs: interior margins differ");
    }
    const MeshPtr mesh = build_unit_square(ca.coarse_n, ca.geometry);
    auto load = [&](const std::filesystem::path& p) {
        auto v = io::read_field_csv(p, "gamma");
        if (static_cast<Index>(v.size()) != mesh->node_count()) {
            throw InvalidArgument("incompatible runs: " + p.string() + " has the wrong node count");
        }
        return ScalarField(mesh, std::move(v));
    };
    const ScalarField truth = load(a / "gamma_true.csv");
    const ScalarField truth_b = load(b / "gamma_true.csv");
    if (truth.data() != truth_b.data()) {
        throw InvalidArgument("incompatible runs: reference coefficients differ");
    }
    const ScalarField ga = load(a / "gamma_final.csv");
    const ScalarField gb = load(b / "gamma_final.csv");
    const NodeMask mask = interior_mask(*mesh, ca.reconstruction.margin);

    auto describe = [&](const ScalarField& g, const ExperimentConfig& c) {
        const RegionalErrors r = regional_errors(g, truth, mask);
        double mean = 0.0;
        const auto profiles = make_profiles(c.inputs);
        for (const auto& p : profiles) mean += p.center;
        mean /= static_cast<double>(profiles.size());
        json d = {{"total", r.total}, {"left", r.left}, {"right", r.right}, {"source_mean_x", mean}};
        if (mean != 0.5) {
            const bool right = mean > 0.5;
            d["near_side"] = right ? "right" : "left";
            d["near_error"] = right ? r.right : r.left;
            d["far_error"] = right ? r.left : r.right;
        } else {
            d["near_side"] = "none";
        }
        return d;
    };

    ScalarField diff(mesh, 0.0);
    for (Index i = 0; i < diff.size(); ++i) diff[i] = ga[i] - gb[i];
    const double dnorm = l2_norm_masked(diff, mask.inside);
    json report = {{"run_a", describe(ga, ca)},
                   {"run_b", describe(gb, cb)},
                   {"difference_l2", dnorm},
                   {"identical", ga.data() == gb.data()}};
    if (!out_dir.empty()) {
        io::ensure_directory(out_dir);
        const std::array<std::string_view, 6> h{"id", "x", "y", "error_a", "error_b", "difference"};
        io::CsvWriter w(out_dir / "compare_errors.csv", h);
        for (Index i = 0; i < mesh->node_count(); ++i) {
            w << static_cast<long long>(i) << mesh->node(i).x << mesh->node(i).y << ga[i] - truth[i]
              << gb[i] - truth[i] << diff[i];
            w.end_row();
        }
        write_json(report, out_dir / "compare.json");
    }
    return report;
}

} // namespace dopinv
