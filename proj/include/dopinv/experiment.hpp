#pragma once

#include "dopinv/device.hpp"
#include "dopinv/forward.hpp"
#include "dopinv/inversion.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dopinv {

/// Smooth compactly supported bump: background + amplitude (1 - r^2/R^2)^3
/// for r < R. kind "constant" ignores the bump terms. The default is broad
/// enough that the uniform two-mesh protocol resolves it above the
/// forward-model gap; a narrow bump sits below that gap.
struct PhantomSpec {
    std::string kind = "bump";
    double background = 1.0;
    double amplitude = 3.0;
    double center_x = 0.5;
    double center_y = 0.5;
    double radius = 0.6;
};

std::function<double(const Point&)> make_phantom(const PhantomSpec& spec);

/// Either count equispaced hats or explicit centers sharing one half width.
struct InputSpec {
    int count = 9;
    std::vector<double> centers;
    double half_width = 0.0; // 0 selects 1/(count+1)
    double amplitude = 1.0;
};

std::vector<InputProfile> make_profiles(const InputSpec& spec);

struct ExperimentConfig;
/// Initial coefficient of an invert run as a function on the square.
std::function<double(const Point&)> make_initial_guess(const ExperimentConfig& config);

/// Scaled doping profile: "constant" (background), "gaussian" (background +
/// amplitude exp(-r^2/width^2)) or "junction" (amplitude tanh((y - depth)/width)
/// + background).
struct DopingSpec {
    std::string kind = "gaussian";
    double background = 1.0;
    double amplitude = 1.0;
    double center_x = 0.5;
    double center_y = 0.5;
    double width = 0.2;
    double depth = 0.5;
};

std::function<double(const Point&)> make_doping(const DopingSpec& spec);

struct Lbic1dSpec {
    int M = 256;
    /// V0(x) = offset + slope x + amplitude sin(pi x) when no data file is given.
    double offset = 0.0;
    double slope = 0.5;
    double amplitude = 0.2;
    std::string data_file;
    double q0 = 1.0;
    double mu_n = 1.0;
    double mu_p = 0.3;
    double c1_init = -1.0;
    double c2_init = -1.0;
    std::vector<double> family_c1;
};

struct ExperimentConfig {
    std::string mode = "invert";
    GeometryConfig geometry;
    int fine_n = 88;
    int coarse_n = 44;
    bool inverse_crime = false;
    TraceTransfer transfer = TraceTransfer::Restriction;
    PhantomSpec phantom;
    InputSpec inputs;
    double noise_level = 0.0;
    std::uint64_t seed = 0;
    ReconstructionConfig reconstruction;
    /// gamma0 equals initial_guess on the iterated interior; in the boundary
    /// strip it is the true coefficient ("truth", the coefficient is assumed
    /// known there) or initial_guess as well ("constant").
    double initial_guess = 1.0;
    std::string initial_strip = "truth";
    PhysicalParameters physical;
    ScaledParameters scaled;
    std::string polarity = "bipolar";
    std::string recombination = "srh";
    std::string srh_variant = "standard";
    DopingSpec doping;
    std::string forward_model = "unipolar";
    Lbic1dSpec lbic1d;
    std::string output_dir = "out";
};

/// Parses and validates; omitted fields take defaults (scaled parameters
/// default to the scaling of the physical ones).
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved configuration.
nlohmann::json to_json(const ExperimentConfig& c);

/// Executes the configured pipeline, writing manifest.json, summary.json and
/// the mode's CSV files into out_dir. Returns the summary.
nlohmann::json run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct RegionalErrors {
    double total = 0.0;
    double left = 0.0;  // x < 1/2
    double right = 0.0; // x > 1/2
};

/// Relative L2 errors over the mask and over its two halves.
RegionalErrors regional_errors(const ScalarField& gamma, const ScalarField& truth, const NodeMask& mask);

/// Compares two invert runs sharing mesh and phantom. Writes per-node error
/// fields to out_dir when non-empty.
nlohmann::json compare_runs(const std::filesystem::path& a, const std::filesystem::path& b,
                            const std::filesystem::path& out_dir = {});

} // namespace dopinv
