#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sve/kernel.hpp"
#include "sve/model.hpp"
#include "sve/solver.hpp"

namespace sve {

/// Experiment description as read from the JSON config file. The grammar is
/// documented in the README; parse -> serialize -> parse is the identity.
struct ExperimentConfig {
    struct Model {
        std::string name = "pure_noise"; // pure_noise | mean_field_ou | scalar_interaction
        double theta = 1.0;              // mean_field_ou
        double sigma0 = 1.0;             // pure_noise / mean_field_ou
        double beta = -0.5;              // scalar_interaction
        double vol_a = 1.0;              // scalar_interaction
        double vol_b = 0.0;              // scalar_interaction
        double vol_trunc = 10.0;         // scalar_interaction
        std::size_t dim = 1;
    
        bool operator==(const Model&) const = default;
    };

    struct Kernel {
        std::string type = "constant"; // constant | fractional | gamma | exp_sum |
                                       // lipschitz_convolution | tabulated
        double c = 1.0;                // constant
        double scale = 1.0;            // fractional
        double alpha = 0.25;           // fractional / gamma
        double beta = 1.0;             // gamma
        std::vector<std::pair<double, double>> terms; // exp_sum
        std::vector<double> values;                   // convolution table
        double lipschitz_bound = 0.0;
        std::size_t s_points = 0, t_points = 0;       // tabulated
        std::vector<double> table;                    // tabulated values
    
        bool operator==(const Kernel&) const = default;
    };

    struct Initial {
        std::string type = "point"; // point | gaussian | empirical
        std::vector<double> point{0.0};
        std::vector<double> mean{0.0};
        std::vector<double> cov{1.0}; // d x d row-major (scalar accepted for d = 1)
        std::string file;             // empirical atoms, one row per atom
    
        bool operator==(const Initial&) const = default;
    };

    struct Certify {
        std::vector<double> epsilon_grid{1.0};
        std::vector<double> gamma_grid{0.5, 1.0 / 3.0, 0.25, 1.0 / 12.0};
        double blowup_threshold = 10.0;
    
        bool operator==(const Certify&) const = default;
    };

    struct Diagnostics {
        bool moments = false;
        std::vector<double> q_list{2.0, 4.0};
        bool increments = false;
        double p = 2.0;
        std::vector<std::size_t> lags; // grid-index lags; default built from M
        bool holder = false;
        bool martingale = false;
        std::size_t martingale_functions = 6;
        double z_threshold = 3.0;
        std::vector<std::size_t> mesh_ladder{25, 50, 100, 200};
        std::vector<std::size_t> particle_ladder{1000, 4000};
        std::size_t mesh_particles = 2000;
        std::size_t particle_mesh_steps = 100;
    
        bool operator==(const Diagnostics&) const = default;
    };

    struct Output {
        std::string directory = "out";
        std::vector<std::string> formats{"csv"}; // csv | bin
        bool plot_data = false;
    
        bool operator==(const Output&) const = default;
    };

    Model model;
    Kernel kernel_b;
    Kernel kernel_sigma;
    double horizon = 1.0;
    std::optional<std::size_t> uniform_steps = 100;
    std::vector<double> explicit_times; // used when uniform_steps is absent
    std::size_t particles = 1000;
    std::uint64_t seed = 1;
    std::string mode = "integrated_kernel";
    double eta = 2.0;
    Initial initial;
    Certify certify;
    Diagnostics diagnostics;
    Output output;

    bool operator==(const ExperimentConfig&) const = default;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& config);

/// Instantiate the run-time objects a config names.
CoefficientModel make_model(const ExperimentConfig& config);
KernelSpec make_kernel(const ExperimentConfig::Kernel& kernel, double horizon);
Partition make_partition(const ExperimentConfig& config);
InitialCondition make_initial(const ExperimentConfig& config);

} // namespace sve
