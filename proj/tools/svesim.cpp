#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "sve/config.hpp"
#include "sve/diagnostics.hpp"
#include "sve/ensemble_io.hpp"
#include "sve/errors.hpp"
#include "sve/numeric.hpp"
#include "sve/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sve;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerdict = 2;
constexpr int kExitBlowup = 3;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    bool force = false;
    unsigned threads = 0;
    std::string format_override;
    std::int64_t seed_override = -1;
};

unsigned effective_threads(unsigned requested) {
    if (requested > 0) return requested;
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : std::min(hw, 8u);
}

ExperimentConfig load_and_override(const CommonArgs& args) {
    ExperimentConfig cfg = load_config(args.config_path);
    if (!args.out_dir.empty()) cfg.output.directory = args.out_dir;
    if (args.seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed_override);
    if (!args.format_override.empty()) cfg.output.formats = {args.format_override};
    return cfg;
}

fs::path ensure_out_dir(const ExperimentConfig& cfg) {
    fs::path dir(cfg.output.directory);
    fs::create_directories(dir);
    return dir;
}

int run_certify(const CommonArgs& args) {
    const ExperimentConfig cfg = load_and_override(args);
    const fs::path dir = ensure_out_dir(cfg);
    const KernelSpec kb = make_kernel(cfg.kernel_b, cfg.horizon);
    const KernelSpec ks = make_kernel(cfg.kernel_sigma, cfg.horizon);

    QuadratureConfig qcfg;
    CertifyOptions opts;
    opts.blowup_threshold = cfg.certify.blowup_threshold;
    opts.threads = effective_threads(args.threads);
    const auto pairs = default_pair_grid(cfg.horizon);
    const auto [cert_b, cert_s] = certify(kb, ks, cfg.eta, cfg.certify.epsilon_grid,
                                          cfg.certify.gamma_grid, pairs, qcfg, opts);

    write_certificate(cert_b, (dir / "kernel_b.cert.json").string());
    write_certificate(cert_s, (dir / "kernel_sigma.cert.json").string());

    for (const auto* cert : {&cert_b, &cert_s}) {
        std::cout << (cert->role == KernelRole::drift ? "drift    " : "diffusion")
                  << "  " << cert->kernel_description << "  -> ";
        if (cert->certified())
            std::cout << "certified (gamma=" << cert->gamma << ", epsilon=" << cert->epsilon
                      << ", L=" << cert->L << ", p_min=" << cert->p_min << ")\n";
        else
            std::cout << "rejected: " << cert->rejection_reason << "\n";
    }
    return cert_b.certified() && cert_s.certified() ? kExitOk : kExitVerdict;
}

std::string certificates_hash(const fs::path& dir) {
    const fs::path b = dir / "kernel_b.cert.json";
    const fs::path s = dir / "kernel_sigma.cert.json";
    if (!fs::exists(b) || !fs::exists(s)) return "";
    return file_content_hash(b.string()) + ":" + file_content_hash(s.string());
}

bool certificates_ok(const fs::path& dir) {
    const fs::path b = dir / "kernel_b.cert.json";
    const fs::path s = dir / "kernel_sigma.cert.json";
    if (!fs::exists(b) || !fs::exists(s)) return false;
    return read_certificate(b.string()).certified() &&
           read_certificate(s.string()).certified();
}

int run_simulate(const CommonArgs& args) {
    const ExperimentConfig cfg = load_and_override(args);
    const fs::path dir = ensure_out_dir(cfg);

    if (!args.force && !certificates_ok(dir)) {
        std::cerr << "simulate: no valid certificates in " << dir
                  << " (run `svesim certify` first or pass --force)\n";
        return kExitUsage;
    }

    const CoefficientModel model = make_model(cfg);
    const KernelSpec kb = make_kernel(cfg.kernel_b, cfg.horizon);
    const KernelSpec ks = make_kernel(cfg.kernel_sigma, cfg.horizon);
    const Partition part = make_partition(cfg);
    const InitialCondition init = make_initial(cfg);

    SimulateOptions opts;
    opts.threads = effective_threads(args.threads);
    const ParticleEnsemble ens = simulate(model, kb, ks, part, cfg.particles, cfg.seed,
                                          sim_mode_from_string(cfg.mode), init, opts);

    EnsembleMetadata meta;
    meta.seed = ens.seed;
    meta.mode = to_string(ens.mode);
    meta.model_label = ens.model_label;
    meta.kernel_b = ens.kernel_b_description;
    meta.kernel_sigma = ens.kernel_sigma_description;
    meta.particles = ens.particles;
    meta.dim_state = ens.dim_state;
    meta.dim_noise = ens.dim_noise;
    meta.times = ens.partition.times();
    meta.certificate_hash = certificates_hash(dir);
    meta.config_echo = serialize_config(cfg);

    for (const auto& fmt : cfg.output.formats) {
        if (fmt == "csv") write_ensemble_csv(ens, (dir / "ensemble.csv").string());
        if (fmt == "bin")
            write_ensemble_binary(ens, (dir / "ensemble.bin").string(),
                                  (dir / "ensemble.desc.json").string());
    }
    write_metadata(meta, (dir / "ensemble.meta.json").string());
    std::cout << "simulated " << ens.particles << " particles, " << part.steps()
              << " steps -> " << dir << "\n";
    return kExitOk;
}

std::vector<std::size_t> default_lags(std::size_t steps) {
    // dyadic lags 1 .. 2^k with 2^k <= min(steps - 1, 128); spans >= 1.5
    // decades once steps >= 33
    std::vector<std::size_t> lags{1};
    while (lags.back() * 2 <= std::min<std::size_t>(steps - 1, 128))
        lags.push_back(lags.back() * 2);
    return lags;
}

int run_diagnose(const CommonArgs& args, const std::string& ensemble_path) {
    const ExperimentConfig cfg = load_and_override(args);
    const fs::path dir = ensure_out_dir(cfg);

    fs::path epath = ensemble_path.empty() ? dir / "ensemble.csv" : fs::path(ensemble_path);
    if (!fs::exists(epath)) {
        std::cerr << "diagnose: ensemble file not found: " << epath << "\n";
        return kExitUsage;
    }
    fs::path mpath = epath;
    mpath.replace_extension("");
    mpath += ".meta.json";
    if (!fs::exists(mpath)) mpath = epath.parent_path() / "ensemble.meta.json";

    const ParticleEnsemble ens = read_ensemble(epath.string(), mpath.string());
    const CoefficientModel model = make_model(cfg);
    const unsigned threads = effective_threads(args.threads);

    std::optional<KernelCertificate> sigma_cert;
    const fs::path cert_path = dir / "kernel_sigma.cert.json";
    if (fs::exists(cert_path)) {
        KernelCertificate c = read_certificate(cert_path.string());
        if (c.certified()) sigma_cert = c;
    }

    json report;
    report["tool_version"] = kToolVersion;
    std::ostringstream text;
    bool all_pass = true;

    const auto& diag = cfg.diagnostics;
    if (sigma_cert && sigma_cert->p_min > 0.0) {
        for (double q : diag.q_list)
            if (q > sigma_cert->p_min)
                throw ConfigError("diagnose: q_list exceeds the certified p_min = " +
                                  std::to_string(sigma_cert->p_min));
        if (diag.p > sigma_cert->p_min)
            throw ConfigError("diagnose: increment order p exceeds the certified p_min");
    }
    if (diag.moments) {
        const MomentTable table = moment_report(ens, diag.q_list);
        bool finite = true;
        for (double v : table.estimate)
            if (!std::isfinite(v)) finite = false;
        json jm;
        jm["q_list"] = table.q_list;
        json rows = json::array();
        for (std::size_t ti = 0; ti < table.times.size(); ++ti) {
            json row;
            row["t"] = table.times[ti];
            row["estimate"] = std::vector<double>(
                table.estimate.begin() + ti * table.q_list.size(),
                table.estimate.begin() + (ti + 1) * table.q_list.size());
            row["std_error"] = std::vector<double>(
                table.std_error.begin() + ti * table.q_list.size(),
                table.std_error.begin() + (ti + 1) * table.q_list.size());
            rows.push_back(row);
        }
        jm["rows"] = rows;
        jm["verdict"] = finite ? "pass" : "fail";
        jm["criterion"] = "all moment estimates finite";
        report["moments"] = jm;
        all_pass = all_pass && finite;
        text << "moments: " << (finite ? "pass" : "FAIL") << "\n";
        for (std::size_t qi = 0; qi < table.q_list.size(); ++qi)
            text << "  sup_t E|X_t|^" << table.q_list[qi] << " = " << table.sup_over_time(qi)
                 << " (se " << table.se_at_sup(qi) << ")\n";

        if (cfg.output.plot_data) {
            std::ostringstream dat;
            for (std::size_t ti = 0; ti < table.times.size(); ++ti)
                dat << format_double(table.times[ti]) << " "
                    << format_double(table.at(ti, 0)) << "\n";
            write_text_file((dir / "moments_t.dat").string(), dat.str());
        }
    }

    if (diag.increments) {
        const auto lags = diag.lags.empty() ? default_lags(ens.partition.steps()) : diag.lags;
        const IncrementFit fit = increment_scaling(ens, diag.p, lags);
        bool pass = true;
        double threshold = -1.0;
        if (!fit.degenerate && sigma_cert) {
            threshold = sigma_cert->gamma * diag.p - 0.1;
            pass = fit.slope >= threshold;
        }
        json ji;
        ji["p"] = fit.p;
        ji["slope"] = fit.slope;
        ji["intercept"] = fit.intercept;
        ji["r_squared"] = fit.r_squared;
        ji["degenerate"] = fit.degenerate;
        ji["lag_times"] = fit.lag_times;
        ji["mean_abs_power"] = fit.mean_abs_power;
        ji["slope_threshold"] = threshold;
        ji["criterion"] = "slope >= gamma*p - 0.1 (certificate gamma)";
        ji["verdict"] = pass ? "pass" : "fail";
        // the same statistic on the accumulator paths, reported as
        // observations only (no verdict)
        if (ens.has_accumulators()) {
            const IncrementFit fa = increment_scaling_on(ens.drift_path, ens.partition,
                                                         ens.particles, ens.dim_state, diag.p,
                                                         lags);
            const IncrementFit fm = increment_scaling_on(ens.mart_path, ens.partition,
                                                         ens.particles, ens.dim_state, diag.p,
                                                         lags);
            ji["drift_path_slope"] = fa.degenerate ? json() : json(fa.slope);
            ji["martingale_path_slope"] = fm.degenerate ? json() : json(fm.slope);
        }
        report["increments"] = ji;
        all_pass = all_pass && pass;
        text << "increments: " << (pass ? "pass" : "FAIL") << " slope=" << fit.slope
             << (fit.degenerate ? " (degenerate)" : "") << "\n";

        if (cfg.output.plot_data && !fit.degenerate) {
            std::ostringstream dat;
            for (std::size_t i = 0; i < fit.lag_times.size(); ++i)
                if (fit.mean_abs_power[i] > 0.0)
                    dat << format_double(std::log(fit.lag_times[i])) << " "
                        << format_double(std::log(fit.mean_abs_power[i])) << "\n";
            write_text_file((dir / "increments_loglog.dat").string(), dat.str());
        }
    }

    if (diag.holder) {
        const HolderEstimate est = holder_estimate(ens);
        bool pass = true;
        double threshold = -1.0;
        if (sigma_cert && sigma_cert->p_min > 0.0) {
            threshold = (sigma_cert->gamma * sigma_cert->p_min - 1.0) / sigma_cert->p_min - 0.1;
            pass = est.exponent >= threshold;
        }
        json jh;
        jh["exponent"] = est.exponent;
        jh["method"] = est.method;
        jh["scales"] = est.scales;
        jh["degenerate_paths"] = est.degenerate_paths;
        jh["threshold"] = threshold;
        jh["criterion"] = "exponent >= (gamma*p_min - 1)/p_min - 0.1";
        jh["verdict"] = pass ? "pass" : "fail";
        report["holder"] = jh;
        all_pass = all_pass && pass;
        text << "holder: " << (pass ? "pass" : "FAIL") << " exponent=" << est.exponent << "\n";
    }

    if (diag.martingale) {
        // Scale the test-function family to where the accumulator paths live.
        std::vector<double> center(ens.dim_state, 0.0);
        double spread = 0.0;
        {
            const std::size_t M = ens.partition.steps();
            std::vector<double> z(ens.particles);
            for (std::size_t k = 0; k < ens.dim_state; ++k) {
                for (std::size_t n = 0; n < ens.particles; ++n)
                    z[n] = ens.a(n, M, k) + ens.mart(n, M, k);
                const SampleStats st = sample_stats(z);
                center[k] = st.mean;
                spread = std::max(spread, st.sd);
            }
            if (spread <= 0.0) spread = 1.0;
        }
        const auto functions = default_test_functions(ens.dim_state,
                                                      diag.martingale_functions, center, spread);
        const auto pairs = default_time_pairs(ens.partition.steps());
        const MartingaleReport mart = martingale_defect(ens, model, functions, pairs,
                                                        diag.z_threshold, threads);
        json jm;
        jm["z_threshold"] = mart.z_threshold;
        jm["max_abs_z"] = mart.max_abs_z;
        json stats = json::array();
        for (const auto& s : mart.stats)
            stats.push_back({{"function", s.function_id},
                             {"s_index", s.s_index},
                             {"t_index", s.t_index},
                             {"weight", s.weight},
                             {"statistic", s.statistic},
                             {"std_error", s.std_error},
                             {"z", s.z}});
        jm["stats"] = stats;
        jm["criterion"] = "all |z| <= threshold";
        jm["verdict"] = mart.pass ? "pass" : "fail";
        report["martingale"] = jm;
        all_pass = all_pass && mart.pass;
        text << "martingale: " << (mart.pass ? "pass" : "FAIL")
             << " max|z|=" << mart.max_abs_z << " over " << mart.stats.size() << " statistics\n";
    }

    report["all_pass"] = all_pass;
    write_text_file((dir / "report.json").string(), report.dump(2) + "\n");
    write_text_file((dir / "report.txt").string(), text.str());
    if (cfg.output.plot_data) {
        std::ostringstream gp;
        gp << "set terminal pngcairo\n";
        gp << "set output 'increments_loglog.png'\n";
        gp << "plot 'increments_loglog.dat' using 1:2 with points title 'log E|dX|^p'\n";
        gp << "set output 'moments_t.png'\n";
        gp << "plot 'moments_t.dat' using 1:2 with lines title 'E|X_t|^q'\n";
        write_text_file((dir / "plots.gp").string(), gp.str());
    }
    std::cout << text.str();
    return all_pass ? kExitOk : kExitVerdict;
}

int run_convergence(const CommonArgs& args) {
    const ExperimentConfig cfg = load_and_override(args);
    const fs::path dir = ensure_out_dir(cfg);
    const CoefficientModel model = make_model(cfg);
    const KernelSpec kb = make_kernel(cfg.kernel_b, cfg.horizon);
    const KernelSpec ks = make_kernel(cfg.kernel_sigma, cfg.horizon);
    const InitialCondition init = make_initial(cfg);
    const auto& diag = cfg.diagnostics;

    RefinementStudyConfig rcfg;
    rcfg.mesh_steps = diag.mesh_ladder;
    rcfg.particle_counts = diag.particle_ladder;
    rcfg.mesh_particles = diag.mesh_particles;
    rcfg.particle_mesh_steps = diag.particle_mesh_steps;
    rcfg.eta = cfg.eta;
    rcfg.threads = effective_threads(args.threads);

    const SimMode mode = sim_mode_from_string(cfg.mode);
    const RefinementReport ref =
        refinement_study(model, kb, ks, cfg.horizon, init, cfg.seed, mode, rcfg);

    // Frozen-coefficient integral study and moment boundedness on the same
    // nested-mesh coupling.
    std::vector<ParticleEnsemble> ladder;
    const std::size_t fine = rcfg.mesh_steps.back();
    for (const std::size_t steps : rcfg.mesh_steps) {
        const Partition part = Partition::uniform(cfg.horizon, steps);
        const auto dw = nested_increments(cfg.seed, rcfg.mesh_particles, fine, steps,
                                          model.dim_noise(), cfg.horizon);
        SimulateOptions sopts;
        sopts.threads = rcfg.threads;
        sopts.increments = &dw;
        ladder.push_back(
            simulate(model, kb, ks, part, rcfg.mesh_particles, cfg.seed, mode, init, sopts));
    }
    std::vector<const ParticleEnsemble*> ladder_ptrs;
    for (const auto& e : ladder) ladder_ptrs.push_back(&e);
    const FrozenIntegralReport frozen = frozen_integral_convergence(
        ladder_ptrs, kb, [](double, std::span<const double> x, const EmpiricalMeasure&) {
            return x[0];
        },
        QuadratureConfig{}, rcfg.threads);

    const MomentTable coarse_moments = moment_report(ladder.front(), diag.q_list);
    const MomentTable fine_moments = moment_report(ladder.back(), diag.q_list);
    const MomentComparison moments = compare_moment_tables(coarse_moments, fine_moments);

    const bool pass = ref.pass && frozen.decreasing && moments.pass;

    json j;
    j["tool_version"] = kToolVersion;
    json mesh = json::array();
    for (const auto& d : ref.mesh_distances)
        mesh.push_back({{"from", d.from}, {"to", d.to}, {"W", d.distance},
                        {"approximate", d.approximate}});
    json particle = json::array();
    for (const auto& d : ref.particle_distances)
        particle.push_back({{"from", d.from}, {"to", d.to}, {"W", d.distance},
                            {"approximate", d.approximate}});
    j["mesh_ladder"] = {{"distances", mesh}, {"strictly_decreasing", ref.mesh_decreasing}};
    j["particle_ladder"] = {{"distances", particle},
                            {"decreasing", ref.particle_decreasing}};
    json fr = json::array();
    for (std::size_t i = 0; i < frozen.level.size(); ++i)
        fr.push_back({{"level", frozen.level[i]}, {"sup_diff", frozen.sup_difference[i]}});
    j["frozen_integrals"] = {{"levels", fr}, {"decreasing", frozen.decreasing}};
    j["moment_boundedness"] = {{"q_list", moments.q_list},
                               {"difference", moments.difference},
                               {"combined_se", moments.combined_se},
                               {"z_threshold", moments.z_threshold},
                               {"verdict", moments.pass ? "pass" : "fail"}};
    j["all_pass"] = pass;
    write_text_file((dir / "convergence.json").string(), j.dump(2) + "\n");

    std::ostringstream text;
    text << "mesh ladder:     " << (ref.mesh_decreasing ? "pass" : "FAIL");
    for (const auto& d : ref.mesh_distances) text << "  " << d.distance;
    text << "\nparticle ladder: " << (ref.particle_decreasing ? "pass" : "FAIL");
    for (const auto& d : ref.particle_distances) text << "  " << d.distance;
    text << "\nfrozen integrals: " << (frozen.decreasing ? "pass" : "FAIL");
    for (double v : frozen.sup_difference) text << "  " << v;
    text << "\nmoment boundedness: " << (moments.pass ? "pass" : "FAIL") << "\n";
    write_text_file((dir / "convergence.txt").string(), text.str());
    std::cout << text.str();
    return pass ? kExitOk : kExitVerdict;
}

int run_report(const CommonArgs& args) {
    const fs::path dir(args.out_dir.empty() ? "out" : args.out_dir);
    if (!fs::exists(dir)) {
        std::cerr << "report: output directory not found: " << dir << "\n";
        return kExitUsage;
    }
    json summary;
    summary["tool_version"] = kToolVersion;
    std::ostringstream text;
    bool any_fail = false;
    bool any_found = false;

    for (const char* name : {"kernel_b.cert.json", "kernel_sigma.cert.json"}) {
        const fs::path p = dir / name;
        if (!fs::exists(p)) continue;
        any_found = true;
        const KernelCertificate cert = read_certificate(p.string());
        const bool ok = cert.certified();
        any_fail = any_fail || !ok;
        summary[name] = ok ? "certified" : "rejected";
        text << name << ": " << (ok ? "certified" : "rejected") << "\n";
    }
    for (const char* name : {"report.json", "convergence.json"}) {
        const fs::path p = dir / name;
        if (!fs::exists(p)) continue;
        any_found = true;
        std::ifstream in(p);
        json j;
        in >> j;
        const bool ok = j.value("all_pass", false);
        any_fail = any_fail || !ok;
        summary[name] = ok ? "pass" : "fail";
        text << name << ": " << (ok ? "pass" : "fail") << "\n";
    }
    if (fs::exists(dir / "ensemble.meta.json")) {
        any_found = true;
        summary["ensemble"] = "present";
        text << "ensemble: present\n";
    }
    if (!any_found) text << "no artifacts found\n";
    summary["all_pass"] = !any_fail;
    write_text_file((dir / "summary.json").string(), summary.dump(2) + "\n");
    write_text_file((dir / "summary.txt").string(), text.str());
    std::cout << text.str();
    return any_fail ? kExitVerdict : kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Particle solver and property checker for distribution-dependent "
                 "stochastic Volterra equations"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    app.require_subcommand(1);

    CommonArgs args;
    std::string ensemble_path;

    auto add_common = [&](CLI::App* cmd, bool needs_config) {
        if (needs_config)
            cmd->add_option("--config", args.config_path, "experiment config file")
                ->required();
        cmd->add_option("--out", args.out_dir, "output directory (overrides config)");
        cmd->add_option("--threads", args.threads, "worker threads (0 = auto)");
        cmd->add_option("--seed", args.seed_override, "seed override");
        cmd->add_flag("--force", args.force, "skip certificate checks");
        cmd->add_option("--format", args.format_override, "output format: csv or bin");
    };

    CLI::App* certify_cmd = app.add_subcommand("certify", "certify the kernel pair");
    add_common(certify_cmd, true);
    CLI::App* simulate_cmd = app.add_subcommand("simulate", "run the particle solver");
    add_common(simulate_cmd, true);
    CLI::App* diagnose_cmd = app.add_subcommand("diagnose", "verify ensemble properties");
    add_common(diagnose_cmd, true);
    diagnose_cmd->add_option("--ensemble", ensemble_path, "ensemble file (csv or bin)");
    CLI::App* convergence_cmd =
        app.add_subcommand("convergence", "mesh and particle refinement ladders");
    add_common(convergence_cmd, true);
    CLI::App* report_cmd = app.add_subcommand("report", "summarize prior outputs");
    report_cmd->add_option("--out", args.out_dir, "output directory to summarize");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (app.got_subcommand(certify_cmd)) return run_certify(args);
        if (app.got_subcommand(simulate_cmd)) return run_simulate(args);
        if (app.got_subcommand(diagnose_cmd)) return run_diagnose(args, ensemble_path);
        if (app.got_subcommand(convergence_cmd)) return run_convergence(args);
        if (app.got_subcommand(report_cmd)) return run_report(args);
    } catch (const NonFiniteState& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBlowup;
    } catch (const LadderTooShort& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
