#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sve/config.hpp"
#include "sve/ensemble_io.hpp"
#include "sve/errors.hpp"

using namespace sve;
namespace fs = std::filesystem;

namespace {

const char* kExample = R"json({
  "model": {"name": "mean_field_ou", "theta": 1.0, "sigma0": 1.0, "dim": 1},
  "kernel_b": {"type": "constant", "c": 1.0},
  "kernel_sigma": {"type": "fractional", "scale": 1.0, "alpha": 0.25},
  "horizon": 1.0,
  "partition": {"uniform": 32},
  "particles": 64,
  "seed": 7,
  "mode": "integrated_kernel",
  "eta": 2.0,
  "initial": {"type": "gaussian", "mean": [0.0], "cov": [1.0]},
  "certify": {"epsilon_grid": [1.0], "gamma_grid": [0.5, 0.25]},
  "diagnostics": {"moments": true, "q_list": [2.0, 4.0]},
  "output": {"directory": "out", "formats": ["csv"], "plot_data": false}
})json";

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("sve_io_test_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("config round-trip: parse -> serialize -> parse is the identity") {
    const ExperimentConfig a = parse_config(kExample);
    const std::string text = serialize_config(a);
    const ExperimentConfig b = parse_config(text);
    CHECK(a == b);
    CHECK(serialize_config(a) == serialize_config(b));
}

TEST_CASE("config validation errors") {
    CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"horizon": -1.0})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"particles": 1})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"mode": "bogus"})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"output": {"formats": ["xml"]}})"), ConfigError);
}

TEST_CASE("config materialization") {
    const ExperimentConfig cfg = parse_config(kExample);
    const CoefficientModel model = make_model(cfg);
    CHECK(model.label() == "mean_field_ou");
    const KernelSpec ks = make_kernel(cfg.kernel_sigma, cfg.horizon);
    CHECK(ks.singular_at_diagonal());
    const Partition part = make_partition(cfg);
    CHECK(part.steps() == 32);
    const InitialCondition init = make_initial(cfg);
    CHECK(init.kind() == InitialCondition::Kind::gaussian);
}

TEST_CASE("ensemble CSV and binary round-trip") {
    TempDir tmp;
    const ExperimentConfig cfg = parse_config(kExample);
    const auto model = make_model(cfg);
    const auto kb = make_kernel(cfg.kernel_b, cfg.horizon);
    const auto ks = make_kernel(cfg.kernel_sigma, cfg.horizon);
    const ParticleEnsemble ens =
        simulate(model, kb, ks, make_partition(cfg), cfg.particles, cfg.seed,
                 sim_mode_from_string(cfg.mode), make_initial(cfg));

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
    const std::string mpath = (tmp.path / "ensemble.meta.json").string();
    write_metadata(meta, mpath);

    SUBCASE("csv") {
        const std::string path = (tmp.path / "ensemble.csv").string();
        write_ensemble_csv(ens, path);
        const ParticleEnsemble back = read_ensemble(path, mpath);
        CHECK(back.particles == ens.particles);
        CHECK(back.partition.times() == ens.partition.times());
        for (std::size_t n = 0; n < ens.particles; n += 7)
            for (std::size_t j = 0; j <= ens.partition.steps(); j += 5) {
                CHECK(back.x(n, j) == ens.x(n, j)); // shortest round-trip formatting
                CHECK(back.a(n, j) == ens.a(n, j));
                CHECK(back.mart(n, j) == ens.mart(n, j));
            }
    }
    SUBCASE("binary") {
        const std::string path = (tmp.path / "ensemble.bin").string();
        write_ensemble_binary(ens, path, (tmp.path / "ensemble.desc.json").string());
        const ParticleEnsemble back = read_ensemble(path, mpath);
        CHECK(back.state == ens.state);
        CHECK(back.drift_path == ens.drift_path);
        CHECK(back.mart_path == ens.mart_path);
    }
}

TEST_CASE("writers are byte-deterministic") {
    TempDir tmp;
    const ExperimentConfig cfg = parse_config(kExample);
    const auto model = make_model(cfg);
    const auto kb = make_kernel(cfg.kernel_b, cfg.horizon);
    const auto ks = make_kernel(cfg.kernel_sigma, cfg.horizon);
    const ParticleEnsemble ens =
        simulate(model, kb, ks, make_partition(cfg), cfg.particles, cfg.seed,
                 sim_mode_from_string(cfg.mode), make_initial(cfg));
    const std::string p1 = (tmp.path / "a.csv").string();
    const std::string p2 = (tmp.path / "b.csv").string();
    write_ensemble_csv(ens, p1);
    write_ensemble_csv(ens, p2);
    std::ifstream f1(p1), f2(p2);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    CHECK(s1.str().find("t,particle,component,X,A,M") != std::string::npos);
}

TEST_CASE("certificate JSON round-trip") {
    TempDir tmp;
    KernelCertificate cert;
    cert.role = KernelRole::diffusion;
    cert.verdict = CertVerdict::certified;
    cert.gamma = 1.0 / 12.0;
    cert.epsilon = 1.0;
    cert.L = 4.25;
    cert.eta = 2.0;
    cert.p_min = 60.0;
    cert.grid = {{0.0, 1.0}, {0.5, 0.75}};
    cert.worst_residual = -1e-3;
    cert.kernel_description = "fractional(scale=1,alpha=0.25) on [0,1]";
    const std::string path = (tmp.path / "cert.json").string();
    write_certificate(cert, path);
    const KernelCertificate back = read_certificate(path);
    CHECK(back.certified());
    CHECK(back.gamma == cert.gamma);
    CHECK(back.epsilon == cert.epsilon);
    CHECK(back.L == cert.L);
    CHECK(back.p_min == cert.p_min);
    CHECK(back.grid == cert.grid);
    CHECK(back.kernel_description == cert.kernel_description);
    const std::string js = certificate_to_json(cert);
    CHECK(js.find("grid_hash") != std::string::npos);
    CHECK(js.find("tool_version") != std::string::npos);
}

TEST_CASE("format_double survives round-trips") {
    for (double v : {0.0, 1.0, -1.0 / 3.0, 1e-17, 3.141592653589793, 1e300}) {
        const std::string s = format_double(v);
        CHECK(std::strtod(s.c_str(), nullptr) == v);
    }
}

TEST_CASE("two-dimensional ensembles round-trip through both formats") {
    TempDir tmp;
    ExperimentConfig cfg = parse_config(kExample);
    cfg.model.name = "pure_noise";
    cfg.model.dim = 2;
    cfg.kernel_sigma.type = "constant";
    cfg.particles = 16;
    cfg.uniform_steps = 8;
    const auto model = make_model(cfg);
    const auto kb = make_kernel(cfg.kernel_b, cfg.horizon);
    const auto ks = make_kernel(cfg.kernel_sigma, cfg.horizon);
    const ParticleEnsemble ens =
        simulate(model, kb, ks, make_partition(cfg), cfg.particles, cfg.seed,
                 sim_mode_from_string(cfg.mode), make_initial(cfg));
    REQUIRE(ens.dim_state == 2);

    EnsembleMetadata meta;
    meta.seed = ens.seed;
    meta.mode = to_string(ens.mode);
    meta.particles = ens.particles;
    meta.dim_state = ens.dim_state;
    meta.dim_noise = ens.dim_noise;
    meta.times = ens.partition.times();
    const std::string mpath = (tmp.path / "e.meta.json").string();
    write_metadata(meta, mpath);

    const std::string csv = (tmp.path / "e.csv").string();
    write_ensemble_csv(ens, csv);
    const ParticleEnsemble back = read_ensemble(csv, mpath);
    CHECK(back.dim_state == 2);
    CHECK(back.state == ens.state);

    const std::string bin = (tmp.path / "e.bin").string();
    write_ensemble_binary(ens, bin, (tmp.path / "e.desc.json").string());
    const ParticleEnsemble back2 = read_ensemble(bin, mpath);
    CHECK(back2.state == ens.state);
    CHECK(back2.mart_path == ens.mart_path);
}
