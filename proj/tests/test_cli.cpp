// End-to-end checks of the command-line tool: exit codes, file shapes, and
// verdict propagation. Usage: test_cli <path-to-svesim> <path-to-configs-dir>

#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

std::string g_svesim;
std::string g_configs;
int g_failures = 0;

void expect(bool ok, const std::string& what) {
    std::cout << (ok ? "  ok: " : "  FAILED: ") << what << "\n";
    if (!ok) ++g_failures;
}

int run_cli(const std::string& args, std::string* output = nullptr) {
    const fs::path log = fs::temp_directory_path() / "sve_cli_test.log";
    const std::string cmd = g_svesim + " " + args + " > " + log.string() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (output) {
        std::ifstream in(log);
        std::ostringstream ss;
        ss << in.rdbuf();
        *output = ss.str();
    }
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& s) {
    std::size_t n = 0;
    for (char c : s)
        if (c == '\n') ++n;
    return n;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

} // namespace

int main(int argc, char** argv) {
    if (argc < 3) {
        std::cerr << "usage: test_cli <svesim-binary> <configs-dir>\n";
        return 2;
    }
    g_svesim = argv[1];
    g_configs = argv[2];

    const fs::path work = fs::temp_directory_path() / "sve_cli_suite";
    fs::remove_all(work);
    fs::create_directories(work);

    {
        std::cout << "certify: fractional config certifies and lands on gamma = 1/12\n";
        const fs::path out = work / "frac";
        const int rc = run_cli("certify --config " + g_configs +
                               "/scalar_interaction_fractional.json --out " + out.string());
        expect(rc == 0, "exit code 0");
        const std::string cert = slurp(out / "kernel_sigma.cert.json");
        expect(cert.find("\"verdict\": \"certified\"") != std::string::npos,
               "diffusion certificate verdict");
        expect(cert.find("0.0833333333") != std::string::npos, "gamma = 1/12 recorded");
        expect(cert.find("\"epsilon\": 1.0") != std::string::npos, "epsilon = 1 recorded");
        expect(slurp(out / "kernel_b.cert.json").find("certified") != std::string::npos,
               "drift certificate present");
    }

    {
        std::cout << "certify: strongly singular diffusion kernel is rejected (exit 2)\n";
        std::string cfg = slurp(g_configs + "/scalar_interaction_fractional.json");
        for (auto pos = cfg.find("\"alpha\": 0.25"); pos != std::string::npos;
             pos = cfg.find("\"alpha\": 0.25"))
            cfg.replace(pos, std::string("\"alpha\": 0.25").size(), "\"alpha\": 0.6");
        write_file(work / "frac06.json", cfg);
        const int rc = run_cli("certify --config " + (work / "frac06.json").string() +
                               " --out " + (work / "frac06").string());
        expect(rc == 2, "exit code 2 on rejection");
        const std::string cert = slurp(work / "frac06" / "kernel_sigma.cert.json");
        expect(cert.find("rejected") != std::string::npos, "rejection recorded");
        expect(cert.find("divergent") != std::string::npos, "divergence reason recorded");
    }

    {
        std::cout << "certify: constant kernels certify (exit 0)\n";
        const int rc = run_cli("certify --config " + g_configs + "/brownian.json --out " +
                               (work / "brownian").string());
        expect(rc == 0, "exit code 0");
    }

    {
        std::cout << "simulate: shape contract and certificate gating\n";
        const fs::path out = work / "brownian";
        const int rc =
            run_cli("simulate --config " + g_configs + "/brownian.json --out " + out.string());
        expect(rc == 0, "exit code 0 with certificates present");
        const std::string csv = slurp(out / "ensemble.csv");
        // 1000 particles x 51 times + header + times comment
        expect(count_lines(csv) == 1000 * 51 + 2, "1000*51 data rows");
        expect(csv.rfind("# t:", 0) == 0, "grid times header");
        const std::string meta = slurp(out / "ensemble.meta.json");
        expect(meta.find("certificate_hash") != std::string::npos, "certificate hash recorded");

        const int rc_nocert = run_cli("simulate --config " + g_configs +
                                      "/brownian.json --out " + (work / "nocert").string());
        expect(rc_nocert == 1, "exit 1 without certificates");
        const int rc_forced = run_cli("simulate --config " + g_configs +
                                      "/brownian.json --out " + (work / "nocert").string() +
                                      " --force");
        expect(rc_forced == 0, "exit 0 with --force");
    }

    {
        std::cout << "diagnose: Brownian ensemble passes every enabled verdict\n";
        const fs::path out = work / "brownian";
        const int rc =
            run_cli("diagnose --config " + g_configs + "/brownian.json --out " + out.string());
        expect(rc == 0, "exit code 0");
        const std::string report = slurp(out / "report.json");
        expect(report.find("\"all_pass\": true") != std::string::npos, "report all_pass");
        expect(fs::exists(out / "report.txt"), "text report written");
    }

    {
        std::cout << "diagnose: generator mismatch fails the martingale verdict (exit 2)\n";
        // Ensemble simulated with mean-field OU drift, diagnosed under the
        // pure-noise generator.
        std::string cfg = slurp(g_configs + "/mean_field_ou.json");
        const fs::path out = work / "mismatch";
        write_file(work / "ou_small.json", [&] {
            std::string c = cfg;
            c.replace(c.find("\"particles\": 10000"), std::string("\"particles\": 10000").size(),
                      "\"particles\": 4000");
            return c;
        }());
        int rc = run_cli("simulate --config " + (work / "ou_small.json").string() + " --out " +
                         out.string() + " --force");
        expect(rc == 0, "simulate OU ensemble");

        std::string bad = slurp(work / "ou_small.json");
        bad.replace(bad.find("\"name\": \"mean_field_ou\""),
                    std::string("\"name\": \"mean_field_ou\"").size(),
                    "\"name\": \"pure_noise\"");
        write_file(work / "mismatch.json", bad);
        rc = run_cli("diagnose --config " + (work / "mismatch.json").string() + " --out " +
                     out.string());
        expect(rc == 2, "exit code 2 on martingale failure");
        expect(slurp(out / "report.json").find("\"verdict\": \"fail\"") != std::string::npos,
               "failing verdict recorded");
    }

    {
        std::cout << "diagnose: empty toggles give an empty passing report\n";
        std::string cfg = slurp(g_configs + "/brownian.json");
        for (const char* toggle : {"\"moments\": true", "\"increments\": true",
                                   "\"martingale\": true"}) {
            const auto pos = cfg.find(toggle);
            if (pos != std::string::npos) {
                std::string off(toggle);
                off.replace(off.find("true"), 4, "false");
                cfg.replace(pos, std::string(toggle).size(), off);
            }
        }
        write_file(work / "empty.json", cfg);
        const int rc = run_cli("diagnose --config " + (work / "empty.json").string() +
                               " --out " + (work / "brownian").string());
        expect(rc == 0, "exit code 0");
    }

    {
        std::cout << "convergence: Brownian ladders pass; short ladder exits 1\n";
        const int rc = run_cli("convergence --config " + g_configs + "/brownian.json --out " +
                               (work / "brownian").string());
        expect(rc == 0, "exit code 0");
        expect(slurp(work / "brownian" / "convergence.json").find("\"all_pass\": true") !=
                   std::string::npos,
               "convergence report all_pass");

        std::string cfg = slurp(g_configs + "/brownian.json");
        cfg.replace(cfg.find("\"mesh_ladder\": [16, 32, 64]"),
                    std::string("\"mesh_ladder\": [16, 32, 64]").size(),
                    "\"mesh_ladder\": [16, 32]");
        write_file(work / "short.json", cfg);
        const int rc_short = run_cli("convergence --config " + (work / "short.json").string() +
                                     " --out " + (work / "short").string());
        expect(rc_short == 1, "exit code 1 on LadderTooShort");
    }

    {
        std::cout << "plot data emission\n";
        std::string cfg = slurp(g_configs + "/brownian.json");
        cfg.replace(cfg.find("\"plot_data\": false"), std::string("\"plot_data\": false").size(),
                    "\"plot_data\": true");
        write_file(work / "plots.json", cfg);
        const int rc = run_cli("diagnose --config " + (work / "plots.json").string() +
                               " --out " + (work / "brownian").string());
        expect(rc == 0, "diagnose with plot data");
        expect(fs::exists(work / "brownian" / "increments_loglog.dat"), ".dat file written");
        expect(fs::exists(work / "brownian" / "plots.gp"), "plot script written");
    }

    {
        std::cout << "report: aggregates artifacts\n";
        const int rc = run_cli("report --out " + (work / "brownian").string());
        expect(rc == 0, "exit code 0 when everything passed");
        const std::string summary = slurp(work / "brownian" / "summary.txt");
        expect(summary.find("kernel_sigma.cert.json: certified") != std::string::npos,
               "certificates summarized");
        expect(summary.find("report.json: pass") != std::string::npos, "report summarized");
        expect(summary.find("convergence.json: pass") != std::string::npos,
               "convergence summarized");

        const int rc_missing = run_cli("report --out " + (work / "does_not_exist").string());
        expect(rc_missing == 1, "exit 1 on missing directory");
    }

    {
        std::cout << "diagnose reads the binary format\n";
        std::string cfg = slurp(g_configs + "/brownian.json");
        cfg.replace(cfg.find("\"formats\": [\"csv\"]"),
                    std::string("\"formats\": [\"csv\"]").size(),
                    "\"formats\": [\"csv\", \"bin\"]");
        write_file(work / "both.json", cfg);
        const fs::path out = work / "binfmt";
        int rc = run_cli("simulate --config " + (work / "both.json").string() + " --out " +
                         out.string() + " --force");
        expect(rc == 0, "simulate with both formats");
        expect(fs::exists(out / "ensemble.bin") && fs::exists(out / "ensemble.desc.json"),
               "binary and descriptor written");
        rc = run_cli("diagnose --config " + (work / "both.json").string() + " --out " +
                     out.string() + " --ensemble " + (out / "ensemble.bin").string());
        expect(rc == 0, "diagnose on the binary ensemble");
    }

    {
        std::cout << "usage errors\n";
        const int rc = run_cli("simulate --config " + (work / "no_such.json").string());
        expect(rc == 1, "exit 1 on missing config");
        const int rc_badsub = run_cli("frobnicate");
        expect(rc_badsub == 1, "exit 1 on unknown subcommand");
        std::string version;
        const int rc_ver = run_cli("--version", &version);
        expect(rc_ver == 0 && version.find("svesim") != std::string::npos, "--version");
    }

    fs::remove_all(work);
    if (g_failures == 0) {
        std::cout << "all CLI checks passed\n";
        return 0;
    }
    std::cout << g_failures << " CLI checks FAILED\n";
    return 1;
}
