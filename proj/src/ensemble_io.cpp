#include "sve/ensemble_io.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "sve/errors.hpp"
#include "sve/numeric.hpp"
#include "sve/version.hpp"

namespace sve {

using nlohmann::json;

std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out << content;
    if (!out) throw Error("write failed: " + path);
}

void write_ensemble_csv(const ParticleEnsemble& ens, const std::string& path) {
    std::ostringstream os;
    os << "# t:";
    for (std::size_t j = 0; j < ens.partition.times().size(); ++j)
        os << (j ? "," : " ") << format_double(ens.partition.times()[j]);
    os << "\n";
    os << "t,particle,component,X,A,M\n";
    const std::size_t M = ens.partition.steps();
    for (std::size_t j = 0; j <= M; ++j) {
        const std::string t_str = format_double(ens.partition.times()[j]);
        for (std::size_t n = 0; n < ens.particles; ++n)
            for (std::size_t k = 0; k < ens.dim_state; ++k) {
                os << t_str << ',' << n << ',' << k << ',' << format_double(ens.x(n, j, k))
                   << ',' << format_double(ens.a(n, j, k)) << ','
                   << format_double(ens.mart(n, j, k)) << '\n';
            }
    }
    write_text_file(path, os.str());
}

void write_ensemble_binary(const ParticleEnsemble& ens, const std::string& path,
                           const std::string& descriptor_path) {
    const std::size_t M = ens.partition.steps();
    std::vector<double> block((M + 1) * ens.particles * ens.dim_state * 3);
    std::size_t pos = 0;
    for (std::size_t j = 0; j <= M; ++j)
        for (std::size_t n = 0; n < ens.particles; ++n)
            for (std::size_t k = 0; k < ens.dim_state; ++k) {
                block[pos++] = ens.x(n, j, k);
                block[pos++] = ens.a(n, j, k);
                block[pos++] = ens.mart(n, j, k);
            }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(double)));
    if (!out) throw Error("write failed: " + path);

    json desc;
    desc["dtype"] = "float64";
    desc["byte_order"] = "little";
    desc["order"] = "row-major";
    desc["shape"] = {M + 1, ens.particles, ens.dim_state, 3};
    desc["columns"] = {"X", "A", "M"};
    desc["times"] = ens.partition.times();
    write_text_file(descriptor_path, desc.dump(2) + "\n");
}

void write_metadata(const EnsembleMetadata& meta, const std::string& path) {
    json j;
    j["tool"] = kToolName;
    j["tool_version"] = meta.tool_version.empty() ? kToolVersion : meta.tool_version;
    j["seed"] = meta.seed;
    j["mode"] = meta.mode;
    j["model"] = meta.model_label;
    j["kernel_b"] = meta.kernel_b;
    j["kernel_sigma"] = meta.kernel_sigma;
    j["particles"] = meta.particles;
    j["dim_state"] = meta.dim_state;
    j["dim_noise"] = meta.dim_noise;
    j["times"] = meta.times;
    j["certificate_hash"] = meta.certificate_hash;
    if (!meta.config_echo.empty()) j["config"] = json::parse(meta.config_echo);
    write_text_file(path, j.dump(2) + "\n");
}

namespace {

EnsembleMetadata metadata_from_file(const std::string& meta_path) {
    std::ifstream in(meta_path);
    if (!in) throw Error("cannot open metadata sidecar: " + meta_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error("bad metadata sidecar " + meta_path + ": " + e.what());
    }
    EnsembleMetadata meta;
    meta.tool_version = j.value("tool_version", "");
    meta.seed = j.value("seed", std::uint64_t{0});
    meta.mode = j.value("mode", "integrated_kernel");
    meta.model_label = j.value("model", "");
    meta.kernel_b = j.value("kernel_b", "");
    meta.kernel_sigma = j.value("kernel_sigma", "");
    meta.particles = j.value("particles", std::size_t{0});
    meta.dim_state = j.value("dim_state", std::size_t{1});
    meta.dim_noise = j.value("dim_noise", std::size_t{1});
    meta.times = j.value("times", std::vector<double>{});
    meta.certificate_hash = j.value("certificate_hash", "");
    return meta;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(),
                                                  suffix) == 0;
}

} // namespace

ParticleEnsemble read_ensemble(const std::string& path, const std::string& meta_path) {
    const EnsembleMetadata meta = metadata_from_file(meta_path);
    if (meta.times.size() < 2) throw Error("metadata sidecar lacks the time grid");

    ParticleEnsemble ens;
    ens.partition = Partition(meta.times);
    ens.particles = meta.particles;
    ens.dim_state = meta.dim_state;
    ens.dim_noise = meta.dim_noise;
    ens.seed = meta.seed;
    ens.mode = sim_mode_from_string(meta.mode);
    ens.model_label = meta.model_label;
    ens.kernel_b_description = meta.kernel_b;
    ens.kernel_sigma_description = meta.kernel_sigma;

    const std::size_t M = ens.partition.steps();
    const std::size_t stride = M + 1;
    ens.state.assign(ens.particles * stride * ens.dim_state, 0.0);
    ens.drift_path.assign(ens.particles * stride * ens.dim_state, 0.0);
    ens.mart_path.assign(ens.particles * stride * ens.dim_state, 0.0);

    if (ends_with(path, ".bin")) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open ensemble file: " + path);
        std::vector<double> block(stride * ens.particles * ens.dim_state * 3);
        in.read(reinterpret_cast<char*>(block.data()),
                static_cast<std::streamsize>(block.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != block.size() * sizeof(double))
            throw Error("ensemble binary truncated: " + path);
        std::size_t pos = 0;
        for (std::size_t j = 0; j <= M; ++j)
            for (std::size_t n = 0; n < ens.particles; ++n)
                for (std::size_t k = 0; k < ens.dim_state; ++k) {
                    const std::size_t idx = (n * stride + j) * ens.dim_state + k;
                    ens.state[idx] = block[pos++];
                    ens.drift_path[idx] = block[pos++];
                    ens.mart_path[idx] = block[pos++];
                }
        return ens;
    }

    std::ifstream in(path);
    if (!in) throw Error("cannot open ensemble file: " + path);
    std::string line;
    std::size_t row = 0;
    std::size_t expected = (M + 1) * ens.particles * ens.dim_state;
    std::size_t time_index = 0, seen_in_block = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (line.rfind("t,particle", 0) == 0) continue;
        std::istringstream ls(line);
        std::string field;
        double vals[6];
        for (int f = 0; f < 6; ++f) {
            if (!std::getline(ls, field, ',')) throw Error("bad CSV row in " + path);
            vals[f] = std::strtod(field.c_str(), nullptr);
        }
        const auto n = static_cast<std::size_t>(vals[1]);
        const auto k = static_cast<std::size_t>(vals[2]);
        if (n >= ens.particles || k >= ens.dim_state)
            throw Error("CSV row out of range in " + path);
        const std::size_t idx = (n * stride + time_index) * ens.dim_state + k;
        ens.state[idx] = vals[3];
        ens.drift_path[idx] = vals[4];
        ens.mart_path[idx] = vals[5];
        ++row;
        if (++seen_in_block == ens.particles * ens.dim_state) {
            seen_in_block = 0;
            ++time_index;
        }
    }
    if (row != expected) throw Error("CSV row count mismatch in " + path);
    return ens;
}

std::string certificate_to_json(const KernelCertificate& cert) {
    json j;
    j["tool_version"] = kToolVersion;
    j["kernel"] = cert.kernel_description;
    j["role"] = cert.role == KernelRole::drift ? "drift" : "diffusion";
    j["verdict"] = cert.certified() ? "certified" : "rejected";
    j["gamma"] = cert.gamma;
    j["epsilon"] = cert.epsilon;
    j["L"] = cert.L;
    j["eta"] = cert.eta;
    j["p_min"] = cert.p_min;
    j["worst_residual"] = cert.worst_residual;
    j["blowup_threshold"] = cert.blowup_threshold;
    j["rejection_reason"] = cert.rejection_reason;
    json grid = json::array();
    for (const auto& [t, tp] : cert.grid) grid.push_back({t, tp});
    j["grid"] = grid;
    j["grid_hash"] = [&] {
        std::uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& [t, tp] : cert.grid) {
            h = fnv1a(&t, sizeof(t), h);
            h = fnv1a(&tp, sizeof(tp), h);
        }
        std::ostringstream os;
        os << std::hex << h;
        return os.str();
    }();
    return j.dump(2) + "\n";
}

KernelCertificate certificate_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(std::string("bad certificate JSON: ") + e.what());
    }
    KernelCertificate cert;
    cert.kernel_description = j.value("kernel", "");
    cert.role = j.value("role", "drift") == "drift" ? KernelRole::drift : KernelRole::diffusion;
    cert.verdict =
        j.value("verdict", "rejected") == "certified" ? CertVerdict::certified
                                                      : CertVerdict::rejected;
    cert.gamma = j.value("gamma", 0.0);
    cert.epsilon = j.value("epsilon", 0.0);
    cert.L = j.value("L", 0.0);
    cert.eta = j.value("eta", 1.0);
    cert.p_min = j.value("p_min", 0.0);
    cert.worst_residual = j.value("worst_residual", 0.0);
    cert.blowup_threshold = j.value("blowup_threshold", 10.0);
    cert.rejection_reason = j.value("rejection_reason", "");
    if (j.contains("grid"))
        for (const auto& pair : j.at("grid"))
            cert.grid.emplace_back(pair.at(0).get<double>(), pair.at(1).get<double>());
    return cert;
}

void write_certificate(const KernelCertificate& cert, const std::string& path) {
    write_text_file(path, certificate_to_json(cert));
}

KernelCertificate read_certificate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open certificate: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return certificate_from_json(ss.str());
}

std::string file_content_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

} // namespace sve
